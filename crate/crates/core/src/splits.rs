//! Protocol split construction: known-attack, leave-one-out PAI and
//! cross-dataset evaluation.

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::manifest::{Label, Role, SampleRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    KnownAttack,
    LeaveOneOutPai,
    CrossDataset,
}

impl ProtocolKind {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "known" | "known_attack" | "known-attack" => Ok(ProtocolKind::KnownAttack),
            "loo" | "leave_one_out" | "leave-one-out" => Ok(ProtocolKind::LeaveOneOutPai),
            "cross" | "cross_dataset" | "cross-dataset" => Ok(ProtocolKind::CrossDataset),
            other => Err(Error::InvalidParameter(format!(
                "unknown protocol `{other}` (expected known, loo or cross)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::KnownAttack => "known_attack",
            ProtocolKind::LeaveOneOutPai => "leave_one_out_pai",
            ProtocolKind::CrossDataset => "cross_dataset",
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolSplit {
    pub name: String,
    pub kind: ProtocolKind,
    pub train: Vec<SampleRecord>,
    pub test: Vec<SampleRecord>,
}

impl ProtocolSplit {
    /// Subjects appearing on both sides of the split. Overlap is reported,
    /// not rejected: some public datasets reuse subjects across roles.
    pub fn subject_overlap_warnings(&self) -> Vec<String> {
        let train: BTreeSet<&str> = self.train.iter().map(|r| r.subject_id.as_str()).collect();
        let test: BTreeSet<&str> = self.test.iter().map(|r| r.subject_id.as_str()).collect();
        train
            .intersection(&test)
            .map(|s| {
                format!(
                    "split {}: subject {s} appears in both train and test",
                    self.name
                )
            })
            .collect()
    }
}

fn check_split(split: &ProtocolSplit) -> Result<()> {
    for (side, records) in [("train", &split.train), ("test", &split.test)] {
        let bona = records.iter().any(|r| r.label == Label::BonaFide);
        let attack = records.iter().any(|r| r.label == Label::Attack);
        if !bona || !attack {
            return Err(Error::Protocol(format!(
                "split {}: {side} set must contain both bona fide and attack samples",
                split.name
            )));
        }
    }
    let train_paths: BTreeSet<_> = split.train.iter().map(|r| &r.image_path).collect();
    if let Some(shared) = split
        .test
        .iter()
        .find(|r| train_paths.contains(&r.image_path))
    {
        return Err(Error::Protocol(format!(
            "split {}: image {} appears in both train and test",
            split.name,
            shared.image_path.display()
        )));
    }
    Ok(())
}

/// Build the evaluation splits for a protocol from manifest records.
pub fn build_splits(records: &[SampleRecord], kind: ProtocolKind) -> Result<Vec<ProtocolSplit>> {
    if records.is_empty() {
        return Err(Error::Protocol("manifest contains no records".into()));
    }
    let mut splits = Vec::new();
    match kind {
        ProtocolKind::KnownAttack => {
            splits.push(ProtocolSplit {
                name: "known_attack".into(),
                kind,
                train: records
                    .iter()
                    .filter(|r| r.role == Role::Train)
                    .cloned()
                    .collect(),
                test: records
                    .iter()
                    .filter(|r| r.role == Role::Test)
                    .cloned()
                    .collect(),
            });
        }
        ProtocolKind::LeaveOneOutPai => {
            let species: BTreeSet<&String> = records
                .iter()
                .filter_map(|r| r.pai_species.as_ref())
                .collect();
            if species.len() < 2 {
                return Err(Error::Protocol(format!(
                    "leave-one-out needs at least 2 PAI species, found {}",
                    species.len()
                )));
            }
            for held_out in species {
                let is_held_out = |r: &SampleRecord| {
                    r.label == Label::Attack && r.pai_species.as_ref() == Some(held_out)
                };
                let train: Vec<_> = records
                    .iter()
                    .filter(|r| r.role == Role::Train && !is_held_out(r))
                    .cloned()
                    .collect();
                let test: Vec<_> = records
                    .iter()
                    .filter(|r| {
                        (r.label == Label::BonaFide && r.role == Role::Test) || is_held_out(r)
                    })
                    .cloned()
                    .collect();
                splits.push(ProtocolSplit {
                    name: format!("loo_{held_out}"),
                    kind,
                    train,
                    test,
                });
            }
        }
        ProtocolKind::CrossDataset => {
            let datasets: BTreeSet<&String> = records.iter().map(|r| &r.dataset_id).collect();
            if datasets.len() < 2 {
                return Err(Error::Protocol(format!(
                    "cross-dataset needs at least 2 dataset ids, found {}",
                    datasets.len()
                )));
            }
            for train_db in &datasets {
                for test_db in &datasets {
                    if train_db == test_db {
                        continue;
                    }
                    splits.push(ProtocolSplit {
                        name: format!("cross_{train_db}_to_{test_db}"),
                        kind,
                        train: records
                            .iter()
                            .filter(|r| &&r.dataset_id == train_db && r.role == Role::Train)
                            .cloned()
                            .collect(),
                        test: records
                            .iter()
                            .filter(|r| &&r.dataset_id == test_db && r.role == Role::Test)
                            .cloned()
                            .collect(),
                    });
                }
            }
        }
    }
    for split in &splits {
        check_split(split)?;
    }
    Ok(splits)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    fn rec(
        path: &str,
        role: Role,
        label: Label,
        species: Option<&str>,
        subject: &str,
        dataset: &str,
    ) -> SampleRecord {
        SampleRecord {
            image_path: PathBuf::from(path),
            role,
            label,
            pai_species: species.map(String::from),
            subject_id: subject.into(),
            dataset_id: dataset.into(),
            crop_box: None,
        }
    }

    fn corpus(species: &[&str], datasets: &[&str]) -> Vec<SampleRecord> {
        let mut records = Vec::new();
        let mut i = 0;
        for db in datasets {
            for role in [Role::Train, Role::Test] {
                for s in 0..2 {
                    records.push(rec(
                        &format!("bf_{i}_{s}.png"),
                        role,
                        Label::BonaFide,
                        None,
                        &format!("{role}_subj{s}"),
                        db,
                    ));
                    for sp in species {
                        records.push(rec(
                            &format!("at_{i}_{s}_{sp}.png"),
                            role,
                            Label::Attack,
                            Some(sp),
                            &format!("{role}_subj{s}"),
                            db,
                        ));
                    }
                }
                i += 1;
            }
        }
        records
    }

    #[test]
    fn known_attack_respects_roles() {
        let records = corpus(&["print", "replay"], &["dbA"]);
        let splits = build_splits(&records, ProtocolKind::KnownAttack).unwrap();
        assert_eq!(splits.len(), 1);
        assert!(splits[0].train.iter().all(|r| r.role == Role::Train));
        assert!(splits[0].test.iter().all(|r| r.role == Role::Test));
    }

    #[test]
    fn leave_one_out_holds_each_species_out() {
        let records = corpus(&["moire", "print", "replay"], &["dbA"]);
        let splits = build_splits(&records, ProtocolKind::LeaveOneOutPai).unwrap();
        assert_eq!(splits.len(), 3);
        for split in &splits {
            let held = split.name.strip_prefix("loo_").unwrap();
            assert!(split
                .train
                .iter()
                .all(|r| r.pai_species.as_deref() != Some(held)));
            assert!(split
                .test
                .iter()
                .filter(|r| r.label == Label::Attack)
                .all(|r| r.pai_species.as_deref() == Some(held)));
            assert!(split.test.iter().any(|r| r.label == Label::BonaFide));
        }
    }

    #[test]
    fn thirteen_species_give_thirteen_splits() {
        let names: Vec<String> = (0..13).map(|i| format!("pai{i:02}")).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let records = corpus(&refs, &["db"]);
        let splits = build_splits(&records, ProtocolKind::LeaveOneOutPai).unwrap();
        assert_eq!(splits.len(), 13);
    }

    #[test]
    fn cross_dataset_builds_ordered_pairs_with_disjoint_ids() {
        let records = corpus(&["print"], &["dbA", "dbB"]);
        let splits = build_splits(&records, ProtocolKind::CrossDataset).unwrap();
        assert_eq!(splits.len(), 2);
        for split in &splits {
            let train_dbs: BTreeSet<_> = split.train.iter().map(|r| &r.dataset_id).collect();
            let test_dbs: BTreeSet<_> = split.test.iter().map(|r| &r.dataset_id).collect();
            assert!(train_dbs.is_disjoint(&test_dbs));
        }
    }

    #[test]
    fn single_species_loo_is_rejected() {
        let records = corpus(&["print"], &["dbA"]);
        assert!(matches!(
            build_splits(&records, ProtocolKind::LeaveOneOutPai),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn single_dataset_cross_is_rejected() {
        let records = corpus(&["print", "replay"], &["dbA"]);
        assert!(build_splits(&records, ProtocolKind::CrossDataset).is_err());
    }

    #[test]
    fn missing_class_is_rejected() {
        let records: Vec<_> = corpus(&["print"], &["dbA"])
            .into_iter()
            .filter(|r| !(r.role == Role::Test && r.label == Label::BonaFide))
            .collect();
        assert!(build_splits(&records, ProtocolKind::KnownAttack).is_err());
    }

    #[test]
    fn subject_overlap_is_a_warning_not_an_error() {
        let mut records = corpus(&["print"], &["dbA"]);
        for r in &mut records {
            r.subject_id = "shared".into();
        }
        let splits = build_splits(&records, ProtocolKind::KnownAttack).unwrap();
        assert!(!splits[0].subject_overlap_warnings().is_empty());
    }
}
