//! Dataset manifests: one line per sample,
//! `path;role;label;species;subject;dataset` with an optional seventh
//! `x,y,w,h` crop field. `#` starts a comment, blank lines are skipped.

use std::fmt;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::CropBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    BonaFide,
    Attack,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::BonaFide => "bonafide",
            Label::Attack => "attack",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Train,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Train => "train",
            Role::Test => "test",
        })
    }
}

/// One manifest row.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub image_path: PathBuf,
    pub role: Role,
    pub label: Label,
    /// Attack species; `None` for bona fide rows.
    pub pai_species: Option<String>,
    pub subject_id: String,
    pub dataset_id: String,
    pub crop_box: Option<CropBox>,
}

impl SampleRecord {
    pub fn manifest_line(&self) -> String {
        let species = self.pai_species.as_deref().unwrap_or("");
        let mut line = format!(
            "{};{};{};{};{};{}",
            self.image_path.display(),
            self.role,
            self.label,
            species,
            self.subject_id,
            self.dataset_id
        );
        if let Some(c) = self.crop_box {
            line.push_str(&format!(";{},{},{},{}", c.x, c.y, c.w, c.h));
        }
        line
    }
}

fn parse_line(path: &Path, number: usize, line: &str) -> Result<SampleRecord> {
    let err = |message: String| Error::ManifestParse {
        path: path.to_path_buf(),
        line: number,
        message,
    };
    let fields: Vec<&str> = line.split(';').map(str::trim).collect();
    if fields.len() != 6 && fields.len() != 7 {
        return Err(err(format!(
            "expected 6 or 7 fields, found {}",
            fields.len()
        )));
    }
    if fields[0].is_empty() {
        return Err(err("empty image path".into()));
    }
    let role = match fields[1] {
        "train" => Role::Train,
        "test" => Role::Test,
        other => return Err(err(format!("unknown role `{other}`"))),
    };
    let label = match fields[2] {
        "bonafide" => Label::BonaFide,
        "attack" => Label::Attack,
        other => return Err(err(format!("unknown label `{other}`"))),
    };
    let species = fields[3];
    let pai_species = match label {
        Label::BonaFide if species.is_empty() => None,
        Label::BonaFide => {
            return Err(err(format!(
                "bona fide row must not carry a PAI species (found `{species}`)"
            )))
        }
        Label::Attack if species.is_empty() => {
            return Err(err("attack row is missing its PAI species".into()))
        }
        Label::Attack => Some(species.to_string()),
    };
    if fields[4].is_empty() {
        return Err(err("empty subject id".into()));
    }
    if fields[5].is_empty() {
        return Err(err("empty dataset id".into()));
    }
    let crop_box = if fields.len() == 7 {
        let parts: Vec<&str> = fields[6].split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(err("crop field must be x,y,w,h".into()));
        }
        let mut nums = [0u32; 4];
        for (slot, part) in nums.iter_mut().zip(&parts) {
            *slot = part
                .parse()
                .map_err(|_| err(format!("bad crop coordinate `{part}`")))?;
        }
        Some(CropBox {
            x: nums[0],
            y: nums[1],
            w: nums[2],
            h: nums[3],
        })
    } else {
        None
    };
    Ok(SampleRecord {
        image_path: PathBuf::from(fields[0]),
        role,
        label,
        pai_species,
        subject_id: fields[4].to_string(),
        dataset_id: fields[5].to_string(),
        crop_box,
    })
}

/// Read a manifest file. An empty file yields an empty list.
pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        records.push(parse_line(path, idx + 1, line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_manifest(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let mut f = std::fs::File::create(&path).unwrap();
        f.write_all(text.as_bytes()).unwrap();
        (dir, path)
    }

    #[test]
    fn parses_rows_comments_and_blank_lines() {
        let (_dir, path) = write_manifest(
            "# header comment\n\
             a.png;train;bonafide;;s01;dbA\n\
             \n\
             b.png;test;attack;print;s02;dbB # trailing comment\n\
             c.png;train;attack;replay;s03;dbA;4,8,32,40\n",
        );
        let records = load_manifest(&path).unwrap();
        assert_eq!(records.len(), 3);
        assert_eq!(records[0].label, Label::BonaFide);
        assert_eq!(records[0].pai_species, None);
        assert_eq!(records[1].role, Role::Test);
        assert_eq!(records[1].pai_species.as_deref(), Some("print"));
        let crop = records[2].crop_box.unwrap();
        assert_eq!((crop.x, crop.y, crop.w, crop.h), (4, 8, 32, 40));
    }

    #[test]
    fn empty_file_gives_empty_list() {
        let (_dir, path) = write_manifest("");
        assert!(load_manifest(&path).unwrap().is_empty());
    }

    #[test]
    fn unknown_label_is_rejected_with_line_number() {
        let (_dir, path) =
            write_manifest("a.png;train;bonafide;;s01;dbA\nb.png;train;genuine;;s01;dbA\n");
        match load_manifest(&path) {
            Err(Error::ManifestParse { line, message, .. }) => {
                assert_eq!(line, 2);
                assert!(message.contains("genuine"));
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn species_on_bona_fide_is_rejected() {
        let (_dir, path) = write_manifest("a.png;train;bonafide;print;s01;dbA\n");
        assert!(matches!(
            load_manifest(&path),
            Err(Error::ManifestParse { line: 1, .. })
        ));
    }

    #[test]
    fn attack_without_species_is_rejected() {
        let (_dir, path) = write_manifest("a.png;train;attack;;s01;dbA\n");
        assert!(load_manifest(&path).is_err());
    }

    #[test]
    fn manifest_line_round_trips() {
        let (_dir, path) = write_manifest("img/x.png;test;attack;moire;s09;dbB;1,2,3,4\n");
        let records = load_manifest(&path).unwrap();
        assert_eq!(
            records[0].manifest_line(),
            "img/x.png;test;attack;moire;s09;dbB;1,2,3,4"
        );
    }
}
