//! Experiment configuration: a flat `key = value` text format.
//!
//! Lines are `key = value`; `#` starts a comment (whole line or trailing);
//! blank lines are skipped. Unknown and duplicate keys are errors so that a
//! typo cannot silently fall back to a default.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bsif;
use crate::error::{Error, Result};
use crate::filterbank;
use crate::image::Colorspace;
use crate::splits::ProtocolKind;

pub const DEFAULT_L_LIST: [u32; 8] = [3, 5, 7, 9, 11, 13, 15, 17];
pub const DEFAULT_N_LIST: [u32; 8] = [5, 6, 7, 8, 9, 10, 11, 12];
pub const DEFAULT_K: usize = 1024;
pub const DEFAULT_D: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// Dataset manifest; required by the training and evaluation commands.
    pub manifest: Option<PathBuf>,
    /// Filter bank file; required by commands that run a single bank.
    pub bank: Option<PathBuf>,
    /// Filter sizes for sweeps.
    pub l_list: Vec<u32>,
    /// Filter counts for sweeps.
    pub n_list: Vec<u32>,
    pub stride: usize,
    pub radii: Vec<u32>,
    pub colorspace: Colorspace,
    /// Mixture components.
    pub k: usize,
    /// PCA output dimension.
    pub d: usize,
    pub fv_power_norm: bool,
    pub fv_l2_norm: bool,
    pub svm_c: f64,
    pub seed: u64,
    /// Descriptor subsample cap for PCA fitting; 0 disables the cap.
    pub pca_sample_cap: usize,
    /// Descriptor subsample cap for mixture fitting; 0 disables the cap.
    pub gmm_sample_cap: usize,
    pub protocol: ProtocolKind,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            manifest: None,
            bank: None,
            l_list: DEFAULT_L_LIST.to_vec(),
            n_list: DEFAULT_N_LIST.to_vec(),
            stride: bsif::DEFAULT_STRIDE,
            radii: bsif::DEFAULT_RADII.to_vec(),
            colorspace: Colorspace::Rgb,
            k: DEFAULT_K,
            d: DEFAULT_D,
            fv_power_norm: true,
            fv_l2_norm: true,
            svm_c: 1.0,
            seed: 0,
            pca_sample_cap: 1_000_000,
            gmm_sample_cap: 1_000_000,
            protocol: ProtocolKind::KnownAttack,
        }
    }
}

impl ExperimentConfig {
    pub fn manifest_path(&self) -> Result<&Path> {
        self.manifest.as_deref().ok_or_else(|| Error::Config {
            line: 0,
            message: "missing required key `manifest`".into(),
        })
    }

    pub fn bank_path(&self) -> Result<&Path> {
        self.bank.as_deref().ok_or_else(|| Error::Config {
            line: 0,
            message: "missing required key `bank`".into(),
        })
    }

    /// All (filter size, filter count) pairs of the sweep grid, size-major.
    /// Pairs where the count exceeds the patch dimensionality minus one are
    /// not learnable and are skipped.
    pub fn bank_grid(&self) -> Vec<(u32, u32)> {
        let mut grid = Vec::new();
        for &l in &self.l_list {
            for &n in &self.n_list {
                if (n as usize) <= (l as usize) * (l as usize) - 1 {
                    grid.push((l, n));
                }
            }
        }
        grid
    }

    /// Serialise with every key explicit; `parse` of the result round-trips.
    pub fn render(&self) -> String {
        let join = |xs: &[u32]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = String::new();
        if let Some(m) = &self.manifest {
            let _ = writeln!(out, "manifest = {}", m.display());
        }
        if let Some(b) = &self.bank {
            let _ = writeln!(out, "bank = {}", b.display());
        }
        let _ = writeln!(out, "l_list = {}", join(&self.l_list));
        let _ = writeln!(out, "n_list = {}", join(&self.n_list));
        let _ = writeln!(out, "stride = {}", self.stride);
        let _ = writeln!(out, "radii = {}", join(&self.radii));
        let _ = writeln!(out, "colorspace = {}", self.colorspace.name());
        let _ = writeln!(out, "k = {}", self.k);
        let _ = writeln!(out, "d = {}", self.d);
        let _ = writeln!(out, "fv_power_norm = {}", self.fv_power_norm);
        let _ = writeln!(out, "fv_l2_norm = {}", self.fv_l2_norm);
        let _ = writeln!(out, "svm_c = {}", self.svm_c);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "pca_sample_cap = {}", self.pca_sample_cap);
        let _ = writeln!(out, "gmm_sample_cap = {}", self.gmm_sample_cap);
        let _ = writeln!(out, "protocol = {}", self.protocol.name());
        out
    }
}

fn bad<TVal>(line: usize, message: impl Into<String>) -> Result<TVal> {
    Err(Error::Config {
        line,
        message: message.into(),
    })
}

fn parse_list(value: &str, line: usize, key: &str) -> Result<Vec<u32>> {
    let items: Result<Vec<u32>> = value
        .split(',')
        .map(|s| {
            s.trim().parse::<u32>().map_err(|_| Error::Config {
                line,
                message: format!("`{key}` expects comma-separated integers, got `{value}`"),
            })
        })
        .collect();
    let items = items?;
    if items.is_empty() {
        return bad(line, format!("`{key}` must not be empty"));
    }
    Ok(items)
}

fn parse_scalar<TVal: std::str::FromStr>(
    value: &str,
    line: usize,
    key: &str,
    kind: &str,
) -> Result<TVal> {
    value.trim().parse::<TVal>().map_err(|_| Error::Config {
        line,
        message: format!("`{key}` expects {kind}, got `{value}`"),
    })
}

fn parse_bool(value: &str, line: usize, key: &str) -> Result<bool> {
    match value.trim() {
        "true" => Ok(true),
        "false" => Ok(false),
        other => bad(
            line,
            format!("`{key}` expects true or false, got `{other}`"),
        ),
    }
}

/// Parse configuration text; every key is optional and falls back to the
/// default.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    let mut seen: BTreeSet<String> = BTreeSet::new();

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return bad(line, format!("expected `key = value`, got `{content}`"));
        };
        let key = key.trim();
        let value = value.trim();
        if value.is_empty() {
            return bad(line, format!("`{key}` has no value"));
        }
        if !seen.insert(key.to_string()) {
            return bad(line, format!("duplicate key `{key}`"));
        }
        match key {
            "manifest" => config.manifest = Some(PathBuf::from(value)),
            "bank" => config.bank = Some(PathBuf::from(value)),
            "l_list" => {
                let list = parse_list(value, line, key)?;
                for &l in &list {
                    if l % 2 == 0
                        || (l as usize) < filterbank::MIN_SIZE
                        || (l as usize) > filterbank::MAX_SIZE
                    {
                        return bad(
                            line,
                            format!(
                                "filter sizes must be odd and within {}..={}, got {l}",
                                filterbank::MIN_SIZE,
                                filterbank::MAX_SIZE
                            ),
                        );
                    }
                }
                config.l_list = list;
            }
            "n_list" => {
                let list = parse_list(value, line, key)?;
                for &n in &list {
                    if n == 0 || (n as usize) > filterbank::MAX_FILTERS {
                        return bad(
                            line,
                            format!(
                                "filter counts must be within 1..={}, got {n}",
                                filterbank::MAX_FILTERS
                            ),
                        );
                    }
                }
                config.n_list = list;
            }
            "stride" => {
                let v: usize = parse_scalar(value, line, key, "a positive integer")?;
                if v == 0 {
                    return bad(line, "`stride` must be positive");
                }
                config.stride = v;
            }
            "radii" => {
                let list = parse_list(value, line, key)?;
                if list.contains(&0) {
                    return bad(line, "`radii` must be positive");
                }
                config.radii = list;
            }
            "colorspace" => {
                config.colorspace = Colorspace::parse(value).map_err(|_| Error::Config {
                    line,
                    message: format!("unknown colorspace `{value}` (rgb, hsv, ycbcr)"),
                })?;
            }
            "k" => {
                let v: usize = parse_scalar(value, line, key, "a positive integer")?;
                if v == 0 {
                    return bad(line, "`k` must be positive");
                }
                config.k = v;
            }
            "d" => {
                let v: usize = parse_scalar(value, line, key, "a positive integer")?;
                if v == 0 {
                    return bad(line, "`d` must be positive");
                }
                config.d = v;
            }
            "fv_power_norm" => config.fv_power_norm = parse_bool(value, line, key)?,
            "fv_l2_norm" => config.fv_l2_norm = parse_bool(value, line, key)?,
            "svm_c" => {
                let v: f64 = parse_scalar(value, line, key, "a positive number")?;
                if !(v > 0.0) || !v.is_finite() {
                    return bad(line, "`svm_c` must be positive and finite");
                }
                config.svm_c = v;
            }
            "seed" => config.seed = parse_scalar(value, line, key, "an unsigned integer")?,
            "pca_sample_cap" => {
                config.pca_sample_cap = parse_scalar(value, line, key, "an unsigned integer")?
            }
            "gmm_sample_cap" => {
                config.gmm_sample_cap = parse_scalar(value, line, key, "an unsigned integer")?
            }
            "protocol" => {
                config.protocol = ProtocolKind::parse(value).map_err(|_| Error::Config {
                    line,
                    message: format!("unknown protocol `{value}` (known, loo, cross)"),
                })?;
            }
            other => {
                return bad(line, format!("unknown key `{other}`"));
            }
        }
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_the_defaults() {
        let config = parse_config("").unwrap();
        assert_eq!(config, ExperimentConfig::default());
        assert_eq!(config.stride, 3);
        assert_eq!(config.radii, vec![4, 6, 8, 10]);
        assert_eq!(config.k, 1024);
        assert_eq!(config.d, 64);
        assert!(config.fv_power_norm && config.fv_l2_norm);
    }

    #[test]
    fn full_file_with_comments_parses() {
        let text = "\
# experiment setup
manifest = data/manifest.txt
bank = banks/b8x7.bsif   # trailing comment
l_list = 7
n_list = 8
stride = 2
radii = 4,8

colorspace = ycbcr
k = 64
d = 32
fv_power_norm = false
fv_l2_norm = true
svm_c = 0.5
seed = 9
pca_sample_cap = 1000
gmm_sample_cap = 2000
protocol = loo
";
        let config = parse_config(text).unwrap();
        assert_eq!(
            config.manifest.as_deref(),
            Some(Path::new("data/manifest.txt"))
        );
        assert_eq!(config.bank.as_deref(), Some(Path::new("banks/b8x7.bsif")));
        assert_eq!(config.l_list, vec![7]);
        assert_eq!(config.n_list, vec![8]);
        assert_eq!(config.stride, 2);
        assert_eq!(config.radii, vec![4, 8]);
        assert_eq!(config.colorspace, Colorspace::YCbCr);
        assert_eq!((config.k, config.d), (64, 32));
        assert!(!config.fv_power_norm);
        assert!(config.fv_l2_norm);
        assert_eq!(config.svm_c, 0.5);
        assert_eq!(config.seed, 9);
        assert_eq!(config.pca_sample_cap, 1000);
        assert_eq!(config.gmm_sample_cap, 2000);
        assert_eq!(config.protocol, ProtocolKind::LeaveOneOutPai);
    }

    #[test]
    fn unknown_keys_and_bad_values_carry_line_numbers() {
        let err = parse_config("stride = 3\nwat = 1\n").unwrap_err();
        match err {
            Error::Config { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("wat"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_config("stride = fast"),
            Err(Error::Config { line: 1, .. })
        ));
        assert!(parse_config("k = 0").is_err());
        assert!(parse_config("svm_c = -1").is_err());
        assert!(parse_config("l_list = 4").is_err());
        assert!(parse_config("n_list = 13").is_err());
        assert!(parse_config("radii = 0,4").is_err());
        assert!(parse_config("fv_l2_norm = yes").is_err());
        assert!(parse_config("colorspace = lab").is_err());
        assert!(parse_config("protocol = all").is_err());
        assert!(parse_config("stride").is_err());
        assert!(parse_config("stride =").is_err());
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let err = parse_config("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(err, Error::Config { line: 2, .. }));
    }

    #[test]
    fn render_round_trips() {
        let mut config = ExperimentConfig::default();
        config.manifest = Some(PathBuf::from("m.txt"));
        config.bank = Some(PathBuf::from("b.bsif"));
        config.k = 16;
        config.svm_c = 2.5;
        config.protocol = ProtocolKind::CrossDataset;
        config.colorspace = Colorspace::Hsv;
        config.fv_power_norm = false;
        let parsed = parse_config(&config.render()).unwrap();
        assert_eq!(parsed, config);

        let defaults = ExperimentConfig::default();
        assert_eq!(parse_config(&defaults.render()).unwrap(), defaults);
    }

    #[test]
    fn sweep_grid_drops_unlearnable_pairs() {
        let config = ExperimentConfig::default();
        let grid = config.bank_grid();
        assert_eq!(grid.len(), 60);
        assert!(!grid.contains(&(3, 9)));
        assert!(!grid.contains(&(3, 12)));
        assert!(grid.contains(&(3, 8)));
        assert!(grid.contains(&(17, 12)));
        // Size-major ordering.
        assert_eq!(grid[0], (3, 5));
        assert_eq!(grid[4], (5, 5));

        let single = parse_config("l_list = 3\nn_list = 9,10\n").unwrap();
        assert!(single.bank_grid().is_empty());
    }

    #[test]
    fn missing_required_paths_are_reported() {
        let config = ExperimentConfig::default();
        assert!(config.manifest_path().is_err());
        assert!(config.bank_path().is_err());
    }

    #[test]
    fn load_reads_from_disk() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.cfg");
        std::fs::write(&path, "seed = 7\n").unwrap();
        assert_eq!(load_config(&path).unwrap().seed, 7);
        assert!(load_config(&dir.path().join("missing.cfg")).is_err());
    }
}
