//! Trained model persistence.
//!
//! A bundle file carries everything needed to score new images: the filter
//! bank, the PCA projection, the Gaussian mixture, the linear classifier, and
//! a snapshot of the experiment configuration.
//!
//! Layout: 6-byte magic `FVPAD1`, u32 LE format version, u32 LE section
//! count, then sections (4-byte tag, u64 LE payload length, payload), and a
//! trailing CRC-32 (IEEE) over all preceding bytes.

use std::path::Path;

use crate::bsif::DESCRIPTOR_DIM;
use crate::config::{parse_config, ExperimentConfig};
use crate::error::{Error, Result};
use crate::filterbank::{bank_from_bytes, bank_to_bytes, FilterBank};
use crate::gmm::GmmModel;
use crate::pca::PcaModel;
use crate::svm::LinearModel;

pub const BUNDLE_MAGIC: &[u8; 6] = b"FVPAD1";
pub const BUNDLE_VERSION: u32 = 1;

const TAG_CONFIG: &[u8; 4] = b"CONF";
const TAG_BANK: &[u8; 4] = b"BANK";
const TAG_PCA: &[u8; 4] = b"PCA ";
const TAG_GMM: &[u8; 4] = b"GMM ";
const TAG_SVM: &[u8; 4] = b"SVM ";

/// A complete trained scoring pipeline.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub bank: FilterBank<f64>,
    pub pca: PcaModel<f64>,
    pub gmm: GmmModel<f64>,
    pub svm: LinearModel<f64>,
    pub config: ExperimentConfig,
}

impl ModelBundle {
    /// Validates that the stages chain: descriptors are 384-dimensional, the
    /// mixture lives in the PCA output space, and the classifier weight has
    /// one entry per Fisher vector coordinate (2 * dim * k).
    pub fn new(
        bank: FilterBank<f64>,
        pca: PcaModel<f64>,
        gmm: GmmModel<f64>,
        svm: LinearModel<f64>,
        config: ExperimentConfig,
    ) -> Result<Self> {
        if pca.in_dim() != DESCRIPTOR_DIM {
            return Err(Error::DimensionMismatch {
                context: "bundle pca input".into(),
                expected: DESCRIPTOR_DIM,
                found: pca.in_dim(),
            });
        }
        if gmm.dim() != pca.out_dim() {
            return Err(Error::DimensionMismatch {
                context: "bundle mixture dimension".into(),
                expected: pca.out_dim(),
                found: gmm.dim(),
            });
        }
        let fv_len = 2 * gmm.dim() * gmm.k();
        if svm.w.len() != fv_len {
            return Err(Error::DimensionMismatch {
                context: "bundle classifier weight".into(),
                expected: fv_len,
                found: svm.w.len(),
            });
        }
        Ok(ModelBundle {
            bank,
            pca,
            gmm,
            svm,
            config,
        })
    }
}

pub(crate) fn crc32_ieee(bytes: &[u8]) -> u32 {
    let mut crc = 0xFFFF_FFFFu32;
    for &b in bytes {
        crc ^= b as u32;
        for _ in 0..8 {
            let mask = (crc & 1).wrapping_neg();
            crc = (crc >> 1) ^ (0xEDB8_8320 & mask);
        }
    }
    !crc
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn encode_pca(pca: &PcaModel<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(pca.in_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&(pca.out_dim() as u32).to_le_bytes());
    buf.extend_from_slice(&pca.retained_variance_fraction().to_le_bytes());
    push_f64s(&mut buf, pca.mean());
    push_f64s(&mut buf, pca.basis());
    push_f64s(&mut buf, pca.eigenvalues());
    buf
}

fn encode_gmm(gmm: &GmmModel<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(gmm.k() as u32).to_le_bytes());
    buf.extend_from_slice(&(gmm.dim() as u32).to_le_bytes());
    buf.extend_from_slice(&gmm.seed.to_le_bytes());
    buf.extend_from_slice(&(gmm.loglik_trace.len() as u32).to_le_bytes());
    push_f64s(&mut buf, gmm.weights());
    push_f64s(&mut buf, gmm.means());
    push_f64s(&mut buf, gmm.variances());
    push_f64s(&mut buf, &gmm.loglik_trace);
    buf
}

fn encode_svm(svm: &LinearModel<f64>) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&(svm.w.len() as u32).to_le_bytes());
    buf.extend_from_slice(&svm.b.to_le_bytes());
    buf.extend_from_slice(&svm.c.to_le_bytes());
    buf.extend_from_slice(&(svm.iterations as u64).to_le_bytes());
    buf.extend_from_slice(&svm.objective.to_le_bytes());
    push_f64s(&mut buf, &svm.w);
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
    what: &'static str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Bundle {
                path: self.path.to_path_buf(),
                message: format!("{} section truncated", self.what),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    fn done(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Bundle {
                path: self.path.to_path_buf(),
                message: format!("{} section has trailing data", self.what),
            });
        }
        Ok(())
    }
}

fn decode_pca(bytes: &[u8], path: &Path) -> Result<PcaModel<f64>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
        what: "pca",
    };
    let in_dim = r.u32()? as usize;
    let out_dim = r.u32()? as usize;
    let retained = r.f64()?;
    let mean = r.f64s(in_dim)?;
    let basis = r.f64s(out_dim * in_dim)?;
    let eigenvalues = r.f64s(out_dim)?;
    r.done()?;
    PcaModel::from_parts(mean, basis, eigenvalues, retained)
}

fn decode_gmm(bytes: &[u8], path: &Path) -> Result<GmmModel<f64>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
        what: "gmm",
    };
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let seed = r.u64()?;
    let trace_len = r.u32()? as usize;
    let weights = r.f64s(k)?;
    let means = r.f64s(k * dim)?;
    let variances = r.f64s(k * dim)?;
    let trace = r.f64s(trace_len)?;
    r.done()?;
    GmmModel::from_parts(weights, means, variances, dim, seed, trace)
}

fn decode_svm(bytes: &[u8], path: &Path) -> Result<LinearModel<f64>> {
    let mut r = Reader {
        bytes,
        pos: 0,
        path,
        what: "svm",
    };
    let dim = r.u32()? as usize;
    let b = r.f64()?;
    let c = r.f64()?;
    let iterations = r.u64()? as usize;
    let objective = r.f64()?;
    let w = r.f64s(dim)?;
    r.done()?;
    Ok(LinearModel {
        w,
        b,
        c,
        iterations,
        objective,
    })
}

pub fn save_bundle(bundle: &ModelBundle, path: &Path) -> Result<()> {
    let sections: [(&[u8; 4], Vec<u8>); 5] = [
        (TAG_CONFIG, bundle.config.render().into_bytes()),
        (TAG_BANK, bank_to_bytes(&bundle.bank)),
        (TAG_PCA, encode_pca(&bundle.pca)),
        (TAG_GMM, encode_gmm(&bundle.gmm)),
        (TAG_SVM, encode_svm(&bundle.svm)),
    ];
    let mut buf = Vec::new();
    buf.extend_from_slice(BUNDLE_MAGIC);
    buf.extend_from_slice(&BUNDLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for (tag, payload) in &sections {
        buf.extend_from_slice(*tag);
        buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
        buf.extend_from_slice(payload);
    }
    let crc = crc32_ieee(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bundle_err = |message: String| Error::Bundle {
        path: path.to_path_buf(),
        message,
    };
    if bytes.len() < BUNDLE_MAGIC.len() + 4 + 4 + 4 {
        return Err(bundle_err("file too short for a bundle header".into()));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    let computed = crc32_ieee(body);
    if stored != computed {
        return Err(bundle_err(format!(
            "checksum mismatch: stored {stored:#010x}, computed {computed:#010x}"
        )));
    }
    if &body[0..6] != BUNDLE_MAGIC {
        return Err(bundle_err("bad magic, expected FVPAD1".into()));
    }
    let version = u32::from_le_bytes(body[6..10].try_into().unwrap());
    if version != BUNDLE_VERSION {
        return Err(bundle_err(format!(
            "unsupported bundle version {version}, expected {BUNDLE_VERSION}"
        )));
    }
    let section_count = u32::from_le_bytes(body[10..14].try_into().unwrap()) as usize;

    let mut config: Option<ExperimentConfig> = None;
    let mut bank: Option<FilterBank<f64>> = None;
    let mut pca: Option<PcaModel<f64>> = None;
    let mut gmm: Option<GmmModel<f64>> = None;
    let mut svm: Option<LinearModel<f64>> = None;

    let mut pos = 14;
    for _ in 0..section_count {
        if pos + 12 > body.len() {
            return Err(bundle_err("section header truncated".into()));
        }
        let tag: [u8; 4] = body[pos..pos + 4].try_into().unwrap();
        let len = u64::from_le_bytes(body[pos + 4..pos + 12].try_into().unwrap()) as usize;
        pos += 12;
        if pos + len > body.len() {
            return Err(bundle_err(format!(
                "section {} payload truncated",
                String::from_utf8_lossy(&tag)
            )));
        }
        let payload = &body[pos..pos + len];
        pos += len;

        let duplicate = |name: &str| bundle_err(format!("duplicate section {name}"));
        match &tag {
            TAG_CONFIG => {
                if config.is_some() {
                    return Err(duplicate("CONF"));
                }
                let text = std::str::from_utf8(payload)
                    .map_err(|_| bundle_err("config section is not UTF-8".into()))?;
                config = Some(parse_config(text)?);
            }
            TAG_BANK => {
                if bank.is_some() {
                    return Err(duplicate("BANK"));
                }
                bank = Some(bank_from_bytes(payload, path)?);
            }
            TAG_PCA => {
                if pca.is_some() {
                    return Err(duplicate("PCA"));
                }
                pca = Some(decode_pca(payload, path)?);
            }
            TAG_GMM => {
                if gmm.is_some() {
                    return Err(duplicate("GMM"));
                }
                gmm = Some(decode_gmm(payload, path)?);
            }
            TAG_SVM => {
                if svm.is_some() {
                    return Err(duplicate("SVM"));
                }
                svm = Some(decode_svm(payload, path)?);
            }
            other => {
                return Err(bundle_err(format!(
                    "unknown section tag {:?}",
                    String::from_utf8_lossy(other)
                )));
            }
        }
    }
    if pos != body.len() {
        return Err(bundle_err("trailing data after the last section".into()));
    }

    let missing = |name: &str| bundle_err(format!("missing section {name}"));
    ModelBundle::new(
        bank.ok_or_else(|| missing("BANK"))?,
        pca.ok_or_else(|| missing("PCA"))?,
        gmm.ok_or_else(|| missing("GMM"))?,
        svm.ok_or_else(|| missing("SVM"))?,
        config.ok_or_else(|| missing("CONF"))?,
    )
}
