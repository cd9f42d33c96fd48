//! Deterministic synthetic face-PAD dataset generator.
//!
//! Produces two small pseudo-datasets of shaded "face" images on gradient
//! backgrounds. Bona fide frames carry only mild sensor noise; the three
//! attack species add the texture artefacts real capture pipelines leave
//! behind: `print` (blur plus a halftone dot lattice), `replay` (blur plus
//! horizontal specular banding and a blue cast), and `moire` (a
//! near-Nyquist sinusoidal interference pattern).
//!
//! Everything derives from one seed: the same seed writes byte-identical
//! images and manifest rows regardless of the output directory.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::image::{Colorspace, FaceImage};
use crate::manifest::{Label, Role, SampleRecord};

/// Side length of generated dataset images.
pub const SYNTH_IMAGE_SIZE: u32 = 80;
pub const SPECIES: [&str; 3] = ["print", "replay", "moire"];
pub const DATASETS: [&str; 2] = ["synth_a", "synth_b"];

/// Per-pseudo-dataset rendering style.
struct Style {
    skin: [f64; 3],
    bg_top: [f64; 3],
    bg_bottom: [f64; 3],
    noise: f64,
    halftone_period: f64,
    band_period: f64,
    /// Interference frequency in cycles per pixel.
    moire_freq: f64,
}

const STYLES: [Style; 2] = [
    Style {
        skin: [0.78, 0.62, 0.52],
        bg_top: [0.25, 0.30, 0.38],
        bg_bottom: [0.55, 0.58, 0.62],
        noise: 0.008,
        halftone_period: 4.0,
        band_period: 9.0,
        moire_freq: 0.42,
    },
    Style {
        skin: [0.68, 0.50, 0.42],
        bg_top: [0.42, 0.36, 0.30],
        bg_bottom: [0.70, 0.66, 0.58],
        noise: 0.015,
        halftone_period: 5.0,
        band_period: 7.0,
        moire_freq: 0.38,
    },
];

struct Raster {
    width: usize,
    height: usize,
    planes: [Vec<f64>; 3],
}

impl Raster {
    fn new(width: usize, height: usize) -> Self {
        Raster {
            width,
            height,
            planes: [
                vec![0.0; width * height],
                vec![0.0; width * height],
                vec![0.0; width * height],
            ],
        }
    }

    fn clamp(&mut self) {
        for plane in &mut self.planes {
            for v in plane {
                *v = v.clamp(0.0, 1.0);
            }
        }
    }
}

fn smoothstep(edge0: f64, edge1: f64, x: f64) -> f64 {
    let t = ((x - edge0) / (edge1 - edge0)).clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// A shaded ellipse head with eye and mouth blobs over a two-way gradient.
fn render_face(style: &Style, width: usize, height: usize, rng: &mut ChaCha8Rng) -> Raster {
    let mut img = Raster::new(width, height);
    let w = width as f64;
    let h = height as f64;
    let cx = w * (0.5 + rng.gen_range(-0.04..0.04));
    let cy = h * (0.5 + rng.gen_range(-0.04..0.04));
    let rx = w * (0.32 + rng.gen_range(-0.02..0.02));
    let ry = h * (0.42 + rng.gen_range(-0.02..0.02));
    let light = rng.gen_range(0.0..(2.0 * PI));
    let (lx, ly) = (light.cos() * 0.35, light.sin() * 0.35);
    let eye_dx = rx * 0.45;
    let eye_dy = ry * 0.28;
    let eye_r = rx * 0.13;
    let mouth_dy = ry * 0.42;

    for y in 0..height {
        for x in 0..width {
            let fx = x as f64;
            let fy = y as f64;
            let t = fy / h;
            let tint = 0.03 * fx / w;
            let mut col = [0.0f64; 3];
            for c in 0..3 {
                col[c] = style.bg_top[c] + (style.bg_bottom[c] - style.bg_top[c]) * t + tint;
            }

            let u = (fx - cx) / rx;
            let v = (fy - cy) / ry;
            let r2 = u * u + v * v;
            if r2 < 1.0 {
                let z = (1.0 - r2).sqrt();
                let shade = (0.62 + 0.38 * z + lx * u + ly * v).clamp(0.2, 1.1);
                let mut face = [0.0f64; 3];
                for c in 0..3 {
                    face[c] = style.skin[c] * shade;
                }
                // Eyes and mouth darken local patches.
                for sign in [-1.0, 1.0] {
                    let du = fx - (cx + sign * eye_dx);
                    let dv = fy - (cy - eye_dy);
                    let d = (du * du + dv * dv).sqrt();
                    let dark = 1.0 - 0.55 * smoothstep(eye_r, eye_r * 0.3, d);
                    for f in &mut face {
                        *f *= dark;
                    }
                }
                let mu = (fx - cx) / (rx * 0.45);
                let mv = (fy - (cy + mouth_dy)) / (ry * 0.09);
                let md = mu * mu + mv * mv;
                let dark = 1.0 - 0.35 * smoothstep(1.0, 0.3, md);
                for f in &mut face {
                    *f *= dark;
                }

                let mix = smoothstep(1.0, 0.90, r2);
                for c in 0..3 {
                    col[c] = col[c] * (1.0 - mix) + face[c] * mix;
                }
            }

            let idx = y * width + x;
            for c in 0..3 {
                let n: f64 = StandardNormal.sample(rng);
                img.planes[c][idx] = col[c] + n * style.noise;
            }
        }
    }
    img.clamp();
    img
}

/// 3x3 box blur with clamped borders.
fn box_blur(img: &mut Raster) {
    let (w, h) = (img.width, img.height);
    for plane in &mut img.planes {
        let src = plane.clone();
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let sy = (y as i64 + dy).clamp(0, h as i64 - 1) as usize;
                        let sx = (x as i64 + dx).clamp(0, w as i64 - 1) as usize;
                        acc += src[sy * w + sx];
                    }
                }
                plane[y * w + x] = acc / 9.0;
            }
        }
    }
}

fn apply_print(img: &mut Raster, style: &Style, rng: &mut ChaCha8Rng) {
    box_blur(img);
    box_blur(img);
    let period = style.halftone_period * rng.gen_range(0.95..1.05);
    let phase_x = rng.gen_range(0.0..period);
    let phase_y = rng.gen_range(0.0..period);
    let (w, h) = (img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let gx = (2.0 * PI * (x as f64 + phase_x) / period).cos();
            let gy = (2.0 * PI * (y as f64 + phase_y) / period).cos();
            let dot = 0.5 + 0.5 * gx * gy;
            let factor = 1.0 - 0.22 * dot * dot;
            let idx = y * w + x;
            let luma = 0.299 * img.planes[0][idx]
                + 0.587 * img.planes[1][idx]
                + 0.114 * img.planes[2][idx];
            for plane in &mut img.planes {
                // Slight desaturation, then the dot lattice.
                plane[idx] = (plane[idx] * 0.88 + luma * 0.12) * factor;
            }
        }
    }
    img.clamp();
}

fn apply_replay(img: &mut Raster, style: &Style, rng: &mut ChaCha8Rng) {
    box_blur(img);
    let period = style.band_period * rng.gen_range(0.9..1.1);
    let phase = rng.gen_range(0.0..(2.0 * PI));
    let (w, h) = (img.width, img.height);
    for y in 0..h {
        let band = 0.06 * (2.0 * PI * y as f64 / period + phase).sin();
        for x in 0..w {
            let idx = y * w + x;
            for plane in &mut img.planes {
                plane[idx] += band + 0.015;
            }
            // Screen glow leans blue.
            img.planes[2][idx] += 0.02;
        }
    }
    img.clamp();
}

fn apply_moire(img: &mut Raster, style: &Style, rng: &mut ChaCha8Rng) {
    let theta = rng.gen_range(0.0..PI);
    let freq = style.moire_freq * rng.gen_range(0.95..1.05);
    let phase = rng.gen_range(0.0..(2.0 * PI));
    let (ct, st) = (theta.cos(), theta.sin());
    let (w, h) = (img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let arg = 2.0 * PI * freq * (x as f64 * ct + y as f64 * st) + phase;
            let ripple = 0.09 * arg.sin();
            let idx = y * w + x;
            for plane in &mut img.planes {
                plane[idx] += ripple;
            }
        }
    }
    img.clamp();
}

fn write_png(img: &Raster, path: &Path) -> Result<()> {
    let mut rgb = image::RgbImage::new(img.width as u32, img.height as u32);
    for y in 0..img.height {
        for x in 0..img.width {
            let idx = y * img.width + x;
            let px = [
                (img.planes[0][idx] * 255.0).round() as u8,
                (img.planes[1][idx] * 255.0).round() as u8,
                (img.planes[2][idx] * 255.0).round() as u8,
            ];
            rgb.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    rgb.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::ImageDecode {
            path: path.to_path_buf(),
            message: format!("failed to write png: {e}"),
        })
}

/// Render one bona fide style face at an arbitrary size, e.g. for timing
/// harnesses. Deterministic in `seed`.
pub fn synthetic_face(seed: u64, width: u32, height: u32) -> Result<FaceImage<f64>> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter("face size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let img = render_face(&STYLES[0], width as usize, height as usize, &mut rng);
    FaceImage::new(width as usize, height as usize, Colorspace::Rgb, img.planes)
}

/// Generate the dataset under `out_dir` and return the manifest path.
///
/// Per role (train/test) the manifest carries `n_per_class` bona fide rows
/// and `n_per_class` rows for each of the three species, alternating between
/// the two pseudo-datasets. Train and test subject pools are disjoint.
pub fn generate_synthetic_dataset(
    seed: u64,
    n_per_class: usize,
    out_dir: &Path,
) -> Result<PathBuf> {
    if n_per_class < 2 {
        return Err(Error::InvalidParameter(
            "need at least 2 samples per class to populate both pseudo-datasets".into(),
        ));
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let size = SYNTH_IMAGE_SIZE as usize;
    let mut records: Vec<SampleRecord> = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for role in [Role::Train, Role::Test] {
        for i in 0..n_per_class {
            let ds = i % 2;
            let style = &STYLES[ds];
            let dataset_id = DATASETS[ds].to_string();
            let subject_id = format!("subj_{role}_{i:03}");
            let dir = out_dir.join(DATASETS[ds]).join(role.to_string());
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

            let face = render_face(style, size, size, &mut rng);
            let bf_path = dir.join(format!("bonafide_{i:03}.png"));
            write_png(&face, &bf_path)?;
            records.push(SampleRecord {
                image_path: bf_path,
                role,
                label: Label::BonaFide,
                pai_species: None,
                subject_id: subject_id.clone(),
                dataset_id: dataset_id.clone(),
                crop_box: None,
            });

            for species in SPECIES {
                let mut attacked = Raster {
                    width: face.width,
                    height: face.height,
                    planes: face.planes.clone(),
                };
                match species {
                    "print" => apply_print(&mut attacked, style, &mut rng),
                    "replay" => apply_replay(&mut attacked, style, &mut rng),
                    "moire" => apply_moire(&mut attacked, style, &mut rng),
                    _ => unreachable!(),
                }
                let path = dir.join(format!("{species}_{i:03}.png"));
                write_png(&attacked, &path)?;
                records.push(SampleRecord {
                    image_path: path,
                    role,
                    label: Label::Attack,
                    pai_species: Some(species.to_string()),
                    subject_id: subject_id.clone(),
                    dataset_id: dataset_id.clone(),
                    crop_box: None,
                });
            }
        }
    }

    let manifest_path = out_dir.join("manifest.txt");
    let mut text = String::from("# synthetic face-PAD dataset\n");
    for record in &records {
        text.push_str(&record.manifest_line());
        text.push('\n');
    }
    std::fs::write(&manifest_path, text).map_err(|e| Error::io(&manifest_path, e))?;
    Ok(manifest_path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::decode_and_crop;
    use crate::manifest::load_manifest;
    use crate::splits::{build_splits, ProtocolKind};
    use std::collections::BTreeSet;

    #[test]
    fn counts_species_and_roles_match_the_contract() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_synthetic_dataset(7, 10, dir.path()).unwrap();
        let records = load_manifest(&manifest).unwrap();
        assert_eq!(records.len(), 2 * (10 + 30));

        for role in [Role::Train, Role::Test] {
            let bona = records
                .iter()
                .filter(|r| r.role == role && r.label == Label::BonaFide)
                .count();
            let attacks = records
                .iter()
                .filter(|r| r.role == role && r.label == Label::Attack)
                .count();
            assert_eq!(bona, 10);
            assert_eq!(attacks, 30);
        }

        let species: BTreeSet<_> = records
            .iter()
            .filter_map(|r| r.pai_species.clone())
            .collect();
        assert_eq!(species.len(), 3);
        let datasets: BTreeSet<_> = records.iter().map(|r| r.dataset_id.clone()).collect();
        assert_eq!(datasets.len(), 2);

        // Subject pools must not leak across roles.
        let train_subjects: BTreeSet<_> = records
            .iter()
            .filter(|r| r.role == Role::Train)
            .map(|r| r.subject_id.clone())
            .collect();
        let test_subjects: BTreeSet<_> = records
            .iter()
            .filter(|r| r.role == Role::Test)
            .map(|r| r.subject_id.clone())
            .collect();
        assert!(train_subjects.is_disjoint(&test_subjects));

        // All three protocol families can be built from the manifest.
        assert_eq!(
            build_splits(&records, ProtocolKind::KnownAttack)
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            build_splits(&records, ProtocolKind::LeaveOneOutPai)
                .unwrap()
                .len(),
            3
        );
        assert_eq!(
            build_splits(&records, ProtocolKind::CrossDataset)
                .unwrap()
                .len(),
            2
        );
    }

    #[test]
    fn images_decode_at_the_declared_size() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_synthetic_dataset(3, 2, dir.path()).unwrap();
        let records = load_manifest(&manifest).unwrap();
        for record in records.iter().take(4) {
            let img: FaceImage<f64> = decode_and_crop(&record.image_path, None).unwrap();
            assert_eq!(img.width(), SYNTH_IMAGE_SIZE as usize);
            assert_eq!(img.height(), SYNTH_IMAGE_SIZE as usize);
        }
    }

    #[test]
    fn same_seed_writes_identical_bytes_anywhere() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        let man_a = generate_synthetic_dataset(42, 2, dir_a.path()).unwrap();
        let man_b = generate_synthetic_dataset(42, 2, dir_b.path()).unwrap();

        let rec_a = load_manifest(&man_a).unwrap();
        let rec_b = load_manifest(&man_b).unwrap();
        assert_eq!(rec_a.len(), rec_b.len());
        for (a, b) in rec_a.iter().zip(&rec_b) {
            assert_eq!(
                a.image_path.strip_prefix(dir_a.path()).unwrap(),
                b.image_path.strip_prefix(dir_b.path()).unwrap()
            );
            assert_eq!(
                std::fs::read(&a.image_path).unwrap(),
                std::fs::read(&b.image_path).unwrap(),
                "pixel bytes differ for {}",
                a.image_path.display()
            );
        }

        let seed_42_bytes = std::fs::read(&rec_b[0].image_path).unwrap();
        let man_c = generate_synthetic_dataset(43, 2, dir_b.path()).unwrap();
        let rec_c = load_manifest(&man_c).unwrap();
        assert_eq!(rec_b[0].image_path, rec_c[0].image_path);
        assert_ne!(
            seed_42_bytes,
            std::fs::read(&rec_c[0].image_path).unwrap(),
            "different seeds should differ"
        );
    }

    #[test]
    fn odd_counts_still_fill_both_datasets() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = generate_synthetic_dataset(1, 3, dir.path()).unwrap();
        let records = load_manifest(&manifest).unwrap();
        for ds in DATASETS {
            assert!(records.iter().any(|r| r.dataset_id == ds));
        }
        assert!(generate_synthetic_dataset(1, 1, dir.path()).is_err());
    }

    #[test]
    fn timing_face_is_deterministic_and_sized() {
        let a = synthetic_face(9, 200, 200).unwrap();
        let b = synthetic_face(9, 200, 200).unwrap();
        assert_eq!(a.width(), 200);
        assert_eq!(a.plane(0), b.plane(0));
        assert!(synthetic_face(9, 0, 10).is_err());
    }
}
