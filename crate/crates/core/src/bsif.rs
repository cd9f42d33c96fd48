//! Dense compact BSIF descriptors.
//!
//! A code map assigns every pixel the integer whose bit `i` (filter 1 being
//! the least significant bit) records whether the inner product of filter `i`
//! with the pixel's `l`x`l` neighbourhood is strictly positive. Borders use
//! mirror reflection about the edge pixel (`-1 -> 1`, `w -> w-2`). Local
//! descriptors are per-channel code histograms over closed discs, compacted
//! to 128 bins and concatenated: 3 channels x 128 bins = 384 values.

use std::path::Path;

use crate::error::{Error, Result};
use crate::filterbank::FilterBank;
use crate::image::FaceImage;
use crate::scalar::{real, Real};

/// Bins kept after histogram compaction.
pub const COMPACT_BINS: usize = 128;
/// Channels x compact bins.
pub const DESCRIPTOR_DIM: usize = 3 * COMPACT_BINS;
/// Default dense grid stride.
pub const DEFAULT_STRIDE: usize = 3;
/// Default patch radii.
pub const DEFAULT_RADII: [u32; 4] = [4, 6, 8, 10];

/// Per-pixel BSIF codes for one plane.
#[derive(Debug, Clone)]
pub struct CodeImage {
    pub width: usize,
    pub height: usize,
    pub n_filters: usize,
    pub codes: Vec<u32>,
}

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let j = if i < 0 {
        -i
    } else if i >= n {
        2 * n - 2 - i
    } else {
        i
    };
    debug_assert!((0..n).contains(&j));
    j as usize
}

/// Compute the BSIF code map of one plane.
pub fn bsif_code_map<T: Real>(
    plane: &[T],
    width: usize,
    height: usize,
    bank: &FilterBank<T>,
) -> Result<CodeImage> {
    if plane.len() != width * height {
        return Err(Error::DimensionMismatch {
            context: "code map plane".into(),
            expected: width * height,
            found: plane.len(),
        });
    }
    let l = bank.size();
    if width < l || height < l {
        return Err(Error::ImageTooSmall {
            width,
            height,
            needed: l,
        });
    }
    let r = (l - 1) / 2;
    let mut codes = vec![0u32; width * height];
    for i in 0..bank.n_filters() {
        let filter = bank.filter(i);
        let bit = 1u32 << i;
        for y in 0..height {
            let border_y = y < r || y + r >= height;
            for x in 0..width {
                let border = border_y || x < r || x + r >= width;
                let mut acc = T::zero();
                if border {
                    for dy in 0..l {
                        let sy = reflect(y as isize + dy as isize - r as isize, height);
                        for dx in 0..l {
                            let sx = reflect(x as isize + dx as isize - r as isize, width);
                            acc += filter[dy * l + dx] * plane[sy * width + sx];
                        }
                    }
                } else {
                    let x0 = x - r;
                    for dy in 0..l {
                        let row = (y - r + dy) * width + x0;
                        let prow = &plane[row..row + l];
                        let frow = &filter[dy * l..dy * l + l];
                        for dx in 0..l {
                            acc += frow[dx] * prow[dx];
                        }
                    }
                }
                if acc > T::zero() {
                    codes[y * width + x] |= bit;
                }
            }
        }
    }
    Ok(CodeImage {
        width,
        height,
        n_filters: bank.n_filters(),
        codes,
    })
}

/// Integer offsets of the closed disc `dx^2 + dy^2 <= r^2`, row-major.
pub fn disc_offsets(radius: u32) -> Vec<(i32, i32)> {
    let r = radius as i32;
    let mut offsets = Vec::new();
    for dy in -r..=r {
        for dx in -r..=r {
            if dx * dx + dy * dy <= r * r {
                offsets.push((dy, dx));
            }
        }
    }
    offsets
}

/// Histogram of codes over the closed disc centred at `(x, y)`.
pub fn patch_histogram(
    code: &CodeImage,
    x: usize,
    y: usize,
    radius: u32,
    n_bins: usize,
) -> Result<Vec<u32>> {
    let r = radius as usize;
    if x < r || y < r || x + r >= code.width || y + r >= code.height {
        return Err(Error::PatchOutOfBounds {
            x,
            y,
            radius: r,
            width: code.width,
            height: code.height,
        });
    }
    let mut hist = vec![0u32; n_bins];
    let ri = radius as i32;
    for dy in -ri..=ri {
        let row = (y as i32 + dy) as usize * code.width;
        for dx in -ri..=ri {
            if dx * dx + dy * dy <= ri * ri {
                let c = code.codes[row + (x as i32 + dx) as usize] as usize;
                hist[c] += 1;
            }
        }
    }
    Ok(hist)
}

/// Compact a power-of-two histogram to [`COMPACT_BINS`] bins.
///
/// Histograms no longer than 128 bins are zero-padded; longer ones sum
/// sequential groups of `len / 128` bins. Total mass is conserved exactly.
pub fn compact_histogram(hist: &[u32]) -> Result<Vec<u32>> {
    if hist.is_empty() || !hist.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo { len: hist.len() });
    }
    let mut out = vec![0u32; COMPACT_BINS];
    if hist.len() <= COMPACT_BINS {
        out[..hist.len()].copy_from_slice(hist);
    } else {
        let group = hist.len() / COMPACT_BINS;
        for (j, slot) in out.iter_mut().enumerate() {
            *slot = hist[j * group..(j + 1) * group].iter().sum();
        }
    }
    Ok(out)
}

/// One dense local descriptor: 384 compacted histogram counts.
#[derive(Debug, Clone)]
pub struct LocalDescriptor<T: Real> {
    pub values: Vec<T>,
    pub grid_x: u32,
    pub grid_y: u32,
    pub radius: u32,
}

#[derive(Debug, Clone)]
pub struct DescriptorSet<T: Real> {
    pub descriptors: Vec<LocalDescriptor<T>>,
    /// Image identifier the descriptors came from.
    pub source: String,
    /// `(n_filters, size)` of the bank that produced the codes.
    pub bank_id: (u32, u32),
}

/// Grid coordinates along one axis: `r_max, r_max + stride, ...` up to the
/// last position whose disc of radius `r_max` still fits.
fn grid_coords(extent: usize, r_max: usize, stride: usize) -> Vec<usize> {
    (r_max..extent.saturating_sub(r_max))
        .step_by(stride)
        .collect()
}

/// Extract dense descriptors over a regular grid at several radii.
pub fn extract_dense_descriptors<T: Real>(
    img: &FaceImage<T>,
    bank: &FilterBank<T>,
    stride: usize,
    radii: &[u32],
    source: &str,
) -> Result<DescriptorSet<T>> {
    if stride == 0 {
        return Err(Error::InvalidParameter("stride must be positive".into()));
    }
    if radii.is_empty() || radii.iter().any(|&r| r == 0) {
        return Err(Error::InvalidParameter(
            "radii must be a non-empty list of positive values".into(),
        ));
    }
    let r_max = *radii.iter().max().unwrap() as usize;
    let (w, h) = (img.width(), img.height());
    if w < 2 * r_max + 1 || h < 2 * r_max + 1 {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            needed: 2 * r_max + 1,
        });
    }
    let n_bins = 1usize << bank.n_filters();
    let code_planes: [CodeImage; 3] = [
        bsif_code_map(img.plane(0), w, h, bank)?,
        bsif_code_map(img.plane(1), w, h, bank)?,
        bsif_code_map(img.plane(2), w, h, bank)?,
    ];

    let xs = grid_coords(w, r_max, stride);
    let ys = grid_coords(h, r_max, stride);
    let mut descriptors = Vec::with_capacity(xs.len() * ys.len() * radii.len());
    for &y in &ys {
        for &x in &xs {
            for &radius in radii {
                let mut values = Vec::with_capacity(DESCRIPTOR_DIM);
                for code in &code_planes {
                    let hist = patch_histogram(code, x, y, radius, n_bins)?;
                    for count in compact_histogram(&hist)? {
                        values.push(real::<T>(f64::from(count)));
                    }
                }
                descriptors.push(LocalDescriptor {
                    values,
                    grid_x: x as u32,
                    grid_y: y as u32,
                    radius,
                });
            }
        }
    }
    Ok(DescriptorSet {
        descriptors,
        source: source.to_string(),
        bank_id: bank.id(),
    })
}

/// Write descriptors as `u32 count`, then per record `u32 x, y, r` and 384
/// float64 values, all little-endian.
pub fn write_descriptor_dump<T: Real>(set: &DescriptorSet<T>, path: &Path) -> Result<()> {
    let mut buf = Vec::with_capacity(4 + set.descriptors.len() * (12 + DESCRIPTOR_DIM * 8));
    buf.extend_from_slice(&(set.descriptors.len() as u32).to_le_bytes());
    for d in &set.descriptors {
        buf.extend_from_slice(&d.grid_x.to_le_bytes());
        buf.extend_from_slice(&d.grid_y.to_le_bytes());
        buf.extend_from_slice(&d.radius.to_le_bytes());
        for v in &d.values {
            let v = v.to_f64().expect("descriptor value must convert to f64");
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_descriptor_dump(path: &Path) -> Result<Vec<LocalDescriptor<f64>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file_err = |message: &str| Error::Bundle {
        path: path.to_path_buf(),
        message: message.into(),
    };
    if bytes.len() < 4 {
        return Err(file_err("descriptor dump truncated"));
    }
    let count = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let record = 12 + DESCRIPTOR_DIM * 8;
    if bytes.len() != 4 + count * record {
        return Err(file_err("descriptor dump has unexpected length"));
    }
    let mut out = Vec::with_capacity(count);
    let mut off = 4;
    for _ in 0..count {
        let grid_x = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
        let grid_y = u32::from_le_bytes(bytes[off + 4..off + 8].try_into().unwrap());
        let radius = u32::from_le_bytes(bytes[off + 8..off + 12].try_into().unwrap());
        off += 12;
        let mut values = Vec::with_capacity(DESCRIPTOR_DIM);
        for _ in 0..DESCRIPTOR_DIM {
            values.push(f64::from_le_bytes(bytes[off..off + 8].try_into().unwrap()));
            off += 8;
        }
        out.push(LocalDescriptor {
            values,
            grid_x,
            grid_y,
            radius,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Colorspace;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_bank(n: usize, l: usize, seed: u64) -> FilterBank<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let filters = (0..n)
            .map(|_| (0..l * l).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        FilterBank::new(filters, l, "test".into(), Some(seed)).unwrap()
    }

    /// Straight-line re-statement of the code definition, kept independent of
    /// the production loops.
    fn oracle_code(
        plane: &[f64],
        w: usize,
        h: usize,
        bank: &FilterBank<f64>,
        x: usize,
        y: usize,
    ) -> u32 {
        let l = bank.size();
        let r = (l as isize - 1) / 2;
        let mirror = |i: isize, n: usize| -> usize {
            if i < 0 {
                (-i) as usize
            } else if i as usize >= n {
                2 * n - 2 - i as usize
            } else {
                i as usize
            }
        };
        let mut code = 0u32;
        for i in 0..bank.n_filters() {
            let mut acc = 0.0;
            for u in 0..l {
                for v in 0..l {
                    let sy = mirror(y as isize + u as isize - r, h);
                    let sx = mirror(x as isize + v as isize - r, w);
                    acc += bank.filter(i)[u * l + v] * plane[sy * w + sx];
                }
            }
            if acc > 0.0 {
                code += 1 << i;
            }
        }
        code
    }

    #[test]
    fn code_map_matches_per_pixel_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for &(w, h, n, l) in &[
            (9usize, 9usize, 5usize, 3usize),
            (12, 10, 6, 5),
            (7, 11, 8, 7),
        ] {
            let plane: Vec<f64> = (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect();
            let bank = random_bank(n, l, 1000 + w as u64);
            let map = bsif_code_map(&plane, w, h, &bank).unwrap();
            for y in 0..h {
                for x in 0..w {
                    assert_eq!(
                        map.codes[y * w + x],
                        oracle_code(&plane, w, h, &bank, x, y),
                        "pixel ({x},{y}) of {w}x{h} n={n} l={l}"
                    );
                }
            }
        }
    }

    #[test]
    fn zero_responses_set_no_bits() {
        // A zero-mean filter on a constant plane responds exactly 0, and the
        // threshold is strictly positive, so every code must be 0.
        let filters = vec![vec![1.0, -1.0, 0.5, -0.5, 0.0, 0.0, 0.25, -0.25, 0.0]];
        let bank = FilterBank::new(filters, 3, "test".into(), None).unwrap();
        let plane = vec![0.7; 6 * 6];
        let map = bsif_code_map(&plane, 6, 6, &bank).unwrap();
        assert!(map.codes.iter().all(|&c| c == 0));
    }

    #[test]
    fn first_filter_is_least_significant_bit() {
        // Filter 0 = +delta fires on bright pixels; filter 1 = -delta never
        // fires on a non-negative plane.
        let mut delta = vec![0.0; 9];
        delta[4] = 1.0;
        let mut neg = vec![0.0; 9];
        neg[4] = -1.0;
        let bank = FilterBank::new(vec![delta, neg], 3, "test".into(), None).unwrap();
        let mut plane = vec![0.0; 5 * 5];
        plane[2 * 5 + 3] = 0.9;
        let map = bsif_code_map(&plane, 5, 5, &bank).unwrap();
        assert_eq!(map.codes[2 * 5 + 3], 1);
        assert!(map.codes.iter().filter(|&&c| c != 0).count() == 1);
    }

    #[test]
    fn border_uses_mirror_reflection() {
        // Tap at the filter's top-left corner reads pixel (x-1, y-1); at the
        // image origin that reflects to (1, 1).
        let mut f = vec![0.0; 9];
        f[0] = 1.0;
        let bank = FilterBank::new(vec![f], 3, "test".into(), None).unwrap();
        let mut plane = vec![0.0; 3 * 3];
        plane[1 * 3 + 1] = 1.0;
        let map = bsif_code_map(&plane, 3, 3, &bank).unwrap();
        assert_eq!(map.codes[0], 1);
    }

    #[test]
    fn disc_cardinalities_match_the_lattice() {
        let expected = [(4u32, 49usize), (6, 113), (8, 197), (10, 317)];
        for (r, n) in expected {
            assert_eq!(disc_offsets(r).len(), n, "radius {r}");
        }
    }

    #[test]
    fn patch_histogram_mass_equals_disc_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (w, h) = (30, 26);
        let code = CodeImage {
            width: w,
            height: h,
            n_filters: 5,
            codes: (0..w * h).map(|_| rng.gen_range(0..32)).collect(),
        };
        let hist = patch_histogram(&code, 12, 12, 6, 32).unwrap();
        assert_eq!(hist.iter().sum::<u32>(), 113);
        assert!(patch_histogram(&code, 3, 12, 6, 32).is_err());
        assert!(patch_histogram(&code, 12, 25, 6, 32).is_err());
    }

    #[test]
    fn compaction_conserves_mass_and_pads_small_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 5..=12u32 {
            let bins = 1usize << n;
            let hist: Vec<u32> = (0..bins).map(|_| rng.gen_range(0..17)).collect();
            let compact = compact_histogram(&hist).unwrap();
            assert_eq!(compact.len(), COMPACT_BINS);
            assert_eq!(
                compact.iter().map(|&v| u64::from(v)).sum::<u64>(),
                hist.iter().map(|&v| u64::from(v)).sum::<u64>()
            );
            if bins <= COMPACT_BINS {
                assert_eq!(&compact[..bins], &hist[..]);
                assert!(compact[bins..].iter().all(|&v| v == 0));
            }
        }
        assert!(compact_histogram(&[1, 2, 3]).is_err());
        assert!(compact_histogram(&[]).is_err());
    }

    fn flat_image(w: usize, h: usize, seed: u64) -> FaceImage<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let planes = [
            (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect(),
            (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect(),
            (0..w * h).map(|_| rng.gen_range(0.0..1.0)).collect(),
        ];
        FaceImage::new(w, h, Colorspace::Rgb, planes).unwrap()
    }

    #[test]
    fn dense_grid_counts() {
        let bank = random_bank(5, 3, 77);
        let img = flat_image(24, 24, 1);
        let set = extract_dense_descriptors(&img, &bank, 3, &DEFAULT_RADII, "a").unwrap();
        assert_eq!(set.descriptors.len(), 16); // 2x2 grid points, 4 radii

        let img = flat_image(21, 21, 2);
        let set = extract_dense_descriptors(&img, &bank, 3, &DEFAULT_RADII, "b").unwrap();
        assert_eq!(set.descriptors.len(), 4); // single grid point

        let img = flat_image(20, 20, 3);
        assert!(matches!(
            extract_dense_descriptors(&img, &bank, 3, &DEFAULT_RADII, "c"),
            Err(Error::ImageTooSmall { .. })
        ));
    }

    #[test]
    fn descriptor_blocks_sum_to_disc_sizes() {
        let bank = random_bank(6, 5, 5);
        let img = flat_image(25, 25, 8);
        let set = extract_dense_descriptors(&img, &bank, 3, &DEFAULT_RADII, "img").unwrap();
        for d in &set.descriptors {
            assert_eq!(d.values.len(), DESCRIPTOR_DIM);
            let disc = disc_offsets(d.radius).len() as f64;
            for c in 0..3 {
                let block: f64 = d.values[c * COMPACT_BINS..(c + 1) * COMPACT_BINS]
                    .iter()
                    .sum();
                assert_eq!(block, disc);
            }
            assert!(d.values.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn descriptor_dump_round_trips() {
        let bank = random_bank(5, 3, 21);
        let img = flat_image(24, 24, 4);
        let set = extract_dense_descriptors(&img, &bank, 3, &DEFAULT_RADII, "img").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("descr.bin");
        write_descriptor_dump(&set, &path).unwrap();
        let back = read_descriptor_dump(&path).unwrap();
        assert_eq!(back.len(), set.descriptors.len());
        for (a, b) in set.descriptors.iter().zip(&back) {
            assert_eq!(
                (a.grid_x, a.grid_y, a.radius),
                (b.grid_x, b.grid_y, b.radius)
            );
            for (x, y) in a.values.iter().zip(&b.values) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }
}
