//! Image decoding, cropping and colour-space conversion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Colorspace {
    Rgb,
    Hsv,
    YCbCr,
}

impl Colorspace {
    pub fn parse(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rgb" => Ok(Colorspace::Rgb),
            "hsv" => Ok(Colorspace::Hsv),
            "ycbcr" => Ok(Colorspace::YCbCr),
            other => Err(Error::InvalidParameter(format!(
                "unknown colour space `{other}` (expected rgb, hsv or ycbcr)"
            ))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Colorspace::Rgb => "rgb",
            Colorspace::Hsv => "hsv",
            Colorspace::YCbCr => "ycbcr",
        }
    }
}

/// Pixel rectangle; `x`/`y` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropBox {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

/// Decoded face image: three planes of equal size, values in `[0, 1]`.
#[derive(Debug, Clone)]
pub struct FaceImage<T: Real> {
    width: usize,
    height: usize,
    colorspace: Colorspace,
    planes: [Vec<T>; 3],
}

impl<T: Real> FaceImage<T> {
    pub fn new(
        width: usize,
        height: usize,
        colorspace: Colorspace,
        planes: [Vec<T>; 3],
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be positive".into(),
            ));
        }
        for plane in &planes {
            if plane.len() != width * height {
                return Err(Error::DimensionMismatch {
                    context: "image plane".into(),
                    expected: width * height,
                    found: plane.len(),
                });
            }
            if plane
                .iter()
                .any(|v| !v.is_finite() || *v < T::zero() || *v > T::one())
            {
                return Err(Error::InvalidParameter(
                    "image plane values must be finite and within [0, 1]".into(),
                ));
            }
        }
        Ok(FaceImage {
            width,
            height,
            colorspace,
            planes,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn colorspace(&self) -> Colorspace {
        self.colorspace
    }

    pub fn plane(&self, channel: usize) -> &[T] {
        &self.planes[channel]
    }

    /// BT.601 luma of an RGB image; used when sampling filter-learning patches.
    pub fn luma(&self) -> Vec<T> {
        let (wr, wg, wb) = (real::<T>(0.299), real::<T>(0.587), real::<T>(0.114));
        (0..self.width * self.height)
            .map(|i| wr * self.planes[0][i] + wg * self.planes[1][i] + wb * self.planes[2][i])
            .collect()
    }
}

/// Decode a PNG/BMP file into an RGB [`FaceImage`], optionally cropping first.
///
/// The file must decode to an 8-bit image with exactly three channels.
pub fn decode_and_crop<T: Real>(path: &Path, crop: Option<CropBox>) -> Result<FaceImage<T>> {
    let dynamic = image::open(path).map_err(|e| Error::ImageDecode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let color = dynamic.color();
    let channels = u32::from(color.channel_count());
    if channels != 3 {
        return Err(Error::ChannelCount {
            path: path.to_path_buf(),
            found: channels,
        });
    }
    if usize::from(color.bytes_per_pixel()) != 3 {
        return Err(Error::ImageDecode {
            path: path.to_path_buf(),
            message: "only 8-bit channels are supported".into(),
        });
    }
    let mut rgb = dynamic.into_rgb8();
    if let Some(b) = crop {
        let (iw, ih) = (rgb.width(), rgb.height());
        if b.w == 0 || b.h == 0 || b.x.saturating_add(b.w) > iw || b.y.saturating_add(b.h) > ih {
            return Err(Error::CropOutOfBounds {
                x: b.x,
                y: b.y,
                w: b.w,
                h: b.h,
                width: iw,
                height: ih,
            });
        }
        rgb = image::imageops::crop_imm(&rgb, b.x, b.y, b.w, b.h).to_image();
    }

    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let scale = real::<T>(1.0 / 255.0);
    let mut planes = [
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
        Vec::with_capacity(w * h),
    ];
    for px in rgb.pixels() {
        for c in 0..3 {
            planes[c].push(real::<T>(f64::from(px.0[c])) * scale);
        }
    }
    FaceImage::new(w, h, Colorspace::Rgb, planes)
}

// Full-range BT.601 with the JPEG-style chroma offset of 128/255. The matrix
// pair below is mutually inverse; saturated corners that land just above 1.0
// (by at most ~0.2%) are clamped to keep planes inside [0, 1].
const CHROMA_OFFSET: f64 = 128.0 / 255.0;

fn clamp01<T: Real>(v: T) -> T {
    v.max(T::zero()).min(T::one())
}

pub(crate) fn rgb_to_ycbcr<T: Real>(r: T, g: T, b: T) -> (T, T, T) {
    let y = real::<T>(0.299) * r + real::<T>(0.587) * g + real::<T>(0.114) * b;
    let cb = (b - y) / real::<T>(1.772) + real::<T>(CHROMA_OFFSET);
    let cr = (r - y) / real::<T>(1.402) + real::<T>(CHROMA_OFFSET);
    (clamp01(y), clamp01(cb), clamp01(cr))
}

pub(crate) fn ycbcr_to_rgb<T: Real>(y: T, cb: T, cr: T) -> (T, T, T) {
    let b = (cb - real::<T>(CHROMA_OFFSET)) * real::<T>(1.772) + y;
    let r = (cr - real::<T>(CHROMA_OFFSET)) * real::<T>(1.402) + y;
    let g = (y - real::<T>(0.299) * r - real::<T>(0.114) * b) / real::<T>(0.587);
    (clamp01(r), clamp01(g), clamp01(b))
}

pub(crate) fn rgb_to_hsv<T: Real>(r: T, g: T, b: T) -> (T, T, T) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > T::zero() {
        delta / max
    } else {
        T::zero()
    };
    let six = real::<T>(6.0);
    let h = if delta == T::zero() {
        T::zero()
    } else if max == r {
        let mut h = (g - b) / delta / six;
        if h < T::zero() {
            h += T::one();
        }
        h
    } else if max == g {
        ((b - r) / delta + real::<T>(2.0)) / six
    } else {
        ((r - g) / delta + real::<T>(4.0)) / six
    };
    (clamp01(h), s, v)
}

/// Convert between colour spaces. Supported directions: identity, RGB to HSV,
/// RGB to YCbCr, and YCbCr back to RGB.
pub fn convert_colorspace<T: Real>(img: &FaceImage<T>, target: Colorspace) -> Result<FaceImage<T>> {
    if img.colorspace == target {
        return Ok(img.clone());
    }
    let per_pixel: fn(T, T, T) -> (T, T, T) = match (img.colorspace, target) {
        (Colorspace::Rgb, Colorspace::Hsv) => rgb_to_hsv,
        (Colorspace::Rgb, Colorspace::YCbCr) => rgb_to_ycbcr,
        (Colorspace::YCbCr, Colorspace::Rgb) => ycbcr_to_rgb,
        (from, to) => {
            return Err(Error::InvalidParameter(format!(
                "unsupported colour conversion {} -> {}",
                from.name(),
                to.name()
            )))
        }
    };
    let n = img.width * img.height;
    let mut planes = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for i in 0..n {
        let (a, b, c) = per_pixel(img.planes[0][i], img.planes[1][i], img.planes[2][i]);
        planes[0].push(a);
        planes[1].push(b);
        planes[2].push(c);
    }
    FaceImage::new(img.width, img.height, target, planes)
}
