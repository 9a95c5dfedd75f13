//! PNG encoding of projections and feature maps.

use ndarray::{ArrayView2, ArrayView3, Axis};

use crate::error::{Error, Result};

pub const NORMALIZATION_KEY: &str = "normalization";
pub const NORMALIZATION_VALUE: &str = "per-image min-max";

/// Maps each value to 0..=255 by the image's own min and max. A constant
/// image maps to 0.
pub fn normalize_to_u8(values: impl Iterator<Item = f64> + Clone) -> Vec<u8> {
    let (lo, hi) = values
        .clone()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    values
        .map(|v| {
            if span > 0.0 {
                ((v - lo) / span * 255.0).round().clamp(0.0, 255.0) as u8
            } else {
                0
            }
        })
        .collect()
}

/// 8-bit PNG of a `[C, H, W]` image: grayscale for one channel, RGB for
/// three. The normalization used is recorded in a tEXt chunk.
pub fn encode_png(image: ArrayView3<'_, f64>) -> Result<Vec<u8>> {
    let (c, h, w) = image.dim();
    let color = match c {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "cannot render {c} channels; expected 1 or 3"
            )))
        }
    };
    if h == 0 || w == 0 {
        return Err(Error::EmptyInput);
    }
    if image.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("image".into()));
    }
    // Interleave to H x W x C.
    let hwc = image.permuted_axes([1, 2, 0]);
    let pixels = normalize_to_u8(hwc.iter().copied());

    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, w as u32, h as u32);
        encoder.set_color(color);
        encoder.set_depth(png::BitDepth::Eight);
        encoder
            .add_text_chunk(NORMALIZATION_KEY.to_string(), NORMALIZATION_VALUE.to_string())
            .map_err(png_error)?;
        let mut writer = encoder.write_header().map_err(png_error)?;
        writer.write_image_data(&pixels).map_err(png_error)?;
        writer.finish().map_err(png_error)?;
    }
    Ok(out)
}

/// Grayscale PNG of a single `[H, W]` map.
pub fn encode_map_png(map: ArrayView2<'_, f64>) -> Result<Vec<u8>> {
    encode_png(map.insert_axis(Axis(0)))
}

fn png_error(e: png::EncodingError) -> Error {
    Error::InvalidArgument(format!("png encoding failed: {e}"))
}
