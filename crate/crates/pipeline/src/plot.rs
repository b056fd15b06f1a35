//! Grayscale PNG rendering of spectrogram-like maps.

use std::path::Path;

use image::GrayImage;
use ndarray::Array2;

/// Maps values to 8-bit gray after a min-max stretch. Row 0 (lowest
/// frequency) ends up at the bottom of the image; time runs left to right.
pub fn render(values: &Array2<f64>) -> GrayImage {
    let (rows, cols) = values.dim();
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    GrayImage::from_fn(cols as u32, rows as u32, |x, y| {
        let v = values[(rows - 1 - y as usize, x as usize)];
        let level = if span > 0.0 { (v - lo) / span } else { 0.0 };
        image::Luma([(level * 255.0).round() as u8])
    })
}

pub fn write_png(path: &Path, values: &Array2<f64>) -> image::ImageResult<()> {
    render(values).save_with_format(path, image::ImageFormat::Png)
}
