//! RGB image buffers and bilinear resampling.
//!
//! Resampling uses pixel-center alignment: destination pixel `d` samples the
//! source at `(d + 0.5) * src / dst - 0.5`, clamped to the edge pixels. Sizes
//! that already match reproduce the source exactly.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ImageError {
    #[error("image is empty ({width}x{height})")]
    Empty { width: usize, height: usize },
    #[error("buffer holds {actual} bytes, {width}x{height} RGB needs {expected}")]
    BufferSize { width: usize, height: usize, expected: usize, actual: usize },
}

/// 8-bit RGB image, rows top to bottom, interleaved channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferSize { width, height, expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self, ImageError> {
        let data = rgb.iter().copied().cycle().take(width * height * 3).collect();
        Self::from_raw(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn put_pixel(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Fills the rectangle, clipped to the image.
    pub fn fill_rect(&mut self, x: usize, y: usize, w: usize, h: usize, rgb: [u8; 3]) {
        for yy in y..(y + h).min(self.height) {
            for xx in x..(x + w).min(self.width) {
                self.put_pixel(xx, yy, rgb);
            }
        }
    }

    /// Converts to floats scaled to `[0, 1]`.
    pub fn to_float(&self) -> FloatImage {
        FloatImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v as f32 / 255.0).collect(),
        }
    }
}

/// Float RGB image, same layout as [`RgbImage`].
#[derive(Clone, Debug, PartialEq)]
pub struct FloatImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl FloatImage {
    pub fn from_raw(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 {
            return Err(ImageError::Empty { width, height });
        }
        let expected = width * height * 3;
        if data.len() != expected {
            return Err(ImageError::BufferSize { width, height, expected, actual: data.len() });
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_raw(&self) -> &[f32] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<f32> {
        self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    /// Copies the sub-image at `(x, y)` of size `w`×`h`. The caller keeps it in bounds.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> FloatImage {
        debug_assert!(x + w <= self.width && y + h <= self.height && w > 0 && h > 0);
        let mut data = Vec::with_capacity(w * h * 3);
        for row in y..y + h {
            let start = (row * self.width + x) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        FloatImage { width: w, height: h, data }
    }

    /// Bilinear resize to `width`×`height`. Aspect ratio is not preserved.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> FloatImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        let xs = sample_taps(self.width, width);
        let ys = sample_taps(self.height, height);
        let stride = self.width * 3;
        let mut data = Vec::with_capacity(width * height * 3);
        for &(y0, y1, fy) in &ys {
            let r0 = &self.data[y0 * stride..(y0 + 1) * stride];
            let r1 = &self.data[y1 * stride..(y1 + 1) * stride];
            for &(x0, x1, fx) in &xs {
                for c in 0..3 {
                    let top = r0[x0 * 3 + c] * (1.0 - fx) + r0[x1 * 3 + c] * fx;
                    let bottom = r1[x0 * 3 + c] * (1.0 - fx) + r1[x1 * 3 + c] * fx;
                    data.push(top * (1.0 - fy) + bottom * fy);
                }
            }
        }
        FloatImage { width, height, data }
    }
}

/// Per destination index: the two source taps and the weight of the second.
fn sample_taps(src: usize, dst: usize) -> Vec<(usize, usize, f32)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = libm::floor(s) as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, (s - i0 as f64) as f32)
        })
        .collect()
}

/// A captured or replayed frame: the pipeline's unit of work.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub image: RgbImage,
    pub sequence: u64,
    pub timestamp_ms: u64,
}

impl Frame {
    pub fn new(image: RgbImage, sequence: u64, timestamp_ms: u64) -> Self {
        Self { image, sequence, timestamp_ms }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    /// Independent scalar bilinear sampler, f64 throughout.
    fn oracle(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
        let at = |x: i64, y: i64| -> f64 {
            let x = x.clamp(0, sw as i64 - 1) as usize;
            let y = y.clamp(0, sh as i64 - 1) as usize;
            src[y * sw + x]
        };
        let mut out = vec![];
        for dy in 0..dh {
            for dx in 0..dw {
                let sx = ((dx as f64 + 0.5) * sw as f64 / dw as f64 - 0.5).max(0.0).min((sw - 1) as f64);
                let sy = ((dy as f64 + 0.5) * sh as f64 / dh as f64 - 0.5).max(0.0).min((sh - 1) as f64);
                let (x0, y0) = (sx.floor() as i64, sy.floor() as i64);
                let (ax, ay) = (sx - x0 as f64, sy - y0 as f64);
                let v = at(x0, y0) * (1.0 - ax) * (1.0 - ay)
                    + at(x0 + 1, y0) * ax * (1.0 - ay)
                    + at(x0, y0 + 1) * (1.0 - ax) * ay
                    + at(x0 + 1, y0 + 1) * ax * ay;
                out.push(v);
            }
        }
        out
    }

    fn gray(w: usize, h: usize, f: impl Fn(usize, usize) -> u8) -> RgbImage {
        let mut img = RgbImage::filled(w, h, [0, 0, 0]).unwrap();
        for y in 0..h {
            for x in 0..w {
                let v = f(x, y);
                img.put_pixel(x, y, [v, v, v]);
            }
        }
        img
    }

    fn check_against_oracle(img: &RgbImage, dw: usize, dh: usize) {
        let src: Vec<f64> = (0..img.height())
            .flat_map(|y| (0..img.width()).map(move |x| (x, y)))
            .map(|(x, y)| img.pixel(x, y)[0] as f64 / 255.0)
            .collect();
        let expected = oracle(&src, img.width(), img.height(), dw, dh);
        let got = img.to_float().resize_bilinear(dw, dh);
        for (i, e) in expected.iter().enumerate() {
            for c in 0..3 {
                let g = got.as_raw()[i * 3 + c] as f64;
                assert!((g - e).abs() < 1e-6, "pixel {i} channel {c}: {g} vs {e}");
            }
        }
    }

    #[test]
    fn single_pixel_miniature_matches_oracle() {
        let img = gray(8, 6, |x, y| if (x, y) == (4, 3) { 255 } else { 0 });
        check_against_oracle(&img, 3, 3);
        check_against_oracle(&img, 5, 4);
        check_against_oracle(&img, 13, 11);
    }

    #[test]
    fn checkerboard_miniature_matches_oracle() {
        let img = gray(8, 8, |x, y| if (x + y) % 2 == 0 { 255 } else { 0 });
        check_against_oracle(&img, 3, 3);
        check_against_oracle(&img, 7, 5);
    }

    #[test]
    fn same_size_is_identity() {
        let img = gray(5, 4, |x, y| (x * 40 + y * 7) as u8).to_float();
        assert_eq!(img.resize_bilinear(5, 4), img);
    }

    #[test]
    fn crop_copies_exact_rows() {
        let img = gray(6, 5, |x, y| (y * 6 + x) as u8).to_float();
        let c = img.crop(2, 1, 3, 2);
        assert_eq!(c.width(), 3);
        assert_eq!(c.pixel(0, 0), img.pixel(2, 1));
        assert_eq!(c.pixel(2, 1), img.pixel(4, 2));
    }

    #[test]
    fn rejects_empty_and_short_buffers() {
        assert!(matches!(RgbImage::from_raw(0, 3, vec![]), Err(ImageError::Empty { .. })));
        assert!(matches!(RgbImage::from_raw(2, 2, vec![0; 11]), Err(ImageError::BufferSize { .. })));
    }
}
