//! Canonical 8-bit RGB frame and the pixel helpers shared by every stage.

use std::io::Cursor;

use image::{ImageFormat, RgbImage};
use thiserror::Error;

/// Rounds to the nearest integer, halves away from negative infinity
/// (`2.5 -> 3`, `-2.5 -> -2`). The one quantization rule used for pixels
/// and frame indices throughout the crate.
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("pixel buffer has {actual} bytes, expected {expected} for {width}x{height}")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("frame dimensions must be nonzero")]
    ZeroDimension,
    #[error("image codec: {0}")]
    Codec(String),
}

/// One decoded video frame, row-major RGB24.
#[derive(Clone, PartialEq)]
pub struct Frame {
    index: u64,
    timestamp: f64,
    width: u32,
    height: u32,
    pixels: Vec<u8>,
}

impl std::fmt::Debug for Frame {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Frame")
            .field("index", &self.index)
            .field("timestamp", &self.timestamp)
            .field("width", &self.width)
            .field("height", &self.height)
            .finish_non_exhaustive()
    }
}

impl Frame {
    pub fn new(
        index: u64,
        timestamp: f64,
        width: u32,
        height: u32,
        pixels: Vec<u8>,
    ) -> Result<Self, FrameError> {
        if width == 0 || height == 0 {
            return Err(FrameError::ZeroDimension);
        }
        let expected = width as usize * height as usize * 3;
        if pixels.len() != expected {
            return Err(FrameError::BufferSize {
                width,
                height,
                expected,
                actual: pixels.len(),
            });
        }
        Ok(Self {
            index,
            timestamp,
            width,
            height,
            pixels,
        })
    }

    /// Uniform frame of a single colour.
    pub fn filled(index: u64, timestamp: f64, width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let pixels = rgb
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self::new(index, timestamp, width.max(1), height.max(1), pixels)
            .expect("filled frame has consistent geometry")
    }

    pub fn index(&self) -> u64 {
        self.index
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn same_dimensions(&self, other: &Frame) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let o = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[o], self.pixels[o + 1], self.pixels[o + 2]]
    }

    /// Same pixels, different position in a stream.
    pub fn with_position(mut self, index: u64, timestamp: f64) -> Self {
        self.index = index;
        self.timestamp = timestamp;
        self
    }

    /// BT.601 luma per pixel, in `[0, 255]`.
    pub fn luma(&self) -> impl Iterator<Item = f64> + '_ {
        self.pixels.chunks_exact(3).map(|p| {
            0.299 * f64::from(p[0]) + 0.587 * f64::from(p[1]) + 0.114 * f64::from(p[2])
        })
    }

    /// Bilinear resize with pixel-centre alignment and round-half-up
    /// quantization. Uniform frames stay exactly uniform.
    pub fn resize_bilinear(&self, width: u32, height: u32) -> Frame {
        let (sw, sh) = (self.width as usize, self.height as usize);
        let (dw, dh) = (width.max(1) as usize, height.max(1) as usize);
        if sw == dw && sh == dh {
            return self.clone();
        }
        let sx = sw as f64 / dw as f64;
        let sy = sh as f64 / dh as f64;
        let axis = |d: usize, scale: f64, len: usize| -> (usize, usize, f64) {
            let pos = ((d as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
            let lo = pos.floor() as usize;
            let hi = (lo + 1).min(len - 1);
            (lo, hi, pos - lo as f64)
        };
        let cols: Vec<_> = (0..dw).map(|x| axis(x, sx, sw)).collect();
        let mut out = Vec::with_capacity(dw * dh * 3);
        for y in 0..dh {
            let (y0, y1, fy) = axis(y, sy, sh);
            for &(x0, x1, fx) in &cols {
                for c in 0..3 {
                    let p = |xx: usize, yy: usize| f64::from(self.pixels[(yy * sw + xx) * 3 + c]);
                    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
                    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
                    let v = top * (1.0 - fy) + bottom * fy;
                    out.push(round_half_up(v).clamp(0, 255) as u8);
                }
            }
        }
        Frame {
            index: self.index,
            timestamp: self.timestamp,
            width: dw as u32,
            height: dh as u32,
            pixels: out,
        }
    }

    /// Canonical PNG encoding (8-bit RGB, default compression).
    pub fn to_png(&self) -> Vec<u8> {
        let img = RgbImage::from_raw(self.width, self.height, self.pixels.clone())
            .expect("frame geometry is validated on construction");
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png)
            .expect("in-memory PNG encoding does not fail");
        buf.into_inner()
    }

    /// Decodes any PNG (grey, RGBA, 16-bit …) into canonical RGB24.
    pub fn from_png(bytes: &[u8], index: u64, timestamp: f64) -> Result<Frame, FrameError> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| FrameError::Codec(e.to_string()))?
            .to_rgb8();
        let (w, h) = img.dimensions();
        Frame::new(index, timestamp, w, h, img.into_raw())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_half_up_rule() {
        assert_eq!(round_half_up(150.5), 151);
        assert_eq!(round_half_up(150.49), 150);
        assert_eq!(round_half_up(2.5), 3);
        assert_eq!(round_half_up(-2.5), -2);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn rejects_bad_buffer() {
        assert!(matches!(
            Frame::new(0, 0.0, 2, 2, vec![0; 11]),
            Err(FrameError::BufferSize { expected: 12, .. })
        ));
        assert!(matches!(
            Frame::new(0, 0.0, 0, 2, vec![]),
            Err(FrameError::ZeroDimension)
        ));
    }

    #[test]
    fn resize_keeps_uniform_colour() {
        let f = Frame::filled(3, 0.12, 37, 21, [13, 200, 77]);
        let r = f.resize_bilinear(224, 224);
        assert_eq!((r.width(), r.height()), (224, 224));
        assert!(r.pixels().chunks_exact(3).all(|p| p == [13, 200, 77]));
        assert_eq!(r.index(), 3);
    }

    #[test]
    fn resize_two_pixel_ramp() {
        // 2x1 -> 4x1: centres map to -0.25, 0.25, 0.75, 1.25 -> clamped 0, .25, .75, 1
        let f = Frame::new(0, 0.0, 2, 1, vec![0, 0, 0, 200, 200, 200]).unwrap();
        let r = f.resize_bilinear(4, 1);
        let reds: Vec<u8> = r.pixels().chunks_exact(3).map(|p| p[0]).collect();
        assert_eq!(reds, vec![0, 50, 150, 200]);
    }

    #[test]
    fn png_round_trip() {
        let px: Vec<u8> = (0..(5 * 3 * 3)).map(|i| (i * 7 % 256) as u8).collect();
        let f = Frame::new(0, 0.0, 5, 3, px).unwrap();
        let back = Frame::from_png(&f.to_png(), 0, 0.0).unwrap();
        assert_eq!(back, f);
    }
}
