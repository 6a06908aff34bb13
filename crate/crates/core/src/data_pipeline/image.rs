use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use super::DataError;

/// Planar RGB image (channel-major, `3×H×W`) with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

pub const CHANNELS: usize = 3;

impl Image {
    pub fn new(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; CHANNELS * height * width] }
    }

    pub fn from_planar(height: usize, width: usize, data: Vec<f32>) -> Self {
        assert_eq!(data.len(), CHANNELS * height * width, "planar buffer size");
        Self { height, width, data }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f32) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.height * self.width..(c + 1) * self.height * self.width]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f32] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn clamp01(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    /// Rounds values to the 8-bit grid a PNG round trip would produce.
    pub fn quantized(&self) -> Self {
        Self {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| to_u8(v) as f32 / 255.0).collect(),
        }
    }

    pub fn to_png_bytes_rgb(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                for c in 0..CHANNELS {
                    out.push(to_u8(self.get(c, y, x)));
                }
            }
        }
        out
    }

    pub fn write_png(&self, path: &Path) -> Result<(), DataError> {
        let file = File::create(path).map_err(|e| DataError::io(path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), self.width as u32, self.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().map_err(|e| DataError::Png(path.display().to_string(), e.to_string()))?;
        writer
            .write_image_data(&self.to_png_bytes_rgb())
            .map_err(|e| DataError::Png(path.display().to_string(), e.to_string()))?;
        Ok(())
    }

    /// Reads an 8-bit RGB, RGBA, gray or gray-alpha PNG.
    pub fn read_png(path: &Path) -> Result<Self, DataError> {
        let file = File::open(path).map_err(|e| DataError::io(path, e))?;
        let png_err = |e: png::DecodingError| DataError::Png(path.display().to_string(), e.to_string());
        let mut decoder = png::Decoder::new(file);
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder.read_info().map_err(png_err)?;
        let mut buf = vec![0; reader.output_buffer_size()];
        let info = reader.next_frame(&mut buf).map_err(png_err)?;
        let (w, h) = (info.width as usize, info.height as usize);
        let stride = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            other => return Err(DataError::Png(path.display().to_string(), format!("unsupported colour type {other:?}"))),
        };
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                let px = &buf[(y * w + x) * stride..];
                for c in 0..CHANNELS {
                    let v = if stride >= 3 { px[c] } else { px[0] };
                    img.set(c, y, x, v as f32 / 255.0);
                }
            }
        }
        Ok(img)
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Peak signal-to-noise ratio in dB for unit-range images. Identical images
/// give `f64::INFINITY`.
pub fn psnr(a: &Image, b: &Image) -> f64 {
    assert_eq!((a.height, a.width), (b.height, b.width), "psnr size mismatch");
    let mse = a.data.iter().zip(&b.data).map(|(&x, &y)| ((x - y) as f64).powi(2)).sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_is_quantisation() {
        let mut img = Image::new(5, 7);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i as f32 * 0.013) % 1.0;
        }
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        img.write_png(&p).unwrap();
        let back = Image::read_png(&p).unwrap();
        assert_eq!(back, img.quantized());
    }

    #[test]
    fn psnr_values() {
        let a = Image::new(4, 4);
        let mut b = a.clone();
        assert_eq!(psnr(&a, &b), f64::INFINITY);
        b.data_mut().fill(0.1);
        assert!((psnr(&a, &b) - 20.0).abs() < 1e-4);
    }
}
