//! RGB images, PSNR and binary PPM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Interleaved RGB, row-major, values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn filled(width: usize, height: usize, rgb: [f64; 3]) -> Self {
        Self { width, height, data: rgb.iter().copied().cycle().take(3 * width * height).collect() }
    }

    #[inline]
    pub fn pixel(&self, col: usize, row: usize) -> [f64; 3] {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, col: usize, row: usize, rgb: [f64; 3]) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Rounds every channel to the nearest 8-bit level, so that a PPM round
    /// trip is exact.
    pub fn quantized(&self) -> Image {
        Image { data: self.data.iter().map(|v| quantize(*v) as f64 / 255.0).collect(), ..self.clone() }
    }

    pub fn mse(&self, other: &Image) -> Result<f64> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Shape(format!(
                "{}x{} image vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        if self.data.is_empty() {
            return Err(Error::Empty("image has no pixels".into()));
        }
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(s / self.data.len() as f64)
    }
}

/// Reported for identical images.
pub const PSNR_CAP: f64 = 99.0;

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        PSNR_CAP
    } else {
        (-10.0 * mse.log10()).min(PSNR_CAP)
    }
}

/// `10 log10(1 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(a.mse(b)?))
}

#[inline]
fn quantize(v: f64) -> u8 {
    (v * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Binary P6 with maxval 255.
pub fn write_ppm(img: &Image) -> Vec<u8> {
    let mut out = format!("P6\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.data.iter().map(|v| quantize(*v)));
    out
}

pub fn read_ppm(bytes: &[u8]) -> Result<Image> {
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Image("truncated header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P6" {
        return Err(Error::Image("not a binary PPM (P6)".into()));
    }
    let mut num = |what: &str| -> Result<usize> {
        token()?.parse().map_err(|_| Error::Image(format!("bad {what}")))
    };
    let (w, h, maxval) = (num("width")?, num("height")?, num("maxval")?);
    if maxval != 255 {
        return Err(Error::Image(format!("maxval {maxval} unsupported, expected 255")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    let start = pos + 1;
    let need = 3 * w * h;
    if bytes.len() < start + need {
        return Err(Error::Image(format!("payload holds {} of {need} bytes", bytes.len().saturating_sub(start))));
    }
    let data = bytes[start..start + need].iter().map(|b| *b as f64 / 255.0).collect();
    Ok(Image { width: w, height: h, data })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn psnr_examples() {
        let a = Image::filled(4, 3, [0.0; 3]);
        assert_eq!(psnr(&a, &a).unwrap(), 99.0);
        assert!((psnr(&a, &Image::filled(4, 3, [0.1; 3])).unwrap() - 20.0).abs() < 1e-9);
        assert_eq!(psnr(&a, &Image::filled(4, 3, [1.0; 3])).unwrap(), 0.0);
        assert!(psnr(&a, &Image::filled(3, 4, [0.0; 3])).is_err());
    }

    #[test]
    fn white_pixel_layout() {
        let bytes = write_ppm(&Image::filled(1, 1, [1.0; 3]));
        assert_eq!(bytes, b"P6\n1 1\n255\n\xff\xff\xff".to_vec());
    }

    #[test]
    fn malformed_inputs() {
        assert!(read_ppm(b"P5\n1 1\n255\n\0").is_err());
        assert!(read_ppm(b"P6\n2 2\n255\n\0\0\0").is_err());
        assert!(read_ppm(b"P6\n2").is_err());
        assert!(read_ppm(b"P6\n1 1\n65535\n\0\0\0\0\0\0").is_err());
        let img = read_ppm(b"P6\n# comment\n1 1\n255\n\x00\x80\xff").unwrap();
        assert_eq!(img.pixel(0, 0), [0.0, 128.0 / 255.0, 1.0]);
    }

    proptest! {
        #[test]
        fn round_trip_within_quantization(vals in prop::collection::vec(0.0f64..=1.0, 12)) {
            let img = Image { width: 2, height: 2, data: vals };
            let back = read_ppm(&write_ppm(&img)).unwrap();
            for (a, b) in img.data.iter().zip(&back.data) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-12);
            }
            prop_assert_eq!(read_ppm(&write_ppm(&img.quantized())).unwrap(), img.quantized());
        }
    }
}
