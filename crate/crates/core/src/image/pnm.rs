//! Netpbm grayscale (P2/P5) and color (P3/P6) readers, maxval 255 only, and
//! a binary PGM writer.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::MissingFile(path.to_path_buf()))
        }
        Err(e) => return Err(e.into()),
    };
    decode(&bytes)
}

/// Decodes an in-memory PGM/PPM file to grayscale.
pub fn decode(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || bytes[0] != b'P' {
        return Err(Error::UnsupportedFormat("not a netpbm file".into()));
    }
    let (channels, binary) = match bytes[1] {
        b'2' => (1, false),
        b'5' => (1, true),
        b'3' => (3, false),
        b'6' => (3, true),
        other => {
            return Err(Error::UnsupportedFormat(format!(
                "netpbm variant P{}",
                other as char
            )))
        }
    };
    let mut cursor = Header { bytes, pos: 2 };
    let width = cursor.number("width")?;
    let height = cursor.number("height")?;
    let maxval = cursor.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::MalformedHeader(format!(
            "zero dimension {width}x{height}"
        )));
    }
    if maxval != 255 {
        return Err(Error::UnsupportedFormat(format!("maxval {maxval}")));
    }
    let n = width
        .checked_mul(height)
        .and_then(|p| p.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;

    let samples: Vec<u8> = if binary {
        // Exactly one whitespace byte separates the header from the raster.
        let start = cursor.pos + 1;
        let raster = bytes
            .get(start..start + n)
            .ok_or_else(|| Error::Malformed(format!("raster truncated, expected {n} bytes")))?;
        raster.to_vec()
    } else {
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let v = cursor
                .number("sample")
                .map_err(|_| Error::Malformed(format!("expected {n} ASCII samples")))?;
            if v > 255 {
                return Err(Error::Malformed(format!("sample {v} exceeds maxval")));
            }
            out.push(v as u8);
        }
        out
    };

    let data = if channels == 1 {
        samples.iter().map(|&v| v as f64 / 255.0).collect()
    } else {
        samples
            .chunks_exact(3)
            .map(|px| {
                let l: f64 = px.iter().zip(LUMA).map(|(&c, w)| c as f64 * w).sum();
                (l / 255.0).clamp(0.0, 1.0)
            })
            .collect()
    };
    Image::new(width, height, data)
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    if c == b'\n' {
                        break;
                    }
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(u8::is_ascii_digit) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedHeader(format!("invalid {what}")))
    }
}

/// Writes a binary (P5) PGM, quantizing intensities to 8 bits.
pub fn save_pgm(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let mut out = Vec::with_capacity(img.data().len() + 32);
    write!(out, "P5\n{} {}\n255\n", img.width(), img.height())?;
    out.extend(
        img.data()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_gray_max_value() {
        let mut f = b"P5\n2 2\n255\n".to_vec();
        f.extend([255u8; 4]);
        let img = decode(&f).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert!(img.data().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn ascii_gray_zero_with_comments() {
        let img = decode(b"P2\n# a comment\n1 1 # trailing\n255\n0\n").unwrap();
        assert_eq!(img, Image::new(1, 1, vec![0.0]).unwrap());
    }

    #[test]
    fn color_uses_luma_weights() {
        let mut f = b"P6 1 1 255\n".to_vec();
        f.extend([255u8, 0, 0]);
        let img = decode(&f).unwrap();
        assert!((img.get(0, 0) - 0.299).abs() < 1e-12);

        let img = decode(b"P3 1 1 255 0 255 0").unwrap();
        assert!((img.get(0, 0) - 0.587).abs() < 1e-12);
    }

    #[test]
    fn distinct_errors() {
        assert!(matches!(
            load_image("/definitely/not/here.pgm"),
            Err(Error::MissingFile(_))
        ));
        assert!(matches!(decode(b"P5\n2\n"), Err(Error::MalformedHeader(_))));
        assert!(matches!(decode(b"P4\n2 2\n"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(decode(b"GIF89a"), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(
            decode(b"P5 1 1 65535\n\0\0"),
            Err(Error::UnsupportedFormat(_))
        ));
        assert!(matches!(decode(b"P5 2 2 255\n\0"), Err(Error::Malformed(_))));
    }

    #[test]
    fn pgm_round_trip() {
        let img = Image::from_fn(7, 5, |x, y| ((x * 31 + y * 17) % 256) as f64 / 255.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.pgm");
        save_pgm(&img, &p).unwrap();
        assert_eq!(load_image(&p).unwrap(), img);
    }
}
