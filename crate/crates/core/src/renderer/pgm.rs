//! Portable graymap (P2 ASCII / P5 binary) reading and writing.
//!
//! Intensities map linearly between `[0, 1]` and `[0, maxval]`. Written files
//! always use `maxval = 255`; values outside `[0, 1]` are clamped.

use std::io::Write;
use std::path::Path;

use super::Image;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// P2
    Ascii,
    /// P5
    Binary,
}

fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn encode_pgm(img: &Image, format: PgmFormat) -> Vec<u8> {
    let magic = match format {
        PgmFormat::Ascii => "P2",
        PgmFormat::Binary => "P5",
    };
    let mut out = format!("{magic}\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    match format {
        PgmFormat::Binary => out.extend(img.data().iter().map(|v| quantize(*v))),
        PgmFormat::Ascii => {
            for row in img.data().chunks(img.width().max(1)) {
                let line: Vec<String> = row.iter().map(|v| quantize(*v).to_string()).collect();
                out.extend_from_slice(line.join(" ").as_bytes());
                out.push(b'\n');
            }
        }
    }
    out
}

pub fn write_pgm(path: impl AsRef<Path>, img: &Image, format: PgmFormat) -> Result<()> {
    let path = path.as_ref();
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&encode_pgm(img, format))
        .map_err(|e| Error::io(path, e))
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|e| match e {
        Error::Image(msg) => Error::parse(path, msg),
        other => other,
    })
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::Image("unexpected end of header".into()));
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::Image("non-ASCII header".into()))
    }

    fn number(&mut self) -> Result<usize> {
        let tok = self.token()?;
        tok.parse()
            .map_err(|_| Error::Image(format!("expected a number, found {tok:?}")))
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    let mut h = Header { bytes, pos: 0 };
    let magic = h.token()?;
    let binary = match magic {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::Image(format!("unsupported magic {other:?}"))),
    };
    let width = h.number()?;
    let height = h.number()?;
    let maxval = h.number()?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Image(format!("maxval {maxval} out of range")));
    }
    let n = width * height;
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates the header from the raster
        let start = h.pos + 1;
        let wide = maxval > 255;
        let need = if wide { 2 * n } else { n };
        let raster = bytes
            .get(start..start + need)
            .ok_or_else(|| Error::Image("truncated raster".into()))?;
        if wide {
            data.extend(
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / scale),
            );
        } else {
            data.extend(raster.iter().map(|b| *b as f64 / scale));
        }
    } else {
        for _ in 0..n {
            let v = h.number()?;
            if v > maxval {
                return Err(Error::Image(format!("sample {v} exceeds maxval {maxval}")));
            }
            data.push(v as f64 / scale);
        }
    }
    Image::from_vec(width, height, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_with_comments() {
        let text = b"P2\n# a comment\n3 2\n# another\n255\n0 255 51\n102 0 255\n";
        let img = decode_pgm(text).unwrap();
        assert_eq!((img.width(), img.height()), (3, 2));
        assert_eq!(img.get(1, 0), 1.0);
        assert_eq!(img.get(2, 0), 0.2);
        assert_eq!(img.get(0, 1), 0.4);
    }

    #[test]
    fn sixteen_bit_binary() {
        let mut bytes = b"P5 2 1 65535\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
        let img = decode_pgm(&bytes).unwrap();
        assert_eq!(img.data(), &[1.0, 0.0]);
    }

    #[test]
    fn malformed_inputs() {
        assert!(decode_pgm(b"P3\n1 1\n255\n0\n").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00\x01").is_err());
        assert!(decode_pgm(b"P2\n2 1\n255\n0 300\n").is_err());
        assert!(decode_pgm(b"P2\n2 1\n").is_err());
    }

    #[test]
    fn values_are_clamped_on_write() {
        let img = Image::from_vec(2, 1, vec![-0.5, 1.7]).unwrap();
        let back = decode_pgm(&encode_pgm(&img, PgmFormat::Binary)).unwrap();
        assert_eq!(back.data(), &[0.0, 1.0]);
    }

    proptest! {
        #[test]
        fn binary_round_trip_is_bit_exact(
            w in 1usize..12,
            h in 1usize..12,
            seed in proptest::collection::vec(0u8..=255, 144),
        ) {
            let data: Vec<f64> = seed[..w * h].iter().map(|v| *v as f64 / 255.0).collect();
            let img = Image::from_vec(w, h, data).unwrap();
            let bytes = encode_pgm(&img, PgmFormat::Binary);
            let back = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(&back, &img);
            prop_assert_eq!(encode_pgm(&back, PgmFormat::Binary), bytes);
            let ascii = decode_pgm(&encode_pgm(&img, PgmFormat::Ascii)).unwrap();
            prop_assert_eq!(ascii, img);
        }
    }
}
