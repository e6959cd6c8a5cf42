//! Binary Netpbm codecs: PGM (`P5`, 8-bit) and PBM (`P4`).
//!
//! Writers emit `magic\n[# comment\n]width height\n[maxval\n]` followed by the
//! raster, so output bytes are fully determined by the pixel data.

use crate::error::{Error, Result};

/// Grayscale raster with 8-bit samples, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

pub fn encode_pgm(img: &GrayImage, comment: Option<&str>) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.pixels.len() + 64);
    out.extend_from_slice(b"P5\n");
    push_comment(&mut out, comment);
    out.extend_from_slice(format!("{} {}\n255\n", img.width, img.height).as_bytes());
    out.extend_from_slice(&img.pixels);
    out
}

/// Encodes a bit mask, `true` stored as 1 (black).
pub fn encode_pbm(width: usize, height: usize, bits: &[bool], comment: Option<&str>) -> Vec<u8> {
    assert_eq!(bits.len(), width * height, "mask size mismatch");
    let mut out = Vec::new();
    out.extend_from_slice(b"P4\n");
    push_comment(&mut out, comment);
    out.extend_from_slice(format!("{width} {height}\n").as_bytes());
    let row_bytes = width.div_ceil(8);
    for row in bits.chunks(width) {
        let mut packed = vec![0u8; row_bytes];
        for (x, &b) in row.iter().enumerate() {
            if b {
                packed[x / 8] |= 0x80 >> (x % 8);
            }
        }
        out.extend_from_slice(&packed);
    }
    out
}

fn push_comment(out: &mut Vec<u8>, comment: Option<&str>) {
    if let Some(c) = comment {
        for line in c.lines() {
            out.extend_from_slice(b"# ");
            out.extend_from_slice(line.as_bytes());
            out.push(b'\n');
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.pos < self.bytes.len() && self.bytes[self.pos] == b'#' {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else {
                return;
            }
        }
    }

    fn number(&mut self, kind: &'static str) -> Result<usize> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::format(kind, format!("expected a number at byte {start}")))
    }

    /// Consumes the single whitespace byte that separates header and raster.
    fn end(&mut self, kind: &'static str) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(Error::format(kind, "missing whitespace before raster")),
        }
    }
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    const KIND: &str = "PGM";
    if !bytes.starts_with(b"P5") {
        return Err(Error::format(KIND, "missing P5 magic"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number(KIND)?;
    let height = h.number(KIND)?;
    let maxval = h.number(KIND)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::format(KIND, format!("unsupported maxval {maxval}")));
    }
    let start = h.end(KIND)?;
    let len = width * height;
    if bytes.len() < start + len {
        return Err(Error::format(KIND, "truncated raster"));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: bytes[start..start + len].to_vec(),
    })
}

/// Returns `(width, height, bits)`.
pub fn decode_pbm(bytes: &[u8]) -> Result<(usize, usize, Vec<bool>)> {
    const KIND: &str = "PBM";
    if !bytes.starts_with(b"P4") {
        return Err(Error::format(KIND, "missing P4 magic"));
    }
    let mut h = Header { bytes, pos: 2 };
    let width = h.number(KIND)?;
    let height = h.number(KIND)?;
    let start = h.end(KIND)?;
    let row_bytes = width.div_ceil(8);
    if bytes.len() < start + row_bytes * height {
        return Err(Error::format(KIND, "truncated raster"));
    }
    let mut bits = Vec::with_capacity(width * height);
    for y in 0..height {
        let row = &bytes[start + y * row_bytes..start + (y + 1) * row_bytes];
        for x in 0..width {
            bits.push(row[x / 8] & (0x80 >> (x % 8)) != 0);
        }
    }
    Ok((width, height, bits))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_bytes_are_exact() {
        let img = GrayImage {
            width: 2,
            height: 1,
            pixels: vec![0, 255],
        };
        assert_eq!(encode_pgm(&img, None), b"P5\n2 1\n255\n\x00\xff".to_vec());
        let with_comment = encode_pgm(&img, Some("scale 1.5"));
        assert_eq!(with_comment, b"P5\n# scale 1.5\n2 1\n255\n\x00\xff".to_vec());
        assert_eq!(decode_pgm(&with_comment).unwrap(), img);
    }

    #[test]
    fn pbm_packs_msb_first() {
        let bits = [true, false, false, false, false, false, false, false, true, true];
        let enc = encode_pbm(10, 1, &bits, None);
        assert_eq!(enc, b"P4\n10 1\n\x80\xc0".to_vec());
        assert_eq!(decode_pbm(&enc).unwrap(), (10, 1, bits.to_vec()));
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode_pgm(b"P6\n1 1\n255\n\x00").is_err());
        assert!(decode_pgm(b"P5\n4 4\n255\n\x00").is_err());
        assert!(decode_pbm(b"P4\nx").is_err());
    }

    #[test]
    fn accepts_foreign_comments() {
        let img = decode_pgm(b"P5 # gimp\n# another\n1 1 255\n\x07").unwrap();
        assert_eq!(img.pixels, vec![7]);
    }
}
