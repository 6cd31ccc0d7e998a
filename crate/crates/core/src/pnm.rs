//! Minimal Netpbm (PBM/PGM) reader and 8-bit PGM writer.

use std::io::Write;

use crate::error::{format_err, Result};

/// Upper bound on decoded pixel count.
pub const MAX_PIXELS: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    /// Row-major samples. For bitmaps 1 = black.
    pub data: Vec<u16>,
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn skip_ws_and_comments(&mut self) {
        while self.pos < self.buf.len() {
            match self.buf[self.pos] {
                b'#' => {
                    while self.pos < self.buf.len() && self.buf[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self) -> Result<usize> {
        self.skip_ws_and_comments();
        let start = self.pos;
        while self.pos < self.buf.len() && self.buf[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(format_err("pnm", "expected a decimal number"));
        }
        std::str::from_utf8(&self.buf[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err("pnm", "number out of range"))
    }

    /// Single ASCII bit for P1, which need not be whitespace separated.
    fn bit(&mut self) -> Result<u16> {
        self.skip_ws_and_comments();
        match self.buf.get(self.pos) {
            Some(b'0') => {
                self.pos += 1;
                Ok(0)
            }
            Some(b'1') => {
                self.pos += 1;
                Ok(1)
            }
            _ => Err(format_err("pnm", "expected bitmap digit")),
        }
    }
}

pub fn parse(buf: &[u8]) -> Result<GrayImage> {
    if buf.len() < 2 || buf[0] != b'P' {
        return Err(format_err("pnm", "missing magic"));
    }
    let kind = buf[1];
    if !matches!(kind, b'1' | b'2' | b'4' | b'5') {
        return Err(format_err("pnm", format!("unsupported type P{}", kind as char)));
    }
    let mut cur = Cursor { buf, pos: 2 };
    let width = cur.number()?;
    let height = cur.number()?;
    let count = width
        .checked_mul(height)
        .filter(|&c| c <= MAX_PIXELS)
        .ok_or_else(|| format_err("pnm", "image too large"))?;
    if count == 0 {
        return Err(format_err("pnm", "empty image"));
    }
    let maxval = if matches!(kind, b'2' | b'5') {
        let m = cur.number()?;
        if m == 0 || m > u16::MAX as usize {
            return Err(format_err("pnm", "maxval must be in 1..=65535"));
        }
        m as u16
    } else {
        1
    };

    let mut data = Vec::with_capacity(count);
    match kind {
        b'1' => {
            for _ in 0..count {
                data.push(cur.bit()?);
            }
        }
        b'2' => {
            for _ in 0..count {
                let v = cur.number()?;
                if v > maxval as usize {
                    return Err(format_err("pnm", "sample exceeds maxval"));
                }
                data.push(v as u16);
            }
        }
        _ => {
            // exactly one whitespace byte separates header and raster
            if cur.pos >= buf.len() || !buf[cur.pos].is_ascii_whitespace() {
                return Err(format_err("pnm", "missing raster separator"));
            }
            let raster = &buf[cur.pos + 1..];
            if kind == b'4' {
                let stride = width.div_ceil(8);
                if raster.len() < stride * height {
                    return Err(format_err("pnm", "truncated bitmap raster"));
                }
                for r in 0..height {
                    for c in 0..width {
                        let byte = raster[r * stride + c / 8];
                        data.push(u16::from((byte >> (7 - c % 8)) & 1));
                    }
                }
            } else {
                let wide = maxval > 255;
                let need = if wide { 2 * count } else { count };
                if raster.len() < need {
                    return Err(format_err("pnm", "truncated graymap raster"));
                }
                for i in 0..count {
                    let v = if wide {
                        u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]])
                    } else {
                        u16::from(raster[i])
                    };
                    if v > maxval {
                        return Err(format_err("pnm", "sample exceeds maxval"));
                    }
                    data.push(v);
                }
            }
        }
    }
    Ok(GrayImage {
        width,
        height,
        maxval,
        data,
    })
}

/// Writes `pixels` as binary 8-bit PGM, scaled so the maximum maps to 255.
pub fn write_pgm<W: Write>(mut out: W, width: usize, height: usize, pixels: &[f64]) -> Result<()> {
    assert_eq!(pixels.len(), width * height);
    let max = pixels.iter().copied().fold(0.0f64, f64::max);
    let scale = if max > 0.0 { 255.0 / max } else { 0.0 };
    write!(out, "P5\n{width} {height}\n255\n")?;
    let raster: Vec<u8> = pixels
        .iter()
        .map(|&p| (p.max(0.0) * scale).round().min(255.0) as u8)
        .collect();
    out.write_all(&raster)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ascii_formats() {
        let img = parse(b"P1\n# comment\n3 2\n0 1 0\n1 1 0\n").unwrap();
        assert_eq!(img.data, vec![0, 1, 0, 1, 1, 0]);
        let packed = parse(b"P1 3 2 010110").unwrap();
        assert_eq!(packed.data, img.data);
        let g = parse(b"P2 2 2 15 0 15 7 3").unwrap();
        assert_eq!((g.maxval, g.data), (15, vec![0, 15, 7, 3]));
    }

    #[test]
    fn binary_formats() {
        let pbm = [b"P4\n10 1\n".as_slice(), &[0b1000_0001, 0b0100_0000]].concat();
        let img = parse(&pbm).unwrap();
        assert_eq!(img.data, vec![1, 0, 0, 0, 0, 0, 0, 1, 0, 1]);
        let mut buf = Vec::new();
        write_pgm(&mut buf, 2, 2, &[0.0, 0.5, 1.0, 0.25]).unwrap();
        let back = parse(&buf).unwrap();
        assert_eq!(back.data, vec![0, 128, 255, 64]);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse(b"").is_err());
        assert!(parse(b"P6 1 1 255 abc").is_err());
        assert!(parse(b"P5 2 2 255\n\x00").is_err());
        assert!(parse(b"P2 1 1 3 9").is_err());
        assert!(parse(b"P5 99999999 99999999 255\n").is_err());
        assert!(parse(b"P2 0 4 3").is_err());
    }
}
