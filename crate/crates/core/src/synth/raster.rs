//! 8-bit grayscale rasters, binary PGM I/O and difference images.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Grayscale image stored as 8-bit levels; intensity is `level / 255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Raster {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Raster {
    pub fn blank(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width * height],
        }
    }

    pub fn from_levels(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Domain(format!(
                "{} pixels for a {width}x{height} raster",
                pixels.len()
            )));
        }
        Ok(Self { width, height, pixels })
    }

    /// Quantizes intensities in `[0, 1]` (clamped) to the nearest level.
    pub fn from_intensities(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        let pixels = values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        Self::from_levels(width, height, pixels)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn levels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn level(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    pub fn intensity(&self, x: usize, y: usize) -> f64 {
        self.level(x, y) as f64 / 255.0
    }

    pub fn intensities(&self) -> Vec<f64> {
        self.pixels.iter().map(|&v| v as f64 / 255.0).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.pixels.iter().filter(|&&v| v > 0).count()
    }

    /// Pixel-wise `|self - other|`.
    pub fn abs_diff(&self, other: &Raster) -> Result<Raster> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Domain(format!(
                "raster sizes differ: {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        let pixels = self
            .pixels
            .iter()
            .zip(&other.pixels)
            .map(|(a, b)| a.abs_diff(*b))
            .collect();
        Ok(Raster { pixels, ..*self })
    }

    pub fn write_pgm<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        write!(w, "P5\n{} {}\n255\n", self.width, self.height)?;
        w.write_all(&self.pixels)
    }

    pub fn read_pgm<R: Read>(r: &mut R) -> std::result::Result<Self, String> {
        let mut data = Vec::new();
        r.read_to_end(&mut data).map_err(|e| e.to_string())?;
        let mut pos = 0;
        let mut token = || -> std::result::Result<String, String> {
            loop {
                while pos < data.len() && data[pos].is_ascii_whitespace() {
                    pos += 1;
                }
                if pos < data.len() && data[pos] == b'#' {
                    while pos < data.len() && data[pos] != b'\n' {
                        pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err("truncated header".into());
            }
            Ok(String::from_utf8_lossy(&data[start..pos]).into_owned())
        };
        if token()? != "P5" {
            return Err("not a binary PGM (P5)".into());
        }
        let parse = |s: String| s.parse::<usize>().map_err(|e| format!("bad header field `{s}`: {e}"));
        let width = parse(token()?)?;
        let height = parse(token()?)?;
        let maxval = parse(token()?)?;
        if maxval != 255 {
            return Err(format!("unsupported maxval {maxval}"));
        }
        // Exactly one whitespace byte separates the header from the pixels.
        let body = pos + 1;
        if data.len() != body + width * height {
            return Err(format!(
                "expected {} pixel bytes, found {}",
                width * height,
                data.len().saturating_sub(body)
            ));
        }
        Ok(Self {
            width,
            height,
            pixels: data[body..].to_vec(),
        })
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(f);
        self.write_pgm(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_pgm(&mut BufReader::new(f)).map_err(|reason| Error::format(path, reason))
    }
}

/// Difference images of consecutive steps; the step before the first is blank.
pub fn diff_image(steps: &[Raster]) -> Result<Vec<Raster>> {
    let Some(first) = steps.first() else {
        return Err(Error::Domain("no steps to difference".into()));
    };
    let mut prev = Raster::blank(first.width, first.height);
    let mut out = Vec::with_capacity(steps.len());
    for s in steps {
        out.push(prev.abs_diff(s)?);
        prev = s.clone();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_round_trip() {
        let r = Raster::from_levels(3, 2, vec![0, 10, 255, 32, 9, 13]).unwrap();
        let mut buf = Vec::new();
        r.write_pgm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(Raster::read_pgm(&mut buf.as_slice()).unwrap(), r);
    }

    #[test]
    fn pgm_with_comment() {
        let mut data = b"P5\n# made by hand\n2 1\n255\n".to_vec();
        data.extend_from_slice(&[7, 9]);
        let r = Raster::read_pgm(&mut data.as_slice()).unwrap();
        assert_eq!(r.levels(), &[7, 9]);
    }

    #[test]
    fn diff_rules() {
        let a = Raster::from_levels(2, 1, vec![100, 0]).unwrap();
        let b = Raster::from_levels(2, 1, vec![40, 200]).unwrap();
        let d = diff_image(&[a.clone(), b.clone(), b.clone()]).unwrap();
        assert_eq!(d[0], a);
        assert_eq!(d[1].levels(), &[60, 200]);
        assert_eq!(d[2].nonzero_count(), 0);
        assert!(diff_image(&[a, Raster::blank(1, 1)]).is_err());
    }
}
