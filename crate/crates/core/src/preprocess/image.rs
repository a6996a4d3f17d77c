//! 8-bit rasters and binary PNM (P5/P6) I/O.

use std::path::Path;

use crate::error::{MilError, Result};

/// Row-major 8-bit image with interleaved channels (1 = gray, 3 = RGB).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(MilError::Image(format!(
                "{channels} channels; expected 1 or 3"
            )));
        }
        if data.len() != width * height * channels {
            return Err(MilError::Image(format!(
                "data length {} != {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(RasterImage {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn pixel(&self, row: usize, col: usize) -> &[u8] {
        let at = (row * self.width + col) * self.channels;
        &self.data[at..at + self.channels]
    }

    pub fn decode_pnm(bytes: &[u8]) -> Result<Self> {
        let mut pos = 0;
        let magic = next_token(bytes, &mut pos)?;
        let channels = match magic.as_str() {
            "P5" => 1,
            "P6" => 3,
            other => {
                return Err(MilError::Image(format!(
                    "unsupported magic {other:?}; need P5 or P6"
                )))
            }
        };
        let width = parse_num(&next_token(bytes, &mut pos)?)?;
        let height = parse_num(&next_token(bytes, &mut pos)?)?;
        let maxval = parse_num(&next_token(bytes, &mut pos)?)?;
        if maxval == 0 || maxval > 255 {
            return Err(MilError::Image(format!(
                "maxval {maxval}; only 8-bit images are supported"
            )));
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        let need = width * height * channels;
        let raster = bytes
            .get(pos..pos + need)
            .ok_or_else(|| MilError::Image(format!("truncated raster: need {need} bytes")))?;
        RasterImage::new(width, height, channels, raster.to_vec())
    }

    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = format!("{magic}\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn read_pnm(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| MilError::io(path, e))?;
        Self::decode_pnm(&bytes)
    }
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(MilError::Image("truncated header".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
        *pos += 1;
    }
    Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
}

fn parse_num(tok: &str) -> Result<usize> {
    tok.parse()
        .map_err(|_| MilError::Image(format!("bad header number {tok:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pnm_round_trip_with_comment() {
        let img = RasterImage::new(2, 2, 3, (0..12).collect()).unwrap();
        assert_eq!(RasterImage::decode_pnm(&img.encode_pnm()).unwrap(), img);
        let gray = b"P5\n# made by hand\n3 1\n255\n\x00\x80\xff";
        let g = RasterImage::decode_pnm(gray).unwrap();
        assert_eq!((g.width, g.height, g.channels), (3, 1, 1));
        assert_eq!(g.data, vec![0, 128, 255]);
    }

    #[test]
    fn pnm_rejects_bad_input() {
        assert!(RasterImage::decode_pnm(b"P3\n1 1\n255\n0 0 0").is_err());
        assert!(RasterImage::decode_pnm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(RasterImage::decode_pnm(b"P5\n1 1\n65535\n\x00\x00").is_err());
        assert!(RasterImage::new(2, 2, 2, vec![0; 8]).is_err());
    }
}
