//! FRAS: a minimal bit-exact raster exchange format.
//!
//! Layout: magic `FRAS`, then `H`, `W`, `C` as little-endian `u32`, then
//! `H·W·C` little-endian IEEE-754 `f32` values, row-major and
//! channel-interleaved.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Raster;

pub const MAGIC: &[u8; 4] = b"FRAS";
pub const MAX_CHANNELS: u32 = 64;
const HEADER: usize = 16;

/// Raw single-precision raster as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FrasRaster {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f32>,
}

impl FrasRaster {
    pub fn from_raster(r: &Raster) -> Self {
        Self {
            height: r.height() as u32,
            width: r.width() as u32,
            channels: r.channels() as u32,
            data: r.data().iter().map(|&v| v as f32).collect(),
        }
    }

    pub fn to_raster(&self) -> Raster {
        Raster::from_vec(
            self.height as usize,
            self.width as usize,
            self.channels as usize,
            self.data.iter().map(|&v| v as f64).collect(),
        )
        .expect("validated on construction")
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        check_channels(self.channels)?;
        let n = self.height as usize * self.width as usize * self.channels as usize;
        if self.data.len() != n {
            return Err(Error::Fras(format!("payload holds {} values, header implies {n}", self.data.len())));
        }
        let mut out = Vec::with_capacity(HEADER + 4 * n);
        out.extend_from_slice(MAGIC);
        for v in [self.height, self.width, self.channels] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER {
            return Err(Error::Fras(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Fras(format!("bad magic {:?}", String::from_utf8_lossy(&bytes[..4]))));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
        let (height, width, channels) = (word(0), word(1), word(2));
        check_channels(channels)?;
        let n = height as usize * width as usize * channels as usize;
        let expected = HEADER + 4 * n;
        if bytes.len() != expected {
            return Err(Error::Fras(format!("payload is {} bytes, expected {expected}", bytes.len())));
        }
        let data = bytes[HEADER..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }
}

fn check_channels(c: u32) -> Result<()> {
    if !(1..=MAX_CHANNELS).contains(&c) {
        return Err(Error::Fras(format!("channel count {c} outside [1, {MAX_CHANNELS}]")));
    }
    Ok(())
}

pub fn write_fras(raster: &Raster, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = FrasRaster::from_raster(raster).encode()?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_fras(path: impl AsRef<Path>) -> Result<Raster> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FrasRaster::decode(&bytes)?.to_raster())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_raster_size() {
        let bytes = FrasRaster::from_raster(&Raster::zeros(2, 2, 1)).encode().unwrap();
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..4], b"FRAS");
        assert_eq!(&bytes[4..8], &2u32.to_le_bytes());
    }

    #[test]
    fn rejects_bad_input() {
        let mut bytes = FrasRaster::from_raster(&Raster::zeros(2, 2, 1)).encode().unwrap();
        assert!(FrasRaster::decode(&bytes[..31]).is_err());
        bytes[0] = b'X';
        assert!(matches!(FrasRaster::decode(&bytes), Err(Error::Fras(_))));
        let r = FrasRaster {
            height: 1,
            width: 1,
            channels: 65,
            data: vec![0.0; 65],
        };
        assert!(r.encode().is_err());
        let mut bytes = r.clone();
        bytes.channels = 0;
        bytes.data.clear();
        assert!(bytes.encode().is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let r = Raster::from_fn(3, 5, 2, |x, y, c| (x + 10 * y) as f64 * 0.25 - c as f64);
        let p = dir.path().join("r.fras");
        write_fras(&r, &p).unwrap();
        assert_eq!(read_fras(&p).unwrap(), r);
    }

    proptest! {
        #[test]
        fn bitwise_round_trip(bits in proptest::collection::vec(any::<u32>(), 12)) {
            // every finite pattern, including signed zeros and subnormals
            let data: Vec<f32> = bits.iter().map(|&b| f32::from_bits(b)).map(|v| if v.is_finite() { v } else { -0.0 }).collect();
            let r = FrasRaster { height: 2, width: 3, channels: 2, data };
            let back = FrasRaster::decode(&r.encode().unwrap()).unwrap();
            prop_assert_eq!(r.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), back.data.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
