//! Binary file formats: 8-bit PPM/PGM images, `SPTN` tensor files and `SPWT`
//! weight stores. All multi-byte fields are little-endian.
//!
//! ```text
//! SPTN: "SPTN" | version u8 | rank u8 | extents u32 × rank | f32 payload
//! SPWT: "SPWT" | version u8 | entries u32 |
//!       { name_len u32 | name utf-8 | rank u8 | extents u32 × rank | f32 payload }*
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::model::WeightStore;
use crate::spectral::Plane;
use crate::tensor::Tensor;

pub const TENSOR_MAGIC: &[u8; 4] = b"SPTN";
pub const WEIGHTS_MAGIC: &[u8; 4] = b"SPWT";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { expected: u8, found: u8 },

    #[error("truncated input while reading {field}")]
    Truncated { field: String },

    #[error("invalid {field}: {reason}")]
    InvalidField { field: String, reason: String },

    #[error("maxval {0} is not supported (only 255)")]
    BadMaxval(u32),

    #[error("extents of {field} overflow the addressable size")]
    ExtentOverflow { field: String },

    #[error("{0} trailing bytes after the last field")]
    TrailingBytes(usize),

    #[error("pixel value {value} at index {index} is outside [0, 255]")]
    ValueOutOfRange { index: usize, value: f32 },
}

fn truncated(field: impl Into<String>) -> FormatError {
    FormatError::Truncated { field: field.into() }
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> FormatError {
    FormatError::InvalidField {
        field: field.into(),
        reason: reason.into(),
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| truncated(field))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, field: &str) -> Result<u8, FormatError> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &str) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()))
    }

    fn magic(&mut self, expected: &[u8; 4]) -> Result<(), FormatError> {
        let found = self.take(4, "magic")?;
        if found != expected {
            return Err(FormatError::BadMagic {
                expected: String::from_utf8_lossy(expected).into_owned(),
                found: String::from_utf8_lossy(found).into_owned(),
            });
        }
        Ok(())
    }

    fn version(&mut self) -> Result<(), FormatError> {
        let v = self.u8("version")?;
        if v != FORMAT_VERSION {
            return Err(FormatError::UnsupportedVersion {
                expected: FORMAT_VERSION,
                found: v,
            });
        }
        Ok(())
    }

    /// rank, extents and payload of one tensor record.
    fn tensor(&mut self, what: &str) -> Result<Tensor, FormatError> {
        let rank = self.u8(&format!("{what} rank"))? as usize;
        if !(1..=4).contains(&rank) {
            return Err(invalid(format!("{what} rank"), format!("{rank} is outside 1..=4")));
        }
        let mut shape = Vec::with_capacity(rank);
        for i in 0..rank {
            let e = self.u32(&format!("{what} extent {i}"))? as usize;
            if e == 0 {
                return Err(invalid(format!("{what} extent {i}"), "must be at least 1"));
            }
            shape.push(e);
        }
        let bytes = shape
            .iter()
            .try_fold(4usize, |acc, &e| acc.checked_mul(e))
            .ok_or_else(|| FormatError::ExtentOverflow { field: format!("{what} extents") })?;
        let payload = self.take(bytes, &format!("{what} payload"))?;
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor::new(shape, data).expect("extents checked above"))
    }

    fn finish(&self) -> Result<(), FormatError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(FormatError::TrailingBytes(n)),
        }
    }
}

fn push_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.push(t.rank() as u8);
    for &e in t.shape() {
        out.extend_from_slice(&(e as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let mut out = Vec::with_capacity(6 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(TENSOR_MAGIC);
    out.push(FORMAT_VERSION);
    push_tensor(&mut out, t);
    out
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(TENSOR_MAGIC)?;
    r.version()?;
    let t = r.tensor("tensor")?;
    r.finish()?;
    Ok(t)
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_tensor(t))?;
    Ok(())
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_tensor(&fs::read(path)?)?)
}

pub fn encode_weights(store: &WeightStore) -> Vec<u8> {
    let mut out = Vec::with_capacity(9 + 4 * store.total_elements());
    out.extend_from_slice(WEIGHTS_MAGIC);
    out.push(FORMAT_VERSION);
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        push_tensor(&mut out, t);
    }
    out
}

pub fn decode_weights(bytes: &[u8]) -> Result<WeightStore, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(WEIGHTS_MAGIC)?;
    r.version()?;
    let count = r.u32("entry count")?;
    let mut store = WeightStore::new();
    for i in 0..count {
        let len = r.u32(&format!("entry {i} name length"))? as usize;
        let raw = r.take(len, &format!("entry {i} name"))?;
        let name = std::str::from_utf8(raw).map_err(|_| invalid(format!("entry {i} name"), "not valid UTF-8"))?;
        if store.get(name).is_some() {
            return Err(invalid(format!("entry {i} name"), format!("duplicate `{name}`")));
        }
        let t = r.tensor(&format!("entry {i} (`{name}`)"))?;
        store.insert(name, t);
    }
    r.finish()?;
    Ok(store)
}

pub fn write_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_weights(store))?;
    Ok(())
}

pub fn read_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    Ok(decode_weights(&fs::read(path)?)?)
}

/// Parsed Netpbm header of a binary P5/P6 file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PnmHeader {
    pub channels: usize,
    pub width: usize,
    pub height: usize,
}

fn skip_space_and_comments(r: &mut Reader<'_>) {
    while r.pos < r.buf.len() {
        match r.buf[r.pos] {
            b'#' => {
                while r.pos < r.buf.len() && r.buf[r.pos] != b'\n' {
                    r.pos += 1;
                }
            }
            c if c.is_ascii_whitespace() => r.pos += 1,
            _ => break,
        }
    }
}

fn header_number(r: &mut Reader<'_>, field: &str) -> Result<u32, FormatError> {
    skip_space_and_comments(r);
    let start = r.pos;
    while r.pos < r.buf.len() && r.buf[r.pos].is_ascii_digit() {
        r.pos += 1;
    }
    if start == r.pos {
        return Err(if r.pos == r.buf.len() {
            truncated(field)
        } else {
            invalid(field, "expected a decimal number")
        });
    }
    std::str::from_utf8(&r.buf[start..r.pos])
        .unwrap()
        .parse()
        .map_err(|_| invalid(field, "number too large"))
}

fn decode_pnm<'a>(bytes: &'a [u8], magic: &[u8; 2]) -> Result<(PnmHeader, &'a [u8]), FormatError> {
    let mut r = Reader::new(bytes);
    let found = r.take(2, "magic")?;
    if found != magic {
        return Err(FormatError::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(found).into_owned(),
        });
    }
    let width = header_number(&mut r, "width")? as usize;
    let height = header_number(&mut r, "height")? as usize;
    if width == 0 || height == 0 {
        return Err(invalid("dimensions", "width and height must be positive"));
    }
    let maxval = header_number(&mut r, "maxval")?;
    if maxval != 255 {
        return Err(FormatError::BadMaxval(maxval));
    }
    match r.u8("header terminator")? {
        c if c.is_ascii_whitespace() => {}
        _ => return Err(invalid("header terminator", "expected one whitespace byte after maxval")),
    }
    let channels = if magic == b"P6" { 3 } else { 1 };
    let len = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| FormatError::ExtentOverflow { field: "dimensions".into() })?;
    let payload = r.take(len, "pixel data")?;
    r.finish()?;
    Ok((PnmHeader { channels, width, height }, payload))
}

/// Decodes a binary PPM (P6, maxval 255) into a `1×3×H×W` tensor in `[0, 1]`.
pub fn decode_ppm(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let (hdr, px) = decode_pnm(bytes, b"P6")?;
    let hw = hdr.width * hdr.height;
    let mut data = vec![0.0f32; 3 * hw];
    for (i, rgb) in px.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * hw + i] = rgb[c] as f32 / 255.0;
        }
    }
    Ok(Tensor::new(vec![1, 3, hdr.height, hdr.width], data).expect("consistent extents"))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Tensor> {
    Ok(decode_ppm(&fs::read(path)?)?)
}

/// Decodes a binary PGM (P5, maxval 255) into a plane of raw byte values.
pub fn decode_pgm(bytes: &[u8]) -> Result<Plane, FormatError> {
    let (hdr, px) = decode_pnm(bytes, b"P5")?;
    Ok(Plane {
        h: hdr.height,
        w: hdr.width,
        data: px.iter().map(|&b| b as f32).collect(),
    })
}

pub fn load_pgm(path: impl AsRef<Path>) -> Result<Plane> {
    Ok(decode_pgm(&fs::read(path)?)?)
}

fn quantize(index: usize, v: f32) -> Result<u8, FormatError> {
    if !(0.0..=255.0).contains(&v) {
        return Err(FormatError::ValueOutOfRange { index, value: v });
    }
    Ok(v.round() as u8)
}

/// Encodes a plane with values in `[0, 255]` as binary PGM, rounding to nearest.
pub fn encode_pgm(p: &Plane) -> Result<Vec<u8>, FormatError> {
    let mut out = format!("P5\n{} {}\n255\n", p.w, p.h).into_bytes();
    for (i, &v) in p.data.iter().enumerate() {
        out.push(quantize(i, v)?);
    }
    Ok(out)
}

pub fn save_pgm(p: &Plane, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_pgm(p)?)?;
    Ok(())
}

/// Encodes a `1×3×H×W` tensor with values in `[0, 255]` as binary PPM.
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let (n, c, h, w) = image.dims4()?;
    if n != 1 || c != 3 {
        return Err(crate::error::Error::InvalidShape {
            shape: image.shape().to_vec(),
            reason: "PPM export expects a 1×3×H×W image".into(),
        });
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let hw = h * w;
    for i in 0..hw {
        for ch in 0..3 {
            out.push(quantize(ch * hw + i, image.data()[ch * hw + i])?);
        }
    }
    Ok(out)
}

pub fn save_ppm(image: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(image)?)?;
    Ok(())
}

/// Scales a `[0, 1]` image to `[0, 255]`, clamping anything outside.
pub fn to_byte_range(image: &Tensor) -> Tensor {
    image.map(|v| (v * 255.0).clamp(0.0, 255.0))
}
