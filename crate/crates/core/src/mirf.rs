//! A small binary container for spectrograms and trained weights.
//!
//! Both file flavors share a four-byte magic, a version byte, and a block
//! kind byte (`0` spectrogram, `1` parameter set). All integers are
//! little-endian; all numeric payloads are stored as `f32`, so values
//! round-trip through single precision by design.
//!
//! Spectrogram block:
//! `spec-kind u8 | F u32 | T u32 | sample-rate u32 | has-freqs u8 |`
//! `[freqs f32 * F] | values f32 * (F*T)` (row-major, one row per bin).
//!
//! Parameter block: `n-entries u32`, then per entry
//! `layer-kind u8 | n-arrays u8 | { ndim u8 | dims u32 * ndim | data f32 }*`.

use crate::array::Array;
use crate::error::{Error, Result};
use crate::timefreq::{SpecKind, Spectrogram};
use std::fs;
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"MIRF";
pub const VERSION: u8 = 1;

const BLOCK_SPECTROGRAM: u8 = 0;
const BLOCK_PARAMS: u8 = 1;

/// What kind of layer a parameter entry belongs to; stored with the arrays
/// so a loader can cross-check the model it is filling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamBlockKind {
    Dense,
    Conv,
    Recurrent,
}

impl ParamBlockKind {
    pub fn code(&self) -> u8 {
        match self {
            ParamBlockKind::Dense => 10,
            ParamBlockKind::Conv => 11,
            ParamBlockKind::Recurrent => 12,
        }
    }

    pub fn from_code(code: u8) -> Result<ParamBlockKind> {
        match code {
            10 => Ok(ParamBlockKind::Dense),
            11 => Ok(ParamBlockKind::Conv),
            12 => Ok(ParamBlockKind::Recurrent),
            other => Err(Error::Format(format!("unknown parameter entry kind {other}"))),
        }
    }
}

/// One layer's worth of weight arrays.
#[derive(Debug, Clone)]
pub struct ParamBlock {
    pub kind: ParamBlockKind,
    pub arrays: Vec<Array>,
}

// --- encoding ---

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn header(block: u8) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(block);
    out
}

pub fn encode_spectrogram(spec: &Spectrogram) -> Vec<u8> {
    let mut out = header(BLOCK_SPECTROGRAM);
    out.push(spec.kind().code());
    put_u32(&mut out, spec.f_bins() as u32);
    put_u32(&mut out, spec.frames() as u32);
    put_u32(&mut out, spec.sample_rate());
    out.push(1); // frequencies always included
    for &f in spec.freqs() {
        put_f32(&mut out, f);
    }
    for &v in spec.values().data() {
        put_f32(&mut out, v);
    }
    out
}

pub fn encode_params(blocks: &[ParamBlock]) -> Result<Vec<u8>> {
    let mut out = header(BLOCK_PARAMS);
    put_u32(&mut out, blocks.len() as u32);
    for block in blocks {
        out.push(block.kind.code());
        if block.arrays.len() > u8::MAX as usize {
            return Err(Error::arg("parameter entry holds too many arrays"));
        }
        out.push(block.arrays.len() as u8);
        for array in &block.arrays {
            if array.rank() > u8::MAX as usize {
                return Err(Error::arg("array rank too large to store"));
            }
            out.push(array.rank() as u8);
            for &d in array.shape() {
                if d > u32::MAX as usize {
                    return Err(Error::arg("array dimension too large to store"));
                }
                put_u32(&mut out, d as u32);
            }
            for &v in array.data() {
                put_f32(&mut out, v);
            }
        }
    }
    Ok(out)
}

// --- decoding ---

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8]) -> Reader<'a> {
        Reader { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse(format!("file ends inside {what}")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_vec(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let b = self.take(n * 4, what)?;
        Ok(b.chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect())
    }

    fn done(&self) -> bool {
        self.pos == self.bytes.len()
    }
}

fn check_header(r: &mut Reader, expect_block: u8, flavor: &str) -> Result<()> {
    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Parse(format!("bad magic {magic:02x?}")));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported container version {version}"
        )));
    }
    let block = r.u8("block kind")?;
    if block != expect_block {
        return Err(Error::Format(format!(
            "expected a {flavor} block, found block kind {block}"
        )));
    }
    Ok(())
}

pub fn decode_spectrogram(bytes: &[u8]) -> Result<Spectrogram> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, BLOCK_SPECTROGRAM, "spectrogram")?;
    let kind = SpecKind::from_code(r.u8("spectrogram kind")?)?;
    let f_bins = r.u32("bin count")? as usize;
    let frames = r.u32("frame count")? as usize;
    let sample_rate = r.u32("sample rate")?;
    let freqs = match r.u8("frequency flag")? {
        0 => (0..f_bins).map(|i| i as f64).collect(),
        1 => r.f32_vec(f_bins, "bin frequencies")?,
        other => return Err(Error::Parse(format!("bad frequency flag {other}"))),
    };
    let numel = f_bins
        .checked_mul(frames)
        .ok_or_else(|| Error::Parse("spectrogram dimensions overflow".into()))?;
    let values = r.f32_vec(numel, "spectrogram values")?;
    if !r.done() {
        return Err(Error::Parse("trailing bytes after spectrogram".into()));
    }
    Spectrogram::new(
        Array::new(vec![f_bins, frames], values)?,
        freqs,
        kind,
        sample_rate,
    )
}

pub fn decode_params(bytes: &[u8]) -> Result<Vec<ParamBlock>> {
    let mut r = Reader::new(bytes);
    check_header(&mut r, BLOCK_PARAMS, "parameter")?;
    let n_entries = r.u32("entry count")? as usize;
    let mut blocks = Vec::with_capacity(n_entries.min(1024));
    for _ in 0..n_entries {
        let kind = ParamBlockKind::from_code(r.u8("entry kind")?)?;
        let n_arrays = r.u8("array count")? as usize;
        let mut arrays = Vec::with_capacity(n_arrays);
        for _ in 0..n_arrays {
            let ndim = r.u8("array rank")? as usize;
            let mut shape = Vec::with_capacity(ndim);
            let mut numel = 1usize;
            for _ in 0..ndim {
                let d = r.u32("array dimension")? as usize;
                numel = numel
                    .checked_mul(d)
                    .ok_or_else(|| Error::Parse("array dimensions overflow".into()))?;
                shape.push(d);
            }
            let data = r.f32_vec(numel, "array values")?;
            arrays.push(Array::new(shape, data)?);
        }
        blocks.push(ParamBlock { kind, arrays });
    }
    if !r.done() {
        return Err(Error::Parse("trailing bytes after parameter entries".into()));
    }
    Ok(blocks)
}

// --- file convenience ---

pub fn write_spectrogram(path: impl AsRef<Path>, spec: &Spectrogram) -> Result<()> {
    fs::write(path, encode_spectrogram(spec))?;
    Ok(())
}

pub fn read_spectrogram(path: impl AsRef<Path>) -> Result<Spectrogram> {
    decode_spectrogram(&fs::read(path)?)
}

pub fn write_params(path: impl AsRef<Path>, blocks: &[ParamBlock]) -> Result<()> {
    fs::write(path, encode_params(blocks)?)?;
    Ok(())
}

pub fn read_params(path: impl AsRef<Path>) -> Result<Vec<ParamBlock>> {
    decode_params(&fs::read(path)?)
}
