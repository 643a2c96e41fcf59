//! KTEN: a small little-endian container for complex 4-D tensors.
//!
//! ```text
//! b"KTEN0001" | header_len: u32 LE | header: UTF-8 JSON | payload
//! ```
//!
//! The header is `{"dims": [Nkx, Nky, NRx, NTx], "dtype": "c64" | "c128",
//! "order": "kx-fastest", "meta": {...}}`. The payload holds interleaved
//! `(re, im)` pairs with `kx` varying fastest, then `ky`, `rx`, `tx`. `c64`
//! stores two `f32` per element, `c128` two `f64`.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array3, Array4, ShapeBuilder};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::sampling::SamplingMask;
use crate::tensor::KSpaceTensor;
use crate::C64;

pub const MAGIC: &[u8; 8] = b"KTEN0001";
const ORDER: &str = "kx-fastest";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    C64,
    #[default]
    C128,
}

impl Dtype {
    /// Bytes per real component.
    pub fn component_size(&self) -> usize {
        match self {
            Dtype::C64 => 4,
            Dtype::C128 => 8,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "c64" => Ok(Dtype::C64),
            "c128" => Ok(Dtype::C128),
            other => Err(Error::UnknownDtype(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct KtenHeader {
    pub dims: [usize; 4],
    pub dtype: Dtype,
    pub order: String,
    #[serde(default)]
    pub meta: Map<String, Value>,
}

/// Encodes `t` as KTEN bytes.
pub fn encode(t: &KSpaceTensor, dtype: Dtype, meta: &Map<String, Value>) -> Result<Vec<u8>> {
    let (a, b, c, d) = t.dims();
    let header = KtenHeader {
        dims: [a, b, c, d],
        dtype,
        order: ORDER.into(),
        meta: meta.clone(),
    };
    let json = serde_json::to_vec(&header)?;
    let header_len = u32::try_from(json.len()).map_err(|_| Error::Header("header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(12 + json.len() + 2 * dtype.component_size() * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&json);
    // Fortran order puts kx fastest
    for v in t.data().t().iter() {
        match dtype {
            Dtype::C64 => {
                out.extend_from_slice(&(v.re as f32).to_le_bytes());
                out.extend_from_slice(&(v.im as f32).to_le_bytes());
            }
            Dtype::C128 => {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
    }
    Ok(out)
}

/// Decodes KTEN bytes; `path` is only used in error messages.
pub fn decode(bytes: &[u8], path: &Path) -> Result<(KSpaceTensor, KtenHeader)> {
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(Error::BadMagic { path: path.to_path_buf() });
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = &bytes[12..];
    if body.len() < header_len {
        return Err(Error::Header(format!(
            "header length {header_len} exceeds remaining {} bytes",
            body.len()
        )));
    }
    let raw: Value = serde_json::from_slice(&body[..header_len])?;
    let dtype = raw
        .get("dtype")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Header("missing dtype".into()))?;
    Dtype::parse(dtype)?;
    let header: KtenHeader = serde_json::from_value(raw)?;
    if header.order != ORDER {
        return Err(Error::Header(format!("unsupported order {:?}", header.order)));
    }
    if header.dims.contains(&0) {
        return Err(Error::Header(format!("zero dimension in {:?}", header.dims)));
    }
    let count: usize = header.dims.iter().product();
    let cs = header.dtype.component_size();
    let payload = &body[header_len..];
    let expected = 2 * cs * count;
    if payload.len() != expected {
        return Err(Error::LengthMismatch {
            expected,
            found: payload.len(),
        });
    }
    let values: Vec<C64> = payload
        .chunks_exact(2 * cs)
        .map(|c| match header.dtype {
            Dtype::C64 => C64::new(
                f32::from_le_bytes(c[..4].try_into().expect("4 bytes")) as f64,
                f32::from_le_bytes(c[4..].try_into().expect("4 bytes")) as f64,
            ),
            Dtype::C128 => C64::new(
                f64::from_le_bytes(c[..8].try_into().expect("8 bytes")),
                f64::from_le_bytes(c[8..].try_into().expect("8 bytes")),
            ),
        })
        .collect();
    let [a, b, c, d] = header.dims;
    let arr = Array4::from_shape_vec((a, b, c, d).f(), values)
        .map_err(|e| Error::Header(e.to_string()))?;
    // normalize to the default memory layout
    let arr = Array4::from_shape_fn(arr.dim(), |i| arr[i]);
    Ok((KSpaceTensor::from_array(arr)?, header))
}

pub fn write_kten(t: &KSpaceTensor, path: impl AsRef<Path>, meta: &Map<String, Value>) -> Result<()> {
    write_kten_as(t, path, Dtype::C128, meta)
}

pub fn write_kten_as(
    t: &KSpaceTensor,
    path: impl AsRef<Path>,
    dtype: Dtype,
    meta: &Map<String, Value>,
) -> Result<()> {
    let bytes = encode(t, dtype, meta)?;
    let mut f = fs::File::create(path.as_ref())?;
    f.write_all(&bytes)?;
    f.flush()?;
    Ok(())
}

pub fn read_kten(path: impl AsRef<Path>) -> Result<(KSpaceTensor, KtenHeader)> {
    let path = path.as_ref();
    decode(&fs::read(path)?, path)
}

/// Writes a mask as a real 0/1 tensor of dims `[Nkx, Nky, 1, patterns]`.
/// `R_target`, `R_achieved` and `seed` are recorded in the header next to
/// `meta`.
pub fn write_mask(mask: &SamplingMask, path: impl AsRef<Path>, meta: &Map<String, Value>) -> Result<()> {
    let (nkx, nky) = mask.dims();
    let bits = mask.bits();
    let t = KSpaceTensor::from_fn((nkx, nky, 1, mask.n_patterns()), |(x, y, _, p)| {
        C64::new(if bits[[x, y, p]] { 1.0 } else { 0.0 }, 0.0)
    })?;
    let mut m = meta.clone();
    m.insert("kind".into(), "mask".into());
    m.insert("R_target".into(), mask.r_target().into());
    m.insert("R_achieved".into(), mask.r_achieved().into());
    m.insert("seed".into(), mask.seed().into());
    write_kten(&t, path, &m)
}

/// Reads a mask written by [`write_mask`]; any nonzero entry counts as sampled.
pub fn read_mask(path: impl AsRef<Path>) -> Result<(SamplingMask, KtenHeader)> {
    let (t, header) = read_kten(path)?;
    let (nkx, nky, nrx, np) = t.dims();
    if nrx != 1 {
        return Err(Error::Header(format!("mask must have a singleton third axis, got {nrx}")));
    }
    let bits = Array3::from_shape_fn((nkx, nky, np), |(x, y, p)| t[[x, y, 0, p]].norm() != 0.0);
    let seed = header.meta.get("seed").and_then(Value::as_u64).unwrap_or(0);
    let sampled = bits.iter().filter(|&&b| b).count().max(1);
    let r_target = header
        .meta
        .get("R_target")
        .and_then(Value::as_f64)
        .unwrap_or(bits.len() as f64 / sampled as f64);
    Ok((SamplingMask::from_bits(bits, r_target, seed)?, header))
}
