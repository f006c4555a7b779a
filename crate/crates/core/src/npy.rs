//! NPY container codec for latent tensors and batches.
//!
//! Writes version 1.0 files, little-endian `<f4`/`<f8`, C order, with the
//! header padded so the payload starts on a 64-byte boundary. Rank-4 arrays
//! are read as a batch of one; rank-5 arrays as `(B, T, H, W, C)`. A
//! directory is read as the concatenation of its `*.npy` files in file-name
//! order.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::{Dtype, Scalar};
use crate::tensor::{Dims, LatentBatch, LatentTensor};

pub const MAGIC: &[u8; 6] = b"\x93NUMPY";
const ALIGN: usize = 64;

/// A batch whose element type is only known at run time.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyBatch {
    F32(LatentBatch<f32>),
    F64(LatentBatch<f64>),
}

impl AnyBatch {
    pub fn dtype(&self) -> Dtype {
        match self {
            AnyBatch::F32(_) => Dtype::F32,
            AnyBatch::F64(_) => Dtype::F64,
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            AnyBatch::F32(b) => b.dims(),
            AnyBatch::F64(b) => b.dims(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            AnyBatch::F32(b) => b.len(),
            AnyBatch::F64(b) => b.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> LatentBatch<f64> {
        match self {
            AnyBatch::F32(b) => b.cast(),
            AnyBatch::F64(b) => b.clone(),
        }
    }
}

impl From<LatentBatch<f32>> for AnyBatch {
    fn from(b: LatentBatch<f32>) -> Self {
        AnyBatch::F32(b)
    }
}

impl From<LatentBatch<f64>> for AnyBatch {
    fn from(b: LatentBatch<f64>) -> Self {
        AnyBatch::F64(b)
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Header {
    dtype: Dtype,
    fortran_order: bool,
    shape: Vec<usize>,
}

/// Reads a batch from an NPY file or a directory of NPY files.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<AnyBatch> {
    let path = path.as_ref();
    if path.is_dir() {
        let mut files: Vec<_> = fs::read_dir(path)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "npy"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(Error::Npy(format!("no .npy files in {}", path.display())));
        }
        let parts = files
            .iter()
            .map(|f| decode(&fs::read(f)?))
            .collect::<Result<Vec<_>>>()?;
        concat(parts)
    } else {
        decode(&fs::read(path)?)
    }
}

/// Reads a batch from any byte stream (e.g. stdin).
pub fn read_from(mut reader: impl Read) -> Result<AnyBatch> {
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    decode(&buf)
}

pub fn write_tensor<S: Scalar>(batch: &LatentBatch<S>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode(batch))?;
    Ok(())
}

pub fn write_to<S: Scalar>(batch: &LatentBatch<S>, mut writer: impl Write) -> Result<()> {
    writer.write_all(&encode(batch))?;
    writer.flush()?;
    Ok(())
}

pub fn write_any(batch: &AnyBatch, path: impl AsRef<Path>) -> Result<()> {
    match batch {
        AnyBatch::F32(b) => write_tensor(b, path),
        AnyBatch::F64(b) => write_tensor(b, path),
    }
}

/// Encodes a batch; a batch of one is written as a rank-4 array.
pub fn encode<S: Scalar>(batch: &LatentBatch<S>) -> Vec<u8> {
    let d = batch.dims();
    let mut shape = Vec::with_capacity(5);
    if batch.len() > 1 {
        shape.push(batch.len());
    }
    shape.extend_from_slice(&d.as_array());

    let header = format_header(S::DTYPE, &shape);
    let mut out = Vec::with_capacity(header.len() + batch.len() * d.len() * S::DTYPE.size());
    out.extend_from_slice(&header);
    for item in batch.items() {
        for &x in item.data() {
            x.write_le(&mut out);
        }
    }
    out
}

fn format_header(dtype: Dtype, shape: &[usize]) -> Vec<u8> {
    let shape_str = match shape {
        [n] => format!("({n},)"),
        _ => format!(
            "({})",
            shape.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut dict = format!(
        "{{'descr': '{}', 'fortran_order': False, 'shape': {}, }}",
        dtype.descr(),
        shape_str
    );
    // magic(6) + version(2) + length(2) + dict + '\n'
    let unpadded = 10 + dict.len() + 1;
    let pad = (ALIGN - unpadded % ALIGN) % ALIGN;
    dict.extend(std::iter::repeat_n(' ', pad));
    dict.push('\n');

    let mut out = Vec::with_capacity(10 + dict.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&[1, 0]);
    out.extend_from_slice(&(dict.len() as u16).to_le_bytes());
    out.extend_from_slice(dict.as_bytes());
    out
}

pub fn decode(bytes: &[u8]) -> Result<AnyBatch> {
    let (header, payload) = parse_header(bytes)?;
    match header.dtype {
        Dtype::F32 => decode_payload::<f32>(&header, payload).map(AnyBatch::F32),
        Dtype::F64 => decode_payload::<f64>(&header, payload).map(AnyBatch::F64),
    }
}

fn decode_payload<S: Scalar>(header: &Header, payload: &[u8]) -> Result<LatentBatch<S>> {
    if header.fortran_order {
        return Err(Error::Npy("Fortran-order arrays are not supported".into()));
    }
    let (b, dims) = match header.shape[..] {
        [t, h, w, c] => (1, Dims::new(t, h, w, c)?),
        [b, t, h, w, c] => (b, Dims::new(t, h, w, c)?),
        _ => {
            return Err(Error::Shape(format!(
                "expected rank 4 or 5, got rank {} shape {:?}",
                header.shape.len(),
                header.shape
            )))
        }
    };
    if b == 0 {
        return Err(Error::Shape("batch dimension is zero".into()));
    }
    let size = S::DTYPE.size();
    let expected = b * dims.len() * size;
    if payload.len() != expected {
        return Err(Error::Npy(format!(
            "payload is {} bytes, shape {:?} needs {expected}",
            payload.len(),
            header.shape
        )));
    }
    let items = payload
        .chunks_exact(dims.len() * size)
        .map(|chunk| {
            let data = chunk.chunks_exact(size).map(S::read_le).collect();
            LatentTensor::from_vec(dims, data)
        })
        .collect::<Result<Vec<_>>>()?;
    LatentBatch::new(items)
}

fn parse_header(bytes: &[u8]) -> Result<(Header, &[u8])> {
    if bytes.len() < 10 || &bytes[..6] != MAGIC {
        return Err(Error::Npy("missing NPY magic".into()));
    }
    let (major, minor) = (bytes[6], bytes[7]);
    let (len, start) = match major {
        1 => (u16::from_le_bytes([bytes[8], bytes[9]]) as usize, 10),
        2 | 3 => {
            if bytes.len() < 12 {
                return Err(Error::Npy("truncated header".into()));
            }
            (u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, 12)
        }
        _ => return Err(Error::Npy(format!("unsupported version {major}.{minor}"))),
    };
    let end = start + len;
    if bytes.len() < end {
        return Err(Error::Npy("truncated header".into()));
    }
    let text = std::str::from_utf8(&bytes[start..end])
        .map_err(|_| Error::Npy("header is not valid text".into()))?;
    Ok((parse_dict(text)?, &bytes[end..]))
}

#[derive(Debug, PartialEq)]
enum Value {
    Str(String),
    Bool(bool),
    Tuple(Vec<usize>),
}

/// Parses the Python-literal header dict.
fn parse_dict(text: &str) -> Result<Header> {
    let mut p = DictParser { s: text.as_bytes(), i: 0 };
    let entries = p.dict()?;

    let mut descr = None;
    let mut fortran = None;
    let mut shape = None;
    for (k, v) in entries {
        match (k.as_str(), v) {
            ("descr", Value::Str(s)) => descr = Some(s),
            ("fortran_order", Value::Bool(b)) => fortran = Some(b),
            ("shape", Value::Tuple(t)) => shape = Some(t),
            (k, v) => return Err(Error::Npy(format!("unexpected header entry {k:?}: {v:?}"))),
        }
    }
    let descr = descr.ok_or_else(|| Error::Npy("header lacks 'descr'".into()))?;
    let dtype = match descr.as_str() {
        "<f4" => Dtype::F32,
        "<f8" => Dtype::F64,
        _ => return Err(Error::UnsupportedDtype(descr)),
    };
    Ok(Header {
        dtype,
        fortran_order: fortran.ok_or_else(|| Error::Npy("header lacks 'fortran_order'".into()))?,
        shape: shape.ok_or_else(|| Error::Npy("header lacks 'shape'".into()))?,
    })
}

struct DictParser<'a> {
    s: &'a [u8],
    i: usize,
}

impl DictParser<'_> {
    fn err<T>(&self, what: &str) -> Result<T> {
        Err(Error::Npy(format!("header parse error at byte {}: {what}", self.i)))
    }

    fn ws(&mut self) {
        while self.i < self.s.len() && self.s[self.i].is_ascii_whitespace() {
            self.i += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.ws();
        self.s.get(self.i).copied()
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.peek() == Some(c) {
            self.i += 1;
            Ok(())
        } else {
            self.err(&format!("expected '{}'", c as char))
        }
    }

    fn dict(&mut self) -> Result<Vec<(String, Value)>> {
        self.expect(b'{')?;
        let mut out = Vec::new();
        loop {
            if self.peek() == Some(b'}') {
                self.i += 1;
                break;
            }
            let key = self.string()?;
            self.expect(b':')?;
            let value = self.value()?;
            out.push((key, value));
            match self.peek() {
                Some(b',') => self.i += 1,
                Some(b'}') => {}
                _ => return self.err("expected ',' or '}'"),
            }
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<String> {
        let q = match self.peek() {
            Some(q @ (b'\'' | b'"')) => q,
            _ => return self.err("expected string"),
        };
        self.i += 1;
        let start = self.i;
        while self.i < self.s.len() && self.s[self.i] != q {
            self.i += 1;
        }
        if self.i >= self.s.len() {
            return self.err("unterminated string");
        }
        let s = String::from_utf8_lossy(&self.s[start..self.i]).into_owned();
        self.i += 1;
        Ok(s)
    }

    fn value(&mut self) -> Result<Value> {
        match self.peek() {
            Some(b'\'' | b'"') => self.string().map(Value::Str),
            Some(b'(') => self.tuple().map(Value::Tuple),
            Some(b'T') if self.s[self.i..].starts_with(b"True") => {
                self.i += 4;
                Ok(Value::Bool(true))
            }
            Some(b'F') if self.s[self.i..].starts_with(b"False") => {
                self.i += 5;
                Ok(Value::Bool(false))
            }
            _ => self.err("unsupported value"),
        }
    }

    fn tuple(&mut self) -> Result<Vec<usize>> {
        self.expect(b'(')?;
        let mut out = Vec::new();
        loop {
            match self.peek() {
                Some(b')') => {
                    self.i += 1;
                    return Ok(out);
                }
                Some(c) if c.is_ascii_digit() => {
                    let start = self.i;
                    while self.i < self.s.len() && self.s[self.i].is_ascii_digit() {
                        self.i += 1;
                    }
                    let n = std::str::from_utf8(&self.s[start..self.i])
                        .unwrap()
                        .parse::<usize>()
                        .map_err(|e| Error::Npy(format!("bad shape entry: {e}")))?;
                    out.push(n);
                    match self.peek() {
                        Some(b',') => self.i += 1,
                        Some(b')') => {}
                        _ => return self.err("expected ',' or ')'"),
                    }
                }
                _ => return self.err("expected integer"),
            }
        }
    }
}

fn concat(parts: Vec<AnyBatch>) -> Result<AnyBatch> {
    let dtype = parts[0].dtype();
    if parts.iter().any(|p| p.dtype() != dtype) {
        return Err(Error::UnsupportedDtype("mixed dtypes in one directory".into()));
    }
    match dtype {
        Dtype::F32 => {
            let items = parts
                .into_iter()
                .flat_map(|p| match p {
                    AnyBatch::F32(b) => b.into_items(),
                    AnyBatch::F64(_) => unreachable!(),
                })
                .collect();
            LatentBatch::new(items).map(AnyBatch::F32)
        }
        Dtype::F64 => {
            let items = parts
                .into_iter()
                .flat_map(|p| match p {
                    AnyBatch::F64(b) => b.into_items(),
                    AnyBatch::F32(_) => unreachable!(),
                })
                .collect();
            LatentBatch::new(items).map(AnyBatch::F64)
        }
    }
}
