//! Reading and writing 32-bit float tensors in the numpy `.npy` v1.0 format.
//!
//! Only the subset produced by the exporter is accepted: little-endian
//! `'<f4'`, C order. Anything else is rejected with a typed error rather than
//! converted.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const MAGIC: [u8; 6] = *b"\x93NUMPY";
const PREAMBLE_LEN: usize = MAGIC.len() + 2 + 2;
const HEADER_ALIGN: usize = 64;

/// A dense C-ordered float tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {shape:?} holds {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Parsed header dictionary of an npy file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NpyHeader {
    pub descr: String,
    pub fortran_order: bool,
    pub shape: Vec<usize>,
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_npy(&mut BufReader::new(file)).map_err(|e| annotate(e, path))
}

/// Reads only the header; used to validate shapes without touching payloads.
pub fn read_tensor_header(path: impl AsRef<Path>) -> Result<NpyHeader> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let header = read_header(&mut BufReader::new(file)).map_err(|e| annotate(e, path))?;
    check_header(&header).map_err(|e| annotate(e, path))?;
    Ok(header)
}

pub fn write_tensor_file(path: impl AsRef<Path>, shape: &[usize], data: &[f32]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut writer = BufWriter::new(file);
    write_npy(&mut writer, shape, data)?;
    writer.flush().map_err(|e| Error::io(path, e))
}

pub fn read_npy<R: Read>(reader: &mut R) -> Result<Tensor> {
    let header = read_header(reader)?;
    check_header(&header)?;

    let byte_len = header
        .shape
        .iter()
        .try_fold(4usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::BadHeader(format!("shape {:?} overflows", header.shape)))?;
    // Read through `take` so a lying header cannot force a huge allocation.
    let mut bytes = Vec::new();
    reader
        .take(byte_len as u64)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::BadHeader(format!("unreadable payload: {e}")))?;
    if bytes.len() != byte_len {
        return Err(Error::BadHeader(format!("payload shorter than shape {:?}", header.shape)));
    }
    let mut trailing = [0u8; 1];
    if matches!(reader.read(&mut trailing), Ok(n) if n > 0) {
        return Err(Error::BadHeader(format!(
            "payload longer than shape {:?}",
            header.shape
        )));
    }

    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(Tensor {
        shape: header.shape,
        data,
    })
}

pub fn write_npy<W: Write>(writer: &mut W, shape: &[usize], data: &[f32]) -> Result<()> {
    let expected: usize = shape.iter().product();
    if expected != data.len() {
        return Err(Error::ShapeMismatch(format!(
            "shape {shape:?} holds {expected} values, got {}",
            data.len()
        )));
    }

    let shape_repr = match shape {
        [single] => format!("({single},)"),
        dims => format!(
            "({})",
            dims.iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
    };
    let mut dict = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {shape_repr}, }}");
    let unpadded = PREAMBLE_LEN + dict.len() + 1;
    let padding = (HEADER_ALIGN - unpadded % HEADER_ALIGN) % HEADER_ALIGN;
    dict.extend(std::iter::repeat_n(' ', padding));
    dict.push('\n');
    let header_len = u16::try_from(dict.len())
        .map_err(|_| Error::BadHeader("header does not fit a v1.0 file".into()))?;

    let io = |e| Error::Io {
        path: "<npy stream>".into(),
        source: e,
    };
    writer.write_all(&MAGIC).map_err(io)?;
    writer.write_all(&[1, 0]).map_err(io)?;
    writer.write_all(&header_len.to_le_bytes()).map_err(io)?;
    writer.write_all(dict.as_bytes()).map_err(io)?;
    let mut payload = Vec::with_capacity(data.len() * 4);
    for v in data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    writer.write_all(&payload).map_err(io)
}

fn read_header<R: Read>(reader: &mut R) -> Result<NpyHeader> {
    let mut preamble = [0u8; PREAMBLE_LEN];
    reader
        .read_exact(&mut preamble)
        .map_err(|_| Error::BadHeader("file shorter than the npy preamble".into()))?;
    if preamble[..6] != MAGIC {
        return Err(Error::BadHeader("missing \\x93NUMPY magic".into()));
    }
    let (major, minor) = (preamble[6], preamble[7]);
    if (major, minor) != (1, 0) {
        return Err(Error::BadHeader(format!(
            "unsupported format version {major}.{minor}"
        )));
    }
    let header_len = u16::from_le_bytes([preamble[8], preamble[9]]) as usize;
    let mut raw = vec![0u8; header_len];
    reader
        .read_exact(&mut raw)
        .map_err(|_| Error::BadHeader("truncated header dictionary".into()))?;
    let text = std::str::from_utf8(&raw)
        .map_err(|_| Error::BadHeader("header dictionary is not ASCII".into()))?;
    parse_header_dict(text)
}

fn check_header(header: &NpyHeader) -> Result<()> {
    if header.descr != "<f4" {
        return Err(Error::UnsupportedDtype(header.descr.clone()));
    }
    if header.fortran_order {
        return Err(Error::UnsupportedOrder);
    }
    Ok(())
}

fn annotate(err: Error, path: &Path) -> Error {
    match err {
        Error::BadHeader(msg) => Error::BadHeader(format!("{}: {msg}", path.display())),
        other => other,
    }
}

/// Parses the python-literal dictionary of an npy header.
fn parse_header_dict(text: &str) -> Result<NpyHeader> {
    let bad = |msg: &str| Error::BadHeader(msg.to_string());
    let body = text
        .trim_end_matches(['\n', ' ', '\0'])
        .trim()
        .strip_prefix('{')
        .and_then(|s| s.strip_suffix('}'))
        .ok_or_else(|| bad("header is not a dictionary"))?;

    let mut descr = None;
    let mut fortran_order = None;
    let mut shape = None;
    let mut rest = body.trim();
    while !rest.is_empty() {
        let (key, after_key) = take_quoted(rest).ok_or_else(|| bad("expected quoted key"))?;
        let after_colon = after_key
            .trim_start()
            .strip_prefix(':')
            .ok_or_else(|| bad("expected ':' after key"))?
            .trim_start();
        let after_value = match key {
            "descr" => {
                let (value, tail) =
                    take_quoted(after_colon).ok_or_else(|| bad("descr must be a string"))?;
                descr = Some(value.to_string());
                tail
            }
            "fortran_order" => {
                if let Some(tail) = after_colon.strip_prefix("False") {
                    fortran_order = Some(false);
                    tail
                } else if let Some(tail) = after_colon.strip_prefix("True") {
                    fortran_order = Some(true);
                    tail
                } else {
                    return Err(bad("fortran_order must be True or False"));
                }
            }
            "shape" => {
                let inner_end = after_colon
                    .strip_prefix('(')
                    .and_then(|s| s.find(')').map(|i| (s, i)))
                    .ok_or_else(|| bad("shape must be a tuple"))?;
                let (inner, end) = inner_end;
                let dims = inner[..end]
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.trim_end_matches('L')
                            .parse::<usize>()
                            .map_err(|_| bad("shape entries must be non-negative integers"))
                    })
                    .collect::<Result<Vec<_>>>()?;
                shape = Some(dims);
                &inner[end + 1..]
            }
            other => return Err(bad(&format!("unexpected key {other:?}"))),
        };
        rest = after_value.trim_start();
        rest = rest.strip_prefix(',').unwrap_or(rest).trim_start();
    }

    Ok(NpyHeader {
        descr: descr.ok_or_else(|| bad("missing descr"))?,
        fortran_order: fortran_order.ok_or_else(|| bad("missing fortran_order"))?,
        shape: shape.ok_or_else(|| bad("missing shape"))?,
    })
}

fn take_quoted(s: &str) -> Option<(&str, &str)> {
    let quote = s.chars().next().filter(|c| *c == '\'' || *c == '"')?;
    let inner = &s[1..];
    let end = inner.find(quote)?;
    Some((&inner[..end], &inner[end + 1..]))
}
