//! Stand-alone NPY v1.0 writer/reader for `<f4` arrays, written from the
//! format description rather than shared with the library under test.

use std::fs;
use std::io::Write;
use std::path::Path;

pub fn encode(shape: &[usize], data: &[f32]) -> Vec<u8> {
    assert_eq!(shape.iter().product::<usize>(), data.len(), "shape/data mismatch");
    let dims = match shape.len() {
        0 => "()".to_string(),
        1 => format!("({},)", shape[0]),
        _ => format!(
            "({})",
            shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(", ")
        ),
    };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': {dims}, }}");
    // magic(6) + version(2) + header_len(2) + header + '\n' must be a
    // multiple of 64.
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = Vec::with_capacity(10 + header.len() + data.len() * 4);
    out.extend_from_slice(b"\x93NUMPY\x01\x00");
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Raw header bytes with a caller-chosen dictionary, for malformed-file
/// fixtures.
pub fn encode_with_header(version: (u8, u8), dict: &str, payload: &[u8]) -> Vec<u8> {
    let mut header = dict.to_string();
    while (10 + header.len() + 1) % 64 != 0 {
        header.push(' ');
    }
    header.push('\n');
    let mut out = b"\x93NUMPY".to_vec();
    out.push(version.0);
    out.push(version.1);
    out.extend_from_slice(&(header.len() as u16).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(payload);
    out
}

pub fn write(path: &Path, shape: &[usize], data: &[f32]) {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).expect("create tensor directory");
    }
    let tmp = path.with_extension("npy.tmp");
    let mut f = fs::File::create(&tmp).expect("create tensor file");
    f.write_all(&encode(shape, data)).expect("write tensor file");
    drop(f);
    fs::rename(&tmp, path).expect("rename tensor file");
}

/// Reads back a file produced by [`write`] (shape, data).
pub fn read(path: &Path) -> (Vec<usize>, Vec<f32>) {
    let bytes = fs::read(path).expect("read tensor file");
    let hlen = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
    let header = std::str::from_utf8(&bytes[10..10 + hlen]).expect("ascii header");
    let open = header.find("'shape': (").expect("shape key") + "'shape': (".len();
    let close = open + header[open..].find(')').expect("shape close");
    let shape: Vec<usize> = header[open..close]
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().expect("dim"))
        .collect();
    let data = bytes[10 + hlen..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    (shape, data)
}
