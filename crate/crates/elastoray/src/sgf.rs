//! SGF: a small binary format for gridded fields.
//!
//! ```text
//! SGF1
//! dims nx ny nz
//! origin ox oy oz
//! spacing h
//! ncomp k
//! mask 0|1
//! <blank line>
//! nx·ny·nz·k little-endian f64, x fastest, components fastest within a node
//! nx·ny·nz mask bytes (0 or 1), present when the mask flag is 1
//! ```
//!
//! Header numbers are written in shortest round-trip form, so a read followed
//! by a write reproduces the file byte for byte.

use std::path::Path;

use elastoray_core::field::GridField;
use elastoray_core::Grid3;
use thiserror::Error;

use crate::error::CliError;

#[derive(Debug, Error, PartialEq)]
pub enum SgfError {
    #[error("not an SGF file (magic {0:?})")]
    Magic(String),
    #[error("header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("dims {0:?} overflow the addressable payload size")]
    Overflow([usize; 3]),
    #[error("truncated payload: expected {expected} bytes after the header, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{extra} unexpected bytes after the payload")]
    Trailing { extra: usize },
    #[error("mask byte {value} at node {node} is not 0 or 1")]
    MaskByte { node: usize, value: u8 },
    #[error("expected {expected} components per node, file has {found}")]
    Components { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgfData {
    pub grid: Grid3,
    pub ncomp: usize,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

pub fn encode(d: &SgfData) -> Vec<u8> {
    let g = &d.grid;
    let header = format!(
        "SGF1\ndims {} {} {}\norigin {} {} {}\nspacing {}\nncomp {}\nmask {}\n\n",
        g.dims[0],
        g.dims[1],
        g.dims[2],
        g.origin[0],
        g.origin[1],
        g.origin[2],
        g.spacing,
        d.ncomp,
        u8::from(d.mask.is_some())
    );
    let mut out = Vec::with_capacity(header.len() + d.values.len() * 8 + g.len());
    out.extend_from_slice(header.as_bytes());
    for v in &d.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    if let Some(mask) = &d.mask {
        out.extend(mask.iter().map(|&m| u8::from(m)));
    }
    out
}

fn header_err(line: usize, message: impl Into<String>) -> SgfError {
    SgfError::Header { line, message: message.into() }
}

fn fields<const N: usize, T: std::str::FromStr>(line: usize, text: &str, key: &str) -> Result<[T; N], SgfError> {
    let mut parts = text.split(' ');
    if parts.next() != Some(key) {
        return Err(header_err(line, format!("expected `{key} …`, found {text:?}")));
    }
    let vals: Vec<T> = parts
        .map(|p| p.parse::<T>().map_err(|_| header_err(line, format!("bad {key} value {p:?}"))))
        .collect::<Result<_, _>>()?;
    vals.try_into().map_err(|_| header_err(line, format!("`{key}` takes {N} values")))
}

pub fn decode(bytes: &[u8]) -> Result<SgfData, SgfError> {
    // Header: seven newline-terminated lines, the last one empty.
    let mut lines = Vec::with_capacity(7);
    let mut pos = 0;
    while lines.len() < 7 {
        let rest = &bytes[pos..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(if lines.is_empty() {
                SgfError::Magic(String::from_utf8_lossy(&rest[..rest.len().min(8)]).into_owned())
            } else {
                header_err(lines.len() + 1, "header ends early")
            });
        };
        let line = std::str::from_utf8(&rest[..end]).map_err(|_| header_err(lines.len() + 1, "not UTF-8"))?;
        if lines.is_empty() && line != "SGF1" {
            return Err(SgfError::Magic(line.chars().take(16).collect()));
        }
        lines.push(line);
        pos += end + 1;
    }
    let dims: [usize; 3] = fields(2, lines[1], "dims")?;
    if dims.contains(&0) {
        return Err(header_err(2, format!("dims must be positive, got {} {} {}", dims[0], dims[1], dims[2])));
    }
    let origin: [f64; 3] = fields(3, lines[2], "origin")?;
    let [spacing]: [f64; 1] = fields(4, lines[3], "spacing")?;
    let [ncomp]: [usize; 1] = fields(5, lines[4], "ncomp")?;
    if ncomp == 0 {
        return Err(header_err(5, "ncomp must be positive"));
    }
    let [mask_flag]: [u8; 1] = fields(6, lines[5], "mask")?;
    if mask_flag > 1 {
        return Err(header_err(6, "mask flag must be 0 or 1"));
    }
    if !lines[6].is_empty() {
        return Err(header_err(7, "expected a blank line"));
    }
    let nodes = dims[0]
        .checked_mul(dims[1])
        .and_then(|n| n.checked_mul(dims[2]))
        .ok_or(SgfError::Overflow(dims))?;
    let value_bytes = nodes.checked_mul(ncomp).and_then(|n| n.checked_mul(8)).ok_or(SgfError::Overflow(dims))?;
    let expected = value_bytes.checked_add(if mask_flag == 1 { nodes } else { 0 }).ok_or(SgfError::Overflow(dims))?;
    let grid = Grid3::new(origin, spacing, dims).map_err(|e| header_err(4, e.to_string()))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(SgfError::Truncated { expected, actual: payload.len() });
    }
    if payload.len() > expected {
        return Err(SgfError::Trailing { extra: payload.len() - expected });
    }
    let values = payload[..value_bytes]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let mask = if mask_flag == 1 {
        let raw = &payload[value_bytes..];
        let mut m = Vec::with_capacity(nodes);
        for (node, &value) in raw.iter().enumerate() {
            match value {
                0 => m.push(false),
                1 => m.push(true),
                _ => return Err(SgfError::MaskByte { node, value }),
            }
        }
        Some(m)
    } else {
        None
    };
    Ok(SgfData { grid, ncomp, values, mask })
}

pub fn from_field<F: GridField>(f: &F) -> SgfData {
    let mask = f.mask();
    SgfData {
        grid: *f.grid(),
        ncomp: F::NCOMP,
        values: f.to_flat(),
        mask: if mask.iter().all(|m| *m) { None } else { Some(mask.to_vec()) },
    }
}

pub fn into_field<F: GridField>(d: SgfData) -> Result<F, SgfError> {
    if d.ncomp != F::NCOMP {
        return Err(SgfError::Components { expected: F::NCOMP, found: d.ncomp });
    }
    let mask = d.mask.unwrap_or_else(|| vec![true; d.grid.len()]);
    Ok(F::from_flat(d.grid, &d.values, mask))
}

pub fn write_field<F: GridField>(f: &F, path: &Path) -> Result<(), CliError> {
    crate::error::write(path, &encode(&from_field(f)))
}

pub fn read_field<F: GridField>(path: &Path) -> Result<F, CliError> {
    let bytes = crate::error::read(path)?;
    decode(&bytes)
        .and_then(into_field)
        .map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}
