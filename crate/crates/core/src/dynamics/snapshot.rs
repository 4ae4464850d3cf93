//! Binary field snapshots.
//!
//! Layout (little endian): the 8-byte magic `QTSNAP01`, then `u64 nx`,
//! `u64 ny`, `u64 ncomp` (= 8), `f64 t`, followed by `ncomp` component
//! planes of `nx * ny` `f64` values each, x index fastest. Component order is
//! `q11, q22, q12, q13, q23, v1, v2, v3`. A JSON sidecar carries the model
//! parameters.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FieldState, ModelParams};
use crate::error::{Error, Result};
use crate::tensor::QTensor;

pub const MAGIC: &[u8; 8] = b"QTSNAP01";
pub const COMPONENTS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    pub nx: usize,
    pub ny: usize,
    pub t: f64,
    pub components: Vec<String>,
    pub params: ModelParams,
}

pub fn encode(state: &FieldState) -> Vec<u8> {
    let len = state.n * state.n;
    let mut out = Vec::with_capacity(40 + COMPONENTS * len * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(state.n as u64).to_le_bytes());
    out.extend_from_slice(&(state.n as u64).to_le_bytes());
    out.extend_from_slice(&(COMPONENTS as u64).to_le_bytes());
    out.extend_from_slice(&state.t.to_le_bytes());
    for c in 0..5 {
        for q in &state.q {
            out.extend_from_slice(&q.components()[c].to_le_bytes());
        }
    }
    for comp in &state.v {
        for x in comp {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn bad(msg: &str) -> Error {
    Error::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, msg.to_string()))
}

pub fn decode(bytes: &[u8]) -> Result<FieldState> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(bad("not a Q-tensor snapshot"));
    }
    let mut word = [0u8; 8];
    let mut next_u64 = |r: &mut &[u8]| -> Result<u64> {
        r.read_exact(&mut word)?;
        Ok(u64::from_le_bytes(word))
    };
    let nx = next_u64(&mut r)? as usize;
    let ny = next_u64(&mut r)? as usize;
    let nc = next_u64(&mut r)? as usize;
    if nx != ny || nc != COMPONENTS {
        return Err(bad("unsupported snapshot dimensions"));
    }
    let t = f64::from_bits(next_u64(&mut r)?);
    let len = nx * ny;
    if r.len() != COMPONENTS * len * 8 {
        return Err(bad("snapshot payload has the wrong length"));
    }
    let value = |c: usize, i: usize| -> f64 {
        let o = (c * len + i) * 8;
        f64::from_le_bytes(r[o..o + 8].try_into().expect("8 bytes"))
    };
    let q = (0..len)
        .map(|i| QTensor::from_components(std::array::from_fn(|c| value(c, i))))
        .collect::<Result<Vec<_>>>()?;
    let v = std::array::from_fn(|c| (0..len).map(|i| value(5 + c, i)).collect());
    FieldState::new(nx, t, q, v)
}

pub fn sidecar(state: &FieldState, params: &ModelParams) -> Sidecar {
    Sidecar {
        format: String::from_utf8_lossy(MAGIC).into_owned(),
        nx: state.n,
        ny: state.n,
        t: state.t,
        components: ["q11", "q22", "q12", "q13", "q23", "v1", "v2", "v3"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        params: *params,
    }
}

/// Write `path` and `path.json` (via temporary files and rename).
pub fn write(path: &Path, state: &FieldState, params: &ModelParams) -> Result<()> {
    let side = serde_json::to_vec_pretty(&sidecar(state, params))?;
    write_atomic(path, &encode(state))?;
    let mut json = path.as_os_str().to_owned();
    json.push(".json");
    write_atomic(Path::new(&json), &side)
}

pub fn read(path: &Path) -> Result<FieldState> {
    decode(&std::fs::read(path)?)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
