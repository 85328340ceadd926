//! Model files: a little-endian `u64` element count followed by that many
//! little-endian `f64` values, plus a `.txt` sidecar describing the model.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::model::{ModelKind, ModelSpec};
use crate::params::ParamVector;

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

pub fn encode_params(params: &ParamVector) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 8 * params.len());
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for x in params.as_slice() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> std::result::Result<ParamVector, String> {
    let (head, body) = bytes.split_at_checked(8).ok_or("missing length header")?;
    let n = u64::from_le_bytes(head.try_into().expect("8 bytes")) as usize;
    if body.len() != n.checked_mul(8).ok_or("length header overflows")? {
        return Err(format!("header says {n} values but body holds {} bytes", body.len()));
    }
    let values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    ParamVector::new(values).map_err(|e| e.to_string())
}

fn describe(spec: &ModelSpec) -> String {
    let mut s = String::new();
    let kind = match spec.kind {
        ModelKind::Logistic => "logistic",
        ModelKind::Mlp1 => "mlp1",
    };
    s.push_str(&format!("kind = {kind}\ninput_dim = {}\nnum_classes = {}\n", spec.input_dim, spec.num_classes));
    if spec.kind == ModelKind::Mlp1 {
        s.push_str(&format!("hidden_dim = {}\nactivation = {:?}\n", spec.hidden_dim, spec.activation).to_lowercase());
    }
    s.push_str(&format!("param_count = {}\n", spec.param_count()));
    s.push_str("encoding = u64 little-endian length, then f64 little-endian values\n");
    let layout = match spec.kind {
        ModelKind::Logistic => "W[num_classes x input_dim] row-major, b[num_classes]",
        ModelKind::Mlp1 => {
            "W1[hidden_dim x input_dim] row-major, b1[hidden_dim], W2[num_classes x hidden_dim] row-major, b2[num_classes]"
        }
    };
    s.push_str(&format!("layout = {layout}\n"));
    s
}

pub fn save_params(path: &Path, params: &ParamVector, spec: &ModelSpec) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_params(params))?;
    fs::write(sidecar_path(path), describe(spec))?;
    Ok(())
}

pub fn load_params(path: &Path) -> Result<ParamVector> {
    let bytes = fs::read(path)?;
    decode_params(&bytes).map_err(|message| Error::ModelFile { path: path.to_path_buf(), message })
}
