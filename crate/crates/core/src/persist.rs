//! Text persistence for student models and logistic-regression weights.
//!
//! Model file: header line "GOVERN-MODEL v1", one line of space-separated
//! layer sizes, then one parameter per line (each layer's weights
//! row-major, then its biases). Parameters use 17-significant-digit
//! decimals, so save/load round-trips bit-exactly.
//!
//! LR weights reuse the same layout with header "GOVERN-LRW v1" and a
//! "N 1" sizes line: N coefficients, then the bias.

use std::io::{BufWriter, Write};
use std::path::Path;

use crate::ensemble::LRWeights;
use crate::error::{Error, Result};
use crate::numfmt::fmt_g17;
use crate::student::StudentModel;

const MODEL_HEADER: &str = "GOVERN-MODEL v1";
const LRW_HEADER: &str = "GOVERN-LRW v1";

fn write_file(path: &Path, header: &str, sizes: &[usize], params: &[f64]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let sizes: Vec<String> = sizes.iter().map(|s| s.to_string()).collect();
    writeln!(w, "{header}\n{}", sizes.join(" ")).map_err(|e| Error::io(path, e))?;
    for &p in params {
        writeln!(w, "{}", fmt_g17(p)).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path, header: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let first = lines.next().unwrap_or("");
    if first != header {
        return Err(Error::ModelFormat(format!(
            "unsupported version {first:?} (expected {header:?})"
        )));
    }
    let sizes_line = lines
        .next()
        .ok_or_else(|| Error::ModelFormat("missing layer sizes line".into()))?;
    let sizes = sizes_line
        .split_whitespace()
        .map(|s| {
            s.parse::<usize>()
                .map_err(|_| Error::ModelFormat(format!("bad layer size {s:?}")))
        })
        .collect::<Result<Vec<usize>>>()?;
    let params = lines
        .map(|line| {
            line.parse::<f64>()
                .map_err(|_| Error::ModelFormat(format!("bad parameter line {line:?}")))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((sizes, params))
}

pub fn save_model(model: &StudentModel, path: impl AsRef<Path>) -> Result<()> {
    write_file(
        path.as_ref(),
        MODEL_HEADER,
        model.layer_sizes(),
        model.parameters(),
    )
}

pub fn load_model(path: impl AsRef<Path>) -> Result<StudentModel> {
    let (sizes, params) = read_file(path.as_ref(), MODEL_HEADER)?;
    StudentModel::from_parts(sizes, params)
}

pub fn save_lr_weights(weights: &LRWeights, path: impl AsRef<Path>) -> Result<()> {
    let mut params = weights.coefficients.clone();
    params.push(weights.bias);
    write_file(
        path.as_ref(),
        LRW_HEADER,
        &[weights.coefficients.len(), 1],
        &params,
    )
}

pub fn load_lr_weights(path: impl AsRef<Path>) -> Result<LRWeights> {
    let (sizes, mut params) = read_file(path.as_ref(), LRW_HEADER)?;
    if sizes.len() != 2 || sizes[1] != 1 || sizes[0] == 0 {
        return Err(Error::ModelFormat(format!(
            "bad LR weight shape {sizes:?} (expected \"N 1\")"
        )));
    }
    if params.len() != sizes[0] + 1 {
        return Err(Error::ModelFormat(format!(
            "parameter count mismatch: shape {} 1 needs {}, found {}",
            sizes[0],
            sizes[0] + 1,
            params.len()
        )));
    }
    if params.iter().any(|p| !p.is_finite()) {
        return Err(Error::ModelFormat("non-finite parameter".into()));
    }
    let bias = params.pop().unwrap();
    Ok(LRWeights {
        coefficients: params,
        bias,
    })
}
