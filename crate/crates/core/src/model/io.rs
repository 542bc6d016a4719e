//! JSON model files.
//!
//! ```json
//! {
//!   "a": [-2.0, 1.0],
//!   "sigma2": [1.0, 1.0],
//!   "q": [[-1.0, 1.0], [2.0, -2.0]],
//!   "u0": [[1.0, 0.0], [0.0, 1.0]],
//!   "nu": [{"kind": "none"}, {"kind": "exponential", "rate": 1.0, "weight": 0.1}],
//!   "mu": [[{"kind": "none"}, {"kind": "exponential", "rate": 4.0, "weight": 1.0}],
//!          [{"kind": "exponential", "rate": 4.0, "weight": 1.0}, {"kind": "none"}]]
//! }
//! ```
//!
//! `u0` and `mu` may be omitted together for a model without switch jumps.
//! Phase-type densities use `{"kind": "phase_type", "init": [...], "gen": [[...]], "weight": w}`.
//! Floats are written in shortest round-trip form, so a save/load cycle is exact.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{JumpDensity, MmLevyModel};
use crate::error::{Error, Result};
use crate::matcore::{Matrix, Vector};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    a: Vec<f64>,
    sigma2: Vec<f64>,
    q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    u0: Option<Vec<Vec<f64>>>,
    nu: Vec<DensityFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu: Option<Vec<Vec<DensityFile>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DensityFile {
    None,
    Exponential { rate: f64, weight: f64 },
    PhaseType { init: Vec<f64>, gen: Vec<Vec<f64>>, weight: f64 },
}

fn schema(path: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Schema {
        path: path.into(),
        message: message.into(),
    }
}

fn to_matrix(rows: &[Vec<f64>], path: &str) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 {
        return Err(schema(path, "matrix must be nonempty"));
    }
    if let Some(k) = rows.iter().position(|row| row.len() != c) {
        return Err(schema(
            format!("{path}[{k}]"),
            format!("row has {} entries, expected {c}", rows[k].len()),
        ));
    }
    Ok(Matrix::from_fn(r, c, |i, j| rows[i][j]))
}

fn from_matrix(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl DensityFile {
    fn into_density(self, path: &str) -> Result<JumpDensity> {
        Ok(match self {
            DensityFile::None => JumpDensity::None,
            DensityFile::Exponential { rate, weight } => JumpDensity::Exponential { rate, weight },
            DensityFile::PhaseType { init, gen, weight } => JumpDensity::PhaseType {
                init: Vector::from_vec(init),
                gen: to_matrix(&gen, &format!("{path}.gen"))?,
                weight,
            },
        })
    }

    fn from_density(d: &JumpDensity) -> Self {
        match d {
            JumpDensity::None => DensityFile::None,
            JumpDensity::Exponential { rate, weight } => DensityFile::Exponential {
                rate: *rate,
                weight: *weight,
            },
            JumpDensity::PhaseType { init, gen, weight } => DensityFile::PhaseType {
                init: init.iter().copied().collect(),
                gen: from_matrix(gen),
                weight: *weight,
            },
        }
    }
}

/// Parses a model. Structural problems (reducible `q`, mass defects, ...)
/// are left to [`super::validate`]; only the file layout is checked here.
pub fn from_json_str(text: &str) -> Result<MmLevyModel> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let file: ModelFile = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })?;
    let n = file.a.len();
    let q = to_matrix(&file.q, "q")?;
    let u0 = match &file.u0 {
        Some(rows) => to_matrix(rows, "u0")?,
        None => Matrix::from_element(n, n, 1.0),
    };
    let nu = file
        .nu
        .into_iter()
        .enumerate()
        .map(|(i, d)| d.into_density(&format!("nu[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let mu = match file.mu {
        Some(grid) => grid
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .map(|(j, d)| d.into_density(&format!("mu[{i}][{j}]")))
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?,
        None => vec![vec![JumpDensity::None; n]; n],
    };
    Ok(MmLevyModel {
        a: file.a,
        sigma2: file.sigma2,
        q,
        u0,
        nu,
        mu,
    })
}

pub fn to_json_string(m: &MmLevyModel) -> Result<String> {
    let file = ModelFile {
        a: m.a.clone(),
        sigma2: m.sigma2.clone(),
        q: from_matrix(&m.q),
        u0: Some(from_matrix(&m.u0)),
        nu: m.nu.iter().map(DensityFile::from_density).collect(),
        mu: Some(
            m.mu.iter()
                .map(|r| r.iter().map(DensityFile::from_density).collect())
                .collect(),
        ),
    };
    serde_json::to_string_pretty(&file).map_err(|e| schema("", e.to_string()))
}

pub fn load(path: impl AsRef<Path>) -> Result<MmLevyModel> {
    from_json_str(&fs::read_to_string(path)?)
}

pub fn save(path: impl AsRef<Path>, m: &MmLevyModel) -> Result<()> {
    let mut text = to_json_string(m)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
