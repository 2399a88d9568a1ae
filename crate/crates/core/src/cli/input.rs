//! Matrix and scalar shorthand accepted on the command line and in configs.

use std::f64::consts::{E, PI};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ConalError, Result};

fn parse_err(msg: impl Into<String>) -> ConalError {
    ConalError::Parse(msg.into())
}

fn atom(s: &str) -> Result<f64> {
    match s {
        "e" => Ok(E),
        "pi" => Ok(PI),
        _ => s
            .parse::<f64>()
            .map_err(|_| parse_err(format!("not a number: {s:?}"))),
    }
}

/// Parses `1.5`, `-e`, `1/e`, `pi/4` and similar.
pub fn parse_scalar(token: &str) -> Result<f64> {
    let t = token.trim();
    let (sign, body) = match t.strip_prefix('-') {
        Some(rest) => (-1.0, rest.trim()),
        None => (1.0, t.strip_prefix('+').unwrap_or(t).trim()),
    };
    let value = match body.split_once('/') {
        Some((num, den)) => atom(num.trim())? / atom(den.trim())?,
        None => atom(body)?,
    };
    if !value.is_finite() {
        return Err(parse_err(format!("{token:?} is not finite")));
    }
    Ok(sign * value)
}

fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = rows.len();
    if n == 0 {
        return Err(parse_err("empty matrix"));
    }
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(parse_err("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(n, cols, |i, j| rows[i][j]))
}

fn parse_rows_json(text: &str) -> Result<DMatrix<f64>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| parse_err(format!("bad matrix JSON: {e}")))?;
    let rows = value
        .as_array()
        .ok_or_else(|| parse_err("matrix JSON must be an array of rows"))?;
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        let row = row
            .as_array()
            .ok_or_else(|| parse_err("matrix rows must be arrays"))?;
        let parsed = row
            .iter()
            .map(|x| match x {
                serde_json::Value::Number(v) => v.as_f64().ok_or_else(|| parse_err("bad number")),
                serde_json::Value::String(s) => parse_scalar(s),
                _ => Err(parse_err("matrix entries must be numbers")),
            })
            .collect::<Result<Vec<f64>>>()?;
        out.push(parsed);
    }
    rows_to_matrix(&out)
}

/// Parses `I3`, `diag(2, 1/e)`, a JSON row array, or a path to a file
/// holding any of these.
pub fn parse_matrix(token: &str) -> Result<DMatrix<f64>> {
    let t = token.trim();
    if let Some(n) = t.strip_prefix('I') {
        if let Ok(n) = n.parse::<usize>() {
            if n == 0 {
                return Err(parse_err("I0 is empty"));
            }
            return Ok(DMatrix::identity(n, n));
        }
    }
    if let Some(inner) = t.strip_prefix("diag(").and_then(|s| s.strip_suffix(')')) {
        let entries = inner
            .split(',')
            .map(parse_scalar)
            .collect::<Result<Vec<f64>>>()?;
        return Ok(DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            entries,
        )));
    }
    if t.starts_with('[') {
        return parse_rows_json(t);
    }
    let path = Path::new(t);
    if path.is_file() {
        let text = std::fs::read_to_string(path)
            .map_err(|e| parse_err(format!("cannot read {t}: {e}")))?;
        if text.trim().starts_with("I")
            || text.trim().starts_with("diag(")
            || text.trim().starts_with('[')
        {
            return parse_matrix(text.trim());
        }
        return Err(parse_err(format!("{t}: unrecognised matrix file contents")));
    }
    Err(parse_err(format!("unrecognised matrix {t:?}")))
}

/// A matrix in a config file: row array or shorthand string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixInput {
    Rows(Vec<Vec<f64>>),
    Token(String),
}

impl MatrixInput {
    pub fn resolve(&self) -> Result<DMatrix<f64>> {
        match self {
            MatrixInput::Rows(rows) => rows_to_matrix(rows),
            MatrixInput::Token(t) => parse_matrix(t),
        }
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalars() {
        assert_eq!(parse_scalar("e").unwrap(), E);
        assert_eq!(parse_scalar("1/e").unwrap(), 1.0 / E);
        assert_eq!(parse_scalar(" -2.5 ").unwrap(), -2.5);
        assert_eq!(parse_scalar("pi/4").unwrap(), PI / 4.0);
        assert!(parse_scalar("x").is_err());
        assert!(parse_scalar("1/0").is_err());
    }

    #[test]
    fn matrices() {
        assert_eq!(parse_matrix("I2").unwrap(), DMatrix::identity(2, 2));
        let d = parse_matrix("diag(e,1/e)").unwrap();
        assert_eq!(d[(0, 0)], E);
        assert_eq!(d[(1, 1)], 1.0 / E);
        assert_eq!(d[(0, 1)], 0.0);
        let m = parse_matrix("[[2, 1], [1, \"e\"]]").unwrap();
        assert_eq!(m[(1, 0)], 1.0);
        assert_eq!(m[(1, 1)], E);
        assert!(parse_matrix("[[1, 2], [3]]").is_err());
        assert!(parse_matrix("nope").is_err());
    }

    #[test]
    fn matrix_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.json");
        std::fs::write(&path, "[[4, 0], [0, 9]]\n").unwrap();
        let m = parse_matrix(path.to_str().unwrap()).unwrap();
        assert_eq!(m[(1, 1)], 9.0);
        std::fs::write(&path, "garbage").unwrap();
        assert!(parse_matrix(path.to_str().unwrap()).is_err());
    }

    #[test]
    fn config_inputs() {
        let a: MatrixInput = serde_json::from_str("\"diag(1,2)\"").unwrap();
        let b: MatrixInput = serde_json::from_str("[[1,0],[0,2]]").unwrap();
        assert_eq!(a.resolve().unwrap(), b.resolve().unwrap());
    }
}
