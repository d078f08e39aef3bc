//! Dataset Gram matrices and their plain-text file format.
//!
//! A Gram file is a block of `# key=value` header lines followed by one
//! comma-separated row per graph. Numbers use Rust's shortest round-trip
//! `f64` formatting, so writing is deterministic and reading is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::spd::spectrum_extremes;

#[derive(Clone, Debug, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    /// Provenance: parameters, seed, mode and anything else worth recording.
    pub meta: BTreeMap<String, String>,
}

impl GramMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        GramMatrix {
            matrix,
            meta: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn set_meta(&mut self, key: impl Into<String>, value: impl ToString) {
        self.meta.insert(key.into(), value.to_string());
    }

    /// `(λ_min, λ_max)` of the matrix.
    pub fn eigen_extremes(&self) -> (f64, f64) {
        spectrum_extremes(&self.matrix)
    }

    /// True when `λ_min ≥ −rel_tol · λ_max`.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        let (min, max) = self.eigen_extremes();
        min >= -rel_tol * max.abs()
    }

    pub fn max_abs_diff(&self, other: &GramMatrix) -> f64 {
        (&self.matrix - &other.matrix).abs().max()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}={v}");
        }
        for i in 0..self.matrix.nrows() {
            let row: Vec<String> = (0..self.matrix.ncols())
                .map(|j| format!("{}", self.matrix[(i, j)]))
                .collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<GramMatrix> {
        let mut meta = BTreeMap::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |message: String| Error::Parse {
                file: "gram".into(),
                line: idx + 1,
                message,
            };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if !rows.is_empty() {
                    return Err(err("header line after matrix rows".into()));
                }
                let (k, v) = rest
                    .trim()
                    .split_once('=')
                    .ok_or_else(|| err("header line is not key=value".into()))?;
                meta.insert(k.trim().to_string(), v.trim().to_string());
                continue;
            }
            let row = line
                .split(',')
                .map(|tok| {
                    tok.trim()
                        .parse::<f64>()
                        .map_err(|_| err(format!("not a number: {:?}", tok.trim())))
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(err(format!("row has {} entries, expected {}", row.len(), first.len())));
                }
            }
            rows.push(row);
        }
        let m = rows.len();
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Parse {
                file: "gram".into(),
                line: 0,
                message: format!("matrix is not square ({m} rows)"),
            });
        }
        let matrix = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        Ok(GramMatrix { matrix, meta })
    }
}
