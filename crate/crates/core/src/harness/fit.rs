//! Least-squares curve fits for load measurements.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Model {
    /// y = a·x + b
    Linear,
    /// y = a·x² + b·x + c
    Quadratic,
}

impl Model {
    fn degree(self) -> usize {
        match self {
            Model::Linear => 1,
            Model::Quadratic => 2,
        }
    }
}

impl FromStr for Model {
    type Err = FitError;

    fn from_str(s: &str) -> Result<Model, FitError> {
        match s {
            "linear" => Ok(Model::Linear),
            "quadratic" => Ok(Model::Quadratic),
            other => Err(FitError::UnknownModel(other.to_string())),
        }
    }
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("unknown model {0:?}")]
    UnknownModel(String),
    #[error("bad csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub model: Model,
    /// Highest power first: `[a, b]` or `[a, b, c]`.
    pub coefficients: Vec<f64>,
    pub r_squared: f64,
}

impl Fit {
    pub fn predict(&self, x: f64) -> f64 {
        self.coefficients.iter().fold(0.0, |acc, c| acc * x + c)
    }
}

impl fmt::Display for Fit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.coefficients;
        match self.model {
            Model::Linear => write!(f, "y = {:.6}*x + {:.6}", c[0], c[1])?,
            Model::Quadratic => write!(f, "y = {:.6}*x^2 + {:.6}*x + {:.6}", c[0], c[1], c[2])?,
        }
        write!(f, "  R^2 = {:.4}", self.r_squared)
    }
}

/// Ordinary least squares over `(x, y)` points.
pub fn fit(points: &[(f64, f64)], model: Model) -> Result<Fit, FitError> {
    let k = model.degree() + 1;
    if points.len() < 3 {
        return Err(FitError::DegenerateInput(format!(
            "{} points, need at least 3",
            points.len()
        )));
    }
    if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(FitError::DegenerateInput("non-finite value".into()));
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.0).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < k {
        return Err(FitError::DegenerateInput(format!(
            "{} distinct x values for {k} coefficients",
            xs.len()
        )));
    }
    let n = points.len();
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n as f64;
    let ss_tot: f64 = points.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(FitError::DegenerateInput("y has zero variance".into()));
    }

    let design = DMatrix::from_fn(n, k, |r, c| points[r].0.powi((k - 1 - c) as i32));
    let y = DVector::from_iterator(n, points.iter().map(|p| p.1));
    let beta = design
        .clone()
        .svd(true, true)
        .solve(&y, 1e-12)
        .map_err(|e| FitError::DegenerateInput(e.to_string()))?;
    let residual = &y - &design * &beta;
    let ss_res = residual.norm_squared();
    Ok(Fit {
        model,
        coefficients: beta.iter().copied().collect(),
        r_squared: 1.0 - ss_res / ss_tot,
    })
}

/// One load measurement, as stored in CSV (`n,seconds,delivered`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoadRow {
    pub n: usize,
    pub seconds: f64,
    pub delivered: u64,
}

pub fn write_csv(rows: &[LoadRow], out: impl Write) -> Result<(), FitError> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_csv(input: impl Read) -> Result<Vec<LoadRow>, FitError> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    Ok(r.deserialize().collect::<Result<Vec<LoadRow>, _>>()?)
}

/// Fits seconds against client count.
pub fn fit_rows(rows: &[LoadRow], model: Model) -> Result<Fit, FitError> {
    let points: Vec<_> = rows.iter().map(|r| (r.n as f64, r.seconds)).collect();
    fit(&points, model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-9
    }

    #[test]
    fn exact_line() {
        let pts: Vec<_> = (1..=5).map(|x| (x as f64, 2.0 * x as f64 + 1.0)).collect();
        let f = fit(&pts, Model::Linear).unwrap();
        assert!(close(f.coefficients[0], 2.0) && close(f.coefficients[1], 1.0));
        assert!(close(f.r_squared, 1.0));
    }

    #[test]
    fn exact_square() {
        let pts: Vec<_> = (1..=5).map(|x| (x as f64, (x * x) as f64)).collect();
        let q = fit(&pts, Model::Quadratic).unwrap();
        assert!(close(q.r_squared, 1.0));
        assert!(close(q.coefficients[0], 1.0));
        let l = fit(&pts, Model::Linear).unwrap();
        assert!(l.r_squared < 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit(&[(1.0, 1.0), (2.0, 2.0)], Model::Linear),
            Err(FitError::DegenerateInput(_))
        ));
        let flat = [(1.0, 3.0), (2.0, 3.0), (3.0, 3.0)];
        assert!(matches!(fit(&flat, Model::Linear), Err(FitError::DegenerateInput(_))));
        let same_x = [(1.0, 1.0), (1.0, 2.0), (1.0, 3.0)];
        assert!(matches!(fit(&same_x, Model::Linear), Err(FitError::DegenerateInput(_))));
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            LoadRow {
                n: 5,
                seconds: 0.25,
                delivered: 60,
            },
            LoadRow {
                n: 10,
                seconds: 0.5,
                delivered: 270,
            },
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        assert!(String::from_utf8(buf.clone())
            .unwrap()
            .starts_with("n,seconds,delivered\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }
}
