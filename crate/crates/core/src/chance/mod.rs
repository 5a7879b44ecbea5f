//! Gaussian chance-constraint tightening.
//!
//! Rows of the form `D y + G u ≤ d`, where `y` is fixed by the equalities
//! `B y + F u = c - A x` once `x` is chosen, are reduced to an explicit
//! dependence on the offsets `u`, then tightened row-wise with
//! `margin = z_{1-α} · sqrt(Σ G_s² σ_s²)`.

mod quantile;
mod response;

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

pub use quantile::{normal_quantile, z_value};
pub use response::{RatioChoice, ResponseSystem};

#[derive(Debug, Error, PartialEq)]
pub enum ChanceError {
    #[error("dependent-variable system is singular; the model is structurally deficient")]
    Singular,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

/// Inequality `dy · y + gu · u ≤ rhs` before elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitRow {
    pub name: String,
    pub dy: Vec<f64>,
    pub gu: Vec<f64>,
    pub rhs: f64,
}

/// Inequality whose offset dependence is explicit: `dy · y_nominal + g · u ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertainRow {
    pub name: String,
    pub dy: Vec<f64>,
    pub g: Vec<f64>,
    pub rhs: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TightenedRow {
    pub row: UncertainRow,
    pub margin: f64,
    /// `rhs - margin`
    pub rhs: f64,
}

/// Sensitivity `dy/du = -B⁻¹F` of the dependent variables.
pub fn sensitivity(b: &DMatrix<f64>, f: &DMatrix<f64>) -> Result<DMatrix<f64>, ChanceError> {
    if !b.is_square() || b.nrows() != f.nrows() {
        return Err(ChanceError::Dimension(format!(
            "B is {}x{}, F is {}x{}",
            b.nrows(),
            b.ncols(),
            f.nrows(),
            f.ncols()
        )));
    }
    let lu = b.clone().lu();
    // LU on an exactly singular matrix succeeds; reject tiny pivots ourselves.
    let u = lu.u();
    let scale = b.amax().max(1.0);
    if (0..u.nrows()).any(|i| u[(i, i)].abs() <= 1e-12 * scale) {
        return Err(ChanceError::Singular);
    }
    let x = lu.solve(f).ok_or(ChanceError::Singular)?;
    Ok(-x)
}

/// Eliminates `y` from each row: `G_eff = G − D B⁻¹ F`.
pub fn propagate(
    b: &DMatrix<f64>,
    f: &DMatrix<f64>,
    rows: &[ExplicitRow],
) -> Result<Vec<UncertainRow>, ChanceError> {
    let s = sensitivity(b, f)?;
    rows.iter()
        .map(|r| {
            if r.dy.len() != b.ncols() || r.gu.len() != f.ncols() {
                return Err(ChanceError::Dimension(format!("row {}", r.name)));
            }
            let g = (0..f.ncols())
                .map(|k| r.gu[k] + (0..b.ncols()).map(|j| r.dy[j] * s[(j, k)]).sum::<f64>())
                .collect();
            Ok(UncertainRow {
                name: r.name.clone(),
                dy: r.dy.clone(),
                g,
                rhs: r.rhs,
            })
        })
        .collect()
}

/// `z_{1-α} · sqrt(Σ g_s² σ²_s)`.
pub fn margin(g: &[f64], sigma2: &[f64], alpha: f64) -> f64 {
    let var: f64 = g.iter().zip(sigma2).map(|(g, s)| g * g * s).sum();
    if var == 0.0 {
        return 0.0;
    }
    z_value(alpha) * var.sqrt()
}

pub fn tighten(row: UncertainRow, sigma2: &[f64], alpha: f64) -> TightenedRow {
    let m = margin(&row.g, sigma2, alpha);
    TightenedRow {
        rhs: row.rhs - m,
        margin: m,
        row,
    }
}

/// A row evaluated at a candidate solution: `nominal + g · u ≤ rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct McRow {
    pub nominal: f64,
    pub g: Vec<f64>,
    pub rhs: f64,
}

/// Empirical violation frequency of each row under `samples` independent
/// draws of `u ~ N(0, diag σ²)`.
pub fn monte_carlo_check(rows: &[McRow], sigma2: &[f64], samples: usize, seed: u64) -> Vec<f64> {
    let sd: Vec<f64> = sigma2.iter().map(|s| s.sqrt()).collect();
    // rows sharing an offset direction share one projection per draw
    let mut distinct: Vec<&[f64]> = Vec::new();
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let row_dir: Vec<usize> = rows
        .iter()
        .map(|r| {
            let key: Vec<u64> = r.g.iter().map(|x| x.to_bits()).collect();
            *index.entry(key).or_insert_with(|| {
                distinct.push(&r.g);
                distinct.len() - 1
            })
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = vec![0usize; rows.len()];
    let mut u = vec![0.0; sd.len()];
    let mut proj = vec![0.0; distinct.len()];
    for _ in 0..samples {
        for (x, s) in u.iter_mut().zip(&sd) {
            let n: f64 = StandardNormal.sample(&mut rng);
            *x = n * s;
        }
        for (p, g) in proj.iter_mut().zip(&distinct) {
            *p = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        }
        for ((r, &d), h) in rows.iter().zip(&row_dir).zip(hits.iter_mut()) {
            if r.nominal + proj[d] > r.rhs {
                *h += 1;
            }
        }
    }
    hits.into_iter()
        .map(|h| {
            if samples == 0 {
                0.0
            } else {
                h as f64 / samples as f64
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn explicit_row_without_equality_coupling_is_unchanged() {
        let b = DMatrix::identity(2, 2);
        let f = DMatrix::zeros(2, 1);
        let rows = vec![ExplicitRow {
            name: "r".into(),
            dy: vec![1.0, 0.0],
            gu: vec![0.7],
            rhs: 1.0,
        }];
        let out = propagate(&b, &f, &rows).unwrap();
        assert_eq!(out[0].g, vec![0.7]);
    }

    #[test]
    fn substitution_through_one_equality() {
        // y - u = 0, row y ≤ d
        let b = DMatrix::from_row_slice(1, 1, &[1.0]);
        let f = DMatrix::from_row_slice(1, 1, &[-1.0]);
        let rows = vec![ExplicitRow {
            name: "r".into(),
            dy: vec![1.0],
            gu: vec![0.0],
            rhs: 2.0,
        }];
        assert_eq!(propagate(&b, &f, &rows).unwrap()[0].g, vec![1.0]);
    }

    #[test]
    fn singular_system_is_reported() {
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let f = DMatrix::zeros(2, 1);
        assert_eq!(propagate(&b, &f, &[]), Err(ChanceError::Singular));
    }

    #[test]
    fn margins() {
        assert_eq!(margin(&[1.0], &[1.0], 0.5), 0.0);
        assert_eq!(margin(&[1.0, 2.0], &[0.0, 0.0], 0.1), 0.0);
        assert!((margin(&[1.0], &[1.0], 0.1) - 1.2816).abs() < 1e-4);
    }

    #[test]
    fn zero_variance_never_violates() {
        let rows = vec![McRow {
            nominal: 1.0,
            g: vec![1.0],
            rhs: 1.0,
        }];
        assert_eq!(monte_carlo_check(&rows, &[0.0], 1000, 0), vec![0.0]);
    }
}
