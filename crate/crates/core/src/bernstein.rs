//! Piecewise Bernstein-polynomial trajectories.
//!
//! A trajectory over `[t1, t1 + M·T]` is stored as one coefficient vector per
//! period. Within period `m` the value is `Σ_i c_{m,i} · C(n,i) s^i (1-s)^{n-i}`
//! with the local coordinate `s = (t - t_m) / T`.
//!
//! Because every basis function is nonnegative and they sum to one, a
//! trajectory stays inside the convex hull of its coefficients. Linear
//! inequalities that must hold for every `t` are therefore lowered to one
//! inequality per coefficient (see [`coefficient_bounds`]).

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::milp::{LinExpr, LinearConstraint, Sense};

/// Degree used for decision trajectories in continuous-time mode.
pub const CUBIC: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum SignalError {
    #[error("time {t} is outside the horizon [{start}, {end}]")]
    OutsideHorizon { t: f64, start: f64, end: f64 },
    #[error("period index {index} is invalid for a trajectory with {periods} periods")]
    InvalidPeriod { index: usize, periods: usize },
    #[error("cannot differentiate a degree-0 trajectory")]
    DegreeZero,
    #[error(
        "period {period} has {samples} samples but a degree-{degree} fit needs at least {needed}"
    )]
    Underdetermined {
        period: usize,
        samples: usize,
        degree: usize,
        needed: usize,
    },
    #[error("coefficient vector {period} has {found} entries, expected {expected}")]
    BadCoefficients {
        period: usize,
        found: usize,
        expected: usize,
    },
    #[error("sample at t = {t} lies outside [{start}, {end}]")]
    SampleOutsideHorizon { t: f64, start: f64, end: f64 },
    #[error("least-squares system is singular")]
    Singular,
}

/// Binomial coefficient `C(n, k)` as a float.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Bernstein basis of degree `n` evaluated at local coordinate `s ∈ [0, 1]`.
pub fn basis(n: usize, s: f64) -> Vec<f64> {
    let u = 1.0 - s;
    (0..=n)
        .map(|i| binomial(n, i) * s.powi(i as i32) * u.powi((n - i) as i32))
        .collect()
}

/// Evaluates a single Bernstein polynomial at local coordinate `s`.
///
/// Uses de Casteljau's recursion, which is exact for constant and affine
/// coefficient vectors.
pub fn eval_local(coeffs: &[f64], s: f64) -> f64 {
    let mut work = coeffs.to_vec();
    let n = work.len();
    for r in 1..n {
        for i in 0..n - r {
            work[i] = (1.0 - s) * work[i] + s * work[i + 1];
        }
    }
    work.first().copied().unwrap_or(0.0)
}

/// A continuous-time signal represented by per-period Bernstein coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct CtTrajectory {
    degree: usize,
    period: f64,
    start: f64,
    coeffs: Vec<Vec<f64>>,
}

impl CtTrajectory {
    pub fn new(
        degree: usize,
        period: f64,
        start: f64,
        coeffs: Vec<Vec<f64>>,
    ) -> Result<Self, SignalError> {
        for (m, c) in coeffs.iter().enumerate() {
            if c.len() != degree + 1 {
                return Err(SignalError::BadCoefficients {
                    period: m,
                    found: c.len(),
                    expected: degree + 1,
                });
            }
        }
        Ok(Self {
            degree,
            period,
            start,
            coeffs,
        })
    }

    /// A trajectory equal to `value` everywhere.
    pub fn constant(degree: usize, period: f64, start: f64, periods: usize, value: f64) -> Self {
        Self {
            degree,
            period,
            start,
            coeffs: vec![vec![value; degree + 1]; periods],
        }
    }

    /// Exact representation of the affine function `slope·(t - start) + intercept`.
    pub fn affine(
        degree: usize,
        period: f64,
        start: f64,
        periods: usize,
        slope: f64,
        intercept: f64,
    ) -> Self {
        let coeffs = (0..periods)
            .map(|m| {
                let a = intercept + slope * period * m as f64;
                let span = slope * period;
                (0..=degree)
                    .map(|i| {
                        if degree == 0 {
                            a + 0.5 * span
                        } else {
                            a + span * i as f64 / degree as f64
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            degree,
            period,
            start,
            coeffs,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.start + self.period * self.coeffs.len() as f64
    }

    pub fn periods(&self) -> usize {
        self.coeffs.len()
    }

    pub fn coeffs(&self) -> &[Vec<f64>] {
        &self.coeffs
    }

    pub fn period_coeffs(&self, m: usize) -> &[f64] {
        &self.coeffs[m]
    }

    pub fn into_coeffs(self) -> Vec<Vec<f64>> {
        self.coeffs
    }

    /// Locates the period containing `t` and its local coordinate.
    ///
    /// Period boundaries belong to the left period, so `t_m + T` maps to
    /// `(m, 1.0)`. The horizon start maps to `(0, 0.0)`.
    pub fn locate(&self, t: f64) -> Result<(usize, f64), SignalError> {
        let end = self.end();
        if !(t >= self.start && t <= end) || self.coeffs.is_empty() {
            return Err(SignalError::OutsideHorizon {
                t,
                start: self.start,
                end,
            });
        }
        let x = (t - self.start) / self.period;
        let mut m = x.ceil() as usize;
        m = m.saturating_sub(1);
        let m = m.min(self.coeffs.len() - 1);
        let s = (x - m as f64).clamp(0.0, 1.0);
        Ok((m, s))
    }

    pub fn evaluate(&self, t: f64) -> Result<f64, SignalError> {
        let (m, s) = self.locate(t)?;
        Ok(eval_local(&self.coeffs[m], s))
    }

    /// `∫` over period `m` (zero-based): `T/(n+1) · Σ_i c_{m,i}`.
    pub fn integrate_period(&self, m: usize) -> Result<f64, SignalError> {
        let c = self.coeffs.get(m).ok_or(SignalError::InvalidPeriod {
            index: m,
            periods: self.coeffs.len(),
        })?;
        Ok(self.period / (self.degree + 1) as f64 * c.iter().sum::<f64>())
    }

    pub fn integrate(&self) -> f64 {
        (0..self.coeffs.len())
            .map(|m| self.integrate_period(m).unwrap_or(0.0))
            .sum()
    }

    /// Time derivative; degree drops by one.
    pub fn derivative(&self) -> Result<CtTrajectory, SignalError> {
        if self.degree == 0 {
            return Err(SignalError::DegreeZero);
        }
        let n = self.degree as f64;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                c.windows(2)
                    .map(|w| n * (w[1] - w[0]) / self.period)
                    .collect()
            })
            .collect();
        Ok(CtTrajectory {
            degree: self.degree - 1,
            period: self.period,
            start: self.start,
            coeffs,
        })
    }

    /// Running integral starting at `initial`; degree rises by one and the
    /// value carries across period boundaries.
    pub fn antiderivative(&self, initial: f64) -> CtTrajectory {
        let h = self.period / (self.degree + 1) as f64;
        let mut running = initial;
        let coeffs = self
            .coeffs
            .iter()
            .map(|c| {
                let mut out = Vec::with_capacity(c.len() + 1);
                out.push(running);
                for &ck in c {
                    running += h * ck;
                    out.push(running);
                }
                out
            })
            .collect();
        CtTrajectory {
            degree: self.degree + 1,
            period: self.period,
            start: self.start,
            coeffs,
        }
    }

    /// Period-mean projection onto piecewise constants.
    pub fn to_piecewise_constant(&self) -> CtTrajectory {
        let k = (self.degree + 1) as f64;
        CtTrajectory {
            degree: 0,
            period: self.period,
            start: self.start,
            coeffs: self
                .coeffs
                .iter()
                .map(|c| vec![c.iter().sum::<f64>() / k])
                .collect(),
        }
    }

    /// The same curve on a basis of higher degree.
    pub fn elevated(&self, degree: usize) -> CtTrajectory {
        let mut out = self.clone();
        while out.degree < degree {
            let n1 = (out.degree + 1) as f64;
            for c in &mut out.coeffs {
                let mut next = Vec::with_capacity(c.len() + 1);
                next.push(c[0]);
                for i in 1..c.len() {
                    let w = i as f64 / n1;
                    next.push(w * c[i - 1] + (1.0 - w) * c[i]);
                }
                next.push(c[c.len() - 1]);
                *c = next;
            }
            out.degree += 1;
        }
        out
    }

    /// Pointwise scaling of every coefficient.
    pub fn scaled(&self, factor: f64) -> CtTrajectory {
        let mut out = self.clone();
        for c in out.coeffs.iter_mut().flatten() {
            *c *= factor;
        }
        out
    }

    /// Sum of all coefficients over all periods.
    pub fn coefficient_sum(&self) -> f64 {
        self.coeffs.iter().flatten().sum()
    }
}

/// Result of lifting sampled data into a trajectory.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub trajectory: CtTrajectory,
    /// Euclidean norm of the sample residuals.
    pub residual: f64,
}

/// Least-squares fit of a C0-continuous piecewise Bernstein trajectory.
///
/// Neighbouring periods share their boundary coefficient. A sample lying
/// exactly on an interior boundary is assigned to the left period, which is
/// harmless because both periods take the same value there.
pub fn fit(
    samples: &[(f64, f64)],
    degree: usize,
    period: f64,
    start: f64,
    periods: usize,
) -> Result<FitResult, SignalError> {
    let end = start + period * periods as f64;
    let tol = 1e-9 * period.abs().max(1.0);
    let mut counts = vec![0usize; periods];
    let shell = CtTrajectory::constant(degree, period, start, periods, 0.0);
    let mut located = Vec::with_capacity(samples.len());
    for &(t, v) in samples {
        if t < start - tol || t > end + tol {
            return Err(SignalError::SampleOutsideHorizon { t, start, end });
        }
        let (m, s) = shell.locate(t.clamp(start, end))?;
        counts[m] += 1;
        located.push((m, s, v));
    }
    for (m, &c) in counts.iter().enumerate() {
        if c < degree + 1 {
            return Err(SignalError::Underdetermined {
                period: m,
                samples: c,
                degree,
                needed: degree + 1,
            });
        }
    }

    // Global unknown index of coefficient i in period m.
    let shared = degree > 0;
    let stride = if shared { degree } else { 1 };
    let unknowns = if shared {
        periods * degree + 1
    } else {
        periods
    };
    let column = |m: usize, i: usize| if shared { m * stride + i } else { m };

    let mut a = DMatrix::<f64>::zeros(located.len(), unknowns);
    let mut b = DVector::<f64>::zeros(located.len());
    for (row, &(m, s, v)) in located.iter().enumerate() {
        for (i, w) in basis(degree, s).into_iter().enumerate() {
            a[(row, column(m, i))] += w;
        }
        b[row] = v;
    }

    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-12).map_err(|_| SignalError::Singular)?;
    let residual = (&a * &x - &b).norm();

    let coeffs = (0..periods)
        .map(|m| (0..=degree).map(|i| x[column(m, i)]).collect())
        .collect();
    Ok(FitResult {
        trajectory: CtTrajectory {
            degree,
            period,
            start,
            coeffs,
        },
        residual,
    })
}

/// Direction of a coefficient-wise bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundSense {
    /// trajectory ≤ bound
    Upper,
    /// trajectory ≥ bound
    Lower,
}

/// Lowers `traj(t) ≤ bound` (or `≥`) on one period to one inequality per
/// coefficient. Satisfying every emitted row implies the bound holds for all
/// `t` in the period; the converse does not hold.
pub fn coefficient_bounds(
    coeffs: &[LinExpr],
    bound: f64,
    sense: BoundSense,
) -> Vec<LinearConstraint> {
    let sense = match sense {
        BoundSense::Upper => Sense::Le,
        BoundSense::Lower => Sense::Ge,
    };
    coeffs
        .iter()
        .map(|c| LinearConstraint::new(c.clone(), sense, bound))
        .collect()
}

/// Lowers pointwise equality of two same-degree trajectories to
/// coefficient-wise equality, which is exact by linear independence of the
/// basis.
pub fn coefficient_equalities(lhs: &[LinExpr], rhs: &[LinExpr]) -> Vec<LinearConstraint> {
    debug_assert_eq!(lhs.len(), rhs.len());
    lhs.iter()
        .zip(rhs)
        .map(|(l, r)| LinearConstraint::new(l.clone() - r.clone(), Sense::Eq, 0.0))
        .collect()
}

/// Whether a numeric coefficient vector passes the coefficient-wise bound.
pub fn satisfies_coefficient_bound(coeffs: &[f64], bound: f64, sense: BoundSense) -> bool {
    match sense {
        BoundSense::Upper => coeffs.iter().all(|&c| c <= bound),
        BoundSense::Lower => coeffs.iter().all(|&c| c >= bound),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(coeffs: Vec<f64>, period: f64) -> CtTrajectory {
        let n = coeffs.len() - 1;
        CtTrajectory::new(n, period, 0.0, vec![coeffs]).unwrap()
    }

    #[test]
    fn constant_reproduction() {
        let tr = single(vec![2.5; 4], 1.0);
        for t in [0.0, 0.1, 0.5, 0.9, 1.0] {
            assert!((tr.evaluate(t).unwrap() - 2.5).abs() < 1e-15);
        }
    }

    #[test]
    fn endpoint_is_last_coefficient() {
        let tr = single(vec![0.0, 0.0, 0.0, 1.0], 2.0);
        assert_eq!(tr.evaluate(2.0).unwrap(), 1.0);
    }

    #[test]
    fn midpoint_of_ramp() {
        let tr = single(vec![0.0, 1.0, 2.0, 3.0], 1.0);
        // (0·1 + 1·3 + 2·3 + 3·1) / 8
        assert!((tr.evaluate(0.5).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn boundary_belongs_to_left_period() {
        let tr =
            CtTrajectory::new(3, 1.0, 0.0, vec![vec![0.0, 0.0, 0.0, 7.0], vec![1.0; 4]]).unwrap();
        assert_eq!(tr.evaluate(1.0).unwrap(), 7.0);
        assert_eq!(tr.locate(0.0).unwrap(), (0, 0.0));
    }

    #[test]
    fn outside_horizon_is_an_error() {
        let tr = single(vec![1.0; 4], 1.0);
        assert!(matches!(
            tr.evaluate(1.5),
            Err(SignalError::OutsideHorizon { .. })
        ));
        assert!(matches!(
            tr.evaluate(-0.1),
            Err(SignalError::OutsideHorizon { .. })
        ));
    }

    #[test]
    fn period_integrals() {
        assert_eq!(single(vec![1.0; 4], 2.0).integrate_period(0).unwrap(), 2.0);
        assert_eq!(
            single(vec![0.0, 0.0, 0.0, 4.0], 1.0)
                .integrate_period(0)
                .unwrap(),
            1.0
        );
        assert_eq!(single(vec![0.0; 4], 1.0).integrate_period(0).unwrap(), 0.0);
        assert!(matches!(
            single(vec![0.0; 4], 1.0).integrate_period(1),
            Err(SignalError::InvalidPeriod { .. })
        ));
    }

    #[test]
    fn derivative_rules() {
        let c = single(vec![3.0; 4], 1.0).derivative().unwrap();
        assert_eq!(c.period_coeffs(0), &[0.0, 0.0, 0.0]);

        let t = 4.0;
        let ramp = single(vec![0.0, t / 3.0, 2.0 * t / 3.0, t], t)
            .derivative()
            .unwrap();
        for v in ramp.period_coeffs(0) {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let zero = CtTrajectory::constant(0, 1.0, 0.0, 1, 1.0);
        assert_eq!(zero.derivative(), Err(SignalError::DegreeZero));
    }

    #[test]
    fn antiderivative_of_one() {
        let one = CtTrajectory::constant(3, 1.0, 0.0, 1, 1.0);
        let a = one.antiderivative(0.0);
        assert_eq!(a.degree(), 4);
        let expected = [0.0, 0.25, 0.5, 0.75, 1.0];
        for (v, e) in a.period_coeffs(0).iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
        let two = CtTrajectory::constant(3, 1.0, 0.0, 2, 1.0).antiderivative(0.0);
        assert!((two.evaluate(2.0).unwrap() - 2.0).abs() < 1e-15);
        let zero = CtTrajectory::constant(3, 1.0, 0.0, 3, 0.0).antiderivative(1.7);
        assert!(zero.coeffs().iter().flatten().all(|&c| c == 1.7));
    }

    #[test]
    fn derivative_inverts_antiderivative() {
        let f = CtTrajectory::new(
            3,
            0.5,
            0.0,
            vec![vec![1.0, -2.0, 0.3, 4.0], vec![0.1, 0.2, 0.3, 0.4]],
        )
        .unwrap();
        let back = f.antiderivative(3.0).derivative().unwrap();
        for (a, b) in back
            .coeffs()
            .iter()
            .flatten()
            .zip(f.coeffs().iter().flatten())
        {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fit_constant_and_affine() {
        let samples: Vec<_> = (0..=16).map(|k| (k as f64 * 0.25, 5.0)).collect();
        let r = fit(&samples, 3, 1.0, 0.0, 4).unwrap();
        assert!(r.residual < 1e-12);
        assert!(r
            .trajectory
            .coeffs()
            .iter()
            .flatten()
            .all(|c| (c - 5.0).abs() < 1e-12));

        let samples: Vec<_> = (0..=16)
            .map(|k| (k as f64 * 0.25, 2.0 * k as f64 * 0.25 - 1.0))
            .collect();
        let r = fit(&samples, 3, 1.0, 0.0, 4).unwrap();
        assert!(r.residual < 1e-10);
        for k in 0..=40 {
            let t = k as f64 * 0.1;
            assert!((r.trajectory.evaluate(t).unwrap() - (2.0 * t - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn fit_is_continuous_at_boundaries() {
        let samples: Vec<_> = (0..=40)
            .map(|k| {
                let t = k as f64 * 0.1;
                (t, (3.0 * t).sin())
            })
            .collect();
        let r = fit(&samples, 3, 1.0, 0.0, 4).unwrap();
        for m in 0..3 {
            assert_eq!(
                r.trajectory.period_coeffs(m)[3],
                r.trajectory.period_coeffs(m + 1)[0]
            );
        }
    }

    #[test]
    fn fit_rejects_underdetermined_period() {
        let samples = vec![
            (0.0, 1.0),
            (0.5, 1.0),
            (1.0, 1.0),
            (1.5, 1.0),
            (1.7, 1.0),
            (1.9, 1.0),
        ];
        let err = fit(&samples, 3, 1.0, 0.0, 2).unwrap_err();
        assert!(matches!(
            err,
            SignalError::Underdetermined { period: 0, .. }
        ));
    }

    #[test]
    fn mixed_coefficients_are_rejected_even_if_polynomial_is_small() {
        // max of the polynomial is positive but tiny; coefficient 2 violates ≤ 0.125
        let c = [-1.0, 2.0, -1.0, -1.0];
        assert!(!satisfies_coefficient_bound(&c, 0.125, BoundSense::Upper));
    }

    #[test]
    fn partition_of_unity_spot_checks() {
        for n in 0..6 {
            for k in 0..=10 {
                let s = k as f64 / 10.0;
                let sum: f64 = basis(n, s).iter().sum();
                assert!((sum - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn piecewise_constant_projection_preserves_integral() {
        let f = CtTrajectory::new(3, 2.0, 0.0, vec![vec![1.0, 2.0, 5.0, -1.0]]).unwrap();
        let p = f.to_piecewise_constant();
        assert!((p.integrate() - f.integrate()).abs() < 1e-14);
    }
}
