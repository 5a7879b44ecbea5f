use std::f64::consts::{PI, TAU};

use super::{EngineError, PreparedModel, Slice};
use crate::bernstein::{SignalError, CUBIC};

/// Angle matching tolerance between a query and a sampled direction.
const ANGLE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubeHorizon {
    pub degree: usize,
    pub period: f64,
    pub start: f64,
    pub periods: usize,
}

impl TubeHorizon {
    pub fn of(prep: &PreparedModel) -> Self {
        Self {
            degree: prep.degree(),
            period: prep.period(),
            start: prep.start(),
            periods: prep.periods(),
        }
    }

    pub fn end(&self) -> f64 {
        self.start + self.period * self.periods as f64
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start && t <= self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TubePoint {
    Point { p: f64, q: f64 },
    Gap,
}

/// Slices ordered by direction over `[0, 2π)`, gaps included.
#[derive(Debug, Clone, PartialEq)]
pub struct FlexTube {
    pub horizon: TubeHorizon,
    pub slices: Vec<Slice>,
}

pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

fn same_angle(a: f64, b: f64) -> bool {
    let d = (normalize_angle(a) - normalize_angle(b)).abs();
    d <= ANGLE_TOL || (TAU - d) <= ANGLE_TOL
}

pub fn assemble_tube(
    horizon: TubeHorizon,
    mut slices: Vec<Slice>,
) -> Result<FlexTube, EngineError> {
    if slices.is_empty() {
        return Err(EngineError::EmptyTube);
    }
    for s in &mut slices {
        s.theta = normalize_angle(s.theta);
    }
    slices.sort_by(|a, b| a.theta.total_cmp(&b.theta));
    for w in slices.windows(2) {
        if same_angle(w[0].theta, w[1].theta) {
            return Err(EngineError::DuplicateDirection(w[1].theta));
        }
    }
    if slices.len() > 1 && same_angle(slices[0].theta, slices[slices.len() - 1].theta) {
        return Err(EngineError::DuplicateDirection(slices[0].theta));
    }
    Ok(FlexTube { horizon, slices })
}

/// The direction subset used for the aggregate metric by default.
pub fn default_theta_set() -> Vec<f64> {
    (0..6).map(|k| k as f64 * PI / 3.0).collect()
}

impl FlexTube {
    pub fn directions(&self) -> Vec<f64> {
        self.slices.iter().map(|s| s.theta).collect()
    }

    pub fn gap_count(&self) -> usize {
        self.slices
            .iter()
            .filter(|s| !s.status.is_feasible())
            .count()
    }

    pub fn find(&self, theta: f64) -> Option<usize> {
        self.slices.iter().position(|s| same_angle(s.theta, theta))
    }

    fn check_time(&self, t: f64) -> Result<(), EngineError> {
        if !self.horizon.contains(t) {
            return Err(SignalError::OutsideHorizon {
                t,
                start: self.horizon.start,
                end: self.horizon.end(),
            }
            .into());
        }
        Ok(())
    }

    /// `S0(t)` of slice `k`, or `None` for a gap.
    pub fn radius(&self, k: usize, t: f64) -> Result<Option<f64>, EngineError> {
        self.check_time(t)?;
        match &self.slices[k].s0 {
            Some(tr) => Ok(Some(tr.evaluate(t)?)),
            None => Ok(None),
        }
    }

    /// Boundary point `S0(t)(cos θ_k, sin θ_k)` of slice `k`.
    pub fn endpoint(&self, k: usize, t: f64) -> Result<Option<(f64, f64)>, EngineError> {
        let th = self.slices[k].theta;
        Ok(self.radius(k, t)?.map(|r| (r * th.cos(), r * th.sin())))
    }

    /// Neighbouring sampled directions around `θ` as `(lower, upper)` indices
    /// with the upper angle unwrapped above the lower one.
    pub fn bracket(&self, theta: f64) -> (usize, f64, usize, f64) {
        let n = self.slices.len();
        let th = normalize_angle(theta);
        let hi = self.slices.iter().position(|s| s.theta > th).unwrap_or(n);
        let (lo, hi) = if hi == 0 {
            (n - 1, 0)
        } else {
            (hi - 1, hi % n)
        };
        let mut t_lo = self.slices[lo].theta;
        let mut t_hi = self.slices[hi].theta;
        if t_lo > th {
            t_lo -= TAU;
        }
        if t_hi <= t_lo {
            t_hi += TAU;
        }
        (lo, t_lo, hi, t_hi)
    }

    /// Boundary point in direction `θ` at time `t` by affine interpolation
    /// between the two neighbouring slices; a gap if either is infeasible.
    pub fn query_point(&self, theta: f64, t: f64) -> Result<TubePoint, EngineError> {
        self.check_time(t)?;
        if let Some(k) = self.find(theta) {
            return Ok(match self.endpoint(k, t)? {
                Some((p, q)) => TubePoint::Point { p, q },
                None => TubePoint::Gap,
            });
        }
        if self.slices.len() < 2 {
            return Ok(TubePoint::Gap);
        }
        let th = normalize_angle(theta);
        let (lo, t_lo, hi, t_hi) = self.bracket(th);
        let th = if th < t_lo { th + TAU } else { th };
        let (Some(a), Some(b)) = (self.endpoint(lo, t)?, self.endpoint(hi, t)?) else {
            return Ok(TubePoint::Gap);
        };
        let w = (th - t_lo) / (t_hi - t_lo);
        Ok(TubePoint::Point {
            p: (1.0 - w) * a.0 + w * b.0,
            q: (1.0 - w) * a.1 + w * b.1,
        })
    }
}

/// `Σ_{θ∈Θ} Σ_m Σ_i S0[m][i]`, counted on the cubic Bernstein basis so CT
/// and DT tubes are comparable; infeasible directions contribute 0.
pub fn metric_m(tube: &FlexTube, thetas: &[f64]) -> Result<f64, EngineError> {
    let mut total = 0.0;
    for &th in thetas {
        let k = tube.find(th).ok_or(EngineError::UnknownDirection(th))?;
        if let Some(tr) = &tube.slices[k].s0 {
            // degree elevation preserves the mean of the coefficients
            total += tr.coefficient_sum() * (CUBIC + 1) as f64 / (tr.degree() + 1) as f64;
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::CtTrajectory;
    use crate::engine::SliceStatus;
    use std::time::Duration;

    fn horizon() -> TubeHorizon {
        TubeHorizon {
            degree: 3,
            period: 1.0,
            start: 0.0,
            periods: 4,
        }
    }

    fn slice(theta: f64, r: Option<f64>) -> Slice {
        match r {
            Some(r) => Slice {
                theta,
                status: SliceStatus::Optimal,
                s0: Some(CtTrajectory::constant(3, 1.0, 0.0, 4, r)),
                period_objective: vec![r; 4],
                wall_time: Duration::ZERO,
            },
            None => Slice::infeasible(theta, SliceStatus::Infeasible, Duration::ZERO),
        }
    }

    fn ring(radii: &[Option<f64>]) -> FlexTube {
        let n = radii.len();
        let slices = radii
            .iter()
            .enumerate()
            .map(|(k, &r)| slice(k as f64 * TAU / n as f64, r))
            .collect();
        assemble_tube(horizon(), slices).unwrap()
    }

    #[test]
    fn endpoint_and_midpoint_queries() {
        let tube = ring(&[Some(2.0), Some(2.0), Some(2.0), Some(2.0)]);
        assert_eq!(
            tube.query_point(0.0, 0.5).unwrap(),
            TubePoint::Point { p: 2.0, q: 0.0 }
        );
        match tube.query_point(PI / 4.0, 0.5).unwrap() {
            TubePoint::Point { p, q } => {
                assert!((p - 1.0).abs() < 1e-12 && (q - 1.0).abs() < 1e-12);
            }
            TubePoint::Gap => panic!("expected a point"),
        }
        // wrap-around interval between 3π/2 and 2π
        match tube.query_point(7.0 * PI / 4.0, 0.5).unwrap() {
            TubePoint::Point { p, q } => {
                assert!((p - 1.0).abs() < 1e-12 && (q + 1.0).abs() < 1e-12);
            }
            TubePoint::Gap => panic!("expected a point"),
        }
    }

    #[test]
    fn gaps_and_errors() {
        let tube = ring(&[Some(1.0), None, Some(1.0), Some(1.0)]);
        assert_eq!(tube.gap_count(), 1);
        assert_eq!(tube.query_point(PI / 4.0, 0.0).unwrap(), TubePoint::Gap);
        assert_eq!(tube.query_point(PI / 2.0, 0.0).unwrap(), TubePoint::Gap);
        assert!(tube.query_point(0.0, 5.0).is_err());
        assert!(matches!(
            assemble_tube(horizon(), vec![]),
            Err(EngineError::EmptyTube)
        ));
        assert!(matches!(
            assemble_tube(horizon(), vec![slice(0.0, None), slice(TAU, None)]),
            Err(EngineError::DuplicateDirection(_))
        ));
    }

    #[test]
    fn metric_counts_coefficients() {
        let tube = ring(&[Some(1.0), None, Some(1.0), Some(1.0)]);
        assert_eq!(metric_m(&tube, &[0.0]).unwrap(), 16.0);
        assert_eq!(metric_m(&tube, &[PI / 2.0]).unwrap(), 0.0);
        assert!(metric_m(&tube, &[0.1]).is_err());
    }
}
