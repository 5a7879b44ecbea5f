use std::f64::consts::PI;

use super::BlockError;
use crate::milp::{LinExpr, LinearConstraint};

/// Regular polygon inscribed in the disk `p² + q² ≤ S²`, as half-planes.
///
/// Vertices sit at angles `2πk/n`, so the axis points `(±S, 0)` and (for
/// `n` divisible by 4) `(0, ±S)` are exactly representable.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub sides: usize,
    pub s_max: f64,
    /// Outward unit normals `(cos ψ_k, sin ψ_k)` with `ψ_k = (2k+1)π/n`.
    pub normals: Vec<(f64, f64)>,
    /// Common right-hand side `S cos(π/n)`.
    pub rhs: f64,
}

pub fn circle_polygon(s_max: f64, sides: usize) -> Result<Polygon, BlockError> {
    if sides < 4 || !sides.is_multiple_of(2) {
        return Err(BlockError::PolygonSides(sides));
    }
    let n = sides as f64;
    let normals = (0..sides)
        .map(|k| {
            let psi = (2 * k + 1) as f64 * PI / n;
            (psi.cos(), psi.sin())
        })
        .collect();
    Ok(Polygon {
        sides,
        s_max,
        normals,
        rhs: s_max * (PI / n).cos(),
    })
}

impl Polygon {
    pub fn contains(&self, p: f64, q: f64, tol: f64) -> bool {
        self.normals
            .iter()
            .all(|&(c, s)| c * p + s * q <= self.rhs + tol)
    }

    /// Largest half-plane excess at `(p, q)`; nonpositive inside.
    pub fn excess(&self, p: f64, q: f64) -> f64 {
        self.normals
            .iter()
            .map(|&(c, s)| c * p + s * q - self.rhs)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn constraints(&self, p: &LinExpr, q: &LinExpr) -> Vec<LinearConstraint> {
        self.normals
            .iter()
            .map(|&(c, s)| LinearConstraint::le(p.clone() * c + q.clone() * s, self.rhs))
            .collect()
    }

    /// Same polygon shape scaled to another radius.
    pub fn with_radius(&self, s_max: f64) -> Polygon {
        let k = if self.s_max == 0.0 {
            0.0
        } else {
            s_max / self.s_max
        };
        Polygon {
            sides: self.sides,
            s_max,
            normals: self.normals.clone(),
            rhs: if self.s_max == 0.0 {
                s_max * (PI / self.sides as f64).cos()
            } else {
                self.rhs * k
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_vertex_accepted_and_outside_rejected() {
        let poly = circle_polygon(2.0, 12).unwrap();
        assert!(poly.contains(2.0, 0.0, 1e-12));
        assert!(poly.contains(0.0, 2.0, 1e-12));
        assert!(poly.contains(0.0, 0.0, 0.0));
        assert!(!poly.contains(2.02, 0.0, 1e-12));
    }

    #[test]
    fn too_few_sides() {
        assert_eq!(circle_polygon(1.0, 3), Err(BlockError::PolygonSides(3)));
        assert_eq!(circle_polygon(1.0, 7), Err(BlockError::PolygonSides(7)));
    }

    #[test]
    fn full_capacity_on_both_axes_rejected() {
        let poly = circle_polygon(1.0, 12).unwrap();
        assert!(!poly.contains(1.0, 0.5, 1e-12));
    }
}
