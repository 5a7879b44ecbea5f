//! MILP fragments for one period of one TDI subproblem.
//!
//! Every block works on Bernstein coefficients: a block for period `m`
//! creates `degree + 1` variables per trajectory and lowers each relation to
//! coefficient-wise rows, which is sufficient for the relation to hold at
//! every instant of the period.

mod devices;
mod network_block;
mod polygon;

use thiserror::Error;

use crate::milp::{LinExpr, MilpError, MilpProblem, VarId};

pub use devices::{
    capbank_block, ess_block, load_block, mccormick, pv_block, sop_block, svc_block, volt_var,
    CapBlock, EssBlock, LoadBlock, PvBlock, SopBlock, SvcBlock,
};
pub use network_block::{network_block, voltage_block, NetworkBlock, TapBlock};
pub use polygon::{circle_polygon, Polygon};

#[derive(Debug, Error, PartialEq)]
pub enum BlockError {
    #[error("polygon needs an even number of sides, at least 4 (got {0})")]
    PolygonSides(usize),
    #[error(
        "ESS {device}: period of {period} s is shorter than the minimum mode duration {required} s"
    )]
    EssDuration {
        device: usize,
        period: f64,
        required: f64,
    },
    #[error("PV {0}: Volt-VAR breakpoints must be strictly increasing")]
    VoltVarBreakpoints(usize),
    #[error("input has {found} coefficients, expected {expected}")]
    Coefficients { found: usize, expected: usize },
    #[error(transparent)]
    Milp(#[from] MilpError),
}

/// Shared per-subproblem settings.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCtx {
    pub degree: usize,
    /// Period length in seconds.
    pub period: f64,
    /// Untightened squared-voltage limits, used for McCormick envelopes.
    pub u_min: f64,
    pub u_max: f64,
    pub polygon_sides: usize,
    pub ess_mode_flags: bool,
}

impl BlockCtx {
    pub fn coeff_count(&self) -> usize {
        self.degree + 1
    }

    pub fn period_hours(&self) -> f64 {
        self.period / 3600.0
    }

    fn check_len(&self, len: usize) -> Result<(), BlockError> {
        if len != self.coeff_count() {
            return Err(BlockError::Coefficients {
                found: len,
                expected: self.coeff_count(),
            });
        }
        Ok(())
    }
}

pub fn coef_vars(
    pb: &mut MilpProblem,
    name: &str,
    count: usize,
    lo: f64,
    hi: f64,
) -> Result<Vec<VarId>, MilpError> {
    (0..count)
        .map(|i| pb.add_continuous(format!("{name}[{i}]"), lo, hi))
        .collect()
}

pub fn exprs(vars: &[VarId]) -> Vec<LinExpr> {
    vars.iter().map(|&v| LinExpr::from(v)).collect()
}
