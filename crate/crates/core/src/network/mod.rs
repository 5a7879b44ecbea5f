//! Radial network and device data model.
//!
//! All electrical quantities are per unit on the declared base. Voltages are
//! squared magnitudes. Times are seconds; ESS energy is p.u.·h.

mod io;
mod topology;
mod validate;

use std::fmt;

use thiserror::Error;

pub use io::{load_model, load_model_str, save_model, to_json};
pub use topology::Topology;
pub use validate::validate;

#[derive(Debug, Clone, PartialEq)]
pub struct Base {
    pub mva: f64,
    pub kv: f64,
}

impl Default for Base {
    fn default() -> Self {
        Self {
            mva: 10.0,
            kv: 10.0,
        }
    }
}

/// Assessment window `[t1, t2]` split into periods of length `period`.
#[derive(Debug, Clone, PartialEq)]
pub struct Horizon {
    pub t1: f64,
    pub t2: f64,
    pub period: f64,
}

impl Horizon {
    /// Number of periods, or `None` if `(t2 - t1) / period` is not a positive integer.
    pub fn periods(&self) -> Option<usize> {
        if !(self.period > 0.0) || !(self.t2 > self.t1) {
            return None;
        }
        let ratio = (self.t2 - self.t1) / self.period;
        let m = ratio.round();
        if m >= 1.0 && (ratio - m).abs() <= 1e-9 * ratio.max(1.0) {
            Some(m as usize)
        } else {
            None
        }
    }

    pub fn period_hours(&self) -> f64 {
        self.period / 3600.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoltageLimits {
    pub u_min: f64,
    pub u_max: f64,
    /// Squared voltage held at the interface node.
    pub u_source: f64,
}

impl Default for VoltageLimits {
    fn default() -> Self {
        Self {
            u_min: 0.95 * 0.95,
            u_max: 1.05 * 1.05,
            u_source: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BranchKind {
    Plain,
    /// Selectable turns ratios `a_k`.
    Oltc {
        taps: Vec<f64>,
    },
    Regulator {
        tau_min: f64,
        tau_max: f64,
    },
}

impl BranchKind {
    pub fn label(&self) -> &'static str {
        match self {
            BranchKind::Plain => "plain",
            BranchKind::Oltc { .. } => "oltc",
            BranchKind::Regulator { .. } => "regulator",
        }
    }
}

/// Branch oriented away from the interface node (`from` is the parent).
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub kind: BranchKind,
}

/// Sampled series, times in seconds since the horizon start.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Profile {
    pub samples: Vec<(f64, f64)>,
}

impl Profile {
    pub fn new(samples: Vec<(f64, f64)>) -> Self {
        Self { samples }
    }

    /// Uniformly sampled `f` on `[0, duration]` with `count` points.
    pub fn from_fn(duration: f64, count: usize, f: impl Fn(f64) -> f64) -> Self {
        let step = duration / (count.max(2) - 1) as f64;
        Self {
            samples: (0..count.max(2))
                .map(|k| (k as f64 * step, f(k as f64 * step)))
                .collect(),
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|&(t, v)| (t, v * k)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvUnit {
    pub node: usize,
    pub s_max: f64,
    pub q_max: f64,
    /// Squared-voltage breakpoints `U1 ≤ U2 < U3 ≤ U4` of the Volt-VAR curve.
    pub u_breaks: [f64; 4],
    pub p_max: Profile,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoadPoint {
    pub node: usize,
    pub p: Profile,
    /// Reactive ratio, `Q = phi · P`.
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssDevice {
    pub node: usize,
    pub e_max: f64,
    pub e0: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    pub p_c: f64,
    pub p_d: f64,
    /// Minimum charge duration in seconds.
    pub t_min_c: f64,
    /// Minimum discharge duration in seconds.
    pub t_min_d: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopDevice {
    pub node_i: usize,
    pub node_j: usize,
    /// Per-terminal apparent power capacity.
    pub s_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcDevice {
    pub node: usize,
    pub k: f64,
    pub u_ref: f64,
    pub q_min: Option<f64>,
    pub q_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacitorBank {
    pub node: usize,
    /// Step susceptances including the off position.
    pub steps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintySpec {
    pub alpha: f64,
    /// One variance per PV unit, in model order.
    pub sigma2_pv: Vec<f64>,
    /// One variance per load, in model order.
    pub sigma2_load: Vec<f64>,
}

impl UncertaintySpec {
    pub fn deterministic(n_pv: usize, n_load: usize) -> Self {
        Self {
            alpha: 0.5,
            sigma2_pv: vec![0.0; n_pv],
            sigma2_load: vec![0.0; n_load],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkModel {
    pub base: Base,
    pub horizon: Horizon,
    pub voltage: VoltageLimits,
    /// Node count including the interface node 0.
    pub nodes: usize,
    pub branches: Vec<Branch>,
    pub pv_units: Vec<PvUnit>,
    pub loads: Vec<LoadPoint>,
    pub ess_devices: Vec<EssDevice>,
    pub sop_devices: Vec<SopDevice>,
    pub svc_devices: Vec<SvcDevice>,
    pub cap_banks: Vec<CapacitorBank>,
    pub uncertainty: UncertaintySpec,
}

impl NetworkModel {
    /// Number of periods; panics on a model that failed validation.
    pub fn periods(&self) -> usize {
        self.horizon.periods().expect("validated horizon")
    }

    pub fn topology(&self) -> Result<Topology, ModelError> {
        Topology::new(self.nodes, &self.branches)
    }

    /// Copy with every PV forecast scaled by `k`.
    pub fn with_pv_scale(&self, k: f64) -> Self {
        let mut m = self.clone();
        for pv in &mut m.pv_units {
            pv.p_max = pv.p_max.scaled(k);
        }
        m
    }

    pub fn with_alpha(&self, alpha: f64) -> Self {
        let mut m = self.clone();
        m.uncertainty.alpha = alpha;
        m
    }

    pub fn without_sop(&self) -> Self {
        let mut m = self.clone();
        m.sop_devices.clear();
        m
    }

    pub fn without_ess(&self) -> Self {
        let mut m = self.clone();
        m.ess_devices.clear();
        m
    }

    pub fn deterministic(&self) -> Self {
        let mut m = self.clone();
        m.uncertainty = UncertaintySpec::deterministic(m.pv_units.len(), m.loads.len());
        m
    }
}

/// One broken invariant.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub entity: String,
    pub rule: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.rule)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed model {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid model: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}
