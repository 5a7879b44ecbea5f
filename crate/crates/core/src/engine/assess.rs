use std::time::{Duration, Instant};

use rayon::prelude::*;

use super::{
    all_directions, assemble_tube, solve_slice, AssessmentConfig, EngineError, FlexTube, Mode,
    PreparedModel, TubeHorizon,
};
use crate::milp::MilpBackend;
use crate::network::NetworkModel;

#[derive(Debug, Clone)]
pub struct Assessment {
    pub tube: FlexTube,
    pub prepared: PreparedModel,
    pub wall_time: Duration,
}

/// Solves every sampled direction and its antipode on a bounded worker
/// pool and assembles the tube.
pub fn assess(
    model: &NetworkModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
) -> Result<Assessment, EngineError> {
    cfg.validate()?;
    let started = Instant::now();
    let prep = PreparedModel::new(model, cfg.mode)?;
    let thetas = all_directions(cfg.directions)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| EngineError::Config(format!("worker pool: {e}")))?;
    let slices = pool.install(|| {
        thetas
            .par_iter()
            .map(|&th| solve_slice(&prep, cfg, backend, th))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let tube = assemble_tube(TubeHorizon::of(&prep), slices)?;
    Ok(Assessment {
        tube,
        prepared: prep,
        wall_time: started.elapsed(),
    })
}

/// The same assessment with piecewise-constant trajectories.
pub fn dt_assess(
    model: &NetworkModel,
    cfg: &AssessmentConfig,
    backend: &dyn MilpBackend,
) -> Result<Assessment, EngineError> {
    let cfg = AssessmentConfig {
        mode: Mode::Dt,
        ..cfg.clone()
    };
    assess(model, &cfg, backend)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penetration {
    /// PV energy over load energy, on fitted forecast coefficients.
    pub k1: f64,
    /// Storage rating relative to PV; undefined without PV.
    pub k2: Option<f64>,
}

/// PV penetration `K1` and storage capacity `K2` of a model.
pub fn penetration_metrics(model: &NetworkModel) -> Result<Penetration, EngineError> {
    let prep = PreparedModel::new(model, Mode::Ct)?;
    let pv: f64 = prep.pv_forecast.iter().map(|t| t.coefficient_sum()).sum();
    let load: f64 = prep.load_p.iter().map(|t| t.coefficient_sum()).sum();
    if load <= 0.0 {
        return Err(EngineError::NoLoad);
    }
    // empty sums are -0.0; adding 0.0 normalizes them
    let rating: f64 = model.ess_devices.iter().map(|e| e.p_d.max(e.p_c)).sum();
    let coeffs = (prep.degree() + 1) * prep.periods();
    let k2 = if pv > 0.0 {
        Some(coeffs as f64 * rating / pv + 0.0)
    } else {
        None
    };
    Ok(Penetration {
        k1: pv / load + 0.0,
        k2,
    })
}
