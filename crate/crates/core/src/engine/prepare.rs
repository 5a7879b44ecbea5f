use super::{EngineError, Mode};
use crate::bernstein::{fit, CtTrajectory, CUBIC};
use crate::chance::{z_value, RatioChoice, ResponseSystem};
use crate::network::{validate, ModelError, NetworkModel, Profile, Topology};

/// Validated model with fitted inputs and chance-constraint margins, shared
/// read-only by every direction.
#[derive(Debug, Clone)]
pub struct PreparedModel {
    pub model: NetworkModel,
    pub topo: Topology,
    pub mode: Mode,
    /// Available PV power per unit, clamped at zero.
    pub pv_forecast: Vec<CtTrajectory>,
    /// Forecast less the chance margin, clamped at zero.
    pub pv_avail: Vec<CtTrajectory>,
    pub load_p: Vec<CtTrajectory>,
    /// Per-node voltage margin (index 0 is the source and always 0).
    pub voltage_margin: Vec<f64>,
    pub pv_margin: Vec<f64>,
    /// Offset variances, PV units first, then loads.
    pub sigma2: Vec<f64>,
}

fn fit_profile(model: &NetworkModel, profile: &Profile) -> Result<CtTrajectory, EngineError> {
    let h = &model.horizon;
    let samples: Vec<(f64, f64)> = profile
        .samples
        .iter()
        .map(|&(t, v)| (h.t1 + t, v))
        .collect();
    Ok(fit(&samples, CUBIC, h.period, h.t1, model.periods())?.trajectory)
}

fn clamp_nonneg(tr: &CtTrajectory, shift: f64) -> Result<CtTrajectory, EngineError> {
    let coeffs = tr
        .coeffs()
        .iter()
        .map(|c| c.iter().map(|v| (v - shift).max(0.0)).collect())
        .collect();
    Ok(CtTrajectory::new(
        tr.degree(),
        tr.period(),
        tr.start(),
        coeffs,
    )?)
}

impl PreparedModel {
    pub fn new(model: &NetworkModel, mode: Mode) -> Result<Self, EngineError> {
        Self::build(model, mode, false)
    }

    /// Inputs replaced by their period means in either mode, so CT and DT
    /// runs see identical data.
    pub fn stepwise(model: &NetworkModel, mode: Mode) -> Result<Self, EngineError> {
        Self::build(model, mode, true)
    }

    fn build(model: &NetworkModel, mode: Mode, stepwise: bool) -> Result<Self, EngineError> {
        let violations = validate(model);
        if !violations.is_empty() {
            return Err(ModelError::Invalid(violations).into());
        }
        let topo = model.topology()?;
        let unc = &model.uncertainty;
        let z = z_value(unc.alpha);

        let project = |t: CtTrajectory| match (mode, stepwise) {
            (Mode::Ct, false) => t,
            (Mode::Ct, true) => t.to_piecewise_constant().elevated(CUBIC),
            (Mode::Dt, _) => t.to_piecewise_constant(),
        };
        let mut pv_forecast = Vec::new();
        let mut pv_avail = Vec::new();
        let mut pv_margin = Vec::new();
        for (k, pv) in model.pv_units.iter().enumerate() {
            let fitted = project(clamp_nonneg(&fit_profile(model, &pv.p_max)?, 0.0)?);
            let margin = if unc.sigma2_pv[k] > 0.0 {
                z * unc.sigma2_pv[k].sqrt()
            } else {
                0.0
            };
            pv_avail.push(clamp_nonneg(&fitted, margin)?);
            pv_forecast.push(fitted);
            pv_margin.push(margin);
        }
        let load_p = model
            .loads
            .iter()
            .map(|l| Ok(project(fit_profile(model, &l.p)?)))
            .collect::<Result<Vec<_>, EngineError>>()?;

        let sigma2: Vec<f64> = unc
            .sigma2_pv
            .iter()
            .chain(&unc.sigma2_load)
            .copied()
            .collect();
        let voltage_margin = if sigma2.iter().any(|&s| s > 0.0) {
            ResponseSystem::build(model, &topo, &RatioChoice::worst_case(model))
                .voltage_margins(&sigma2, unc.alpha)?
        } else {
            vec![0.0; model.nodes]
        };

        Ok(Self {
            model: model.clone(),
            topo,
            mode,
            pv_forecast,
            pv_avail,
            load_p,
            voltage_margin,
            pv_margin,
            sigma2,
        })
    }

    pub fn degree(&self) -> usize {
        self.mode.degree()
    }

    pub fn periods(&self) -> usize {
        self.model.periods()
    }

    pub fn period(&self) -> f64 {
        self.model.horizon.period
    }

    pub fn start(&self) -> f64 {
        self.model.horizon.t1
    }
}
