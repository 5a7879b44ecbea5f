use std::ops::Range;

use super::{AssessmentConfig, EngineError, PreparedModel};
use crate::blocks::{
    capbank_block, coef_vars, ess_block, load_block, network_block, pv_block, sop_block, svc_block,
    voltage_block, BlockCtx, CapBlock, EssBlock, LoadBlock, NetworkBlock, PvBlock, SopBlock,
    SvcBlock,
};
use crate::milp::{LinExpr, LinearConstraint, MilpProblem, VarId};

/// Initial data for the first period of a subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceInit {
    /// Starting state of energy per ESS device.
    pub e_start: Vec<f64>,
    /// Pins the first `S0` coefficient (sequential mode with continuity).
    pub s0_start: Option<f64>,
}

impl SliceInit {
    pub fn from_model(prep: &PreparedModel) -> Self {
        Self {
            e_start: prep.model.ess_devices.iter().map(|e| e.e0).collect(),
            s0_start: None,
        }
    }
}

/// Handles to everything emitted for one period.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodLayout {
    pub index: usize,
    pub u: Vec<Vec<LinExpr>>,
    pub net: NetworkBlock,
    pub pv: Vec<PvBlock>,
    pub pv_avail: Vec<Vec<f64>>,
    pub loads: Vec<LoadBlock>,
    pub sop: Vec<SopBlock>,
    pub svc: Vec<SvcBlock>,
    pub cap: Vec<CapBlock>,
    pub p_cons: Vec<Vec<LinExpr>>,
    pub q_cons: Vec<Vec<LinExpr>>,
    pub s0: Vec<VarId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub theta: f64,
    pub degree: usize,
    pub period: f64,
    pub ctx: BlockCtx,
    pub periods: Vec<PeriodLayout>,
    pub ess: Vec<EssBlock>,
    pub e_start: Vec<f64>,
}

impl Layout {
    /// Absolute start time of a period.
    pub fn period_start(&self, prep: &PreparedModel, m: usize) -> f64 {
        prep.start() + m as f64 * self.period
    }
}

#[derive(Debug, Clone)]
pub struct Subproblem {
    pub problem: MilpProblem,
    pub layout: Layout,
}

fn snap(x: f64) -> f64 {
    if x.abs() < 1e-15 {
        0.0
    } else {
        x
    }
}

/// Assembles the direction-`θ` MILP over `periods`: all device blocks, the
/// network, tightened limits, and `P0 = cos θ S0`, `Q0 = sin θ S0` with the
/// objective `Σ_m T Σ_i S0[m][i] / (n+1)`. The returned problem is frozen.
pub fn build_subproblem(
    prep: &PreparedModel,
    cfg: &AssessmentConfig,
    theta: f64,
    periods: Range<usize>,
    init: &SliceInit,
) -> Result<Subproblem, EngineError> {
    let model = &prep.model;
    let ctx = BlockCtx {
        degree: prep.degree(),
        period: prep.period(),
        u_min: model.voltage.u_min,
        u_max: model.voltage.u_max,
        polygon_sides: cfg.polygon_sides,
        ess_mode_flags: cfg.ess_mode_flags,
    };
    let n = ctx.coeff_count();
    let mut pb = MilpProblem::new();

    let mut ess = Vec::with_capacity(model.ess_devices.len());
    for (k, dev) in model.ess_devices.iter().enumerate() {
        ess.push(ess_block(
            &mut pb,
            &ctx,
            k,
            dev,
            periods.clone(),
            init.e_start[k],
        )?);
    }

    let (c, s) = (snap(theta.cos()), snap(theta.sin()));
    let weight = ctx.period_hours() / n as f64;
    let mut objective = LinExpr::new();
    let mut layouts = Vec::with_capacity(periods.len());

    for (local, m) in periods.clone().enumerate() {
        let u = voltage_block(&mut pb, &ctx, m, model, &prep.voltage_margin)?;

        let mut pv = Vec::with_capacity(model.pv_units.len());
        let mut pv_avail = Vec::with_capacity(model.pv_units.len());
        for (k, unit) in model.pv_units.iter().enumerate() {
            let avail = prep.pv_avail[k].period_coeffs(m).to_vec();
            pv.push(pv_block(&mut pb, &ctx, m, k, unit, &u[unit.node], &avail)?);
            pv_avail.push(avail);
        }
        let loads: Vec<LoadBlock> = model
            .loads
            .iter()
            .zip(&prep.load_p)
            .map(|(l, tr)| load_block(l, tr.period_coeffs(m)))
            .collect();
        let mut sop = Vec::with_capacity(model.sop_devices.len());
        for (k, dev) in model.sop_devices.iter().enumerate() {
            sop.push(sop_block(&mut pb, &ctx, m, k, dev)?);
        }
        let mut svc = Vec::with_capacity(model.svc_devices.len());
        for (k, dev) in model.svc_devices.iter().enumerate() {
            svc.push(svc_block(&mut pb, &ctx, m, k, dev, &u[dev.node])?);
        }
        let mut cap = Vec::with_capacity(model.cap_banks.len());
        for (k, bank) in model.cap_banks.iter().enumerate() {
            cap.push(capbank_block(&mut pb, &ctx, m, k, bank, &u[bank.node])?);
        }

        let mut p_cons = vec![vec![LinExpr::new(); n]; model.nodes];
        let mut q_cons = vec![vec![LinExpr::new(); n]; model.nodes];
        for i in 0..n {
            for (l, b) in model.loads.iter().zip(&loads) {
                p_cons[l.node][i].add_constant(b.p[i]);
                q_cons[l.node][i].add_constant(b.q[i]);
            }
            for (unit, b) in model.pv_units.iter().zip(&pv) {
                p_cons[unit.node][i] -= b.p[i];
                q_cons[unit.node][i] -= b.q[i];
            }
            for (dev, b) in model.ess_devices.iter().zip(&ess) {
                p_cons[dev.node][i] -= b.net[local][i].clone();
            }
            for (dev, b) in model.sop_devices.iter().zip(&sop) {
                p_cons[dev.node_i][i] += b.p_i[i];
                q_cons[dev.node_i][i] += b.q_i[i];
                p_cons[dev.node_j][i] += b.p_j[i];
                q_cons[dev.node_j][i] += b.q_j[i];
            }
            for (dev, b) in model.svc_devices.iter().zip(&svc) {
                q_cons[dev.node][i] -= b.q[i];
            }
            for (bank, b) in model.cap_banks.iter().zip(&cap) {
                q_cons[bank.node][i] -= b.q[i].clone();
            }
        }

        let net = network_block(&mut pb, &ctx, m, model, &prep.topo, &u, &p_cons, &q_cons)?;

        let s0 = coef_vars(&mut pb, &format!("s0_m{m}"), n, 0.0, f64::INFINITY)?;
        for i in 0..n {
            pb.add_constraint(
                format!("dir_p_m{m}[{i}]"),
                LinearConstraint::eq(net.p0[i].clone() - s0[i] * c, 0.0),
            )?;
            pb.add_constraint(
                format!("dir_q_m{m}[{i}]"),
                LinearConstraint::eq(net.q0[i].clone() - s0[i] * s, 0.0),
            )?;
            objective += LinExpr::term(s0[i], weight);
        }
        if local == 0 {
            if let Some(v) = init.s0_start {
                pb.add_constraint(format!("s0_init_m{m}"), LinearConstraint::eq(s0[0], v))?;
            }
        } else if cfg.s0_continuity {
            let prev: &PeriodLayout = &layouts[local - 1];
            pb.add_constraint(
                format!("s0_cont_m{m}"),
                LinearConstraint::eq(s0[0] - prev.s0[n - 1], 0.0),
            )?;
        }

        layouts.push(PeriodLayout {
            index: m,
            u,
            net,
            pv,
            pv_avail,
            loads,
            sop,
            svc,
            cap,
            p_cons,
            q_cons,
            s0,
        });
    }

    pb.set_objective(objective)?;
    pb.freeze();
    Ok(Subproblem {
        problem: pb,
        layout: Layout {
            theta,
            degree: ctx.degree,
            period: ctx.period,
            ctx,
            periods: layouts,
            ess,
            e_start: init.e_start.clone(),
        },
    })
}
