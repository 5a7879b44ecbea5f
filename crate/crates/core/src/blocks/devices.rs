use std::ops::Range;

use super::{circle_polygon, coef_vars, BlockCtx, BlockError};
use crate::milp::{LinExpr, LinearConstraint, MilpProblem, VarId};
use crate::network::{CapacitorBank, EssDevice, LoadPoint, PvUnit, SopDevice, SvcDevice};

/// Piecewise-linear Volt-VAR curve: `Q_max` below `U2`, `-Q_max` above `U3`,
/// linear in between. Outside `[U1, U4]` the curve is undefined.
pub fn volt_var(pv: &PvUnit, u: f64) -> f64 {
    let [_, u2, u3, _] = pv.u_breaks;
    if u <= u2 {
        pv.q_max
    } else if u >= u3 {
        -pv.q_max
    } else {
        pv.q_max - 2.0 * pv.q_max * (u - u2) / (u3 - u2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PvBlock {
    pub p: Vec<VarId>,
    pub q: Vec<VarId>,
    /// Segment selectors (high, droop, low); absent when `Q_max = 0`.
    pub segments: Option<[VarId; 3]>,
}

/// PV unit with Volt-VAR reactive control and a polygonal capacity limit.
///
/// `p_avail` holds the (already tightened) coefficients of available power.
#[allow(clippy::too_many_arguments)]
pub fn pv_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    idx: usize,
    pv: &PvUnit,
    u: &[LinExpr],
    p_avail: &[f64],
) -> Result<PvBlock, BlockError> {
    ctx.check_len(u.len())?;
    ctx.check_len(p_avail.len())?;
    let [u1, u2, u3, u4] = pv.u_breaks;
    if !(u1 < u2 && u2 < u3 && u3 < u4) {
        return Err(BlockError::VoltVarBreakpoints(idx));
    }
    let n = ctx.coeff_count();
    let tag = format!("pv{idx}_m{m}");
    let p = coef_vars(pb, &format!("{tag}_p"), n, 0.0, f64::INFINITY)?;
    let q = coef_vars(pb, &format!("{tag}_q"), n, -pv.q_max, pv.q_max)?;
    let poly = circle_polygon(pv.s_max, ctx.polygon_sides)?;

    for i in 0..n {
        pb.add_constraint(
            format!("{tag}_avail[{i}]"),
            LinearConstraint::le(p[i], p_avail[i]),
        )?;
        pb.add_constraint(
            format!("{tag}_u1[{i}]"),
            LinearConstraint::ge(u[i].clone(), u1),
        )?;
        pb.add_constraint(
            format!("{tag}_u4[{i}]"),
            LinearConstraint::le(u[i].clone(), u4),
        )?;
        for (k, row) in poly
            .constraints(&p[i].into(), &q[i].into())
            .into_iter()
            .enumerate()
        {
            pb.add_constraint(format!("{tag}_cap{k}[{i}]"), row)?;
        }
    }

    if pv.q_max == 0.0 {
        for (i, &qi) in q.iter().enumerate() {
            pb.add_constraint(format!("{tag}_q0[{i}]"), LinearConstraint::eq(qi, 0.0))?;
        }
        return Ok(PvBlock {
            p,
            q,
            segments: None,
        });
    }

    let qm = pv.q_max;
    let u_lo = ctx.u_min.max(u1);
    let u_hi = ctx.u_max.min(u4);
    let slope = 2.0 * qm / (u3 - u2);
    // (name, voltage range, Q = α + β·U)
    let segs = [
        ("high", u_lo, u2, qm, 0.0),
        ("droop", u2, u3, qm + slope * u2, -slope),
        ("low", u3, u_hi, -qm, 0.0),
    ];

    let mut bins = Vec::with_capacity(3);
    let mut pick = LinExpr::new();
    for (name, lo, hi, _, _) in segs {
        let b = pb.add_binary(format!("{tag}_seg_{name}"))?;
        if lo > hi {
            pb.add_constraint(
                format!("{tag}_seg_{name}_off"),
                LinearConstraint::eq(b, 0.0),
            )?;
        }
        pick += b;
        bins.push(b);
    }
    pb.add_constraint(format!("{tag}_seg"), LinearConstraint::eq(pick, 1.0))?;

    // U and Q split into per-segment parts that vanish unless selected
    for i in 0..n {
        let mut u_sum = u[i].clone();
        let mut q_sum = LinExpr::from(q[i]);
        for (s, (name, lo, hi, alpha, beta)) in segs.into_iter().enumerate() {
            let us = pb.add_continuous(format!("{tag}_u_{name}[{i}]"), 0.0, u_hi.max(0.0))?;
            let b = bins[s];
            pb.add_constraint(
                format!("{tag}_{name}_lo[{i}]"),
                LinearConstraint::ge(us - b * lo, 0.0),
            )?;
            pb.add_constraint(
                format!("{tag}_{name}_hi[{i}]"),
                LinearConstraint::le(us - b * hi.max(lo), 0.0),
            )?;
            u_sum -= us;
            q_sum -= b * alpha + us * beta;
        }
        pb.add_constraint(
            format!("{tag}_usplit[{i}]"),
            LinearConstraint::eq(u_sum, 0.0),
        )?;
        pb.add_constraint(
            format!("{tag}_curve[{i}]"),
            LinearConstraint::eq(q_sum, 0.0),
        )?;
    }
    Ok(PvBlock {
        p,
        q,
        segments: Some([bins[0], bins[1], bins[2]]),
    })
}

/// Load coefficients; reactive power follows at a fixed ratio.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadBlock {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

pub fn load_block(load: &LoadPoint, p: &[f64]) -> LoadBlock {
    LoadBlock {
        p: p.to_vec(),
        q: p.iter().map(|v| v * load.phi).collect(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SopBlock {
    pub p_i: Vec<VarId>,
    pub q_i: Vec<VarId>,
    pub p_j: Vec<VarId>,
    pub q_j: Vec<VarId>,
    /// `|P|` per terminal, present when losses are modelled.
    pub abs: Option<(Vec<VarId>, Vec<VarId>)>,
    /// Transfer direction for the period (1: node i to node j).
    pub direction: Option<VarId>,
}

/// Soft open point between two nodes. Terminal powers are consumption at
/// the respective node.
pub fn sop_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    idx: usize,
    sop: &SopDevice,
) -> Result<SopBlock, BlockError> {
    let n = ctx.coeff_count();
    let tag = format!("sop{idx}_m{m}");
    let poly = circle_polygon(sop.s_max, ctx.polygon_sides)?;
    let p_i = coef_vars(pb, &format!("{tag}_pi"), n, sop.p_min, sop.p_max)?;
    let p_j = coef_vars(pb, &format!("{tag}_pj"), n, sop.p_min, sop.p_max)?;
    let q_i = coef_vars(pb, &format!("{tag}_qi"), n, -sop.s_max, sop.s_max)?;
    let q_j = coef_vars(pb, &format!("{tag}_qj"), n, -sop.s_max, sop.s_max)?;
    let (abs, direction) = if sop.loss > 0.0 {
        // a fixed transfer direction per period makes a = |P| exact
        let bound = sop.p_min.abs().max(sop.p_max.abs());
        let big = 2.0 * bound;
        let dir = pb.add_binary(format!("{tag}_dir"))?;
        let a_i = coef_vars(pb, &format!("{tag}_ai"), n, 0.0, bound)?;
        let a_j = coef_vars(pb, &format!("{tag}_aj"), n, 0.0, bound)?;
        for i in 0..n {
            pb.add_constraint(
                format!("{tag}_absi+[{i}]"),
                LinearConstraint::ge(a_i[i] - p_i[i], 0.0),
            )?;
            pb.add_constraint(
                format!("{tag}_absi-[{i}]"),
                LinearConstraint::ge(a_i[i] + p_i[i], 0.0),
            )?;
            pb.add_constraint(
                format!("{tag}_absj+[{i}]"),
                LinearConstraint::ge(a_j[i] - p_j[i], 0.0),
            )?;
            pb.add_constraint(
                format!("{tag}_absj-[{i}]"),
                LinearConstraint::ge(a_j[i] + p_j[i], 0.0),
            )?;
            // dir = 1: P_i ≥ 0 ≥ P_j
            pb.add_constraint(
                format!("{tag}_tighti+[{i}]"),
                LinearConstraint::le(a_i[i] - p_i[i] + dir * big, big),
            )?;
            pb.add_constraint(
                format!("{tag}_tighti-[{i}]"),
                LinearConstraint::le(a_i[i] + p_i[i] - dir * big, 0.0),
            )?;
            pb.add_constraint(
                format!("{tag}_tightj+[{i}]"),
                LinearConstraint::le(a_j[i] + p_j[i] + dir * big, big),
            )?;
            pb.add_constraint(
                format!("{tag}_tightj-[{i}]"),
                LinearConstraint::le(a_j[i] - p_j[i] - dir * big, 0.0),
            )?;
        }
        (Some((a_i, a_j)), Some(dir))
    } else {
        (None, None)
    };
    for i in 0..n {
        let mut balance = p_i[i] + p_j[i];
        if let Some((a_i, a_j)) = &abs {
            balance += LinExpr::from(a_i[i]) * sop.loss + LinExpr::from(a_j[i]) * sop.loss;
        }
        pb.add_constraint(
            format!("{tag}_bal[{i}]"),
            LinearConstraint::eq(balance, 0.0),
        )?;
        for (k, row) in poly
            .constraints(&p_i[i].into(), &q_i[i].into())
            .into_iter()
            .enumerate()
        {
            pb.add_constraint(format!("{tag}_capi{k}[{i}]"), row)?;
        }
        for (k, row) in poly
            .constraints(&p_j[i].into(), &q_j[i].into())
            .into_iter()
            .enumerate()
        {
            pb.add_constraint(format!("{tag}_capj{k}[{i}]"), row)?;
        }
    }
    Ok(SopBlock {
        p_i,
        q_i,
        p_j,
        q_j,
        abs,
        direction,
    })
}

/// Storage over a run of consecutive periods.
#[derive(Debug, Clone, PartialEq)]
pub struct EssBlock {
    pub periods: Range<usize>,
    /// Discharge share `D` per period and coefficient (`C = 1 - D`).
    pub d: Vec<Vec<VarId>>,
    /// State-of-energy coefficients (degree + 2 per period).
    pub soe: Vec<Vec<VarId>>,
    pub mode: Vec<Option<VarId>>,
    /// Net injection `D (P_D + P_C) - P_C` per period and coefficient.
    pub net: Vec<Vec<LinExpr>>,
}

impl EssBlock {
    /// Terminal state-of-energy variable of the last period.
    pub fn terminal(&self) -> VarId {
        *self
            .soe
            .last()
            .and_then(|s| s.last())
            .expect("nonempty ESS block")
    }
}

/// Energy outflow rate `D (P_D/η_D + η_C P_C) - η_C P_C` as `(slope, offset)` in `D`.
pub fn ess_outflow(ess: &EssDevice) -> (f64, f64) {
    (
        ess.p_d / ess.eta_d + ess.eta_c * ess.p_c,
        -ess.eta_c * ess.p_c,
    )
}

pub fn ess_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    idx: usize,
    ess: &EssDevice,
    periods: Range<usize>,
    e_start: f64,
) -> Result<EssBlock, BlockError> {
    let required = ess.t_min_c.max(ess.t_min_d);
    if ctx.ess_mode_flags && ctx.period < required {
        return Err(BlockError::EssDuration {
            device: idx,
            period: ctx.period,
            required,
        });
    }
    let n = ctx.coeff_count();
    let h = ctx.period_hours();
    let (slope, offset) = ess_outflow(ess);
    let range = ess.p_d + ess.p_c;
    let thr = if range > 0.0 { ess.p_c / range } else { 0.0 };

    let mut out = EssBlock {
        periods: periods.clone(),
        d: Vec::new(),
        soe: Vec::new(),
        mode: Vec::new(),
        net: Vec::new(),
    };
    let mut prev: LinExpr = e_start.into();
    for m in periods {
        let tag = format!("ess{idx}_m{m}");
        let d = coef_vars(pb, &format!("{tag}_d"), n, 0.0, 1.0)?;
        let a = coef_vars(pb, &format!("{tag}_soe"), n + 1, 0.0, ess.e_max)?;
        pb.add_constraint(
            format!("{tag}_soe[0]"),
            LinearConstraint::eq(a[0] - prev.clone(), 0.0),
        )?;
        for k in 1..=n {
            // antiderivative: A_k = A_{k-1} - h g_{k-1} / (number of coefficients)
            let step = h / n as f64;
            let row = a[k] - a[k - 1] + d[k - 1] * (step * slope);
            pb.add_constraint(
                format!("{tag}_soe[{k}]"),
                LinearConstraint::eq(row, -step * offset),
            )?;
        }
        let mode = if ctx.ess_mode_flags && range > 0.0 {
            let b = pb.add_binary(format!("{tag}_mode"))?;
            for (i, &di) in d.iter().enumerate() {
                pb.add_constraint(
                    format!("{tag}_mlo[{i}]"),
                    LinearConstraint::ge(di - b * thr, 0.0),
                )?;
                pb.add_constraint(
                    format!("{tag}_mhi[{i}]"),
                    LinearConstraint::le(di - b * (1.0 - thr), thr),
                )?;
            }
            Some(b)
        } else {
            None
        };
        out.net
            .push(d.iter().map(|&di| di * range - ess.p_c).collect());
        prev = a[n].into();
        out.d.push(d);
        out.soe.push(a);
        out.mode.push(mode);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvcBlock {
    pub q: Vec<VarId>,
}

/// Voltage-droop reactive source `Q = k/2 (U - U_ref)`.
pub fn svc_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    idx: usize,
    svc: &SvcDevice,
    u: &[LinExpr],
) -> Result<SvcBlock, BlockError> {
    ctx.check_len(u.len())?;
    let tag = format!("svc{idx}_m{m}");
    let q = coef_vars(
        pb,
        &format!("{tag}_q"),
        ctx.coeff_count(),
        svc.q_min.unwrap_or(f64::NEG_INFINITY),
        svc.q_max.unwrap_or(f64::INFINITY),
    )?;
    for (i, ui) in u.iter().enumerate() {
        let row = LinExpr::from(q[i]) - ui.clone() * (0.5 * svc.k);
        pb.add_constraint(
            format!("{tag}_droop[{i}]"),
            LinearConstraint::eq(row, -0.5 * svc.k * svc.u_ref),
        )?;
    }
    Ok(SvcBlock { q })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapBlock {
    /// One-hot step selector.
    pub lambda: Vec<VarId>,
    /// `z[k][i] = λ_k U_i` through McCormick envelopes.
    pub z: Vec<Vec<VarId>>,
    /// Reactive injection coefficients `Σ_k q_k z[k][i]`.
    pub q: Vec<LinExpr>,
}

/// Exact product `z = λ U` for binary-valued `λ` and `U ∈ [lo, hi]`.
/// Envelope rows for `z = λ·u` with binary `λ` and `u ∈ [lo, hi]`; exact at integral `λ`.
pub fn mccormick(
    pb: &mut MilpProblem,
    name: &str,
    z: VarId,
    lambda: VarId,
    u: &LinExpr,
    lo: f64,
    hi: f64,
) -> Result<(), BlockError> {
    pb.add_constraint(
        format!("{name}_a"),
        LinearConstraint::le(z - lambda * hi, 0.0),
    )?;
    pb.add_constraint(
        format!("{name}_b"),
        LinearConstraint::ge(z - lambda * lo, 0.0),
    )?;
    pb.add_constraint(
        format!("{name}_c"),
        LinearConstraint::le(z - u.clone() - lambda * lo, -lo),
    )?;
    pb.add_constraint(
        format!("{name}_d"),
        LinearConstraint::ge(z - u.clone() - lambda * hi, -hi),
    )?;
    Ok(())
}

/// One-hot selection of a step per period, with `z[k][i] = λ_k U_i`.
pub(crate) fn step_selection(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    tag: &str,
    count: usize,
    u: &[LinExpr],
) -> Result<(Vec<VarId>, Vec<Vec<VarId>>), BlockError> {
    let lambda = (0..count)
        .map(|k| pb.add_binary(format!("{tag}_lambda[{k}]")))
        .collect::<Result<Vec<_>, _>>()?;
    let sum = lambda.iter().fold(LinExpr::new(), |acc, &l| acc + l);
    pb.add_constraint(format!("{tag}_one"), LinearConstraint::eq(sum, 1.0))?;
    let mut z = Vec::with_capacity(count);
    for (k, &l) in lambda.iter().enumerate() {
        let zk = coef_vars(pb, &format!("{tag}_z{k}"), u.len(), 0.0, ctx.u_max)?;
        for (i, ui) in u.iter().enumerate() {
            mccormick(
                pb,
                &format!("{tag}_mc{k}[{i}]"),
                zk[i],
                l,
                ui,
                ctx.u_min,
                ctx.u_max,
            )?;
        }
        z.push(zk);
    }
    // exactly one z carries U; redundant for integral λ, tightens the relaxation
    for (i, ui) in u.iter().enumerate() {
        let split = z.iter().fold(ui.clone(), |acc, zk| acc - zk[i]);
        pb.add_constraint(format!("{tag}_zsum[{i}]"), LinearConstraint::eq(split, 0.0))?;
    }
    Ok((lambda, z))
}

pub fn capbank_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    idx: usize,
    bank: &CapacitorBank,
    u: &[LinExpr],
) -> Result<CapBlock, BlockError> {
    ctx.check_len(u.len())?;
    let (lambda, z) = step_selection(pb, ctx, &format!("cap{idx}_m{m}"), bank.steps.len(), u)?;
    let q = (0..u.len())
        .map(|i| {
            bank.steps
                .iter()
                .zip(&z)
                .fold(LinExpr::new(), |acc, (&qk, zk)| acc + zk[i] * qk)
        })
        .collect();
    Ok(CapBlock { lambda, z, q })
}
