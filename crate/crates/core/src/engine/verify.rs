//! Post-solve checks of a subproblem solution in continuous time.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::build::Subproblem;
use super::{EngineError, PreparedModel};
use crate::bernstein::eval_local;
use crate::blocks::{circle_polygon, volt_var};
use crate::chance::{monte_carlo_check, McRow, RatioChoice, ResponseSystem};
use crate::milp::{LinExpr, VarId};
use crate::network::BranchKind;

/// Tolerance on inequality-type limits when sampling trajectories.
pub const LIMIT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TranscriptionReport {
    pub samples: usize,
    pub max_equality: f64,
    pub worst_equality: String,
    /// Descriptions of sampled inequality violations beyond `LIMIT_TOL`.
    pub inequality_violations: Vec<String>,
}

impl TranscriptionReport {
    fn equality(&mut self, what: impl FnOnce() -> String, residual: f64) {
        let r = residual.abs();
        if r > self.max_equality || r.is_nan() {
            self.max_equality = r;
            self.worst_equality = what();
        }
    }

    fn upper(&mut self, what: impl FnOnce() -> String, value: f64, bound: f64) {
        if value > bound + LIMIT_TOL || value.is_nan() {
            self.inequality_violations
                .push(format!("{} = {value} > {bound}", what()));
        }
    }

    fn lower(&mut self, what: impl FnOnce() -> String, value: f64, bound: f64) {
        if value < bound - LIMIT_TOL || value.is_nan() {
            self.inequality_violations
                .push(format!("{} = {value} < {bound}", what()));
        }
    }
}

fn ev(exprs: &[LinExpr], x: &[f64]) -> Vec<f64> {
    exprs.iter().map(|e| e.evaluate(x)).collect()
}

fn vv(vars: &[VarId], x: &[f64]) -> Vec<f64> {
    vars.iter().map(|v| x[v.index()]).collect()
}

fn argmax(vars: &[VarId], x: &[f64]) -> usize {
    vars.iter()
        .enumerate()
        .max_by(|a, b| x[a.1.index()].total_cmp(&x[b.1.index()]))
        .map_or(0, |(k, _)| k)
}

/// Derivative in local time `s` of a Bernstein polynomial.
fn eval_local_derivative(c: &[f64], s: f64) -> f64 {
    let n = c.len() - 1;
    if n == 0 {
        return 0.0;
    }
    let d: Vec<f64> = c.windows(2).map(|w| n as f64 * (w[1] - w[0])).collect();
    eval_local(&d, s)
}

/// Samples every device relation of a solved subproblem at random instants
/// and reports the largest equality residual and any limit violation.
pub fn verify_transcription(
    prep: &PreparedModel,
    sub: &Subproblem,
    x: &[f64],
    samples_per_period: usize,
    seed: u64,
) -> Result<TranscriptionReport, EngineError> {
    let model = &prep.model;
    let lay = &sub.layout;
    let ctx = &lay.ctx;
    let h = ctx.period_hours();
    let (ct, st) = (lay.theta.cos(), lay.theta.sin());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = TranscriptionReport::default();
    let u_min = model.voltage.u_min;
    let u_max = model.voltage.u_max;

    for (local, pl) in lay.periods.iter().enumerate() {
        let m = pl.index;
        let u: Vec<Vec<f64>> = pl.u.iter().map(|e| ev(e, x)).collect();
        let pf: Vec<Vec<f64>> = pl.net.p.iter().map(|v| vv(v, x)).collect();
        let qf: Vec<Vec<f64>> = pl.net.q.iter().map(|v| vv(v, x)).collect();
        let aux: Vec<Option<Vec<f64>>> = pl
            .net
            .aux
            .iter()
            .map(|a| a.as_ref().map(|e| ev(e, x)))
            .collect();
        let p0 = ev(&pl.net.p0, x);
        let q0 = ev(&pl.net.q0, x);
        let s0 = vv(&pl.s0, x);
        let pv_p: Vec<Vec<f64>> = pl.pv.iter().map(|b| vv(&b.p, x)).collect();
        let pv_q: Vec<Vec<f64>> = pl.pv.iter().map(|b| vv(&b.q, x)).collect();
        let svc_q: Vec<Vec<f64>> = pl.svc.iter().map(|b| vv(&b.q, x)).collect();
        let cap_q: Vec<Vec<f64>> = pl.cap.iter().map(|b| ev(&b.q, x)).collect();
        let cap_sel: Vec<usize> = pl.cap.iter().map(|b| argmax(&b.lambda, x)).collect();
        let sop_v: Vec<[Vec<f64>; 4]> = pl
            .sop
            .iter()
            .map(|b| [vv(&b.p_i, x), vv(&b.q_i, x), vv(&b.p_j, x), vv(&b.q_j, x)])
            .collect();
        let ess_d: Vec<Vec<f64>> = lay.ess.iter().map(|b| vv(&b.d[local], x)).collect();
        let ess_e: Vec<Vec<f64>> = lay.ess.iter().map(|b| vv(&b.soe[local], x)).collect();

        // structural SoE continuity at the period start
        for (k, e) in ess_e.iter().enumerate() {
            let start = if local == 0 {
                lay.e_start[k]
            } else {
                *vv(&lay.ess[k].soe[local - 1], x)
                    .last()
                    .expect("coefficients")
            };
            rep.equality(|| format!("ess{k} m{m} SoE continuity"), e[0] - start);
        }

        for _ in 0..samples_per_period {
            let s: f64 = rng.gen();
            rep.samples += 1;
            let at = |c: &[f64]| eval_local(c, s);
            let us: Vec<f64> = u.iter().map(|c| at(c)).collect();
            let ps: Vec<f64> = pf.iter().map(|c| at(c)).collect();
            let qs: Vec<f64> = qf.iter().map(|c| at(c)).collect();

            // consumption from device trajectories
            let mut pc = vec![0.0; model.nodes];
            let mut qc = vec![0.0; model.nodes];
            for (l, b) in model.loads.iter().zip(&pl.loads) {
                let p = at(&b.p);
                let q = at(&b.q);
                rep.equality(|| format!("load@{} m{m} Q = φP", l.node), q - l.phi * p);
                pc[l.node] += p;
                qc[l.node] += q;
            }
            for (k, unit) in model.pv_units.iter().enumerate() {
                let p = at(&pv_p[k]);
                let q = at(&pv_q[k]);
                pc[unit.node] -= p;
                qc[unit.node] -= q;
                let uu = us[unit.node];
                rep.lower(|| format!("pv{k} m{m} U"), uu, unit.u_breaks[0]);
                rep.upper(|| format!("pv{k} m{m} U"), uu, unit.u_breaks[3]);
                rep.equality(|| format!("pv{k} m{m} Volt-VAR"), q - volt_var(unit, uu));
                let poly = circle_polygon(unit.s_max, ctx.polygon_sides)?;
                rep.upper(
                    || format!("pv{k} m{m} capacity polygon"),
                    poly.excess(p, q),
                    0.0,
                );
                rep.lower(|| format!("pv{k} m{m} P"), p, 0.0);
                rep.upper(|| format!("pv{k} m{m} P available"), p, at(&pl.pv_avail[k]));
            }
            for (k, dev) in model.ess_devices.iter().enumerate() {
                let d = at(&ess_d[k]);
                rep.lower(|| format!("ess{k} m{m} D"), d, 0.0);
                rep.upper(|| format!("ess{k} m{m} D"), d, 1.0);
                pc[dev.node] -= d * (dev.p_d + dev.p_c) - dev.p_c;
                let e = at(&ess_e[k]);
                rep.lower(|| format!("ess{k} m{m} SoE"), e, 0.0);
                rep.upper(|| format!("ess{k} m{m} SoE"), e, dev.e_max);
                let outflow = d * dev.p_d / dev.eta_d - (1.0 - d) * dev.eta_c * dev.p_c;
                let de = eval_local_derivative(&ess_e[k], s) / h;
                rep.equality(|| format!("ess{k} m{m} dE/dt"), de + outflow);
            }
            for (k, dev) in model.sop_devices.iter().enumerate() {
                let [pi, qi, pj, qj] = &sop_v[k];
                let (pi, qi, pj, qj) = (at(pi), at(qi), at(pj), at(qj));
                pc[dev.node_i] += pi;
                qc[dev.node_i] += qi;
                pc[dev.node_j] += pj;
                qc[dev.node_j] += qj;
                rep.equality(
                    || format!("sop{k} m{m} balance"),
                    pi + pj + dev.loss * (pi.abs() + pj.abs()),
                );
                let poly = circle_polygon(dev.s_max, ctx.polygon_sides)?;
                rep.upper(
                    || format!("sop{k} m{m} polygon i"),
                    poly.excess(pi, qi),
                    0.0,
                );
                rep.upper(
                    || format!("sop{k} m{m} polygon j"),
                    poly.excess(pj, qj),
                    0.0,
                );
            }
            for (k, dev) in model.svc_devices.iter().enumerate() {
                let q = at(&svc_q[k]);
                qc[dev.node] -= q;
                rep.equality(
                    || format!("svc{k} m{m} droop"),
                    q - 0.5 * dev.k * (us[dev.node] - dev.u_ref),
                );
            }
            for (k, bank) in model.cap_banks.iter().enumerate() {
                let q = at(&cap_q[k]);
                qc[bank.node] -= q;
                rep.equality(
                    || format!("cap{k} m{m} Q = qU"),
                    q - bank.steps[cap_sel[k]] * us[bank.node],
                );
            }

            for j in 1..model.nodes {
                let parent = prep.topo.parent_branch[j].expect("non-root node has a parent");
                let mut rp = ps[parent] - pc[j];
                let mut rq = qs[parent] - qc[j];
                for &c in &prep.topo.child_branches[j] {
                    rp -= ps[c];
                    rq -= qs[c];
                }
                rep.equality(|| format!("node {j} m{m} P balance"), rp);
                rep.equality(|| format!("node {j} m{m} Q balance"), rq);
                let margin = prep.voltage_margin[j];
                rep.lower(|| format!("node {j} m{m} U"), us[j], u_min + margin);
                rep.upper(|| format!("node {j} m{m} U"), us[j], u_max - margin);
            }
            for (b, br) in model.branches.iter().enumerate() {
                let down = match &aux[b] {
                    Some(a) => at(a),
                    None => us[br.to],
                };
                rep.equality(
                    || format!("branch {b} m{m} voltage drop"),
                    us[br.from] - down - 2.0 * (br.r * ps[b] + br.x * qs[b]),
                );
                match &br.kind {
                    BranchKind::Plain => {}
                    BranchKind::Oltc { taps } => {
                        let tb = pl.net.taps[b].as_ref().expect("tap block");
                        let a = taps[argmax(&tb.lambda, x)];
                        rep.equality(
                            || format!("branch {b} m{m} tap ratio"),
                            down - a * a * us[br.to],
                        );
                    }
                    BranchKind::Regulator { tau_min, tau_max } => {
                        rep.lower(
                            || format!("branch {b} m{m} regulator"),
                            down,
                            tau_min * tau_min * us[br.to],
                        );
                        rep.upper(
                            || format!("branch {b} m{m} regulator"),
                            down,
                            tau_max * tau_max * us[br.to],
                        );
                    }
                }
            }
            let sv = at(&s0);
            rep.lower(|| format!("m{m} S0"), sv, 0.0);
            rep.equality(|| format!("m{m} P0 = cosθ S0"), at(&p0) - ct * sv);
            rep.equality(|| format!("m{m} Q0 = sinθ S0"), at(&q0) - st * sv);
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChanceRowReport {
    pub name: String,
    pub margin: f64,
    /// Binding at the tightened limit with a positive margin.
    pub tight: bool,
    pub violation: f64,
}

/// Monte Carlo violation frequency of every uncertain coefficient row
/// (node voltages and PV availability) at a solution, using the network
/// response at the solution's own taps, regulator ratios and capacitor steps.
pub fn chance_check(
    prep: &PreparedModel,
    sub: &Subproblem,
    x: &[f64],
    samples: usize,
    seed: u64,
) -> Result<Vec<ChanceRowReport>, EngineError> {
    let model = &prep.model;
    let n_src = prep.sigma2.len();
    let u_min = model.voltage.u_min;
    let u_max = model.voltage.u_max;
    let mut rows = Vec::new();
    let mut meta: Vec<(String, f64, bool)> = Vec::new();
    const TIGHT: f64 = 1e-7;

    for pl in &sub.layout.periods {
        let m = pl.index;
        let u: Vec<Vec<f64>> = pl.u.iter().map(|e| ev(e, x)).collect();
        for i in 0..sub.layout.ctx.coeff_count() {
            let state = RatioChoice {
                ratio_sq: model
                    .branches
                    .iter()
                    .enumerate()
                    .map(|(b, br)| match &br.kind {
                        BranchKind::Plain => 1.0,
                        BranchKind::Oltc { taps } => {
                            let a = taps
                                [argmax(&pl.net.taps[b].as_ref().expect("tap block").lambda, x)];
                            a * a
                        }
                        BranchKind::Regulator { .. } => {
                            let aux =
                                pl.net.aux[b].as_ref().expect("regulator voltage")[i].evaluate(x);
                            aux / u[br.to][i]
                        }
                    })
                    .collect(),
                cap_q: model
                    .cap_banks
                    .iter()
                    .zip(&pl.cap)
                    .map(|(bank, b)| bank.steps[argmax(&b.lambda, x)])
                    .collect(),
            };
            let sens = ResponseSystem::build(model, &prep.topo, &state).voltage_sensitivity()?;
            for j in 1..model.nodes {
                let margin = prep.voltage_margin[j];
                let v = u[j][i];
                rows.push(McRow {
                    nominal: v,
                    g: sens[j].clone(),
                    rhs: u_max,
                });
                meta.push((
                    format!("U{j} max m{m}[{i}]"),
                    margin,
                    margin > 0.0 && v >= u_max - margin - TIGHT,
                ));
                rows.push(McRow {
                    nominal: -v,
                    g: sens[j].iter().map(|g| -g).collect(),
                    rhs: -u_min,
                });
                meta.push((
                    format!("U{j} min m{m}[{i}]"),
                    margin,
                    margin > 0.0 && v <= u_min + margin + TIGHT,
                ));
            }
            for (k, b) in pl.pv.iter().enumerate() {
                let p = x[b.p[i].index()];
                let mut g = vec![0.0; n_src];
                g[k] = -1.0;
                let margin = prep.pv_margin[k];
                rows.push(McRow {
                    nominal: p,
                    g,
                    rhs: prep.pv_forecast[k].period_coeffs(m)[i],
                });
                meta.push((
                    format!("PV{k} avail m{m}[{i}]"),
                    margin,
                    margin > 0.0 && p >= pl.pv_avail[k][i] - TIGHT,
                ));
            }
        }
    }
    let freq = monte_carlo_check(&rows, &prep.sigma2, samples, seed);
    Ok(meta
        .into_iter()
        .zip(freq)
        .map(|((name, margin, tight), violation)| ChanceRowReport {
            name,
            margin,
            tight,
            violation,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bernstein_derivative_of_line() {
        // 2s + 1 as a cubic
        let c = [1.0, 1.0 + 2.0 / 3.0, 1.0 + 4.0 / 3.0, 3.0];
        assert!((eval_local_derivative(&c, 0.3) - 2.0).abs() < 1e-12);
    }
}
