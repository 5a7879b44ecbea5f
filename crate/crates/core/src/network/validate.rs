use super::topology::tree_violations;
use super::{BranchKind, NetworkModel, Profile, Violation};
use crate::bernstein::CUBIC;

/// Lists every broken invariant; empty iff the model is valid.
pub fn validate(model: &NetworkModel) -> Vec<Violation> {
    let mut out = tree_violations(model.nodes, &model.branches);
    let mut bad = |entity: String, rule: &str| {
        out.push(Violation {
            entity,
            rule: rule.to_string(),
        })
    };

    let h = &model.horizon;
    if h.periods().is_none() {
        bad("horizon".into(), "(t2 - t1) / T must be a positive integer");
    }
    let vl = &model.voltage;
    if !(vl.u_min > 0.0 && vl.u_min < vl.u_max) {
        bad("voltage".into(), "need 0 < u_min < u_max");
    }
    if !(vl.u_source >= vl.u_min && vl.u_source <= vl.u_max) {
        bad("voltage".into(), "u_source outside [u_min, u_max]");
    }
    if !(model.base.mva > 0.0 && model.base.kv > 0.0) {
        bad("base".into(), "base MVA and kV must be positive");
    }

    for (b, br) in model.branches.iter().enumerate() {
        let e = || format!("branch {b}");
        if !(br.r >= 0.0) {
            bad(e(), "r must be nonnegative");
        }
        if !(br.x >= 0.0) {
            bad(e(), "x must be nonnegative");
        }
        match &br.kind {
            BranchKind::Plain => {}
            BranchKind::Oltc { taps } => {
                if taps.is_empty() {
                    bad(e(), "OLTC tap list is empty");
                }
                if taps.iter().any(|&a| !(a > 0.0)) {
                    bad(e(), "OLTC taps must be positive");
                }
            }
            BranchKind::Regulator { tau_min, tau_max } => {
                if !(tau_min <= tau_max) {
                    bad(e(), "regulator tau_min > tau_max");
                }
                if !(*tau_min > 0.0) {
                    bad(e(), "regulator ratios must be positive");
                }
            }
        }
    }

    let node_ok = |n: usize| n < model.nodes;
    let check_node = |entity: String, n: usize, bad: &mut dyn FnMut(String, &str)| {
        if !node_ok(n) {
            bad(entity, "references a missing node");
        } else if n == 0 {
            bad(entity, "devices cannot sit on the interface node 0");
        }
    };

    let m = h.periods();
    let check_profile =
        |entity: String, p: &Profile, nonneg: bool, bad: &mut dyn FnMut(String, &str)| {
            if p.samples
                .iter()
                .any(|&(t, v)| !t.is_finite() || !v.is_finite())
            {
                bad(entity.clone(), "profile has non-finite samples");
                return;
            }
            if nonneg && p.samples.iter().any(|&(_, v)| v < 0.0) {
                bad(entity.clone(), "forecast samples must be nonnegative");
            }
            if p.samples.windows(2).any(|w| w[1].0 <= w[0].0) {
                bad(entity.clone(), "profile times must be strictly increasing");
            }
            let span = h.t2 - h.t1;
            let tol = 1e-9 * span.abs().max(1.0);
            if p.samples.iter().any(|&(t, _)| t < -tol || t > span + tol) {
                bad(entity.clone(), "profile samples outside the horizon");
            }
            if let Some(m) = m {
                for k in 0..m {
                    let a = k as f64 * h.period;
                    let b = a + h.period;
                    let n = p
                        .samples
                        .iter()
                        .filter(|&&(t, _)| t >= a - tol && t <= b + tol)
                        .count();
                    if n < CUBIC + 1 {
                        bad(entity.clone(), "fewer than 4 samples in a period");
                        break;
                    }
                }
            }
        };

    for (k, pv) in model.pv_units.iter().enumerate() {
        let e = || format!("pv {k}");
        check_node(e(), pv.node, &mut bad);
        if !(pv.q_max >= 0.0 && pv.q_max <= pv.s_max) {
            bad(e(), "need 0 <= q_max <= s_max");
        }
        let u = pv.u_breaks;
        if !(u[0] <= u[1] && u[1] < u[2] && u[2] <= u[3]) {
            bad(e(), "need U1 <= U2 < U3 <= U4");
        }
        check_profile(e(), &pv.p_max, true, &mut bad);
    }
    for (k, l) in model.loads.iter().enumerate() {
        let e = || format!("load {k}");
        check_node(e(), l.node, &mut bad);
        if !l.phi.is_finite() {
            bad(e(), "phi must be finite");
        }
        check_profile(e(), &l.p, false, &mut bad);
    }
    for (k, s) in model.ess_devices.iter().enumerate() {
        let e = || format!("ess {k}");
        check_node(e(), s.node, &mut bad);
        if !(s.e0 >= 0.0 && s.e0 <= s.e_max) {
            bad(e(), "need 0 <= E(t0) <= E_max");
        }
        if !(s.eta_c > 0.0 && s.eta_c <= 1.0 && s.eta_d > 0.0 && s.eta_d <= 1.0) {
            bad(e(), "efficiencies must lie in (0, 1]");
        }
        if !(s.p_c >= 0.0 && s.p_d >= 0.0) {
            bad(e(), "power ratings must be nonnegative");
        }
        if !(s.t_min_c >= 0.0 && s.t_min_d >= 0.0) {
            bad(e(), "minimum durations must be nonnegative");
        }
    }
    for (k, s) in model.sop_devices.iter().enumerate() {
        let e = || format!("sop {k}");
        check_node(e(), s.node_i, &mut bad);
        check_node(e(), s.node_j, &mut bad);
        if s.node_i == s.node_j {
            bad(e(), "SOP terminals identical");
        }
        if !(s.s_max >= 0.0) {
            bad(e(), "s_max must be nonnegative");
        }
        if !(s.p_min <= s.p_max) {
            bad(e(), "need p_min <= p_max");
        }
        if !(s.loss >= 0.0 && s.loss < 1.0) {
            bad(e(), "loss coefficient must lie in [0, 1)");
        }
    }
    for (k, s) in model.svc_devices.iter().enumerate() {
        let e = || format!("svc {k}");
        check_node(e(), s.node, &mut bad);
        if !(s.k.is_finite() && s.u_ref > 0.0) {
            bad(e(), "need finite k and positive u_ref");
        }
        if let (Some(lo), Some(hi)) = (s.q_min, s.q_max) {
            if !(lo <= hi) {
                bad(e(), "need q_min <= q_max");
            }
        }
    }
    for (k, c) in model.cap_banks.iter().enumerate() {
        let e = || format!("capacitor {k}");
        check_node(e(), c.node, &mut bad);
        if c.steps.is_empty() {
            bad(e(), "step list is empty");
        }
        if c.steps.iter().any(|q| !q.is_finite()) {
            bad(e(), "steps must be finite");
        }
    }

    let u = &model.uncertainty;
    if !(u.alpha > 0.0 && u.alpha <= 0.5) {
        bad("uncertainty".into(), "alpha out of (0, 0.5]");
    }
    if u.sigma2_pv.len() != model.pv_units.len() {
        bad("uncertainty".into(), "one PV variance per PV unit required");
    }
    if u.sigma2_load.len() != model.loads.len() {
        bad("uncertainty".into(), "one load variance per load required");
    }
    if u.sigma2_pv
        .iter()
        .chain(&u.sigma2_load)
        .any(|&s| !(s >= 0.0))
    {
        bad("uncertainty".into(), "variances must be nonnegative");
    }
    out
}
