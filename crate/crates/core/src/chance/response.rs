use nalgebra::DMatrix;

use super::{margin, propagate, ChanceError, ExplicitRow, UncertainRow};
use crate::network::{BranchKind, NetworkModel, Topology};

/// Discrete state used to linearise the network's response to offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioChoice {
    /// Squared voltage ratio per branch (1 for plain branches).
    pub ratio_sq: Vec<f64>,
    /// Selected step susceptance per capacitor bank.
    pub cap_q: Vec<f64>,
}

impl RatioChoice {
    /// The state that maximises downstream voltage sensitivity: smallest
    /// OLTC and regulator ratios and the largest capacitor step.
    pub fn worst_case(model: &NetworkModel) -> Self {
        Self {
            ratio_sq: model
                .branches
                .iter()
                .map(|b| match &b.kind {
                    BranchKind::Plain => 1.0,
                    BranchKind::Oltc { taps } => {
                        let a = taps.iter().cloned().fold(f64::INFINITY, f64::min);
                        a * a
                    }
                    BranchKind::Regulator { tau_min, .. } => tau_min * tau_min,
                })
                .collect(),
            cap_q: model
                .cap_banks
                .iter()
                .map(|c| c.steps.iter().cloned().fold(0.0, f64::max))
                .collect(),
        }
    }
}

/// Linear response `B y + F u = c` of voltages, flows, auxiliary ratio
/// voltages and SVC outputs to PV and load offsets `u` (PV sources first).
///
/// PV reactive output is held at its dispatched value; the SVC droop and
/// capacitor output follow the voltage.
#[derive(Debug, Clone)]
pub struct ResponseSystem {
    pub b: DMatrix<f64>,
    pub f: DMatrix<f64>,
    nodes: usize,
}

impl ResponseSystem {
    pub fn build(model: &NetworkModel, topo: &Topology, state: &RatioChoice) -> Self {
        let n = model.nodes;
        let nb = model.branches.len();
        let aux: Vec<Option<usize>> = {
            let mut k = 0;
            model
                .branches
                .iter()
                .map(|b| match b.kind {
                    BranchKind::Plain => None,
                    _ => {
                        k += 1;
                        Some(k - 1)
                    }
                })
                .collect()
        };
        let n_aux = aux.iter().flatten().count();
        let n_svc = model.svc_devices.len();
        let dim = (n - 1) + 2 * nb + n_aux + n_svc;
        let n_src = model.pv_units.len() + model.loads.len();

        let uv = |j: usize| j - 1;
        let pv = |b: usize| (n - 1) + b;
        let qv = |b: usize| (n - 1) + nb + b;
        let av = |k: usize| (n - 1) + 2 * nb + k;
        let sv = |k: usize| (n - 1) + 2 * nb + n_aux + k;

        let mut b = DMatrix::zeros(dim, dim);
        let mut f = DMatrix::zeros(dim, n_src);
        let p_row = |j: usize| j - 1;
        let q_row = |j: usize| (n - 1) + j - 1;
        let d_row = |br: usize| 2 * (n - 1) + br;
        let a_row = |k: usize| 2 * (n - 1) + nb + k;
        let s_row = |k: usize| 2 * (n - 1) + nb + n_aux + k;

        for j in 1..n {
            let parent = topo.parent_branch[j].expect("non-root node has a parent");
            b[(p_row(j), pv(parent))] += 1.0;
            b[(q_row(j), qv(parent))] += 1.0;
            for &c in &topo.child_branches[j] {
                b[(p_row(j), pv(c))] -= 1.0;
                b[(q_row(j), qv(c))] -= 1.0;
            }
        }
        for (k, l) in model.loads.iter().enumerate() {
            let s = model.pv_units.len() + k;
            f[(p_row(l.node), s)] -= 1.0;
            f[(q_row(l.node), s)] -= l.phi;
        }
        for (k, s) in model.svc_devices.iter().enumerate() {
            b[(q_row(s.node), sv(k))] += 1.0;
            b[(s_row(k), sv(k))] = 1.0;
            b[(s_row(k), uv(s.node))] = -0.5 * s.k;
        }
        for (k, c) in model.cap_banks.iter().enumerate() {
            b[(q_row(c.node), uv(c.node))] += state.cap_q[k];
        }
        for (br, branch) in model.branches.iter().enumerate() {
            let row = d_row(br);
            // upstream voltage (root voltage is a constant)
            if branch.from != 0 {
                b[(row, uv(branch.from))] += 1.0;
            }
            b[(row, pv(br))] -= 2.0 * branch.r;
            b[(row, qv(br))] -= 2.0 * branch.x;
            match aux[br] {
                None => b[(row, uv(branch.to))] -= 1.0,
                Some(k) => {
                    b[(row, av(k))] -= 1.0;
                    b[(a_row(k), av(k))] = 1.0;
                    b[(a_row(k), uv(branch.to))] = -state.ratio_sq[br];
                }
            }
        }
        Self { b, f, nodes: n }
    }

    /// Rows `U_j ≤ u_max` for every non-root node, in node order.
    pub fn voltage_rows(&self, u_max: f64) -> Vec<ExplicitRow> {
        let dim = self.b.ncols();
        (1..self.nodes)
            .map(|j| {
                let mut dy = vec![0.0; dim];
                dy[j - 1] = 1.0;
                ExplicitRow {
                    name: format!("umax[{j}]"),
                    dy,
                    gu: vec![0.0; self.f.ncols()],
                    rhs: u_max,
                }
            })
            .collect()
    }

    /// Explicit offset dependence of each node voltage; index 0 is the root.
    pub fn voltage_sensitivity(&self) -> Result<Vec<Vec<f64>>, ChanceError> {
        let rows: Vec<UncertainRow> = propagate(&self.b, &self.f, &self.voltage_rows(0.0))?;
        let mut out = vec![vec![0.0; self.f.ncols()]];
        out.extend(rows.into_iter().map(|r| r.g));
        Ok(out)
    }

    /// Voltage tightening margin per node (same for upper and lower limits).
    pub fn voltage_margins(&self, sigma2: &[f64], alpha: f64) -> Result<Vec<f64>, ChanceError> {
        Ok(self
            .voltage_sensitivity()?
            .iter()
            .map(|g| margin(g, sigma2, alpha))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{
        Base, Branch, Horizon, LoadPoint, Profile, UncertaintySpec, VoltageLimits,
    };

    fn chain() -> NetworkModel {
        let br = |from, to| Branch {
            from,
            to,
            r: 0.1,
            x: 0.2,
            kind: BranchKind::Plain,
        };
        NetworkModel {
            base: Base::default(),
            horizon: Horizon {
                t1: 0.0,
                t2: 3600.0,
                period: 3600.0,
            },
            voltage: VoltageLimits::default(),
            nodes: 3,
            branches: vec![br(0, 1), br(1, 2)],
            pv_units: vec![],
            loads: vec![LoadPoint {
                node: 2,
                p: Profile::from_fn(3600.0, 5, |_| 0.1),
                phi: 0.5,
            }],
            ess_devices: vec![],
            sop_devices: vec![],
            svc_devices: vec![],
            cap_banks: vec![],
            uncertainty: UncertaintySpec::deterministic(0, 1),
        }
    }

    #[test]
    fn chain_sensitivity_matches_hand_derivation() {
        // a unit load increase at node 2 raises both flows by (1, φ);
        // each branch drops 2(r + xφ) = 0.4
        let m = chain();
        let t = m.topology().unwrap();
        let rs = ResponseSystem::build(&m, &t, &RatioChoice::worst_case(&m));
        let g = rs.voltage_sensitivity().unwrap();
        assert!((g[1][0] + 0.4).abs() < 1e-12);
        assert!((g[2][0] + 0.8).abs() < 1e-12);
    }

    #[test]
    fn oltc_ratio_scales_downstream_sensitivity() {
        let mut m = chain();
        m.branches[0].kind = BranchKind::Oltc {
            taps: vec![0.9, 1.0, 1.1],
        };
        let t = m.topology().unwrap();
        let rs = ResponseSystem::build(&m, &t, &RatioChoice::worst_case(&m));
        let g = rs.voltage_sensitivity().unwrap();
        // U1 = (U0 - drop01) / a²
        assert!((g[1][0] + 0.4 / 0.81).abs() < 1e-12);
        assert!((g[2][0] - (g[1][0] - 0.4)).abs() < 1e-12);
    }
}
