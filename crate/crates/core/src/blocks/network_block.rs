use super::devices::step_selection;
use super::{coef_vars, BlockCtx, BlockError};
use crate::milp::{LinExpr, LinearConstraint, MilpProblem, VarId};
use crate::network::{BranchKind, NetworkModel, Topology};

/// Squared-voltage coefficients per node for one period (node 0 is fixed).
///
/// Variables carry the physical limits as bounds; `margin[j] > 0` adds the
/// tightened limits as explicit rows.
pub fn voltage_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    model: &NetworkModel,
    margin: &[f64],
) -> Result<Vec<Vec<LinExpr>>, BlockError> {
    let n = ctx.coeff_count();
    let mut out = vec![vec![LinExpr::constant_expr(model.voltage.u_source); n]];
    for j in 1..model.nodes {
        let tag = format!("u{j}_m{m}");
        let u = coef_vars(pb, &tag, n, ctx.u_min, ctx.u_max)?;
        let mj = margin.get(j).copied().unwrap_or(0.0);
        if mj > 0.0 {
            for (i, &ui) in u.iter().enumerate() {
                pb.add_constraint(
                    format!("{tag}_max[{i}]"),
                    LinearConstraint::le(ui, ctx.u_max - mj),
                )?;
                pb.add_constraint(
                    format!("{tag}_min[{i}]"),
                    LinearConstraint::ge(ui, ctx.u_min + mj),
                )?;
            }
        }
        out.push(u.into_iter().map(LinExpr::from).collect());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TapBlock {
    pub lambda: Vec<VarId>,
    pub z: Vec<Vec<VarId>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkBlock {
    pub p: Vec<Vec<VarId>>,
    pub q: Vec<Vec<VarId>>,
    /// Downstream-side voltage entering the drop equation of OLTC and
    /// regulator branches.
    pub aux: Vec<Option<Vec<LinExpr>>>,
    pub taps: Vec<Option<TapBlock>>,
    /// Power drawn from the transmission side.
    pub p0: Vec<LinExpr>,
    pub q0: Vec<LinExpr>,
}

/// LinDistFlow for one period. `p_cons[j]`/`q_cons[j]` are the net
/// consumption coefficients at node `j` assembled from the device blocks.
#[allow(clippy::too_many_arguments)]
pub fn network_block(
    pb: &mut MilpProblem,
    ctx: &BlockCtx,
    m: usize,
    model: &NetworkModel,
    topo: &Topology,
    u: &[Vec<LinExpr>],
    p_cons: &[Vec<LinExpr>],
    q_cons: &[Vec<LinExpr>],
) -> Result<NetworkBlock, BlockError> {
    let n = ctx.coeff_count();
    let mut p = Vec::with_capacity(model.branches.len());
    let mut q = Vec::with_capacity(model.branches.len());
    for br in &model.branches {
        let tag = format!("f{}_{}_m{m}", br.from, br.to);
        p.push(coef_vars(
            pb,
            &format!("{tag}_p"),
            n,
            f64::NEG_INFINITY,
            f64::INFINITY,
        )?);
        q.push(coef_vars(
            pb,
            &format!("{tag}_q"),
            n,
            f64::NEG_INFINITY,
            f64::INFINITY,
        )?);
    }

    for j in 1..model.nodes {
        let parent = topo.parent_branch[j].expect("non-root node has a parent");
        for i in 0..n {
            let mut pe = LinExpr::from(p[parent][i]) - p_cons[j][i].clone();
            let mut qe = LinExpr::from(q[parent][i]) - q_cons[j][i].clone();
            for &c in &topo.child_branches[j] {
                pe -= p[c][i];
                qe -= q[c][i];
            }
            pb.add_constraint(format!("pbal{j}_m{m}[{i}]"), LinearConstraint::eq(pe, 0.0))?;
            pb.add_constraint(format!("qbal{j}_m{m}[{i}]"), LinearConstraint::eq(qe, 0.0))?;
        }
    }

    let mut aux = Vec::with_capacity(model.branches.len());
    let mut taps = Vec::with_capacity(model.branches.len());
    for (b, br) in model.branches.iter().enumerate() {
        let tag = format!("br{b}_m{m}");
        let down: Vec<LinExpr> = match &br.kind {
            BranchKind::Plain => {
                aux.push(None);
                taps.push(None);
                u[br.to].clone()
            }
            BranchKind::Oltc { taps: ratios } => {
                let (lambda, z) =
                    step_selection(pb, ctx, &format!("{tag}_tap"), ratios.len(), &u[br.to])?;
                let e: Vec<LinExpr> = (0..n)
                    .map(|i| {
                        ratios
                            .iter()
                            .zip(&z)
                            .fold(LinExpr::new(), |acc, (&a, zk)| acc + zk[i] * (a * a))
                    })
                    .collect();
                aux.push(Some(e.clone()));
                taps.push(Some(TapBlock { lambda, z }));
                e
            }
            BranchKind::Regulator { tau_min, tau_max } => {
                let lo = tau_min * tau_min;
                let hi = tau_max * tau_max;
                let v = coef_vars(pb, &format!("{tag}_reg"), n, lo * ctx.u_min, hi * ctx.u_max)?;
                for i in 0..n {
                    let to = u[br.to][i].clone();
                    pb.add_constraint(
                        format!("{tag}_rlo[{i}]"),
                        LinearConstraint::ge(v[i] - to.clone() * lo, 0.0),
                    )?;
                    pb.add_constraint(
                        format!("{tag}_rhi[{i}]"),
                        LinearConstraint::le(v[i] - to * hi, 0.0),
                    )?;
                }
                let e: Vec<LinExpr> = v.into_iter().map(LinExpr::from).collect();
                aux.push(Some(e.clone()));
                taps.push(None);
                e
            }
        };
        for i in 0..n {
            let row = u[br.from][i].clone()
                - down[i].clone()
                - p[b][i] * (2.0 * br.r)
                - q[b][i] * (2.0 * br.x);
            pb.add_constraint(format!("{tag}_drop[{i}]"), LinearConstraint::eq(row, 0.0))?;
        }
    }

    let mut p0 = vec![LinExpr::new(); n];
    let mut q0 = vec![LinExpr::new(); n];
    for &c in &topo.child_branches[0] {
        for i in 0..n {
            p0[i] += p[c][i];
            q0[i] += q[c][i];
        }
    }
    Ok(NetworkBlock {
        p,
        q,
        aux,
        taps,
        p0,
        q0,
    })
}
