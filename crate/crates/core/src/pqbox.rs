use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::Serialize;
use thiserror::Error;

use crate::engine::{normalize_angle, EngineError, FlexTube};

#[derive(Debug, Error)]
pub enum PqBoxError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("no feasible direction at t0 = {0}")]
    NoFeasibleDirection(f64),
    #[error("start point ({p}, {q}) is outside the region")]
    StartOutside { p: f64, q: f64 },
    #[error("step {delta} and tolerance {eps} must be positive and finite")]
    InvalidStep { delta: f64, eps: f64 },
    #[error("box still growing after {0} rounds; region looks unbounded")]
    Unbounded(usize),
}

/// Membership test for a fixed time.
pub trait RegionOracle {
    fn contains(&self, p: f64, q: f64) -> bool;
}

impl<F: Fn(f64, f64) -> bool> RegionOracle for F {
    fn contains(&self, p: f64, q: f64) -> bool {
        self(p, q)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiskOracle {
    pub center: (f64, f64),
    pub radius: f64,
}

impl RegionOracle for DiskOracle {
    fn contains(&self, p: f64, q: f64) -> bool {
        (p - self.center.0).hypot(q - self.center.1) <= self.radius
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RectOracle {
    pub p_lo: f64,
    pub p_hi: f64,
    pub q_lo: f64,
    pub q_hi: f64,
}

impl RegionOracle for RectOracle {
    fn contains(&self, p: f64, q: f64) -> bool {
        (self.p_lo..=self.p_hi).contains(&p) && (self.q_lo..=self.q_hi).contains(&q)
    }
}

/// Relative slack on boundary comparisons, so boundary points stay members.
const BOUNDARY_TOL: f64 = 1e-12;

/// Sampled boundary radii of the tube at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub t0: f64,
    /// `(θ, S0(t0))` sorted by angle; `None` marks a gap.
    pub rays: Vec<(f64, Option<f64>)>,
}

pub fn cross_section(tube: &FlexTube, t0: f64) -> Result<CrossSection, PqBoxError> {
    let rays = (0..tube.slices.len())
        .map(|k| Ok((tube.slices[k].theta, tube.radius(k, t0)?)))
        .collect::<Result<Vec<_>, EngineError>>()?;
    Ok(CrossSection { t0, rays })
}

fn unit(theta: f64) -> (f64, f64) {
    (theta.cos(), theta.sin())
}

fn cross(a: (f64, f64), b: (f64, f64)) -> f64 {
    a.0 * b.1 - a.1 * b.0
}

impl CrossSection {
    pub fn any_feasible(&self) -> bool {
        self.rays.iter().any(|r| r.1.is_some())
    }

    pub fn max_radius(&self) -> f64 {
        self.rays.iter().filter_map(|r| r.1).fold(0.0, f64::max)
    }

    fn same_angle(a: f64, b: f64) -> bool {
        let d = (normalize_angle(a) - normalize_angle(b)).abs();
        d <= 1e-9 || TAU - d <= 1e-9
    }

    /// Boundary distance along `θ`: the sampled radius on a sampled direction,
    /// otherwise where the ray meets the chord between the two neighbouring
    /// endpoints. `None` inside a gap.
    pub fn boundary_radius(&self, theta: f64) -> Option<f64> {
        let n = self.rays.len();
        if n == 0 {
            return None;
        }
        if let Some(&(_, r)) = self.rays.iter().find(|(t, _)| Self::same_angle(*t, theta)) {
            return r;
        }
        if n < 2 {
            return None;
        }
        let th = normalize_angle(theta);
        let hi = self.rays.iter().position(|(t, _)| *t > th).unwrap_or(n);
        let (lo, hi) = if hi == 0 {
            (n - 1, 0)
        } else {
            (hi - 1, hi % n)
        };
        let (t_lo, r_lo) = self.rays[lo];
        let (t_hi, r_hi) = self.rays[hi];
        let (r_lo, r_hi) = (r_lo?, r_hi?);
        let a = (r_lo * t_lo.cos(), r_lo * t_lo.sin());
        let b = (r_hi * t_hi.cos(), r_hi * t_hi.sin());
        let ab = (b.0 - a.0, b.1 - a.1);
        let denom = cross(unit(th), ab);
        if denom.abs() < 1e-15 {
            return Some(0.0);
        }
        Some((cross(a, ab) / denom).max(0.0))
    }

    /// Contiguous runs of feasible rays as index lists, in angular order.
    fn pieces(&self) -> Vec<Vec<usize>> {
        let n = self.rays.len();
        let Some(first_gap) = self.rays.iter().position(|r| r.1.is_none()) else {
            return vec![(0..n).collect()];
        };
        let mut pieces = Vec::new();
        let mut cur = Vec::new();
        for s in 1..=n {
            let k = (first_gap + s) % n;
            if self.rays[k].1.is_some() {
                cur.push(k);
            } else if !cur.is_empty() {
                pieces.push(std::mem::take(&mut cur));
            }
        }
        pieces
    }
}

impl RegionOracle for CrossSection {
    fn contains(&self, p: f64, q: f64) -> bool {
        let r = p.hypot(q);
        if r == 0.0 {
            return self.any_feasible();
        }
        match self.boundary_radius(q.atan2(p)) {
            Some(rho) => r <= rho * (1.0 + BOUNDARY_TOL) + BOUNDARY_TOL,
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InitCase {
    /// Every sampled direction is feasible.
    AllDirections,
    /// Largest feasible piece spans at most π.
    NarrowPiece,
    /// Largest feasible piece spans more than π.
    WidePiece,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InitialPoint {
    pub p: f64,
    pub q: f64,
    pub case: InitCase,
}

pub fn initial_point(cs: &CrossSection) -> Result<InitialPoint, PqBoxError> {
    if !cs.any_feasible() {
        return Err(PqBoxError::NoFeasibleDirection(cs.t0));
    }
    let pieces = cs.pieces();
    let n = cs.rays.len();
    if pieces.len() == 1 && pieces[0].len() == n {
        // midpoint of the longest chord through the origin
        let mut best: Option<(f64, f64, f64)> = None;
        for &(th, r) in &cs.rays {
            let up = r.expect("all feasible");
            let down = cs.boundary_radius(th + PI).unwrap_or(0.0);
            if best.is_none_or(|b| up + down > b.0 + 1e-12) {
                best = Some((up + down, th, up - down));
            }
        }
        let (_, th, offset) = best.expect("nonempty");
        let (c, s) = unit(th);
        return Ok(InitialPoint {
            p: 0.5 * offset * c,
            q: 0.5 * offset * s,
            case: InitCase::AllDirections,
        });
    }
    let piece = pieces.iter().fold(
        &pieces[0],
        |best, p| if p.len() > best.len() { p } else { best },
    );
    let first = cs.rays[piece[0]].0;
    let unwrap = |k: usize| {
        let t = cs.rays[k].0;
        if t < first {
            t + TAU
        } else {
            t
        }
    };
    let width = unwrap(*piece.last().expect("nonempty piece")) - first;
    if width <= PI + 1e-12 {
        let mid = first + 0.5 * width;
        let r = cs.boundary_radius(mid).unwrap_or(0.0);
        let (c, s) = unit(mid);
        Ok(InitialPoint {
            p: 0.5 * r * c,
            q: 0.5 * r * s,
            case: InitCase::NarrowPiece,
        })
    } else {
        let (th, r) = piece
            .iter()
            .map(|&k| (cs.rays[k].0, cs.rays[k].1.expect("feasible piece")))
            .fold(
                (first, f64::NEG_INFINITY),
                |b, x| if x.1 > b.1 { x } else { b },
            );
        let (c, s) = unit(th);
        Ok(InitialPoint {
            p: 0.5 * r * c,
            q: 0.5 * r * s,
            case: InitCase::WidePiece,
        })
    }
}

/// Box sides in the order P-up, P-down, Q-up, Q-down.
pub const SIDES: [&str; 4] = ["P1", "P2", "Q1", "Q2"];
const SIGNS: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpandOptions {
    pub delta: f64,
    pub eps: f64,
    /// Extra membership samples per box edge; 0 checks corners only.
    pub edge_samples: usize,
    pub max_rounds: usize,
}

impl ExpandOptions {
    pub fn new(delta: f64, eps: f64) -> Self {
        Self {
            delta,
            eps,
            edge_samples: 0,
            max_rounds: 1_000_000,
        }
    }

    /// Step of 5% and tolerance of 1e-4 of `scale`.
    pub fn scaled(scale: f64) -> Self {
        Self::new(0.05 * scale, 1e-4 * scale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqBox {
    pub t0: Option<f64>,
    #[serde(rename = "P1")]
    pub p1: f64,
    #[serde(rename = "P2")]
    pub p2: f64,
    #[serde(rename = "Q1")]
    pub q1: f64,
    #[serde(rename = "Q2")]
    pub q2: f64,
    pub iterations: usize,
    pub frozen_reasons: BTreeMap<String, String>,
}

impl PqBox {
    pub fn corners(&self) -> [(f64, f64); 4] {
        [
            (self.p1, self.q1),
            (self.p1, self.q2),
            (self.p2, self.q1),
            (self.p2, self.q2),
        ]
    }

    fn sides(&self) -> [f64; 4] {
        [self.p1, self.p2, self.q1, self.q2]
    }

    /// The same box with side `i` moved outward by `d`.
    pub fn pushed(&self, i: usize, d: f64) -> [f64; 4] {
        let mut s = self.sides();
        s[i] += SIGNS[i] * d;
        s
    }
}

fn box_inside(oracle: &dyn RegionOracle, s: &[f64; 4], edge_samples: usize) -> bool {
    let [p1, p2, q1, q2] = *s;
    let corners = [(p1, q1), (p1, q2), (p2, q1), (p2, q2)];
    if !corners.iter().all(|&(p, q)| oracle.contains(p, q)) {
        return false;
    }
    (1..=edge_samples).all(|j| {
        let w = j as f64 / (edge_samples + 1) as f64;
        let p = p2 + w * (p1 - p2);
        let q = q2 + w * (q1 - q2);
        oracle.contains(p, q1)
            && oracle.contains(p, q2)
            && oracle.contains(p1, q)
            && oracle.contains(p2, q)
    })
}

/// Box membership with the same edge-sampling rule the search used.
pub fn box_is_member(oracle: &dyn RegionOracle, sides: &[f64; 4], edge_samples: usize) -> bool {
    box_inside(oracle, sides, edge_samples)
}

#[allow(clippy::too_many_arguments)]
fn grow(
    oracle: &dyn RegionOracle,
    sides: &mut [f64; 4],
    initial: f64,
    eps: f64,
    joint: bool,
    edge_samples: usize,
    max_rounds: usize,
    rounds: &mut usize,
    shrinks: &mut [usize; 4],
) -> Result<(), PqBoxError> {
    let mut step = [initial; 4];
    let mut frozen = [false; 4];
    let freeze_at = eps * (1.0 + 1e-9);
    let mut shrink = |i: usize, step: &mut [f64; 4], frozen: &mut [bool; 4]| {
        step[i] /= 10.0;
        shrinks[i] += 1;
        if step[i] <= freeze_at {
            frozen[i] = true;
        }
    };
    while frozen.iter().any(|f| !f) {
        if *rounds >= max_rounds {
            return Err(PqBoxError::Unbounded(*rounds));
        }
        *rounds += 1;
        let active: Vec<usize> = (0..4).filter(|&i| !frozen[i]).collect();
        let mut trial = *sides;
        for &i in &active {
            trial[i] += SIGNS[i] * step[i];
        }
        if box_inside(oracle, &trial, edge_samples) {
            *sides = trial;
            continue;
        }
        if joint {
            // a side is to blame when its move fails on its own; if every
            // move fits alone the failure comes from their combination
            let solo_fails: Vec<usize> = active
                .iter()
                .copied()
                .filter(|&i| {
                    let mut one = *sides;
                    one[i] += SIGNS[i] * step[i];
                    !box_inside(oracle, &one, edge_samples)
                })
                .collect();
            let blamed = if solo_fails.is_empty() {
                active
            } else {
                solo_fails
            };
            for i in blamed {
                shrink(i, &mut step, &mut frozen);
            }
        } else {
            for i in active {
                let mut one = *sides;
                one[i] += SIGNS[i] * step[i];
                if box_inside(oracle, &one, edge_samples) {
                    *sides = one;
                } else {
                    shrink(i, &mut step, &mut frozen);
                }
            }
        }
    }
    Ok(())
}

/// Grows an axis-aligned box around `start`, one step per unfrozen side per
/// round. A side whose move takes a corner out of the region retracts and
/// divides its step by 10; it freezes once the step falls to `eps`.
pub fn expand_box(
    oracle: &dyn RegionOracle,
    start: (f64, f64),
    opts: &ExpandOptions,
) -> Result<PqBox, PqBoxError> {
    let ExpandOptions {
        delta,
        eps,
        edge_samples,
        max_rounds,
    } = *opts;
    if !(delta > 0.0 && eps > 0.0 && delta.is_finite() && eps.is_finite()) {
        return Err(PqBoxError::InvalidStep { delta, eps });
    }
    if !oracle.contains(start.0, start.1) {
        return Err(PqBoxError::StartOutside {
            p: start.0,
            q: start.1,
        });
    }
    let mut sides = [start.0, start.0, start.1, start.1];
    let mut shrinks = [0usize; 4];
    let mut rounds = 0;
    // the joint pass treats all sides alike, so symmetric regions give
    // symmetric boxes; the polish pass then takes up any single-side slack
    // that the joint blame left behind
    for (initial, joint) in [(delta, true), ((10.0 * eps).min(delta), false)] {
        grow(
            oracle,
            &mut sides,
            initial,
            eps,
            joint,
            edge_samples,
            max_rounds,
            &mut rounds,
            &mut shrinks,
        )?;
    }

    let frozen_reasons = SIDES
        .iter()
        .zip(shrinks)
        .map(|(name, k)| {
            (
                name.to_string(),
                format!("step below tolerance after {k} reductions"),
            )
        })
        .collect();
    // adding 0.0 turns -0.0 into 0.0
    Ok(PqBox {
        t0: None,
        p1: sides[0] + 0.0,
        p2: sides[1] + 0.0,
        q1: sides[2] + 0.0,
        q2: sides[3] + 0.0,
        iterations: rounds,
        frozen_reasons,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PqBoxReport {
    pub start: InitialPoint,
    #[serde(rename = "box")]
    pub pq_box: PqBox,
}

/// Initial point plus expansion on the tube cross-section at `t0`, with the
/// default step and tolerance unless `opts` is given.
pub fn tube_box(
    tube: &FlexTube,
    t0: f64,
    opts: Option<ExpandOptions>,
) -> Result<PqBoxReport, PqBoxError> {
    let cs = cross_section(tube, t0)?;
    let start = initial_point(&cs)?;
    let scale = cs.max_radius();
    let mut pq_box = if scale <= 0.0 {
        // the region collapses to the origin
        let reasons = SIDES
            .iter()
            .map(|s| (s.to_string(), "zero boundary radius".to_string()))
            .collect();
        PqBox {
            t0: None,
            p1: 0.0,
            p2: 0.0,
            q1: 0.0,
            q2: 0.0,
            iterations: 0,
            frozen_reasons: reasons,
        }
    } else {
        expand_box(
            &cs,
            (start.p, start.q),
            &opts.unwrap_or(ExpandOptions::scaled(scale)),
        )?
    };
    pq_box.t0 = Some(t0);
    Ok(PqBoxReport { start, pq_box })
}

/// `(θ, ρ)` samples of the cross-section boundary; gaps have no radius.
pub fn boundary_csv(cs: &CrossSection, samples: usize) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let rows = (|| -> csv::Result<()> {
        w.write_record(["theta", "radius", "p", "q"])?;
        for k in 0..samples {
            let th = k as f64 * TAU / samples as f64;
            match cs.boundary_radius(th) {
                Some(r) => w.write_record([
                    th.to_string(),
                    r.to_string(),
                    (r * th.cos()).to_string(),
                    (r * th.sin()).to_string(),
                ])?,
                None => {
                    w.write_record([th.to_string(), String::new(), String::new(), String::new()])?
                }
            }
        }
        Ok(())
    })();
    rows.expect("writing CSV to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
}
