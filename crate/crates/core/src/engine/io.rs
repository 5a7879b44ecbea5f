use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{
    assemble_tube, metric_m, EngineError, FlexTube, Penetration, Slice, SliceStatus, TubeHorizon,
    TubePoint,
};
use crate::bernstein::CtTrajectory;

fn csv_string(write: impl FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    write(&mut w).expect("writing CSV to memory");
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("CSV is UTF-8")
}

/// One row per coefficient of each optimal slice; gaps get a single row
/// with an empty value.
pub fn tube_csv(tube: &FlexTube) -> String {
    csv_string(|w| {
        w.write_record(["theta", "period", "coef_index", "value", "status"])?;
        for s in &tube.slices {
            let th = s.theta.to_string();
            match &s.s0 {
                Some(tr) => {
                    for (m, c) in tr.coeffs().iter().enumerate() {
                        for (i, v) in c.iter().enumerate() {
                            w.write_record([
                                th.as_str(),
                                &m.to_string(),
                                &i.to_string(),
                                &v.to_string(),
                                s.status.label(),
                            ])?;
                        }
                    }
                }
                None => w.write_record([th.as_str(), "", "", "", s.status.label()])?,
            }
        }
        Ok(())
    })
}

/// Dense `(θ, t, P, Q)` grid; gaps are written with empty P and Q.
pub fn plot_data_csv(tube: &FlexTube, angles: usize, times_per_period: usize) -> String {
    let h = tube.horizon;
    let steps = times_per_period.max(1) * h.periods;
    csv_string(|w| {
        w.write_record(["theta", "t", "p", "q"])?;
        for a in 0..angles {
            let th = a as f64 * std::f64::consts::TAU / angles as f64;
            for k in 0..=steps {
                let t = h.start + (h.end() - h.start) * k as f64 / steps as f64;
                let (p, q) = match tube.query_point(th, t) {
                    Ok(TubePoint::Point { p, q }) => (p.to_string(), q.to_string()),
                    _ => (String::new(), String::new()),
                };
                w.write_record([th.to_string(), t.to_string(), p, q])?;
            }
        }
        Ok(())
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Summary {
    pub mode: String,
    pub degree: usize,
    pub period_s: f64,
    pub start_s: f64,
    pub periods: usize,
    pub directions: Vec<f64>,
    pub statuses: Vec<String>,
    pub gaps: Vec<f64>,
    pub theta_set: Vec<f64>,
    pub m: f64,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub objectives: Vec<Option<f64>>,
    pub wall_times_s: Vec<f64>,
    pub total_wall_time_s: f64,
}

pub fn summary_json(
    tube: &FlexTube,
    mode: &str,
    theta_set: &[f64],
    penetration: Option<Penetration>,
    total_wall_time_s: f64,
) -> Result<Summary, super::EngineError> {
    Ok(Summary {
        mode: mode.to_string(),
        degree: tube.horizon.degree,
        period_s: tube.horizon.period,
        start_s: tube.horizon.start,
        periods: tube.horizon.periods,
        directions: tube.directions(),
        statuses: tube
            .slices
            .iter()
            .map(|s| s.status.label().to_string())
            .collect(),
        gaps: tube
            .slices
            .iter()
            .filter(|s| !s.status.is_feasible())
            .map(|s| s.theta)
            .collect(),
        theta_set: theta_set.to_vec(),
        m: metric_m(tube, theta_set)?,
        k1: penetration.map(|p| p.k1),
        k2: penetration.and_then(|p| p.k2),
        objectives: tube.slices.iter().map(|s| s.objective()).collect(),
        wall_times_s: tube
            .slices
            .iter()
            .map(|s| s.wall_time.as_secs_f64())
            .collect(),
        total_wall_time_s,
    })
}

impl Summary {
    pub fn horizon(&self) -> TubeHorizon {
        TubeHorizon {
            degree: self.degree,
            period: self.period_s,
            start: self.start_s,
            periods: self.periods,
        }
    }
}

fn status_from_label(label: &str) -> Option<SliceStatus> {
    [
        SliceStatus::Optimal,
        SliceStatus::Infeasible,
        SliceStatus::TimeLimited,
    ]
    .into_iter()
    .find(|s| s.label() == label)
}

/// Rebuilds a tube from [`tube_csv`] output and the horizon it was solved on.
pub fn tube_from_csv(text: &str, horizon: TubeHorizon) -> Result<FlexTube, EngineError> {
    let bad = |msg: String| EngineError::Config(format!("tube CSV: {msg}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let n = horizon.degree + 1;
    // (theta, status, coefficient values by (period, index))
    let mut slices: Vec<(f64, SliceStatus, Vec<Vec<Option<f64>>>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", rec.len())));
        }
        let theta: f64 = rec[0]
            .parse()
            .map_err(|_| bad(format!("bad angle {:?}", &rec[0])))?;
        let status =
            status_from_label(&rec[4]).ok_or_else(|| bad(format!("bad status {:?}", &rec[4])))?;
        if slices.last().is_none_or(|s| s.0 != theta) {
            slices.push((theta, status, vec![vec![None; n]; horizon.periods]));
        }
        if rec[1].is_empty() {
            continue;
        }
        let parse = |i: usize| {
            rec[i]
                .parse::<usize>()
                .map_err(|_| bad(format!("bad index {:?}", &rec[i])))
        };
        let (m, i) = (parse(1)?, parse(2)?);
        let v: f64 = rec[3]
            .parse()
            .map_err(|_| bad(format!("bad value {:?}", &rec[3])))?;
        let slot = slices
            .last_mut()
            .and_then(|s| s.2.get_mut(m))
            .and_then(|c| c.get_mut(i))
            .ok_or_else(|| bad(format!("coefficient ({m}, {i}) outside the horizon")))?;
        *slot = Some(v);
    }
    let weight = horizon.period / 3600.0 / n as f64;
    let slices = slices
        .into_iter()
        .map(|(theta, status, coeffs)| {
            if !status.is_feasible() {
                return Ok(Slice::infeasible(theta, status, Duration::ZERO));
            }
            let coeffs = coeffs
                .into_iter()
                .map(|c| c.into_iter().collect::<Option<Vec<f64>>>())
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| bad(format!("direction {theta} is missing coefficients")))?;
            let period_objective = coeffs
                .iter()
                .map(|c| weight * c.iter().sum::<f64>())
                .collect();
            Ok(Slice {
                theta,
                status,
                s0: Some(CtTrajectory::new(
                    horizon.degree,
                    horizon.period,
                    horizon.start,
                    coeffs,
                )?),
                period_objective,
                wall_time: Duration::ZERO,
            })
        })
        .collect::<Result<Vec<_>, EngineError>>()?;
    assemble_tube(horizon, slices)
}
