use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::*;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    #[serde(default)]
    base: Option<BaseSpec>,
    horizon: HorizonSpec,
    #[serde(default)]
    voltage: Option<VoltageSpec>,
    nodes: usize,
    branches: Vec<BranchSpec>,
    #[serde(default)]
    devices: DevicesSpec,
    #[serde(default)]
    uncertainty: Option<UncertaintyFileSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BaseSpec {
    mva: f64,
    kv: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonSpec {
    t1: f64,
    t2: f64,
    period: f64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoltageSpec {
    u_min: Option<f64>,
    u_max: Option<f64>,
    u_source: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct BranchSpec {
    from: usize,
    to: usize,
    r: f64,
    x: f64,
    #[serde(flatten)]
    kind: KindSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum KindSpec {
    Plain,
    Oltc { taps: Vec<f64> },
    Regulator { tau_min: f64, tau_max: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum ProfileSpec {
    Csv { csv: String },
    Samples { samples: Vec<[f64; 2]> },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum VarianceSpec {
    Scalar(f64),
    List(Vec<f64>),
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DevicesSpec {
    #[serde(default)]
    pv: Vec<PvSpec>,
    #[serde(default)]
    loads: Vec<LoadSpec>,
    #[serde(default)]
    ess: Vec<EssSpec>,
    #[serde(default)]
    sop: Vec<SopSpec>,
    #[serde(default)]
    svc: Vec<SvcSpec>,
    #[serde(default)]
    cap_banks: Vec<CapSpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PvSpec {
    node: usize,
    s_max: f64,
    q_max: f64,
    u_breaks: [f64; 4],
    p_max: ProfileSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LoadSpec {
    node: usize,
    p: ProfileSpec,
    #[serde(default)]
    phi: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EssSpec {
    node: usize,
    e_max: f64,
    e0: f64,
    eta_c: f64,
    eta_d: f64,
    p_c: f64,
    p_d: f64,
    #[serde(default)]
    t_min_c: f64,
    #[serde(default)]
    t_min_d: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SopSpec {
    node_i: usize,
    node_j: usize,
    s_max: f64,
    p_min: f64,
    p_max: f64,
    #[serde(default)]
    loss: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SvcSpec {
    node: usize,
    k: f64,
    u_ref: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_max: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CapSpec {
    node: usize,
    steps: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UncertaintyFileSpec {
    alpha: f64,
    #[serde(default)]
    sigma2_pv: Option<VarianceSpec>,
    #[serde(default)]
    sigma2_load: Option<VarianceSpec>,
}

/// Reads, resolves and validates a model file. CSV profile paths are
/// relative to the model file's directory.
pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel, ModelError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse(&text, &path.display().to_string(), &dir)
}

/// Parses a model from JSON text; CSV paths resolve against the working directory.
pub fn load_model_str(text: &str) -> Result<NetworkModel, ModelError> {
    parse(text, "<string>", Path::new("."))
}

pub fn to_json(model: &NetworkModel) -> String {
    serde_json::to_string_pretty(&to_file(model)).expect("model serializes")
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    std::fs::write(path, to_json(model)).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse(text: &str, name: &str, dir: &Path) -> Result<NetworkModel, ModelError> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| ModelError::Parse {
        path: name.to_string(),
        message: e.to_string(),
    })?;
    let model = from_file(file, name, dir)?;
    let violations = validate(&model);
    if violations.is_empty() {
        Ok(model)
    } else {
        Err(ModelError::Invalid(violations))
    }
}

fn read_profile(spec: ProfileSpec, name: &str, dir: &Path) -> Result<Profile, ModelError> {
    match spec {
        ProfileSpec::Samples { samples } => Ok(Profile::new(
            samples.into_iter().map(|[t, v]| (t, v)).collect(),
        )),
        ProfileSpec::Csv { csv } => {
            let p: PathBuf = dir.join(&csv);
            let parse_err = |message: String| ModelError::Parse {
                path: p.display().to_string(),
                message,
            };
            let mut rdr = csv::Reader::from_path(&p).map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => ModelError::Io {
                    path: p.display().to_string(),
                    source: std::io::Error::new(std::io::ErrorKind::NotFound, e.to_string()),
                },
                _ => parse_err(e.to_string()),
            })?;
            let headers = rdr.headers().map_err(|e| parse_err(e.to_string()))?.clone();
            if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
                return Err(parse_err(format!(
                    "expected header `t,value` (referenced from {name})"
                )));
            }
            let mut samples = Vec::new();
            for rec in rdr.deserialize::<(f64, f64)>() {
                samples.push(rec.map_err(|e| parse_err(e.to_string()))?);
            }
            Ok(Profile::new(samples))
        }
    }
}

fn variances(spec: Option<VarianceSpec>, n: usize) -> Vec<f64> {
    match spec {
        None => vec![0.0; n],
        Some(VarianceSpec::Scalar(s)) => vec![s; n],
        Some(VarianceSpec::List(v)) => v,
    }
}

fn from_file(f: ModelFile, name: &str, dir: &Path) -> Result<NetworkModel, ModelError> {
    let dv = VoltageLimits::default();
    let v = f.voltage.unwrap_or_default();
    let d = f.devices;
    let pv_units =
        d.pv.into_iter()
            .map(|p| {
                Ok(PvUnit {
                    node: p.node,
                    s_max: p.s_max,
                    q_max: p.q_max,
                    u_breaks: p.u_breaks,
                    p_max: read_profile(p.p_max, name, dir)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
    let loads = d
        .loads
        .into_iter()
        .map(|l| {
            Ok(LoadPoint {
                node: l.node,
                p: read_profile(l.p, name, dir)?,
                phi: l.phi,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let (alpha, s_pv, s_load) = match f.uncertainty {
        Some(u) => (u.alpha, u.sigma2_pv, u.sigma2_load),
        None => (0.5, None, None),
    };
    Ok(NetworkModel {
        base: f
            .base
            .map(|b| Base {
                mva: b.mva,
                kv: b.kv,
            })
            .unwrap_or_default(),
        horizon: Horizon {
            t1: f.horizon.t1,
            t2: f.horizon.t2,
            period: f.horizon.period,
        },
        voltage: VoltageLimits {
            u_min: v.u_min.unwrap_or(dv.u_min),
            u_max: v.u_max.unwrap_or(dv.u_max),
            u_source: v.u_source.unwrap_or(dv.u_source),
        },
        nodes: f.nodes,
        branches: f
            .branches
            .into_iter()
            .map(|b| Branch {
                from: b.from,
                to: b.to,
                r: b.r,
                x: b.x,
                kind: match b.kind {
                    KindSpec::Plain => BranchKind::Plain,
                    KindSpec::Oltc { taps } => BranchKind::Oltc { taps },
                    KindSpec::Regulator { tau_min, tau_max } => {
                        BranchKind::Regulator { tau_min, tau_max }
                    }
                },
            })
            .collect(),
        uncertainty: UncertaintySpec {
            alpha,
            sigma2_pv: variances(s_pv, pv_units.len()),
            sigma2_load: variances(s_load, loads.len()),
        },
        pv_units,
        loads,
        ess_devices: d
            .ess
            .into_iter()
            .map(|e| EssDevice {
                node: e.node,
                e_max: e.e_max,
                e0: e.e0,
                eta_c: e.eta_c,
                eta_d: e.eta_d,
                p_c: e.p_c,
                p_d: e.p_d,
                t_min_c: e.t_min_c,
                t_min_d: e.t_min_d,
            })
            .collect(),
        sop_devices: d
            .sop
            .into_iter()
            .map(|s| SopDevice {
                node_i: s.node_i,
                node_j: s.node_j,
                s_max: s.s_max,
                p_min: s.p_min,
                p_max: s.p_max,
                loss: s.loss,
            })
            .collect(),
        svc_devices: d
            .svc
            .into_iter()
            .map(|s| SvcDevice {
                node: s.node,
                k: s.k,
                u_ref: s.u_ref,
                q_min: s.q_min,
                q_max: s.q_max,
            })
            .collect(),
        cap_banks: d
            .cap_banks
            .into_iter()
            .map(|c| CapacitorBank {
                node: c.node,
                steps: c.steps,
            })
            .collect(),
    })
}

fn inline(p: &Profile) -> ProfileSpec {
    ProfileSpec::Samples {
        samples: p.samples.iter().map(|&(t, v)| [t, v]).collect(),
    }
}

fn to_file(m: &NetworkModel) -> ModelFile {
    ModelFile {
        base: Some(BaseSpec {
            mva: m.base.mva,
            kv: m.base.kv,
        }),
        horizon: HorizonSpec {
            t1: m.horizon.t1,
            t2: m.horizon.t2,
            period: m.horizon.period,
        },
        voltage: Some(VoltageSpec {
            u_min: Some(m.voltage.u_min),
            u_max: Some(m.voltage.u_max),
            u_source: Some(m.voltage.u_source),
        }),
        nodes: m.nodes,
        branches: m
            .branches
            .iter()
            .map(|b| BranchSpec {
                from: b.from,
                to: b.to,
                r: b.r,
                x: b.x,
                kind: match &b.kind {
                    BranchKind::Plain => KindSpec::Plain,
                    BranchKind::Oltc { taps } => KindSpec::Oltc { taps: taps.clone() },
                    BranchKind::Regulator { tau_min, tau_max } => KindSpec::Regulator {
                        tau_min: *tau_min,
                        tau_max: *tau_max,
                    },
                },
            })
            .collect(),
        devices: DevicesSpec {
            pv: m
                .pv_units
                .iter()
                .map(|p| PvSpec {
                    node: p.node,
                    s_max: p.s_max,
                    q_max: p.q_max,
                    u_breaks: p.u_breaks,
                    p_max: inline(&p.p_max),
                })
                .collect(),
            loads: m
                .loads
                .iter()
                .map(|l| LoadSpec {
                    node: l.node,
                    p: inline(&l.p),
                    phi: l.phi,
                })
                .collect(),
            ess: m
                .ess_devices
                .iter()
                .map(|e| EssSpec {
                    node: e.node,
                    e_max: e.e_max,
                    e0: e.e0,
                    eta_c: e.eta_c,
                    eta_d: e.eta_d,
                    p_c: e.p_c,
                    p_d: e.p_d,
                    t_min_c: e.t_min_c,
                    t_min_d: e.t_min_d,
                })
                .collect(),
            sop: m
                .sop_devices
                .iter()
                .map(|s| SopSpec {
                    node_i: s.node_i,
                    node_j: s.node_j,
                    s_max: s.s_max,
                    p_min: s.p_min,
                    p_max: s.p_max,
                    loss: s.loss,
                })
                .collect(),
            svc: m
                .svc_devices
                .iter()
                .map(|s| SvcSpec {
                    node: s.node,
                    k: s.k,
                    u_ref: s.u_ref,
                    q_min: s.q_min,
                    q_max: s.q_max,
                })
                .collect(),
            cap_banks: m
                .cap_banks
                .iter()
                .map(|c| CapSpec {
                    node: c.node,
                    steps: c.steps.clone(),
                })
                .collect(),
        },
        uncertainty: Some(UncertaintyFileSpec {
            alpha: m.uncertainty.alpha,
            sigma2_pv: Some(VarianceSpec::List(m.uncertainty.sigma2_pv.clone())),
            sigma2_load: Some(VarianceSpec::List(m.uncertainty.sigma2_load.clone())),
        }),
    }
}
