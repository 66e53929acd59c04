//! JSON wire formats: operators, master-equation specs, collision schedules
//! (with named operator expressions resolved against a registry of
//! built-ins), extraction reports, and the gate-list export.
//!
//! All numbers cross the wire as `f64` regardless of the engine scalar.

use serde::{Deserialize, Serialize};

use crate::cmat::CMat;
use crate::collision::{
    AncillaPrep, CollisionSchedule, EnvScaling, ExtractionReport, ScalingRule, Stage,
    TimestepProgram,
};
use crate::error::{Error, Result};
use crate::gkls::{GklsSpec, GksBasis, GksEntry};
use crate::operator::{HilbertDims, Operator};
use crate::scalar::{C, Scalar};

/// `{dims, re, im}` with row-major nested rows.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct OperatorJson {
    pub dims: Vec<usize>,
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

/// Complex matrix without tensor structure (Kossakowski matrices).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub re: Vec<Vec<f64>>,
    pub im: Vec<Vec<f64>>,
}

pub fn operator_to_json<T: Scalar>(op: &Operator<T>) -> OperatorJson {
    let (re, im) = matrix_parts(op.matrix());
    OperatorJson { dims: op.dims().factors().to_vec(), re, im }
}

pub fn operator_from_json<T: Scalar>(json: &OperatorJson) -> Result<Operator<T>> {
    let dims = if json.dims.is_empty() {
        HilbertDims::scalar()
    } else {
        HilbertDims::new(json.dims.clone())?
    };
    Operator::new(dims, matrix_from_parts(&json.re, &json.im)?)
}

pub fn matrix_to_json<T: Scalar>(m: &CMat<T>) -> MatrixJson {
    let (re, im) = matrix_parts(m);
    MatrixJson { re, im }
}

pub fn matrix_from_json<T: Scalar>(json: &MatrixJson) -> Result<CMat<T>> {
    matrix_from_parts(&json.re, &json.im)
}

fn matrix_parts<T: Scalar>(m: &CMat<T>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut re = Vec::with_capacity(m.rows());
    let mut im = Vec::with_capacity(m.rows());
    for r in 0..m.rows() {
        re.push(m.row(r).iter().map(|z| z.re.to_f64_lossy()).collect());
        im.push(m.row(r).iter().map(|z| z.im.to_f64_lossy()).collect());
    }
    (re, im)
}

fn matrix_from_parts<T: Scalar>(re: &[Vec<f64>], im: &[Vec<f64>]) -> Result<CMat<T>> {
    let rows = re.len();
    if im.len() != rows {
        return Err(Error::invalid("re/im row counts differ"));
    }
    let cols = re.first().map_or(0, Vec::len);
    if re.iter().any(|r| r.len() != cols) || im.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            m[(r, c)] = C::new(T::from_f64(re[r][c]), T::from_f64(im[r][c]));
        }
    }
    Ok(m)
}

/// Operator expression: a named built-in, an inline matrix, or a composition.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorExpr {
    /// Registry reference, e.g. `"sigma_minus"` or `"annihilation:12"`.
    Name(String),
    Matrix(OperatorJson),
    Kron(Vec<OperatorExpr>),
    Sum(Vec<OperatorExpr>),
    Scale { re: f64, im: f64, of: Box<OperatorExpr> },
    Dagger(Box<OperatorExpr>),
    /// `X + X^dag`.
    PlusHc(Box<OperatorExpr>),
}

impl OperatorExpr {
    pub fn name(n: impl Into<String>) -> Self {
        OperatorExpr::Name(n.into())
    }

    /// Resolve against the built-in registry.
    pub fn resolve<T: Scalar>(&self) -> Result<Operator<T>> {
        match self {
            OperatorExpr::Name(name) => builtin_operator(name),
            OperatorExpr::Matrix(json) => operator_from_json(json),
            OperatorExpr::Kron(parts) => {
                let ops: Vec<Operator<T>> =
                    parts.iter().map(|p| p.resolve()).collect::<Result<_>>()?;
                let refs: Vec<&Operator<T>> = ops.iter().collect();
                crate::operator::kron_all(&refs)
            }
            OperatorExpr::Sum(parts) => {
                let mut acc: Option<Operator<T>> = None;
                for p in parts {
                    let op = p.resolve()?;
                    acc = Some(match acc {
                        Some(a) => a.add(&op)?,
                        None => op,
                    });
                }
                acc.ok_or_else(|| Error::invalid("empty operator sum"))
            }
            OperatorExpr::Scale { re, im, of } => {
                Ok(of.resolve()?.scale(C::new(T::from_f64(*re), T::from_f64(*im))))
            }
            OperatorExpr::Dagger(inner) => Ok(inner.resolve::<T>()?.dagger()),
            OperatorExpr::PlusHc(inner) => {
                let op = inner.resolve::<T>()?;
                op.add(&op.dagger())
            }
        }
    }
}

/// Built-in operator registry. Parametrized entries take `name:dim`.
pub fn builtin_operator<T: Scalar>(name: &str) -> Result<Operator<T>> {
    let (head, param) = match name.split_once(':') {
        Some((h, p)) => {
            let d: usize = p
                .parse()
                .map_err(|_| Error::invalid(format!("bad operator parameter in {name}")))?;
            (h, Some(d))
        }
        None => (name, None),
    };
    let need = |p: Option<usize>| {
        p.ok_or_else(|| Error::invalid(format!("operator {head} needs a dimension parameter")))
    };
    match head {
        "identity" => crate::ops::identity_op(need(param)?),
        "sigma_x" => Ok(crate::ops::sigma_x()),
        "sigma_y" => Ok(crate::ops::sigma_y()),
        "sigma_z" => Ok(crate::ops::sigma_z()),
        "sigma_plus" => Ok(crate::ops::sigma_plus()),
        "sigma_minus" => Ok(crate::ops::sigma_minus()),
        "ground_projector" => crate::ops::ground_projector(need(param)?),
        "excited_projector" => Ok(crate::ops::excited_projector()),
        "annihilation" => crate::ops::annihilation_op(need(param)?),
        "creation" => Ok(crate::ops::annihilation_op(need(param)?)?.dagger()),
        "number" => crate::ops::number_op(need(param)?),
        other => Err(Error::invalid(format!("unknown operator name {other}"))),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrepJson {
    Ground,
    Unitary { hamiltonian: OperatorExpr, mu: f64 },
    Explicit { rho: OperatorExpr },
    Mixture { components: Vec<(f64, PrepJson)> },
    Ensemble { members: Vec<EnsembleMemberJson> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMemberJson {
    pub weight: f64,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageJson {
    AncillaUnitary { hamiltonian: OperatorExpr, ancillas: Vec<usize> },
    Collision {
        hamiltonian: OperatorExpr,
        sites: Vec<usize>,
        ancillas: Vec<usize>,
        fraction: f64,
    },
    SystemUnitary { hamiltonian: OperatorExpr, sites: Vec<usize> },
    JointCollision {
        h_system: OperatorExpr,
        h_interaction: OperatorExpr,
        sites: Vec<usize>,
        ancillas: Vec<usize>,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvScalingJson {
    Fast { mu: f64 },
    Slow { kappa: f64, exponent: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingJson {
    pub gamma: f64,
    pub g_system: f64,
    pub env: EnvScalingJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScheduleJson {
    pub system_dims: Vec<usize>,
    pub ancilla_dims: Vec<usize>,
    pub prep: PrepJson,
    pub stages: Vec<StageJson>,
    pub scaling: ScalingJson,
}

pub fn schedule_to_json<T: Scalar>(schedule: &CollisionSchedule<T>) -> ScheduleJson {
    ScheduleJson {
        system_dims: schedule.system_dims().factors().to_vec(),
        ancilla_dims: schedule.ancilla_dims().factors().to_vec(),
        prep: prep_to_json(schedule.prep()),
        stages: schedule.program().stages.iter().map(stage_to_json).collect(),
        scaling: ScalingJson {
            gamma: schedule.scaling().gamma.to_f64_lossy(),
            g_system: schedule.scaling().g_system.to_f64_lossy(),
            env: match schedule.scaling().env {
                EnvScaling::Fast { mu } => EnvScalingJson::Fast { mu: mu.to_f64_lossy() },
                EnvScaling::Slow { kappa, exponent } => EnvScalingJson::Slow {
                    kappa: kappa.to_f64_lossy(),
                    exponent: exponent.to_f64_lossy(),
                },
            },
        },
    }
}

pub fn schedule_from_json<T: Scalar>(json: &ScheduleJson) -> Result<CollisionSchedule<T>> {
    let system = HilbertDims::new(json.system_dims.clone())?;
    let ancillas = HilbertDims::new(json.ancilla_dims.clone())?;
    let prep = prep_from_json(&json.prep)?;
    let stages = json
        .stages
        .iter()
        .map(stage_from_json)
        .collect::<Result<Vec<_>>>()?;
    let env = match json.scaling.env {
        EnvScalingJson::Fast { mu } => EnvScaling::Fast { mu: T::from_f64(mu) },
        EnvScalingJson::Slow { kappa, exponent } => EnvScaling::Slow {
            kappa: T::from_f64(kappa),
            exponent: T::from_f64(exponent),
        },
    };
    let scaling = ScalingRule::new(
        T::from_f64(json.scaling.gamma),
        T::from_f64(json.scaling.g_system),
        env,
    )?;
    CollisionSchedule::new(system, ancillas, prep, TimestepProgram { stages }, scaling)
}

fn prep_to_json<T: Scalar>(prep: &AncillaPrep<T>) -> PrepJson {
    match prep {
        AncillaPrep::Ground => PrepJson::Ground,
        AncillaPrep::Unitary { hamiltonian, mu } => PrepJson::Unitary {
            hamiltonian: OperatorExpr::Matrix(operator_to_json(hamiltonian)),
            mu: mu.to_f64_lossy(),
        },
        AncillaPrep::Explicit { rho } => PrepJson::Explicit {
            rho: OperatorExpr::Matrix(operator_to_json(rho)),
        },
        AncillaPrep::Mixture { components } => PrepJson::Mixture {
            components: components
                .iter()
                .map(|(w, p)| (w.to_f64_lossy(), prep_to_json(p)))
                .collect(),
        },
        AncillaPrep::Ensemble { members } => PrepJson::Ensemble {
            members: members
                .iter()
                .map(|(w, v)| EnsembleMemberJson {
                    weight: w.to_f64_lossy(),
                    re: v.iter().map(|z| z.re.to_f64_lossy()).collect(),
                    im: v.iter().map(|z| z.im.to_f64_lossy()).collect(),
                })
                .collect(),
        },
    }
}

fn prep_from_json<T: Scalar>(json: &PrepJson) -> Result<AncillaPrep<T>> {
    Ok(match json {
        PrepJson::Ground => AncillaPrep::Ground,
        PrepJson::Unitary { hamiltonian, mu } => AncillaPrep::Unitary {
            hamiltonian: hamiltonian.resolve()?,
            mu: T::from_f64(*mu),
        },
        PrepJson::Explicit { rho } => AncillaPrep::Explicit { rho: rho.resolve()? },
        PrepJson::Mixture { components } => AncillaPrep::Mixture {
            components: components
                .iter()
                .map(|(w, p)| Ok((T::from_f64(*w), prep_from_json(p)?)))
                .collect::<Result<Vec<_>>>()?,
        },
        PrepJson::Ensemble { members } => AncillaPrep::Ensemble {
            members: members
                .iter()
                .map(|m| {
                    if m.re.len() != m.im.len() {
                        return Err(Error::invalid("ensemble member re/im lengths differ"));
                    }
                    Ok((
                        T::from_f64(m.weight),
                        m.re
                            .iter()
                            .zip(m.im.iter())
                            .map(|(&re, &im)| C::new(T::from_f64(re), T::from_f64(im)))
                            .collect(),
                    ))
                })
                .collect::<Result<Vec<_>>>()?,
        },
    })
}

fn stage_to_json<T: Scalar>(stage: &Stage<T>) -> StageJson {
    let expr = |op: &Operator<T>| OperatorExpr::Matrix(operator_to_json(op));
    match stage {
        Stage::AncillaUnitary { hamiltonian, ancillas } => StageJson::AncillaUnitary {
            hamiltonian: expr(hamiltonian),
            ancillas: ancillas.clone(),
        },
        Stage::Collision { hamiltonian, sites, ancillas, fraction } => StageJson::Collision {
            hamiltonian: expr(hamiltonian),
            sites: sites.clone(),
            ancillas: ancillas.clone(),
            fraction: fraction.to_f64_lossy(),
        },
        Stage::SystemUnitary { hamiltonian, sites } => StageJson::SystemUnitary {
            hamiltonian: expr(hamiltonian),
            sites: sites.clone(),
        },
        Stage::JointCollision { h_system, h_interaction, sites, ancillas } => {
            StageJson::JointCollision {
                h_system: expr(h_system),
                h_interaction: expr(h_interaction),
                sites: sites.clone(),
                ancillas: ancillas.clone(),
            }
        }
    }
}

fn stage_from_json<T: Scalar>(json: &StageJson) -> Result<Stage<T>> {
    Ok(match json {
        StageJson::AncillaUnitary { hamiltonian, ancillas } => Stage::AncillaUnitary {
            hamiltonian: hamiltonian.resolve()?,
            ancillas: ancillas.clone(),
        },
        StageJson::Collision { hamiltonian, sites, ancillas, fraction } => Stage::Collision {
            hamiltonian: hamiltonian.resolve()?,
            sites: sites.clone(),
            ancillas: ancillas.clone(),
            fraction: T::from_f64(*fraction),
        },
        StageJson::SystemUnitary { hamiltonian, sites } => Stage::SystemUnitary {
            hamiltonian: hamiltonian.resolve()?,
            sites: sites.clone(),
        },
        StageJson::JointCollision { h_system, h_interaction, sites, ancillas } => {
            Stage::JointCollision {
                h_system: h_system.resolve()?,
                h_interaction: h_interaction.resolve()?,
                sites: sites.clone(),
                ancillas: ancillas.clone(),
            }
        }
    })
}

/// `{dims, H_eff, basis: [{site, label, op}], kossakowski}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GklsSpecJson {
    pub dims: Vec<usize>,
    #[serde(rename = "H_eff")]
    pub h_eff: OperatorJson,
    pub basis: Vec<GksEntryJson>,
    pub kossakowski: MatrixJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GksEntryJson {
    pub site: usize,
    pub label: String,
    pub op: OperatorJson,
}

pub fn gkls_to_json<T: Scalar>(spec: &GklsSpec<T>) -> GklsSpecJson {
    GklsSpecJson {
        dims: spec.basis().dims().factors().to_vec(),
        h_eff: operator_to_json(spec.h_eff()),
        basis: spec
            .basis()
            .entries()
            .iter()
            .map(|e| GksEntryJson {
                site: e.site,
                label: e.label.clone(),
                op: operator_to_json(&e.op),
            })
            .collect(),
        kossakowski: matrix_to_json(spec.kossakowski()),
    }
}

pub fn gkls_from_json<T: Scalar>(json: &GklsSpecJson) -> Result<GklsSpec<T>> {
    let dims = HilbertDims::new(json.dims.clone())?;
    let entries = json
        .basis
        .iter()
        .map(|e| {
            Ok(GksEntry {
                site: e.site,
                label: e.label.clone(),
                op: operator_from_json(&e.op)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let basis = GksBasis::new(dims.clone(), entries)?;
    GklsSpec::new(
        basis,
        operator_from_json(&json.h_eff)?,
        matrix_from_json(&json.kossakowski)?,
    )
}

/// JSON summary of an extraction report (the per-dt series also goes out as
/// CSV via [`ExtractionReport::per_dt_csv`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportJson {
    pub fitted_order: f64,
    pub fit_r_squared: f64,
    pub flags: Vec<String>,
    pub zero_mean_defect: f64,
    pub decomposition_residual: f64,
    pub per_dt: Vec<ReportRowJson>,
    pub generator: MatrixJson,
    pub decomposed: GklsSpecJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReportRowJson {
    pub dt: f64,
    pub frobenius_deviation: f64,
    pub trace_defect: f64,
    pub min_choi_eig: f64,
}

pub fn report_to_json<T: Scalar>(report: &ExtractionReport<T>) -> ReportJson {
    ReportJson {
        fitted_order: report.fitted_order.to_f64_lossy(),
        fit_r_squared: report.fit_r_squared.to_f64_lossy(),
        flags: report.flags.clone(),
        zero_mean_defect: report.zero_mean_defect.to_f64_lossy(),
        decomposition_residual: report.decomposition.residual.to_f64_lossy(),
        per_dt: report
            .per_dt
            .iter()
            .map(|d| ReportRowJson {
                dt: d.dt.to_f64_lossy(),
                frobenius_deviation: d.deviation.to_f64_lossy(),
                trace_defect: d.trace_defect.to_f64_lossy(),
                min_choi_eig: d.min_choi_eig.to_f64_lossy(),
            })
            .collect(),
        generator: matrix_to_json(report.generator.matrix()),
        decomposed: gkls_to_json(&report.decomposition.spec),
    }
}

/// Gate-list export of one instantiated timestep: targets are factor names
/// (`s0, s1, ...` system, `a0, a1, ...` ancillas).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateListJson {
    pub dt: f64,
    pub stages: Vec<GateJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateJson {
    pub targets: Vec<String>,
    pub generator: OperatorExpr,
    pub duration_fraction: f64,
    pub unitary: OperatorJson,
}

pub fn export_schedule<T: Scalar>(
    schedule: &CollisionSchedule<T>,
    dt: T,
) -> Result<GateListJson> {
    let instantiated = schedule.instantiate(dt)?;
    let n_sys = schedule.system_dims().len();
    let mut stages = Vec::new();
    for (stage, inst) in schedule.program().stages.iter().zip(instantiated.iter()) {
        let targets = inst
            .support
            .iter()
            .map(|&f| {
                if f < n_sys {
                    format!("s{f}")
                } else {
                    format!("a{}", f - n_sys)
                }
            })
            .collect();
        let (generator, duration_fraction) = match stage {
            Stage::AncillaUnitary { hamiltonian, .. } => (hamiltonian, 1.0),
            Stage::Collision { hamiltonian, fraction, .. } => {
                (hamiltonian, fraction.to_f64_lossy())
            }
            Stage::SystemUnitary { hamiltonian, .. } => (hamiltonian, 1.0),
            Stage::JointCollision { h_interaction, .. } => (h_interaction, 1.0),
        };
        stages.push(GateJson {
            targets,
            generator: OperatorExpr::Matrix(operator_to_json(generator)),
            duration_fraction,
            unitary: operator_to_json(&inst.unitary),
        });
    }
    Ok(GateListJson { dt: dt.to_f64_lossy(), stages })
}
