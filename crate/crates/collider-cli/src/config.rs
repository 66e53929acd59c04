//! Experiment configuration: JSON schema, validation, and construction of
//! the model (schedule + predicted equation) it describes.

use serde::{Deserialize, Serialize};

use collider_core::collision::{AncillaPrep, CollisionSchedule, EnvScaling};
use collider_core::gkls::{GklsSpec, GksBasis};
use collider_core::json::{
    gkls_from_json, schedule_from_json, GklsSpecJson, OperatorExpr, PrepJson, ScheduleJson,
};
use collider_core::models::{
    amplitude_damping, build_cascade, build_composite, build_entangled, build_mcm_brick,
    compile_gkls_to_mcm, squeezed_example, CascadeSpec, CompositeSpec, EntangledModelSpec,
    McmAncillaSpec, ModelBuild,
};
use collider_core::operator::{HilbertDims, Operator};
use collider_core::ops::{sigma_minus, sigma_plus};
use collider_core::scalar::C;
use collider_core::cmat::CMat;
use collider_core::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Extract,
    Trajectory,
    AppendixA,
    AppendixB,
    SqueezedExample,
    SplittingEquivalence,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelConfig {
    /// Single qubit exchanging an excitation with fresh ground ancillas.
    AmplitudeDamping,
    /// One MCM pair brick over the sigma-pm basis.
    McmBrick {
        n_sites: usize,
        first: (usize, String),
        second: (usize, String),
        lambda_first: [f64; 2],
        lambda_second: [f64; 2],
    },
    /// Compile an explicit GKLS target into an MCM schedule.
    McmCompile { target: GklsSpecJson },
    /// Seeded random PSD Kossakowski target over the two-qubit sigma-pm
    /// basis, compiled to an MCM schedule (requires a seed).
    McmRandomTarget,
    /// Cascade of lowering-operator collisions with per-site weights.
    Cascade {
        lambdas: Vec<[f64; 2]>,
        #[serde(default)]
        reversed: bool,
    },
    /// Two qubits, exchange free Hamiltonian, damping collisions on one site.
    Composite {
        dissipating_site: usize,
        g_system: f64,
        #[serde(default)]
        ancilla_excitation: f64,
    },
    /// Qubit ancillas with exchange couplings and an arbitrary preparation.
    EntangledQubits { n_sites: usize, prep: PrepJson },
    /// Two-mode squeezed thermal ancillas against two qubits.
    Squeezed {
        r: f64,
        psi: f64,
        n1: f64,
        n2: f64,
        #[serde(default)]
        cutoff: Option<usize>,
    },
    /// Fully explicit schedule.
    Schedule { schedule: ScheduleJson },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    #[serde(default)]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub mu: Option<f64>,
    #[serde(default)]
    pub g_system: Option<f64>,
    #[serde(default)]
    pub dt_sequence: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Trajectory / export timestep.
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub initial_state: Option<OperatorExpr>,
    /// Slow-environment magnitude and exponent (appendix-b).
    #[serde(default)]
    pub kappa: Option<f64>,
    #[serde(default)]
    pub slow_exponent: Option<f64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    /// Named tolerance overrides applied before the global `--tol-scale`.
    #[serde(default)]
    pub tolerances: std::collections::BTreeMap<String, f64>,
}

impl ExperimentConfig {
    pub fn gamma(&self) -> f64 {
        self.gamma.unwrap_or(1.0)
    }

    /// Collect every violated field; empty means the config is runnable.
    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if let Some(g) = self.gamma {
            if !(g >= 0.0) || !g.is_finite() {
                errors.push("gamma: must be finite and non-negative".into());
            }
        }
        if let Some(seq) = &self.dt_sequence {
            if seq.len() < 3 {
                errors.push("dt_sequence: needs at least 3 values".into());
            }
            if seq.windows(2).any(|w| w[1] >= w[0]) {
                errors.push("dt_sequence: must be strictly decreasing".into());
            }
            if seq.iter().any(|&dt| !(dt > 0.0) || !dt.is_finite()) {
                errors.push("dt_sequence: entries must be positive and finite".into());
            }
        }
        if let Some(dt) = self.dt {
            if !(dt > 0.0) || !dt.is_finite() {
                errors.push("dt: must be positive and finite".into());
            }
        }
        if let Some(s) = self.slow_exponent {
            if !(0.0..1.0).contains(&s) {
                errors.push("slow_exponent: must lie in [0, 1)".into());
            }
        }
        match &self.model {
            ModelConfig::McmRandomTarget if self.seed.is_none() => {
                errors.push("seed: random-spec experiments require an explicit seed".into());
            }
            ModelConfig::Squeezed { r, n1, n2, .. } => {
                if *r < 0.0 {
                    errors.push("model.r: squeeze magnitude must be non-negative".into());
                }
                if *n1 < 0.0 || *n2 < 0.0 {
                    errors.push("model.n1/n2: mean photon numbers must be non-negative".into());
                }
            }
            ModelConfig::Cascade { lambdas, .. } if lambdas.is_empty() => {
                errors.push("model.lambdas: cascade needs at least one site".into());
            }
            _ => {}
        }
        if self.experiment == ExperimentKind::Trajectory {
            if self.dt.is_none() {
                errors.push("dt: trajectory experiments need a timestep".into());
            }
            if self.n_steps.is_none() {
                errors.push("n_steps: trajectory experiments need a step count".into());
            }
        }
        // Build the model to surface unresolvable operators and dimension
        // problems as validation errors.
        if errors.is_empty() {
            if let Err(e) = self.build_model() {
                errors.push(format!("model: {e}"));
            }
        }
        errors
    }

    /// Construct the schedule and predicted equation for the configured model.
    pub fn build_model(&self) -> Result<ModelBuild<f64>> {
        let gamma = self.gamma();
        match &self.model {
            ModelConfig::AmplitudeDamping => amplitude_damping(gamma),
            ModelConfig::McmBrick { n_sites, first, second, lambda_first, lambda_second } => {
                let basis = GksBasis::qubit_sigma_pm(*n_sites)?;
                build_mcm_brick(
                    &basis,
                    &McmAncillaSpec {
                        first: first.clone(),
                        second: second.clone(),
                        lambda_first: C::new(lambda_first[0], lambda_first[1]),
                        lambda_second: C::new(lambda_second[0], lambda_second[1]),
                    },
                    gamma,
                )
            }
            ModelConfig::McmCompile { target } => {
                let spec: GklsSpec<f64> = gkls_from_json(target)?;
                compile_gkls_to_mcm(&spec)
            }
            ModelConfig::McmRandomTarget => {
                let seed = self
                    .seed
                    .ok_or_else(|| Error::invalid("random target requires a seed"))?;
                let target = random_two_qubit_target(seed)?;
                compile_gkls_to_mcm(&target)
            }
            ModelConfig::Cascade { lambdas, reversed } => {
                let weights: Vec<C<f64>> =
                    lambdas.iter().map(|l| C::new(l[0], l[1])).collect();
                build_cascade(&CascadeSpec::qubit_lowering(&weights, *reversed)?, gamma)
            }
            ModelConfig::Composite { dissipating_site, g_system, ancilla_excitation } => {
                let prep = if *ancilla_excitation > 0.0 {
                    let mut rho = Operator::zeros(HilbertDims::single(2)?);
                    rho.matrix_mut()[(0, 0)] = C::new(1.0 - ancilla_excitation, 0.0);
                    rho.matrix_mut()[(1, 1)] = C::new(*ancilla_excitation, 0.0);
                    AncillaPrep::Explicit { rho }
                } else {
                    AncillaPrep::Ground
                };
                let exchange = {
                    let a = collider_core::operator::kron(&sigma_plus::<f64>(), &sigma_minus::<f64>())?;
                    a.add(&a.dagger())?
                };
                build_composite(
                    &CompositeSpec {
                        system: HilbertDims::new(vec![2, 2])?,
                        dissipating_site: *dissipating_site,
                        terms: vec![
                            ("-".into(), sigma_minus(), sigma_plus(), C::new(1.0, 0.0)),
                            ("+".into(), sigma_plus(), sigma_minus(), C::new(1.0, 0.0)),
                        ],
                        ancilla_dim: 2,
                        prep,
                        h_system: exchange,
                        g_system: *g_system,
                    },
                    gamma,
                )
            }
            ModelConfig::EntangledQubits { n_sites, prep } => {
                let prep = prep_from(prep)?;
                let spec = EntangledModelSpec::qubit_exchange(*n_sites, prep)?;
                let env = env_scaling(self);
                build_entangled(&spec, gamma, env)
            }
            ModelConfig::Squeezed { r, psi, n1, n2, cutoff } => {
                let chosen_cutoff = match cutoff {
                    Some(c) => *c,
                    None => collider_core::fock::FockMode::for_state(n1.max(*n2), *r)?.cutoff(),
                };
                squeezed_example(*r, *psi, *n1, *n2, gamma, chosen_cutoff)
            }
            ModelConfig::Schedule { schedule } => {
                let schedule: CollisionSchedule<f64> = schedule_from_json(schedule)?;
                // A bare schedule has no closed-form prediction; pair it with
                // an empty-dissipator spec over the complete local basis so
                // extraction experiments still decompose against something.
                let basis = GksBasis::local_complete(schedule.system_dims())?;
                let k = basis.len();
                let predicted = GklsSpec::new(
                    basis,
                    Operator::zeros(schedule.system_dims().clone()),
                    CMat::zeros(k, k),
                )?;
                let zero_mean_defect = schedule.zero_mean_defect()?;
                Ok(ModelBuild { schedule, predicted, zero_mean_defect })
            }
        }
    }

    pub fn dt_sequence_or_default(&self) -> Vec<f64> {
        self.dt_sequence
            .clone()
            .unwrap_or_else(|| collider_core::collision::default_dt_sequence(self.gamma()))
    }
}

fn env_scaling(config: &ExperimentConfig) -> EnvScaling<f64> {
    if config.experiment == ExperimentKind::AppendixB {
        EnvScaling::Slow {
            kappa: config.kappa.unwrap_or(1.0),
            exponent: config.slow_exponent.unwrap_or(0.5),
        }
    } else {
        EnvScaling::Fast { mu: config.mu.unwrap_or(0.0) }
    }
}

fn prep_from(json: &PrepJson) -> Result<AncillaPrep<f64>> {
    // PrepJson resolution lives in core; round-trip through the schedule
    // format to reuse it.
    let shim = ScheduleJson {
        system_dims: vec![2],
        ancilla_dims: vec![2, 2],
        prep: json.clone(),
        stages: vec![],
        scaling: collider_core::json::ScalingJson {
            gamma: 0.0,
            g_system: 0.0,
            env: collider_core::json::EnvScalingJson::Fast { mu: 0.0 },
        },
    };
    let schedule: CollisionSchedule<f64> = schedule_from_json(&shim)?;
    Ok(schedule.prep().clone())
}

/// Seeded random PSD Kossakowski target over the two-qubit sigma-pm basis.
pub fn random_two_qubit_target(seed: u64) -> Result<GklsSpec<f64>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let basis = GksBasis::<f64>::qubit_sigma_pm(2)?;
    let raw = CMat::from_fn(4, 4, |_, _| {
        C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    let psd = raw.matmul(&raw.dagger());
    let tr = psd.trace().re;
    let gamma = psd.scale_real(1.0 / tr);
    GklsSpec::new(basis.clone(), Operator::zeros(basis.dims().clone()), gamma)
}
