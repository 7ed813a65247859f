//! Experiment configuration files.
//!
//! ```toml
//! seed = 0
//!
//! [model]
//! type = "heat"            # heat | dispersion | matrix-market | synthetic
//!
//! [[methods]]
//! type = "rpod-star"       # bpod | bpod-modal | output-projection | rpod-star | identity
//! m = 80
//! n = 80
//! spacing = 40
//! order = 70               # an integer, "rank" or "select"
//!
//! [evaluation]
//! horizon = 200
//!
//! [output]
//! dir = "out/heat"
//! ```

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rpod_core::discretize::{DispersionConfig, HeatConfig};
use rpod_core::rom::{Method, Truncation, DEFAULT_RANK_TOL};
use rpod_core::synthetic::{SyntheticConfig, SyntheticKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelConfig,
    #[serde(default)]
    pub methods: Vec<MethodConfig>,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepConfig>,
    #[serde(default, skip_serializing_if = "OutputConfig::is_empty")]
    pub output: OutputConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelConfig {
    Heat(HeatConfig),
    Dispersion(DispersionConfig),
    MatrixMarket {
        /// The `system.toml` manifest; relative paths resolve against the config file.
        path: PathBuf,
    },
    Synthetic(SyntheticConfig),
}

impl ModelConfig {
    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Heat(_) => "heat",
            ModelConfig::Dispersion(_) => "dispersion",
            ModelConfig::MatrixMarket { .. } => "matrix-market",
            ModelConfig::Synthetic(_) => "synthetic",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Fixed(usize),
    Rule(OrderRule),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderRule {
    Rank,
    Select,
}

impl Default for OrderSpec {
    fn default() -> Self {
        OrderSpec::Rule(OrderRule::Rank)
    }
}

impl OrderSpec {
    pub fn truncation(self) -> Truncation {
        match self {
            OrderSpec::Fixed(l) => Truncation::Fixed(l),
            OrderSpec::Rule(OrderRule::Rank) => Truncation::NumericalRank,
            OrderSpec::Rule(OrderRule::Select) => Truncation::Select,
        }
    }
}

/// One reduction to run. Fields that do not apply to `kind` are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    #[serde(rename = "type")]
    pub kind: Method,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default)]
    pub order: OrderSpec,
    /// Primal snapshot count (RPOD*).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Adjoint snapshot count (RPOD*).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Steps between RPOD* snapshots; defaults to `ceil(t_ss / m)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjoint_spacing: Option<usize>,
    /// Impulse snapshots at steps `0..primal_steps` (BPOD variants).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primal_steps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjoint_steps: Option<usize>,
    /// Output-projection rank `s`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank_tol: Option<f64>,
}

impl MethodConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| self.kind.name().to_string())
    }

    pub fn rank_tol(&self) -> f64 {
        self.rank_tol.unwrap_or(DEFAULT_RANK_TOL)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Markov parameters compared for i = 1..=horizon.
    pub horizon: usize,
    /// Length of the shared Gaussian excitation; defaults to twice the settling time.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation_steps: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub excitation_seed: Option<u64>,
    pub excitation_scale: f64,
    pub frequency_points: usize,
    /// Rad/step.
    pub frequency_range: [f64; 2],
    /// Skips the settling-time estimate when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub settling_steps: Option<usize>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            horizon: 200,
            excitation_steps: None,
            excitation_seed: None,
            excitation_scale: 1.0,
            frequency_points: 60,
            frequency_range: [1e-3, std::f64::consts::PI],
            settling_steps: None,
        }
    }
}

/// Re-runs every method on perturbed synthetics, one per `eps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eps: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
}

impl OutputConfig {
    fn is_empty(&self) -> bool {
        self.dir.is_none()
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

pub fn load(path: &Path) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
    let mut cfg: ExperimentConfig =
        toml::from_str(&text).map_err(|e| bad(format!("{}: {}", path.display(), e.message())))?;
    if let ModelConfig::MatrixMarket { path: p } = &mut cfg.model {
        if p.is_relative() {
            *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
        }
        *p = p
            .canonicalize()
            .map_err(|e| bad(format!("model path {}: {e}", p.display())))?;
    }
    Ok(cfg)
}

impl ExperimentConfig {
    /// Fills in every seed so the saved copy reruns identically.
    pub fn resolve(&mut self, seed_override: Option<u64>) {
        if let Some(s) = seed_override {
            self.seed = s;
            for m in &mut self.methods {
                m.seed = None;
            }
            self.evaluation.excitation_seed = None;
        }
        for m in &mut self.methods {
            if m.kind == Method::RpodStar && m.seed.is_none() {
                m.seed = Some(self.seed);
            }
        }
        if self.evaluation.excitation_seed.is_none() {
            self.evaluation.excitation_seed = Some(self.seed);
        }
        self.output.dir = None;
    }

    /// Checks every precondition that does not need the built model.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.methods.is_empty() {
            return Err(bad("no [[methods]] listed"));
        }
        let mut labels = BTreeSet::new();
        for m in &self.methods {
            let label = m.label();
            if label.is_empty() || label.contains(['/', '\\', ',']) {
                return Err(bad(format!("method label '{label}' is not usable as a file name")));
            }
            if !labels.insert(label.clone()) {
                return Err(bad(format!("duplicate method label '{label}'; set distinct `label`s")));
            }
            validate_method(m).map_err(|e| bad(format!("method '{label}': {e}")))?;
        }
        let ev = &self.evaluation;
        if ev.horizon == 0 {
            return Err(bad("evaluation.horizon must be positive"));
        }
        if ev.excitation_steps == Some(0) || ev.settling_steps == Some(0) {
            return Err(bad("evaluation step counts must be positive"));
        }
        if !(ev.excitation_scale > 0.0 && ev.excitation_scale.is_finite()) {
            return Err(bad("evaluation.excitation_scale must be positive"));
        }
        let [lo, hi] = ev.frequency_range;
        if ev.frequency_points == 0 || !(lo > 0.0 && lo <= hi && hi <= std::f64::consts::PI) {
            return Err(bad(
                "evaluation.frequency_range must satisfy 0 < lo <= hi <= pi with at least one point",
            ));
        }
        if let Some(sweep) = &self.sweep {
            match &self.model {
                ModelConfig::Synthetic(s) if s.kind == SyntheticKind::Perturbed => {}
                _ => return Err(bad("[sweep] needs a synthetic model with kind = \"perturbed\"")),
            }
            if sweep.eps.is_empty() || sweep.eps.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
                return Err(bad("sweep.eps must list positive values"));
            }
        }
        Ok(())
    }
}

fn validate_method(m: &MethodConfig) -> Result<(), String> {
    let has = |v: bool, name: &str, allowed: bool| -> Result<(), String> {
        if v && !allowed {
            Err(format!("`{name}` does not apply to {}", m.kind.name()))
        } else {
            Ok(())
        }
    };
    let rpod = m.kind == Method::RpodStar;
    let impulse = matches!(m.kind, Method::Bpod | Method::BpodModal | Method::OutputProjection);
    has(m.m.is_some(), "m", rpod)?;
    has(m.n.is_some(), "n", rpod)?;
    has(m.spacing.is_some(), "spacing", rpod)?;
    has(m.adjoint_spacing.is_some(), "adjoint_spacing", rpod)?;
    has(m.seed.is_some(), "seed", rpod)?;
    has(m.primal_steps.is_some(), "primal_steps", impulse)?;
    has(m.adjoint_steps.is_some(), "adjoint_steps", impulse)?;
    has(m.rank.is_some(), "rank", m.kind == Method::OutputProjection)?;
    if m.kind == Method::Identity {
        return Ok(());
    }
    if rpod {
        for (v, name) in [(m.m, "m"), (m.n, "n")] {
            match v {
                Some(0) | None => return Err(format!("`{name}` must be a positive snapshot count")),
                _ => {}
            }
        }
        if m.spacing == Some(0) || m.adjoint_spacing == Some(0) {
            return Err("spacings must be positive".into());
        }
    } else if m.primal_steps.unwrap_or(0) == 0 {
        return Err("`primal_steps` must be positive".into());
    } else if m.adjoint_steps == Some(0) {
        return Err("`adjoint_steps` must be positive".into());
    }
    if m.kind == Method::OutputProjection && m.rank.unwrap_or(0) == 0 {
        return Err("`rank` must be positive".into());
    }
    if m.order == OrderSpec::Fixed(0) {
        return Err("`order` must be positive".into());
    }
    if m.order == OrderSpec::Rule(OrderRule::Select) && !rpod {
        return Err("order = \"select\" is only available for rpod-star".into());
    }
    if !(m.rank_tol() > 0.0 && m.rank_tol() < 1.0) {
        return Err("`rank_tol` must lie in (0, 1)".into());
    }
    Ok(())
}
