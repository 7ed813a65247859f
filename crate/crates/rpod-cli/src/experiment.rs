//! Builds the model, runs each configured reduction and evaluates it.

use faer::Mat;
use rpod_core::discretize::{build_advection_diffusion_3d, build_heat_1d};
use rpod_core::eval::{
    self, complexity_report, full_frequency_response, log_grid, output_error_trajectory, output_relative_error_against,
    rom_frequency_response, ComplexityInputs, ComplexityReport,
};
use rpod_core::rom::{
    bpod, bpod_modal, bpod_output_projection, rpod_star, BpodConfig, Method, OutputProjectionConfig, PhaseTimings,
    ReducedOrderModel, RpodConfig,
};
use rpod_core::snapshots::{estimate_settling_time, SettlingOptions};
use rpod_core::synthetic::generate;
use rpod_core::{io, StateSpaceSystem};

use crate::config::{ExperimentConfig, MethodConfig, ModelConfig};
use crate::CliError;

pub struct Model {
    pub kind: &'static str,
    pub system: StateSpaceSystem,
    pub dt: f64,
    pub description: String,
}

pub fn build_model(cfg: &ModelConfig) -> Result<Model, CliError> {
    Ok(match cfg {
        ModelConfig::Heat(h) => Model {
            kind: cfg.name(),
            system: build_heat_1d(h)?,
            dt: h.dt,
            description: format!("1-D heat slab, {} nodes, {:?} scheme", h.nodes, h.scheme),
        },
        ModelConfig::Dispersion(d) => Model {
            kind: cfg.name(),
            system: build_advection_diffusion_3d(d)?,
            dt: d.dt,
            description: format!("3-D advection-diffusion, {}x{}x{} cells", d.nx, d.ny, d.nz),
        },
        ModelConfig::MatrixMarket { path } => {
            let (system, manifest) = io::read_system(path)?;
            Model {
                kind: cfg.name(),
                system,
                dt: manifest.dt,
                description: manifest.description,
            }
        }
        ModelConfig::Synthetic(s) => {
            let syn = generate(s)?;
            Model {
                kind: cfg.name(),
                system: syn.system,
                dt: 1.0,
                description: format!(
                    "{:?} synthetic, N = {}, l = {}, eps = {:e}, seed {}",
                    s.kind, s.states, s.order, s.eps, s.seed
                ),
            }
        }
    })
}

/// Model-dependent checks that precede any snapshot generation.
pub fn validate_against_model(cfg: &ExperimentConfig, sys: &StateSpaceSystem) -> Result<(), CliError> {
    for m in &cfg.methods {
        if let Some(s) = m.rank {
            if s > sys.q() {
                return Err(CliError::Config(format!(
                    "method '{}': rank {s} exceeds the {} outputs",
                    m.label(),
                    sys.q()
                )));
            }
        }
    }
    Ok(())
}

pub fn settling_steps(cfg: &ExperimentConfig, sys: &StateSpaceSystem) -> Result<usize, CliError> {
    match cfg.evaluation.settling_steps {
        Some(t) => Ok(t),
        None => Ok(estimate_settling_time(
            sys,
            &SettlingOptions {
                seed: cfg.seed,
                ..SettlingOptions::default()
            },
        )?
        .steps),
    }
}

pub struct MethodRun {
    pub label: String,
    pub config: MethodConfig,
    pub rom: ReducedOrderModel,
    pub timings: Option<PhaseTimings>,
}

pub fn run_method(sys: &StateSpaceSystem, m: &MethodConfig, settling: usize) -> Result<MethodRun, CliError> {
    let order = m.order.truncation();
    let red = match m.kind {
        Method::Identity => {
            return Ok(MethodRun {
                label: m.label(),
                config: m.clone(),
                rom: ReducedOrderModel::identity(sys),
                timings: None,
            })
        }
        Method::Bpod | Method::BpodModal => {
            let primal = m.primal_steps.unwrap_or(1);
            let c = BpodConfig {
                primal_times: (0..primal).collect(),
                adjoint_times: (0..m.adjoint_steps.unwrap_or(primal)).collect(),
                order,
                rank_tol: m.rank_tol(),
            };
            if m.kind == Method::Bpod {
                bpod(sys, &c)?
            } else {
                bpod_modal(sys, &c)?
            }
        }
        Method::OutputProjection => {
            let primal = m.primal_steps.unwrap_or(1);
            bpod_output_projection(
                sys,
                &OutputProjectionConfig {
                    primal_times: (0..primal).collect(),
                    adjoint_times: (0..m.adjoint_steps.unwrap_or(primal)).collect(),
                    rank: m.rank.unwrap_or(1),
                    order,
                    rank_tol: m.rank_tol(),
                },
            )?
        }
        Method::RpodStar => {
            let (count_x, count_z) = (m.m.unwrap_or(1), m.n.unwrap_or(1));
            let spacing = m.spacing.unwrap_or_else(|| settling.div_ceil(count_x).max(1));
            let mut c = RpodConfig::new(count_x, count_z, spacing, order, m.seed.unwrap_or(0));
            c.adjoint_spacing = m
                .adjoint_spacing
                .unwrap_or_else(|| m.spacing.unwrap_or_else(|| settling.div_ceil(count_z).max(1)));
            c.rank_tol = m.rank_tol();
            c.settling_steps = Some(settling);
            rpod_star(sys, &c)?
        }
    };
    Ok(MethodRun {
        label: m.label(),
        config: m.clone(),
        rom: red.rom,
        timings: Some(red.timings),
    })
}

/// Curves shared by all methods, with the full-order truth alongside.
pub struct Evaluation {
    pub horizon: usize,
    pub truth_markov_norm: Vec<f64>,
    pub markov_norm: Vec<Vec<f64>>,
    pub markov_error: Vec<Vec<f64>>,
    pub excitation_steps: usize,
    pub truth_output_norm: Vec<f64>,
    pub output_norm: Vec<Vec<f64>>,
    pub output_error: Vec<Vec<f64>>,
    pub e_output: Vec<f64>,
    pub grid: Vec<f64>,
    pub truth_response: Vec<f64>,
    pub response: Vec<Vec<f64>>,
    pub e_fre: Vec<Vec<f64>>,
}

fn spectral_norm(m: &Mat<f64>) -> Result<f64, CliError> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Ok(0.0);
    }
    let sv = m
        .singular_values()
        .map_err(|_| CliError::Core(rpod_core::Error::Numerical("SVD did not converge".into())))?;
    Ok(sv.first().copied().unwrap_or(0.0))
}

fn column_norms(y: &Mat<f64>) -> Vec<f64> {
    (0..y.ncols()).map(|k| y.col(k).norm_l2()).collect()
}

pub fn evaluate(
    cfg: &ExperimentConfig,
    sys: &StateSpaceSystem,
    runs: &[MethodRun],
    settling: usize,
) -> Result<Evaluation, CliError> {
    let ev = &cfg.evaluation;
    let horizon = ev.horizon;
    let truth = sys.markov_parameters(horizon);
    let truth_markov_norm = truth.iter().map(spectral_norm).collect::<Result<Vec<_>, _>>()?;
    let mut markov_norm = Vec::new();
    let mut markov_error = Vec::new();
    for r in runs {
        let approx = r.rom.markov_parameters(horizon);
        markov_norm.push(approx.iter().map(spectral_norm).collect::<Result<Vec<_>, _>>()?);
        markov_error.push(eval::markov_error_against(&truth, &r.rom)?);
    }

    let steps = ev.excitation_steps.unwrap_or(2 * settling).max(1);
    let raw = eval::excitation(sys.p(), steps, ev.excitation_seed.unwrap_or(cfg.seed));
    let u = Mat::from_fn(raw.nrows(), raw.ncols(), |i, j| ev.excitation_scale * raw[(i, j)]);
    let y = sys.simulate_outputs(Mat::zeros(sys.n(), 1).as_ref(), u.as_ref())?;
    let truth_output_norm = column_norms(&y);
    let mut output_norm = Vec::new();
    let mut output_error = Vec::new();
    let mut e_output = Vec::new();
    for r in runs {
        output_norm.push(column_norms(&r.rom.simulate(u.as_ref())?));
        output_error.push(output_error_trajectory(y.as_ref(), &r.rom, u.as_ref())?);
        e_output.push(output_relative_error_against(y.as_ref(), &r.rom, u.as_ref())?);
    }

    let [lo, hi] = ev.frequency_range;
    let grid = log_grid(lo, hi, ev.frequency_points);
    let truth_response = full_frequency_response(sys, &grid)?;
    let mut response = Vec::new();
    let mut e_fre = Vec::new();
    for r in runs {
        let resp = rom_frequency_response(&r.rom, &grid)?;
        e_fre.push(truth_response.iter().zip(&resp).map(|(t, a)| (t - a).abs()).collect());
        response.push(resp);
    }

    Ok(Evaluation {
        horizon,
        truth_markov_norm,
        markov_norm,
        markov_error,
        excitation_steps: steps,
        truth_output_norm,
        output_norm,
        output_error,
        e_output,
        grid,
        truth_response,
        response,
        e_fre,
    })
}

/// Hankel sizes and cost estimates when both an RPOD* and an output-projection run are present.
pub fn complexity(sys: &StateSpaceSystem, runs: &[MethodRun], settling: usize) -> Option<ComplexityReport> {
    let rpod = runs.iter().find(|r| r.config.kind == Method::RpodStar)?;
    let op = runs.iter().find(|r| r.config.kind == Method::OutputProjection)?;
    let primal = op.config.primal_steps.unwrap_or(1);
    Some(complexity_report(&ComplexityInputs {
        states: sys.n(),
        inputs: sys.p(),
        rpod_primal: rpod.config.m.unwrap_or(1),
        rpod_adjoint: rpod.config.n.unwrap_or(1),
        projection_rank: op.config.rank.unwrap_or(1),
        op_primal_times: primal,
        op_adjoint_times: op.config.adjoint_steps.unwrap_or(primal),
        settling_steps: settling,
    }))
}

pub struct SweepRow {
    pub label: String,
    pub eps: f64,
    pub order: usize,
    pub markov_error: f64,
    pub sigma_next: f64,
}

/// Every method on a fresh perturbed synthetic per `eps`, with errors against the exact Markov parameters.
pub fn sweep(cfg: &ExperimentConfig, eps: &[f64]) -> Result<Vec<SweepRow>, CliError> {
    let ModelConfig::Synthetic(base) = &cfg.model else {
        return Err(CliError::Config("[sweep] needs a synthetic model".into()));
    };
    let mut rows = Vec::new();
    for &e in eps {
        let syn = generate(&rpod_core::synthetic::SyntheticConfig { eps: e, ..base.clone() })?;
        let settling = settling_steps(cfg, &syn.system)?;
        let truth = syn.true_markov(cfg.evaluation.horizon);
        for m in &cfg.methods {
            let run = run_method(&syn.system, m, settling)?;
            let err = eval::markov_error_against(&truth, &run.rom)?;
            rows.push(SweepRow {
                label: run.label,
                eps: e,
                order: run.rom.order(),
                markov_error: err.into_iter().fold(0.0, f64::max),
                sigma_next: run.rom.provenance.sigma_next,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
