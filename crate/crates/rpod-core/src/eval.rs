//! Error measures between a full system and its reduced models, Hankel-size and
//! cost accounting, and phase timings.

use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la;
use crate::linsys::StateSpaceSystem;
use crate::rom::{PhaseTimings, ReducedOrderModel};
use crate::snapshots::{noise_inputs, NoiseSpec};

fn check_io(sys: &StateSpaceSystem, rom: &ReducedOrderModel) -> Result<()> {
    if sys.p() != rom.inputs() || sys.q() != rom.outputs() {
        return Err(Error::Dimension(format!(
            "system is {}-in/{}-out, reduced model {}-in/{}-out",
            sys.p(),
            sys.q(),
            rom.inputs(),
            rom.outputs()
        )));
    }
    Ok(())
}

/// `|C_r A_r^i B_r - C A^i B|_2` for i = 1..=horizon.
pub fn markov_error(sys: &StateSpaceSystem, rom: &ReducedOrderModel, horizon: usize) -> Result<Vec<f64>> {
    check_io(sys, rom)?;
    markov_error_against(&sys.markov_parameters(horizon), rom)
}

/// As [`markov_error`] with the full-order parameters already computed.
pub fn markov_error_against(truth: &[Mat<f64>], rom: &ReducedOrderModel) -> Result<Vec<f64>> {
    let approx = rom.markov_parameters(truth.len());
    truth
        .iter()
        .zip(&approx)
        .map(|(t, a)| {
            if t.nrows() != a.nrows() || t.ncols() != a.ncols() {
                return Err(Error::Dimension("Markov parameter shapes differ".into()));
            }
            la::spectral_norm((t - a).as_ref())
        })
        .collect()
}

/// The seeded Gaussian excitation shared by all methods in a comparison.
pub fn excitation(p: usize, steps: usize, seed: u64) -> Mat<f64> {
    noise_inputs(
        p,
        &NoiseSpec {
            count: steps,
            spacing: 1,
            seed,
            stream: 2,
            scale: 1.0,
        },
    )
}

/// `|Y_true - Y_rom|_F / |Y_true|_F` over the stacked q x K outputs from zero states.
pub fn output_relative_error(
    sys: &StateSpaceSystem,
    rom: &ReducedOrderModel,
    excitation: MatRef<'_, f64>,
) -> Result<f64> {
    check_io(sys, rom)?;
    let x0 = Mat::zeros(sys.n(), 1);
    let truth = sys.simulate_outputs(x0.as_ref(), excitation)?;
    output_relative_error_against(truth.as_ref(), rom, excitation)
}

pub fn output_relative_error_against(
    truth: MatRef<'_, f64>,
    rom: &ReducedOrderModel,
    excitation: MatRef<'_, f64>,
) -> Result<f64> {
    let approx = rom.simulate(excitation)?;
    let denom = la::frobenius(truth);
    if !(denom > 0.0) {
        return Err(Error::Numerical(
            "true output is identically zero; relative error undefined".into(),
        ));
    }
    Ok(la::frobenius((truth.to_owned() - approx).as_ref()) / denom)
}

/// Per-step relative error `|y_k - y_rom,k| / max_k |y_k|`.
pub fn output_error_trajectory(
    truth: MatRef<'_, f64>,
    rom: &ReducedOrderModel,
    excitation: MatRef<'_, f64>,
) -> Result<Vec<f64>> {
    let approx = rom.simulate(excitation)?;
    let peak = (0..truth.ncols()).map(|k| truth.col(k).norm_l2()).fold(0.0, f64::max);
    if !(peak > 0.0) {
        return Err(Error::Numerical("true output is identically zero".into()));
    }
    Ok((0..truth.ncols())
        .map(|k| (truth.col(k) - approx.col(k)).norm_l2() / peak)
        .collect())
}

/// `n` log-spaced frequencies in `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.ln(), hi.ln());
            (0..n)
                .map(|i| {
                    if i == n - 1 {
                        hi
                    } else {
                        (a + (b - a) * i as f64 / (n - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// 60 log-spaced points in `[1e-3, pi]` rad/step.
pub fn default_frequency_grid() -> Vec<f64> {
    log_grid(1e-3, std::f64::consts::PI, 60)
}

fn max_singular_value(h: &Mat<c64>) -> Result<f64> {
    la::spectral_norm_complex(h.as_ref())
}

/// Largest singular value of the full-order transfer function on the grid.
pub fn full_frequency_response(sys: &StateSpaceSystem, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&w| max_singular_value(&sys.transfer_function(w)?))
        .collect()
}

pub fn rom_frequency_response(rom: &ReducedOrderModel, grid: &[f64]) -> Result<Vec<f64>> {
    grid.iter()
        .map(|&w| max_singular_value(&rom.transfer_function(w)?))
        .collect()
}

/// `|sigma_max(H_true(w)) - sigma_max(H_rom(w))|` on the grid.
pub fn frequency_response_error(sys: &StateSpaceSystem, rom: &ReducedOrderModel, grid: &[f64]) -> Result<Vec<f64>> {
    check_io(sys, rom)?;
    let truth = full_frequency_response(sys, grid)?;
    let approx = rom_frequency_response(rom, grid)?;
    Ok(truth.iter().zip(&approx).map(|(t, a)| (t - a).abs()).collect())
}

/// Snapshot counts behind an RPOD* and an output-projection run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityInputs {
    pub states: usize,
    pub inputs: usize,
    pub rpod_primal: usize,
    pub rpod_adjoint: usize,
    pub projection_rank: usize,
    pub op_primal_times: usize,
    pub op_adjoint_times: usize,
    pub settling_steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub rpod_hankel: (usize, usize),
    pub op_hankel: (usize, usize),
    /// `m n N`.
    pub rpod_build_flops: f64,
    /// `m^2 n` with `m <= n`.
    pub rpod_svd_flops: f64,
    /// `p s t_ss^2 N`.
    pub op_build_flops: f64,
    /// `p^2 s t_ss^3`.
    pub op_svd_flops: f64,
}

pub fn complexity_report(c: &ComplexityInputs) -> ComplexityReport {
    let (m, n) = (c.rpod_primal as f64, c.rpod_adjoint as f64);
    let (p, s, t, big_n) = (
        c.inputs as f64,
        c.projection_rank as f64,
        c.settling_steps as f64,
        c.states as f64,
    );
    ComplexityReport {
        rpod_hankel: (c.rpod_adjoint, c.rpod_primal),
        op_hankel: (c.projection_rank * c.op_adjoint_times, c.inputs * c.op_primal_times),
        rpod_build_flops: m * n * big_n,
        rpod_svd_flops: m.min(n).powi(2) * m.max(n),
        op_build_flops: p * s * t * t * big_n,
        op_svd_flops: p * p * s * t.powi(3),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub phases: Vec<(String, f64)>,
    pub phase_sum: f64,
    pub total: f64,
}

pub fn timing_report(t: &PhaseTimings) -> TimingReport {
    let phases = vec![
        ("generate X".to_string(), t.generate_x),
        ("generate Z".to_string(), t.generate_z),
        ("output projection".to_string(), t.projection),
        ("construct Z'X".to_string(), t.construct_hankel),
        ("solve SVD".to_string(), t.svd),
        ("assemble ROM".to_string(), t.assemble),
    ];
    let phase_sum = phases.iter().map(|(_, v)| v).sum();
    TimingReport {
        phases,
        phase_sum,
        total: t.total,
    }
}

/// Everything measured for one reduced model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub method: String,
    pub order: usize,
    pub markov_error: Vec<f64>,
    pub e_output: f64,
    pub freq_grid: Vec<f64>,
    pub e_fre: Vec<f64>,
    pub hankel_dims: (usize, usize),
    pub timings: TimingReport,
}
