//! Test systems with a designed split into controllable/observable mode groups.
//!
//! `A = W D W^{-1}` with `D` real block diagonal (1x1 blocks for real
//! eigenvalues, 2x2 rotation blocks for conjugate pairs), `B = W G` and
//! `C = H W^{-1}`. Blocks are ordered controllable-observable, then
//! controllable-unobservable, uncontrollable-observable and neither. Rows of
//! `G` on uncontrollable blocks and columns of `H` on unobservable blocks are
//! exactly zero in the exact variant and random with Frobenius norm `eps` in
//! the perturbed one.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{self, StateSpaceSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SyntheticKind {
    Exact,
    Perturbed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub kind: SyntheticKind,
    pub states: usize,
    /// Size of the controllable-and-observable group.
    pub order: usize,
    pub inputs: usize,
    pub outputs: usize,
    pub eps: f64,
    pub seed: u64,
    pub magnitude_range: [f64; 2],
    pub allow_pairs: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            kind: SyntheticKind::Exact,
            states: 40,
            order: 4,
            inputs: 2,
            outputs: 2,
            eps: 0.0,
            seed: 0,
            magnitude_range: [0.3, 0.95],
            allow_pairs: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticSystem {
    pub config: SyntheticConfig,
    pub system: StateSpaceSystem,
    /// Eigenvalues of the controllable-observable group.
    pub co_eigenvalues: Vec<c64>,
    /// Group sizes in block order (co, c-unobservable, uncontrollable-o, neither).
    pub group_sizes: [usize; 4],
    d: Mat<f64>,
    g: Mat<f64>,
    h: Mat<f64>,
}

impl SyntheticSystem {
    /// Exact `C A^i B = H D^i G` for i = 1..=horizon.
    pub fn true_markov(&self, horizon: usize) -> Vec<Mat<f64>> {
        let mut w = self.g.clone();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            w = &self.d * &w;
            out.push(&self.h * &w);
        }
        out
    }
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticSystem> {
    let n = cfg.states;
    let l = cfg.order;
    if l == 0 || l >= n {
        return Err(Error::Config(format!(
            "need 0 < order < states, got order {l}, states {n}"
        )));
    }
    if cfg.inputs == 0 || cfg.outputs == 0 {
        return Err(Error::Config("synthetic systems need inputs and outputs".into()));
    }
    let [lo, hi] = cfg.magnitude_range;
    if !(lo > 0.0 && lo < hi && hi < 1.0) {
        return Err(Error::Config(
            "eigenvalue magnitudes must satisfy 0 < lo < hi < 1".into(),
        ));
    }
    if !(cfg.eps >= 0.0 && cfg.eps.is_finite()) {
        return Err(Error::Config("eps must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let rest = n - l;
    let group_sizes = [l, rest / 3, rest / 3, rest - 2 * (rest / 3)];

    let mut d = Mat::<f64>::zeros(n, n);
    let mut co_eigenvalues = Vec::new();
    let mut pos = 0;
    for (group, &size) in group_sizes.iter().enumerate() {
        let end = pos + size;
        while pos < end {
            let mag = (lo.ln() + (hi.ln() - lo.ln()) * rng.random::<f64>()).exp();
            let pair = cfg.allow_pairs && end - pos >= 2 && rng.random::<f64>() < 0.5;
            if pair {
                let theta = 0.1 + (std::f64::consts::PI - 0.2) * rng.random::<f64>();
                let (re, im) = (mag * theta.cos(), mag * theta.sin());
                d[(pos, pos)] = re;
                d[(pos, pos + 1)] = -im;
                d[(pos + 1, pos)] = im;
                d[(pos + 1, pos + 1)] = re;
                if group == 0 {
                    co_eigenvalues.push(c64::new(re, im));
                    co_eigenvalues.push(c64::new(re, -im));
                }
                pos += 2;
            } else {
                let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
                d[(pos, pos)] = sign * mag;
                if group == 0 {
                    co_eigenvalues.push(c64::new(sign * mag, 0.0));
                }
                pos += 1;
            }
        }
    }
    co_eigenvalues.sort_by(linsys::spectrum_order);

    let normal = |rng: &mut ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };
    let (p, q) = (cfg.inputs, cfg.outputs);
    let scale = match cfg.kind {
        SyntheticKind::Exact => 0.0,
        SyntheticKind::Perturbed => cfg.eps,
    };
    let c_end = group_sizes[0] + group_sizes[1];
    let mut g = Mat::from_fn(n, p, |_, _| normal(&mut rng));
    let mut h = Mat::from_fn(q, n, |_, _| normal(&mut rng));
    scale_rows(&mut g, c_end, n, scale);
    let o_ranges = [(group_sizes[0], c_end), (c_end + group_sizes[2], n)];
    scale_cols(&mut h, &o_ranges, scale);

    // W = Q diag(s) with Q orthogonal keeps cond(W) <= 4
    let gauss = Mat::from_fn(n, n, |_, _| normal(&mut rng));
    let qr = gauss.qr();
    let qm = qr.compute_thin_Q();
    let s: Vec<f64> = (0..n).map(|_| 0.5 + 1.5 * rng.random::<f64>()).collect();
    let w = Mat::from_fn(n, n, |i, j| qm[(i, j)] * s[j]);
    let winv = Mat::from_fn(n, n, |i, j| qm[(j, i)] / s[i]);
    let a = &w * &d * &winv;
    let b = &w * &g;
    let c = &h * &winv;
    let system = StateSpaceSystem::from_dense(a, b, c)?;
    Ok(SyntheticSystem {
        config: cfg.clone(),
        system,
        co_eigenvalues,
        group_sizes,
        d,
        g,
        h,
    })
}

/// Rescales rows `start..end` to Frobenius norm `target`.
fn scale_rows(m: &mut Mat<f64>, start: usize, end: usize, target: f64) {
    let norm = (start..end)
        .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
        .map(|(i, j)| m[(i, j)] * m[(i, j)])
        .sum::<f64>()
        .sqrt();
    let f = if norm > 0.0 { target / norm } else { 0.0 };
    for i in start..end {
        for j in 0..m.ncols() {
            m[(i, j)] *= f;
        }
    }
}

fn scale_cols(m: &mut Mat<f64>, ranges: &[(usize, usize)], target: f64) {
    let norm = ranges
        .iter()
        .flat_map(|&(a, b)| a..b)
        .flat_map(|j| (0..m.nrows()).map(move |i| (i, j)))
        .map(|(i, j)| m[(i, j)] * m[(i, j)])
        .sum::<f64>()
        .sqrt();
    let f = if norm > 0.0 { target / norm } else { 0.0 };
    for &(a, b) in ranges {
        for j in a..b {
            for i in 0..m.nrows() {
                m[(i, j)] *= f;
            }
        }
    }
}
