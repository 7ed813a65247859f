//! Impulse-response and white-noise snapshot ensembles.

use faer::{Mat, MatRef};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la;
use crate::linsys::StateSpaceSystem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotSource {
    Primal,
    Adjoint,
}

#[derive(Clone, Debug, PartialEq)]
pub enum EnsembleKind {
    /// Columns ordered by time first, then by initial condition.
    Impulse {
        times: Vec<usize>,
        initial_conditions: usize,
    },
    Noise(NoiseSpec),
}

#[derive(Clone, Debug)]
pub struct SnapshotEnsemble {
    pub columns: Mat<f64>,
    pub source: SnapshotSource,
    pub kind: EnsembleKind,
}

impl SnapshotEnsemble {
    pub fn len(&self) -> usize {
        self.columns.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.ncols() == 0
    }
}

/// `count` step indices `start, start + spacing, ...`.
pub fn uniform_times(start: usize, count: usize, spacing: usize) -> Vec<usize> {
    (0..count).map(|k| start + k * spacing).collect()
}

fn check_times(times: &[usize]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::Config("snapshot time list is empty".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("snapshot times must be strictly increasing".into()));
    }
    Ok(())
}

/// Columns `A^t x0_j` for every t in `times` and every column `x0_j` of `initial`.
pub fn impulse_ensemble(
    sys: &StateSpaceSystem,
    initial: MatRef<'_, f64>,
    times: &[usize],
    source: SnapshotSource,
) -> Result<SnapshotEnsemble> {
    check_times(times)?;
    if initial.nrows() != sys.n() {
        return Err(Error::Dimension(format!(
            "initial conditions have {} rows, system has {} states",
            initial.nrows(),
            sys.n()
        )));
    }
    let r = initial.ncols();
    let mut columns = Mat::zeros(sys.n(), r * times.len());
    let mut w = initial.to_owned();
    let mut next = Mat::zeros(sys.n(), r);
    let mut now = 0;
    for (slot, &t) in times.iter().enumerate() {
        while now < t {
            sys.a().apply_to(w.as_ref(), next.as_mut());
            std::mem::swap(&mut w, &mut next);
            now += 1;
        }
        columns.subcols_mut(slot * r, r).copy_from(w.as_ref());
    }
    if !la::is_finite(columns.as_ref()) {
        return Err(Error::NonFinite("impulse snapshots".into()));
    }
    Ok(SnapshotEnsemble {
        columns,
        source,
        kind: EnsembleKind::Impulse {
            times: times.to_vec(),
            initial_conditions: r,
        },
    })
}

/// Impulse responses of the primal system, started from the columns of `B`.
pub fn impulse_ensemble_primal(sys: &StateSpaceSystem, times: &[usize]) -> Result<SnapshotEnsemble> {
    let b = sys.b().to_dense();
    impulse_ensemble(sys, b.as_ref(), times, SnapshotSource::Primal)
}

/// Impulse responses of the adjoint system, started from the columns of `C'`.
pub fn impulse_ensemble_adjoint(sys: &StateSpaceSystem, times: &[usize]) -> Result<SnapshotEnsemble> {
    let adj = sys.adjoint();
    let ct = adj.b().to_dense();
    impulse_ensemble(&adj, ct.as_ref(), times, SnapshotSource::Adjoint)
}

/// One white-noise-forced trajectory from `x_0 = 0`, sampled every `spacing` steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub count: usize,
    pub spacing: usize,
    pub seed: u64,
    /// Independent random stream under the same seed (primal and adjoint use 0 and 1).
    pub stream: u64,
    pub scale: f64,
}

impl NoiseSpec {
    pub fn new(count: usize, spacing: usize, seed: u64) -> Self {
        Self {
            count,
            spacing,
            seed,
            stream: 0,
            scale: 1.0,
        }
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn steps(&self) -> usize {
        self.count * self.spacing
    }
}

struct NoiseStream {
    rng: ChaCha8Rng,
    scale: f64,
}

impl NoiseStream {
    fn new(spec: &NoiseSpec) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(spec.stream);
        Self { rng, scale: spec.scale }
    }

    fn fill(&mut self, mut u: faer::ColMut<'_, f64>) {
        for i in 0..u.nrows() {
            let v: f64 = StandardNormal.sample(&mut self.rng);
            u[i] = self.scale * v;
        }
    }
}

/// The input sequence `u_1..u_K` (p x K) that `noise_ensemble` draws for `spec`.
pub fn noise_inputs(p: usize, spec: &NoiseSpec) -> Mat<f64> {
    let mut stream = NoiseStream::new(spec);
    let mut u = Mat::zeros(p, spec.steps());
    for k in 0..spec.steps() {
        stream.fill(u.col_mut(k));
    }
    u
}

pub fn noise_ensemble(sys: &StateSpaceSystem, spec: &NoiseSpec) -> Result<SnapshotEnsemble> {
    if spec.count == 0 || spec.spacing == 0 {
        return Err(Error::Config("noise ensemble needs positive count and spacing".into()));
    }
    if !(spec.scale.is_finite() && spec.scale > 0.0) {
        return Err(Error::Config("noise scale must be positive".into()));
    }
    let mut stream = NoiseStream::new(spec);
    let mut columns = Mat::zeros(sys.n(), spec.count);
    let mut x = Mat::zeros(sys.n(), 1);
    let mut next = Mat::zeros(sys.n(), 1);
    let mut u = Mat::zeros(sys.p(), 1);
    for step in 1..=spec.steps() {
        sys.a().apply_to(x.as_ref(), next.as_mut());
        stream.fill(u.col_mut(0));
        sys.b().apply_add(u.as_ref(), next.as_mut());
        std::mem::swap(&mut x, &mut next);
        if step % spec.spacing == 0 {
            columns.col_mut(step / spec.spacing - 1).copy_from(x.col(0));
        }
    }
    if !la::is_finite(columns.as_ref()) {
        return Err(Error::NonFinite("noise-forced snapshots".into()));
    }
    Ok(SnapshotEnsemble {
        columns,
        source: SnapshotSource::Primal,
        kind: EnsembleKind::Noise(spec.clone()),
    })
}

/// Noise-forced ensemble of the adjoint system.
pub fn noise_ensemble_adjoint(sys: &StateSpaceSystem, spec: &NoiseSpec) -> Result<SnapshotEnsemble> {
    let mut e = noise_ensemble(&sys.adjoint(), spec)?;
    e.source = SnapshotSource::Adjoint;
    Ok(e)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SettlingOptions {
    pub tol: f64,
    pub probes: usize,
    pub seed: u64,
    pub max_steps: usize,
}

impl Default for SettlingOptions {
    fn default() -> Self {
        Self {
            tol: 1e-3,
            probes: 8,
            seed: 0,
            max_steps: 1 << 22,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SettlingEstimate {
    pub steps: usize,
    /// Largest probe ratio `|A^t v| / |v|` at the reported step.
    pub decay: f64,
}

/// Smallest t (found by doubling then bisection) at which random probes have
/// decayed below `tol`.
pub fn estimate_settling_time(sys: &StateSpaceSystem, opts: &SettlingOptions) -> Result<SettlingEstimate> {
    if !(opts.tol > 0.0 && opts.tol < 1.0) || opts.probes == 0 {
        return Err(Error::Config(
            "settling tolerance must lie in (0, 1) with at least one probe".into(),
        ));
    }
    let n = sys.n();
    let spec = NoiseSpec::new(1, 1, opts.seed);
    let mut stream = NoiseStream::new(&spec);
    let mut v0 = Mat::zeros(n, opts.probes);
    for j in 0..opts.probes {
        stream.fill(v0.col_mut(j));
        let norm = v0.col(j).norm_l2();
        if norm > 0.0 {
            for i in 0..n {
                v0[(i, j)] /= norm;
            }
        }
    }
    let ratio = |w: &Mat<f64>| (0..w.ncols()).map(|j| w.col(j).norm_l2()).fold(0.0f64, f64::max);
    let advance = |w: &Mat<f64>, steps: usize| {
        let mut w = w.clone();
        for _ in 0..steps {
            w = sys.a().apply(w.as_ref());
        }
        w
    };
    let (mut lo, mut lo_state) = (0usize, v0);
    let mut hi = 1usize;
    let mut hi_state = advance(&lo_state, 1);
    while ratio(&hi_state) > opts.tol {
        if hi >= opts.max_steps || !ratio(&hi_state).is_finite() {
            return Err(Error::Numerical(format!(
                "probes have not decayed below {} within {} steps; the system may not be stable",
                opts.tol, hi
            )));
        }
        lo = hi;
        lo_state = hi_state;
        hi_state = advance(&lo_state, hi);
        hi *= 2;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let mid_state = advance(&lo_state, mid - lo);
        if ratio(&mid_state) <= opts.tol {
            hi = mid;
            hi_state = mid_state;
        } else {
            lo = mid;
            lo_state = mid_state;
        }
    }
    Ok(SettlingEstimate {
        steps: hi,
        decay: ratio(&hi_state),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SufficiencyReport {
    pub rank: usize,
    pub primal_count: usize,
    pub adjoint_count: usize,
    pub sufficient: bool,
    pub singular_values: Vec<f64>,
    /// Suggested (primal, adjoint) counts when the ensembles look too small.
    pub suggestion: Option<(usize, usize)>,
}

/// The snapshot Hankel `Z' X` is judged sufficient when its numerical rank is
/// below both snapshot counts, so its trailing singular values have fallen off.
pub fn check_snapshot_sufficiency(x: MatRef<'_, f64>, z: MatRef<'_, f64>, rank_tol: f64) -> Result<SufficiencyReport> {
    if x.nrows() != z.nrows() {
        return Err(Error::Dimension("primal and adjoint snapshots differ in length".into()));
    }
    let h = z.transpose() * x;
    let sv = la::singular_values(h.as_ref())?;
    let top = sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > rank_tol * top).count();
    let (m, n) = (x.ncols(), z.ncols());
    let sufficient = top > 0.0 && rank < m.min(n);
    Ok(SufficiencyReport {
        rank,
        primal_count: m,
        adjoint_count: n,
        sufficient,
        singular_values: sv,
        suggestion: (!sufficient).then_some((2 * m, 2 * n)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64) -> StateSpaceSystem {
        StateSpaceSystem::from_dense(
            Mat::from_fn(1, 1, |_, _| a),
            Mat::from_fn(1, 1, |_, _| 1.0),
            Mat::from_fn(1, 1, |_, _| 1.0),
        )
        .unwrap()
    }

    #[test]
    fn zero_operator_settles_in_one_step() {
        let e = estimate_settling_time(&scalar(0.0), &SettlingOptions::default()).unwrap();
        assert_eq!(e.steps, 1);
    }

    #[test]
    fn halving_operator_settles_in_ten_steps() {
        let e = estimate_settling_time(&scalar(0.5), &SettlingOptions::default()).unwrap();
        assert_eq!(e.steps, 10);
    }

    #[test]
    fn unstable_operator_is_reported() {
        let opts = SettlingOptions {
            max_steps: 1000,
            ..Default::default()
        };
        assert!(estimate_settling_time(&scalar(1.0), &opts).is_err());
    }

    #[test]
    fn impulse_columns_follow_time_then_input() {
        let s = StateSpaceSystem::from_dense(
            Mat::from_fn(2, 2, |i, j| if i == j { 0.5 } else { 0.0 }),
            Mat::<f64>::identity(2, 2),
            Mat::<f64>::identity(2, 2),
        )
        .unwrap();
        let e = impulse_ensemble_primal(&s, &[0, 2]).unwrap();
        assert_eq!(e.columns[(0, 0)], 1.0);
        assert_eq!(e.columns[(1, 1)], 1.0);
        assert_eq!(e.columns[(0, 2)], 0.25);
        assert_eq!(e.columns[(1, 3)], 0.25);
    }

    #[test]
    fn non_increasing_times_are_rejected() {
        assert!(impulse_ensemble_primal(&scalar(0.5), &[2, 2]).is_err());
        assert!(impulse_ensemble_primal(&scalar(0.5), &[]).is_err());
    }
}
