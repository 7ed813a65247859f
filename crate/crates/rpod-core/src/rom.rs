//! Hankel construction, truncated SVD, balancing bases and the four reduction
//! pipelines (BPOD, modal BPOD, RPOD*, BPOD with output projection), plus the
//! reduced-order-size heuristic.

use std::time::Instant;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::la;
use crate::linsys::{self, StateSpaceSystem, DEFAULT_COND_BOUND};
use crate::snapshots::{self, NoiseSpec, SnapshotEnsemble};

pub const DEFAULT_RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Bpod,
    BpodModal,
    OutputProjection,
    RpodStar,
    Identity,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Bpod => "bpod",
            Method::BpodModal => "bpod-modal",
            Method::OutputProjection => "output-projection",
            Method::RpodStar => "rpod-star",
            Method::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Method::Bpod,
            Method::BpodModal,
            Method::OutputProjection,
            Method::RpodStar,
            Method::Identity,
        ]
        .into_iter()
        .find(|m| m.name() == s)
    }
}

/// How many singular values to keep.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Truncation {
    Fixed(usize),
    /// Every singular value above `rank_tol * sigma_1`.
    NumericalRank,
    /// Run [`select_rom_size`].
    Select,
}

pub fn hankel(z: &SnapshotEnsemble, x: &SnapshotEnsemble) -> Result<Mat<f64>> {
    hankel_matrix(z.columns.as_ref(), x.columns.as_ref())
}

/// `Z' X`.
pub fn hankel_matrix(z: MatRef<'_, f64>, x: MatRef<'_, f64>) -> Result<Mat<f64>> {
    if z.nrows() != x.nrows() {
        return Err(Error::Dimension(format!(
            "adjoint snapshots have length {}, primal snapshots {}",
            z.nrows(),
            x.nrows()
        )));
    }
    Ok(z.transpose() * x)
}

#[derive(Clone, Debug)]
pub struct HankelSvd {
    /// (rows, cols) of the Hankel matrix.
    pub dims: (usize, usize),
    pub singular_values: Vec<f64>,
    /// Left singular vectors for the `numerical_rank` leading values.
    pub left: Mat<f64>,
    pub right: Mat<f64>,
    pub order: usize,
    pub requested: Option<usize>,
    pub numerical_rank: usize,
    pub rank_tol: f64,
    pub warnings: Vec<String>,
}

impl HankelSvd {
    /// `sigma_{l+1}`, zero when the spectrum ends at `l`.
    pub fn sigma_next(&self) -> f64 {
        self.singular_values.get(self.order).copied().unwrap_or(0.0)
    }

    pub fn with_order(&self, l: usize) -> Result<HankelSvd> {
        if l == 0 || l > self.numerical_rank {
            return Err(Error::Config(format!(
                "order {l} is outside 1..={}",
                self.numerical_rank
            )));
        }
        let mut out = self.clone();
        out.order = l;
        Ok(out)
    }
}

/// Thin SVD of `h`. Values at or below `rank_tol * sigma_1` never enter
/// `Sigma^{-1/2}`; a fixed request beyond that count is clamped with a warning.
pub fn svd_truncate(h: MatRef<'_, f64>, truncation: Truncation, rank_tol: f64) -> Result<HankelSvd> {
    if h.nrows() == 0 || h.ncols() == 0 {
        return Err(Error::Dimension("empty Hankel matrix".into()));
    }
    if !la::is_finite(h) {
        return Err(Error::NonFinite("Hankel matrix".into()));
    }
    let svd = h
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("Hankel SVD: {e:?}")))?;
    let s = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..s.nrows()).map(|i| s[i].max(0.0)).collect();
    let top = singular_values[0];
    if !(top > 0.0) {
        return Err(Error::SizeSelection(
            "Hankel matrix is zero; no admissible reduced order".into(),
        ));
    }
    let rank = singular_values.iter().filter(|&&v| v > rank_tol * top).count();
    let mut warnings = Vec::new();
    let (order, requested) = match truncation {
        Truncation::Fixed(0) => return Err(Error::Config("reduced order must be positive".into())),
        Truncation::Fixed(l) => {
            if l > rank {
                warnings.push(format!(
                    "requested order {l} exceeds the numerical rank {rank} of the Hankel matrix; using {rank}"
                ));
            }
            (l.min(rank), Some(l))
        }
        Truncation::NumericalRank | Truncation::Select => (rank, None),
    };
    Ok(HankelSvd {
        dims: (h.nrows(), h.ncols()),
        singular_values,
        left: svd.U().subcols(0, rank).to_owned(),
        right: svd.V().subcols(0, rank).to_owned(),
        order,
        requested,
        numerical_rank: rank,
        rank_tol,
        warnings,
    })
}

#[derive(Clone, Debug)]
pub struct ModalBasis {
    /// Spectrum of the intermediate `S A T`, in the library's spectral order.
    pub eigenvalues: Vec<c64>,
    /// Eigenvectors `P` of `S A T`.
    pub eigenvectors: Mat<c64>,
    /// `Phi = P^{-1} S`.
    pub phi: Mat<c64>,
    /// `Psi = T P`.
    pub psi: Mat<c64>,
}

#[derive(Clone, Debug)]
pub struct RomBases {
    /// N x l.
    pub t: Mat<f64>,
    /// l x N.
    pub s: Mat<f64>,
    pub modal: Option<ModalBasis>,
}

/// `T = X R Sigma^{-1/2}`, `S = Sigma^{-1/2} L' Z'` at the svd's order.
pub fn bases(x: MatRef<'_, f64>, z: MatRef<'_, f64>, svd: &HankelSvd) -> Result<RomBases> {
    let l = svd.order;
    if x.ncols() != svd.dims.1 || z.ncols() != svd.dims.0 {
        return Err(Error::Dimension("snapshot counts do not match the Hankel SVD".into()));
    }
    let scale: Vec<f64> = svd.singular_values[..l].iter().map(|s| s.sqrt().recip()).collect();
    let r = Mat::from_fn(svd.right.nrows(), l, |i, j| svd.right[(i, j)] * scale[j]);
    let lt = Mat::from_fn(l, svd.left.nrows(), |i, j| svd.left[(j, i)] * scale[i]);
    Ok(RomBases {
        t: x * r,
        s: lt * z.transpose(),
        modal: None,
    })
}

#[derive(Clone, Debug)]
pub enum RomMatrices {
    Real {
        a: Mat<f64>,
        b: Mat<f64>,
        c: Mat<f64>,
    },
    /// Complex modal coordinates; conjugate pairs sit next to each other.
    Modal {
        eigenvalues: Vec<c64>,
        a: Mat<c64>,
        b: Mat<c64>,
        c: Mat<c64>,
    },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub requested_order: Option<usize>,
    pub numerical_rank: usize,
    pub sigma_next: f64,
    pub singular_values: Vec<f64>,
    pub hankel_dims: (usize, usize),
    pub primal_snapshots: String,
    pub adjoint_snapshots: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ReducedOrderModel {
    pub method: Method,
    pub matrices: RomMatrices,
    pub provenance: Provenance,
}

impl ReducedOrderModel {
    pub fn real(method: Method, a: Mat<f64>, b: Mat<f64>, c: Mat<f64>) -> Result<Self> {
        let l = a.nrows();
        if a.ncols() != l || b.nrows() != l || c.ncols() != l {
            return Err(Error::Dimension(format!(
                "reduced matrices are {}x{}, {}x{}, {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        Ok(Self {
            method,
            matrices: RomMatrices::Real { a, b, c },
            provenance: Provenance::default(),
        })
    }

    /// The full-order system itself, as a dense reduced model of order N.
    pub fn identity(sys: &StateSpaceSystem) -> Self {
        Self {
            method: Method::Identity,
            matrices: RomMatrices::Real {
                a: sys.a().to_dense(),
                b: sys.b().to_dense(),
                c: sys.c().to_dense(),
            },
            provenance: Provenance::default(),
        }
    }

    pub fn order(&self) -> usize {
        match &self.matrices {
            RomMatrices::Real { a, .. } => a.nrows(),
            RomMatrices::Modal { a, .. } => a.nrows(),
        }
    }

    pub fn inputs(&self) -> usize {
        match &self.matrices {
            RomMatrices::Real { b, .. } => b.ncols(),
            RomMatrices::Modal { b, .. } => b.ncols(),
        }
    }

    pub fn outputs(&self) -> usize {
        match &self.matrices {
            RomMatrices::Real { c, .. } => c.nrows(),
            RomMatrices::Modal { c, .. } => c.nrows(),
        }
    }

    pub fn eigenvalues(&self) -> Result<Vec<c64>> {
        match &self.matrices {
            RomMatrices::Real { a, .. } => linsys::sorted_eigenvalues(a.as_ref()),
            RomMatrices::Modal { eigenvalues, .. } => Ok(eigenvalues.clone()),
        }
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().map(|l| l.norm()).fold(0.0, f64::max))
    }

    /// `C_r A_r^i B_r` for i = 1..=horizon in complex arithmetic.
    pub fn markov_parameters_complex(&self, horizon: usize) -> Vec<Mat<c64>> {
        let (a, b, c) = self.complex_matrices();
        let mut w = b;
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            w = &a * &w;
            out.push(&c * &w);
        }
        out
    }

    /// Real Markov parameters (the imaginary parts of modal models cancel).
    pub fn markov_parameters(&self, horizon: usize) -> Vec<Mat<f64>> {
        match &self.matrices {
            RomMatrices::Real { a, b, c } => {
                let mut w = b.clone();
                let mut out = Vec::with_capacity(horizon);
                for _ in 0..horizon {
                    w = a * &w;
                    out.push(c * &w);
                }
                out
            }
            RomMatrices::Modal { .. } => self
                .markov_parameters_complex(horizon)
                .iter()
                .map(|m| la::real_part(m.as_ref()))
                .collect(),
        }
    }

    /// Largest `|Im(C_r A_r^i B_r)| / |C_r A_r^i B_r|` over the horizon.
    pub fn markov_imaginary_residual(&self, horizon: usize) -> f64 {
        self.markov_parameters_complex(horizon)
            .iter()
            .map(|m| {
                let re = la::frobenius(la::real_part(m.as_ref()).as_ref());
                let im = la::max_abs_imag(m.as_ref());
                if re > 0.0 {
                    im / re
                } else {
                    im
                }
            })
            .fold(0.0, f64::max)
    }

    fn complex_matrices(&self) -> (Mat<c64>, Mat<c64>, Mat<c64>) {
        match &self.matrices {
            RomMatrices::Real { a, b, c } => (
                la::to_complex(a.as_ref()),
                la::to_complex(b.as_ref()),
                la::to_complex(c.as_ref()),
            ),
            RomMatrices::Modal { a, b, c, .. } => (a.clone(), b.clone(), c.clone()),
        }
    }

    /// Outputs `y_1..y_K` from a zero initial state for inputs `u_1..u_K` (p x K).
    pub fn simulate(&self, inputs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        if inputs.nrows() != self.inputs() {
            return Err(Error::Dimension(format!(
                "inputs have {} rows, reduced model has {} inputs",
                inputs.nrows(),
                self.inputs()
            )));
        }
        let k = inputs.ncols();
        let out = match &self.matrices {
            RomMatrices::Real { a, b, c } => {
                let bu = b * inputs;
                let mut x = Mat::<f64>::zeros(a.nrows(), 1);
                let mut y = Mat::zeros(c.nrows(), k);
                for step in 0..k {
                    let mut next = a * &x;
                    for i in 0..next.nrows() {
                        next[(i, 0)] += bu[(i, step)];
                    }
                    x = next;
                    y.col_mut(step).copy_from((c * &x).col(0));
                }
                y
            }
            RomMatrices::Modal { a, b, c, .. } => {
                let bu = la::complex_times_real(b.as_ref(), inputs);
                let mut x = Mat::<c64>::zeros(a.nrows(), 1);
                let mut y = Mat::zeros(c.nrows(), k);
                for step in 0..k {
                    let mut next = a * &x;
                    for i in 0..next.nrows() {
                        next[(i, 0)] += bu[(i, step)];
                    }
                    x = next;
                    let cy = c * &x;
                    for i in 0..cy.nrows() {
                        y[(i, step)] = cy[(i, 0)].re;
                    }
                }
                y
            }
        };
        if !la::is_finite(out.as_ref()) {
            return Err(Error::NonFinite("reduced-model outputs".into()));
        }
        Ok(out)
    }

    /// `C_r (e^{jw} I - A_r)^{-1} B_r`.
    pub fn transfer_function(&self, omega: f64) -> Result<Mat<c64>> {
        let (a, b, c) = self.complex_matrices();
        let l = a.nrows();
        let z = c64::new(omega.cos(), omega.sin());
        let m = Mat::from_fn(l, l, |i, j| {
            let d = if i == j { z } else { c64::new(0.0, 0.0) };
            d - a[(i, j)]
        });
        let mut sol = b.clone();
        m.partial_piv_lu().solve_in_place(sol.as_mut());
        let h = &c * &sol;
        if (0..h.ncols()).any(|j| (0..h.nrows()).any(|i| !h[(i, j)].re.is_finite() || !h[(i, j)].im.is_finite())) {
            return Err(Error::Numerical(format!("reduced resolvent is singular at w={omega}")));
        }
        Ok(h)
    }

    /// Real realization: modal models become block diagonal with 2x2 rotation
    /// blocks `[[a, -b], [b, a]]` for each pair `a +- ib`.
    pub fn to_real_form(&self) -> (Mat<f64>, Mat<f64>, Mat<f64>) {
        match &self.matrices {
            RomMatrices::Real { a, b, c } => (a.clone(), b.clone(), c.clone()),
            RomMatrices::Modal { eigenvalues, b, c, .. } => {
                let l = eigenvalues.len();
                let (p, q) = (b.ncols(), c.nrows());
                let mut ar = Mat::zeros(l, l);
                let mut br = Mat::zeros(l, p);
                let mut cr = Mat::zeros(q, l);
                let mut k = 0;
                while k < l {
                    let lam = eigenvalues[k];
                    let paired = k + 1 < l
                        && lam.im != 0.0
                        && (eigenvalues[k + 1] - lam.conj()).norm() <= 1e-8 * lam.norm().max(1e-300);
                    if paired {
                        ar[(k, k)] = lam.re;
                        ar[(k, k + 1)] = -lam.im;
                        ar[(k + 1, k)] = lam.im;
                        ar[(k + 1, k + 1)] = lam.re;
                        for j in 0..p {
                            br[(k, j)] = b[(k, j)].re;
                            br[(k + 1, j)] = b[(k, j)].im;
                        }
                        for i in 0..q {
                            cr[(i, k)] = 2.0 * c[(i, k)].re;
                            cr[(i, k + 1)] = -2.0 * c[(i, k)].im;
                        }
                        k += 2;
                    } else {
                        ar[(k, k)] = lam.re;
                        for j in 0..p {
                            br[(k, j)] = b[(k, j)].re;
                        }
                        for i in 0..q {
                            cr[(i, k)] = c[(i, k)].re;
                        }
                        k += 1;
                    }
                }
                (ar, br, cr)
            }
        }
    }
}

/// Wall-clock seconds per pipeline phase.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub generate_x: f64,
    pub generate_z: f64,
    /// Output-projection basis (zero for the other methods).
    pub projection: f64,
    pub construct_hankel: f64,
    pub svd: f64,
    /// Bases, projection onto them and modal transformation.
    pub assemble: f64,
    pub total: f64,
}

#[derive(Clone, Debug)]
pub struct Reduction {
    pub rom: ReducedOrderModel,
    pub bases: RomBases,
    pub svd: HankelSvd,
    pub timings: PhaseTimings,
    pub selection: Option<SizeSelection>,
}

/// `(S A T, S B, C T)`.
pub fn project(sys: &StateSpaceSystem, bases: &RomBases, method: Method) -> Result<ReducedOrderModel> {
    let at = sys.a().apply(bases.t.as_ref());
    let b = sys.b().to_dense();
    ReducedOrderModel::real(method, &bases.s * &at, &bases.s * &b, sys.c().apply(bases.t.as_ref()))
}

fn describe(e: &SnapshotEnsemble) -> String {
    match &e.kind {
        snapshots::EnsembleKind::Impulse {
            times,
            initial_conditions,
        } => format!(
            "{:?} impulse: {} times in [{}, {}] x {} initial conditions",
            e.source,
            times.len(),
            times.first().copied().unwrap_or(0),
            times.last().copied().unwrap_or(0),
            initial_conditions
        ),
        snapshots::EnsembleKind::Noise(spec) => format!(
            "{:?} noise: {} snapshots every {} steps, seed {} stream {}",
            e.source, spec.count, spec.spacing, spec.seed, spec.stream
        ),
    }
}

fn fill_provenance(rom: &mut ReducedOrderModel, svd: &HankelSvd, x: &SnapshotEnsemble, z: &SnapshotEnsemble) {
    rom.provenance = Provenance {
        seed: rom.provenance.seed,
        requested_order: svd.requested,
        numerical_rank: svd.numerical_rank,
        sigma_next: svd.sigma_next(),
        singular_values: svd.singular_values.clone(),
        hankel_dims: svd.dims,
        primal_snapshots: describe(x),
        adjoint_snapshots: describe(z),
        warnings: svd.warnings.clone(),
    };
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpodConfig {
    pub primal_times: Vec<usize>,
    pub adjoint_times: Vec<usize>,
    pub order: Truncation,
    pub rank_tol: f64,
}

/// Shared tail of every pipeline: Hankel, SVD, optional size selection, bases.
fn balance(
    sys: &StateSpaceSystem,
    x: &SnapshotEnsemble,
    z: &SnapshotEnsemble,
    order: Truncation,
    rank_tol: f64,
    timings: &mut PhaseTimings,
) -> Result<(HankelSvd, RomBases, Option<SizeSelection>)> {
    let t0 = Instant::now();
    let h = hankel(z, x)?;
    timings.construct_hankel = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let mut svd = svd_truncate(h.as_ref(), order, rank_tol)?;
    timings.svd = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let mut selection = None;
    if order == Truncation::Select {
        let sel = select_rom_size(sys, x, z, &svd, &SelectionOptions::default())?;
        svd.order = sel.order;
        selection = Some(sel);
    }
    let b = bases(x.columns.as_ref(), z.columns.as_ref(), &svd)?;
    timings.assemble = t0.elapsed().as_secs_f64();
    Ok((svd, b, selection))
}

/// Balanced POD from impulse responses.
pub fn bpod(sys: &StateSpaceSystem, cfg: &BpodConfig) -> Result<Reduction> {
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let t0 = Instant::now();
    let x = snapshots::impulse_ensemble_primal(sys, &cfg.primal_times)?;
    timings.generate_x = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let z = snapshots::impulse_ensemble_adjoint(sys, &cfg.adjoint_times)?;
    timings.generate_z = t0.elapsed().as_secs_f64();
    let (svd, b, selection) = balance(sys, &x, &z, cfg.order, cfg.rank_tol, &mut timings)?;
    let t0 = Instant::now();
    let mut rom = project(sys, &b, Method::Bpod)?;
    fill_provenance(&mut rom, &svd, &x, &z);
    timings.assemble += t0.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();
    Ok(Reduction {
        rom,
        bases: b,
        svd,
        timings,
        selection,
    })
}

/// Diagonalizes a real reduced model: with `S A T = P Lambda P^{-1}`, returns
/// `(Phi A Psi, Phi B, C Psi)` for `Phi = P^{-1} S`, `Psi = T P`.
pub fn modalize(
    rom: &ReducedOrderModel,
    bases: &RomBases,
    sys: &StateSpaceSystem,
) -> Result<(ReducedOrderModel, RomBases)> {
    let RomMatrices::Real { a, b, c } = &rom.matrices else {
        return Err(Error::Config("reduced model is already modal".into()));
    };
    let dec = linsys::eigendecompose(a.as_ref(), DEFAULT_COND_BOUND).map_err(|e| match e {
        Error::NearDefective { cond, cluster } => Error::NearDefective {
            cond,
            cluster: format!("{cluster} (the reduced operator is nearly defective; lower the reduced order)"),
        },
        other => other,
    })?;
    let p = dec.right.clone();
    let pinv = dec.left.adjoint().to_owned();
    let phi = la::complex_times_real(pinv.as_ref(), bases.s.as_ref());
    let psi = la::real_times_complex(bases.t.as_ref(), p.as_ref());
    let a_psi = sys.a().apply_complex(psi.as_ref());
    let am = &phi * &a_psi;
    let bm = la::complex_times_real(pinv.as_ref(), b.as_ref());
    let cm = la::real_times_complex(c.as_ref(), p.as_ref());
    let method = match rom.method {
        Method::Bpod => Method::BpodModal,
        m => m,
    };
    let modal_rom = ReducedOrderModel {
        method,
        matrices: RomMatrices::Modal {
            eigenvalues: dec.eigenvalues.clone(),
            a: am,
            b: bm,
            c: cm,
        },
        provenance: rom.provenance.clone(),
    };
    let modal_bases = RomBases {
        t: bases.t.clone(),
        s: bases.s.clone(),
        modal: Some(ModalBasis {
            eigenvalues: dec.eigenvalues,
            eigenvectors: p,
            phi,
            psi,
        }),
    };
    Ok((modal_rom, modal_bases))
}

/// Modal BPOD.
pub fn bpod_modal(sys: &StateSpaceSystem, cfg: &BpodConfig) -> Result<Reduction> {
    let start = Instant::now();
    let mut red = bpod(sys, cfg)?;
    let t0 = Instant::now();
    let (rom, bases) = modalize(&red.rom, &red.bases, sys)?;
    red.timings.assemble += t0.elapsed().as_secs_f64();
    red.rom = rom;
    red.bases = bases;
    red.timings.total = start.elapsed().as_secs_f64();
    Ok(red)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RpodConfig {
    pub primal_count: usize,
    pub adjoint_count: usize,
    pub primal_spacing: usize,
    pub adjoint_spacing: usize,
    pub order: Truncation,
    pub seed: u64,
    pub rank_tol: f64,
    /// Settling time in steps, when known; shorter spans only warn.
    pub settling_steps: Option<usize>,
}

impl RpodConfig {
    pub fn new(m: usize, n: usize, spacing: usize, order: Truncation, seed: u64) -> Self {
        Self {
            primal_count: m,
            adjoint_count: n,
            primal_spacing: spacing,
            adjoint_spacing: spacing,
            order,
            seed,
            rank_tol: DEFAULT_RANK_TOL,
            settling_steps: None,
        }
    }
}

fn ensure_stable(rom: &ReducedOrderModel) -> Result<()> {
    let rho = rom.spectral_radius()?;
    if !(rho < 1.0) {
        return Err(Error::SizeSelection(format!(
            "reduced operator of order {} is unstable (spectral radius {rho:.6}); use size selection or a smaller order",
            rom.order()
        )));
    }
    Ok(())
}

/// Ensembles drawn by RPOD* for `cfg`: one noise-forced primal and one
/// noise-forced adjoint trajectory on independent streams of `cfg.seed`.
pub fn rpod_ensembles(
    sys: &StateSpaceSystem,
    cfg: &RpodConfig,
    timings: &mut PhaseTimings,
) -> Result<(SnapshotEnsemble, SnapshotEnsemble)> {
    let t0 = Instant::now();
    let x = snapshots::noise_ensemble(sys, &NoiseSpec::new(cfg.primal_count, cfg.primal_spacing, cfg.seed))?;
    timings.generate_x = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let z = snapshots::noise_ensemble_adjoint(
        sys,
        &NoiseSpec::new(cfg.adjoint_count, cfg.adjoint_spacing, cfg.seed).with_stream(1),
    )?;
    timings.generate_z = t0.elapsed().as_secs_f64();
    Ok((x, z))
}

/// RPOD*: balanced modal reduction from one white-noise-forced primal and one
/// adjoint trajectory.
pub fn rpod_star(sys: &StateSpaceSystem, cfg: &RpodConfig) -> Result<Reduction> {
    if cfg.primal_count == 0 || cfg.adjoint_count == 0 || cfg.primal_spacing == 0 || cfg.adjoint_spacing == 0 {
        return Err(Error::Config(
            "RPOD* needs positive snapshot counts and spacings".into(),
        ));
    }
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let mut warnings = Vec::new();
    if let Some(tss) = cfg.settling_steps {
        for (label, count, spacing) in [
            ("primal", cfg.primal_count, cfg.primal_spacing),
            ("adjoint", cfg.adjoint_count, cfg.adjoint_spacing),
        ] {
            if count * spacing < tss {
                warnings.push(format!(
                    "{label} snapshots span {} steps, shorter than the settling time {tss}",
                    count * spacing
                ));
            }
        }
    }
    let (x, z) = rpod_ensembles(sys, cfg, &mut timings)?;
    let (svd, b, selection) = balance(sys, &x, &z, cfg.order, cfg.rank_tol, &mut timings)?;
    let t0 = Instant::now();
    let mut real = project(sys, &b, Method::RpodStar)?;
    real.provenance.seed = Some(cfg.seed);
    fill_provenance(&mut real, &svd, &x, &z);
    real.provenance.warnings.extend(warnings);
    ensure_stable(&real)?;
    let (rom, bases) = modalize(&real, &b, sys)?;
    timings.assemble += t0.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();
    Ok(Reduction {
        rom,
        bases,
        svd,
        timings,
        selection,
    })
}

#[derive(Clone, Debug)]
pub struct OutputProjection {
    /// q x s with orthonormal columns.
    pub theta: Mat<f64>,
    pub singular_values: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Leading `s` left singular vectors of `Y = C X`, padded with an orthonormal
/// complement when `Y` has lower rank.
pub fn output_projection_basis(
    x: &SnapshotEnsemble,
    c: &linsys::OutputMap,
    s: usize,
    rank_tol: f64,
) -> Result<OutputProjection> {
    let q = c.height();
    if s == 0 || s > q {
        return Err(Error::Config(format!("projection rank {s} must lie in 1..={q}")));
    }
    let y = c.apply(x.columns.as_ref());
    let svd = y
        .thin_svd()
        .map_err(|e| Error::Numerical(format!("output snapshot SVD: {e:?}")))?;
    let sv = svd.S().column_vector();
    let singular_values: Vec<f64> = (0..sv.nrows()).map(|i| sv[i]).collect();
    let top = singular_values.first().copied().unwrap_or(0.0);
    let rank = singular_values.iter().filter(|&&v| v > rank_tol * top).count();
    let mut warnings = Vec::new();
    let keep = s.min(rank);
    if keep < s {
        warnings.push(format!(
            "projection rank {s} exceeds the rank {rank} of the output snapshots; padded with an orthonormal complement"
        ));
    }
    let mut theta = Mat::zeros(q, s);
    theta.subcols_mut(0, keep).copy_from(svd.U().subcols(0, keep));
    let mut filled = keep;
    let mut e = 0;
    while filled < s && e < q {
        // Gram-Schmidt a coordinate vector against the columns so far, twice
        let mut v = Mat::<f64>::zeros(q, 1);
        v[(e, 0)] = 1.0;
        for _ in 0..2 {
            let basis = theta.subcols(0, filled);
            let coef = basis.transpose() * &v;
            v -= basis * &coef;
        }
        let norm = v.col(0).norm_l2();
        if norm > 1e-8 {
            for i in 0..q {
                theta[(i, filled)] = v[(i, 0)] / norm;
            }
            filled += 1;
        }
        e += 1;
    }
    Ok(OutputProjection {
        theta,
        singular_values,
        warnings,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutputProjectionConfig {
    pub primal_times: Vec<usize>,
    pub adjoint_times: Vec<usize>,
    pub rank: usize,
    pub order: Truncation,
    pub rank_tol: f64,
}

/// Balanced POD with the adjoint driven through the leading output POD modes.
pub fn bpod_output_projection(sys: &StateSpaceSystem, cfg: &OutputProjectionConfig) -> Result<Reduction> {
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let t0 = Instant::now();
    let x = snapshots::impulse_ensemble_primal(sys, &cfg.primal_times)?;
    timings.generate_x = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let proj = output_projection_basis(&x, sys.c(), cfg.rank, cfg.rank_tol)?;
    let init = sys.c().apply_transpose(proj.theta.as_ref());
    timings.projection = t0.elapsed().as_secs_f64();
    let t0 = Instant::now();
    let z = snapshots::impulse_ensemble(
        &sys.adjoint(),
        init.as_ref(),
        &cfg.adjoint_times,
        snapshots::SnapshotSource::Adjoint,
    )?;
    timings.generate_z = t0.elapsed().as_secs_f64();
    let (svd, b, selection) = balance(sys, &x, &z, cfg.order, cfg.rank_tol, &mut timings)?;
    let t0 = Instant::now();
    let mut rom = project(sys, &b, Method::OutputProjection)?;
    fill_provenance(&mut rom, &svd, &x, &z);
    rom.provenance.warnings.extend(proj.warnings);
    timings.assemble += t0.elapsed().as_secs_f64();
    timings.total = start.elapsed().as_secs_f64();
    Ok(Reduction {
        rom,
        bases: b,
        svd,
        timings,
        selection,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionOptions {
    /// Eigenvalues below `zero_tol * max|lambda|` count as approximately zero.
    pub zero_tol: f64,
    /// Nearest-neighbour distance for treating eigenvalues at two orders as the same.
    pub match_tol: f64,
    /// `sigma_{r+1} / sigma_r` below this marks a clean rank-r Hankel matrix.
    pub gap_tol: f64,
}

impl Default for SelectionOptions {
    fn default() -> Self {
        Self {
            zero_tol: 1e-6,
            match_tol: 1e-3,
            gap_tol: 1e-6,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SelectionTrial {
    pub k: usize,
    pub spectrum: Vec<c64>,
    pub stable: bool,
    pub near_zero: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizeSelection {
    pub order: usize,
    pub trace: Vec<SelectionTrial>,
}

/// Reduced-order size by trial and error: shrink k until `S_k A T_k` is stable,
/// then keep shrinking while its spectrum still holds eigenvalues that do not
/// persist from one k to the next. Approximately zero eigenvalues are ignored.
pub fn select_rom_size(
    sys: &StateSpaceSystem,
    x: &SnapshotEnsemble,
    z: &SnapshotEnsemble,
    svd: &HankelSvd,
    opts: &SelectionOptions,
) -> Result<SizeSelection> {
    let r = svd.numerical_rank;
    // S_k A T_k = Sigma_k^{-1/2} L_k' (Z' A X) R_k Sigma_k^{-1/2}
    let ax = sys.a().apply(x.columns.as_ref());
    let g = hankel_matrix(z.columns.as_ref(), ax.as_ref())?;
    let gr = svd.left.transpose() * &g * &svd.right;
    let sigma = &svd.singular_values;
    let reduced = |k: usize| Mat::from_fn(k, k, |i, j| gr[(i, j)] / (sigma[i] * sigma[j]).sqrt());
    let mut trace = Vec::new();
    let mut spectra: Vec<Option<Vec<c64>>> = vec![None; r + 1];
    let trial = |k: usize, trace: &mut Vec<SelectionTrial>| -> Result<Vec<c64>> {
        let spec = linsys::sorted_eigenvalues(reduced(k).as_ref())?;
        let top = spec.iter().map(|l| l.norm()).fold(0.0, f64::max);
        let near_zero = spec.iter().filter(|l| l.norm() < opts.zero_tol * top).count();
        trace.push(SelectionTrial {
            k,
            stable: top < 1.0,
            near_zero,
            spectrum: spec.clone(),
        });
        Ok(spec)
    };
    let mut stable_k = None;
    for k in (1..=r).rev() {
        let spec = trial(k, &mut trace)?;
        let stable = trace.last().map(|t| t.stable).unwrap_or(false);
        spectra[k] = Some(spec);
        if stable {
            stable_k = Some(k);
            break;
        }
    }
    let Some(ks) = stable_k else {
        return Err(Error::SizeSelection(
            "no order k gives a stable reduced operator; the snapshots do not reveal a reducible system".into(),
        ));
    };
    let significant = |spec: &[c64]| -> Vec<c64> {
        let top = spec.iter().map(|l| l.norm()).fold(0.0, f64::max);
        spec.iter()
            .copied()
            .filter(|l| l.norm() >= opts.zero_tol * top)
            .collect()
    };
    let first = significant(spectra[ks].as_ref().expect("spectrum recorded"));
    let (m, n) = (svd.dims.1, svd.dims.0);
    let gap = sigma.get(r).copied().unwrap_or(0.0) / sigma[r - 1];
    if ks == r && first.len() == r && r < m.min(n) && gap < opts.gap_tol {
        return Ok(SizeSelection { order: r, trace });
    }
    let matched = |lam: &c64, set: &[c64]| set.iter().any(|p| (p - lam).norm() <= opts.match_tol);
    let mut persistent = first;
    for k in (1..ks).rev() {
        let spec = significant(&trial(k, &mut trace)?);
        if !spec.is_empty() && spec.iter().all(|l| matched(l, &persistent)) {
            return Ok(SizeSelection {
                order: spec.len(),
                trace,
            });
        }
        persistent.retain(|p| matched(p, &spec));
    }
    Ok(SizeSelection { order: ks, trace })
}
