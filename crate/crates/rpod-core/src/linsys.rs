//! Discrete-time linear systems `x_k = A x_{k-1} + B u_k`, `y_k = C x_k`.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::sparse::linalg::matmul::sparse_dense_matmul;
use faer::sparse::{SparseColMat, Triplet};
use faer::{c64, get_global_parallelism, Accum, Mat, MatMut, MatRef};

use crate::error::{Error, Result};
use crate::la;

/// Default bound on cond(V) above which an eigenbasis is reported as near-defective.
pub const DEFAULT_COND_BOUND: f64 = 1e7;
/// Default relative threshold for the controllable/observable mode split.
pub const DEFAULT_CLASS_EPS: f64 = 1e-8;

/// State transition operator, stored sparse (compressed columns) or dense.
#[derive(Clone, Debug)]
pub enum Operator {
    Sparse(SparseColMat<usize, f64>),
    Dense(Mat<f64>),
}

impl Operator {
    pub fn from_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let trips: Vec<Triplet<usize, usize, f64>> = entries.iter().map(|&(i, j, v)| Triplet::new(i, j, v)).collect();
        let m = SparseColMat::try_new_from_triplets(n, n, &trips)
            .map_err(|e| Error::Dimension(format!("sparse operator assembly: {e:?}")))?;
        Ok(Operator::Sparse(m))
    }

    pub fn dim(&self) -> usize {
        match self {
            Operator::Sparse(m) => m.nrows(),
            Operator::Dense(m) => m.nrows(),
        }
    }

    fn ncols(&self) -> usize {
        match self {
            Operator::Sparse(m) => m.ncols(),
            Operator::Dense(m) => m.ncols(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            Operator::Sparse(m) => m.val().len(),
            Operator::Dense(m) => m.nrows() * m.ncols(),
        }
    }

    /// `out = A x`.
    pub fn apply_to(&self, x: MatRef<'_, f64>, out: MatMut<'_, f64>) {
        let par = get_global_parallelism();
        match self {
            Operator::Sparse(m) => sparse_dense_matmul(out, Accum::Replace, m.as_ref(), x, 1.0, par),
            Operator::Dense(m) => matmul(out, Accum::Replace, m.as_ref(), x, 1.0, par),
        }
    }

    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = Mat::zeros(self.dim(), x.ncols());
        self.apply_to(x, out.as_mut());
        out
    }

    pub fn apply_complex(&self, z: MatRef<'_, c64>) -> Mat<c64> {
        let re = self.apply(la::real_part(z).as_ref());
        let im = self.apply(la::imag_part(z).as_ref());
        Mat::from_fn(re.nrows(), re.ncols(), |i, j| c64::new(re[(i, j)], im[(i, j)]))
    }

    pub fn transpose(&self) -> Operator {
        match self {
            Operator::Sparse(m) => Operator::Sparse(
                m.as_ref()
                    .transpose()
                    .to_col_major()
                    .expect("transposing a valid sparse matrix"),
            ),
            Operator::Dense(m) => Operator::Dense(m.transpose().to_owned()),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            Operator::Sparse(m) => m.to_dense(),
            Operator::Dense(m) => m.clone(),
        }
    }

    /// Stored entries as (row, col, value), column by column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        match self {
            Operator::Sparse(m) => {
                let sym = m.symbolic();
                let mut out = Vec::with_capacity(m.val().len());
                for j in 0..m.ncols() {
                    let range = sym.col_range(j);
                    for k in range {
                        out.push((sym.row_idx()[k], j, m.val()[k]));
                    }
                }
                out
            }
            Operator::Dense(m) => {
                let mut out = Vec::new();
                for j in 0..m.ncols() {
                    for i in 0..m.nrows() {
                        out.push((i, j, m[(i, j)]));
                    }
                }
                out
            }
        }
    }

    fn is_finite(&self) -> bool {
        match self {
            Operator::Sparse(m) => m.val().iter().all(|v| v.is_finite()),
            Operator::Dense(m) => la::is_finite(m.as_ref()),
        }
    }
}

impl PartialEq for Operator {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Operator::Sparse(a), Operator::Sparse(b)) => {
                a.nrows() == b.nrows()
                    && a.ncols() == b.ncols()
                    && a.symbolic().col_ptr() == b.symbolic().col_ptr()
                    && a.symbolic().row_idx() == b.symbolic().row_idx()
                    && a.val() == b.val()
            }
            (Operator::Dense(a), Operator::Dense(b)) => a == b,
            _ => false,
        }
    }
}

/// Coupling between the state and a small input or output space.
///
/// `Unit` couples through unit vectors at the listed state nodes, which is how
/// point injections and full-field or lattice sensors are stored.
#[derive(Clone, Debug, PartialEq)]
pub enum Coupling {
    Dense(Mat<f64>),
    Unit { state_dim: usize, nodes: Vec<usize> },
}

/// `B` (N x p).
#[derive(Clone, Debug, PartialEq)]
pub struct InputMap(pub Coupling);

/// `C` (q x N).
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMap(pub Coupling);

impl InputMap {
    pub fn dense(b: Mat<f64>) -> Self {
        InputMap(Coupling::Dense(b))
    }

    pub fn unit(state_dim: usize, nodes: Vec<usize>) -> Self {
        InputMap(Coupling::Unit { state_dim, nodes })
    }

    pub fn state_dim(&self) -> usize {
        match &self.0 {
            Coupling::Dense(b) => b.nrows(),
            Coupling::Unit { state_dim, .. } => *state_dim,
        }
    }

    pub fn width(&self) -> usize {
        match &self.0 {
            Coupling::Dense(b) => b.ncols(),
            Coupling::Unit { nodes, .. } => nodes.len(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match &self.0 {
            Coupling::Dense(b) => b.clone(),
            Coupling::Unit { state_dim, nodes } => {
                let mut b = Mat::zeros(*state_dim, nodes.len());
                for (j, &n) in nodes.iter().enumerate() {
                    b[(n, j)] += 1.0;
                }
                b
            }
        }
    }

    /// `out += B u`.
    pub fn apply_add(&self, u: MatRef<'_, f64>, mut out: MatMut<'_, f64>) {
        match &self.0 {
            Coupling::Dense(b) => matmul(out, Accum::Add, b.as_ref(), u, 1.0, get_global_parallelism()),
            Coupling::Unit { nodes, .. } => {
                for c in 0..u.ncols() {
                    for (j, &n) in nodes.iter().enumerate() {
                        out[(n, c)] += u[(j, c)];
                    }
                }
            }
        }
    }

    pub fn transpose(&self) -> OutputMap {
        OutputMap(match &self.0 {
            Coupling::Dense(b) => Coupling::Dense(b.transpose().to_owned()),
            c @ Coupling::Unit { .. } => c.clone(),
        })
    }
}

impl OutputMap {
    pub fn dense(c: Mat<f64>) -> Self {
        OutputMap(Coupling::Dense(c))
    }

    pub fn unit(state_dim: usize, nodes: Vec<usize>) -> Self {
        OutputMap(Coupling::Unit { state_dim, nodes })
    }

    pub fn identity(state_dim: usize) -> Self {
        Self::unit(state_dim, (0..state_dim).collect())
    }

    pub fn state_dim(&self) -> usize {
        match &self.0 {
            Coupling::Dense(c) => c.ncols(),
            Coupling::Unit { state_dim, .. } => *state_dim,
        }
    }

    pub fn height(&self) -> usize {
        match &self.0 {
            Coupling::Dense(c) => c.nrows(),
            Coupling::Unit { nodes, .. } => nodes.len(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        self.transpose().to_dense().transpose().to_owned()
    }

    /// `C x`.
    pub fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        match &self.0 {
            Coupling::Dense(c) => c.as_ref() * x,
            Coupling::Unit { nodes, .. } => Mat::from_fn(nodes.len(), x.ncols(), |i, j| x[(nodes[i], j)]),
        }
    }

    pub fn apply_complex(&self, z: MatRef<'_, c64>) -> Mat<c64> {
        match &self.0 {
            Coupling::Dense(c) => la::real_times_complex(c.as_ref(), z),
            Coupling::Unit { nodes, .. } => Mat::from_fn(nodes.len(), z.ncols(), |i, j| z[(nodes[i], j)]),
        }
    }

    /// `C' y`.
    pub fn apply_transpose(&self, y: MatRef<'_, f64>) -> Mat<f64> {
        let mut out = Mat::zeros(self.state_dim(), y.ncols());
        self.transpose().apply_add(y, out.as_mut());
        out
    }

    pub fn transpose(&self) -> InputMap {
        InputMap(match &self.0 {
            Coupling::Dense(c) => Coupling::Dense(c.transpose().to_owned()),
            c @ Coupling::Unit { .. } => c.clone(),
        })
    }
}

fn coupling_finite(c: &Coupling) -> bool {
    match c {
        Coupling::Dense(m) => la::is_finite(m.as_ref()),
        Coupling::Unit { .. } => true,
    }
}

fn coupling_nodes_valid(c: &Coupling) -> bool {
    match c {
        Coupling::Dense(_) => true,
        Coupling::Unit { state_dim, nodes } => nodes.iter().all(|&n| n < *state_dim),
    }
}

/// The triple (A, B, C).
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceSystem {
    a: Operator,
    b: InputMap,
    c: OutputMap,
}

impl StateSpaceSystem {
    pub fn new(a: Operator, b: InputMap, c: OutputMap) -> Result<Self> {
        let n = a.dim();
        if a.ncols() != n {
            return Err(Error::Dimension(format!("A is {}x{}", n, a.ncols())));
        }
        if b.state_dim() != n {
            return Err(Error::Dimension(format!("B has {} rows, A is {n}x{n}", b.state_dim())));
        }
        if c.state_dim() != n {
            return Err(Error::Dimension(format!(
                "C has {} columns, A is {n}x{n}",
                c.state_dim()
            )));
        }
        if !coupling_nodes_valid(&b.0) || !coupling_nodes_valid(&c.0) {
            return Err(Error::Dimension("coupling node index out of range".into()));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("A".into()));
        }
        if !coupling_finite(&b.0) {
            return Err(Error::NonFinite("B".into()));
        }
        if !coupling_finite(&c.0) {
            return Err(Error::NonFinite("C".into()));
        }
        Ok(Self { a, b, c })
    }

    pub fn from_dense(a: Mat<f64>, b: Mat<f64>, c: Mat<f64>) -> Result<Self> {
        Self::new(Operator::Dense(a), InputMap::dense(b), OutputMap::dense(c))
    }

    pub fn a(&self) -> &Operator {
        &self.a
    }

    pub fn b(&self) -> &InputMap {
        &self.b
    }

    pub fn c(&self) -> &OutputMap {
        &self.c
    }

    pub fn n(&self) -> usize {
        self.a.dim()
    }

    pub fn p(&self) -> usize {
        self.b.width()
    }

    pub fn q(&self) -> usize {
        self.c.height()
    }

    /// States `x_1..x_K` (N x K) for `x_k = A x_{k-1} + B u_k`, where column k-1 of
    /// `inputs` holds `u_k`.
    pub fn propagate(&self, x0: MatRef<'_, f64>, inputs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_run(x0, inputs)?;
        let k = inputs.ncols();
        let mut states = Mat::zeros(self.n(), k);
        let mut prev = x0.to_owned();
        for step in 0..k {
            let mut next = self.a.apply(prev.as_ref());
            self.b.apply_add(inputs.subcols(step, 1), next.as_mut());
            states.col_mut(step).copy_from(next.col(0));
            prev = next;
        }
        if !la::is_finite(states.as_ref()) {
            return Err(Error::NonFinite("propagated states (overflow)".into()));
        }
        Ok(states)
    }

    /// Outputs `y_1..y_K` (q x K) without storing the state history.
    pub fn simulate_outputs(&self, x0: MatRef<'_, f64>, inputs: MatRef<'_, f64>) -> Result<Mat<f64>> {
        self.check_run(x0, inputs)?;
        let k = inputs.ncols();
        let mut outputs = Mat::zeros(self.q(), k);
        let mut x = x0.to_owned();
        let mut next = Mat::zeros(self.n(), 1);
        for step in 0..k {
            self.a.apply_to(x.as_ref(), next.as_mut());
            self.b.apply_add(inputs.subcols(step, 1), next.as_mut());
            std::mem::swap(&mut x, &mut next);
            let y = self.c.apply(x.as_ref());
            outputs.col_mut(step).copy_from(y.col(0));
        }
        if !la::is_finite(outputs.as_ref()) {
            return Err(Error::NonFinite("simulated outputs (overflow)".into()));
        }
        Ok(outputs)
    }

    fn check_run(&self, x0: MatRef<'_, f64>, inputs: MatRef<'_, f64>) -> Result<()> {
        if x0.nrows() != self.n() || x0.ncols() != 1 {
            return Err(Error::Dimension(format!(
                "initial state is {}x{}, expected {}x1",
                x0.nrows(),
                x0.ncols(),
                self.n()
            )));
        }
        if inputs.nrows() != self.p() {
            return Err(Error::Dimension(format!(
                "inputs have {} rows, system has {} inputs",
                inputs.nrows(),
                self.p()
            )));
        }
        Ok(())
    }

    /// The adjoint triple (A', C', B').
    pub fn adjoint(&self) -> StateSpaceSystem {
        StateSpaceSystem {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
        }
    }

    /// `C A^i B` for i = 1..=horizon.
    pub fn markov_parameters(&self, horizon: usize) -> Vec<Mat<f64>> {
        let mut w = self.b.to_dense();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            w = self.a.apply(w.as_ref());
            out.push(self.c.apply(w.as_ref()));
        }
        out
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        spectral_radius(self.a.to_dense().as_ref())
    }

    pub fn eigendecompose(&self) -> Result<ModalDecomposition> {
        eigendecompose(self.a.to_dense().as_ref(), DEFAULT_COND_BOUND)
    }

    /// `H(e^{jw}) = C (e^{jw} I - A)^{-1} B`.
    pub fn transfer_function(&self, omega: f64) -> Result<Mat<c64>> {
        let z = c64::new(omega.cos(), omega.sin());
        let n = self.n();
        let rhs = la::to_complex(self.b.to_dense().as_ref());
        let mut sol = rhs.clone();
        match &self.a {
            Operator::Dense(a) => {
                let m = Mat::from_fn(n, n, |i, j| {
                    let d = if i == j { z } else { c64::new(0.0, 0.0) };
                    d - c64::new(a[(i, j)], 0.0)
                });
                m.partial_piv_lu().solve_in_place(sol.as_mut());
            }
            Operator::Sparse(_) => {
                let mut trips: Vec<Triplet<usize, usize, c64>> = self
                    .a
                    .triplets()
                    .into_iter()
                    .map(|(i, j, v)| Triplet::new(i, j, c64::new(-v, 0.0)))
                    .collect();
                trips.extend((0..n).map(|i| Triplet::new(i, i, z)));
                let m = SparseColMat::<usize, c64>::try_new_from_triplets(n, n, &trips)
                    .map_err(|e| Error::Numerical(format!("resolvent assembly: {e:?}")))?;
                let lu = m
                    .sp_lu()
                    .map_err(|e| Error::Numerical(format!("resolvent factorization at w={omega}: {e:?}")))?;
                lu.solve_in_place(sol.as_mut());
            }
        }
        // residual of (zI - A) X = B
        let ax = self.a.apply_complex(sol.as_ref());
        let mut res = 0.0f64;
        let mut scale = 0.0f64;
        for j in 0..sol.ncols() {
            for i in 0..n {
                let r = z * sol[(i, j)] - ax[(i, j)] - rhs[(i, j)];
                res += r.norm_sqr();
                scale += rhs[(i, j)].norm_sqr();
            }
        }
        if !res.is_finite() || res.sqrt() > 1e-8 * scale.sqrt().max(f64::MIN_POSITIVE) {
            return Err(Error::Numerical(format!(
                "resolvent solve at w={omega} has relative residual {:.3e}",
                res.sqrt() / scale.sqrt()
            )));
        }
        Ok(self.c.apply_complex(sol.as_ref()))
    }
}

pub fn spectral_radius(a: MatRef<'_, f64>) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    let ev = a
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues: {e:?}")))?;
    Ok(ev.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Eigendecomposition `A = V diag(lambda) U'`, with `U' V = I` (conjugate transpose)
/// and unit-norm columns of `V`.
#[derive(Clone, Debug)]
pub struct ModalDecomposition {
    pub eigenvalues: Vec<c64>,
    pub right: Mat<c64>,
    pub left: Mat<c64>,
    pub condition: f64,
}

impl ModalDecomposition {
    /// `U' M` for a real matrix `M` (rows indexed by mode).
    pub fn project_left(&self, m: MatRef<'_, f64>) -> Mat<c64> {
        la::complex_times_real(self.left.adjoint().to_owned().as_ref(), m)
    }

    pub fn reconstruct(&self) -> Mat<c64> {
        let n = self.eigenvalues.len();
        let vl = Mat::from_fn(n, n, |i, j| self.right[(i, j)] * self.eigenvalues[j]);
        vl * self.left.adjoint()
    }
}

/// Ordering used everywhere for spectra: descending modulus, then descending
/// real part, then ascending imaginary part.
pub fn spectrum_order(a: &c64, b: &c64) -> std::cmp::Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(b.re.total_cmp(&a.re))
        .then(a.im.total_cmp(&b.im))
}

pub fn sorted_eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<c64>> {
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    let mut ev = a
        .eigenvalues()
        .map_err(|e| Error::Numerical(format!("eigenvalues: {e:?}")))?;
    ev.sort_by(spectrum_order);
    Ok(ev)
}

pub fn eigendecompose(a: MatRef<'_, f64>, cond_bound: f64) -> Result<ModalDecomposition> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::Dimension(format!("eigendecomposition of {}x{}", n, a.ncols())));
    }
    if !la::is_finite(a) {
        return Err(Error::NonFinite("matrix to eigendecompose".into()));
    }
    if n == 0 {
        return Ok(ModalDecomposition {
            eigenvalues: Vec::new(),
            right: Mat::zeros(0, 0),
            left: Mat::zeros(0, 0),
            condition: 1.0,
        });
    }
    let evd = a
        .eigen()
        .map_err(|e| Error::Numerical(format!("eigendecomposition: {e:?}")))?;
    let vals = evd.S().column_vector();
    let vecs = evd.U();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| spectrum_order(&vals[i], &vals[j]));
    let eigenvalues: Vec<c64> = order.iter().map(|&i| vals[i]).collect();
    let mut right = Mat::<c64>::zeros(n, n);
    for (k, &src) in order.iter().enumerate() {
        let col = vecs.col(src);
        let norm = (0..n).map(|i| col[i].norm_sqr()).sum::<f64>().sqrt();
        for i in 0..n {
            right[(i, k)] = if norm > 0.0 { col[i] / norm } else { col[i] };
        }
    }
    let (inv, condition) = la::complex_inverse(right.as_ref())?;
    if !(condition <= cond_bound) {
        return Err(Error::NearDefective {
            cond: condition,
            cluster: closest_pair(&eigenvalues),
        });
    }
    Ok(ModalDecomposition {
        eigenvalues,
        right,
        left: inv.adjoint().to_owned(),
        condition,
    })
}

fn closest_pair(ev: &[c64]) -> String {
    let mut best = (f64::INFINITY, 0, 0);
    for i in 0..ev.len() {
        for j in i + 1..ev.len() {
            let d = (ev[i] - ev[j]).norm();
            if d < best.0 {
                best = (d, i, j);
            }
        }
    }
    if ev.len() < 2 {
        return format!("{:?}", ev);
    }
    let (_, i, j) = best;
    format!("{:.6}{:+.6}i, {:.6}{:+.6}i", ev[i].re, ev[i].im, ev[j].re, ev[j].im)
}

/// Split of modes by controllability and observability measures.
#[derive(Clone, Debug, PartialEq)]
pub struct ModePartition {
    pub controllable_observable: Vec<usize>,
    pub controllable_unobservable: Vec<usize>,
    pub uncontrollable_observable: Vec<usize>,
    pub uncontrollable_unobservable: Vec<usize>,
    pub controllability: Vec<f64>,
    pub observability: Vec<f64>,
}

/// Mode i is controllable when `|u_i' B| > eps |B|` and observable when
/// `|C v_i| > eps |C|` (spectral norms).
pub fn classify_modes(sys: &StateSpaceSystem, modes: &ModalDecomposition, eps: f64) -> Result<ModePartition> {
    let n = sys.n();
    if modes.eigenvalues.len() != n {
        return Err(Error::Dimension("mode count differs from state dimension".into()));
    }
    let b = sys.b().to_dense();
    let c = sys.c().to_dense();
    let bn = la::spectral_norm(b.as_ref())?;
    let cn = la::spectral_norm(c.as_ref())?;
    let ub = modes.project_left(b.as_ref());
    let cv = sys.c().apply_complex(modes.right.as_ref());
    let row_norm = |m: &Mat<c64>, i: usize| (0..m.ncols()).map(|j| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
    let col_norm = |m: &Mat<c64>, j: usize| (0..m.nrows()).map(|i| m[(i, j)].norm_sqr()).sum::<f64>().sqrt();
    let mut part = ModePartition {
        controllable_observable: Vec::new(),
        controllable_unobservable: Vec::new(),
        uncontrollable_observable: Vec::new(),
        uncontrollable_unobservable: Vec::new(),
        controllability: Vec::with_capacity(n),
        observability: Vec::with_capacity(n),
    };
    for i in 0..n {
        let ctrl = row_norm(&ub, i);
        let obs = col_norm(&cv, i);
        part.controllability.push(ctrl);
        part.observability.push(obs);
        let is_c = ctrl > eps * bn;
        let is_o = obs > eps * cn;
        match (is_c, is_o) {
            (true, true) => part.controllable_observable.push(i),
            (true, false) => part.controllable_unobservable.push(i),
            (false, true) => part.uncontrollable_observable.push(i),
            (false, false) => part.uncontrollable_unobservable.push(i),
        }
    }
    Ok(part)
}
