//! Benchmark systems: 1-D heat conduction and 3-D atmospheric advection-diffusion.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{InputMap, Operator, OutputMap, StateSpaceSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    ExplicitEuler,
    ImplicitEuler,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HeatOutput {
    FullField,
    Nodes(Vec<usize>),
}

/// Slab of length `length` discretized with `nodes` unknowns at `x_j = j L / N`,
/// j = 1..N. The wall at x = 0 is held at zero; x = L is insulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeatConfig {
    pub length: f64,
    pub nodes: usize,
    pub diffusivity: f64,
    pub dt: f64,
    pub sources: Vec<f64>,
    pub output: HeatOutput,
    pub scheme: TimeScheme,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            nodes: 100,
            diffusivity: 4.2e-6,
            dt: 200.0,
            sources: vec![0.15, 0.45],
            output: HeatOutput::FullField,
            scheme: TimeScheme::ImplicitEuler,
        }
    }
}

impl HeatConfig {
    /// Forward-Euler variant with a one-second step.
    pub fn explicit() -> Self {
        Self {
            dt: 1.0,
            scheme: TimeScheme::ExplicitEuler,
            ..Self::default()
        }
    }

    pub fn spacing(&self) -> f64 {
        self.length / self.nodes as f64
    }

    /// `alpha dt / dx^2`.
    pub fn mesh_ratio(&self) -> f64 {
        self.diffusivity * self.dt / (self.spacing() * self.spacing())
    }

    pub fn source_nodes(&self) -> Result<Vec<usize>> {
        let dx = self.spacing();
        self.sources
            .iter()
            .map(|&xs| {
                if !(xs > 0.0 && xs < self.length) {
                    return Err(Error::Config(format!(
                        "heat source at x={xs} is outside (0, {})",
                        self.length
                    )));
                }
                let j = ((xs / dx).round() as usize).clamp(1, self.nodes);
                Ok(j - 1)
            })
            .collect()
    }
}

/// Unscaled second-difference stencil with the slab's boundary conditions.
fn heat_laplacian_entries(n: usize) -> Vec<(usize, usize, f64)> {
    let mut t = Vec::with_capacity(3 * n);
    for j in 0..n {
        t.push((j, j, -2.0));
        if j > 0 {
            // the insulated end mirrors its left neighbour
            let w = if j == n - 1 { 2.0 } else { 1.0 };
            t.push((j, j - 1, w));
        }
        if j + 1 < n {
            t.push((j, j + 1, 1.0));
        }
    }
    t
}

pub fn build_heat_1d(cfg: &HeatConfig) -> Result<StateSpaceSystem> {
    let n = cfg.nodes;
    if n < 2 {
        return Err(Error::Config("heat grid needs at least 2 nodes".into()));
    }
    if !(cfg.length > 0.0) || !(cfg.dt > 0.0) || !(cfg.diffusivity >= 0.0) {
        return Err(Error::Config(
            "heat length and dt must be positive, diffusivity non-negative".into(),
        ));
    }
    if cfg.sources.is_empty() {
        return Err(Error::Config("heat model needs at least one source".into()));
    }
    let r = cfg.mesh_ratio();
    let lap = heat_laplacian_entries(n);
    let a = match cfg.scheme {
        TimeScheme::ExplicitEuler => {
            if r > 0.5 {
                return Err(Error::Stability(format!(
                    "explicit heat step has alpha*dt/dx^2 = {r} > 0.5"
                )));
            }
            let mut t: Vec<(usize, usize, f64)> = lap.iter().map(|&(i, j, v)| (i, j, r * v)).collect();
            t.extend((0..n).map(|i| (i, i, 1.0)));
            Operator::from_triplets(n, &t)?
        }
        TimeScheme::ImplicitEuler => {
            let mut m = Mat::<f64>::identity(n, n);
            for &(i, j, v) in &lap {
                m[(i, j)] -= r * v;
            }
            Operator::Dense(m.partial_piv_lu().inverse())
        }
    };
    let b = InputMap::unit(n, cfg.source_nodes()?);
    let c = match &cfg.output {
        HeatOutput::FullField => OutputMap::identity(n),
        HeatOutput::Nodes(list) => {
            if list.is_empty() || list.iter().any(|&i| i >= n) {
                return Err(Error::Config("heat output node list is empty or out of range".into()));
            }
            OutputMap::unit(n, list.clone())
        }
    };
    StateSpaceSystem::new(a, b, c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum Diffusivity {
    /// `sigma^2 = a^2 x^2 (1 + b x)` spreads in y and z.
    Spread {
        ay: f64,
        by: f64,
        az: f64,
        bz: f64,
    },
    Constant {
        ky: f64,
        kz: f64,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LateralBoundary {
    /// Zero concentration just outside the lateral and top faces.
    FarField,
    /// Zero-flux lateral and top faces.
    Closed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DispersionOutput {
    All,
    /// Every `stride`-th plane in x and y away from the inflow and lateral
    /// boundaries, all heights.
    Lattice {
        stride: usize,
    },
    Nodes {
        nodes: Vec<usize>,
    },
}

/// Cell-centred grid on `[0, X] x [Y0, Y1] x [0, Z]`. Unknown `(i, j, k)` sits at
/// `((i + 1/2) dx, Y0 + (j + 1/2) dy, (k + 1/2) dz)` and is stored at index
/// `(k ny + j) nx + i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DispersionConfig {
    pub x_extent: f64,
    pub y_range: [f64; 2],
    pub z_extent: f64,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub wind_speed: f64,
    pub wind_direction: f64,
    pub dt: f64,
    pub diffusivity: Diffusivity,
    pub sources: Vec<[f64; 3]>,
    pub output: DispersionOutput,
    pub boundary: LateralBoundary,
}

impl Default for DispersionConfig {
    fn default() -> Self {
        Self {
            x_extent: 2000.0,
            y_range: [-100.0, 400.0],
            z_extent: 50.0,
            nx: 20,
            ny: 20,
            nz: 5,
            wind_speed: 4.0,
            wind_direction: 0.0,
            dt: 12.5,
            diffusivity: Diffusivity::Spread {
                ay: 0.008,
                by: 1e-5,
                az: 0.006,
                bz: 1.5e-4,
            },
            sources: vec![
                [300.0, 0.0, 5.0],
                [500.0, 100.0, 5.0],
                [700.0, 200.0, 5.0],
                [900.0, 50.0, 5.0],
            ],
            output: DispersionOutput::All,
            boundary: LateralBoundary::FarField,
        }
    }
}

impl DispersionConfig {
    /// 100 x 100 x 10 grid with ten sources and the 810-node sensor lattice.
    pub fn large() -> Self {
        let base = Self::default();
        let dx = base.x_extent / 100.0;
        Self {
            nx: 100,
            ny: 100,
            nz: 10,
            dt: 0.5 * dx / base.wind_speed,
            sources: (0..10)
                .map(|s| {
                    let s = s as f64;
                    [200.0 + 100.0 * s, -50.0 + 45.0 * s, 5.0]
                })
                .collect(),
            output: DispersionOutput::Lattice { stride: 10 },
            ..base
        }
    }

    pub fn spacing(&self) -> (f64, f64, f64) {
        (
            self.x_extent / self.nx as f64,
            (self.y_range[1] - self.y_range[0]) / self.ny as f64,
            self.z_extent / self.nz as f64,
        )
    }

    pub fn state_dim(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (k * self.ny + j) * self.nx + i
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> [f64; 3] {
        let (dx, dy, dz) = self.spacing();
        [
            (i as f64 + 0.5) * dx,
            self.y_range[0] + (j as f64 + 0.5) * dy,
            (k as f64 + 0.5) * dz,
        ]
    }

    pub fn output_nodes(&self) -> Result<Vec<usize>> {
        match &self.output {
            DispersionOutput::All => Ok((0..self.state_dim()).collect()),
            DispersionOutput::Lattice { stride } => {
                if *stride == 0 {
                    return Err(Error::Config("lattice stride must be positive".into()));
                }
                let mut out = Vec::new();
                for k in 0..self.nz {
                    for j in (*stride..self.ny).step_by(*stride) {
                        for i in (*stride..self.nx).step_by(*stride) {
                            out.push(self.index(i, j, k));
                        }
                    }
                }
                if out.is_empty() {
                    return Err(Error::Config("lattice stride leaves no output nodes".into()));
                }
                Ok(out)
            }
            DispersionOutput::Nodes { nodes } => {
                if nodes.is_empty() || nodes.iter().any(|&n| n >= self.state_dim()) {
                    return Err(Error::Config("output node list is empty or out of range".into()));
                }
                Ok(nodes.clone())
            }
        }
    }

    fn source_cells(&self) -> Result<Vec<usize>> {
        let (dx, dy, dz) = self.spacing();
        let [y0, y1] = self.y_range;
        self.sources
            .iter()
            .map(|&[xs, ys, zs]| {
                let inside = xs > 0.0 && xs < self.x_extent && ys > y0 && ys < y1 && zs > 0.0 && zs < self.z_extent;
                if !inside {
                    return Err(Error::Config(format!(
                        "source ({xs}, {ys}, {zs}) is not strictly inside the domain"
                    )));
                }
                let cell = |v: f64, h: f64, n: usize| ((v / h).floor() as usize).min(n - 1);
                Ok(self.index(cell(xs, dx, self.nx), cell(ys - y0, dy, self.ny), cell(zs, dz, self.nz)))
            })
            .collect()
    }
}

/// `(K_y, K_z)` at downwind distance `x`.
pub fn eddy_diffusivity(x: f64, cfg: &DispersionConfig) -> (f64, f64) {
    match cfg.diffusivity {
        Diffusivity::Spread { ay, by, az, bz } => {
            let k = |a: f64, b: f64| 0.5 * cfg.wind_speed * a * a * (2.0 * x + 3.0 * b * x * x);
            (k(ay, by), k(az, bz))
        }
        Diffusivity::Constant { ky, kz } => (ky, kz),
    }
}

pub fn build_advection_diffusion_3d(cfg: &DispersionConfig) -> Result<StateSpaceSystem> {
    let (nx, ny, nz) = (cfg.nx, cfg.ny, cfg.nz);
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Config("dispersion grid counts must be positive".into()));
    }
    if !(cfg.x_extent > 0.0 && cfg.z_extent > 0.0 && cfg.y_range[1] > cfg.y_range[0]) {
        return Err(Error::Config("dispersion domain extents are empty".into()));
    }
    if !(cfg.wind_speed >= 0.0) || !(cfg.dt > 0.0) {
        return Err(Error::Config("wind speed must be non-negative and dt positive".into()));
    }
    if cfg.sources.is_empty() {
        return Err(Error::Config("dispersion model needs at least one source".into()));
    }
    let (dx, dy, dz) = cfg.spacing();
    let ux = cfg.wind_speed * cfg.wind_direction.cos();
    let uy = cfg.wind_speed * cfg.wind_direction.sin();
    let cx = ux.abs() * cfg.dt / dx;
    let cy = uy.abs() * cfg.dt / dy;
    if cx > 1.0 || cy > 1.0 {
        return Err(Error::Stability(format!(
            "advection Courant numbers ({cx}, {cy}) exceed 1"
        )));
    }
    let closed = cfg.boundary == LateralBoundary::Closed;
    let n = cfg.state_dim();
    let mut trips = Vec::with_capacity(7 * n);
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let row = cfg.index(i, j, k);
                let x = cfg.cell_center(i, j, k)[0];
                let (ky, kz) = eddy_diffusivity(x, cfg);
                let dyc = ky * cfg.dt / (dy * dy);
                let dzc = kz * cfg.dt / (dz * dz);
                let mut diag = 1.0 - cx - cy;
                // upwind neighbours; inflow ghosts are zero
                if ux >= 0.0 && i > 0 {
                    trips.push((row, cfg.index(i - 1, j, k), cx));
                } else if ux < 0.0 && i + 1 < nx {
                    trips.push((row, cfg.index(i + 1, j, k), cx));
                }
                if uy >= 0.0 && j > 0 {
                    trips.push((row, cfg.index(i, j - 1, k), cy));
                } else if uy < 0.0 && j + 1 < ny {
                    trips.push((row, cfg.index(i, j + 1, k), cy));
                }
                for (nb, ok) in [(j.wrapping_sub(1), j > 0), (j + 1, j + 1 < ny)] {
                    if ok {
                        trips.push((row, cfg.index(i, nb, k), dyc));
                        diag -= dyc;
                    } else if !closed {
                        diag -= dyc;
                    }
                }
                // the ground face is always zero-flux
                if k > 0 {
                    trips.push((row, cfg.index(i, j, k - 1), dzc));
                    diag -= dzc;
                }
                if k + 1 < nz {
                    trips.push((row, cfg.index(i, j, k + 1), dzc));
                    diag -= dzc;
                } else if !closed {
                    diag -= dzc;
                }
                if diag < 0.0 {
                    return Err(Error::Stability(format!(
                        "negative diagonal {diag:.3e} at cell ({i}, {j}, {k}); reduce dt"
                    )));
                }
                trips.push((row, row, diag));
            }
        }
    }
    let a = Operator::from_triplets(n, &trips)?;
    let inject = cfg.dt / (dx * dy * dz);
    let cells = cfg.source_cells()?;
    let mut b = Mat::zeros(n, cells.len());
    for (s, &c) in cells.iter().enumerate() {
        b[(c, s)] = inject;
    }
    StateSpaceSystem::new(a, InputMap::dense(b), OutputMap::unit(n, cfg.output_nodes()?))
}

/// Explicit stepping of the 1-D heat stencil needs `alpha dt / dx^2 <= 1/2`.
pub fn max_stable_explicit_dt(cfg: &HeatConfig) -> f64 {
    0.5 * cfg.spacing() * cfg.spacing() / cfg.diffusivity
}
