//! Matrix Market exchange and the TOML manifests that bind matrices into
//! systems, reduced models and snapshot ensembles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linsys::{Coupling, InputMap, Operator, OutputMap, StateSpaceSystem};
use crate::rom::{Method, Provenance, ReducedOrderModel, RomMatrices};
use crate::snapshots::{EnsembleKind, SnapshotEnsemble};

/// 17 significant digits, enough to round-trip any f64.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

/// A matrix as read from a Matrix Market file.
#[derive(Clone, Debug, PartialEq)]
pub enum MmMatrix {
    Coordinate {
        rows: usize,
        cols: usize,
        entries: Vec<(usize, usize, f64)>,
    },
    Array(Mat<f64>),
}

impl MmMatrix {
    pub fn shape(&self) -> (usize, usize) {
        match self {
            MmMatrix::Coordinate { rows, cols, .. } => (*rows, *cols),
            MmMatrix::Array(m) => (m.nrows(), m.ncols()),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            MmMatrix::Coordinate { rows, cols, entries } => {
                let mut m = Mat::zeros(*rows, *cols);
                for &(i, j, v) in entries {
                    m[(i, j)] += v;
                }
                m
            }
            MmMatrix::Array(m) => m.clone(),
        }
    }
}

pub fn write_coordinate(path: &Path, rows: usize, cols: usize, entries: &[(usize, usize, f64)]) -> Result<()> {
    let mut s = String::with_capacity(32 * entries.len() + 64);
    s.push_str("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(s, "{rows} {cols} {}", entries.len());
    for &(i, j, v) in entries {
        let _ = writeln!(s, "{} {} {}", i + 1, j + 1, fmt17(v));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn write_array(path: &Path, m: &Mat<f64>) -> Result<()> {
    let mut s = String::with_capacity(25 * m.nrows() * m.ncols() + 64);
    s.push_str("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{} {}", m.nrows(), m.ncols());
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let _ = writeln!(s, "{}", fmt17(m[(i, j)]));
        }
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_matrix_market(path: &Path) -> Result<MmMatrix> {
    let text = fs::read_to_string(path)?;
    parse_matrix_market(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_matrix_market(text: &str) -> Result<MmMatrix> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty Matrix Market file".into()))?;
    let fields: Vec<String> = header.split_whitespace().map(|f| f.to_ascii_lowercase()).collect();
    if fields.len() < 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(Error::Parse(format!("bad Matrix Market header '{header}'")));
    }
    let format = fields[2].as_str();
    if fields[3] != "real" && fields[3] != "integer" {
        return Err(Error::Parse(format!("unsupported field type '{}'", fields[3])));
    }
    let symmetry = fields[4].as_str();
    if symmetry != "general" && symmetry != "symmetric" {
        return Err(Error::Parse(format!("unsupported symmetry '{symmetry}'")));
    }
    let mut body = lines.filter(|l| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let size_line = body.next().ok_or_else(|| Error::Parse("missing size line".into()))?;
    let sizes = parse_numbers::<usize>(size_line)?;
    let num = |tok: &str| -> Result<f64> {
        tok.parse::<f64>()
            .map_err(|_| Error::Parse(format!("bad number '{tok}'")))
    };
    match format {
        "coordinate" => {
            if sizes.len() != 3 {
                return Err(Error::Parse("coordinate size line needs rows cols nnz".into()));
            }
            let (rows, cols, nnz) = (sizes[0], sizes[1], sizes[2]);
            let mut entries = Vec::with_capacity(nnz);
            for line in body {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() < 3 {
                    return Err(Error::Parse(format!("bad entry line '{line}'")));
                }
                let i: usize = toks[0]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad row '{}'", toks[0])))?;
                let j: usize = toks[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad column '{}'", toks[1])))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(Error::Parse(format!("entry ({i}, {j}) outside {rows}x{cols}")));
                }
                let v = num(toks[2])?;
                entries.push((i - 1, j - 1, v));
                if symmetry == "symmetric" && i != j {
                    entries.push((j - 1, i - 1, v));
                }
            }
            let expected = if symmetry == "symmetric" { entries.len() } else { nnz };
            if entries.len() != expected {
                return Err(Error::Parse(format!("expected {nnz} entries, found {}", entries.len())));
            }
            Ok(MmMatrix::Coordinate { rows, cols, entries })
        }
        "array" => {
            if sizes.len() != 2 {
                return Err(Error::Parse("array size line needs rows cols".into()));
            }
            let (rows, cols) = (sizes[0], sizes[1]);
            let vals = body
                .flat_map(|l| l.split_whitespace())
                .map(num)
                .collect::<Result<Vec<f64>>>()?;
            let mut m = Mat::zeros(rows, cols);
            if symmetry == "symmetric" {
                let mut it = vals.iter();
                for j in 0..cols {
                    for i in j..rows {
                        let v = *it.next().ok_or_else(|| Error::Parse("too few array values".into()))?;
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            } else {
                if vals.len() != rows * cols {
                    return Err(Error::Parse(format!(
                        "expected {} array values, found {}",
                        rows * cols,
                        vals.len()
                    )));
                }
                for j in 0..cols {
                    for i in 0..rows {
                        m[(i, j)] = vals[j * rows + i];
                    }
                }
            }
            Ok(MmMatrix::Array(m))
        }
        other => Err(Error::Parse(format!("unsupported format '{other}'"))),
    }
}

fn parse_numbers<T: std::str::FromStr>(line: &str) -> Result<Vec<T>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<T>()
                .map_err(|_| Error::Parse(format!("bad size token '{t}'")))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemManifest {
    pub n: usize,
    pub p: usize,
    pub q: usize,
    pub dt: f64,
    pub description: String,
    pub a: String,
    pub b: String,
    pub c: String,
}

fn write_operator(path: &Path, a: &Operator) -> Result<()> {
    match a {
        Operator::Sparse(_) => write_coordinate(path, a.dim(), a.dim(), &a.triplets()),
        Operator::Dense(m) => write_array(path, m),
    }
}

fn unit_entries(nodes: &[usize], transpose: bool) -> Vec<(usize, usize, f64)> {
    nodes
        .iter()
        .enumerate()
        .map(|(k, &n)| if transpose { (k, n, 1.0) } else { (n, k, 1.0) })
        .collect()
}

/// Writes `A.mtx`, `B.mtx`, `C.mtx` and `system.toml` into `dir`.
pub fn write_system(dir: &Path, sys: &StateSpaceSystem, dt: f64, description: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_operator(&dir.join("A.mtx"), sys.a())?;
    match &sys.b().0 {
        Coupling::Dense(b) => write_array(&dir.join("B.mtx"), b)?,
        Coupling::Unit { state_dim, nodes } => {
            write_coordinate(&dir.join("B.mtx"), *state_dim, nodes.len(), &unit_entries(nodes, false))?
        }
    }
    match &sys.c().0 {
        Coupling::Dense(c) => write_array(&dir.join("C.mtx"), c)?,
        Coupling::Unit { state_dim, nodes } => {
            write_coordinate(&dir.join("C.mtx"), nodes.len(), *state_dim, &unit_entries(nodes, true))?
        }
    }
    let manifest = SystemManifest {
        n: sys.n(),
        p: sys.p(),
        q: sys.q(),
        dt,
        description: description.to_string(),
        a: "A.mtx".into(),
        b: "B.mtx".into(),
        c: "C.mtx".into(),
    };
    let path = dir.join("system.toml");
    fs::write(&path, to_toml(&manifest)?)?;
    Ok(path)
}

pub fn to_toml<T: Serialize>(v: &T) -> Result<String> {
    toml::to_string(v).map_err(|e| Error::Parse(format!("toml encoding: {e}")))
}

pub fn from_toml<T: for<'de> Deserialize<'de>>(text: &str, what: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(format!("{what}: {}", e.message())))
}

/// One unit entry per row (or column when `by_column`) maps back to node selection.
fn as_unit(mm: &MmMatrix, by_column: bool) -> Option<Vec<usize>> {
    let MmMatrix::Coordinate { rows, cols, entries } = mm else {
        return None;
    };
    let count = if by_column { *cols } else { *rows };
    let mut nodes = vec![usize::MAX; count];
    for &(i, j, v) in entries {
        let (slot, node) = if by_column { (j, i) } else { (i, j) };
        if v != 1.0 || nodes[slot] != usize::MAX {
            return None;
        }
        nodes[slot] = node;
    }
    nodes.iter().all(|&n| n != usize::MAX).then_some(nodes)
}

pub fn read_system(manifest_path: &Path) -> Result<(StateSpaceSystem, SystemManifest)> {
    let text = fs::read_to_string(manifest_path)?;
    let manifest: SystemManifest = from_toml(&text, "system manifest")?;
    let dir = manifest_path.parent().unwrap_or(Path::new("."));
    let a_mm = read_matrix_market(&dir.join(&manifest.a))?;
    let (ar, ac) = a_mm.shape();
    if ar != ac || ar != manifest.n {
        return Err(Error::Dimension(format!(
            "A is {ar}x{ac}, manifest says N = {}",
            manifest.n
        )));
    }
    let a = match a_mm {
        MmMatrix::Coordinate { rows, entries, .. } => Operator::from_triplets(rows, &entries)?,
        MmMatrix::Array(m) => Operator::Dense(m),
    };
    let b_mm = read_matrix_market(&dir.join(&manifest.b))?;
    let b = match as_unit(&b_mm, true) {
        Some(nodes) => InputMap::unit(b_mm.shape().0, nodes),
        None => InputMap::dense(b_mm.to_dense()),
    };
    let c_mm = read_matrix_market(&dir.join(&manifest.c))?;
    let c = match as_unit(&c_mm, false) {
        Some(nodes) => OutputMap::unit(c_mm.shape().1, nodes),
        None => OutputMap::dense(c_mm.to_dense()),
    };
    let sys = StateSpaceSystem::new(a, b, c)?;
    if sys.p() != manifest.p || sys.q() != manifest.q {
        return Err(Error::Dimension(format!(
            "system has p = {}, q = {}; manifest says p = {}, q = {}",
            sys.p(),
            sys.q(),
            manifest.p,
            manifest.q
        )));
    }
    Ok((sys, manifest))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RomManifest {
    pub method: Method,
    pub order: usize,
    /// `real` or `modal-block` (conjugate pairs as 2x2 rotation blocks).
    pub form: String,
    pub eigenvalues_re: Vec<f64>,
    pub eigenvalues_im: Vec<f64>,
    pub provenance: Provenance,
    pub a: String,
    pub b: String,
    pub c: String,
}

/// Writes the real realization of `rom` plus `rom.toml` into `dir`.
pub fn write_rom(dir: &Path, rom: &ReducedOrderModel) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let (a, b, c) = rom.to_real_form();
    write_array(&dir.join("A.mtx"), &a)?;
    write_array(&dir.join("B.mtx"), &b)?;
    write_array(&dir.join("C.mtx"), &c)?;
    let ev = rom.eigenvalues()?;
    let manifest = RomManifest {
        method: rom.method,
        order: rom.order(),
        form: match rom.matrices {
            RomMatrices::Real { .. } => "real".into(),
            RomMatrices::Modal { .. } => "modal-block".into(),
        },
        eigenvalues_re: ev.iter().map(|l| l.re).collect(),
        eigenvalues_im: ev.iter().map(|l| l.im).collect(),
        provenance: rom.provenance.clone(),
        a: "A.mtx".into(),
        b: "B.mtx".into(),
        c: "C.mtx".into(),
    };
    let path = dir.join("rom.toml");
    fs::write(&path, to_toml(&manifest)?)?;
    Ok(path)
}

/// Loads a reduced model written by [`write_rom`] (always in real form).
pub fn read_rom(dir: &Path) -> Result<(ReducedOrderModel, RomManifest)> {
    let text = fs::read_to_string(dir.join("rom.toml"))?;
    let manifest: RomManifest = from_toml(&text, "reduced-model manifest")?;
    let a = read_matrix_market(&dir.join(&manifest.a))?.to_dense();
    let b = read_matrix_market(&dir.join(&manifest.b))?.to_dense();
    let c = read_matrix_market(&dir.join(&manifest.c))?.to_dense();
    let mut rom = ReducedOrderModel::real(manifest.method, a, b, c)?;
    rom.provenance = manifest.provenance.clone();
    Ok((rom, manifest))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub source: crate::snapshots::SnapshotSource,
    pub kind: String,
    pub times: Vec<usize>,
    pub initial_conditions: usize,
    pub seed: Option<u64>,
    pub stream: Option<u64>,
    pub columns: String,
}

pub fn write_ensemble(dir: &Path, name: &str, e: &SnapshotEnsemble) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let file = format!("{name}.mtx");
    write_array(&dir.join(&file), &e.columns)?;
    let manifest = match &e.kind {
        EnsembleKind::Impulse {
            times,
            initial_conditions,
        } => EnsembleManifest {
            source: e.source,
            kind: "impulse".into(),
            times: times.clone(),
            initial_conditions: *initial_conditions,
            seed: None,
            stream: None,
            columns: file,
        },
        EnsembleKind::Noise(spec) => EnsembleManifest {
            source: e.source,
            kind: "noise".into(),
            times: (1..=spec.count).map(|k| k * spec.spacing).collect(),
            initial_conditions: 0,
            seed: Some(spec.seed),
            stream: Some(spec.stream),
            columns: file,
        },
    };
    let path = dir.join(format!("{name}.toml"));
    fs::write(&path, to_toml(&manifest)?)?;
    Ok(path)
}
