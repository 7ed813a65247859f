//! Balanced POD and randomized-snapshot balanced POD (RPOD*) for discrete-time
//! linear systems, with the heat and atmospheric-dispersion benchmark models.

pub mod discretize;
pub mod error;
pub mod eval;
pub mod io;
mod la;
pub mod linsys;
pub mod rom;
pub mod snapshots;
pub mod synthetic;

pub use error::{Error, ErrorClass, Result};
pub use linsys::{InputMap, Operator, OutputMap, StateSpaceSystem};

/// Sets the thread count used by the dense kernels. `1` gives bit-reproducible runs.
pub fn set_threads(threads: usize) {
    let par = if threads <= 1 {
        faer::Par::Seq
    } else {
        faer::Par::rayon(threads)
    };
    faer::set_global_parallelism(par);
}
