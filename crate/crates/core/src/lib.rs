//! Periodic orbit families on stable energy surfaces.
//!
//! ```
//! use orbitcyl::{orbit::{find_periodic, reeb_normalize, OrbitOptions}, systems};
//!
//! let (sys, ss) = systems::sphere(2, 0.5);
//! let opts = OrbitOptions::default();
//! let h = find_periodic(&sys, &ss, &[1.0, 0.0, 0.0, 0.0], 6.0, 0.0, &opts)?;
//! let r = reeb_normalize(&h, &sys, &ss, &opts)?;
//! assert!((r.tau - std::f64::consts::PI).abs() < 1e-7);
//! # Ok::<(), orbitcyl::Error>(())
//! ```

pub mod action;
pub mod continuation;
pub mod error;
pub mod exec;
pub mod expr;
pub mod flow;
pub mod limit_set;
pub mod loops;
pub mod mane;
pub mod orbit;
pub mod smooth;
pub mod symplectic;
pub mod systems;

pub use error::{Error, Result};
pub use exec::Execution;
pub use nalgebra;
