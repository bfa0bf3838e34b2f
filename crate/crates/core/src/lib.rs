//! Planar N-body dynamics with McGehee blow-up of total collision.
//!
//! The crate evaluates the Newtonian and blown-up vector fields in the mass
//! metric, finds and certifies central configurations together with their
//! blown-up equilibria, generates the homographic (Kepler) families and
//! their rest-cycle curves, integrates all three flows with a shared
//! adaptive Runge-Kutta engine with dense output and event location, and,
//! for three bodies, reduces states to the shape sphere to extract syzygy
//! sequences and the concrete connection graph.
//!
//! Module map:
//! * [`newton`] - mass metric, potential, energies, the Newtonian field
//! * [`blowup`] - the (r, s, y) change of variables and its vector field
//! * [`central`] - central configurations and blown-up equilibria
//! * [`homographic`] - complex Kepler problem and family curves
//! * [`ode`] - Dormand-Prince 5(4) engine, dense output, events
//! * [`flows`] - the concrete fields packed for the engine
//! * [`shape`] - Jacobi coordinates, shape sphere, syzygies, graph
//! * [`config`], [`output`], [`cli`] - run configuration and artifacts
//! * [`verify`] - the self-check battery behind `nbody-blowup check`

mod algebra;

pub mod blowup;
pub mod central;
pub mod cli;
pub mod config;
pub mod error;
pub mod flows;
pub mod homographic;
pub mod newton;
pub mod ode;
pub mod output;
pub mod shape;
pub mod verify;

pub use algebra::C64;
pub use error::{Error, Result};
