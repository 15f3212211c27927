//! Simulator and verification harness for inverse mean curvature flow of
//! graphical hypersurfaces over horospheres in the upper half-space model of
//! hyperbolic space.
//!
//! The height field y(x) > 0 over a periodic torus evolves by
//! dy/dt = -y v^2 / (dim + y delta_tilde^{ij} y_ij), the graphical form of
//! flowing with normal speed 1/H. Alongside the solver, the crate checks the
//! a-priori structure of the flow at runtime: barrier envelopes, comparison
//! solutions, monotone-quantity inequalities, and exponential decay rates of
//! the roundness monitors.

pub mod certificates;
pub mod config;
pub mod decay;
pub mod error;
pub mod flow;
pub mod geometry;
pub mod grid;
pub mod initial;
pub mod io;

pub use error::{Error, Result};
pub use grid::{Grid, GraphState};
