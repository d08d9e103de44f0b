//! Hetero-functional graph theory toolkit.
//!
//! System models become incidence tensors and Petri-net state transition
//! functions; time-expanded network minimum cost flow programs are
//! assembled over them and solved either by KKT/active-set methods or by
//! forward propagation. A separate stock-flow engine serves as a
//! cross-check, and [`monolake`] ties the pieces together on a lake and
//! aquifer water balance.

pub mod compare;
pub mod engine;
pub mod expr;
pub mod hfnmcf;
pub mod incidence;
pub mod io;
pub mod markov;
pub mod model;
pub mod monolake;
pub mod nets;
pub mod plot;
pub mod qp;
pub mod sd;
pub mod series;
pub mod sparse;
pub mod trajectory;

pub use nalgebra;
