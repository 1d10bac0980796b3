//! Discrete active inference: a structured variational scheme with a learned
//! precision over policies, a fully factorised message-passing scheme, an
//! exact enumeration oracle, simulated environments and an agent loop.
//!
//! Matrices are column-stochastic: `a[[o, s]] = P(o | s)` and
//! `b[u][[s_next, s_prev]] = P(s_next | s_prev, u)`.

pub mod agent;
pub mod efe;
pub mod env;
pub mod error;
pub mod exp_family;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod structured;
pub mod vmp;

pub use error::{Error, Result};
pub use exp_family::{DirichletBlock, OneHot, ProbVector};
pub use model::{Frozen, GenerativeModel, ModelDims, ParamBlock, PolicySet};
