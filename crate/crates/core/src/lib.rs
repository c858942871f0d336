//! Numerical laboratory for local boundedness of weak solutions to
//! parabolic equations with unbalanced (p,q)-growth and degenerate or
//! unbounded coefficients.

pub mod degiorgi;
pub mod exponents;
pub mod grid;
pub mod harness;
pub mod lemmas;
pub mod model;
pub mod solver;
