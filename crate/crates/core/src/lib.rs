//! Ground states of the penalized semiclassical Schrödinger equation
//! `−ℏ²Δu + V(x)u = Γ(x)f(u)` on uniform grids, together with the
//! diagnostics used to study their concentration as `ℏ → 0`.

pub mod grid;
pub mod model;
pub mod functional;
pub mod solver;
pub mod semiclassical;
pub mod cli;
