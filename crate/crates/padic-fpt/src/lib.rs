//! Numerics for the first passage problem of the p-adic Vladimirov jump
//! process: Laplace-domain transforms, the eigenvalue/residue ladder of the
//! passage-time density, Volterra-equation solvers for hitting counts,
//! log-periodic large-time asymptotics, and an exact Monte Carlo simulation
//! of the ball-projected distance chain.
//!
//! The process lives on the field of p-adic numbers and is generated by the
//! Vladimirov operator with jump kernel |x-y|^(-alpha-1). The target is a
//! ball of radius p^r centered at a point of norm p^nu; the initial law is
//! uniform on the unit ball. All module-level quantities are parameterized
//! by the quadruple (p, alpha, r, nu), see [`padic::ModelParams`].

pub mod asymptotics;
pub mod hitting;
pub mod montecarlo;
pub mod padic;
pub mod spectrum;
pub mod transforms;

pub use padic::ModelParams;
