//! Maxwell-Stefan multicomponent diffusion on a 1D interval.
//!
//! The crate integrates
//!
//! ```text
//! ∂t c_i + ∂x J_i = 0,   J_i = √c_i m_i,   −Σ_j A_ij(c) m_j = 2 ∂x √c_i,   Σ_i √c_i m_i = 0
//! ```
//!
//! with a conservative finite-volume scheme and no-flux boundaries, inverts the
//! singular friction matrix `A(c)` on the constraint space with a Bott-Duffin
//! inverse (cross-checked against an SVD pseudoinverse), and tracks the entropy
//! balance `H(c(t)) + ∫₀ᵗ D dτ − H(c⁰)` whose vanishing expresses the absence
//! of anomalous dissipation.
//!
//! Module map:
//!
//! * [`mixture`] – grid, states on the probability simplex, face reconstructions.
//! * [`friction`] – friction matrix, constrained solves, face fluxes, dissipation density.
//! * [`solver`] – scenarios, initial data, explicit time stepping, trajectories.
//! * [`entropy`] – entropy functional, dissipation, flux pairing, anomalous residual.
//! * [`weak_form`] – weak-formulation audits, time cut-off and mollification utilities.
//! * [`cli`] – scenario files, runs, refinement studies, fuzz suite, CSV/JSON output.

pub mod cli;
mod dense;
pub mod entropy;
mod error;
pub mod friction;
pub mod mixture;
pub mod solver;
pub mod weak_form;

pub use error::{Error, Result};

pub use entropy::{
    anomalous_residual, dissipation_rate, dissipation_rate_velocity_form, entropy, flux_pairing,
    EntropyReport,
};
pub use friction::{
    assemble_friction_matrix, bott_duffin_solve, dissipation_density, flux_from_state,
    moore_penrose_solve, BottDuffinSolution, FluxSolution, FrictionMatrix,
};
pub use mixture::{
    face_grad_sqrt, face_values, project_to_simplex, validate_state, BinaryDiffusivities, Grid1D,
    MixtureState, RowTable, SimplexDiagnostics,
};
pub use solver::{
    initial_state, simulate, simulate_observed, stable_dt, step, InitialPreset, Integrator,
    Scenario, Snapshot, StepView, Trajectory,
};
pub use weak_form::{
    audit_definition, eta_sigma, mol_commutation_check, mollify_time, renormalized_residual,
    weak_residual, AuditReport, Renormalization, TestFunction,
};
