//! Exact linear programs for optimal signaling, their duals, and explicit
//! dual certificates.

pub mod certificate;
pub mod model;
pub mod programs;
pub mod simplex;

pub use certificate::{
    build_certificate, certificate_point, certificate_value, construct_index_set, index_set_for_labels,
    verify_dual_certificate, Certificate, CertificateReport, Violation,
};
pub use model::{LpModel, Relation, Row, Sense, VarBound, Variable};
pub use programs::{
    build_dual_lp, build_full_lp, build_relaxed_lp, build_self_aware_lp, expected_fb_c_classes, solve_program,
    CanonicalProgram, Layout, ParetoOptions, ProgramKind, ProgramSolution,
};
pub use simplex::{dual_feasible, dual_objective, solve, LpSolution, Scalar, SolveOptions};
