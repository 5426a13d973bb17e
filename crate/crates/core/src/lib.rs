//! AC optimal power flow as polynomial optimization: network data, the
//! polynomial formulation, moment relaxations and solution certification.

pub mod certify;
pub mod formulation;
pub mod moments;
pub mod netmodel;

pub use certify::{
    certify, certify_point, extract_point, to_opf_solution, Certificate, MomentSolution, OpfSolution,
    Verdict,
};
pub use formulation::{
    build_complex_opf, build_poly_opf, build_poly_opf_with, realify, ComplexToRealMaps,
    HermitianFormSet, PolyOptions, PolyProblem, SparsePolynomial,
};
pub use moments::{
    build_opf_rank_relaxation, build_rank_relaxation, build_relaxation, multi_index_set,
    point_moments, LiftedQuadraticSdp, MomentSdp, MultiIndexSet,
};
pub use netmodel::{
    build_admittance, parse_case, AdmittanceMatrix, Branch, Bus, CMatrix, Generator, NetworkCase,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CaseError {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: reference to missing bus {bus}")]
    MissingBus { line: usize, bus: usize },
    #[error("line {line}: duplicate bus id {bus}")]
    DuplicateBus { line: usize, bus: usize },
    #[error("line {line}: more than one generator at bus {bus}")]
    DuplicateGenerator { line: usize, bus: usize },
    #[error("line {line}: transformer ratio must be nonzero")]
    ZeroRatio { line: usize },
    #[error("line {line}: {msg}")]
    Invalid { line: usize, msg: String },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormulationError {
    #[error("reference bus {bus} has negative minimum voltage {v_min}")]
    NegativeReferenceVoltage { bus: usize, v_min: f64 },
    #[error("relaxation order {d} is below half-degree {v} of {what}")]
    OrderTooSmall { d: usize, v: usize, what: String },
    #[error("not a quadratic problem: {0}")]
    NotQuadratic(String),
}
