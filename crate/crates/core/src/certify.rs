//! Candidate extraction from a moment vector and the global-optimality test.

use num_complex::Complex64;
use serde::Serialize;

use crate::formulation::{x_to_voltages, PolyProblem};
use crate::moments::MomentSdp;
use crate::netmodel::{build_admittance, NetworkCase};

pub const FEAS_TOL: f64 = 1e-6;
pub const CERT_TOL: f64 = 1e-6;
/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    CertifiedGlobal,
    FeasibleNotCertified,
    ExtractionFailed,
    InfeasibleProblem,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::CertifiedGlobal => "certified-global",
            Verdict::FeasibleNotCertified => "feasible-not-certified",
            Verdict::ExtractionFailed => "extraction-failed",
            Verdict::InfeasibleProblem => "infeasible-problem",
        })
    }
}

#[derive(Clone, Debug)]
pub struct MomentSolution {
    pub d: usize,
    pub y: Vec<f64>,
    pub relax_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Certificate {
    pub candidate_x: Vec<f64>,
    pub candidate_value: f64,
    pub relax_value: f64,
    pub gap: f64,
    pub max_violation: f64,
    pub verdict: Verdict,
    pub moment_matrix_rank: usize,
}

impl Certificate {
    pub fn infeasible(relax_value: f64) -> Self {
        Self {
            candidate_x: Vec::new(),
            candidate_value: f64::NAN,
            relax_value,
            gap: f64::NAN,
            max_violation: f64::NAN,
            verdict: Verdict::InfeasibleProblem,
            moment_matrix_rank: 0,
        }
    }
}

/// First-order moments and the numerical rank of the moment matrix.
pub fn extract_point(sdp: &MomentSdp, sol: &MomentSolution) -> (Vec<f64>, usize) {
    let p = sdp.basis.nvars();
    let x = (0..p).map(|i| sol.y[sdp.basis.unit(i)]).collect();
    (x, numerical_rank(&sdp.moment_matrix(&sol.y)))
}

pub fn numerical_rank(m: &polyopf_sdp::Mat<f64>) -> usize {
    let ev = m.symmetric_eigenvalues();
    let top = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(top > 0.0) {
        return 0;
    }
    ev.iter().filter(|v| v.abs() > RANK_TOL * top).count()
}

pub fn certify(
    prob: &PolyProblem,
    sdp: &MomentSdp,
    sol: &MomentSolution,
    feas_tol: f64,
    cert_tol: f64,
) -> Certificate {
    let (x, rank) = extract_point(sdp, sol);
    certify_point(prob, x, rank, sol.relax_value, feas_tol, cert_tol)
}

/// The same test for an externally supplied candidate.
pub fn certify_point(
    prob: &PolyProblem,
    x: Vec<f64>,
    rank: usize,
    relax_value: f64,
    feas_tol: f64,
    cert_tol: f64,
) -> Certificate {
    let value = prob.objective.eval(&x);
    let violation = prob.max_violation(&x);
    let gap = value - relax_value;
    let verdict = if !value.is_finite() || !violation.is_finite() || violation > feas_tol {
        Verdict::ExtractionFailed
    } else if gap <= cert_tol * (1.0 + relax_value.abs()) {
        Verdict::CertifiedGlobal
    } else {
        Verdict::FeasibleNotCertified
    };
    Certificate {
        candidate_x: x,
        candidate_value: value,
        relax_value,
        gap,
        max_violation: violation,
        verdict,
        moment_matrix_rank: rank,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct OpfSolution {
    /// p.u., serialized as `[re, im]`
    pub voltages: Vec<Complex64>,
    /// MW, one per generator in case order
    pub p_gen: Vec<f64>,
    /// MVAr
    pub q_gen: Vec<f64>,
    /// $/h
    pub objective: f64,
}

/// Voltages from `x = [Re v; Im v]` (with `Im v_n` omitted when the phase
/// is fixed) and the generation that balances them.
pub fn to_opf_solution(x: &[f64], case: &NetworkCase) -> OpfSolution {
    let n = case.n();
    let v = x_to_voltages(x, n);
    let i = build_admittance(case).entries.mul_vec(&v);
    let mut p_gen = Vec::new();
    let mut q_gen = Vec::new();
    let mut objective = 0.0;
    for g in &case.generators {
        let k = case.bus_index(g.bus).expect("validated case");
        let s = v[k] * i[k].conj() * case.base_mva;
        let pg = s.re + case.buses[k].p_dem;
        let qg = s.im + case.buses[k].q_dem;
        objective += g.c2 * pg * pg + g.c1 * pg + g.c0;
        p_gen.push(pg);
        q_gen.push(qg);
    }
    OpfSolution {
        voltages: v,
        p_gen,
        q_gen,
        objective,
    }
}
