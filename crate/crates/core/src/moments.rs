//! Moment relaxations of a polynomial problem and Shor-type rank relaxations.

use std::collections::HashMap;

use polyopf_sdp::{write_sdpa, LmiBlock, Mat, SdpError, SdpInstance};

use crate::formulation::{build_complex_opf, realify, PolyProblem, SparsePolynomial};
use crate::netmodel::NetworkCase;
use crate::FormulationError;

/// Exponent vectors of total degree at most `q`, ordered by degree and,
/// within a degree, by descending lexicographic order (`x_1` first).
#[derive(Clone, Debug, PartialEq)]
pub struct MultiIndexSet {
    p: usize,
    q: usize,
    members: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

impl MultiIndexSet {
    pub fn nvars(&self) -> usize {
        self.p
    }

    pub fn max_degree(&self) -> usize {
        self.q
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn members(&self) -> &[Vec<u32>] {
        &self.members
    }

    pub fn position(&self, alpha: &[u32]) -> Option<usize> {
        self.index.get(alpha).copied()
    }

    /// Number of members of degree at most `q`, a prefix of the ordering.
    pub fn prefix_len(&self, q: usize) -> usize {
        binomial(self.p + q, q)
    }

    /// Index of the monomial `x_i`.
    pub fn unit(&self, i: usize) -> usize {
        1 + i
    }
}

pub fn binomial(n: usize, k: usize) -> usize {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

pub fn multi_index_set(p: usize, q: usize) -> MultiIndexSet {
    fn fill(rest: usize, deg: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if rest == 1 {
            cur.push(deg);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for first in (0..=deg).rev() {
            cur.push(first);
            fill(rest - 1, deg - first, cur, out);
            cur.pop();
        }
    }
    assert!(p >= 1, "need at least one variable");
    let mut members = Vec::with_capacity(binomial(p + q, q));
    for deg in 0..=q as u32 {
        fill(p, deg, &mut Vec::with_capacity(p), &mut members);
    }
    let index = members.iter().enumerate().map(|(i, a)| (a.clone(), i)).collect();
    MultiIndexSet { p, q, members, index }
}

/// Moment vector of the Dirac measure at `x`.
pub fn point_moments(basis: &MultiIndexSet, x: &[f64]) -> Vec<f64> {
    basis
        .members()
        .iter()
        .map(|a| a.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product())
        .collect()
}

/// Symmetric matrix whose entries are linear in the moment vector, stored
/// as upper-triangle `(row, col, moment index, coefficient)` quadruples.
#[derive(Clone, Debug)]
pub struct MomentBlock {
    pub label: String,
    pub size: usize,
    pub entries: Vec<(usize, usize, usize, f64)>,
}

impl MomentBlock {
    pub fn value(&self, y: &[f64]) -> Mat<f64> {
        let mut m = Mat::zeros(self.size, self.size);
        for &(i, j, a, c) in &self.entries {
            m[(i, j)] += c * y[a];
            if i != j {
                m[(j, i)] += c * y[a];
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct MomentSdp {
    pub d: usize,
    /// indexes the moment vector, degree up to `2d`
    pub basis: MultiIndexSet,
    pub objective: Vec<(usize, f64)>,
    /// moment matrix first, then one localizing block per constraint
    pub blocks: Vec<MomentBlock>,
    /// position of `y_0`, fixed to 1
    pub normalization: usize,
}

impl MomentSdp {
    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().map(|&(a, c)| c * y[a]).sum()
    }

    pub fn moment_matrix(&self, y: &[f64]) -> Mat<f64> {
        self.blocks[0].value(y)
    }

    /// LMI form with `y_0` substituted by 1; variable `k` is `y_{k+1}`.
    pub fn to_sdp(&self) -> SdpInstance {
        debug_assert_eq!(self.normalization, 0);
        let mut inst = SdpInstance::new(self.basis.len() - 1);
        for &(a, c) in &self.objective {
            if a == 0 {
                inst.set_objective_constant(c);
            } else {
                inst.add_objective(a - 1, c);
            }
        }
        for b in &self.blocks {
            let mut blk = LmiBlock::new(b.size);
            for &(i, j, a, c) in &b.entries {
                blk.add(a.checked_sub(1), i, j, c);
            }
            inst.add_block(blk);
        }
        inst
    }

    /// Full moment vector from an LMI solution.
    pub fn moments_from(&self, z: &[f64]) -> Vec<f64> {
        std::iter::once(1.0).chain(z.iter().copied()).collect()
    }

    pub fn to_sdpa(&self) -> Result<String, SdpError> {
        write_sdpa(
            &self.to_sdp(),
            &format!(
                "moment relaxation order {}, {} variables, {} moments",
                self.d,
                self.basis.nvars(),
                self.basis.len()
            ),
        )
    }
}

fn localizing(
    basis: &MultiIndexSet,
    f: &SparsePolynomial,
    k: usize,
    label: String,
) -> MomentBlock {
    let size = basis.prefix_len(k);
    let mem = basis.members();
    let mut entries = Vec::new();
    let mut sum = vec![0u32; basis.nvars()];
    for i in 0..size {
        for j in i..size {
            for (g, c) in f.terms() {
                for t in 0..sum.len() {
                    sum[t] = mem[i][t] + mem[j][t] + g[t];
                }
                let a = basis.position(&sum).expect("moment index within degree 2d");
                entries.push((i, j, a, c));
            }
        }
    }
    MomentBlock { label, size, entries }
}

pub fn build_relaxation(prob: &PolyProblem, d: usize) -> Result<MomentSdp, FormulationError> {
    let v0 = prob.objective.half_degree();
    if v0 > d {
        return Err(FormulationError::OrderTooSmall {
            d,
            v: v0,
            what: "objective".into(),
        });
    }
    for (f, l) in prob.constraints.iter().zip(&prob.labels) {
        let v = f.half_degree().max(1);
        if v > d {
            return Err(FormulationError::OrderTooSmall {
                d,
                v,
                what: format!("constraint '{l}'"),
            });
        }
    }
    let basis = multi_index_set(prob.nvars, 2 * d);
    let objective = prob
        .objective
        .terms()
        .map(|(a, c)| (basis.position(a).expect("objective degree"), c))
        .collect();
    let one = SparsePolynomial::constant(prob.nvars, 1.0);
    let mut blocks = vec![localizing(&basis, &one, d, "moment matrix".into())];
    for (f, l) in prob.constraints.iter().zip(&prob.labels) {
        let v = f.half_degree().max(1);
        blocks.push(localizing(&basis, f, d - v, l.clone()));
    }
    Ok(MomentSdp {
        d,
        basis,
        objective,
        blocks,
        normalization: 0,
    })
}

/// `min tr(A_0 Y) + c_0` over `Y` PSD subject to `tr(A_i Y) + c_i >= 0`.
#[derive(Clone, Debug)]
pub struct LiftedQuadraticSdp {
    pub nx: usize,
    pub objective: Mat<f64>,
    pub objective_constant: f64,
    pub constraints: Vec<(Mat<f64>, f64)>,
    pub labels: Vec<String>,
}

/// Index of the upper-triangle entry `(i, j)` of an `n x n` symmetric matrix.
fn tri(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    i * n - i * (i + 1) / 2 + j
}

/// Coefficients of `tr(A Y)` in the upper-triangle variables of `Y`.
fn trace_coeffs(a: &Mat<f64>) -> Vec<(usize, f64)> {
    let n = a.rows();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            let c = if i == j { a[(i, i)] } else { a[(i, j)] + a[(j, i)] };
            if c != 0.0 {
                out.push((tri(n, i, j), c));
            }
        }
    }
    out
}

fn lifted_block(n: usize, offset: usize) -> LmiBlock {
    let mut blk = LmiBlock::new(n);
    for i in 0..n {
        for j in i..n {
            blk.add(Some(offset + tri(n, i, j)), i, j, 1.0);
        }
    }
    blk
}

impl LiftedQuadraticSdp {
    pub fn nvars(&self) -> usize {
        self.nx * (self.nx + 1) / 2
    }

    /// LMI form over the upper triangle of `Y`.
    pub fn to_sdp(&self) -> SdpInstance {
        let mut inst = SdpInstance::new(self.nvars());
        for (k, c) in trace_coeffs(&self.objective) {
            inst.set_objective(k, c);
        }
        inst.set_objective_constant(self.objective_constant);
        inst.add_block(lifted_block(self.nx, 0));
        for (a, c) in &self.constraints {
            let mut blk = LmiBlock::new(1);
            blk.add(None, 0, 0, *c);
            for (k, v) in trace_coeffs(a) {
                blk.add(Some(k), 0, 0, v);
            }
            inst.add_block(blk);
        }
        inst
    }

    pub fn lifted_matrix(&self, z: &[f64]) -> Mat<f64> {
        Mat::from_fn(self.nx, self.nx, |i, j| z[tri(self.nx, i, j)])
    }
}

fn quadratic_matrix(f: &SparsePolynomial, what: &str) -> Result<(Mat<f64>, f64), FormulationError> {
    let n = f.nvars();
    let mut a = Mat::zeros(n, n);
    let mut c = 0.0;
    for (alpha, v) in f.terms() {
        let nz: Vec<usize> = (0..n).filter(|&i| alpha[i] > 0).collect();
        match (alpha.iter().sum::<u32>(), nz.as_slice()) {
            (0, _) => c += v,
            (2, [i]) => a[(*i, *i)] += v,
            (2, [i, j]) => {
                a[(*i, *j)] += v / 2.0;
                a[(*j, *i)] += v / 2.0;
            }
            (deg, _) => {
                return Err(FormulationError::NotQuadratic(format!(
                    "{what} has a term of degree {deg}"
                )))
            }
        }
    }
    Ok((a, c))
}

/// Shor relaxation of a problem whose polynomials are quadratic forms plus
/// constants.
pub fn build_rank_relaxation(prob: &PolyProblem) -> Result<LiftedQuadraticSdp, FormulationError> {
    let (objective, objective_constant) = quadratic_matrix(&prob.objective, "objective")?;
    let constraints = prob
        .constraints
        .iter()
        .zip(&prob.labels)
        .map(|(f, l)| quadratic_matrix(f, &format!("constraint '{l}'")))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LiftedQuadraticSdp {
        nx: prob.nvars,
        objective,
        objective_constant,
        constraints,
        labels: prob.labels.clone(),
    })
}

/// Rank relaxation of the OPF over `W ~ x x^T` with `x = [Re v; Im v]`.
/// Quadratic costs and apparent-power limits enter through Schur
/// complements, so the objective stays linear in the lifted variables.
///
/// Variables: the upper triangle of `W` (2n x 2n), then one epigraph
/// variable per generator with `c2 > 0`.
pub fn build_opf_rank_relaxation(case: &NetworkCase) -> Result<SdpInstance, FormulationError> {
    let forms = build_complex_opf(case);
    let n2 = 2 * case.n();
    let nw = n2 * (n2 + 1) / 2;
    let quad_gens: Vec<usize> = forms
        .injection
        .iter()
        .filter(|(k, _)| case.generator_at(*k).expect("generator").c2 != 0.0)
        .map(|(k, _)| *k)
        .collect();
    let mut inst = SdpInstance::new(nw + quad_gens.len());
    inst.add_block(lifted_block(n2, 0));
    let mut c0 = 0.0;
    for (k, a) in &forms.injection {
        let g = case.generator_at(*k).expect("generator");
        if g.c2 < 0.0 {
            return Err(FormulationError::NotQuadratic(format!(
                "generator at bus {} has concave cost",
                g.bus
            )));
        }
        // p_gen = base * tr(A W) + pd
        let pg: Vec<(usize, f64)> = trace_coeffs(&realify(a).re)
            .into_iter()
            .map(|(i, v)| (i, v * case.base_mva))
            .collect();
        let pd = case.buses[*k].p_dem;
        if g.c2 == 0.0 {
            for &(i, v) in &pg {
                inst.add_objective(i, g.c1 * v);
            }
            c0 += g.c1 * pd + g.c0;
            continue;
        }
        // [[t - c1 p - c0, sqrt(c2) p], [sqrt(c2) p, 1]] PSD
        let t = nw + quad_gens.iter().position(|q| q == k).expect("quadratic generator");
        inst.add_objective(t, 1.0);
        let s = g.c2.sqrt();
        let mut blk = LmiBlock::new(2);
        blk.add(Some(t), 0, 0, 1.0);
        blk.add(None, 0, 0, -g.c1 * pd - g.c0);
        blk.add(None, 0, 1, s * pd);
        blk.add(None, 1, 1, 1.0);
        for &(i, v) in &pg {
            blk.add(Some(i), 0, 0, -g.c1 * v);
            blk.add(Some(i), 0, 1, s * v);
        }
        inst.add_block(blk);
    }
    inst.set_objective_constant(c0);
    for f in &forms.inequalities {
        let mut blk = LmiBlock::new(1);
        blk.add(None, 0, 0, f.bound.re);
        for (i, v) in trace_coeffs(&realify(&f.matrix).re) {
            blk.add(Some(i), 0, 0, -v);
        }
        inst.add_block(blk);
    }
    for c in &forms.apparent {
        // [[c^2, P, Q], [P, 1, 0], [Q, 0, 1]] PSD
        let maps = realify(&c.matrix);
        let mut blk = LmiBlock::new(3);
        blk.add(None, 0, 0, c.bound * c.bound);
        blk.add(None, 1, 1, 1.0);
        blk.add(None, 2, 2, 1.0);
        for (i, v) in trace_coeffs(&maps.re) {
            blk.add(Some(i), 0, 1, v);
        }
        for (i, v) in trace_coeffs(&maps.im) {
            blk.add(Some(i), 0, 2, v);
        }
        inst.add_block(blk);
    }
    Ok(inst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_index_sets() {
        let s = multi_index_set(2, 1);
        assert_eq!(s.members(), &[vec![0, 0], vec![1, 0], vec![0, 1]]);
        assert_eq!(multi_index_set(9, 2).len(), 55);
        assert_eq!(multi_index_set(3, 2).len(), 10);
        let s = multi_index_set(3, 4);
        assert_eq!(s.prefix_len(1), 4);
        assert_eq!(s.position(&[0, 0, 1]), Some(s.unit(2)));
    }

    #[test]
    fn triangle_index() {
        let n = 4;
        let mut seen = vec![false; n * (n + 1) / 2];
        for i in 0..n {
            for j in i..n {
                assert_eq!(tri(n, i, j), tri(n, j, i));
                seen[tri(n, i, j)] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
