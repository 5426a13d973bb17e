//! OPF as Hermitian quadratic forms in the complex voltages, their real
//! counterparts, and the polynomial problem handed to the moment hierarchy.

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;

use num_complex::Complex64;
use polyopf_sdp::Mat;
use serde_json::{json, Value};

use crate::netmodel::{build_admittance, BranchEnd, CMatrix, NetworkCase};
use crate::FormulationError;

const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FormKind {
    Balance,
    /// voltage magnitude at this bus position
    Voltage(usize),
    VoltageDiff,
    Current,
    ActiveFlow,
}

/// `v^H matrix v <= bound`.
#[derive(Clone, Debug)]
pub struct FormInequality {
    pub matrix: CMatrix,
    pub bound: Complex64,
    pub kind: FormKind,
    pub label: String,
}

/// `|v^H matrix v| <= bound`.
#[derive(Clone, Debug)]
pub struct ApparentBound {
    pub matrix: CMatrix,
    pub bound: f64,
    pub label: String,
}

/// Quadratic-form model of the OPF. Injection forms give per-unit active
/// power, so `p_gen = base_mva * v^H A_k v + p_dem` in MW.
#[derive(Clone, Debug)]
pub struct HermitianFormSet {
    pub n: usize,
    pub base_mva: f64,
    /// (bus position, A_k) for every generator bus
    pub injection: Vec<(usize, CMatrix)>,
    pub inequalities: Vec<FormInequality>,
    pub apparent: Vec<ApparentBound>,
}

/// Power injected at bus `k`: `s_k = v^H (Y^H e_k e_k^T) v`.
pub fn injection_form(y: &CMatrix, k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(y.n());
    for j in 0..y.n() {
        m[(j, k)] = y[(k, j)].conj();
    }
    m
}

/// Power entering a branch at its near end: `s = v_l conj(i_lm)`.
pub fn flow_form(n: usize, e: &BranchEnd) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    m[(e.near, e.near)] = e.a.conj();
    m[(e.far, e.near)] += e.b.conj();
    m
}

/// `(M + M^H) / 2`.
pub fn hermitian_part(m: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(m.n());
    for i in 0..m.n() {
        for j in 0..m.n() {
            out[(i, j)] = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
        }
    }
    out
}

/// `(M - M^H) / 2j`, whose form is the imaginary part of `v^H M v`.
pub fn skew_part(m: &CMatrix) -> CMatrix {
    let mut out = CMatrix::zeros(m.n());
    for i in 0..m.n() {
        for j in 0..m.n() {
            out[(i, j)] = (m[(i, j)] - m[(j, i)].conj()) / Complex64::new(0.0, 2.0);
        }
    }
    out
}

/// Hermitian `r^H r` for a row vector `r`, so that `v^H M v = |r v|^2`.
fn gram(n: usize, r: &[(usize, Complex64)]) -> CMatrix {
    let mut m = CMatrix::zeros(n);
    for &(i, a) in r {
        for &(j, b) in r {
            m[(i, j)] += a.conj() * b;
        }
    }
    m
}

fn scaled(m: &CMatrix, s: f64) -> CMatrix {
    let mut out = m.clone();
    for i in 0..m.n() {
        for j in 0..m.n() {
            out[(i, j)] = m[(i, j)] * s;
        }
    }
    out
}

pub fn build_complex_opf(case: &NetworkCase) -> HermitianFormSet {
    let n = case.n();
    let base = case.base_mva;
    let y = build_admittance(case).entries;
    let mut injection = Vec::new();
    let mut ineq = Vec::new();
    let mut push = |m: CMatrix, lo: f64, hi: f64, kind: FormKind, what: String| {
        if hi.is_finite() {
            ineq.push(FormInequality {
                matrix: m.clone(),
                bound: Complex64::new(hi, 0.0),
                kind,
                label: format!("{what} max"),
            });
        }
        if lo.is_finite() {
            ineq.push(FormInequality {
                matrix: scaled(&m, -1.0),
                bound: Complex64::new(-lo, 0.0),
                kind,
                label: format!("{what} min"),
            });
        }
    };

    for (k, bus) in case.buses.iter().enumerate() {
        let s = injection_form(&y, k);
        let p = hermitian_part(&s);
        let q = skew_part(&s);
        let (p_rng, q_rng) = match case.generator_at(k) {
            Some(g) => {
                injection.push((k, p.clone()));
                ((g.p_min, g.p_max), (g.q_min, g.q_max))
            }
            None => ((0.0, 0.0), (0.0, 0.0)),
        };
        push(
            p,
            (p_rng.0 - bus.p_dem) / base,
            (p_rng.1 - bus.p_dem) / base,
            FormKind::Balance,
            format!("p balance bus {}", bus.id),
        );
        push(
            q,
            (q_rng.0 - bus.q_dem) / base,
            (q_rng.1 - bus.q_dem) / base,
            FormKind::Balance,
            format!("q balance bus {}", bus.id),
        );
    }
    for (k, bus) in case.buses.iter().enumerate() {
        let lo = if bus.v_min > 0.0 { bus.v_min * bus.v_min } else { f64::NEG_INFINITY };
        push(
            gram(n, &[(k, ONE)]),
            lo,
            bus.v_max * bus.v_max,
            FormKind::Voltage(k),
            format!("voltage bus {}", bus.id),
        );
    }
    let ends = case.branch_ends();
    for (k, br) in case.branches.iter().enumerate() {
        if br.vdiff_max.is_finite() {
            let e = &ends[2 * k];
            push(
                gram(n, &[(e.near, ONE), (e.far, -ONE)]),
                f64::NEG_INFINITY,
                br.vdiff_max * br.vdiff_max,
                FormKind::VoltageDiff,
                format!("voltage difference {}-{}", br.from, br.to),
            );
        }
    }
    let mut apparent = Vec::new();
    for e in &ends {
        let br = &case.branches[e.branch];
        let (from, to) = (case.buses[e.near].id, case.buses[e.far].id);
        if br.i_max.is_finite() {
            push(
                gram(n, &[(e.near, e.a), (e.far, e.b)]),
                f64::NEG_INFINITY,
                br.i_max * br.i_max,
                FormKind::Current,
                format!("current {from}-{to}"),
            );
        }
        let flow = flow_form(n, e);
        if br.p_max.is_finite() {
            let pm = br.p_max / base;
            push(
                hermitian_part(&flow),
                -pm,
                pm,
                FormKind::ActiveFlow,
                format!("active flow {from}-{to}"),
            );
        }
        if br.s_max.is_finite() {
            apparent.push(ApparentBound {
                matrix: flow,
                bound: br.s_max / base,
                label: format!("apparent flow {from}-{to}"),
            });
        }
    }
    HermitianFormSet {
        n,
        base_mva: base,
        injection,
        inequalities: ineq,
        apparent,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexToRealMaps {
    pub re: Mat<f64>,
    pub im: Mat<f64>,
}

/// Real 2n x 2n matrices with `v^H M v = x^T re x + j x^T im x` for
/// `x = [Re v; Im v]`.
pub fn realify(m: &CMatrix) -> ComplexToRealMaps {
    let n = m.n();
    let mut re = Mat::zeros(2 * n, 2 * n);
    let mut im = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            let z = m[(i, j)];
            re[(i, j)] = z.re;
            re[(i, n + j)] = -z.im;
            re[(n + i, j)] = z.im;
            re[(n + i, n + j)] = z.re;
            im[(i, j)] = z.im;
            im[(i, n + j)] = z.re;
            im[(n + i, j)] = -z.re;
            im[(n + i, n + j)] = z.im;
        }
    }
    ComplexToRealMaps { re, im }
}

/// Sparse real polynomial; exponent vectors map to nonzero coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct SparsePolynomial {
    nvars: usize,
    terms: BTreeMap<Vec<u32>, f64>,
}

impl SparsePolynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: BTreeMap::new(),
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        let mut p = Self::zero(nvars);
        p.add_term(vec![0; nvars], c);
        p
    }

    pub fn var(nvars: usize, i: usize) -> Self {
        let mut alpha = vec![0; nvars];
        alpha[i] = 1;
        let mut p = Self::zero(nvars);
        p.add_term(alpha, 1.0);
        p
    }

    /// `x^T q x` over the variables selected by `map` (matrix index ->
    /// variable); unmapped indices are identically zero.
    pub fn quadratic(nvars: usize, q: &Mat<f64>, map: &[Option<usize>]) -> Self {
        let mut p = Self::zero(nvars);
        for i in 0..q.rows() {
            let Some(a) = map[i] else { continue };
            for j in 0..q.cols() {
                let Some(b) = map[j] else { continue };
                if q[(i, j)] != 0.0 {
                    let mut alpha = vec![0; nvars];
                    alpha[a] += 1;
                    alpha[b] += 1;
                    p.add_term(alpha, q[(i, j)]);
                }
            }
        }
        p
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn add_term(&mut self, alpha: Vec<u32>, c: f64) {
        assert_eq!(alpha.len(), self.nvars, "exponent length");
        match self.terms.entry(alpha) {
            Entry::Occupied(mut e) => {
                *e.get_mut() += c;
                if *e.get() == 0.0 {
                    e.remove();
                }
            }
            Entry::Vacant(e) => {
                if c != 0.0 {
                    e.insert(c);
                }
            }
        }
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[u32], f64)> {
        self.terms.iter().map(|(k, v)| (k.as_slice(), *v))
    }

    pub fn coeff(&self, alpha: &[u32]) -> f64 {
        self.terms.get(alpha).copied().unwrap_or(0.0)
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn degree(&self) -> usize {
        self.terms
            .keys()
            .map(|a| a.iter().sum::<u32>() as usize)
            .max()
            .unwrap_or(0)
    }

    pub fn half_degree(&self) -> usize {
        self.degree().div_ceil(2)
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut out = self.clone();
        for (a, c) in other.terms() {
            out.add_term(a.to_vec(), c);
        }
        out
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = Self::zero(self.nvars);
        if s != 0.0 {
            for (a, c) in self.terms() {
                out.terms.insert(a.to_vec(), c * s);
            }
        }
        out
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.nvars);
        for (a, c) in self.terms() {
            for (b, d) in other.terms() {
                let g: Vec<u32> = a.iter().zip(b).map(|(x, y)| x + y).collect();
                out.add_term(g, c * d);
            }
        }
        out
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms()
            .map(|(a, c)| c * a.iter().zip(x).map(|(&e, &xi)| xi.powi(e as i32)).product::<f64>())
            .sum()
    }

    pub fn to_json(&self) -> Value {
        Value::Array(
            self.terms()
                .map(|(a, c)| json!({ "exp": a, "coeff": c }))
                .collect(),
        )
    }
}

/// `min f_0(x)` subject to `f_i(x) >= 0`.
#[derive(Clone, Debug)]
pub struct PolyProblem {
    pub nvars: usize,
    pub objective: SparsePolynomial,
    pub constraints: Vec<SparsePolynomial>,
    pub labels: Vec<String>,
}

impl PolyProblem {
    pub fn new(objective: SparsePolynomial) -> Self {
        Self {
            nvars: objective.nvars(),
            objective,
            constraints: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, f: SparsePolynomial, label: impl Into<String>) {
        assert_eq!(f.nvars(), self.nvars, "constraint variable count");
        self.constraints.push(f);
        self.labels.push(label.into());
    }

    /// Largest half-degree over objective and constraints.
    pub fn min_order(&self) -> usize {
        self.constraints
            .iter()
            .map(SparsePolynomial::half_degree)
            .chain([self.objective.half_degree(), 1])
            .max()
            .unwrap_or(1)
    }

    /// Worst violation `max(0, -f_i(x))`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        self.constraints
            .iter()
            .map(|f| (-f.eval(x)).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "nvars": self.nvars,
            "objective": self.objective.to_json(),
            "constraints": self
                .constraints
                .iter()
                .zip(&self.labels)
                .map(|(f, l)| json!({ "label": l, "degree": f.degree(), "terms": f.to_json() }))
                .collect::<Vec<_>>(),
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct PolyOptions {
    /// Drop `Im v_n` and bound `Re v_n` linearly.
    pub fix_phase: bool,
    pub ball: bool,
}

impl Default for PolyOptions {
    fn default() -> Self {
        Self {
            fix_phase: true,
            ball: true,
        }
    }
}

/// Variable layout: `x = [Re v_1 .. Re v_n, Im v_1 .. Im v_n]`, with the
/// last entry removed when the phase is fixed.
pub fn build_poly_opf(case: &NetworkCase) -> Result<PolyProblem, FormulationError> {
    build_poly_opf_with(case, &PolyOptions::default())
}

pub fn build_poly_opf_with(
    case: &NetworkCase,
    opts: &PolyOptions,
) -> Result<PolyProblem, FormulationError> {
    let n = case.n();
    let reference = &case.buses[n - 1];
    if opts.fix_phase && reference.v_min < 0.0 {
        return Err(FormulationError::NegativeReferenceVoltage {
            bus: reference.id,
            v_min: reference.v_min,
        });
    }
    let forms = build_complex_opf(case);
    let p = if opts.fix_phase { 2 * n - 1 } else { 2 * n };
    let map: Vec<Option<usize>> = (0..2 * n).map(|i| (i < p).then_some(i)).collect();
    let quad = |m: &Mat<f64>| SparsePolynomial::quadratic(p, m, &map);

    let mut objective = SparsePolynomial::zero(p);
    for (k, a) in &forms.injection {
        let g = case.generator_at(*k).expect("generator bus");
        let pg = quad(&realify(a).re)
            .scale(case.base_mva)
            .add(&SparsePolynomial::constant(p, case.buses[*k].p_dem));
        objective = objective
            .add(&pg.mul(&pg).scale(g.c2))
            .add(&pg.scale(g.c1))
            .add(&SparsePolynomial::constant(p, g.c0));
    }

    let mut prob = PolyProblem::new(objective);
    for f in &forms.inequalities {
        if opts.fix_phase && f.kind == FormKind::Voltage(n - 1) {
            continue;
        }
        let maps = realify(&f.matrix);
        let re = SparsePolynomial::constant(p, f.bound.re).add(&quad(&maps.re).scale(-1.0));
        prob.push(re, f.label.clone());
    }
    if opts.fix_phase {
        let x = SparsePolynomial::var(p, n - 1);
        prob.push(
            x.add(&SparsePolynomial::constant(p, -reference.v_min)),
            format!("voltage bus {} min", reference.id),
        );
        prob.push(
            SparsePolynomial::constant(p, reference.v_max).add(&x.scale(-1.0)),
            format!("voltage bus {} max", reference.id),
        );
    }
    for c in &forms.apparent {
        let maps = realify(&c.matrix);
        let pr = quad(&maps.re);
        let qr = quad(&maps.im);
        let f = SparsePolynomial::constant(p, c.bound * c.bound)
            .add(&pr.mul(&pr).scale(-1.0))
            .add(&qr.mul(&qr).scale(-1.0));
        prob.push(f, c.label.clone());
    }
    if opts.ball {
        let radius: f64 = case.buses.iter().map(|b| b.v_max * b.v_max).sum();
        let mut ball = SparsePolynomial::constant(p, radius);
        for i in 0..p {
            let mut alpha = vec![0; p];
            alpha[i] = 2;
            ball.add_term(alpha, -1.0);
        }
        prob.push(ball, "ball");
    }
    Ok(prob)
}

/// `x = [Re v; Im v]`, dropping `Im v_n` when `p = 2n - 1`.
pub fn voltages_to_x(v: &[Complex64], p: usize) -> Vec<f64> {
    let mut x: Vec<f64> = v.iter().map(|z| z.re).chain(v.iter().map(|z| z.im)).collect();
    x.truncate(p);
    x
}

pub fn x_to_voltages(x: &[f64], n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|k| Complex64::new(x[k], x.get(n + k).copied().unwrap_or(0.0)))
        .collect()
}
