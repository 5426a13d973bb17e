//! Primal-dual path-following interior-point method.
//!
//! The LMI problem `min c^T y s.t. F_0 + sum y_i F_i PSD` is solved as the
//! dual of the standard pair
//!
//! ```text
//! (P)  min <C, X>   s.t. <A_i, X> = b_i, X PSD
//! (D)  max b^T y    s.t. sum y_i A_i + Z = C, Z PSD
//! ```
//!
//! with `C = F_0`, `A_i = -F_i`, `b = -c`. Directions use Nesterov-Todd
//! scaling and a Mehrotra predictor-corrector; the Schur complement is
//! assembled densely from the sparse `A_i` and factored by Cholesky.

use crate::dense::{dot, Mat};
use crate::instance::{ReducedInstance, SdpInstance};
use crate::scalar::{DoubleDouble, Real};
use crate::SdpError;

/// Fraction of the distance to the PSD boundary taken by each step.
const STEP_FRACTION: f64 = 0.98;
/// Infeasibility certificates are accepted below this ratio.
const INFEASIBILITY_RATIO: f64 = 1e-8;
/// Best iterate must improve within this many iterations.
const STALL_WINDOW: usize = 15;
const REFINE_STEPS: usize = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Precision {
    /// IEEE double.
    Double,
    /// Double-double, about 32 significant digits.
    Extended,
    /// Double first; on anything other than an optimal exit, re-solve in
    /// double-double at the escalation tolerance.
    Auto,
}

#[derive(Clone, Debug)]
pub struct SolverOptions {
    pub tol: f64,
    pub precision: Precision,
    pub max_iter: usize,
    pub escalation_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            precision: Precision::Auto,
            max_iter: 150,
            escalation_tol: 1e-12,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

/// Relative residuals of the internal (scaled) problem.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Residuals {
    pub primal: f64,
    pub dual: f64,
    pub gap: f64,
}

impl Residuals {
    pub fn max(&self) -> f64 {
        self.primal.max(self.dual).max(self.gap)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    /// `c^T y + c0` at the current `y`.
    pub primal_obj: f64,
    /// `-<F_0, X> + c0` at the current dual matrices.
    pub dual_obj: f64,
    /// Bound on how far `dual_obj` may exceed `primal_obj` given the
    /// current infeasibilities.
    pub duality_slack: f64,
    pub mu: f64,
    pub residuals: Residuals,
    pub step_primal: f64,
    pub step_dual: f64,
}

#[derive(Clone, Debug)]
pub struct SdpSolution {
    pub y: Vec<f64>,
    /// Dual matrix per block.
    pub block_duals: Vec<Mat<f64>>,
    /// `F_j0 + sum y_i F_ji` per block.
    pub block_values: Vec<Mat<f64>>,
    pub primal_obj: f64,
    pub dual_obj: f64,
    pub status: SolveStatus,
    pub residuals: Residuals,
    pub iterations: usize,
    pub precision: Precision,
    pub log: Vec<IterationRecord>,
}

pub fn solve(inst: &SdpInstance, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
    if !(1e-13..=1e-4).contains(&opts.tol) {
        return Err(SdpError::Invalid(format!(
            "tolerance {} outside [1e-13, 1e-4]",
            opts.tol
        )));
    }
    Ok(solve_equality_form(&inst.reduce()?, opts))
}

fn solve_equality_form(red: &ReducedInstance, opts: &SolverOptions) -> SdpSolution {
    match opts.precision {
        Precision::Double => solve_reduced::<f64>(red, opts.tol, opts.max_iter, Precision::Double),
        Precision::Extended => solve_reduced::<DoubleDouble>(red, opts.tol, opts.max_iter, Precision::Extended),
        Precision::Auto => {
            let first = solve_reduced::<f64>(red, opts.tol, opts.max_iter, Precision::Double);
            if first.status == SolveStatus::Optimal {
                return first;
            }
            log::debug!("double precision exit {:?}; escalating", first.status);
            let tol = opts.tol.min(opts.escalation_tol);
            solve_reduced::<DoubleDouble>(red, tol, opts.max_iter.max(200), Precision::Extended)
        }
    }
}

struct Block<T> {
    n: usize,
    c: Mat<T>,
    /// Internal variable indices with a nonzero coefficient in this block.
    vars: Vec<usize>,
    /// Upper-triangle entries of `A_i` aligned with `vars`.
    mats: Vec<Vec<(usize, usize, T)>>,
}

struct Problem<T> {
    m: usize,
    b: Vec<T>,
    blocks: Vec<Block<T>>,
    /// reduced variable index for each internal one
    map: Vec<usize>,
    /// per internal variable: `y_user = y_internal * var_scale`
    var_scale: Vec<f64>,
    /// objective scale `sb * sc` and the two factors
    sb: f64,
    sc: f64,
    c0: f64,
    nvars_reduced: usize,
}

fn pow2(s: f64) -> f64 {
    if s <= 1.0 {
        1.0
    } else {
        2f64.powi(s.log2().round() as i32)
    }
}

fn upper_inner<T: Real>(entries: &[(usize, usize, T)], x: &Mat<T>) -> T {
    let two = T::from_f64(2.0);
    let mut s = T::zero();
    for &(i, j, v) in entries {
        if i == j {
            s += v * x[(i, j)];
        } else {
            s += two * v * x[(i, j)];
        }
    }
    s
}

impl<T: Real> Problem<T> {
    /// `Err(status)` when the instance can be decided without iterating.
    fn build(red: &ReducedInstance) -> Result<Self, SolveStatus> {
        let nr = red.nvars;
        let mut appears = vec![false; nr];
        for b in &red.blocks {
            for (k, _) in &b.fs {
                appears[*k] = true;
            }
        }
        let mut map = Vec::new();
        let mut internal = vec![usize::MAX; nr];
        for k in 0..nr {
            if appears[k] {
                internal[k] = map.len();
                map.push(k);
            } else if red.c[k] != 0.0 {
                return Err(SolveStatus::Unbounded);
            }
        }
        let m = map.len();
        let mut norm2 = vec![0.0f64; m];
        for b in &red.blocks {
            for (k, f) in &b.fs {
                let nf = f.frobenius_norm();
                norm2[internal[*k]] += nf * nf;
            }
        }
        let var_norm: Vec<f64> = norm2.iter().map(|v| pow2(v.sqrt())).collect();
        let b_raw: Vec<f64> = (0..m).map(|i| -red.c[map[i]] / var_norm[i]).collect();
        let sb = pow2(b_raw.iter().map(|v| v * v).sum::<f64>().sqrt());
        let c_norm = red
            .blocks
            .iter()
            .map(|b| b.f0.frobenius_norm().powi(2))
            .sum::<f64>()
            .sqrt();
        let sc = pow2(c_norm);

        let inv_sc = T::one() / T::from_f64(sc);
        let blocks: Vec<Block<T>> = red
            .blocks
            .iter()
            .map(|rb| {
                let mut c = Mat::zeros(rb.size, rb.size);
                for (i, j, v) in rb.f0.upper() {
                    let v = T::from_f64(v) * inv_sc;
                    c[(i, j)] = v;
                    c[(j, i)] = v;
                }
                let mut vars = Vec::new();
                let mut mats = Vec::new();
                for (k, f) in &rb.fs {
                    let i = internal[*k];
                    let s = T::one() / T::from_f64(var_norm[i]);
                    vars.push(i);
                    mats.push(f.upper().map(|(r, cc, v)| (r, cc, -T::from_f64(v) * s)).collect());
                }
                Block {
                    n: rb.size,
                    c,
                    vars,
                    mats,
                }
            })
            .collect();
        let inv_sb = T::one() / T::from_f64(sb);
        Ok(Self {
            m,
            b: b_raw.iter().map(|&v| T::from_f64(v) * inv_sb).collect(),
            blocks,
            var_scale: var_norm.iter().map(|&v| sc / v).collect(),
            map,
            sb,
            sc,
            c0: red.c0,
            nvars_reduced: nr,
        })
    }

    fn a_op(&self, xs: &[Mat<T>]) -> Vec<T> {
        let mut out = vec![T::zero(); self.m];
        for (blk, x) in self.blocks.iter().zip(xs) {
            for (&i, a) in blk.vars.iter().zip(&blk.mats) {
                out[i] += upper_inner(a, x);
            }
        }
        out
    }

    fn at_op(&self, y: &[T]) -> Vec<Mat<T>> {
        self.blocks
            .iter()
            .map(|blk| {
                let mut s = Mat::zeros(blk.n, blk.n);
                for (&i, a) in blk.vars.iter().zip(&blk.mats) {
                    let yi = y[i];
                    if yi == T::zero() {
                        continue;
                    }
                    for &(r, c, v) in a {
                        s[(r, c)] += yi * v;
                        if r != c {
                            s[(c, r)] += yi * v;
                        }
                    }
                }
                s
            })
            .collect()
    }

    /// Schur matrix `M_ik = sum_j <A_ji, W_j A_jk W_j>`.
    fn schur(&self, sc: &[Scaling<T>]) -> Mat<T> {
        let mut mm = Mat::zeros(self.m, self.m);
        let two = T::from_f64(2.0);
        for (blk, s) in self.blocks.iter().zip(sc) {
            let n = blk.n;
            let w = &s.w;
            let mut p = Mat::zeros(n, n);
            for (l, a) in blk.mats.iter().enumerate() {
                // P = W A_l W, upper triangle
                for a_ in 0..n {
                    for b_ in a_..n {
                        p[(a_, b_)] = T::zero();
                    }
                }
                for &(r, c, v) in a {
                    let wr = w.row(r);
                    let wc = w.row(c);
                    for a_ in 0..n {
                        let (ar, ac) = (v * wr[a_], v * wc[a_]);
                        if r == c {
                            for b_ in a_..n {
                                p[(a_, b_)] += ar * wr[b_];
                            }
                        } else {
                            for b_ in a_..n {
                                p[(a_, b_)] += ar * wc[b_] + ac * wr[b_];
                            }
                        }
                    }
                }
                let i = blk.vars[l];
                for (l2, a2) in blk.mats.iter().enumerate().skip(l) {
                    let k = blk.vars[l2];
                    let mut s_ = T::zero();
                    for &(r, c, v) in a2 {
                        if r == c {
                            s_ += v * p[(r, c)];
                        } else {
                            s_ += two * v * p[(r, c)];
                        }
                    }
                    let (lo, hi) = if i <= k { (i, k) } else { (k, i) };
                    mm[(lo, hi)] += s_;
                }
            }
        }
        for i in 0..self.m {
            for k in (i + 1)..self.m {
                mm[(k, i)] = mm[(i, k)];
            }
        }
        mm
    }
}

struct Scaling<T> {
    g: Mat<T>,
    w: Mat<T>,
    d: Vec<T>,
}

/// NT scaling point from `X = L L^T`, `Z = R R^T` and the SVD of `R^T L`.
fn nt_scaling<T: Real>(x: &Mat<T>, z: &Mat<T>) -> Option<Scaling<T>> {
    let l = x.cholesky()?;
    let r = z.cholesky()?;
    let k = r.transpose().matmul(&l);
    let (d, v) = k.jacobi_svd();
    if d.iter().any(|&s| !(s > T::zero())) {
        return None;
    }
    let mut g = l.matmul(&v);
    let n = x.rows();
    for j in 0..n {
        let s = T::one() / d[j].sqrt();
        for i in 0..n {
            g[(i, j)] *= s;
        }
    }
    let w = g.matmul_t(&g);
    Some(Scaling { g, w, d })
}

struct Direction<T> {
    dy: Vec<T>,
    dx: Vec<Mat<T>>,
    dz: Vec<Mat<T>>,
    dx_scaled: Vec<Mat<T>>,
    dz_scaled: Vec<Mat<T>>,
}

/// Largest step keeping `D + a * S` PSD, from the smallest eigenvalue of
/// `D^{-1/2} S D^{-1/2}`.
fn max_step<T: Real>(d: &[T], s: &Mat<T>) -> f64 {
    let n = d.len();
    let inv: Vec<T> = d.iter().map(|&v| T::one() / v.sqrt()).collect();
    let m = Mat::from_fn(n, n, |i, j| s[(i, j)] * inv[i] * inv[j]);
    let lam = m.min_eigenvalue().to_f64();
    if lam >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lam
    }
}

struct Iterate<T> {
    x: Vec<Mat<T>>,
    y: Vec<T>,
    z: Vec<Mat<T>>,
}

impl<T: Real> Clone for Iterate<T> {
    fn clone(&self) -> Self {
        Self {
            x: self.x.clone(),
            y: self.y.clone(),
            z: self.z.clone(),
        }
    }
}

#[derive(Clone, Copy)]
struct Measures {
    res: Residuals,
    pobj: f64,
    dobj: f64,
    slack: f64,
    mu: f64,
    user_gap: f64,
}

fn solve_reduced<T: Real>(
    red: &ReducedInstance,
    tol: f64,
    max_iter: usize,
    precision: Precision,
) -> SdpSolution {
    let prob = match Problem::<T>::build(red) {
        Ok(p) => p,
        Err(status) => return trivial_solution(red, status, precision),
    };
    if prob.m == 0 {
        return no_variable_solution(red, tol, precision);
    }
    let total_n: usize = prob.blocks.iter().map(|b| b.n).sum();
    let b_norm = norm(&prob.b);
    let c_norm = prob
        .blocks
        .iter()
        .map(|b| b.c.inner(&b.c).to_f64())
        .sum::<f64>()
        .sqrt();

    let mut it = initial_point(&prob);
    let mut log = Vec::new();
    let mut best: Option<(f64, Iterate<T>, Measures)> = None;
    let mut best_iter = 0;
    let mut status = SolveStatus::NumericalFailure;
    let mut final_iter = 0;
    let mut steps = (0.0, 0.0);

    for iter in 0..=max_iter {
        final_iter = iter;
        let ax = prob.a_op(&it.x);
        let rp: Vec<T> = prob.b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let aty = prob.at_op(&it.y);
        let rd: Vec<Mat<T>> = prob
            .blocks
            .iter()
            .zip(&aty)
            .zip(&it.z)
            .map(|((blk, a), z)| blk.c.sub(a).sub(z))
            .collect();
        let meas = measures(&prob, &it, &rp, &rd, b_norm, c_norm, total_n);
        log.push(IterationRecord {
            iter,
            primal_obj: meas.pobj,
            dual_obj: meas.dobj,
            duality_slack: meas.slack,
            mu: meas.mu,
            residuals: meas.res,
            step_primal: steps.0,
            step_dual: steps.1,
        });
        log::debug!(
            "it {iter:3} pobj {:.10e} dobj {:.10e} pinf {:.2e} dinf {:.2e} gap {:.2e} mu {:.2e}",
            meas.pobj,
            meas.dobj,
            meas.res.primal,
            meas.res.dual,
            meas.res.gap,
            meas.mu
        );
        let merit = meas.res.max().max(meas.user_gap);
        if !merit.is_finite() {
            break;
        }
        let converged = merit <= tol && lmi_psd(&prob, &aty, tol);
        let improved = best.as_ref().map_or(true, |(m, _, _)| merit < *m);
        if improved {
            best = Some((merit, it.clone(), meas));
            best_iter = iter;
        }
        if converged {
            status = SolveStatus::Optimal;
            break;
        }
        if let Some(s) = infeasibility(&prob, &it, &ax, &aty) {
            status = s;
            best = None;
            break;
        }
        if iter == max_iter || iter - best_iter > STALL_WINDOW {
            break;
        }

        // scaling and Schur complement
        let mut sc = Vec::with_capacity(prob.blocks.len());
        for (x, z) in it.x.iter().zip(&it.z) {
            match nt_scaling(x, z) {
                Some(s) => sc.push(s),
                None => break,
            }
        }
        if sc.len() != prob.blocks.len() {
            break;
        }
        let mm = prob.schur(&sc);
        let mchol = match factor_schur(&mm) {
            Some(l) => l,
            None => break,
        };
        let wrdw: Vec<Mat<T>> = sc
            .iter()
            .zip(&rd)
            .map(|(s, r)| {
                let mut v = s.w.matmul(r).matmul(&s.w);
                v.symmetrize();
                v
            })
            .collect();
        let a_wrdw = prob.a_op(&wrdw);
        let mu = T::from_f64(meas.mu);

        // predictor
        let rc_aff: Vec<Mat<T>> = sc
            .iter()
            .map(|s| Mat::from_fn(s.d.len(), s.d.len(), |i, j| if i == j { -(s.d[i] * s.d[i]) } else { T::zero() }))
            .collect();
        let pred = direction(&prob, &sc, &mm, &mchol, &rp, &rd, &wrdw, &a_wrdw, &rc_aff);
        let (ap, ad) = step_lengths(&sc, &pred);
        let mut mu_aff = T::zero();
        for j in 0..prob.blocks.len() {
            let mut xn = it.x[j].clone();
            xn.axpy(T::from_f64(ap), &pred.dx[j]);
            let mut zn = it.z[j].clone();
            zn.axpy(T::from_f64(ad), &pred.dz[j]);
            mu_aff += xn.inner(&zn);
        }
        let mu_aff = mu_aff.to_f64() / total_n as f64;
        let expon = (3.0 * ap.min(ad).powi(2)).max(1.0);
        let sigma = (mu_aff / meas.mu).max(0.0).powf(expon).min(1.0);

        // corrector
        let rc: Vec<Mat<T>> = sc
            .iter()
            .enumerate()
            .map(|(j, s)| {
                let n = s.d.len();
                let prod = pred.dx_scaled[j].matmul(&pred.dz_scaled[j]);
                Mat::from_fn(n, n, |a, b| {
                    let sym = (prod[(a, b)] + prod[(b, a)]) * T::from_f64(0.5);
                    let base = if a == b {
                        T::from_f64(sigma) * mu - s.d[a] * s.d[a]
                    } else {
                        T::zero()
                    };
                    base - sym
                })
            })
            .collect();
        let corr = direction(&prob, &sc, &mm, &mchol, &rp, &rd, &wrdw, &a_wrdw, &rc);
        let (ap, ad) = step_lengths(&sc, &corr);
        steps = (ap, ad);
        if ap < 1e-12 && ad < 1e-12 {
            break;
        }
        let (tap, tad) = (T::from_f64(ap), T::from_f64(ad));
        for j in 0..prob.blocks.len() {
            it.x[j].axpy(tap, &corr.dx[j]);
            it.x[j].symmetrize();
            it.z[j].axpy(tad, &corr.dz[j]);
            it.z[j].symmetrize();
        }
        for (y, dy) in it.y.iter_mut().zip(&corr.dy) {
            *y += tad * *dy;
        }
    }

    let (it, meas) = match best {
        Some((_, it, meas)) => (it, meas),
        None => {
            // infeasibility certificate: report the last iterate as is
            let ax = prob.a_op(&it.x);
            let rp: Vec<T> = prob.b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
            let aty = prob.at_op(&it.y);
            let rd: Vec<Mat<T>> = prob
                .blocks
                .iter()
                .zip(&aty)
                .zip(&it.z)
                .map(|((blk, a), z)| blk.c.sub(a).sub(z))
                .collect();
            let meas = measures(&prob, &it, &rp, &rd, b_norm, c_norm, total_n);
            (it, meas)
        }
    };
    finish(red, &prob, it, meas, status, final_iter, precision, log)
}

/// `F(y) = C - A^T y` PSD to within `tol * (1 + |F(y)|)` in user units.
fn lmi_psd<T: Real>(prob: &Problem<T>, aty: &[Mat<T>], tol: f64) -> bool {
    prob.blocks.iter().zip(aty).all(|(blk, a)| {
        let f = blk.c.sub(a);
        f.min_eigenvalue().to_f64() >= -tol * (1.0 / prob.sc + f.frobenius_norm().to_f64())
    })
}

fn factor_schur<T: Real>(mm: &Mat<T>) -> Option<Mat<T>> {
    if let Some(l) = mm.cholesky() {
        return Some(l);
    }
    // tiny diagonal shift for a numerically singular Schur matrix
    let maxd = (0..mm.rows())
        .map(|i| mm[(i, i)].abs())
        .fold(T::zero(), |a, b| a.max(b));
    let shift = maxd * T::from_f64(T::EPSILON * 1e2);
    let mut m2 = mm.clone();
    for i in 0..mm.rows() {
        m2[(i, i)] += shift;
    }
    m2.cholesky()
}

#[allow(clippy::too_many_arguments)]
fn direction<T: Real>(
    prob: &Problem<T>,
    sc: &[Scaling<T>],
    mm: &Mat<T>,
    mchol: &Mat<T>,
    rp: &[T],
    rd: &[Mat<T>],
    wrdw: &[Mat<T>],
    a_wrdw: &[T],
    rc: &[Mat<T>],
) -> Direction<T> {
    let two = T::from_f64(2.0);
    let gtg: Vec<Mat<T>> = sc
        .iter()
        .zip(rc)
        .map(|(s, r)| {
            let n = s.d.len();
            let t = Mat::from_fn(n, n, |a, b| two * r[(a, b)] / (s.d[a] + s.d[b]));
            let mut v = s.g.matmul(&t).matmul_t(&s.g);
            v.symmetrize();
            v
        })
        .collect();
    let a_gtg = prob.a_op(&gtg);
    let rhs: Vec<T> = (0..prob.m).map(|i| rp[i] + a_wrdw[i] - a_gtg[i]).collect();
    let mut dy = mchol.cholesky_solve(&rhs);
    // refinement against the unfactored Schur matrix
    for _ in 0..REFINE_STEPS {
        let r: Vec<T> = (0..prob.m)
            .map(|i| {
                let row = mm.row(i);
                let mut s = rhs[i];
                for k in 0..prob.m {
                    s -= row[k] * dy[k];
                }
                s
            })
            .collect();
        let corr = mchol.cholesky_solve(&r);
        for (d, c) in dy.iter_mut().zip(&corr) {
            *d += *c;
        }
    }
    let atdy = prob.at_op(&dy);
    let mut dx = Vec::new();
    let mut dz = Vec::new();
    let mut dxs = Vec::new();
    let mut dzs = Vec::new();
    for j in 0..prob.blocks.len() {
        let s = &sc[j];
        let n = s.d.len();
        let dzj = rd[j].sub(&atdy[j]);
        // W dZ W = W Rd W - W A^T dy W
        let mut wdzw = s.w.matmul(&atdy[j]).matmul(&s.w);
        wdzw = wrdw[j].sub(&wdzw);
        let mut dxj = gtg[j].sub(&wdzw);
        dxj.symmetrize();
        let mut dzt = s.g.transpose().matmul(&dzj).matmul(&s.g);
        dzt.symmetrize();
        let t = Mat::from_fn(n, n, |a, b| two * rc[j][(a, b)] / (s.d[a] + s.d[b]));
        dxs.push(t.sub(&dzt));
        dzs.push(dzt);
        dx.push(dxj);
        dz.push(dzj);
    }
    Direction {
        dy,
        dx,
        dz,
        dx_scaled: dxs,
        dz_scaled: dzs,
    }
}

fn step_lengths<T: Real>(sc: &[Scaling<T>], dir: &Direction<T>) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    let mut ad = f64::INFINITY;
    for (j, s) in sc.iter().enumerate() {
        ap = ap.min(max_step(&s.d, &dir.dx_scaled[j]));
        ad = ad.min(max_step(&s.d, &dir.dz_scaled[j]));
    }
    ((STEP_FRACTION * ap).min(1.0), (STEP_FRACTION * ad).min(1.0))
}

fn norm<T: Real>(v: &[T]) -> f64 {
    dot(v, v).to_f64().sqrt()
}

fn initial_point<T: Real>(prob: &Problem<T>) -> Iterate<T> {
    let mut x = Vec::new();
    let mut z = Vec::new();
    let mut a_norm = vec![0.0f64; prob.m];
    for blk in &prob.blocks {
        for (&i, a) in blk.vars.iter().zip(&blk.mats) {
            let s: f64 = a
                .iter()
                .map(|&(r, c, v)| {
                    let v = v.to_f64();
                    if r == c {
                        v * v
                    } else {
                        2.0 * v * v
                    }
                })
                .sum();
            a_norm[i] += s;
        }
    }
    let a_norm: Vec<f64> = a_norm.iter().map(|v| v.sqrt()).collect();
    for blk in &prob.blocks {
        let sn = (blk.n as f64).sqrt();
        let mut xi = 10f64.max(sn);
        let mut zi = 10f64.max(sn).max(blk.c.frobenius_norm().to_f64());
        for &i in &blk.vars {
            xi = xi.max(sn * (1.0 + prob.b[i].to_f64().abs()) / (1.0 + a_norm[i]));
            zi = zi.max(a_norm[i]);
        }
        x.push(Mat::scaled_identity(blk.n, T::from_f64(xi)));
        z.push(Mat::scaled_identity(blk.n, T::from_f64(zi)));
    }
    Iterate {
        x,
        y: vec![T::zero(); prob.m],
        z,
    }
}

fn measures<T: Real>(
    prob: &Problem<T>,
    it: &Iterate<T>,
    rp: &[T],
    rd: &[Mat<T>],
    b_norm: f64,
    c_norm: f64,
    total_n: usize,
) -> Measures {
    let mut cx = T::zero();
    let mut xz = T::zero();
    let mut rdx = T::zero();
    let mut rd2 = T::zero();
    for (j, blk) in prob.blocks.iter().enumerate() {
        cx += blk.c.inner(&it.x[j]);
        xz += it.x[j].inner(&it.z[j]);
        rdx += rd[j].inner(&it.x[j]);
        rd2 += rd[j].inner(&rd[j]);
    }
    let by = dot(&prob.b, &it.y);
    let yrp = dot(&it.y, rp);
    let (cx, by) = (cx.to_f64(), by.to_f64());
    let scale = prob.sb * prob.sc;
    let pobj = -scale * by + prob.c0;
    let dobj = -scale * cx + prob.c0;
    let slack = scale * (rdx.to_f64().abs() + yrp.to_f64().abs());
    let res = Residuals {
        primal: norm(rp) / (1.0 + b_norm),
        dual: rd2.to_f64().sqrt() / (1.0 + c_norm),
        gap: (cx - by).abs() / (1.0 + cx.abs() + by.abs()),
    };
    Measures {
        res,
        pobj,
        dobj,
        slack,
        mu: xz.to_f64() / total_n as f64,
        user_gap: (pobj - dobj).abs() / (1.0 + pobj.abs()),
    }
}

/// Checks the iterate for an improving ray.
fn infeasibility<T: Real>(
    prob: &Problem<T>,
    it: &Iterate<T>,
    ax: &[T],
    aty: &[Mat<T>],
) -> Option<SolveStatus> {
    let mut cx = T::zero();
    let mut r2 = T::zero();
    for (j, blk) in prob.blocks.iter().enumerate() {
        cx += blk.c.inner(&it.x[j]);
        let s = aty[j].add(&it.z[j]);
        r2 += s.inner(&s);
    }
    let cx = cx.to_f64();
    // X with A(X) ~ 0 and <C, X> < 0: the LMI has no feasible point
    if cx < 0.0 && norm(ax) / -cx < INFEASIBILITY_RATIO {
        return Some(SolveStatus::Infeasible);
    }
    let by = dot(&prob.b, &it.y).to_f64();
    // y with A^T y + Z ~ 0 and b^T y > 0: objective unbounded below
    if by > 0.0 && r2.to_f64().sqrt() / by < INFEASIBILITY_RATIO {
        return Some(SolveStatus::Unbounded);
    }
    None
}

#[allow(clippy::too_many_arguments)]
fn finish<T: Real>(
    red: &ReducedInstance,
    prob: &Problem<T>,
    it: Iterate<T>,
    meas: Measures,
    status: SolveStatus,
    iterations: usize,
    precision: Precision,
    log: Vec<IterationRecord>,
) -> SdpSolution {
    let mut z = vec![0.0; prob.nvars_reduced];
    for (i, &k) in prob.map.iter().enumerate() {
        z[k] = it.y[i].to_f64() * prob.var_scale[i];
    }
    let y = red.expand(&z);
    let block_duals = it.x.iter().map(|x| x.to_f64().scale(prob.sb)).collect();
    let block_values = red
        .blocks
        .iter()
        .map(|b| {
            let mut m = b.f0.to_dense();
            for (k, f) in &b.fs {
                for (i, j, v) in f.upper() {
                    m[(i, j)] += z[*k] * v;
                    if i != j {
                        m[(j, i)] += z[*k] * v;
                    }
                }
            }
            m
        })
        .collect();
    let primal_obj = red.c.iter().zip(&z).map(|(c, v)| c * v).sum::<f64>() + red.c0;
    SdpSolution {
        y,
        block_duals,
        block_values,
        primal_obj,
        dual_obj: meas.dobj,
        status,
        residuals: meas.res,
        iterations,
        precision,
        log,
    }
}

fn trivial_solution(red: &ReducedInstance, status: SolveStatus, precision: Precision) -> SdpSolution {
    SdpSolution {
        y: red.expand(&vec![0.0; red.nvars]),
        block_duals: red.blocks.iter().map(|b| Mat::zeros(b.size, b.size)).collect(),
        block_values: red.blocks.iter().map(|b| b.f0.to_dense()).collect(),
        primal_obj: f64::NEG_INFINITY,
        dual_obj: f64::NEG_INFINITY,
        status,
        residuals: Residuals::default(),
        iterations: 0,
        precision,
        log: Vec::new(),
    }
}

fn no_variable_solution(red: &ReducedInstance, tol: f64, precision: Precision) -> SdpSolution {
    let values: Vec<Mat<f64>> = red.blocks.iter().map(|b| b.f0.to_dense()).collect();
    let feasible = values
        .iter()
        .all(|m| m.min_eigenvalue() >= -tol * (1.0 + m.frobenius_norm()));
    SdpSolution {
        y: red.expand(&vec![0.0; red.nvars]),
        block_duals: red.blocks.iter().map(|b| Mat::zeros(b.size, b.size)).collect(),
        block_values: values,
        primal_obj: red.c0,
        dual_obj: red.c0,
        status: if feasible {
            SolveStatus::Optimal
        } else {
            SolveStatus::Infeasible
        },
        residuals: Residuals::default(),
        iterations: 0,
        precision,
        log: Vec::new(),
    }
}

impl SdpInstance {
    /// Convenience wrapper around [`solve`].
    pub fn solve(&self, opts: &SolverOptions) -> Result<SdpSolution, SdpError> {
        solve(self, opts)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::LmiBlock;

    fn opts(p: Precision) -> SolverOptions {
        SolverOptions {
            precision: p,
            ..SolverOptions::default()
        }
    }

    #[test]
    fn scalar_lower_bound() {
        // min y s.t. y - 3 >= 0
        let mut inst = SdpInstance::new(1);
        inst.set_objective(0, 1.0);
        let mut b = LmiBlock::new(1);
        b.add(None, 0, 0, -3.0);
        b.add(Some(0), 0, 0, 1.0);
        inst.add_block(b);
        for p in [Precision::Double, Precision::Extended] {
            let sol = solve(&inst, &opts(p)).unwrap();
            assert_eq!(sol.status, SolveStatus::Optimal);
            assert!((sol.y[0] - 3.0).abs() < 1e-7, "{:?}", sol.y);
            assert!((sol.primal_obj - 3.0).abs() < 1e-7);
        }
    }

    #[test]
    fn unused_variable_with_cost_is_unbounded() {
        let mut inst = SdpInstance::new(2);
        inst.set_objective(1, 1.0);
        let mut b = LmiBlock::new(1);
        b.add(Some(0), 0, 0, 1.0);
        inst.add_block(b);
        let sol = solve(&inst, &opts(Precision::Double)).unwrap();
        assert_eq!(sol.status, SolveStatus::Unbounded);
    }

    #[test]
    fn rejects_tolerance_out_of_range() {
        let inst = SdpInstance::new(0);
        let o = SolverOptions {
            tol: 1e-2,
            ..SolverOptions::default()
        };
        assert!(solve(&inst, &o).is_err());
    }
}
