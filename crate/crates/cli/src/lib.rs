//! Solve driver, parameter sweeps and table rendering behind the `polyopf`
//! binary.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use polyopf_core::certify::{CERT_TOL, FEAS_TOL};
use polyopf_core::{
    build_opf_rank_relaxation, build_poly_opf, build_relaxation, certify, to_opf_solution,
    Certificate, MomentSolution, NetworkCase, OpfSolution, PolyProblem, Verdict,
};
use polyopf_sdp::{solve, Precision, SdpInstance, SdpSolution, SolveStatus, SolverOptions};
use serde::Serialize;

#[derive(Clone, Debug)]
pub struct SolveConfig {
    /// Solve only this order.
    pub order: Option<usize>,
    pub max_order: usize,
    pub tol: f64,
    pub precision: Precision,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            order: None,
            max_order: 3,
            tol: 1e-9,
            precision: Precision::Auto,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Certified,
    Infeasible,
    OrderBudgetExhausted,
}

/// One relaxation solved on the way up the hierarchy.
#[derive(Clone, Debug, Serialize)]
pub struct OrderStep {
    pub order: usize,
    pub relax_value: f64,
    pub sdp_status: String,
    pub precision: String,
    pub iterations: usize,
    pub verdict: Verdict,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub outcome: Outcome,
    /// last order solved
    pub order: usize,
    pub steps: Vec<OrderStep>,
    pub certificate: Certificate,
    pub solution: Option<OpfSolution>,
}

fn precision_name(p: Precision) -> &'static str {
    match p {
        Precision::Double => "double",
        Precision::Extended => "double-double",
        Precision::Auto => "auto",
    }
}

fn status_name(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::Infeasible => "infeasible",
        SolveStatus::Unbounded => "unbounded",
        SolveStatus::NumericalFailure => "numerical-failure",
    }
}

fn solve_sdp(inst: &SdpInstance, tol: f64, precision: Precision) -> Result<SdpSolution> {
    let opts = SolverOptions {
        tol,
        precision,
        ..SolverOptions::default()
    };
    solve(inst, &opts).context("semidefinite solve")
}

/// Solves one order of the hierarchy and certifies the result. A double
/// precision answer that fails certification is re-solved in double-double
/// at the tighter tolerance before giving up on the order.
fn solve_order(
    prob: &PolyProblem,
    d: usize,
    cfg: &SolveConfig,
) -> Result<(OrderStep, Certificate)> {
    let start = Instant::now();
    let sdp = build_relaxation(prob, d)?;
    let inst = sdp.to_sdp();
    let attempt = |tol: f64, precision: Precision| -> Result<(SdpSolution, Certificate)> {
        let sol = solve_sdp(&inst, tol, precision)?;
        let cert = if sol.status == SolveStatus::Infeasible {
            Certificate::infeasible(f64::NAN)
        } else {
            let ms = MomentSolution {
                d,
                y: sdp.moments_from(&sol.y),
                relax_value: sol.primal_obj,
            };
            let mut c = certify(prob, &sdp, &ms, FEAS_TOL, CERT_TOL);
            if sol.status != SolveStatus::Optimal && c.verdict == Verdict::CertifiedGlobal {
                c.verdict = Verdict::FeasibleNotCertified;
            }
            c
        };
        Ok((sol, cert))
    };
    let (mut sol, mut cert) = attempt(cfg.tol, cfg.precision)?;
    let retry = cfg.precision == Precision::Auto
        && sol.precision == Precision::Double
        && cert.verdict != Verdict::CertifiedGlobal;
    if retry {
        (sol, cert) = attempt(cfg.tol.min(1e-12), Precision::Extended)?;
    }
    let step = OrderStep {
        order: d,
        relax_value: sol.primal_obj,
        sdp_status: status_name(sol.status).into(),
        precision: precision_name(sol.precision).into(),
        iterations: sol.iterations,
        verdict: cert.verdict,
        seconds: start.elapsed().as_secs_f64(),
    };
    Ok((step, cert))
}

pub fn run_solve(case: &NetworkCase, cfg: &SolveConfig) -> Result<SolveReport> {
    let prob = build_poly_opf(case)?;
    let d_min = prob.min_order();
    let orders: Vec<usize> = match cfg.order {
        Some(d) => vec![d],
        None => (d_min..=cfg.max_order.max(d_min)).collect(),
    };
    let mut steps = Vec::new();
    let mut last = None;
    for d in orders {
        let (step, cert) = solve_order(&prob, d, cfg)?;
        log::info!(
            "order {d}: {} ({}, {} iterations) -> {}",
            step.relax_value,
            step.precision,
            step.iterations,
            step.verdict
        );
        let verdict = cert.verdict;
        steps.push(step);
        last = Some((d, cert));
        if matches!(verdict, Verdict::CertifiedGlobal | Verdict::InfeasibleProblem) {
            break;
        }
    }
    let (order, certificate) = last.ok_or_else(|| anyhow!("no relaxation order to solve"))?;
    let outcome = match certificate.verdict {
        Verdict::CertifiedGlobal => Outcome::Certified,
        Verdict::InfeasibleProblem => Outcome::Infeasible,
        _ => Outcome::OrderBudgetExhausted,
    };
    let solution = (!certificate.candidate_x.is_empty())
        .then(|| to_opf_solution(&certificate.candidate_x, case));
    Ok(SolveReport {
        outcome,
        order,
        steps,
        certificate,
        solution,
    })
}

/// Value of the rank relaxation, or `None` when it is infeasible or the
/// solver fails.
pub fn rank_relaxation_value(case: &NetworkCase, tol: f64) -> Result<Option<f64>> {
    let inst = build_opf_rank_relaxation(case)?;
    let sol = solve_sdp(&inst, tol, Precision::Auto)?;
    Ok((sol.status == SolveStatus::Optimal).then_some(sol.primal_obj))
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepParam {
    /// upper voltage bound at a bus (p.u.)
    VMax { bus: usize },
    /// apparent-power limit on the branches joining two buses (MVA)
    SMax { from: usize, to: usize },
    /// lower reactive bound of the generator at a bus (MVAr)
    QMin { bus: usize },
}

impl SweepParam {
    pub fn parse(s: &str) -> Result<Self> {
        let (name, at) = s
            .split_once('@')
            .ok_or_else(|| anyhow!("sweep parameter '{s}' needs the form NAME@BUS or smax@FROM-TO"))?;
        let id = |t: &str| -> Result<usize> {
            t.trim().parse().with_context(|| format!("bad bus id '{t}'"))
        };
        Ok(match name.to_ascii_lowercase().as_str() {
            "vmax" => SweepParam::VMax { bus: id(at)? },
            "qmin" => SweepParam::QMin { bus: id(at)? },
            "smax" => {
                let (a, b) = at
                    .split_once('-')
                    .ok_or_else(|| anyhow!("smax needs a bus pair, e.g. smax@3-2"))?;
                SweepParam::SMax { from: id(a)?, to: id(b)? }
            }
            other => bail!("unknown sweep parameter '{other}' (vmax, smax, qmin)"),
        })
    }

    pub fn header(&self) -> String {
        match self {
            SweepParam::VMax { bus } => format!("v{bus}max (p.u.)"),
            SweepParam::SMax { from, to } => format!("s{from}{to}max (MVA)"),
            SweepParam::QMin { bus } => format!("q{bus}min (MVAr)"),
        }
    }

    /// Copy of the case with the parameter set.
    pub fn apply(&self, case: &NetworkCase, value: f64) -> Result<NetworkCase> {
        let mut c = case.clone();
        match *self {
            SweepParam::VMax { bus } => {
                c.bus_mut(bus).ok_or_else(|| anyhow!("no bus {bus}"))?.v_max = value;
            }
            SweepParam::QMin { bus } => {
                c.generator_at_mut(bus)
                    .ok_or_else(|| anyhow!("no generator at bus {bus}"))?
                    .q_min = value;
            }
            SweepParam::SMax { from, to } => {
                let brs = c.branches_between_mut(from, to);
                if brs.is_empty() {
                    bail!("no branch between buses {from} and {to}");
                }
                for br in brs {
                    br.s_max = value;
                }
            }
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub param: SweepParam,
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
    /// Points are rounded to this many decimals.
    pub decimals: usize,
}

fn decimals_of(s: &str) -> usize {
    s.split_once('.').map_or(0, |(_, f)| f.len())
}

impl SweepSpec {
    /// `PARAM:LO:HI:N`; the points keep the number of decimals written in
    /// `LO` and `HI`.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let [param, lo_s, hi_s, n_s] = parts.as_slice() else {
            bail!("sweep must be PARAM:LO:HI:N, got '{s}'");
        };
        let lo: f64 = lo_s.parse().with_context(|| format!("bad lower value '{lo_s}'"))?;
        let hi: f64 = hi_s.parse().with_context(|| format!("bad upper value '{hi_s}'"))?;
        let points: usize = n_s.parse().with_context(|| format!("bad point count '{n_s}'"))?;
        if !(lo <= hi) || points == 0 {
            bail!("sweep needs LO <= HI and at least one point");
        }
        Ok(Self {
            param: SweepParam::parse(param)?,
            lo,
            hi,
            points,
            decimals: decimals_of(lo_s).max(decimals_of(hi_s)),
        })
    }

    pub fn values(&self) -> Vec<f64> {
        let scale = 10f64.powi(self.decimals as i32);
        (0..self.points)
            .map(|i| {
                let t = if self.points == 1 {
                    0.0
                } else {
                    i as f64 / (self.points - 1) as f64
                };
                ((self.lo + t * (self.hi - self.lo)) * scale).round() / scale
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub param_value: f64,
    pub order: Option<usize>,
    pub optimal_value: Option<f64>,
    pub rank_relax_value: Option<f64>,
    pub rank_exact: bool,
    pub status: String,
    #[serde(skip)]
    pub decimals: usize,
}

/// Rank values within half a cent of the optimum count as exact.
pub const REPORT_PRECISION: f64 = 0.005;

pub fn run_sweep(case: &NetworkCase, spec: &SweepSpec, cfg: &SolveConfig) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for v in spec.values() {
        let c = spec.param.apply(case, v)?;
        let rank = match rank_relaxation_value(&c, cfg.tol) {
            Ok(r) => r,
            Err(e) => {
                log::warn!("rank relaxation at {v}: {e:#}");
                None
            }
        };
        let mut row = SweepRow {
            param_value: v,
            order: None,
            optimal_value: None,
            rank_relax_value: rank,
            rank_exact: false,
            status: String::new(),
            decimals: spec.decimals,
        };
        match run_solve(&c, cfg) {
            Ok(rep) => {
                row.status = rep.certificate.verdict.to_string();
                if rep.outcome == Outcome::Certified {
                    row.order = Some(rep.order);
                    row.optimal_value = Some(rep.certificate.candidate_value);
                }
            }
            Err(e) => row.status = format!("error: {e:#}"),
        }
        row.rank_exact = matches!((row.optimal_value, rank),
            (Some(a), Some(b)) if (a - b).abs() <= REPORT_PRECISION);
        log::info!("{v}: {:?} {:?} {:?}", row.order, row.optimal_value, row.rank_relax_value);
        rows.push(row);
    }
    Ok(rows)
}

fn cell(v: Option<f64>, paren: bool) -> String {
    match v {
        None => "-".into(),
        Some(x) if paren => format!("({x:.2})"),
        Some(x) => format!("{x:.2}"),
    }
}

/// Aligned text table; inexact rank-relaxation values are parenthesized.
pub fn render_table(header: &str, rows: &[SweepRow]) -> String {
    let heads = [header, "order", "optimal ($/h)", "rank relax. ($/h)"];
    let body: Vec<[String; 4]> = rows
        .iter()
        .map(|r| {
            [
                format!("{:.*}", r.decimals, r.param_value),
                r.order.map_or("-".into(), |d| d.to_string()),
                cell(r.optimal_value, false),
                cell(r.rank_relax_value, !r.rank_exact),
            ]
        })
        .collect();
    let mut width = heads.map(str::len);
    for r in &body {
        for (w, c) in width.iter_mut().zip(r) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |cells: [&str; 4], out: &mut String| {
        let s: Vec<String> = cells
            .iter()
            .zip(width)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let _ = writeln!(out, "{}", s.join(" | "));
    };
    line(heads, &mut out);
    let _ = writeln!(
        out,
        "{}",
        width.map(|w| "-".repeat(w)).join("-+-")
    );
    for r in &body {
        line([&r[0], &r[1], &r[2], &r[3]], &mut out);
    }
    out
}

pub fn render_csv(rows: &[SweepRow]) -> String {
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.6}"));
    let mut out = String::from("param,order,optimal,rank_relax,rank_exact,status\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.*},{},{},{},{},{}",
            r.decimals,
            r.param_value,
            r.order.map_or(String::new(), |d| d.to_string()),
            opt(r.optimal_value),
            opt(r.rank_relax_value),
            r.rank_exact,
            r.status
        );
    }
    out
}

/// Replaces every generator cost by the squared deviation from a plan;
/// generators without a planned output cost nothing.
pub fn apply_plan(case: &mut NetworkCase, plan: &[(usize, f64)]) -> Result<()> {
    for &(bus, _) in plan {
        if case.generators.iter().all(|g| g.bus != bus) {
            bail!("no generator at bus {bus}");
        }
    }
    for g in &mut case.generators {
        let (c2, c1, c0) = match plan.iter().find(|(b, _)| *b == g.bus) {
            Some(&(_, p)) => (1.0, -2.0 * p, p * p),
            None => (0.0, 0.0, 0.0),
        };
        g.c2 = c2;
        g.c1 = c1;
        g.c0 = c0;
    }
    Ok(())
}

/// `BUS=MW,BUS=MW,...`
pub fn parse_plan(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .map(|item| {
            let (b, p) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("plan entry '{item}' must be BUS=MW"))?;
            Ok((
                b.trim().parse().with_context(|| format!("bad bus '{b}'"))?,
                p.trim().parse().with_context(|| format!("bad output '{p}'"))?,
            ))
        })
        .collect()
}

pub fn render_report(case: &NetworkCase, rep: &SolveReport) -> String {
    let mut out = String::new();
    for s in &rep.steps {
        let _ = writeln!(
            out,
            "order {}: relaxation {:.2} $/h ({}, {}, {} iterations, {:.1} s) -> {}",
            s.order, s.relax_value, s.sdp_status, s.precision, s.iterations, s.seconds, s.verdict
        );
    }
    let c = &rep.certificate;
    match rep.outcome {
        Outcome::Infeasible => {
            let _ = writeln!(out, "problem is infeasible");
            return out;
        }
        Outcome::Certified => {
            let _ = writeln!(out, "global optimum {:.2} $/h at order {}", c.candidate_value, rep.order);
        }
        Outcome::OrderBudgetExhausted => {
            let _ = writeln!(
                out,
                "not certified up to order {}: candidate {:.2} $/h, violation {:.2e}",
                rep.order, c.candidate_value, c.max_violation
            );
        }
    }
    let _ = writeln!(
        out,
        "gap {:.2e}, max violation {:.2e}, moment matrix rank {}",
        c.gap, c.max_violation, c.moment_matrix_rank
    );
    if let Some(sol) = &rep.solution {
        let _ = writeln!(out, "bus   |v| (p.u.)   angle (deg)");
        for (b, v) in case.buses.iter().zip(&sol.voltages) {
            let _ = writeln!(out, "{:>3} {:>12.4} {:>13.4}", b.id, v.norm(), v.arg().to_degrees());
        }
        let _ = writeln!(out, "gen bus   p (MW)   q (MVAr)");
        for (g, (p, q)) in case.generators.iter().zip(sol.p_gen.iter().zip(&sol.q_gen)) {
            let _ = writeln!(out, "{:>7} {:>8.2} {:>10.2}", g.bus, p, q);
        }
    }
    out
}
