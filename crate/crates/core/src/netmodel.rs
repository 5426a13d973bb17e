//! Network data, case-file parsing and the bus admittance matrix.
//!
//! Powers are kept in MW / MVAr / MVA as in case files, admittances and
//! voltages in per-unit on `base_mva`. Generator cost coefficients are in
//! $/h, $/MWh and $/MW^2h.

use std::collections::HashMap;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::CaseError;

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub p_dem: f64,
    pub q_dem: f64,
    pub v_min: f64,
    pub v_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Line or transformer. Absent limits are `f64::INFINITY`.
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub from: usize,
    pub to: usize,
    pub y: Complex64,
    pub y_gr_from: Complex64,
    pub y_gr_to: Complex64,
    pub rho_from: Complex64,
    pub rho_to: Complex64,
    /// p.u.
    pub i_max: f64,
    /// p.u.
    pub vdiff_max: f64,
    /// MW
    pub p_max: f64,
    /// MVA
    pub s_max: f64,
}

impl Branch {
    /// Plain line with series admittance `y` and no shunts or transformers.
    pub fn line(from: usize, to: usize, y: Complex64) -> Self {
        Self {
            from,
            to,
            y,
            y_gr_from: Complex64::new(0.0, 0.0),
            y_gr_to: Complex64::new(0.0, 0.0),
            rho_from: Complex64::new(1.0, 0.0),
            rho_to: Complex64::new(1.0, 0.0),
            i_max: f64::INFINITY,
            vdiff_max: f64::INFINITY,
            p_max: f64::INFINITY,
            s_max: f64::INFINITY,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

/// One end of a branch: `i = a v_near + b v_far` with the quantities below
/// referring to the near end.
#[derive(Clone, Copy, Debug)]
pub struct BranchEnd {
    pub branch: usize,
    /// bus index (position), not id
    pub near: usize,
    pub far: usize,
    pub a: Complex64,
    pub b: Complex64,
}

impl NetworkCase {
    pub fn n(&self) -> usize {
        self.buses.len()
    }

    /// Position of the bus with the given id.
    pub fn bus_index(&self, id: usize) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn generator_at(&self, bus_pos: usize) -> Option<&Generator> {
        let id = self.buses[bus_pos].id;
        self.generators.iter().find(|g| g.bus == id)
    }

    pub fn generator_at_mut(&mut self, bus_id: usize) -> Option<&mut Generator> {
        self.generators.iter_mut().find(|g| g.bus == bus_id)
    }

    pub fn bus_mut(&mut self, bus_id: usize) -> Option<&mut Bus> {
        self.buses.iter_mut().find(|b| b.id == bus_id)
    }

    /// Branches joining the two buses, in either orientation.
    pub fn branches_between_mut(&mut self, a: usize, b: usize) -> Vec<&mut Branch> {
        self.branches
            .iter_mut()
            .filter(|br| (br.from == a && br.to == b) || (br.from == b && br.to == a))
            .collect()
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if !(self.base_mva > 0.0) {
            return Err(CaseError::Invalid {
                line: 0,
                msg: format!("base MVA must be positive, got {}", self.base_mva),
            });
        }
        if self.buses.is_empty() {
            return Err(CaseError::Invalid {
                line: 0,
                msg: "case has no buses".into(),
            });
        }
        let mut seen = HashMap::new();
        for b in &self.buses {
            if seen.insert(b.id, ()).is_some() {
                return Err(CaseError::DuplicateBus { line: 0, bus: b.id });
            }
            check_bus(b, 0)?;
        }
        let mut gen_buses = HashMap::new();
        for g in &self.generators {
            if !seen.contains_key(&g.bus) {
                return Err(CaseError::MissingBus { line: 0, bus: g.bus });
            }
            if gen_buses.insert(g.bus, ()).is_some() {
                return Err(CaseError::DuplicateGenerator { line: 0, bus: g.bus });
            }
            check_gen(g, 0)?;
        }
        for br in &self.branches {
            for id in [br.from, br.to] {
                if !seen.contains_key(&id) {
                    return Err(CaseError::MissingBus { line: 0, bus: id });
                }
            }
            check_branch(br, 0)?;
        }
        Ok(())
    }

    /// Both directed orientations of every branch.
    pub fn branch_ends(&self) -> Vec<BranchEnd> {
        let mut out = Vec::with_capacity(2 * self.branches.len());
        for (k, br) in self.branches.iter().enumerate() {
            let l = self.bus_index(br.from).expect("validated case");
            let m = self.bus_index(br.to).expect("validated case");
            out.push(BranchEnd {
                branch: k,
                near: l,
                far: m,
                a: (br.y + br.y_gr_from) / br.rho_from.norm_sqr(),
                b: -br.y / (br.rho_to * br.rho_from.conj()),
            });
            out.push(BranchEnd {
                branch: k,
                near: m,
                far: l,
                a: (br.y + br.y_gr_to) / br.rho_to.norm_sqr(),
                b: -br.y / (br.rho_from * br.rho_to.conj()),
            });
        }
        out
    }
}

fn check_bus(b: &Bus, line: usize) -> Result<(), CaseError> {
    if !(b.v_min >= 0.0 && b.v_min <= b.v_max) {
        return Err(CaseError::Invalid {
            line,
            msg: format!("bus {}: need 0 <= vmin <= vmax", b.id),
        });
    }
    Ok(())
}

fn check_gen(g: &Generator, line: usize) -> Result<(), CaseError> {
    if g.p_min > g.p_max || g.q_min > g.q_max {
        return Err(CaseError::Invalid {
            line,
            msg: format!("generator at bus {}: lower bound above upper bound", g.bus),
        });
    }
    Ok(())
}

fn check_branch(br: &Branch, line: usize) -> Result<(), CaseError> {
    if br.rho_from == Complex64::new(0.0, 0.0) || br.rho_to == Complex64::new(0.0, 0.0) {
        return Err(CaseError::ZeroRatio { line });
    }
    if br.from == br.to {
        return Err(CaseError::Invalid {
            line,
            msg: format!("branch connects bus {} to itself", br.from),
        });
    }
    for (name, v) in [
        ("i_max", br.i_max),
        ("vdiff_max", br.vdiff_max),
        ("p_max", br.p_max),
        ("s_max", br.s_max),
    ] {
        if v.is_nan() || v < 0.0 {
            return Err(CaseError::Invalid {
                line,
                msg: format!("branch {}-{}: {name} must be nonnegative", br.from, br.to),
            });
        }
    }
    Ok(())
}

/// Dense square complex matrix, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn mul_vec(&self, v: &[Complex64]) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self[(i, j)] * v[j]).sum())
            .collect()
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                out[(i, j)] = self[(j, i)].conj();
            }
        }
        out
    }

    /// `v^H M v`.
    pub fn quad_form(&self, v: &[Complex64]) -> Complex64 {
        let mv = self.mul_vec(v);
        v.iter().zip(&mv).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| (self[(i, j)] - self[(j, i)].conj()).norm() <= tol))
    }
}

impl std::ops::Index<(usize, usize)> for CMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.data[i * self.n + j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdmittanceMatrix {
    pub n: usize,
    pub entries: CMatrix,
}

pub fn build_admittance(case: &NetworkCase) -> AdmittanceMatrix {
    let n = case.n();
    let mut y = CMatrix::zeros(n);
    for e in case.branch_ends() {
        y[(e.near, e.near)] += e.a;
        y[(e.near, e.far)] += e.b;
    }
    AdmittanceMatrix { n, entries: y }
}

// ---------------------------------------------------------------------------
// native format

/// Parses either the native format or a MATPOWER case file.
pub fn parse_case(text: &str) -> Result<NetworkCase, CaseError> {
    if text.contains("mpc.") {
        parse_matpower(text)
    } else {
        parse_native(text)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Section {
    None,
    Bus,
    Gen,
    Branch,
}

pub fn parse_native(text: &str) -> Result<NetworkCase, CaseError> {
    let mut base = None;
    let mut section = Section::None;
    let mut buses: Vec<(usize, Bus)> = Vec::new();
    let mut gens: Vec<(usize, Generator)> = Vec::new();
    let mut branches: Vec<(usize, Branch)> = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let fields: Vec<&str> = body.split_whitespace().collect();
        match fields[0].to_ascii_uppercase().as_str() {
            "BASEMVA" => {
                if fields.len() != 2 {
                    return Err(syntax(line, "BASEMVA takes one value"));
                }
                base = Some(real(fields[1], line)?);
                continue;
            }
            "BUS" if fields.len() == 1 => {
                section = Section::Bus;
                continue;
            }
            "GEN" if fields.len() == 1 => {
                section = Section::Gen;
                continue;
            }
            "BRANCH" if fields.len() == 1 => {
                section = Section::Branch;
                continue;
            }
            _ => {}
        }
        match section {
            Section::None => return Err(syntax(line, "data before any BUS/GEN/BRANCH section")),
            Section::Bus => {
                expect_len(&fields, 5, line, "bus: id pd qd vmin vmax")?;
                let b = Bus {
                    id: int(fields[0], line)?,
                    p_dem: real(fields[1], line)?,
                    q_dem: real(fields[2], line)?,
                    v_min: real(fields[3], line)?,
                    v_max: real(fields[4], line)?,
                };
                buses.push((line, b));
            }
            Section::Gen => {
                expect_len(&fields, 8, line, "gen: bus pmin pmax qmin qmax c2 c1 c0")?;
                let g = Generator {
                    bus: int(fields[0], line)?,
                    p_min: real(fields[1], line)?,
                    p_max: real(fields[2], line)?,
                    q_min: real(fields[3], line)?,
                    q_max: real(fields[4], line)?,
                    c2: real(fields[5], line)?,
                    c1: real(fields[6], line)?,
                    c0: real(fields[7], line)?,
                };
                gens.push((line, g));
            }
            Section::Branch => {
                expect_len(
                    &fields,
                    11,
                    line,
                    "branch: from to y ygr_from ygr_to rho_from rho_to i_max vdiff_max p_max s_max",
                )?;
                let br = Branch {
                    from: int(fields[0], line)?,
                    to: int(fields[1], line)?,
                    y: complex(fields[2], line)?,
                    y_gr_from: complex(fields[3], line)?,
                    y_gr_to: complex(fields[4], line)?,
                    rho_from: complex(fields[5], line)?,
                    rho_to: complex(fields[6], line)?,
                    i_max: real(fields[7], line)?,
                    vdiff_max: real(fields[8], line)?,
                    p_max: real(fields[9], line)?,
                    s_max: real(fields[10], line)?,
                };
                branches.push((line, br));
            }
        }
    }
    let base = base.ok_or_else(|| syntax(1, "missing BASEMVA"))?;
    assemble(base, buses, gens, branches)
}

/// Checks references with line numbers, then the whole case.
fn assemble(
    base_mva: f64,
    buses: Vec<(usize, Bus)>,
    gens: Vec<(usize, Generator)>,
    branches: Vec<(usize, Branch)>,
) -> Result<NetworkCase, CaseError> {
    let mut ids = HashMap::new();
    for (line, b) in &buses {
        if ids.insert(b.id, *line).is_some() {
            return Err(CaseError::DuplicateBus { line: *line, bus: b.id });
        }
        check_bus(b, *line)?;
    }
    let mut gen_at = HashMap::new();
    for (line, g) in &gens {
        if !ids.contains_key(&g.bus) {
            return Err(CaseError::MissingBus { line: *line, bus: g.bus });
        }
        if gen_at.insert(g.bus, *line).is_some() {
            return Err(CaseError::DuplicateGenerator { line: *line, bus: g.bus });
        }
        check_gen(g, *line)?;
    }
    for (line, br) in &branches {
        for id in [br.from, br.to] {
            if !ids.contains_key(&id) {
                return Err(CaseError::MissingBus { line: *line, bus: id });
            }
        }
        check_branch(br, *line)?;
    }
    let case = NetworkCase {
        base_mva,
        buses: buses.into_iter().map(|(_, b)| b).collect(),
        generators: gens.into_iter().map(|(_, g)| g).collect(),
        branches: branches.into_iter().map(|(_, b)| b).collect(),
    };
    case.validate()?;
    Ok(case)
}

fn syntax(line: usize, msg: &str) -> CaseError {
    CaseError::Syntax {
        line,
        msg: msg.to_string(),
    }
}

fn expect_len(fields: &[&str], n: usize, line: usize, what: &str) -> Result<(), CaseError> {
    if fields.len() != n {
        return Err(syntax(
            line,
            &format!("expected {n} fields ({what}), found {}", fields.len()),
        ));
    }
    Ok(())
}

fn real(s: &str, line: usize) -> Result<f64, CaseError> {
    s.parse::<f64>()
        .map_err(|_| syntax(line, &format!("invalid number '{s}'")))
}

fn int(s: &str, line: usize) -> Result<usize, CaseError> {
    if let Ok(v) = s.parse::<usize>() {
        return Ok(v);
    }
    match s.parse::<f64>() {
        Ok(v) if v >= 0.0 && v.fract() == 0.0 && v < 1e15 => Ok(v as usize),
        _ => Err(syntax(line, &format!("invalid bus id '{s}'"))),
    }
}

/// `re`, `imj`, `re+imj` or `re-imj`.
pub fn parse_complex(s: &str) -> Option<Complex64> {
    let Some(body) = s.strip_suffix('j').or_else(|| s.strip_suffix('i')) else {
        return s.parse::<f64>().ok().map(|re| Complex64::new(re, 0.0));
    };
    let bytes = body.as_bytes();
    let split = (1..bytes.len())
        .rev()
        .find(|&k| (bytes[k] == b'+' || bytes[k] == b'-') && !matches!(bytes[k - 1], b'e' | b'E'));
    let (re, im) = match split {
        Some(k) => (body[..k].parse::<f64>().ok()?, &body[k..]),
        None => (0.0, body),
    };
    let im = match im {
        "" | "+" => 1.0,
        "-" => -1.0,
        other => other.parse::<f64>().ok()?,
    };
    Some(Complex64::new(re, im))
}

fn complex(s: &str, line: usize) -> Result<Complex64, CaseError> {
    parse_complex(s).ok_or_else(|| syntax(line, &format!("invalid complex number '{s}'")))
}

pub fn format_complex(z: Complex64) -> String {
    if z.im == 0.0 && z.im.is_sign_positive() {
        format!("{}", z.re)
    } else {
        format!("{}{:+}j", z.re, z.im)
    }
}

pub fn write_native(case: &NetworkCase) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "BASEMVA {}", case.base_mva);
    let _ = writeln!(out, "BUS");
    let _ = writeln!(out, "# id pd qd vmin vmax");
    for b in &case.buses {
        let _ = writeln!(out, "{} {} {} {} {}", b.id, b.p_dem, b.q_dem, b.v_min, b.v_max);
    }
    let _ = writeln!(out, "GEN");
    let _ = writeln!(out, "# bus pmin pmax qmin qmax c2 c1 c0");
    for g in &case.generators {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {}",
            g.bus, g.p_min, g.p_max, g.q_min, g.q_max, g.c2, g.c1, g.c0
        );
    }
    let _ = writeln!(out, "BRANCH");
    let _ = writeln!(
        out,
        "# from to y ygr_from ygr_to rho_from rho_to i_max vdiff_max p_max s_max"
    );
    for br in &case.branches {
        let _ = writeln!(
            out,
            "{} {} {} {} {} {} {} {} {} {} {}",
            br.from,
            br.to,
            format_complex(br.y),
            format_complex(br.y_gr_from),
            format_complex(br.y_gr_to),
            format_complex(br.rho_from),
            format_complex(br.rho_to),
            br.i_max,
            br.vdiff_max,
            br.p_max,
            br.s_max
        );
    }
    out
}

// ---------------------------------------------------------------------------
// MATPOWER subset

struct MpTable {
    rows: Vec<(usize, Vec<f64>)>,
}

fn matpower_tables(text: &str) -> Result<(Option<f64>, HashMap<String, MpTable>), CaseError> {
    let mut base = None;
    let mut tables = HashMap::new();
    let mut current: Option<(String, MpTable)> = None;
    for (ln, raw) in text.lines().enumerate() {
        let line = ln + 1;
        let mut body = raw.split('%').next().unwrap_or("").trim().to_string();
        if current.is_none() {
            let Some(rest) = body.strip_prefix("mpc.") else {
                continue;
            };
            let Some((name, value)) = rest.split_once('=') else {
                continue;
            };
            let name = name.trim().to_string();
            let value = value.trim();
            if name == "baseMVA" {
                let v = value.trim_end_matches(';').trim();
                base = Some(real(v, line)?);
                continue;
            }
            let Some(after) = value.strip_prefix('[') else {
                continue;
            };
            current = Some((name, MpTable { rows: Vec::new() }));
            body = after.to_string();
        }
        let (name, table) = current.as_mut().expect("inside a table");
        let (content, closed) = match body.find(']') {
            Some(p) => (body[..p].to_string(), true),
            None => (body.clone(), false),
        };
        for row in content.split(';') {
            let vals: Vec<&str> = row
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .collect();
            if vals.is_empty() {
                continue;
            }
            let nums = vals
                .iter()
                .map(|s| real(s, line))
                .collect::<Result<Vec<_>, _>>()?;
            table.rows.push((line, nums));
        }
        if closed {
            let (name, table) = current.take().expect("inside a table");
            tables.insert(name, table);
        } else {
            let _ = name;
        }
    }
    if let Some((name, table)) = current {
        let line = table.rows.last().map_or(1, |r| r.0);
        return Err(syntax(line, &format!("table mpc.{name} is not closed")));
    }
    Ok((base, tables))
}

pub fn parse_matpower(text: &str) -> Result<NetworkCase, CaseError> {
    let (base, mut tables) = matpower_tables(text)?;
    let base = base.ok_or_else(|| syntax(1, "missing mpc.baseMVA"))?;
    let mut take = |name: &str| {
        tables
            .remove(name)
            .ok_or_else(|| syntax(1, &format!("missing table mpc.{name}")))
    };
    let bus_t = take("bus")?;
    let gen_t = take("gen")?;
    let branch_t = take("branch")?;
    let cost_t = take("gencost")?;

    let need = |row: &(usize, Vec<f64>), n: usize, what: &str| -> Result<(), CaseError> {
        if row.1.len() < n {
            return Err(syntax(
                row.0,
                &format!("{what} row needs at least {n} columns, found {}", row.1.len()),
            ));
        }
        Ok(())
    };
    let mut buses = Vec::new();
    for row in &bus_t.rows {
        need(row, 13, "bus")?;
        let r = &row.1;
        if r[4] != 0.0 || r[5] != 0.0 {
            return Err(CaseError::Invalid {
                line: row.0,
                msg: "bus shunts (Gs, Bs) are not supported".into(),
            });
        }
        buses.push((
            row.0,
            Bus {
                id: int_f(r[0], row.0)?,
                p_dem: r[2],
                q_dem: r[3],
                v_min: r[12],
                v_max: r[11],
            },
        ));
    }
    if cost_t.rows.len() < gen_t.rows.len() {
        return Err(syntax(
            cost_t.rows.last().map_or(1, |r| r.0),
            "fewer gencost rows than generators",
        ));
    }
    let mut gens = Vec::new();
    for (row, cost) in gen_t.rows.iter().zip(&cost_t.rows) {
        need(row, 10, "gen")?;
        need(cost, 4, "gencost")?;
        let r = &row.1;
        if r[7] <= 0.0 {
            continue;
        }
        let c = &cost.1;
        if c[0] != 2.0 {
            return Err(CaseError::Invalid {
                line: cost.0,
                msg: "only polynomial cost (model 2) is supported".into(),
            });
        }
        let ncost = int_f(c[3], cost.0)?;
        if ncost > 3 || c.len() < 4 + ncost {
            return Err(CaseError::Invalid {
                line: cost.0,
                msg: format!("polynomial cost with {ncost} coefficients is not supported"),
            });
        }
        let mut coef = [0.0; 3];
        for k in 0..ncost {
            // highest degree first
            coef[ncost - 1 - k] = c[4 + k];
        }
        gens.push((
            row.0,
            Generator {
                bus: int_f(r[0], row.0)?,
                p_min: r[9],
                p_max: r[8],
                q_min: r[4],
                q_max: r[3],
                c0: coef[0],
                c1: coef[1],
                c2: coef[2],
            },
        ));
    }
    let mut branches = Vec::new();
    for row in &branch_t.rows {
        need(row, 11, "branch")?;
        let r = &row.1;
        if r[10] <= 0.0 {
            continue;
        }
        let z = Complex64::new(r[2], r[3]);
        if z.norm() == 0.0 {
            return Err(CaseError::Invalid {
                line: row.0,
                msg: "branch with zero impedance".into(),
            });
        }
        let ratio = if r[8] == 0.0 { 1.0 } else { r[8] };
        let shift = r[9].to_radians();
        let rate = if r[5] == 0.0 { f64::INFINITY } else { r[5] };
        let mut br = Branch::line(int_f(r[0], row.0)?, int_f(r[1], row.0)?, Complex64::new(1.0, 0.0) / z);
        br.y_gr_from = Complex64::new(0.0, r[4] / 2.0);
        br.y_gr_to = br.y_gr_from;
        br.rho_from = Complex64::from_polar(ratio, shift);
        br.s_max = rate;
        branches.push((row.0, br));
    }
    assemble(base, buses, gens, branches)
}

fn int_f(v: f64, line: usize) -> Result<usize, CaseError> {
    if v >= 0.0 && v.fract() == 0.0 {
        Ok(v as usize)
    } else {
        Err(syntax(line, &format!("invalid bus id {v}")))
    }
}
