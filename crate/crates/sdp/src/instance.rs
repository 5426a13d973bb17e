//! Problem data in linear-matrix-inequality form.
//!
//! ```text
//! minimize    c^T y + c0
//! subject to  F_j0 + sum_i y_i F_ji  PSD   for every block j
//!             a_k^T y = r_k                for every equality k
//! ```

use std::collections::BTreeMap;

use crate::SdpError;

/// Symmetric matrix stored by its upper triangle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseSym {
    n: usize,
    entries: BTreeMap<(usize, usize), f64>,
}

impl SparseSym {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            entries: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    /// Adds `v` to entry `(i, j)` and, implicitly, to `(j, i)`.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        assert!(i < self.n && j < self.n, "entry ({i}, {j}) outside {0}x{0}", self.n);
        let key = if i <= j { (i, j) } else { (j, i) };
        let e = self.entries.entry(key).or_insert(0.0);
        *e += v;
        if *e == 0.0 {
            self.entries.remove(&key);
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.entries.get(&key).copied().unwrap_or(0.0)
    }

    /// Upper-triangle entries `(i, j, v)` with `i <= j`.
    pub fn upper(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn nnz_upper(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `self += s * other`.
    pub fn add_scaled(&mut self, s: f64, other: &SparseSym) {
        debug_assert_eq!(self.n, other.n);
        for (i, j, v) in other.upper() {
            self.add(i, j, s * v);
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = Self::new(self.n);
        out.add_scaled(s, self);
        out
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.upper()
            .map(|(i, j, v)| if i == j { v * v } else { 2.0 * v * v })
            .sum::<f64>()
            .sqrt()
    }

    pub fn to_dense(&self) -> crate::Mat<f64> {
        let mut m = crate::Mat::zeros(self.n, self.n);
        for (i, j, v) in self.upper() {
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m
    }

    /// Frobenius inner product with a dense symmetric matrix.
    pub fn inner_dense(&self, m: &crate::Mat<f64>) -> f64 {
        self.upper()
            .map(|(i, j, v)| if i == j { v * m[(i, j)] } else { v * (m[(i, j)] + m[(j, i)]) })
            .sum()
    }
}

/// One affine matrix map `F_0 + sum_i y_i F_i` constrained to be PSD.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiBlock {
    size: usize,
    constant: SparseSym,
    coeffs: BTreeMap<usize, SparseSym>,
}

impl LmiBlock {
    pub fn new(size: usize) -> Self {
        Self {
            size,
            constant: SparseSym::new(size),
            coeffs: BTreeMap::new(),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Adds `v * y_var` (or the constant `v` when `var` is `None`) at `(i, j)`
    /// and its mirror.
    pub fn add(&mut self, var: Option<usize>, i: usize, j: usize, v: f64) {
        match var {
            None => self.constant.add(i, j, v),
            Some(k) => {
                let size = self.size;
                let m = self.coeffs.entry(k).or_insert_with(|| SparseSym::new(size));
                m.add(i, j, v);
                if m.is_empty() {
                    self.coeffs.remove(&k);
                }
            }
        }
    }

    pub fn constant(&self) -> &SparseSym {
        &self.constant
    }

    pub fn coeffs(&self) -> impl Iterator<Item = (usize, &SparseSym)> {
        self.coeffs.iter().map(|(&k, m)| (k, m))
    }

    pub fn coeff(&self, var: usize) -> Option<&SparseSym> {
        self.coeffs.get(&var)
    }

    /// Dense value of the map at `y`.
    pub fn evaluate(&self, y: &[f64]) -> crate::Mat<f64> {
        let mut m = self.constant.to_dense();
        for (k, f) in self.coeffs() {
            for (i, j, v) in f.upper() {
                m[(i, j)] += y[k] * v;
                if i != j {
                    m[(j, i)] += y[k] * v;
                }
            }
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearEquality {
    pub coeffs: Vec<(usize, f64)>,
    pub rhs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpInstance {
    nvars: usize,
    objective: Vec<f64>,
    objective_constant: f64,
    blocks: Vec<LmiBlock>,
    equalities: Vec<LinearEquality>,
}

impl SdpInstance {
    pub fn new(nvars: usize) -> Self {
        Self {
            nvars,
            objective: vec![0.0; nvars],
            objective_constant: 0.0,
            blocks: Vec::new(),
            equalities: Vec::new(),
        }
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn set_objective(&mut self, var: usize, c: f64) {
        self.objective[var] = c;
    }

    pub fn add_objective(&mut self, var: usize, c: f64) {
        self.objective[var] += c;
    }

    pub fn set_objective_constant(&mut self, c0: f64) {
        self.objective_constant = c0;
    }

    pub fn objective(&self) -> &[f64] {
        &self.objective
    }

    pub fn objective_constant(&self) -> f64 {
        self.objective_constant
    }

    pub fn add_block(&mut self, block: LmiBlock) -> usize {
        self.blocks.push(block);
        self.blocks.len() - 1
    }

    pub fn blocks(&self) -> &[LmiBlock] {
        &self.blocks
    }

    pub fn add_equality(&mut self, coeffs: Vec<(usize, f64)>, rhs: f64) {
        self.equalities.push(LinearEquality { coeffs, rhs });
    }

    pub fn equalities(&self) -> &[LinearEquality] {
        &self.equalities
    }

    pub fn objective_value(&self, y: &[f64]) -> f64 {
        self.objective.iter().zip(y).map(|(c, v)| c * v).sum::<f64>() + self.objective_constant
    }

    pub fn validate(&self) -> Result<(), SdpError> {
        for (b, blk) in self.blocks.iter().enumerate() {
            if blk.size == 0 {
                return Err(SdpError::Invalid(format!("block {b} has size 0")));
            }
            if let Some((&k, _)) = blk.coeffs.iter().find(|(&k, _)| k >= self.nvars) {
                return Err(SdpError::Invalid(format!(
                    "block {b} references variable {k} of {}",
                    self.nvars
                )));
            }
        }
        for (e, eq) in self.equalities.iter().enumerate() {
            if let Some(&(k, _)) = eq.coeffs.iter().find(|(k, _)| *k >= self.nvars) {
                return Err(SdpError::Invalid(format!(
                    "equality {e} references variable {k} of {}",
                    self.nvars
                )));
            }
        }
        let bad = |v: f64| !v.is_finite();
        if self.objective.iter().any(|&v| bad(v)) || bad(self.objective_constant) {
            return Err(SdpError::Invalid("non-finite objective coefficient".into()));
        }
        Ok(())
    }

    /// Eliminates the equalities by substitution.
    pub fn reduce(&self) -> Result<ReducedInstance, SdpError> {
        self.validate()?;
        let n = self.nvars;
        // row-reduce [a | r] with partial pivoting on the largest entry
        let mut rows: Vec<Vec<f64>> = self
            .equalities
            .iter()
            .map(|eq| {
                let mut r = vec![0.0; n + 1];
                for &(k, v) in &eq.coeffs {
                    r[k] += v;
                }
                r[n] = eq.rhs;
                r
            })
            .collect();
        let scale = rows
            .iter()
            .flat_map(|r| r[..n].iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let mut pivots: Vec<usize> = Vec::new();
        let mut used = 0;
        for _ in 0..rows.len() {
            let mut best = (0.0, 0, 0);
            for (r, row) in rows.iter().enumerate().skip(used) {
                for (k, &v) in row[..n].iter().enumerate() {
                    if v.abs() > best.0 {
                        best = (v.abs(), r, k);
                    }
                }
            }
            // what is left is rounding noise of dependent rows
            if best.0 <= 1e-11 * scale {
                break;
            }
            let (_, r, k) = best;
            rows.swap(used, r);
            let p = rows[used][k];
            for v in rows[used].iter_mut() {
                *v /= p;
            }
            let prow = rows[used].clone();
            for (r2, row) in rows.iter_mut().enumerate() {
                if r2 != used && row[k] != 0.0 {
                    let f = row[k];
                    for (v, pv) in row.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
            pivots.push(k);
            used += 1;
        }
        for row in &rows[used..] {
            if row[n].abs() > 1e-9 * (1.0 + scale) {
                return Err(SdpError::Invalid("inconsistent equality constraints".into()));
            }
        }
        log::debug!("{} equalities, rank {used}", rows.len());
        rows.truncate(used);

        let mut is_pivot = vec![None; n];
        for (r, &k) in pivots.iter().enumerate() {
            is_pivot[k] = Some(r);
        }
        // y_p = rows[r][n] - sum_{j free} rows[r][j] y_j
        let mut free_index = vec![usize::MAX; n];
        let mut free_vars = Vec::new();
        for k in 0..n {
            if is_pivot[k].is_none() {
                free_index[k] = free_vars.len();
                free_vars.push(k);
            }
        }
        let expand = |k: usize| -> (f64, Vec<(usize, f64)>) {
            match is_pivot[k] {
                None => (0.0, vec![(free_index[k], 1.0)]),
                Some(r) => {
                    let row = &rows[r];
                    let terms = (0..n)
                        .filter(|&j| is_pivot[j].is_none() && row[j] != 0.0)
                        .map(|j| (free_index[j], -row[j]))
                        .collect();
                    (row[n], terms)
                }
            }
        };
        let recover: Vec<(f64, Vec<(usize, f64)>)> = (0..n).map(expand).collect();

        let nf = free_vars.len();
        let mut c = vec![0.0; nf];
        let mut c0 = self.objective_constant;
        for (k, &ck) in self.objective.iter().enumerate() {
            if ck == 0.0 {
                continue;
            }
            let (k0, terms) = &recover[k];
            c0 += ck * k0;
            for &(j, v) in terms {
                c[j] += ck * v;
            }
        }
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let mut f0 = blk.constant.clone();
            let mut fs: BTreeMap<usize, SparseSym> = BTreeMap::new();
            for (k, f) in blk.coeffs() {
                let (k0, terms) = &recover[k];
                if *k0 != 0.0 {
                    f0.add_scaled(*k0, f);
                }
                for &(j, v) in terms {
                    fs.entry(j)
                        .or_insert_with(|| SparseSym::new(blk.size))
                        .add_scaled(v, f);
                }
            }
            fs.retain(|_, m| !m.is_empty());
            blocks.push(ReducedBlock {
                size: blk.size,
                f0,
                fs: fs.into_iter().collect(),
            });
        }
        Ok(ReducedInstance {
            nvars: nf,
            c,
            c0,
            blocks,
            recover,
            original_nvars: n,
        })
    }
}

/// Equality-free instance produced by [`SdpInstance::reduce`].
#[derive(Clone, Debug)]
pub struct ReducedInstance {
    pub nvars: usize,
    pub c: Vec<f64>,
    pub c0: f64,
    pub blocks: Vec<ReducedBlock>,
    /// Original variable `k` equals `recover[k].0 + sum recover[k].1[(j, v)] * z_j`.
    pub recover: Vec<(f64, Vec<(usize, f64)>)>,
    pub original_nvars: usize,
}

#[derive(Clone, Debug)]
pub struct ReducedBlock {
    pub size: usize,
    pub f0: SparseSym,
    pub fs: Vec<(usize, SparseSym)>,
}

impl ReducedInstance {
    pub fn expand(&self, z: &[f64]) -> Vec<f64> {
        self.recover
            .iter()
            .map(|(k0, terms)| k0 + terms.iter().map(|&(j, v)| v * z[j]).sum::<f64>())
            .collect()
    }

    /// Back to an (equality-free) [`SdpInstance`].
    pub fn to_instance(&self) -> SdpInstance {
        let mut inst = SdpInstance::new(self.nvars);
        inst.objective = self.c.clone();
        inst.objective_constant = self.c0;
        for b in &self.blocks {
            let mut blk = LmiBlock::new(b.size);
            blk.constant = b.f0.clone();
            for (k, f) in &b.fs {
                blk.coeffs.insert(*k, f.clone());
            }
            inst.add_block(blk);
        }
        inst
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_sym_mirrors_and_cancels() {
        let mut s = SparseSym::new(3);
        s.add(2, 0, 1.5);
        assert_eq!(s.get(0, 2), 1.5);
        s.add(0, 2, -1.5);
        assert!(s.is_empty());
        s.add(1, 1, 2.0);
        s.add(0, 1, 1.0);
        assert!((s.frobenius_norm() - 6f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn reduce_substitutes_fixed_variable() {
        // min y1  s.t. [[y0, y1], [y1, y0]] PSD, y0 = 1
        let mut inst = SdpInstance::new(2);
        inst.set_objective(1, 1.0);
        let mut b = LmiBlock::new(2);
        b.add(Some(0), 0, 0, 1.0);
        b.add(Some(0), 1, 1, 1.0);
        b.add(Some(1), 0, 1, 1.0);
        inst.add_block(b);
        inst.add_equality(vec![(0, 1.0)], 1.0);
        let red = inst.reduce().unwrap();
        assert_eq!(red.nvars, 1);
        assert_eq!(red.blocks[0].f0.get(0, 0), 1.0);
        assert_eq!(red.blocks[0].f0.get(1, 1), 1.0);
        assert_eq!(red.blocks[0].fs[0].1.get(0, 1), 1.0);
        assert_eq!(red.expand(&[-0.5]), vec![1.0, -0.5]);
    }

    #[test]
    fn reduce_handles_coupled_equalities() {
        let mut inst = SdpInstance::new(3);
        inst.set_objective(0, 1.0);
        inst.set_objective(2, 2.0);
        let mut b = LmiBlock::new(1);
        b.add(Some(1), 0, 0, 1.0);
        inst.add_block(b);
        inst.add_equality(vec![(0, 1.0), (1, 1.0)], 2.0);
        inst.add_equality(vec![(0, 2.0), (1, 2.0)], 4.0);
        inst.add_equality(vec![(2, 1.0), (1, -1.0)], 0.0);
        let red = inst.reduce().unwrap();
        assert_eq!(red.nvars, 1);
        let y = red.expand(&[0.25]);
        assert!((y[0] + y[1] - 2.0).abs() < 1e-14);
        assert!((y[2] - y[1]).abs() < 1e-14);
        let obj: f64 = red.c.iter().map(|c| c * 0.25).sum::<f64>() + red.c0;
        assert!((obj - inst.objective_value(&y)).abs() < 1e-14);
    }

    #[test]
    fn reduce_rejects_inconsistent() {
        let mut inst = SdpInstance::new(1);
        inst.add_block(LmiBlock::new(1));
        inst.add_equality(vec![(0, 1.0)], 1.0);
        inst.add_equality(vec![(0, 2.0)], 1.0);
        assert!(inst.reduce().is_err());
    }
}
