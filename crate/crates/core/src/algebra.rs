//! Graded nilpotent Lie algebras given by structure constants.
//!
//! Coordinates are layer-ordered: the first `d₁` basis vectors span the
//! horizontal layer, the next `d₂` the second layer, and so on. Indices are
//! 0-based inside the crate.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;
use core::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{check_dim, invalid, Error, Result};
use crate::linalg;
use crate::{MAX_DEPTH, MAX_DIM};

/// Absolute tolerance for the algebraic identities checked by [`CarnotAlgebra::validate`].
pub const IDENTITY_TOL: f64 = 1e-12;

/// Layer dimensions `[d₁, …, d_l]` of a stratification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grading {
    layer_dims: Vec<usize>,
    layer_of: Vec<usize>,
    offsets: Vec<usize>,
}

impl Grading {
    pub fn new(layer_dims: Vec<usize>) -> Result<Self> {
        if layer_dims.is_empty() {
            return Err(invalid("grading needs at least one layer"));
        }
        if layer_dims.contains(&0) {
            return Err(invalid("every layer must have positive dimension"));
        }
        let mut layer_of = Vec::new();
        let mut offsets = Vec::with_capacity(layer_dims.len() + 1);
        offsets.push(0);
        for (i, &d) in layer_dims.iter().enumerate() {
            layer_of.extend(core::iter::repeat_n(i + 1, d));
            offsets.push(offsets[i] + d);
        }
        Ok(Self {
            layer_dims,
            layer_of,
            offsets,
        })
    }

    /// Number of layers `l`.
    pub fn depth(&self) -> usize {
        self.layer_dims.len()
    }

    pub fn total_dim(&self) -> usize {
        self.layer_of.len()
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    /// Dimension of layer `i` (1-based); zero past the depth.
    pub fn layer_dim(&self, i: usize) -> usize {
        if i == 0 || i > self.depth() {
            0
        } else {
            self.layer_dims[i - 1]
        }
    }

    /// Grading level (1-based) of coordinate `j`.
    pub fn layer_of(&self, j: usize) -> usize {
        self.layer_of[j]
    }

    pub fn layers(&self) -> &[usize] {
        &self.layer_of
    }

    /// Coordinate range of layer `i` (1-based).
    pub fn layer_range(&self, i: usize) -> Range<usize> {
        self.offsets[i - 1]..self.offsets[i]
    }

    /// Homogeneous dimension `Σ i·dᵢ`.
    pub fn homogeneous_dimension(&self) -> usize {
        self.layer_dims
            .iter()
            .enumerate()
            .map(|(i, d)| (i + 1) * d)
            .sum()
    }
}

/// Sparse structure constants `[e_i, e_j] = Σ_k c^k_{ij} e_k`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StructureConstants {
    entries: BTreeMap<(usize, usize), Vec<(usize, f64)>>,
}

impl StructureConstants {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `c` to `c^k_{ij}` only; no antisymmetric partner is implied.
    pub fn insert(&mut self, i: usize, j: usize, k: usize, c: f64) {
        let row = self.entries.entry((i, j)).or_default();
        match row.iter_mut().find(|(kk, _)| *kk == k) {
            Some((_, v)) => *v += c,
            None => row.push((k, c)),
        }
    }

    /// Sets `[e_i, e_j] ∋ c e_k` and the antisymmetric partner `[e_j, e_i] ∋ -c e_k`.
    pub fn insert_antisymmetric(&mut self, i: usize, j: usize, k: usize, c: f64) {
        self.insert(i, j, k, c);
        self.insert(j, i, k, -c);
    }

    /// Builds constants from `(i, j, k, c)` records. Records are taken literally;
    /// when a pair `(i, j)` has no record for `(j, i)` at all, the antisymmetric
    /// partner is implied.
    pub fn from_records(records: &[(usize, usize, usize, f64)]) -> Self {
        let mut sc = Self::new();
        for &(i, j, k, c) in records {
            sc.insert(i, j, k, c);
        }
        let implied: Vec<_> = records
            .iter()
            .filter(|(i, j, _, _)| i != j && !records.iter().any(|r| r.0 == *j && r.1 == *i))
            .copied()
            .collect();
        for (i, j, k, c) in implied {
            sc.insert(j, i, k, -c);
        }
        sc
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.entries
            .get(&(i, j))
            .and_then(|row| row.iter().find(|(kk, _)| *kk == k))
            .map_or(0.0, |(_, c)| *c)
    }

    /// All stored `(i, j, k, c)` entries.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .flat_map(|(&(i, j), row)| row.iter().map(move |&(k, c)| (i, j, k, c)))
    }

    pub fn is_empty(&self) -> bool {
        self.iter().all(|(_, _, _, c)| c == 0.0)
    }

    fn max_index(&self) -> Option<usize> {
        self.iter().map(|(i, j, k, _)| i.max(j).max(k)).max()
    }
}

/// A stratified nilpotent Lie algebra with an inner product on its first layer.
#[derive(Debug, Clone, PartialEq)]
pub struct CarnotAlgebra {
    name: String,
    grading: Grading,
    constants: StructureConstants,
    h_inner: DMatrix<f64>,
    h_identity: bool,
    flat: Vec<(usize, usize, usize, f64)>,
}

impl CarnotAlgebra {
    /// Assembles an algebra. Only shapes are checked here; use
    /// [`validate`](Self::validate) for the algebraic axioms.
    pub fn new(
        name: impl Into<String>,
        grading: Grading,
        constants: StructureConstants,
        h_inner: Option<DMatrix<f64>>,
    ) -> Result<Self> {
        let n = grading.total_dim();
        if n > MAX_DIM {
            return Err(invalid(format!("total dimension {n} exceeds {MAX_DIM}")));
        }
        if grading.depth() > MAX_DEPTH {
            return Err(invalid(format!(
                "depth {} exceeds the supported maximum {MAX_DEPTH}",
                grading.depth()
            )));
        }
        if let Some(m) = constants.max_index() {
            if m >= n {
                return Err(invalid(format!(
                    "structure constant index {m} out of range 0..{n}"
                )));
            }
        }
        let d1 = grading.layer_dim(1);
        let h_inner = h_inner.unwrap_or_else(|| DMatrix::identity(d1, d1));
        if h_inner.nrows() != d1 || h_inner.ncols() != d1 {
            return Err(invalid(format!(
                "horizontal inner product must be {d1}x{d1}, got {}x{}",
                h_inner.nrows(),
                h_inner.ncols()
            )));
        }
        let flat = constants.iter().filter(|e| e.3 != 0.0).collect();
        let h_identity = h_inner == DMatrix::identity(d1, d1);
        Ok(Self {
            name: name.into(),
            grading,
            constants,
            h_inner,
            h_identity,
            flat,
        })
    }

    /// One of the catalogue algebras.
    pub fn builtin(which: BuiltinGroup) -> Result<Self> {
        which.build()
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn grading(&self) -> &Grading {
        &self.grading
    }

    pub fn constants(&self) -> &StructureConstants {
        &self.constants
    }

    pub fn h_inner(&self) -> &DMatrix<f64> {
        &self.h_inner
    }

    pub fn dim(&self) -> usize {
        self.grading.total_dim()
    }

    /// Gram matrix of the graded-orthogonal Riemannian completion: `h_inner`
    /// on the first layer, identity on the others, layers orthogonal.
    pub fn riemannian_gram(&self) -> DMatrix<f64> {
        let n = self.dim();
        let d1 = self.horizontal_dim();
        let mut g = DMatrix::identity(n, n);
        g.view_mut((0, 0), (d1, d1)).copy_from(&self.h_inner);
        g
    }

    pub fn depth(&self) -> usize {
        self.grading.depth()
    }

    /// Dimension of the horizontal layer.
    pub fn horizontal_dim(&self) -> usize {
        self.grading.layer_dim(1)
    }

    /// Homogeneous dimension `k = Σ i·dᵢ` (the Hausdorff dimension of the group).
    pub fn homogeneous_dimension(&self) -> usize {
        self.grading.homogeneous_dimension()
    }

    /// Whether the horizontal inner product is the identity.
    pub fn has_orthonormal_frame(&self) -> bool {
        self.h_identity
    }

    /// Squared length of a horizontal vector (length `d₁`) in the horizontal
    /// inner product.
    #[inline]
    pub fn h_norm_sq(&self, v: &[f64]) -> f64 {
        if self.h_identity {
            v.iter().map(|x| x * x).sum()
        } else {
            linalg::inner(&self.h_inner, v, v)
        }
    }

    /// Lie bracket of two algebra vectors.
    pub fn bracket(&self, v: &[f64], w: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), v.len())?;
        check_dim(self.dim(), w.len())?;
        let mut out = vec![0.0; self.dim()];
        self.bracket_into(v, w, &mut out);
        Ok(out)
    }

    /// Unchecked bracket; `out` is overwritten.
    #[inline]
    pub fn bracket_into(&self, v: &[f64], w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for &(i, j, k, c) in &self.flat {
            out[k] += c * v[i] * w[j];
        }
    }

    fn basis_vector(&self, i: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.dim()];
        e[i] = 1.0;
        e
    }

    /// Checks the algebra axioms; every check passes within [`IDENTITY_TOL`].
    pub fn validate(&self) -> ValidationReport {
        let g = &self.grading;
        let n = self.dim();
        let mut checks = Vec::new();

        let mut worst = 0.0f64;
        let mut first_bad = None;
        for (i, j, k, c) in self.constants.iter() {
            let defect = if i == j {
                c.abs()
            } else {
                (c + self.constants.get(j, i, k)).abs()
            };
            if defect > worst {
                worst = defect;
            }
            if defect > IDENTITY_TOL && first_bad.is_none() {
                first_bad = Some((i, j, k));
            }
        }
        checks.push(Check::new(
            "antisymmetry",
            first_bad.is_none(),
            match first_bad {
                None => format!("max defect {worst:.3e}"),
                Some((i, j, k)) => {
                    format!("c^{k}_({i},{j}) != -c^{k}_({j},{i}); defect {worst:.3e}")
                }
            },
        ));

        let bad_grading: Vec<_> = self
            .constants
            .iter()
            .filter(|&(i, j, k, c)| {
                c.abs() > IDENTITY_TOL
                    && g.layer_of(i) + g.layer_of(j) <= g.depth()
                    && g.layer_of(k) != g.layer_of(i) + g.layer_of(j)
            })
            .collect();
        checks.push(Check::new(
            "grading",
            bad_grading.is_empty(),
            match bad_grading.first() {
                None => "layers combine additively".to_string(),
                Some((i, j, k, _)) => {
                    format!("[e{i}, e{j}] has a component on e{k} outside the sum layer")
                }
            },
        ));

        let bad_nilpotent: Vec<_> = self
            .constants
            .iter()
            .filter(|&(i, j, _, c)| {
                c.abs() > IDENTITY_TOL && g.layer_of(i) + g.layer_of(j) > g.depth()
            })
            .collect();
        checks.push(Check::new(
            "nilpotency",
            bad_nilpotent.is_empty(),
            match bad_nilpotent.first() {
                None => format!("brackets above layer {} vanish", g.depth()),
                Some((i, j, _, _)) => format!("[e{i}, e{j}] is nonzero beyond the depth"),
            },
        ));

        let mut jac = 0.0f64;
        let mut t1 = vec![0.0; n];
        let mut t2 = vec![0.0; n];
        for i in 0..n {
            let ei = self.basis_vector(i);
            for j in 0..n {
                let ej = self.basis_vector(j);
                for k in 0..n {
                    let ek = self.basis_vector(k);
                    let mut sum = vec![0.0; n];
                    for (a, b, c) in [(&ei, &ej, &ek), (&ej, &ek, &ei), (&ek, &ei, &ej)] {
                        self.bracket_into(b, c, &mut t1);
                        self.bracket_into(a, &t1, &mut t2);
                        for (s, x) in sum.iter_mut().zip(&t2) {
                            *s += x;
                        }
                    }
                    jac = sum.iter().fold(jac, |m, x| m.max(x.abs()));
                }
            }
        }
        checks.push(Check::new(
            "jacobi",
            jac <= IDENTITY_TOL,
            format!("max defect {jac:.3e}"),
        ));

        let mut gen_ok = true;
        let mut gen_detail = String::from("[V1, Vj] = Vj+1 for all j");
        for j in 1..g.depth() {
            let next = g.layer_range(j + 1);
            let mut rows = Vec::new();
            for a in g.layer_range(1) {
                for b in g.layer_range(j) {
                    let br = self
                        .bracket(&self.basis_vector(a), &self.basis_vector(b))
                        .expect("dims");
                    rows.extend(next.clone().map(|k| br[k]));
                }
            }
            let nrows = rows.len() / next.len();
            let m = DMatrix::from_row_slice(nrows, next.len(), &rows);
            let r = linalg::rank(&m, 1e-10);
            if r != next.len() {
                gen_ok = false;
                gen_detail = format!("rank [V1, V{j}] = {r} but dim V{} = {}", j + 1, next.len());
                break;
            }
        }
        checks.push(Check::new("bracket_generation", gen_ok, gen_detail));

        let h = &self.h_inner;
        let sym = (h - h.transpose()).amax();
        let pd = sym <= IDENTITY_TOL && linalg::is_positive_definite(h);
        checks.push(Check::new(
            "inner_product",
            pd,
            if pd {
                "symmetric positive definite".to_string()
            } else {
                format!("not symmetric positive definite (asymmetry {sym:.3e})")
            },
        ));

        ValidationReport { checks }
    }
}

/// Outcome of one axiom check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// The built-in catalogue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinGroup {
    /// Heisenberg group of dimension `2n + 1`: `[X_i, Y_i] = Z`.
    Heisenberg(usize),
    /// Engel group, layers `[2, 1, 1]`.
    Engel,
    /// `ℝⁿ` as a one-layer group.
    Abelian(usize),
    /// Free nilpotent algebra of the given rank and step, in a Lyndon basis.
    FreeNilpotent { rank: usize, step: usize },
}

impl BuiltinGroup {
    pub fn build(self) -> Result<CarnotAlgebra> {
        match self {
            BuiltinGroup::Heisenberg(n) => {
                if n == 0 {
                    return Err(invalid("heisenberg(n) needs n >= 1"));
                }
                let mut sc = StructureConstants::new();
                for i in 0..n {
                    sc.insert_antisymmetric(i, n + i, 2 * n, 1.0);
                }
                CarnotAlgebra::new(self.to_string(), Grading::new(vec![2 * n, 1])?, sc, None)
            }
            BuiltinGroup::Engel => {
                let mut sc = StructureConstants::new();
                sc.insert_antisymmetric(0, 1, 2, 1.0);
                sc.insert_antisymmetric(0, 2, 3, 1.0);
                CarnotAlgebra::new(self.to_string(), Grading::new(vec![2, 1, 1])?, sc, None)
            }
            BuiltinGroup::Abelian(n) => {
                if n == 0 {
                    return Err(invalid("abelian(n) needs n >= 1"));
                }
                CarnotAlgebra::new(
                    self.to_string(),
                    Grading::new(vec![n])?,
                    StructureConstants::new(),
                    None,
                )
            }
            BuiltinGroup::FreeNilpotent { rank, step } => {
                if rank < 2 || step == 0 {
                    return Err(invalid("free_nilpotent needs rank >= 2 and step >= 1"));
                }
                let (dims, sc) = free_nilpotent_constants(rank, step)?;
                CarnotAlgebra::new(self.to_string(), Grading::new(dims)?, sc, None)
            }
        }
    }

    /// Every catalogue entry the test-suites sweep over.
    pub fn catalogue() -> Vec<BuiltinGroup> {
        vec![
            BuiltinGroup::Heisenberg(1),
            BuiltinGroup::Heisenberg(2),
            BuiltinGroup::Engel,
            BuiltinGroup::Abelian(2),
            BuiltinGroup::Abelian(3),
            BuiltinGroup::FreeNilpotent { rank: 2, step: 3 },
            BuiltinGroup::FreeNilpotent { rank: 3, step: 2 },
            BuiltinGroup::FreeNilpotent { rank: 2, step: 4 },
        ]
    }
}

impl fmt::Display for BuiltinGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuiltinGroup::Heisenberg(n) => write!(f, "heisenberg{n}"),
            BuiltinGroup::Engel => write!(f, "engel"),
            BuiltinGroup::Abelian(n) => write!(f, "abelian{n}"),
            BuiltinGroup::FreeNilpotent { rank, step } => {
                write!(f, "free_nilpotent({rank},{step})")
            }
        }
    }
}

impl FromStr for BuiltinGroup {
    type Err = Error;

    /// Accepts `heisenberg1`, `heisenberg(1)`, `engel`, `abelian3`,
    /// `abelian(3)` and `free_nilpotent(2,3)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        let unknown = || Error::UnknownGroup(s.clone());
        let (head, args) = match s.find('(') {
            Some(p) => {
                let inner = s[p + 1..].strip_suffix(')').ok_or_else(unknown)?;
                let args = inner
                    .split(',')
                    .map(|a| a.trim().parse::<usize>().map_err(|_| unknown()))
                    .collect::<Result<Vec<_>>>()?;
                (&s[..p], args)
            }
            None => {
                let p = s.find(|c: char| c.is_ascii_digit()).unwrap_or(s.len());
                let args = if p < s.len() {
                    vec![s[p..].parse::<usize>().map_err(|_| unknown())?]
                } else {
                    vec![]
                };
                (&s[..p], args)
            }
        };
        match (head, args.as_slice()) {
            ("heisenberg", [n]) => Ok(BuiltinGroup::Heisenberg(*n)),
            ("heisenberg", []) => Ok(BuiltinGroup::Heisenberg(1)),
            ("engel", []) => Ok(BuiltinGroup::Engel),
            ("abelian", [n]) => Ok(BuiltinGroup::Abelian(*n)),
            ("free_nilpotent", [r, st]) => Ok(BuiltinGroup::FreeNilpotent {
                rank: *r,
                step: *st,
            }),
            _ => Err(unknown()),
        }
    }
}

/// Lyndon words over `rank` letters of length at most `max_len`, in
/// lexicographic order (Duval's algorithm).
pub fn lyndon_words(rank: usize, max_len: usize) -> Vec<Vec<u8>> {
    let mut out = Vec::new();
    let mut w: Vec<i32> = vec![-1];
    while !w.is_empty() {
        *w.last_mut().expect("nonempty") += 1;
        out.push(w.iter().map(|&c| c as u8).collect());
        let m = w.len();
        while w.len() < max_len {
            w.push(w[w.len() - m]);
        }
        while w.last().is_some_and(|&c| c == rank as i32 - 1) {
            w.pop();
        }
    }
    out
}

fn is_lyndon(w: &[u8]) -> bool {
    (1..w.len()).all(|i| w < &w[i..])
}

/// Homogeneous element of the free associative algebra, indexed by words of a
/// fixed length in base `rank`.
fn word_index(w: &[u8], rank: usize) -> usize {
    w.iter().fold(0, |acc, &c| acc * rank + c as usize)
}

fn assoc_commutator(a: &[f64], b: &[f64], rank: usize, deg_b: usize, deg_a: usize) -> Vec<f64> {
    let rb = rank.pow(deg_b as u32);
    let ra = rank.pow(deg_a as u32);
    let mut out = vec![0.0; a.len() * b.len()];
    for (ia, &ca) in a.iter().enumerate() {
        if ca == 0.0 {
            continue;
        }
        for (ib, &cb) in b.iter().enumerate() {
            if cb == 0.0 {
                continue;
            }
            out[ia * rb + ib] += ca * cb;
            out[ib * ra + ia] -= ca * cb;
        }
    }
    out
}

fn free_nilpotent_constants(rank: usize, step: usize) -> Result<(Vec<usize>, StructureConstants)> {
    let mut words = lyndon_words(rank, step);
    words.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    let n = words.len();
    if n > MAX_DIM {
        return Err(invalid(format!(
            "free_nilpotent({rank},{step}) has dimension {n} > {MAX_DIM}"
        )));
    }
    let mut dims = vec![0usize; step];
    for w in &words {
        dims[w.len() - 1] += 1;
    }
    let index_of = |w: &[u8]| {
        words
            .iter()
            .position(|x| x.as_slice() == w)
            .expect("lyndon word")
    };

    // Standard bracketing P_w = [P_u, P_v], v the longest proper Lyndon suffix.
    let mut polys: Vec<Vec<f64>> = Vec::with_capacity(n);
    for w in &words {
        if w.len() == 1 {
            let mut p = vec![0.0; rank];
            p[w[0] as usize] = 1.0;
            polys.push(p);
        } else {
            let split = (1..w.len())
                .find(|&s| is_lyndon(&w[s..]))
                .expect("lyndon factorisation");
            let (u, v) = (&w[..split], &w[split..]);
            let pu = &polys[index_of(u)];
            let pv = &polys[index_of(v)];
            polys.push(assoc_commutator(pu, pv, rank, v.len(), u.len()));
        }
    }
    debug_assert!(words
        .iter()
        .zip(&polys)
        .all(|(w, p)| p[word_index(w, rank)] != 0.0));

    let mut sc = StructureConstants::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d = words[i].len() + words[j].len();
            if d > step {
                continue;
            }
            let c = assoc_commutator(&polys[i], &polys[j], rank, words[j].len(), words[i].len());
            let cols: Vec<usize> = (0..n).filter(|&k| words[k].len() == d).collect();
            let rows = rank.pow(d as u32);
            let mut m = DMatrix::<f64>::zeros(rows, cols.len());
            for (ci, &k) in cols.iter().enumerate() {
                for r in 0..rows {
                    m[(r, ci)] = polys[k][r];
                }
            }
            let rhs = DMatrix::from_column_slice(rows, 1, &c);
            let coef = linalg::lstsq(&m, &rhs)
                .ok_or_else(|| invalid("free nilpotent basis solve failed"))?;
            for (ci, &k) in cols.iter().enumerate() {
                let v = crate::math::round(coef[(ci, 0)] * 1e9) / 1e9;
                if v != 0.0 {
                    sc.insert_antisymmetric(i, j, k, v);
                }
            }
        }
    }
    Ok((dims, sc))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h3() -> CarnotAlgebra {
        CarnotAlgebra::builtin(BuiltinGroup::Heisenberg(1)).unwrap()
    }

    #[test]
    fn heisenberg_bracket_x_y_is_z() {
        let a = h3();
        assert_eq!(
            a.bracket(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(),
            vec![0.0, 0.0, 1.0]
        );
        assert_eq!(
            a.bracket(&[1.0, 0.0, 0.0], &[0.0, 0.0, 1.0]).unwrap(),
            vec![0.0, 0.0, 0.0]
        );
        let v = [0.3, -1.2, 4.0];
        assert_eq!(a.bracket(&v, &v).unwrap(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn bracket_rejects_wrong_dimension() {
        let err = h3().bracket(&[1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 3,
                got: 2
            }
        );
    }

    #[test]
    fn homogeneous_dimensions() {
        assert_eq!(h3().homogeneous_dimension(), 4);
        assert_eq!(
            CarnotAlgebra::builtin(BuiltinGroup::Abelian(5))
                .unwrap()
                .homogeneous_dimension(),
            5
        );
        assert_eq!(
            CarnotAlgebra::builtin(BuiltinGroup::Engel)
                .unwrap()
                .homogeneous_dimension(),
            7
        );
    }

    #[test]
    fn every_builtin_validates() {
        for b in BuiltinGroup::catalogue() {
            let a = b.build().unwrap();
            let report = a.validate();
            assert!(report.passed(), "{b}: {report:?}");
        }
    }

    #[test]
    fn symmetric_constants_fail_antisymmetry() {
        let mut sc = StructureConstants::new();
        sc.insert(0, 1, 2, 1.0);
        sc.insert(1, 0, 2, 1.0);
        let a = CarnotAlgebra::new("bad", Grading::new(vec![2, 1]).unwrap(), sc, None).unwrap();
        let report = a.validate();
        assert!(!report.check("antisymmetry").unwrap().passed);
        assert!(!report.passed());
    }

    #[test]
    fn abelian_with_two_layers_fails_generation() {
        let a = CarnotAlgebra::new(
            "flat",
            Grading::new(vec![1, 1]).unwrap(),
            StructureConstants::new(),
            None,
        )
        .unwrap();
        let report = a.validate();
        assert!(!report.check("bracket_generation").unwrap().passed);
        assert!(report.check("antisymmetry").unwrap().passed);
    }

    #[test]
    fn indefinite_inner_product_is_reported() {
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let a = CarnotAlgebra::new(
            "x",
            Grading::new(vec![2]).unwrap(),
            StructureConstants::new(),
            Some(h),
        )
        .unwrap();
        assert!(!a.validate().check("inner_product").unwrap().passed);
    }

    #[test]
    fn wrong_layer_target_fails_grading() {
        let mut sc = StructureConstants::new();
        sc.insert_antisymmetric(0, 1, 1, 1.0);
        let a = CarnotAlgebra::new("x", Grading::new(vec![2, 1]).unwrap(), sc, None).unwrap();
        assert!(!a.validate().check("grading").unwrap().passed);
    }

    #[test]
    fn bracket_beyond_depth_fails_nilpotency() {
        let mut sc = StructureConstants::new();
        sc.insert_antisymmetric(0, 1, 2, 1.0);
        sc.insert_antisymmetric(0, 2, 2, 1.0);
        let a = CarnotAlgebra::new("x", Grading::new(vec![2, 1]).unwrap(), sc, None).unwrap();
        assert!(!a.validate().check("nilpotency").unwrap().passed);
    }

    /// Möbius function, for the necklace-polynomial oracle below.
    fn mobius(n: usize) -> i64 {
        let mut n = n;
        let mut result = 1;
        let mut p = 2;
        while p * p <= n {
            if n.is_multiple_of(p) {
                n /= p;
                if n.is_multiple_of(p) {
                    return 0;
                }
                result = -result;
            }
            p += 1;
        }
        if n > 1 {
            result = -result;
        }
        result
    }

    /// Witt's formula for the dimension of degree-d part of the free Lie algebra.
    fn witt(rank: usize, d: usize) -> usize {
        let s: i64 = (1..=d)
            .filter(|e| d.is_multiple_of(*e))
            .map(|e| mobius(e) * (rank as i64).pow((d / e) as u32))
            .sum();
        (s / d as i64) as usize
    }

    #[test]
    fn free_nilpotent_layer_dims_match_witt() {
        for (r, s) in [(2, 3), (3, 2), (2, 4), (3, 3), (2, 5)] {
            let a = BuiltinGroup::FreeNilpotent { rank: r, step: s }
                .build()
                .unwrap();
            let expected: Vec<usize> = (1..=s).map(|d| witt(r, d)).collect();
            assert_eq!(
                a.grading().layer_dims(),
                expected.as_slice(),
                "free({r},{s})"
            );
        }
        let a = BuiltinGroup::FreeNilpotent { rank: 2, step: 3 }
            .build()
            .unwrap();
        assert_eq!(a.grading().layer_dims(), &[2, 1, 2]);
    }

    #[test]
    fn parse_builtin_names() {
        assert_eq!(
            "heisenberg1".parse::<BuiltinGroup>().unwrap(),
            BuiltinGroup::Heisenberg(1)
        );
        assert_eq!(
            "Heisenberg(2)".parse::<BuiltinGroup>().unwrap(),
            BuiltinGroup::Heisenberg(2)
        );
        assert_eq!(
            "engel".parse::<BuiltinGroup>().unwrap(),
            BuiltinGroup::Engel
        );
        assert_eq!(
            "abelian(3)".parse::<BuiltinGroup>().unwrap(),
            BuiltinGroup::Abelian(3)
        );
        assert_eq!(
            "free_nilpotent(2, 3)".parse::<BuiltinGroup>().unwrap(),
            BuiltinGroup::FreeNilpotent { rank: 2, step: 3 }
        );
        assert!(matches!(
            "sl2".parse::<BuiltinGroup>(),
            Err(Error::UnknownGroup(_))
        ));
        for b in BuiltinGroup::catalogue() {
            assert_eq!(b.to_string().parse::<BuiltinGroup>().unwrap(), b);
        }
    }

    #[test]
    fn records_imply_missing_antisymmetric_partner() {
        let sc = StructureConstants::from_records(&[(0, 1, 2, 1.0)]);
        assert_eq!(sc.get(1, 0, 2), -1.0);
        let sc = StructureConstants::from_records(&[(0, 1, 2, 1.0), (1, 0, 2, 1.0)]);
        assert_eq!(sc.get(1, 0, 2), 1.0);
    }
}
