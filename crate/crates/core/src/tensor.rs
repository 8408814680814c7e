//! Graded coefficient containers, functionals and the algebraic operations on them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::index::{
    bd_act_on_perms, bd_preimage, enumerate_injections, enumerate_shuffles, HyperoctahedralElement,
    LevelIndex, OrderedInjection, Permutation,
};

/// Weights smaller than this are dropped when functionals are merged.
pub const DROP_THRESHOLD: f64 = 1e-15;

fn check_index(idx: &LevelIndex, d: usize, n: usize) -> Result<()> {
    if idx.dim() != d {
        return Err(Error::InvalidIndex(format!(
            "index {idx} has arity {} but the container has d={d}",
            idx.dim()
        )));
    }
    if idx.forms().iter().any(|p| p.image().iter().any(|&k| k >= n)) {
        return Err(Error::InvalidIndex(format!(
            "index {idx} refers to a coordinate beyond n={n}"
        )));
    }
    Ok(())
}

/// A sparse element of the graded permutation tensor space, `Φ₀` stored apart.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedTensor {
    d: usize,
    n: usize,
    level0: f64,
    coeffs: BTreeMap<LevelIndex, f64>,
}

impl GradedTensor {
    pub fn new(d: usize, n: usize, level0: f64) -> Self {
        Self {
            d,
            n,
            level0,
            coeffs: BTreeMap::new(),
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn level0(&self) -> f64 {
        self.level0
    }

    pub fn set_level0(&mut self, v: f64) {
        self.level0 = v;
    }

    /// Sets a coefficient; a level-0 index writes `level0`.
    pub fn insert(&mut self, idx: LevelIndex, value: f64) -> Result<()> {
        check_index(&idx, self.d, self.n)?;
        if idx.level() == 0 {
            self.level0 = value;
        } else {
            self.coeffs.insert(idx, value);
        }
        Ok(())
    }

    pub fn get(&self, idx: &LevelIndex) -> f64 {
        if idx.level() == 0 {
            return self.level0;
        }
        self.coeffs.get(idx).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LevelIndex, f64)> {
        self.coeffs.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.coeffs.keys().map(LevelIndex::level).max().unwrap_or(0)
    }

    /// Squared norm of each level, index 0 being `level0²`.
    pub fn level_norms_sq(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.max_level() + 1];
        out[0] = self.level0 * self.level0;
        for (k, v) in &self.coeffs {
            out[k.level()] += v * v;
        }
        out
    }

    pub fn norm(&self) -> f64 {
        inner_product(self, self).sqrt()
    }

    /// Keeps only levels `<= m`.
    pub fn truncate(&self, m: usize) -> GradedTensor {
        let mut out = GradedTensor::new(self.d, self.n, self.level0);
        out.coeffs = self
            .coeffs
            .iter()
            .filter(|(k, _)| k.level() <= m)
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        out
    }

    pub fn sub(&self, other: &GradedTensor) -> GradedTensor {
        let mut out = self.clone();
        out.level0 -= other.level0;
        for (k, v) in &other.coeffs {
            *out.coeffs.entry(k.clone()).or_insert(0.0) -= v;
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.level0.is_finite() && self.coeffs.values().all(|v| v.is_finite())
    }

    /// `{"level0":…, "terms":[{"m","P","pi","value"}…]}` with 1-based indices.
    pub fn to_json(&self) -> Value {
        let terms: Vec<Value> = self
            .coeffs
            .iter()
            .map(|(k, v)| {
                json!({
                    "m": k.level(),
                    "P": k.forms(),
                    "pi": k.perms().components(),
                    "value": v,
                })
            })
            .collect();
        json!({ "level0": self.level0, "terms": terms })
    }

    pub fn from_json(value: &Value, d: usize, n: usize) -> Result<GradedTensor> {
        let bad = |msg: &str| Error::InvalidInput(msg.to_string());
        let level0 = value
            .get("level0")
            .and_then(Value::as_f64)
            .ok_or_else(|| bad("missing numeric level0"))?;
        let mut out = GradedTensor::new(d, n, level0);
        let terms = value
            .get("terms")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("missing terms array"))?;
        for (t, term) in terms.iter().enumerate() {
            let idx: LevelIndex = serde_json::from_value(term.clone())
                .map_err(|e| Error::InvalidInput(format!("terms[{t}]: {e}")))?;
            let v = term
                .get("value")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidInput(format!("terms[{t}]: missing value")))?;
            out.insert(idx, v)?;
        }
        Ok(out)
    }

    /// CSV with columns `m,P,pi,value`; entries of one injection or permutation
    /// are space separated and consecutive ones are joined by `;`.
    pub fn to_csv(&self) -> String {
        fn join(items: &[Vec<usize>]) -> String {
            items
                .iter()
                .map(|v| {
                    v.iter()
                        .map(usize::to_string)
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .collect::<Vec<_>>()
                .join(";")
        }
        let mut out = String::from("m,P,pi,value\n");
        let _ = writeln!(out, "0,,,{}", self.level0);
        for (k, v) in &self.coeffs {
            let forms: Vec<Vec<usize>> = k.forms().iter().map(|p| p.one_based()).collect();
            let perms: Vec<Vec<usize>> =
                k.perms().components().iter().map(|p| p.one_based()).collect();
            let _ = writeln!(out, "{},{},{},{}", k.level(), join(&forms), join(&perms), v);
        }
        out
    }
}

/// `Σ` over shared keys of coefficient products, plus `level0·level0`.
pub fn inner_product(a: &GradedTensor, b: &GradedTensor) -> f64 {
    let (small, large) = if a.coeffs.len() <= b.coeffs.len() {
        (a, b)
    } else {
        (b, a)
    };
    let mut acc = a.level0 * b.level0;
    for (k, v) in &small.coeffs {
        if let Some(w) = large.coeffs.get(k) {
            acc += v * w;
        }
    }
    acc
}

/// Multiplies level-`m` coefficients by `ν^m`.
pub fn graded_scale(nu: f64, a: &GradedTensor) -> GradedTensor {
    let mut out = a.clone();
    for (k, v) in out.coeffs.iter_mut() {
        *v *= nu.powi(k.level() as i32);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizationConfig {
    pub cap: f64,
    pub tolerance: f64,
    pub max_bisection_steps: usize,
}

impl Default for NormalizationConfig {
    fn default() -> Self {
        Self {
            cap: 4.0,
            tolerance: 1e-12,
            max_bisection_steps: 200,
        }
    }
}

impl NormalizationConfig {
    pub fn with_cap(cap: f64) -> Self {
        Self {
            cap,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.cap > 0.0 && self.cap.is_finite()) {
            return Err(Error::InvalidInput(format!("cap must be positive, got {}", self.cap)));
        }
        if self.tolerance.is_nan() || self.tolerance <= 0.0 || self.max_bisection_steps == 0 {
            return Err(Error::InvalidInput("tolerance and step count must be positive".into()));
        }
        Ok(())
    }
}

/// Graded normalization: rescales by the `λ ∈ (0,1]` that brings the norm to the cap.
pub fn normalize(a: &GradedTensor, cfg: &NormalizationConfig) -> Result<(GradedTensor, f64)> {
    cfg.validate()?;
    if !a.is_finite() {
        return Err(Error::NumericDomain("tensor has non-finite coefficients".into()));
    }
    let levels = a.level_norms_sq();
    let cap_sq = cfg.cap * cfg.cap;
    let norm_sq_at = |lambda: f64| -> f64 {
        levels
            .iter()
            .enumerate()
            .map(|(m, s)| lambda.powi(2 * m as i32) * s)
            .sum()
    };
    if norm_sq_at(1.0) <= cap_sq {
        return Ok((a.clone(), 1.0));
    }
    if levels[0] >= cap_sq {
        return Err(Error::NumericDomain(format!(
            "level-0 norm {} already reaches the cap {}",
            levels[0].sqrt(),
            cfg.cap
        )));
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..cfg.max_bisection_steps {
        if hi - lo <= cfg.tolerance {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if norm_sq_at(mid) <= cap_sq {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    // lo always satisfies the cap
    Ok((graded_scale(lo, a), lo))
}

/// A finite linear functional `Σ w · e^{P,π}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functional {
    d: usize,
    n: usize,
    terms: BTreeMap<LevelIndex, f64>,
}

impl Functional {
    /// Builds a functional, merging duplicate indices.
    pub fn new(d: usize, n: usize, terms: Vec<(f64, LevelIndex)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (w, idx) in terms {
            check_index(&idx, d, n)?;
            *map.entry(idx).or_insert(0.0) += w;
        }
        map.retain(|_, w: &mut f64| w.abs() >= DROP_THRESHOLD);
        Ok(Self { d, n, terms: map })
    }

    pub fn basis(d: usize, n: usize, idx: LevelIndex) -> Result<Self> {
        Self::new(d, n, vec![(1.0, idx)])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn terms(&self) -> impl Iterator<Item = (f64, &LevelIndex)> {
        self.terms.iter().map(|(k, w)| (*w, k))
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn max_level(&self) -> usize {
        self.terms.keys().map(LevelIndex::level).max().unwrap_or(0)
    }

    /// Rewrites every index to its `π_1 = id` representative and merges. Valid
    /// whenever the functional is only ever paired with signatures.
    pub fn canonicalize(&self) -> Functional {
        let terms = self.terms.iter().map(|(k, w)| (*w, k.canonical())).collect();
        Functional::new(self.d, self.n, terms).expect("canonical indices stay valid")
    }

    /// `⟨ℓ, a⟩`.
    pub fn pair(&self, a: &GradedTensor) -> f64 {
        self.terms.iter().map(|(k, w)| w * a.get(k)).sum()
    }

    /// Largest absolute weight difference after canonicalizing both sides.
    pub fn distance_canonical(&self, other: &Functional) -> f64 {
        let a = self.canonicalize();
        let b = other.canonicalize();
        let mut keys: Vec<&LevelIndex> = a.terms.keys().chain(b.terms.keys()).collect();
        keys.sort();
        keys.dedup();
        keys.into_iter()
            .map(|k| {
                (a.terms.get(k).copied().unwrap_or(0.0) - b.terms.get(k).copied().unwrap_or(0.0))
                    .abs()
            })
            .fold(0.0, f64::max)
    }
}

/// Shuffle product: `⟨f,Φ⟩⟨g,Φ⟩ = ⟨f ⊙ g, Φ⟩`.
pub fn shuffle_product(f: &Functional, g: &Functional) -> Result<Functional> {
    if f.d != g.d || f.n != g.n {
        return Err(Error::InvalidIndex(format!(
            "shuffle of functionals over (d,n)=({},{}) and ({},{})",
            f.d, f.n, g.d, g.n
        )));
    }
    let d = f.d;
    let mut out = Vec::new();
    for (wf, a) in f.terms() {
        for (wg, b) in g.terms() {
            let joined = a.concat(b)?;
            let shuffles = enumerate_shuffles(a.level(), b.level());
            // all d-tuples of shuffles
            let mut choice = vec![0usize; d];
            loop {
                let sigmas: Vec<Permutation> =
                    choice.iter().map(|&c| shuffles[c].clone()).collect();
                let perms = joined.perms().right_compose(&sigmas);
                out.push((wf * wg, LevelIndex::new(joined.forms().to_vec(), perms)?));
                let mut k = 0;
                while k < d {
                    choice[k] += 1;
                    if choice[k] < shuffles.len() {
                        break;
                    }
                    choice[k] = 0;
                    k += 1;
                }
                if k == d {
                    break;
                }
            }
        }
    }
    Functional::new(d, f.n, out)
}

/// The `d`-th compound matrix: entry `(P', P)` is the minor of `A` on rows `P'`, columns `P`.
pub fn compound_matrix(a: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let (rows, cols) = a.shape();
    if d == 0 || d > rows.min(cols) {
        return Err(Error::InvalidDimension(format!(
            "compound of order {d} for a {rows}x{cols} matrix"
        )));
    }
    let row_sets = enumerate_injections(d, rows)?;
    let col_sets = enumerate_injections(d, cols)?;
    let mut out = DMatrix::zeros(row_sets.len(), col_sets.len());
    for (r, rp) in row_sets.iter().enumerate() {
        for (c, cp) in col_sets.iter().enumerate() {
            out[(r, c)] = minor(a, rp.image(), cp.image());
        }
    }
    Ok(out)
}

pub(crate) fn minor(a: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let k = rows.len();
    match k {
        1 => a[(rows[0], cols[0])],
        2 => {
            a[(rows[0], cols[0])] * a[(rows[1], cols[1])]
                - a[(rows[0], cols[1])] * a[(rows[1], cols[0])]
        }
        _ => DMatrix::from_fn(k, k, |i, j| a[(rows[i], cols[j])]).determinant(),
    }
}

/// `Φ(Ax)` from `Φ(x)`: each form slot is pushed through `Λ^d A`.
pub fn induced_map(a_mat: &DMatrix<f64>, t: &GradedTensor) -> Result<GradedTensor> {
    if a_mat.ncols() != t.n {
        return Err(Error::InvalidDimension(format!(
            "matrix with {} columns applied to a tensor over n={}",
            a_mat.ncols(),
            t.n
        )));
    }
    let d = t.d;
    let n_out = a_mat.nrows();
    let mut out = GradedTensor::new(d, n_out, t.level0);
    if t.is_empty() {
        return Ok(out);
    }
    let compound = compound_matrix(a_mat, d)?;
    let src_forms = enumerate_injections(d, t.n)?;
    let dst_forms = enumerate_injections(d, n_out)?;
    let src_pos: BTreeMap<&OrderedInjection, usize> =
        src_forms.iter().enumerate().map(|(i, p)| (p, i)).collect();
    let mut acc: BTreeMap<LevelIndex, f64> = BTreeMap::new();
    for (idx, v) in t.iter() {
        let m = idx.level();
        let cols: Vec<usize> = idx.forms().iter().map(|p| src_pos[p]).collect();
        // iterate all destination form sequences of length m
        let mut choice = vec![0usize; m];
        loop {
            let weight: f64 = (0..m).map(|i| compound[(choice[i], cols[i])]).product();
            if weight != 0.0 {
                let forms = choice.iter().map(|&r| dst_forms[r].clone()).collect();
                let key = LevelIndex::new(forms, idx.perms().clone())?;
                *acc.entry(key).or_insert(0.0) += weight * v;
            }
            let mut k = 0;
            while k < m {
                choice[k] += 1;
                if choice[k] < dst_forms.len() {
                    break;
                }
                choice[k] = 0;
                k += 1;
            }
            if k == m {
                break;
            }
        }
    }
    out.coeffs = acc;
    Ok(out)
}

/// The induced `B_d` action: the value at `(P,π)` is `sign · a(P, π_σ^τ)`.
pub fn bd_act(g: &HyperoctahedralElement, a: &GradedTensor) -> Result<GradedTensor> {
    if g.dim() != a.d {
        return Err(Error::InvalidIndex(format!(
            "group element of dimension {} acting on a d={} tensor",
            g.dim(),
            a.d
        )));
    }
    let mut out = GradedTensor::new(a.d, a.n, a.level0);
    for (idx, v) in a.iter() {
        let target = bd_preimage(g, idx.perms());
        let (_, sign) = bd_act_on_perms(g, &target)?;
        out.coeffs
            .insert(LevelIndex::new(idx.forms().to_vec(), target)?, sign * v);
    }
    Ok(out)
}
