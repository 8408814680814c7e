//! Mapping space monomials and signatures of Jacobian fields.
//!
//! A monomial is a sum over cell tuples. Under [`Quadrature::StrictGrid`] the
//! tuples must be strictly ordered along every axis in the pattern `π_j`.
//! [`Quadrature::CellExact`] also admits ties and weights a group of `g` points
//! sharing a cell on one axis by `1/g!`, which is the exact integral of the
//! piecewise-constant field over the product of permuted simplices.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::index::{
    enumerate_level_indices, factorial, LevelIndex, OrderedInjection, Permutation,
    PermutationTuple,
};
use crate::map::{lifted_field, parametrized_forms, GridMap, JacobianField, SubdomainSpec};
use crate::oracles;
use crate::tensor::{Functional, GradedTensor};

/// Default cap on `C(n,d)^M (M!)^d` for full signatures.
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridRule {
    Strict,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Quadrature {
    #[default]
    StrictGrid,
    CellExact,
    MonteCarlo { samples: usize, seed: u64 },
}

impl Quadrature {
    pub fn grid_rule(&self) -> Option<GridRule> {
        match self {
            Quadrature::StrictGrid => Some(GridRule::Strict),
            Quadrature::CellExact => Some(GridRule::Exact),
            Quadrature::MonteCarlo { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Quadrature::MonteCarlo { samples, .. } = self {
            if *samples < 2 {
                return Err(Error::InvalidInput(format!(
                    "monte-carlo needs at least 2 samples, got {samples}"
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Quadrature::StrictGrid => "grid",
            Quadrature::CellExact => "exact",
            Quadrature::MonteCarlo { .. } => "mc",
        }
    }
}

/// Cell weights `J·vol` per form with d-dimensional prefix sums.
pub struct WeightTable {
    d: usize,
    strides: Vec<usize>,
    prefix_strides: Vec<usize>,
    weights: Vec<Vec<f64>>,
    prefix: Vec<Vec<f64>>,
}

impl WeightTable {
    pub fn new(f: &JacobianField) -> Self {
        let d = f.d();
        let cells = f.cells().to_vec();
        let strides = f.cell_strides();
        let ext: Vec<usize> = cells.iter().map(|c| c + 1).collect();
        let mut prefix_strides = vec![1; d];
        for j in (0..d.saturating_sub(1)).rev() {
            prefix_strides[j] = prefix_strides[j + 1] * ext[j + 1];
        }
        let vols = f.cell_volumes();
        let nf = f.forms().len();
        let weights: Vec<Vec<f64>> = (0..nf)
            .map(|p| (0..f.cell_count()).map(|c| f.minor(c, p) * vols[c]).collect())
            .collect();
        let total: usize = ext.iter().product();
        let prefix = weights
            .iter()
            .map(|w| {
                // S[k] = Σ_{c < k} w(c), built by one running sum per axis
                let mut s = vec![0.0; total];
                let mut idx = vec![0; d];
                for flat in 0..w.len() {
                    let mut rem = flat;
                    for j in (0..d).rev() {
                        idx[j] = rem % cells[j];
                        rem /= cells[j];
                    }
                    let at: usize = (0..d).map(|j| (idx[j] + 1) * prefix_strides[j]).sum();
                    s[at] = w[flat];
                }
                for j in 0..d {
                    for flat in 0..total {
                        let k = flat / prefix_strides[j] % ext[j];
                        if k > 0 {
                            s[flat] += s[flat - prefix_strides[j]];
                        }
                    }
                }
                s
            })
            .collect();
        Self {
            d,
            strides,
            prefix_strides,
            weights,
            prefix,
        }
    }

    pub fn weight(&self, form: usize, cell: &[usize]) -> f64 {
        let flat: usize = cell.iter().zip(&self.strides).map(|(k, s)| k * s).sum();
        self.weights[form][flat]
    }

    /// `Σ w` over the half-open box `lo <= k < hi`.
    pub fn box_sum(&self, form: usize, lo: &[usize], hi: &[usize]) -> f64 {
        if lo.iter().zip(hi).any(|(a, b)| a >= b) {
            return 0.0;
        }
        let s = &self.prefix[form];
        let mut acc = 0.0;
        for corner in 0..(1usize << self.d) {
            let mut at = 0;
            let mut negative = false;
            for j in 0..self.d {
                if corner >> j & 1 == 1 {
                    at += lo[j] * self.prefix_strides[j];
                    negative = !negative;
                } else {
                    at += hi[j] * self.prefix_strides[j];
                }
            }
            if negative {
                acc -= s[at];
            } else {
                acc += s[at];
            }
        }
        acc
    }
}

struct Plan<'a> {
    table: &'a WeightTable,
    rule: GridRule,
    m: usize,
    d: usize,
    forms: Vec<usize>,
    /// rank[j][i]: position of point i in the order on axis j
    rank: Vec<Vec<usize>>,
    /// point[j][r]: the point at rank r on axis j
    point: Vec<Vec<usize>>,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

impl Plan<'_> {
    /// Inclusive admissible cell range on `axis` for point `i`, given the
    /// points placed so far (those with index `< i`).
    fn range(&self, axis: usize, i: usize, placed: &[Vec<usize>]) -> Option<(usize, usize)> {
        let r = self.rank[axis][i];
        let order = &self.point[axis];
        let pred = (0..r).rev().map(|q| order[q]).find(|&p| p < i);
        let succ = (r + 1..self.m).map(|q| order[q]).find(|&p| p < i);
        let mut lower = self.lo[axis] as isize;
        let mut upper = self.hi[axis] as isize - 1;
        let gap = match self.rule {
            GridRule::Strict => 1,
            GridRule::Exact => 0,
        };
        if let Some(p) = pred {
            lower = lower.max(placed[p][axis] as isize + gap);
        }
        if let Some(p) = succ {
            upper = upper.min(placed[p][axis] as isize - gap);
        }
        (lower <= upper).then_some((lower as usize, upper as usize))
    }

    /// `1/(1 + #placed points sharing this cell on this axis)`.
    fn tie_factor(&self, axis: usize, k: usize, i: usize, placed: &[Vec<usize>]) -> f64 {
        if self.rule == GridRule::Strict {
            return 1.0;
        }
        let same = placed[..i].iter().filter(|c| c[axis] == k).count();
        1.0 / (1 + same) as f64
    }

    fn run(&self) -> f64 {
        let mut placed = vec![vec![0usize; self.d]; self.m];
        self.place(0, 1.0, &mut placed)
    }

    fn place(&self, i: usize, partial: f64, placed: &mut Vec<Vec<usize>>) -> f64 {
        let mut ranges = Vec::with_capacity(self.d);
        for axis in 0..self.d {
            match self.range(axis, i, placed) {
                Some(r) => ranges.push(r),
                None => return 0.0,
            }
        }
        if i + 1 == self.m {
            return partial * self.close(i, &ranges, placed);
        }
        let mut acc = 0.0;
        let mut cell: Vec<usize> = ranges.iter().map(|r| r.0).collect();
        loop {
            let w = self.table.weight(self.forms[i], &cell);
            if w != 0.0 {
                let mut factor = 1.0;
                for axis in 0..self.d {
                    factor *= self.tie_factor(axis, cell[axis], i, placed);
                }
                placed[i].copy_from_slice(&cell);
                acc += self.place(i + 1, partial * w * factor, placed);
            }
            // odometer over the box, last axis fastest
            let mut j = self.d;
            loop {
                if j == 0 {
                    return acc;
                }
                j -= 1;
                if cell[j] < ranges[j].1 {
                    cell[j] += 1;
                    break;
                }
                cell[j] = ranges[j].0;
            }
        }
    }

    /// Sums the last point's weight over its admissible box, splitting each
    /// axis at cells shared with already-placed points.
    fn close(&self, i: usize, ranges: &[(usize, usize)], placed: &[Vec<usize>]) -> f64 {
        let form = self.forms[i];
        if self.rule == GridRule::Strict {
            let lo: Vec<usize> = ranges.iter().map(|r| r.0).collect();
            let hi: Vec<usize> = ranges.iter().map(|r| r.1 + 1).collect();
            return self.table.box_sum(form, &lo, &hi);
        }
        let segments: Vec<Vec<(usize, usize, f64)>> = ranges
            .iter()
            .enumerate()
            .map(|(axis, &(a, b))| {
                let fa = self.tie_factor(axis, a, i, placed);
                if a == b {
                    return vec![(a, a + 1, fa)];
                }
                let fb = self.tie_factor(axis, b, i, placed);
                let mut segs = vec![(a, a + 1, fa)];
                if b > a + 1 {
                    segs.push((a + 1, b, 1.0));
                }
                segs.push((b, b + 1, fb));
                segs
            })
            .collect();
        let mut choice = vec![0usize; self.d];
        let mut lo = vec![0; self.d];
        let mut hi = vec![0; self.d];
        let mut acc = 0.0;
        loop {
            let mut factor = 1.0;
            for axis in 0..self.d {
                let (a, b, f) = segments[axis][choice[axis]];
                lo[axis] = a;
                hi[axis] = b;
                factor *= f;
            }
            acc += factor * self.table.box_sum(form, &lo, &hi);
            let mut j = 0;
            while j < self.d {
                choice[j] += 1;
                if choice[j] < segments[j].len() {
                    break;
                }
                choice[j] = 0;
                j += 1;
            }
            if j == self.d {
                return acc;
            }
        }
    }
}

fn check_index(f: &JacobianField, idx: &LevelIndex) -> Result<Vec<usize>> {
    if idx.dim() != f.d() {
        return Err(Error::InvalidIndex(format!(
            "index arity {} does not match field dimension {}",
            idx.dim(),
            f.d()
        )));
    }
    idx.forms()
        .iter()
        .map(|p| {
            f.form_position(p)
                .ok_or_else(|| Error::InvalidIndex(format!("form {p} is not carried by the field")))
        })
        .collect()
}

fn resolve_sub(f: &JacobianField, sub: Option<&SubdomainSpec>) -> Result<SubdomainSpec> {
    match sub {
        Some(s) => {
            s.validate(f.cells())?;
            Ok(s.clone())
        }
        None => Ok(SubdomainSpec::full(f.cells())),
    }
}

/// One coefficient `Φ_m^{P,π}` against a prepared weight table.
pub fn monomial_with_table(
    f: &JacobianField,
    table: &WeightTable,
    idx: &LevelIndex,
    quad: &Quadrature,
    sub: Option<&SubdomainSpec>,
) -> Result<f64> {
    quad.validate()?;
    let forms = check_index(f, idx)?;
    let sub = resolve_sub(f, sub)?;
    let m = idx.level();
    if m == 0 {
        return Ok(1.0);
    }
    let rule = match quad.grid_rule() {
        Some(rule) => rule,
        None => {
            let Quadrature::MonteCarlo { samples, seed } = *quad else {
                unreachable!()
            };
            return Ok(oracles::mc_monomial(f, idx, samples, seed, Some(&sub))?.0);
        }
    };
    if sub.is_empty() {
        return Ok(0.0);
    }
    let d = f.d();
    let point: Vec<Vec<usize>> = idx
        .perms()
        .components()
        .iter()
        .map(|p| p.images().to_vec())
        .collect();
    let rank = idx
        .perms()
        .components()
        .iter()
        .map(|p| p.inverse().images().to_vec())
        .collect();
    let plan = Plan {
        table,
        rule,
        m,
        d,
        forms,
        rank,
        point,
        lo: sub.lo,
        hi: sub.hi,
    };
    Ok(plan.run())
}

/// `Φ_m^{P,π}` of the field, optionally on a subdomain.
pub fn monomial(
    f: &JacobianField,
    idx: &LevelIndex,
    quad: &Quadrature,
    sub: Option<&SubdomainSpec>,
) -> Result<f64> {
    let table = WeightTable::new(f);
    monomial_with_table(f, &table, idx, quad, sub)
}

/// Number of coefficients a full truncated signature would compute.
pub fn signature_size(forms: usize, d: usize, max_level: usize) -> f64 {
    (forms as f64).powi(max_level as i32) * factorial(max_level).powi(d as i32)
}

pub fn check_budget(forms: usize, d: usize, max_level: usize, budget: u64) -> Result<()> {
    let required = signature_size(forms, d, max_level);
    if required > budget as f64 {
        return Err(Error::BudgetExceeded { required, budget });
    }
    Ok(())
}

/// Evaluates the given indices in parallel into a tensor over `(d, n)`.
pub fn evaluate_indices(
    f: &JacobianField,
    indices: &[LevelIndex],
    quad: &Quadrature,
    sub: Option<&SubdomainSpec>,
) -> Result<GradedTensor> {
    quad.validate()?;
    let table = WeightTable::new(f);
    let values: Vec<Result<f64>> = indices
        .par_iter()
        .map(|idx| monomial_with_table(f, &table, idx, quad, sub))
        .collect();
    let mut out = GradedTensor::new(f.d(), f.n(), 1.0);
    for (idx, v) in indices.iter().zip(values) {
        out.insert(idx.clone(), v?)?;
    }
    Ok(out)
}

/// All coefficients up to level `max_level` over the field's forms.
pub fn signature(f: &JacobianField, max_level: usize, quad: &Quadrature) -> Result<GradedTensor> {
    signature_budgeted(f, max_level, quad, DEFAULT_BUDGET)
}

pub fn signature_budgeted(
    f: &JacobianField,
    max_level: usize,
    quad: &Quadrature,
    budget: u64,
) -> Result<GradedTensor> {
    check_budget(f.forms().len(), f.d(), max_level, budget)?;
    let indices: Vec<LevelIndex> = (1..=max_level)
        .flat_map(|m| enumerate_level_indices(f.forms(), f.d(), m))
        .collect();
    evaluate_indices(f, &indices, quad, None)
}

/// Identity-π coefficients by the prefix-sum recursion
/// `G_r(c) = w_{P_r}(c) · Σ_{c' < c} G_{r-1}(c')` (strict order on every axis).
pub fn identity_signature(
    f: &JacobianField,
    max_level: usize,
    sub: Option<&SubdomainSpec>,
) -> Result<GradedTensor> {
    let sub = resolve_sub(f, sub)?;
    let d = f.d();
    let mut out = GradedTensor::new(d, f.n(), 1.0);
    if max_level == 0 {
        return Ok(out);
    }
    let table = WeightTable::new(f);
    let cells = f.cells().to_vec();
    let strides = f.cell_strides();
    let count = f.cell_count();
    let inside: Vec<bool> = (0..count)
        .map(|c| {
            (0..d).all(|j| {
                let k = c / strides[j] % cells[j];
                sub.lo[j] <= k && k < sub.hi[j]
            })
        })
        .collect();
    let masked: Vec<Vec<f64>> = (0..f.forms().len())
        .map(|p| {
            (0..count)
                .map(|c| if inside[c] { table.weights[p][c] } else { 0.0 })
                .collect()
        })
        .collect();

    // strictly-lower prefix: T(c) = Σ_{c' < c on all axes} G(c')
    let strict_prefix = |g: &[f64]| -> Vec<f64> {
        let mut s = g.to_vec();
        for j in 0..d {
            for flat in 0..count {
                let k = flat / strides[j] % cells[j];
                if k > 0 {
                    s[flat] += s[flat - strides[j]];
                }
            }
        }
        let mut t = vec![0.0; count];
        for flat in 0..count {
            if (0..d).all(|j| !(flat / strides[j]).is_multiple_of(cells[j])) {
                let back: usize = strides.iter().sum();
                t[flat] = s[flat - back];
            }
        }
        t
    };

    fn walk(
        f: &JacobianField,
        masked: &[Vec<f64>],
        prev: &[f64],
        prefix: &mut Vec<OrderedInjection>,
        max_level: usize,
        strict_prefix: &dyn Fn(&[f64]) -> Vec<f64>,
        out: &mut GradedTensor,
    ) -> Result<()> {
        let below = strict_prefix(prev);
        for (p, w) in masked.iter().enumerate() {
            let g: Vec<f64> = w.iter().zip(&below).map(|(a, b)| a * b).collect();
            prefix.push(f.forms()[p].clone());
            let idx = LevelIndex::identity(prefix.clone(), f.d())?;
            out.insert(idx, g.iter().sum())?;
            if prefix.len() < max_level {
                walk(f, masked, &g, prefix, max_level, strict_prefix, out)?;
            }
            prefix.pop();
        }
        Ok(())
    }

    for (p, w) in masked.iter().enumerate() {
        let mut prefix = vec![f.forms()[p].clone()];
        out.insert(LevelIndex::identity(prefix.clone(), d)?, w.iter().sum())?;
        if max_level > 1 {
            walk(f, &masked, w, &mut prefix, max_level, &strict_prefix, &mut out)?;
        }
    }
    Ok(out)
}

/// Signature of `s ↦ (s, x(s))` restricted to the forms `W`.
pub fn parametrized_signature(x: &GridMap, max_level: usize, quad: &Quadrature) -> Result<GradedTensor> {
    parametrized_signature_budgeted(x, max_level, quad, DEFAULT_BUDGET)
}

pub fn parametrized_signature_budgeted(
    x: &GridMap,
    max_level: usize,
    quad: &Quadrature,
    budget: u64,
) -> Result<GradedTensor> {
    signature_budgeted(&lifted_field(x)?, max_level, quad, budget)
}

/// Coefficients realizing `ℓ_{c,P}` on the parametrized signature.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPlan {
    pub exponent: Vec<usize>,
    pub target: OrderedInjection,
    pub level: usize,
    /// `(λ, B)` with `B` 1-based.
    pub terms: Vec<(f64, Vec<usize>)>,
}

/// Coefficients `α_b` with `t^c = Σ_b α_b t^{b-1}(1-t)^{m-b}`, `b = 1..=m`,
/// by descending elimination from `t^{m-1} = q_{m,m}`.
pub fn power_in_q_basis(c: usize, m: usize) -> Vec<f64> {
    assert!(c < m, "exponent must be below the level");
    // alpha[k] expresses t^k
    let mut alpha: Vec<Vec<f64>> = vec![Vec::new(); m];
    for k in (c..m).rev() {
        // t^k (1-t)^{m-1-k} = q_{m,k+1}; expand (1-t)^{m-1-k} and move the rest over
        let mut row = vec![0.0; m];
        row[k] = 1.0;
        let e = m - 1 - k;
        let mut binom = 1.0;
        for i in 1..=e {
            binom = binom * (e - i + 1) as f64 / i as f64;
            let sign = if i % 2 == 1 { -1.0 } else { 1.0 };
            for (b, v) in alpha[k + i].iter().enumerate() {
                row[b] -= sign * binom * v;
            }
        }
        alpha[k] = row;
    }
    alpha.swap_remove(c)
}

/// The plan and functional for `∫ s^c J[x_P] ds` on `Φ̄` over a codomain of dimension `n`.
pub fn moment_functional(c: &[usize], p: &OrderedInjection, n: usize) -> Result<(MomentPlan, Functional)> {
    let d = c.len();
    if d == 0 || p.dim() != d || p.image().iter().any(|&k| k >= n) {
        return Err(Error::InvalidIndex(format!(
            "moment exponent of length {d} with form {p} over n={n}"
        )));
    }
    let m = c.iter().max().copied().unwrap_or(0) + 1;
    let per_axis: Vec<Vec<f64>> = c.iter().map(|&cj| power_in_q_basis(cj, m)).collect();
    let unit = parametrized_forms(d, n)?[0].clone();
    let shifted = p.shifted(d);
    let mut forms = vec![unit; m - 1];
    forms.push(shifted);

    let mut terms = Vec::new();
    let mut fterms = Vec::new();
    let mut b = vec![0usize; d];
    loop {
        let mut weight = 1.0;
        for j in 0..d {
            weight *= per_axis[j][b[j]] * factorial(b[j]) * factorial(m - 1 - b[j]);
        }
        if weight != 0.0 {
            let comps = b.iter().map(|&bj| canonical_perm(bj, m)).collect();
            let idx = LevelIndex::new(forms.clone(), PermutationTuple::new(comps)?)?;
            terms.push((weight, b.iter().map(|v| v + 1).collect()));
            fterms.push((weight, idx));
        }
        let mut j = d;
        loop {
            if j == 0 {
                let plan = MomentPlan {
                    exponent: c.to_vec(),
                    target: p.clone(),
                    level: m,
                    terms,
                };
                let functional = Functional::new(d, d + n, fterms)?;
                return Ok((plan, functional));
            }
            j -= 1;
            b[j] += 1;
            if b[j] < m {
                break;
            }
            b[j] = 0;
        }
    }
}

/// The permutation placing the last point at 0-based rank `b`, others in order.
fn canonical_perm(b: usize, m: usize) -> Permutation {
    let mut images: Vec<usize> = (0..m - 1).collect();
    images.insert(b, m - 1);
    Permutation::new(images).expect("valid by construction")
}

impl MomentPlan {
    pub fn functional(&self, n: usize) -> Result<Functional> {
        Ok(moment_functional(&self.exponent, &self.target, n)?.1)
    }
}

/// `⟨ℓ_{c,P}, Φ̄(x)⟩`, evaluating only the coefficients the plan needs.
pub fn extract_moment(x: &GridMap, plan: &MomentPlan, quad: &Quadrature) -> Result<f64> {
    if plan.exponent.len() != x.d() {
        return Err(Error::InvalidIndex(format!(
            "plan for d={} applied to a d={} map",
            plan.exponent.len(),
            x.d()
        )));
    }
    let functional = plan.functional(x.n())?;
    let field = lifted_field(x)?;
    let indices: Vec<LevelIndex> = functional.terms().map(|(_, k)| k.clone()).collect();
    let values = evaluate_indices(&field, &indices, quad, None)?;
    Ok(functional.pair(&values))
}
