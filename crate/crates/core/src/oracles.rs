//! Reference computations that share no code path with the engine's
//! enumeration: classical path signatures, Monte-Carlo integration, the
//! sum-of-paths closed form, brute-force tuple sums, and Chen's right-hand side.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::engine::GridRule;
use crate::error::{Error, Result};
use crate::index::{enumerate_permutations, factorial, LevelIndex, OrderedInjection, Permutation};
use crate::map::{jacobian_field, GridMap, JacobianField, SubdomainSpec};

/// A path sampled at increasing times in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSamples {
    times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PathSamples {
    pub fn new(times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 || *times.last().unwrap() != 1.0 {
            return Err(Error::InvalidGrid("path times must run from 0 to 1".into()));
        }
        if let Some(k) = (1..times.len()).find(|&k| times[k] <= times[k - 1]) {
            return Err(Error::InvalidGrid(format!("times[{k}]: not strictly increasing")));
        }
        if values.len() != times.len() {
            return Err(Error::InvalidInput(format!(
                "{} values for {} times",
                values.len(),
                times.len()
            )));
        }
        let n = values[0].len();
        if n == 0 || values.iter().any(|v| v.len() != n) {
            return Err(Error::InvalidInput("path values must share one positive dimension".into()));
        }
        Ok(Self { times, values })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k]
    }

    pub fn n(&self) -> usize {
        self.values[0].len()
    }

    pub fn segments(&self) -> usize {
        self.times.len() - 1
    }

    pub fn increment(&self, k: usize, coord: usize) -> f64 {
        self.values[k + 1][coord] - self.values[k][coord]
    }

    /// Traverses the path and then retraces it back to the start, on a grid
    /// twice as fine.
    pub fn out_and_back(&self) -> PathSamples {
        let segs = self.segments();
        let times = (0..=2 * segs).map(|k| k as f64 / (2 * segs) as f64).collect();
        let mut values = self.values.clone();
        values.extend(self.values[..segs].iter().rev().cloned());
        PathSamples { times, values }
    }

    pub fn to_grid_map(&self) -> Result<GridMap> {
        GridMap::new(
            self.n(),
            vec![self.times.clone()],
            self.values.iter().flatten().copied().collect(),
        )
    }
}

/// The coefficient of the word `word` (0-based coordinates).
///
/// `Strict` sums increment products over strictly increasing segment tuples;
/// `Exact` is the signature of the piecewise-linear interpolant, built segment
/// by segment with Chen's product of truncated exponentials.
pub fn path_signature(p: &PathSamples, word: &[usize], rule: GridRule) -> f64 {
    let m = word.len();
    // a[r] = coefficient of the prefix word[..r] over the segments seen so far
    let mut a = vec![0.0; m + 1];
    a[0] = 1.0;
    for k in 0..p.segments() {
        let inc: Vec<f64> = word.iter().map(|&i| p.increment(k, i)).collect();
        match rule {
            GridRule::Strict => {
                for r in (1..=m).rev() {
                    a[r] += a[r - 1] * inc[r - 1];
                }
            }
            GridRule::Exact => {
                for r in (1..=m).rev() {
                    let mut add = 0.0;
                    let mut prod = 1.0;
                    for s in (0..r).rev() {
                        prod *= inc[s];
                        add += a[s] * prod / factorial(r - s);
                    }
                    a[r] += add;
                }
            }
        }
    }
    a[m]
}

/// Monte-Carlo estimate of `Φ^{P,π}` on the piecewise-constant field, with its
/// standard error. Points are drawn as sorted uniforms per axis and assigned
/// through `π_j`; the mean of `Π J` is scaled by `Π_j (b_j-a_j)^m / m!`.
pub fn mc_monomial(
    f: &JacobianField,
    idx: &LevelIndex,
    samples: usize,
    seed: u64,
    sub: Option<&SubdomainSpec>,
) -> Result<(f64, f64)> {
    if samples < 2 {
        return Err(Error::InvalidInput("monte-carlo needs at least 2 samples".into()));
    }
    if idx.dim() != f.d() {
        return Err(Error::InvalidIndex("index arity does not match the field".into()));
    }
    let forms: Vec<usize> = idx
        .forms()
        .iter()
        .map(|p| {
            f.form_position(p)
                .ok_or_else(|| Error::InvalidIndex(format!("form {p} is not carried by the field")))
        })
        .collect::<Result<_>>()?;
    let m = idx.level();
    if m == 0 {
        return Ok((1.0, 0.0));
    }
    let d = f.d();
    let edges: Vec<Vec<f64>> = f
        .widths()
        .iter()
        .map(|w| {
            let mut e = vec![0.0];
            let mut acc = 0.0;
            for x in w {
                acc += x;
                e.push(acc);
            }
            *e.last_mut().unwrap() = 1.0;
            e
        })
        .collect();
    let (lo, hi) = match sub {
        Some(s) => {
            s.validate(f.cells())?;
            (s.lo.clone(), s.hi.clone())
        }
        None => (vec![0; d], f.cells().to_vec()),
    };
    let bounds: Vec<(f64, f64)> = (0..d).map(|j| (edges[j][lo[j]], edges[j][hi[j]])).collect();
    let volume: f64 = bounds
        .iter()
        .map(|(a, b)| (b - a).powi(m as i32) / factorial(m))
        .product();
    if volume == 0.0 {
        return Ok((0.0, 0.0));
    }
    let strides = f.cell_strides();
    let perms: Vec<&Permutation> = idx.perms().components().iter().collect();
    let cells = f.cells().to_vec();

    const CHUNK: usize = 1 << 16;
    let chunks = samples.div_ceil(CHUNK);
    // (count, mean, M2) per chunk, merged in chunk order
    let partial: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let count = CHUNK.min(samples - c * CHUNK);
            let mut mean = 0.0;
            let mut m2 = 0.0;
            let mut u = vec![0.0; m];
            let mut flat = vec![0usize; m];
            for s in 0..count {
                flat.iter_mut().for_each(|v| *v = 0);
                for j in 0..d {
                    let (a, b) = bounds[j];
                    for v in u.iter_mut() {
                        *v = a + (b - a) * rng.random::<f64>();
                    }
                    u.sort_by(|x, y| x.partial_cmp(y).unwrap());
                    for (r, t) in u.iter().enumerate() {
                        let point = perms[j].apply(r);
                        let k = edges[j].partition_point(|e| e <= t).clamp(1, cells[j]) - 1;
                        flat[point] += k * strides[j];
                    }
                }
                let value: f64 = (0..m).map(|i| f.minor(flat[i], forms[i])).product();
                let delta = value - mean;
                mean += delta / (s + 1) as f64;
                m2 += delta * (value - mean);
            }
            (count as f64, mean, m2)
        })
        .collect();
    let (k, mean, m2) = partial.iter().fold((0.0, 0.0, 0.0), |(na, ma, sa), &(nb, mb, sb)| {
        let n = na + nb;
        let delta = mb - ma;
        (n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n)
    });
    let var = m2 / (k - 1.0);
    Ok((mean * volume, volume * (var / k).sqrt()))
}

/// Signed sum over `σ ∈ Σ_d^m` of products of per-axis path coefficients,
/// for the map `x(s) = Σ_j g_j(s_j)`.
pub fn sum_of_paths_monomial(paths: &[PathSamples], idx: &LevelIndex, rule: GridRule) -> Result<f64> {
    let d = paths.len();
    if d == 0 || idx.dim() != d {
        return Err(Error::InvalidIndex("one path per domain axis required".into()));
    }
    let n = paths[0].n();
    if paths.iter().any(|p| p.n() != n) {
        return Err(Error::InvalidInput("paths differ in codomain dimension".into()));
    }
    let m = idx.level();
    if m == 0 {
        return Ok(1.0);
    }
    let sd = enumerate_permutations(d);
    let inverses: Vec<Permutation> = sd.iter().map(Permutation::inverse).collect();
    let mut choice = vec![0usize; m];
    let mut total = 0.0;
    loop {
        let sign: f64 = choice.iter().map(|&c| sd[c].sign()).product();
        let mut prod = sign;
        for (j, path) in paths.iter().enumerate() {
            // v_i = P_i(σ_i⁻¹(j)); the word reads v in the order of π_j
            let v: Vec<usize> = (0..m)
                .map(|i| idx.forms()[i].image()[inverses[choice[i]].apply(j)])
                .collect();
            let pj = idx.perms().component(j);
            let word: Vec<usize> = (0..m).map(|r| v[pj.apply(r)]).collect();
            prod *= path_signature(path, &word, rule);
            if prod == 0.0 {
                break;
            }
        }
        total += prod;
        let mut k = 0;
        while k < m {
            choice[k] += 1;
            if choice[k] < sd.len() {
                break;
            }
            choice[k] = 0;
            k += 1;
        }
        if k == m {
            return Ok(total);
        }
    }
}

/// Sum over explicit cell tuples of `Π w × tie factors`, where `weight(i, cells)`
/// gives point `i`'s weight at per-axis cells and `admit(i, cells)` filters.
fn tuple_sum(
    m: usize,
    extents: &[usize],
    perms: &[&Permutation],
    rule: GridRule,
    weight: &dyn Fn(usize, &[usize]) -> f64,
    admit: &dyn Fn(usize, &[usize]) -> bool,
) -> f64 {
    let d = extents.len();
    let total_cells: usize = extents.iter().product();
    let decode = |flat: usize| -> Vec<usize> {
        let mut out = vec![0; d];
        let mut rem = flat;
        for j in (0..d).rev() {
            out[j] = rem % extents[j];
            rem /= extents[j];
        }
        out
    };
    let all: Vec<Vec<usize>> = (0..total_cells).map(decode).collect();
    let mut chosen: Vec<usize> = vec![0; m];
    let mut acc = 0.0;
    fn rec(
        i: usize,
        m: usize,
        all: &[Vec<usize>],
        chosen: &mut Vec<usize>,
        partial: f64,
        acc: &mut f64,
        check: &dyn Fn(&[usize]) -> Option<f64>,
        weight: &dyn Fn(usize, &[usize]) -> f64,
        admit: &dyn Fn(usize, &[usize]) -> bool,
    ) {
        if i == m {
            if let Some(factor) = check(chosen) {
                *acc += partial * factor;
            }
            return;
        }
        for (c, cell) in all.iter().enumerate() {
            if !admit(i, cell) {
                continue;
            }
            let w = weight(i, cell);
            if w == 0.0 {
                continue;
            }
            chosen[i] = c;
            rec(i + 1, m, all, chosen, partial * w, acc, check, weight, admit);
        }
    }
    let check = |tuple: &[usize]| -> Option<f64> {
        let mut factor = 1.0;
        for j in 0..d {
            let ks: Vec<usize> = (0..m).map(|r| all[tuple[perms[j].apply(r)]][j]).collect();
            let mut run = 1;
            for r in 1..m {
                match (rule, ks[r].cmp(&ks[r - 1])) {
                    (_, std::cmp::Ordering::Less) => return None,
                    (GridRule::Strict, std::cmp::Ordering::Equal) => return None,
                    (GridRule::Exact, std::cmp::Ordering::Equal) => {
                        run += 1;
                        factor /= run as f64;
                    }
                    _ => run = 1,
                }
            }
        }
        Some(factor)
    };
    rec(0, m, &all, &mut chosen, 1.0, &mut acc, &check, weight, admit);
    acc
}

/// Brute-force `Φ^{P,π}` over all cell tuples. Cost grows as `cells^m`.
pub fn enumerate_monomial(
    f: &JacobianField,
    idx: &LevelIndex,
    rule: GridRule,
    sub: Option<&SubdomainSpec>,
) -> Result<f64> {
    let forms: Vec<usize> = idx
        .forms()
        .iter()
        .map(|p| {
            f.form_position(p)
                .ok_or_else(|| Error::InvalidIndex(format!("form {p} is not carried by the field")))
        })
        .collect::<Result<_>>()?;
    if idx.level() == 0 {
        return Ok(1.0);
    }
    let sub = sub.cloned().unwrap_or_else(|| SubdomainSpec::full(f.cells()));
    sub.validate(f.cells())?;
    let strides = f.cell_strides();
    let perms: Vec<&Permutation> = idx.perms().components().iter().collect();
    let weight = |i: usize, cell: &[usize]| {
        let flat: usize = cell.iter().zip(&strides).map(|(k, s)| k * s).sum();
        f.minor(flat, forms[i]) * f.cell_volume(flat)
    };
    let admit = |_: usize, cell: &[usize]| {
        cell.iter()
            .enumerate()
            .all(|(j, &k)| sub.lo[j] <= k && k < sub.hi[j])
    };
    Ok(tuple_sum(idx.level(), f.cells(), &perms, rule, &weight, &admit))
}

/// Right-hand side of the modified Chen identity for `x *_q y` at identity `π`:
/// `Σ_r` of the split-domain sums with points `1..=r` in `x` along axis `q`
/// and the rest in `y`, ordered along every axis.
pub fn chen_rhs(
    x: &GridMap,
    y: &GridMap,
    q: usize,
    forms: &[OrderedInjection],
    rule: GridRule,
) -> Result<f64> {
    if !x.same_grid(y) || q >= x.d() {
        return Err(Error::NotComposable {
            axis: q,
            detail: "maps must share grids and the axis must exist".into(),
        });
    }
    // face check delegated to the composition itself
    crate::map::compose_j(x, y, q)?;
    let m = forms.len();
    if m == 0 {
        return Ok(1.0);
    }
    let fx = jacobian_field(x)?;
    let fy = jacobian_field(y)?;
    let pos: Vec<usize> = forms
        .iter()
        .map(|p| {
            fx.form_position(p)
                .ok_or_else(|| Error::InvalidIndex(format!("form {p} is not in O(d,n)")))
        })
        .collect::<Result<_>>()?;
    let d = x.d();
    let nq = fx.cells()[q];
    let mut extents = fx.cells().to_vec();
    extents[q] = 2 * nq;
    let strides = fx.cell_strides();
    let id = Permutation::identity(m);
    let perms: Vec<&Permutation> = vec![&id; d];
    let local = |cell: &[usize]| -> (bool, usize) {
        let left = cell[q] < nq;
        let flat: usize = (0..d)
            .map(|j| if j == q { cell[j] % nq } else { cell[j] } * strides[j])
            .sum();
        (left, flat)
    };
    let weight = |i: usize, cell: &[usize]| {
        let (left, flat) = local(cell);
        let field = if left { &fx } else { &fy };
        field.minor(flat, pos[i]) * field.cell_volume(flat)
    };
    let mut total = 0.0;
    for r in 0..=m {
        let admit = |i: usize, cell: &[usize]| (cell[q] < nq) == (i < r);
        total += tuple_sum(m, &extents, &perms, rule, &weight, &admit);
    }
    Ok(total)
}

/// `Σ_cells center^c · J[x_P] · vol`.
pub fn direct_moment(f: &JacobianField, c: &[usize], p: &OrderedInjection) -> Result<f64> {
    let form = f
        .form_position(p)
        .ok_or_else(|| Error::InvalidIndex(format!("form {p} is not carried by the field")))?;
    if c.len() != f.d() {
        return Err(Error::InvalidIndex("exponent length differs from d".into()));
    }
    Ok((0..f.cell_count())
        .map(|cell| {
            let center = f.cell_center(cell);
            let mono: f64 = center.iter().zip(c).map(|(s, &e)| s.powi(e as i32)).product();
            mono * f.minor(cell, form) * f.cell_volume(cell)
        })
        .sum())
}
