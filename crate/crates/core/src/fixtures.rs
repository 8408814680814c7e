//! Seeded random inputs and named example maps used by the verification
//! suite, the tests and the benches.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::index::{
    enumerate_injections, LevelIndex, OrderedInjection, Permutation, PermutationTuple,
};
use crate::map::{uniform_breakpoints, GridMap, JacobianField};
use crate::oracles::PathSamples;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// An independent stream per `(suite, case)` under one seed.
pub fn case_rng(seed: u64, suite: u32, case: u32) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(((suite as u64) << 32) | case as u64);
    r
}

/// Strictly increasing breakpoints from 0 to 1 with widths varying by up to 3x.
pub fn random_breakpoints(rng: &mut impl Rng, cells: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..cells).map(|_| rng.random_range(0.5..1.5)).collect();
    let total: f64 = raw.iter().sum();
    let mut out = Vec::with_capacity(cells + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for w in &raw[..cells - 1] {
        acc += w / total;
        out.push(acc);
    }
    out.push(1.0);
    out
}

/// `s ↦ c + L s + Q(s,s)` with `Q` small, so that minors stay of order one.
#[derive(Debug, Clone)]
pub struct SmoothMap {
    d: usize,
    n: usize,
    offset: Vec<f64>,
    lin: Vec<f64>,
    quad: Vec<f64>,
}

impl SmoothMap {
    pub fn random(rng: &mut impl Rng, d: usize, n: usize) -> Self {
        Self {
            d,
            n,
            offset: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
            lin: (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect(),
            quad: (0..n * d * d).map(|_| rng.random_range(-0.3..0.3)).collect(),
        }
    }

    pub fn eval(&self, s: &[f64]) -> Vec<f64> {
        let d = self.d;
        (0..self.n)
            .map(|i| {
                let mut v = self.offset[i];
                for a in 0..d {
                    v += self.lin[i * d + a] * s[a];
                    for b in 0..d {
                        v += self.quad[(i * d + a) * d + b] * s[a] * s[b];
                    }
                }
                v
            })
            .collect()
    }

    pub fn sample(&self, breakpoints: Vec<Vec<f64>>) -> Result<GridMap> {
        GridMap::from_fn(self.n, breakpoints, |s| self.eval(s))
    }

    pub fn sample_uniform(&self, cells: usize) -> Result<GridMap> {
        self.sample(vec![uniform_breakpoints(cells); self.d])
    }
}

/// A random [`SmoothMap`] sampled on nonuniform breakpoints.
pub fn random_map(rng: &mut impl Rng, n: usize, cells: &[usize]) -> Result<GridMap> {
    let f = SmoothMap::random(rng, cells.len(), n);
    let bps = cells.iter().map(|&c| random_breakpoints(rng, c)).collect();
    f.sample(bps)
}

/// Minors uniform in `[-1,1]` over all of `O(d,n)`, nonuniform cell widths.
pub fn random_field(rng: &mut impl Rng, d: usize, n: usize, cells: &[usize]) -> Result<JacobianField> {
    let forms = enumerate_injections(d, n)?;
    let widths: Vec<Vec<f64>> = cells
        .iter()
        .map(|&c| {
            let b = random_breakpoints(rng, c);
            b.windows(2).map(|w| w[1] - w[0]).collect()
        })
        .collect();
    let count: usize = cells.iter().product();
    let minors = (0..count * forms.len())
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();
    JacobianField::new(n, forms, widths, minors)
}

/// Each cell's minor vector moved by a random vector of Euclidean norm below `eps`.
pub fn perturbed_field(rng: &mut impl Rng, f: &JacobianField, eps: f64) -> JacobianField {
    let k = f.forms().len();
    let mut shifts = vec![0.0; f.minors().len()];
    for chunk in shifts.chunks_mut(k) {
        let dir: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
        let r = eps * rng.random_range(0.0..0.999);
        for (s, v) in chunk.iter_mut().zip(dir) {
            *s = r * v / len;
        }
    }
    f.map_minors(|cell, form, v| v + shifts[cell * k + form])
}

/// A random path with `segments` uniform steps in `R^n`.
pub fn random_path(rng: &mut impl Rng, n: usize, segments: usize, uniform: bool) -> Result<PathSamples> {
    let times = if uniform {
        uniform_breakpoints(segments)
    } else {
        random_breakpoints(rng, segments)
    };
    let mut values = Vec::with_capacity(segments + 1);
    let mut cur: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    values.push(cur.clone());
    for _ in 0..segments {
        for v in cur.iter_mut() {
            *v += rng.random_range(-0.5..0.5);
        }
        values.push(cur.clone());
    }
    PathSamples::new(times, values)
}

/// A uniformly random index at level `m` over the given forms.
pub fn random_index(rng: &mut impl Rng, forms: &[OrderedInjection], d: usize, m: usize) -> LevelIndex {
    let chosen = (0..m)
        .map(|_| forms[rng.random_range(0..forms.len())].clone())
        .collect();
    let comps = (0..d).map(|_| random_permutation(rng, m)).collect();
    LevelIndex::new(chosen, PermutationTuple::new(comps).expect("uniform degree"))
        .expect("valid by construction")
}

pub fn random_permutation(rng: &mut impl Rng, m: usize) -> Permutation {
    let mut images: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        images.swap(i, rng.random_range(0..=i));
    }
    Permutation::new(images).expect("shuffled identity")
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// A random matrix of rank at most `rank`.
pub fn random_low_rank(rng: &mut impl Rng, rows: usize, cols: usize, rank: usize) -> DMatrix<f64> {
    random_matrix(rng, rows, rank) * random_matrix(rng, rank, cols)
}

/// `s ↦ (s_1, s_1 s_2², s_1² s_2³, s_2⁴)`, whose minors on the forms
/// `{1,3}, {1,4}, {2,3}` are `3s_1²s_2²`, `4s_2³` and `-s_1²s_2⁴`.
pub fn worked_example_map(cells: usize) -> Result<GridMap> {
    GridMap::from_fn(4, vec![uniform_breakpoints(cells); 2], |s| {
        vec![
            s[0],
            s[0] * s[1] * s[1],
            s[0] * s[0] * s[1].powi(3),
            s[1].powi(4),
        ]
    })
}

/// The level-3 index with forms `({1,3},{1,4},{2,3})` and `π = (id, 312)`.
pub fn worked_example_index() -> LevelIndex {
    let forms = [[1, 3], [1, 4], [2, 3]]
        .iter()
        .map(|p| OrderedInjection::from_one_based(p, 4).expect("valid form"))
        .collect();
    let perms = PermutationTuple::new(vec![
        Permutation::identity(3),
        Permutation::from_one_based(&[3, 1, 2]).expect("valid permutation"),
    ])
    .expect("uniform degree");
    LevelIndex::new(forms, perms).expect("valid index")
}

/// `x^a(s) = (a s_1, s_2/a, -a s_1 + s_2/a)`: every minor is identically 1.
pub fn power_family(a: f64, cells: usize) -> Result<GridMap> {
    GridMap::from_fn(3, vec![uniform_breakpoints(cells); 2], |s| {
        vec![a * s[0], s[1] / a, -a * s[0] + s[1] / a]
    })
}

/// A `d=2`, `n=3` map whose three minors stay bounded away from zero:
/// `A s` with `A = [[1,0],[0,1],[1,1]]` plus a small smooth bump.
pub fn sign_stable_map(cells: usize) -> Result<GridMap> {
    GridMap::from_fn(3, vec![uniform_breakpoints(cells); 2], |s| {
        let bump = 0.1 * (s[0] * s[1]);
        vec![
            s[0] + 0.1 * s[1] * s[1],
            s[1] + bump,
            s[0] + s[1] + 0.1 * s[0] * s[0],
        ]
    })
}
