//! The identity-verification suite: every algebraic property of the signature
//! checked on seeded random fixtures, one report entry per identity.
//!
//! Sizes and tolerances come from a [`VerifyConfig`], which the CLI loads from
//! its committed TOML table.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::engine::{
    evaluate_indices, extract_moment, moment_functional, monomial, parametrized_signature,
    signature, GridRule, Quadrature,
};
use crate::error::{Error, Result};
use crate::fixtures::{self, case_rng, SmoothMap};
use crate::index::{
    act_on_level_index, bd_act_on_perms, binomial, enumerate_hyperoctahedral, enumerate_injections,
    factorial, HyperoctahedralElement, LevelIndex, OrderedInjection,
};
use crate::map::{
    compose_j, jacobian_field, metric_mu, reparametrize, scale_map, GridMap, JacobianField,
    MetricKind,
};
use crate::oracles::{self, chen_rhs, direct_moment, path_signature, sum_of_paths_monomial};
use crate::tensor::{
    graded_scale, induced_map, normalize, shuffle_product, Functional, GradedTensor,
    NormalizationConfig,
};

pub const REPORT_SCHEMA: &str = "cubesig-report-v1";

const D: usize = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    pub seed: u64,
    pub suite: SuiteSizes,
    pub tolerances: Tolerances,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSizes {
    /// Codomain dimension of the random fixtures.
    pub n: usize,
    /// Cells per axis for the exact identities.
    pub cells: usize,
    pub max_level: usize,
    /// Cases per exact identity.
    pub cases: usize,
    pub bound_pairs: usize,
    /// Cellwise perturbation size for the continuity bound.
    pub perturbation: f64,
    /// Resolutions for the convergence checks, coarse to fine.
    pub convergence_cells: Vec<usize>,
    pub shuffle_cases: usize,
    pub gl_cases: usize,
    pub gl_level: usize,
    pub tree_like_cases: usize,
    pub moment_max_degree: usize,
    pub power_family: Vec<f64>,
    pub normalization_cases: usize,
    pub normalization_level: usize,
    pub normalization_cap: f64,
    pub mc_cases: usize,
    pub mc_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub exact: f64,
    pub closed_form: f64,
    /// Relative continuum error allowed as a multiple of `m² d / N`.
    pub convergence_factor: f64,
    pub sum_of_paths: f64,
    pub tree_like: f64,
    pub gl_relative: f64,
    pub shuffle_relative: f64,
    pub shuffle_ratio: f64,
    pub moment_relative: f64,
    /// Relative moment errors below this count as already converged.
    pub moment_floor: f64,
    pub parametrized_family: f64,
    pub normalization: f64,
    pub graded_scale: f64,
    pub mc_constant: f64,
    /// Width of the Monte-Carlo agreement band in standard errors.
    pub mc_band: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparison {
    /// Pass when `observed <= tolerance`.
    Le,
    /// Pass when `observed >= tolerance`.
    Ge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub name: String,
    pub observed: f64,
    pub tolerance: f64,
    pub comparison: Comparison,
    pub pass: bool,
    pub cases: usize,
}

impl Entry {
    pub fn at_most(name: &str, observed: f64, tolerance: f64, cases: usize) -> Self {
        Self {
            name: name.into(),
            observed,
            tolerance,
            comparison: Comparison::Le,
            // NaN fails
            pass: observed <= tolerance,
            cases,
        }
    }

    pub fn at_least(name: &str, observed: f64, tolerance: f64, cases: usize) -> Self {
        Self {
            name: name.into(),
            observed,
            tolerance,
            comparison: Comparison::Ge,
            pass: observed >= tolerance,
            cases,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub seed: u64,
    pub entries: Vec<Entry>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.entries.iter().all(|e| e.pass)
    }

    pub fn entry(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "schema": REPORT_SCHEMA,
            "seed": self.seed,
            "entries": self.entries,
            "all_pass": self.all_pass(),
        })
    }
}

/// Replaceable operations, so a deliberately broken implementation can be
/// shown to fail the suite.
#[derive(Clone, Copy)]
pub struct Hooks {
    pub bd_act: fn(&HyperoctahedralElement, &GradedTensor) -> Result<GradedTensor>,
}

impl Default for Hooks {
    fn default() -> Self {
        Self {
            bd_act: crate::tensor::bd_act,
        }
    }
}

/// A named group of entries.
pub type Suite = fn(&VerifyConfig, &Hooks) -> Result<Vec<Entry>>;

pub const SUITES: &[(&str, Suite)] = &[
    ("exact", exact_identities),
    ("closed_form", closed_form),
    ("bounds", bounds),
    ("shuffle", shuffle),
    ("sum_of_paths", sum_of_paths),
    ("gl", gl_equivariance),
    ("moments", moments),
    ("normalization", normalization),
    ("monte_carlo", monte_carlo),
    ("determinism", determinism),
];

pub fn run(cfg: &VerifyConfig, hooks: &Hooks) -> Result<Report> {
    run_suites(cfg, hooks, SUITES.iter().map(|(_, s)| *s))
}

pub fn run_suites(
    cfg: &VerifyConfig,
    hooks: &Hooks,
    suites: impl IntoIterator<Item = Suite>,
) -> Result<Report> {
    if cfg.suite.max_level == 0 || cfg.suite.cells == 0 || cfg.suite.n < D {
        return Err(Error::InvalidInput(
            "verify needs max_level >= 1, cells >= 1 and n >= 2".into(),
        ));
    }
    if cfg.suite.convergence_cells.len() < 2 {
        return Err(Error::InvalidInput(
            "convergence checks need at least two resolutions".into(),
        ));
    }
    let mut entries = Vec::new();
    for suite in suites {
        entries.extend(suite(cfg, hooks)?);
    }
    Ok(Report {
        seed: cfg.seed,
        entries,
    })
}

fn grid(cfg: &VerifyConfig) -> [usize; D] {
    [cfg.suite.cells; D]
}

fn forms(n: usize) -> Vec<OrderedInjection> {
    enumerate_injections(D, n).expect("n >= d checked up front")
}

fn random_level(rng: &mut impl Rng, max_level: usize) -> usize {
    rng.random_range(1..=max_level)
}

/// `Ax` applied to every sample.
pub fn linear_image(a: &DMatrix<f64>, x: &GridMap) -> Result<GridMap> {
    if a.ncols() != x.n() {
        return Err(Error::InvalidDimension(format!(
            "matrix with {} columns applied to n={}",
            a.ncols(),
            x.n()
        )));
    }
    let samples = x
        .samples()
        .chunks(x.n())
        .flat_map(|v| (0..a.nrows()).map(move |i| (0..v.len()).map(|k| a[(i, k)] * v[k]).sum::<f64>()))
        .collect();
    GridMap::new(a.nrows(), x.breakpoints().to_vec(), samples)
}

fn max_abs_diff(a: &GradedTensor, b: &GradedTensor) -> f64 {
    let mut out = (a.level0() - b.level0()).abs();
    for (k, v) in a.iter() {
        out = out.max((v - b.get(k)).abs());
    }
    for (k, v) in b.iter() {
        out = out.max((v - a.get(k)).abs());
    }
    out
}

fn exact_identities(cfg: &VerifyConfig, hooks: &Hooks) -> Result<Vec<Entry>> {
    let tol = cfg.tolerances.exact;
    let cases = cfg.suite.cases;
    Ok(vec![
        Entry::at_most("permutation_invariance", permutation_invariance(cfg)?, tol, cases),
        Entry::at_most("bd_equivariance", bd_equivariance(cfg, hooks)?, tol, cases),
        Entry::at_most("reparametrization_invariance", reparametrization(cfg)?, tol, cases),
        Entry::at_most("path_reduction", path_reduction(cfg)?, tol, cases),
        Entry::at_most("chen_identity", chen_identity(cfg)?, tol, cases),
        Entry::at_most("jacobian_equivalence", jacobian_equivalence(cfg)?, tol, cases),
    ])
}

/// `Φ^{σP,π} = Φ^{P,σπ}`.
pub fn permutation_invariance(cfg: &VerifyConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 1, case as u32);
        let f = fixtures::random_field(&mut rng, D, cfg.suite.n, &grid(cfg))?;
        let m = random_level(&mut rng, cfg.suite.max_level);
        let idx = fixtures::random_index(&mut rng, f.forms(), D, m);
        let sigma = fixtures::random_permutation(&mut rng, m);
        let (relabeled, moved) = act_on_level_index(&sigma, &idx)?;
        for quad in [Quadrature::StrictGrid, Quadrature::CellExact] {
            let a = monomial(&f, &relabeled, &quad, None)?;
            let b = monomial(&f, &moved, &quad, None)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// `Φ(x∘ρ_g)` against the group action on `Φ(x)`.
pub fn bd_equivariance(cfg: &VerifyConfig, hooks: &Hooks) -> Result<f64> {
    let group = enumerate_hyperoctahedral(D);
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 2, case as u32);
        let x = fixtures::random_map(&mut rng, cfg.suite.n, &grid(cfg))?;
        // skip the identity so every case exercises a real move
        let g = &group[1 + case % (group.len() - 1)];
        let m = random_level(&mut rng, cfg.suite.max_level);
        let idx = fixtures::random_index(&mut rng, &forms(cfg.suite.n), D, m);
        let lhs = monomial(
            &jacobian_field(&crate::map::bd_transform(&x, g)?)?,
            &idx,
            &Quadrature::StrictGrid,
            None,
        )?;
        let (moved, _) = bd_act_on_perms(g, idx.perms())?;
        let source = LevelIndex::new(idx.forms().to_vec(), moved)?;
        let base = evaluate_indices(&jacobian_field(&x)?, &[source], &Quadrature::StrictGrid, None)?;
        let rhs = (hooks.bd_act)(g, &base)?.get(&idx);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

/// Same samples on relabeled breakpoints.
pub fn reparametrization(cfg: &VerifyConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 3, case as u32);
        let x = fixtures::random_map(&mut rng, cfg.suite.n, &grid(cfg))?;
        let maps: Vec<Vec<f64>> = (0..D)
            .map(|_| fixtures::random_breakpoints(&mut rng, cfg.suite.cells))
            .collect();
        let y = reparametrize(&x, &maps)?;
        let (fx, fy) = (jacobian_field(&x)?, jacobian_field(&y)?);
        for _ in 0..4 {
            let m = random_level(&mut rng, cfg.suite.max_level);
            let idx = fixtures::random_index(&mut rng, fx.forms(), D, m);
            for quad in [Quadrature::StrictGrid, Quadrature::CellExact] {
                let a = monomial(&fx, &idx, &quad, None)?;
                let b = monomial(&fy, &idx, &quad, None)?;
                worst = worst.max((a - b).abs());
            }
        }
    }
    Ok(worst)
}

/// `d = 1`: the engine at identity `π` is the path signature.
pub fn path_reduction(cfg: &VerifyConfig) -> Result<f64> {
    let n = cfg.suite.n;
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 4, case as u32);
        let p = fixtures::random_path(&mut rng, n, cfg.suite.cells, false)?;
        let f = jacobian_field(&p.to_grid_map()?)?;
        let m = random_level(&mut rng, cfg.suite.max_level);
        let word: Vec<usize> = (0..m).map(|_| rng.random_range(0..n)).collect();
        let letters = word
            .iter()
            .map(|&i| OrderedInjection::new(vec![i], n))
            .collect::<Result<Vec<_>>>()?;
        let idx = LevelIndex::identity(letters, 1)?;
        for (quad, rule) in [
            (Quadrature::StrictGrid, GridRule::Strict),
            (Quadrature::CellExact, GridRule::Exact),
        ] {
            let engine = monomial(&f, &idx, &quad, None)?;
            worst = worst.max((engine - path_signature(&p, &word, rule)).abs());
        }
    }
    Ok(worst)
}

/// A random map `y` whose axis-`q` start face equals the end face of `x`.
fn composable_pair(
    rng: &mut impl Rng,
    n: usize,
    cells: usize,
    q: usize,
) -> Result<(GridMap, GridMap)> {
    let fx = SmoothMap::random(rng, D, n);
    let fr = SmoothMap::random(rng, D, n);
    let bps: Vec<Vec<f64>> = (0..D)
        .map(|_| fixtures::random_breakpoints(rng, cells))
        .collect();
    let x = fx.sample(bps.clone())?;
    let y = GridMap::from_fn(n, bps, |s| {
        let mut start = s.to_vec();
        start[q] = 0.0;
        let mut end = s.to_vec();
        end[q] = 1.0;
        let (r, r0, e) = (fr.eval(s), fr.eval(&start), fx.eval(&end));
        (0..n).map(|i| r[i] - r0[i] + e[i]).collect()
    })?;
    Ok((x, y))
}

/// Identity-`π` monomials of `x *_q y` against the split-domain sum.
pub fn chen_identity(cfg: &VerifyConfig) -> Result<f64> {
    let n = cfg.suite.n;
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 5, case as u32);
        let q = case % D;
        let (x, y) = composable_pair(&mut rng, n, cfg.suite.cells, q)?;
        let f = jacobian_field(&compose_j(&x, &y, q)?)?;
        let m = random_level(&mut rng, cfg.suite.max_level);
        let all = forms(n);
        let seq: Vec<OrderedInjection> = (0..m)
            .map(|_| all[rng.random_range(0..all.len())].clone())
            .collect();
        let idx = LevelIndex::identity(seq.clone(), D)?;
        for (quad, rule) in [
            (Quadrature::StrictGrid, GridRule::Strict),
            (Quadrature::CellExact, GridRule::Exact),
        ] {
            let lhs = monomial(&f, &idx, &quad, None)?;
            worst = worst.max((lhs - chen_rhs(&x, &y, q, &seq, rule)?).abs());
        }
    }
    Ok(worst)
}

/// Maps with equal minor fields have equal signatures: translates of random
/// maps, and the `x^a` family.
pub fn jacobian_equivalence(cfg: &VerifyConfig) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 6, case as u32);
        let (x, y) = if case % 2 == 0 {
            let x = fixtures::random_map(&mut rng, cfg.suite.n, &grid(cfg))?;
            let shift: Vec<f64> = (0..x.n()).map(|_| rng.random_range(-5.0..5.0)).collect();
            let samples = x
                .samples()
                .chunks(x.n())
                .flat_map(|v| v.iter().zip(&shift).map(|(a, b)| a + b).collect::<Vec<_>>())
                .collect();
            let y = GridMap::new(x.n(), x.breakpoints().to_vec(), samples)?;
            (x, y)
        } else {
            let a = rng.random_range(0.25..4.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let b = rng.random_range(0.25..4.0);
            (
                fixtures::power_family(a, cfg.suite.cells)?,
                fixtures::power_family(b, cfg.suite.cells)?,
            )
        };
        let (fx, fy) = (jacobian_field(&x)?, jacobian_field(&y)?);
        for _ in 0..8 {
            let m = random_level(&mut rng, cfg.suite.max_level);
            let idx = fixtures::random_index(&mut rng, fx.forms(), D, m);
            let a = monomial(&fx, &idx, &Quadrature::StrictGrid, None)?;
            let b = monomial(&fy, &idx, &Quadrature::StrictGrid, None)?;
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// `Π_i det A_{P_i}` for the index's forms.
fn det_product(a: &DMatrix<f64>, idx: &LevelIndex) -> f64 {
    idx.forms()
        .iter()
        .map(|p| {
            let rows: Vec<usize> = p.image().to_vec();
            DMatrix::from_fn(D, D, |i, j| a[(rows[i], j)]).determinant()
        })
        .product()
}

fn closed_form(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let n = cfg.suite.n;
    let all = forms(n);
    let mut exact_err: f64 = 0.0;
    let mut conv_ratio: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 7, case as u32);
        let a = fixtures::random_matrix(&mut rng, n, D);
        let m = random_level(&mut rng, cfg.suite.max_level);
        let idx = fixtures::random_index(&mut rng, &all, D, m);
        let dets = det_product(&a, &idx);
        let limit = dets / factorial(m).powi(D as i32);
        for &cells in &cfg.suite.convergence_cells {
            let f = jacobian_field(&crate::map::from_linear_map(&a, &[cells; D])?)?;
            let v = monomial(&f, &idx, &Quadrature::StrictGrid, None)?;
            let nn = cells as f64;
            let expected = dets * (binomial(cells, m) as f64 / nn.powi(m as i32)).powi(D as i32);
            exact_err = exact_err.max((v - expected).abs());
            if limit.abs() > 1e-300 {
                let bound = cfg.tolerances.convergence_factor * (m * m * D) as f64 / nn;
                conv_ratio = conv_ratio.max(((v - limit) / limit).abs() / bound);
            }
        }
    }
    let cases = cfg.suite.cases;
    Ok(vec![
        Entry::at_most("linear_closed_form", exact_err, cfg.tolerances.closed_form, cases),
        // observed is the worst error as a fraction of the allowed m²d/N band
        Entry::at_most("linear_convergence", conv_ratio, 1.0, cases),
    ])
}

fn bounds(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let mut decay_violations = 0usize;
    let mut continuity_violations = 0usize;
    for case in 0..cfg.suite.bound_pairs {
        let mut rng = case_rng(cfg.seed, 8, case as u32);
        let f = fixtures::random_field(&mut rng, D, cfg.suite.n, &grid(cfg))?;
        let g = fixtures::perturbed_field(&mut rng, &f, cfg.suite.perturbation);
        let lf = f.max_abs_minor();
        let l = lf.max(g.max_abs_minor());
        let eps = f
            .minors()
            .iter()
            .zip(g.minors())
            .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs()));
        for _ in 0..4 {
            let m = random_level(&mut rng, cfg.suite.max_level);
            let idx = fixtures::random_index(&mut rng, f.forms(), D, m);
            let mf = factorial(m).powi(D as i32);
            for quad in [Quadrature::StrictGrid, Quadrature::CellExact] {
                let a = monomial(&f, &idx, &quad, None)?;
                let b = monomial(&g, &idx, &quad, None)?;
                if a.abs() > lf.powi(m as i32) / mf {
                    decay_violations += 1;
                }
                if (a - b).abs() > m as f64 * l.powi(m as i32 - 1) * eps / mf {
                    continuity_violations += 1;
                }
            }
        }
    }
    let pairs = cfg.suite.bound_pairs;
    Ok(vec![
        Entry::at_most("factorial_decay", decay_violations as f64, 0.0, pairs),
        Entry::at_most("continuity_bound", continuity_violations as f64, 0.0, pairs),
    ])
}

/// A random basis functional at level `m` over the given forms.
fn random_basis(rng: &mut impl Rng, n: usize, m: usize) -> Result<Functional> {
    let idx = fixtures::random_index(rng, &forms(n), D, m);
    Functional::basis(D, n, idx)
}

/// `|⟨f⊙g,Φ⟩ − ⟨f,Φ⟩⟨g,Φ⟩| / max(1, |⟨f,Φ⟩⟨g,Φ⟩|)`.
pub fn shuffle_deviation(
    x: &GridMap,
    f: &Functional,
    g: &Functional,
    quad: &Quadrature,
) -> Result<f64> {
    let fg = shuffle_product(f, g)?;
    let field = jacobian_field(x)?;
    let indices: Vec<LevelIndex> = f
        .terms()
        .chain(g.terms())
        .chain(fg.terms())
        .map(|(_, k)| k.clone())
        .collect();
    let sig = evaluate_indices(&field, &indices, quad, None)?;
    let prod = f.pair(&sig) * g.pair(&sig);
    Ok((fg.pair(&sig) - prod).abs() / prod.abs().max(1.0))
}

fn shuffle(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let n = cfg.suite.n;
    let levels = cfg.suite.convergence_cells.len();
    let mut per_level = vec![0.0_f64; levels];
    let mut exact_rule: f64 = 0.0;
    let total = cfg.suite.max_level.min(3);
    for case in 0..cfg.suite.shuffle_cases {
        let mut rng = case_rng(cfg.seed, 9, case as u32);
        let map = SmoothMap::random(&mut rng, D, n);
        let m1 = rng.random_range(1..total.max(2));
        let m2 = rng.random_range(1..=(total - m1).max(1));
        let f = random_basis(&mut rng, n, m1)?;
        let g = random_basis(&mut rng, n, m2)?;
        for (k, &cells) in cfg.suite.convergence_cells.iter().enumerate() {
            let x = map.sample_uniform(cells)?;
            per_level[k] = per_level[k].max(shuffle_deviation(&x, &f, &g, &Quadrature::StrictGrid)?);
        }
        let x = map.sample_uniform(cfg.suite.cells)?;
        exact_rule = exact_rule.max(shuffle_deviation(&x, &f, &g, &Quadrature::CellExact)?);
    }
    let cases = cfg.suite.shuffle_cases;
    let cells = &cfg.suite.convergence_cells;
    let mut out = vec![Entry::at_most(
        "shuffle_deviation",
        per_level[levels - 1],
        cfg.tolerances.shuffle_relative,
        cases,
    )];
    // one entry per doubling, so a slow first step is visible on its own
    for k in 1..levels {
        out.push(Entry::at_least(
            &format!("shuffle_ratio_{}_{}", cells[k - 1], cells[k]),
            per_level[k - 1] / per_level[k],
            cfg.tolerances.shuffle_ratio,
            cases,
        ));
    }
    out.push(Entry::at_most("shuffle_cell_exact", exact_rule, cfg.tolerances.exact, cases));
    Ok(out)
}

fn sum_of_paths(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let n = cfg.suite.n;
    let all = forms(n);
    let mut closed: f64 = 0.0;
    for case in 0..cfg.suite.cases {
        let mut rng = case_rng(cfg.seed, 10, case as u32);
        let paths = (0..D)
            .map(|_| fixtures::random_path(&mut rng, n, cfg.suite.cells, false))
            .collect::<Result<Vec<_>>>()?;
        let f = jacobian_field(&crate::map::from_sum_of_paths(&paths)?)?;
        let m = random_level(&mut rng, cfg.suite.max_level);
        let idx = fixtures::random_index(&mut rng, &all, D, m);
        for (quad, rule) in [
            (Quadrature::StrictGrid, GridRule::Strict),
            (Quadrature::CellExact, GridRule::Exact),
        ] {
            let engine = monomial(&f, &idx, &quad, None)?;
            closed = closed.max((engine - sum_of_paths_monomial(&paths, &idx, rule)?).abs());
        }
    }
    let mut tree: f64 = 0.0;
    for case in 0..cfg.suite.tree_like_cases {
        let mut rng = case_rng(cfg.seed, 11, case as u32);
        let retraced = fixtures::random_path(&mut rng, n, cfg.suite.cells, true)?.out_and_back();
        let other = fixtures::random_path(&mut rng, n, cfg.suite.cells, false)?;
        let paths = if case % 2 == 0 {
            [retraced, other]
        } else {
            [other, retraced]
        };
        let f = jacobian_field(&crate::map::from_sum_of_paths(&paths)?)?;
        let sig = signature(&f, cfg.suite.max_level, &Quadrature::CellExact)?;
        tree = tree.max(sig.iter().fold(0.0, |acc, (_, v)| acc.max(v.abs())));
    }
    Ok(vec![
        Entry::at_most("sum_of_paths_closed_form", closed, cfg.tolerances.sum_of_paths, cfg.suite.cases),
        Entry::at_most("tree_like_triviality", tree, cfg.tolerances.tree_like, cfg.suite.tree_like_cases),
    ])
}

fn gl_equivariance(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let n = cfg.suite.n;
    let mut worst: f64 = 0.0;
    for case in 0..cfg.suite.gl_cases {
        let mut rng = case_rng(cfg.seed, 12, case as u32);
        let x = fixtures::random_map(&mut rng, n, &grid(cfg))?;
        let a = match case % 4 {
            0 => fixtures::random_low_rank(&mut rng, n, n, 1),
            1 => fixtures::random_low_rank(&mut rng, n, n, D.min(n - 1).max(1)),
            _ => fixtures::random_matrix(&mut rng, D + case % 3, n),
        };
        let lhs = signature(
            &jacobian_field(&linear_image(&a, &x)?)?,
            cfg.suite.gl_level,
            &Quadrature::StrictGrid,
        )?;
        let rhs = induced_map(&a, &signature(&jacobian_field(&x)?, cfg.suite.gl_level, &Quadrature::StrictGrid)?)?;
        worst = worst.max(lhs.sub(&rhs).norm() / rhs.norm());
    }
    Ok(vec![Entry::at_most(
        "gl_equivariance",
        worst,
        cfg.tolerances.gl_relative,
        cfg.suite.gl_cases,
    )])
}

/// Exponents `c ∈ N^d` with `|c| ≤ max_degree`.
fn exponents(max_degree: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for c0 in 0..=max_degree {
        for c1 in 0..=max_degree - c0 {
            out.push(vec![c0, c1]);
        }
    }
    out
}

/// Relative error of `extract_moment` against the direct moment, for every
/// exponent and form, at each resolution.
pub fn moment_errors(
    map: impl Fn(usize) -> Result<GridMap>,
    resolutions: &[usize],
    max_degree: usize,
    quad: &Quadrature,
) -> Result<Vec<Vec<f64>>> {
    let mut out = Vec::new();
    for &cells in resolutions {
        let x = map(cells)?;
        let field = jacobian_field(&x)?;
        let mut row = Vec::new();
        for c in exponents(max_degree) {
            for p in forms(x.n()) {
                let (plan, _) = moment_functional(&c, &p, x.n())?;
                let got = extract_moment(&x, &plan, quad)?;
                let want = direct_moment(&field, &c, &p)?;
                row.push((got - want).abs() / want.abs());
            }
        }
        out.push(row);
    }
    Ok(out)
}

fn moments(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let tol = &cfg.tolerances;
    let errors = moment_errors(
        fixtures::sign_stable_map,
        &cfg.suite.convergence_cells,
        cfg.suite.moment_max_degree,
        &Quadrature::CellExact,
    )?;
    let finest = errors.last().expect("at least two resolutions");
    let worst = finest.iter().fold(0.0_f64, |a, &v| a.max(v));
    let mut not_decreasing = 0usize;
    for w in errors.windows(2) {
        for (coarse, fine) in w[0].iter().zip(&w[1]) {
            if !(fine < coarse || *fine <= tol.moment_floor) {
                not_decreasing += 1;
            }
        }
    }

    let mut family: f64 = 0.0;
    let base = parametrized_signature(
        &fixtures::power_family(cfg.suite.power_family[0], cfg.suite.cells)?,
        cfg.suite.max_level,
        &Quadrature::StrictGrid,
    )?;
    for &a in &cfg.suite.power_family[1..] {
        let other = parametrized_signature(
            &fixtures::power_family(a, cfg.suite.cells)?,
            cfg.suite.max_level,
            &Quadrature::StrictGrid,
        )?;
        family = family.max(max_abs_diff(&base, &other));
        let x = fixtures::power_family(cfg.suite.power_family[0], cfg.suite.cells)?;
        let y = fixtures::power_family(a, cfg.suite.cells)?;
        family = family.max(metric_mu(&x, &y, MetricKind::Inf)?);
    }
    let cases = finest.len();
    Ok(vec![
        Entry::at_most("moment_extraction", worst, tol.moment_relative, cases),
        Entry::at_most("moment_convergence", not_decreasing as f64, 0.0, cases),
        Entry::at_most(
            "parametrized_family",
            family,
            tol.parametrized_family,
            cfg.suite.power_family.len(),
        ),
    ])
}

fn normalization(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let ncfg = NormalizationConfig::with_cap(cfg.suite.normalization_cap);
    let mut over_cap: f64 = f64::NEG_INFINITY;
    let mut identity: f64 = 0.0;
    let mut scaling: f64 = 0.0;
    for case in 0..cfg.suite.normalization_cases {
        let mut rng = case_rng(cfg.seed, 13, case as u32);
        let nu = if case % 2 == 0 {
            rng.random_range(0.01..0.2)
        } else {
            rng.random_range(1.0..6.0)
        };
        let x = scale_map(&fixtures::random_map(&mut rng, cfg.suite.n, &grid(cfg))?, nu)?;
        let sig = parametrized_signature(&x, cfg.suite.normalization_level, &Quadrature::StrictGrid)?;
        let (normed, lambda) = normalize(&sig, &ncfg)?;
        over_cap = over_cap.max(normed.norm() - ncfg.cap);
        if sig.norm() <= ncfg.cap {
            identity = identity.max(max_abs_diff(&sig, &normed)).max((lambda - 1.0).abs());
        }

        let s = rng.random_range(0.2..3.0);
        let plain = signature(&jacobian_field(&x)?, cfg.suite.max_level, &Quadrature::StrictGrid)?;
        let scaled = signature(
            &jacobian_field(&scale_map(&x, s)?)?,
            cfg.suite.max_level,
            &Quadrature::StrictGrid,
        )?;
        scaling = scaling.max(max_abs_diff(&scaled, &graded_scale(s.powi(D as i32), &plain)));
    }
    let cases = cfg.suite.normalization_cases;
    let tol = &cfg.tolerances;
    Ok(vec![
        // observed is ‖N(Φ̄)‖ − C
        Entry::at_most("normalization_cap", over_cap, tol.normalization, cases),
        Entry::at_most("normalization_below_cap", identity, tol.exact, cases),
        Entry::at_most("graded_scaling", scaling, tol.graded_scale, cases),
    ])
}

fn monte_carlo(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let n = cfg.suite.n;
    let all = forms(n);
    let mut constant: f64 = 0.0;
    let mut band: f64 = 0.0;
    for case in 0..cfg.suite.mc_cases {
        let mut rng = case_rng(cfg.seed, 14, case as u32);
        let values: Vec<f64> = (0..all.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
        let f = JacobianField::constant(n, all.clone(), &grid(cfg), &values)?;
        let m = random_level(&mut rng, cfg.suite.max_level);
        let idx = fixtures::random_index(&mut rng, &all, D, m);
        let expected = idx
            .forms()
            .iter()
            .map(|p| values[f.form_position(p).expect("all forms present")])
            .product::<f64>()
            / factorial(m).powi(D as i32);
        let (est, se) = oracles::mc_monomial(&f, &idx, cfg.suite.mc_samples, rng.random(), None)?;
        constant = constant.max((est - expected).abs()).max(se);

        let g = fixtures::random_field(&mut rng, D, n, &grid(cfg))?;
        let strict = monomial(&g, &idx, &Quadrature::StrictGrid, None)?;
        let (est, se) = oracles::mc_monomial(&g, &idx, cfg.suite.mc_samples, rng.random(), None)?;
        let allowed = cfg.tolerances.mc_band
            * (se + (m * m * D) as f64 / cfg.suite.cells as f64 * strict.abs());
        band = band.max((est - strict).abs() / allowed);
    }
    let cases = cfg.suite.mc_cases;
    Ok(vec![
        Entry::at_most("mc_constant_field", constant, cfg.tolerances.mc_constant, cases),
        // observed is the worst disagreement as a fraction of the band
        Entry::at_most("mc_agreement", band, 1.0, cases),
    ])
}

fn determinism(cfg: &VerifyConfig, _: &Hooks) -> Result<Vec<Entry>> {
    let mut mismatches = 0usize;
    let runs = 3;
    let mut rng = case_rng(cfg.seed, 15, 0);
    let x = fixtures::random_map(&mut rng, cfg.suite.n, &grid(cfg))?;
    let f = jacobian_field(&x)?;
    let quads = [
        Quadrature::StrictGrid,
        Quadrature::CellExact,
        Quadrature::MonteCarlo {
            samples: cfg.suite.mc_samples,
            seed: cfg.seed,
        },
    ];
    for quad in &quads {
        let level = cfg.suite.max_level.min(2);
        let first = signature(&f, level, quad)?.to_json().to_string();
        for _ in 1..runs {
            let again = signature(&f, level, quad)?.to_json().to_string();
            if again != first {
                mismatches += 1;
            }
        }
    }
    Ok(vec![Entry::at_most("determinism", mismatches as f64, 0.0, quads.len())])
}
