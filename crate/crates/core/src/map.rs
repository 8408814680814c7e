//! Gridded maps `[0,1]^d → R^n`, their Jacobian minor fields, and the
//! constructors and transformations acting on them.

use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::index::{enumerate_injections, HyperoctahedralElement, OrderedInjection};
use crate::oracles::PathSamples;
use crate::tensor::minor;

/// Absolute per-sample tolerance for matching faces in `compose_j`.
pub const FACE_TOLERANCE: f64 = 1e-9;

fn validate_breakpoints(axis: usize, bp: &[f64]) -> Result<()> {
    if bp.len() < 2 {
        return Err(Error::InvalidGrid(format!(
            "breakpoints[{axis}]: need at least two breakpoints"
        )));
    }
    if bp[0] != 0.0 {
        return Err(Error::InvalidGrid(format!("breakpoints[{axis}][0]: must be 0")));
    }
    let last = bp.len() - 1;
    if bp[last] != 1.0 {
        return Err(Error::InvalidGrid(format!("breakpoints[{axis}][{last}]: must be 1")));
    }
    for k in 1..bp.len() {
        if !bp[k].is_finite() || bp[k] <= bp[k - 1] {
            return Err(Error::InvalidGrid(format!(
                "breakpoints[{axis}][{k}]: not strictly increasing"
            )));
        }
    }
    Ok(())
}

pub fn uniform_breakpoints(n: usize) -> Vec<f64> {
    (0..=n).map(|k| k as f64 / n as f64).collect()
}

/// Row-major strides for the given per-axis extents (last axis fastest).
fn strides(extents: &[usize]) -> Vec<usize> {
    let mut s = vec![1; extents.len()];
    for j in (0..extents.len().saturating_sub(1)).rev() {
        s[j] = s[j + 1] * extents[j + 1];
    }
    s
}

fn unravel(mut flat: usize, extents: &[usize], out: &mut [usize]) {
    for j in (0..extents.len()).rev() {
        out[j] = flat % extents[j];
        flat /= extents[j];
    }
}

/// Samples of a map on an axis-wise rectilinear grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridMap {
    d: usize,
    n: usize,
    breakpoints: Vec<Vec<f64>>,
    samples: Vec<f64>,
}

impl GridMap {
    /// `samples` holds `n` values per vertex, vertices row-major over axes.
    pub fn new(n: usize, breakpoints: Vec<Vec<f64>>, samples: Vec<f64>) -> Result<Self> {
        let d = breakpoints.len();
        if d == 0 || n == 0 {
            return Err(Error::InvalidDimension(format!("need d,n >= 1, got d={d}, n={n}")));
        }
        for (j, bp) in breakpoints.iter().enumerate() {
            validate_breakpoints(j, bp)?;
        }
        let vertices: usize = breakpoints.iter().map(Vec::len).product();
        if samples.len() != vertices * n {
            return Err(Error::InvalidGrid(format!(
                "expected {} sample values, got {}",
                vertices * n,
                samples.len()
            )));
        }
        if let Some(k) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "sample at vertex {} coordinate {} is not finite",
                k / n,
                k % n
            )));
        }
        Ok(Self {
            d,
            n,
            breakpoints,
            samples,
        })
    }

    /// Samples `f` at every vertex.
    pub fn from_fn(
        n: usize,
        breakpoints: Vec<Vec<f64>>,
        mut f: impl FnMut(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let extents: Vec<usize> = breakpoints.iter().map(Vec::len).collect();
        let total: usize = extents.iter().product();
        let mut idx = vec![0; extents.len()];
        let mut s = vec![0.0; extents.len()];
        let mut samples = Vec::with_capacity(total * n);
        for flat in 0..total {
            unravel(flat, &extents, &mut idx);
            for j in 0..extents.len() {
                s[j] = breakpoints[j][idx[j]];
            }
            let v = f(&s);
            if v.len() != n {
                return Err(Error::InvalidInput(format!(
                    "map returned {} values, expected {n}",
                    v.len()
                )));
            }
            samples.extend(v);
        }
        Self::new(n, breakpoints, samples)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn breakpoints(&self) -> &[Vec<f64>] {
        &self.breakpoints
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    /// Cell counts `N_j`.
    pub fn cells_per_axis(&self) -> Vec<usize> {
        self.breakpoints.iter().map(|b| b.len() - 1).collect()
    }

    fn vertex_extents(&self) -> Vec<usize> {
        self.breakpoints.iter().map(Vec::len).collect()
    }

    /// The value at the vertex with per-axis indices `idx`.
    pub fn vertex(&self, idx: &[usize]) -> &[f64] {
        let st = strides(&self.vertex_extents());
        let flat: usize = idx.iter().zip(&st).map(|(i, s)| i * s).sum();
        &self.samples[flat * self.n..(flat + 1) * self.n]
    }

    pub fn same_grid(&self, other: &GridMap) -> bool {
        self.d == other.d && self.n == other.n && self.breakpoints == other.breakpoints
    }

    pub fn to_json(&self) -> Value {
        fn nest(samples: &[f64], extents: &[usize]) -> Value {
            if extents.is_empty() {
                return json!(samples);
            }
            let chunk = samples.len() / extents[0];
            Value::Array(
                samples
                    .chunks(chunk)
                    .map(|c| nest(c, &extents[1..]))
                    .collect(),
            )
        }
        json!({
            "d": self.d,
            "n": self.n,
            "breakpoints": self.breakpoints,
            "samples": nest(&self.samples, &self.vertex_extents()),
        })
    }

    /// Reads the JSON grid format, reporting the first violated invariant.
    pub fn from_json(value: &Value) -> Result<Self> {
        let field = |name: &str| {
            value
                .get(name)
                .ok_or_else(|| Error::InvalidInput(format!("missing field \"{name}\"")))
        };
        let d = field("d")?
            .as_u64()
            .ok_or_else(|| Error::InvalidInput("\"d\" must be a positive integer".into()))?
            as usize;
        let n = field("n")?
            .as_u64()
            .ok_or_else(|| Error::InvalidInput("\"n\" must be a positive integer".into()))?
            as usize;
        if d == 0 || n == 0 {
            return Err(Error::InvalidDimension(format!("need d,n >= 1, got d={d}, n={n}")));
        }
        let bp_raw = field("breakpoints")?
            .as_array()
            .ok_or_else(|| Error::InvalidInput("\"breakpoints\" must be an array".into()))?;
        if bp_raw.len() != d {
            return Err(Error::InvalidGrid(format!(
                "breakpoints: expected {d} axes, got {}",
                bp_raw.len()
            )));
        }
        let mut breakpoints = Vec::with_capacity(d);
        for (j, axis) in bp_raw.iter().enumerate() {
            let arr = axis
                .as_array()
                .ok_or_else(|| Error::InvalidInput(format!("breakpoints[{j}]: not an array")))?;
            let mut bp = Vec::with_capacity(arr.len());
            for (k, v) in arr.iter().enumerate() {
                bp.push(v.as_f64().ok_or_else(|| {
                    Error::InvalidInput(format!("breakpoints[{j}][{k}]: not a number"))
                })?);
            }
            validate_breakpoints(j, &bp)?;
            breakpoints.push(bp);
        }
        let extents: Vec<usize> = breakpoints.iter().map(Vec::len).collect();
        let mut samples = Vec::new();
        fn walk(
            v: &Value,
            extents: &[usize],
            n: usize,
            path: &mut Vec<usize>,
            out: &mut Vec<f64>,
        ) -> Result<()> {
            fn here(path: &[usize]) -> String {
                let mut s = String::from("samples");
                for p in path {
                    s.push_str(&format!("[{p}]"));
                }
                s
            }
            let arr = v
                .as_array()
                .ok_or_else(|| Error::InvalidInput(format!("{}: not an array", here(path))))?;
            let expected = extents.first().copied().unwrap_or(n);
            if arr.len() != expected {
                return Err(Error::InvalidGrid(format!(
                    "{}: expected length {expected}, got {}",
                    here(path),
                    arr.len()
                )));
            }
            for (k, item) in arr.iter().enumerate() {
                path.push(k);
                if extents.is_empty() {
                    let x = item.as_f64().filter(|x| x.is_finite()).ok_or_else(|| {
                        Error::InvalidGrid(format!("{}: not a finite number", here(path)))
                    })?;
                    out.push(x);
                } else {
                    walk(item, &extents[1..], n, path, out)?;
                }
                path.pop();
            }
            Ok(())
        }
        walk(field("samples")?, &extents, n, &mut Vec::new(), &mut samples)?;
        Self::new(n, breakpoints, samples)
    }
}

/// Breakpoint-index box `lo_j <= k < hi_j` selecting cells.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SubdomainSpec {
    pub lo: Vec<usize>,
    pub hi: Vec<usize>,
}

impl SubdomainSpec {
    pub fn new(lo: Vec<usize>, hi: Vec<usize>) -> Self {
        Self { lo, hi }
    }

    pub fn full(cells: &[usize]) -> Self {
        Self {
            lo: vec![0; cells.len()],
            hi: cells.to_vec(),
        }
    }

    /// Checks against per-axis cell counts. Empty boxes (`lo == hi`) are allowed.
    pub fn validate(&self, cells: &[usize]) -> Result<()> {
        if self.lo.len() != cells.len() || self.hi.len() != cells.len() {
            return Err(Error::InvalidIndex(format!(
                "subdomain has {} axes, field has {}",
                self.lo.len(),
                cells.len()
            )));
        }
        for j in 0..cells.len() {
            if self.lo[j] > self.hi[j] || self.hi[j] > cells[j] {
                return Err(Error::InvalidIndex(format!(
                    "subdomain axis {j}: [{}, {}) outside 0..{}",
                    self.lo[j], self.hi[j], cells[j]
                )));
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.lo.iter().zip(&self.hi).any(|(l, h)| l >= h)
    }
}

/// Per-cell Jacobian minors for a list of forms, plus cell geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct JacobianField {
    d: usize,
    n: usize,
    forms: Vec<OrderedInjection>,
    cells: Vec<usize>,
    widths: Vec<Vec<f64>>,
    minors: Vec<f64>,
}

impl JacobianField {
    /// `minors[cell * forms.len() + f]`, cells row-major.
    pub fn new(
        n: usize,
        forms: Vec<OrderedInjection>,
        widths: Vec<Vec<f64>>,
        minors: Vec<f64>,
    ) -> Result<Self> {
        let d = widths.len();
        if d == 0 {
            return Err(Error::InvalidDimension("field needs d >= 1".into()));
        }
        if forms.is_empty() {
            return Err(Error::InvalidInput("field needs at least one form".into()));
        }
        for p in &forms {
            if p.dim() != d || p.image().iter().any(|&k| k >= n) {
                return Err(Error::InvalidIndex(format!("form {p} is not in O({d},{n})")));
            }
        }
        for (j, w) in widths.iter().enumerate() {
            if w.is_empty() || w.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::InvalidGrid(format!("axis {j}: widths must be positive")));
            }
        }
        let cells: Vec<usize> = widths.iter().map(Vec::len).collect();
        let count: usize = cells.iter().product();
        if minors.len() != count * forms.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} minor values, got {}",
                count * forms.len(),
                minors.len()
            )));
        }
        Ok(Self {
            d,
            n,
            forms,
            cells,
            widths,
            minors,
        })
    }

    /// A field whose minors are the same in every cell, on a uniform grid.
    pub fn constant(n: usize, forms: Vec<OrderedInjection>, cells: &[usize], values: &[f64]) -> Result<Self> {
        let widths = cells.iter().map(|&c| vec![1.0 / c as f64; c]).collect();
        let count: usize = cells.iter().product();
        let minors = (0..count).flat_map(|_| values.iter().copied()).collect();
        Self::new(n, forms, widths, minors)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn forms(&self) -> &[OrderedInjection] {
        &self.forms
    }

    pub fn form_position(&self, p: &OrderedInjection) -> Option<usize> {
        self.forms.iter().position(|q| q == p)
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn cell_count(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn widths(&self) -> &[Vec<f64>] {
        &self.widths
    }

    pub fn cell_strides(&self) -> Vec<usize> {
        strides(&self.cells)
    }

    pub fn minors(&self) -> &[f64] {
        &self.minors
    }

    pub fn minor(&self, cell: usize, form: usize) -> f64 {
        self.minors[cell * self.forms.len() + form]
    }

    pub fn cell_multi_index(&self, cell: usize) -> Vec<usize> {
        let mut out = vec![0; self.d];
        unravel(cell, &self.cells, &mut out);
        out
    }

    pub fn cell_volume(&self, cell: usize) -> f64 {
        let k = self.cell_multi_index(cell);
        (0..self.d).map(|j| self.widths[j][k[j]]).product()
    }

    pub fn cell_volumes(&self) -> Vec<f64> {
        (0..self.cell_count()).map(|c| self.cell_volume(c)).collect()
    }

    /// Cell centre coordinates.
    pub fn cell_center(&self, cell: usize) -> Vec<f64> {
        let k = self.cell_multi_index(cell);
        (0..self.d)
            .map(|j| {
                let lo: f64 = self.widths[j][..k[j]].iter().sum();
                lo + 0.5 * self.widths[j][k[j]]
            })
            .collect()
    }

    /// Largest `|J|` over all cells and forms.
    pub fn max_abs_minor(&self) -> f64 {
        self.minors.iter().fold(0.0, |a, v| a.max(v.abs()))
    }

    /// Largest per-cell Euclidean norm of the minor vector.
    pub fn max_cell_norm(&self) -> f64 {
        self.minors
            .chunks(self.forms.len())
            .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }

    /// Keeps only the listed forms, in that order.
    pub fn select_forms(&self, forms: &[OrderedInjection]) -> Result<JacobianField> {
        let pos: Vec<usize> = forms
            .iter()
            .map(|p| {
                self.form_position(p)
                    .ok_or_else(|| Error::InvalidIndex(format!("form {p} not present in field")))
            })
            .collect::<Result<_>>()?;
        let f = self.forms.len();
        let minors = (0..self.cell_count())
            .flat_map(|c| pos.iter().map(move |&p| self.minors[c * f + p]))
            .collect();
        JacobianField::new(self.n, forms.to_vec(), self.widths.clone(), minors)
    }

    /// Replaces minors with `f(cell, form, value)`.
    pub fn map_minors(&self, f: impl Fn(usize, usize, f64) -> f64) -> JacobianField {
        let nf = self.forms.len();
        let mut out = self.clone();
        for (k, v) in out.minors.iter_mut().enumerate() {
            *v = f(k / nf, k % nf, *v);
        }
        out
    }
}

/// The `n×d` matrix of edge-averaged difference quotients on one cell.
fn cell_difference_matrix(x: &GridMap, base: &[usize]) -> DMatrix<f64> {
    let d = x.d;
    let n = x.n;
    let mut out = DMatrix::zeros(n, d);
    let corners = 1usize << d;
    let mut lo = base.to_vec();
    let mut hi = base.to_vec();
    for j in 0..d {
        let width = x.breakpoints[j][base[j] + 1] - x.breakpoints[j][base[j]];
        for c in 0..corners {
            if c >> j & 1 == 1 {
                continue;
            }
            for k in 0..d {
                lo[k] = base[k] + (c >> k & 1);
                hi[k] = lo[k];
            }
            hi[j] += 1;
            let a = x.vertex(&lo);
            let b = x.vertex(&hi);
            for i in 0..n {
                out[(i, j)] += b[i] - a[i];
            }
        }
        let scale = width * (corners / 2) as f64;
        for i in 0..n {
            out[(i, j)] /= scale;
        }
    }
    out
}

/// Minors of every `d×d` row-selection, per cell, for all of `O_{d,n}`.
pub fn jacobian_field(x: &GridMap) -> Result<JacobianField> {
    let forms = enumerate_injections(x.d, x.n)?;
    jacobian_field_for(x, forms)
}

/// Minors for a chosen list of forms.
pub fn jacobian_field_for(x: &GridMap, forms: Vec<OrderedInjection>) -> Result<JacobianField> {
    let cells = x.cells_per_axis();
    let count: usize = cells.iter().product();
    let cols: Vec<usize> = (0..x.d).collect();
    let mut minors = Vec::with_capacity(count * forms.len());
    let mut base = vec![0; x.d];
    for cell in 0..count {
        unravel(cell, &cells, &mut base);
        let dm = cell_difference_matrix(x, &base);
        for p in &forms {
            minors.push(minor(&dm, p.image(), &cols));
        }
    }
    let widths = x
        .breakpoints
        .iter()
        .map(|b| b.windows(2).map(|w| w[1] - w[0]).collect())
        .collect();
    JacobianField::new(x.n, forms, widths, minors)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricKind {
    One,
    Inf,
}

/// Jacobian variation (`One`) or Jacobian Lipschitz (`Inf`) distance between fields.
pub fn metric_mu_fields(a: &JacobianField, b: &JacobianField, which: MetricKind) -> Result<f64> {
    let same_widths = a.widths.len() == b.widths.len()
        && a.widths.iter().zip(&b.widths).all(|(u, v)| {
            u.len() == v.len() && u.iter().zip(v).all(|(p, q)| (p - q).abs() <= 1e-12)
        });
    if !same_widths || a.forms != b.forms || a.n != b.n {
        return Err(Error::IncompatibleGrids(
            "fields differ in grid or form set".into(),
        ));
    }
    let nf = a.forms.len();
    let mut one = 0.0;
    let mut inf: f64 = 0.0;
    for cell in 0..a.cell_count() {
        let diff: f64 = (0..nf)
            .map(|f| (a.minor(cell, f) - b.minor(cell, f)).powi(2))
            .sum::<f64>()
            .sqrt();
        one += diff * a.cell_volume(cell);
        inf = inf.max(diff);
    }
    Ok(match which {
        MetricKind::One => one,
        MetricKind::Inf => inf,
    })
}

pub fn metric_mu(x: &GridMap, y: &GridMap, which: MetricKind) -> Result<f64> {
    if !x.same_grid(y) {
        return Err(Error::IncompatibleGrids(
            "maps differ in dimensions or breakpoints".into(),
        ));
    }
    metric_mu_fields(&jacobian_field(x)?, &jacobian_field(y)?, which)
}

/// Samples `s ↦ A s` on a uniform grid; `A` is `n×d`.
pub fn from_linear_map(a: &DMatrix<f64>, resolution: &[usize]) -> Result<GridMap> {
    if resolution.len() != a.ncols() || resolution.contains(&0) {
        return Err(Error::InvalidDimension(format!(
            "resolution {resolution:?} does not fit a matrix with {} columns",
            a.ncols()
        )));
    }
    let bps = resolution.iter().map(|&r| uniform_breakpoints(r)).collect();
    GridMap::from_fn(a.nrows(), bps, |s| {
        (0..a.nrows())
            .map(|i| (0..a.ncols()).map(|j| a[(i, j)] * s[j]).sum())
            .collect()
    })
}

/// `x(s) = Σ_j g_j(s_j)`, axis `j` using the breakpoints of path `j`.
pub fn from_sum_of_paths(paths: &[PathSamples]) -> Result<GridMap> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    let n = paths[0].n();
    if paths.iter().any(|p| p.n() != n) {
        return Err(Error::InvalidInput("paths differ in codomain dimension".into()));
    }
    let bps: Vec<Vec<f64>> = paths.iter().map(|p| p.times().to_vec()).collect();
    let extents: Vec<usize> = bps.iter().map(Vec::len).collect();
    let total: usize = extents.iter().product();
    let mut idx = vec![0; extents.len()];
    let mut samples = Vec::with_capacity(total * n);
    for flat in 0..total {
        unravel(flat, &extents, &mut idx);
        for i in 0..n {
            samples.push(paths.iter().zip(&idx).map(|(p, &k)| p.value(k)[i]).sum());
        }
    }
    GridMap::new(n, bps, samples)
}

/// Concatenation along axis `j`: `x` on `s_j ∈ [0,1/2]`, `y` on `[1/2,1]`.
pub fn compose_j(x: &GridMap, y: &GridMap, j: usize) -> Result<GridMap> {
    if j >= x.d {
        return Err(Error::NotComposable {
            axis: j,
            detail: format!("axis out of range for d={}", x.d),
        });
    }
    if !x.same_grid(y) {
        return Err(Error::NotComposable {
            axis: j,
            detail: "maps differ in dimensions or breakpoints".into(),
        });
    }
    let ext = x.vertex_extents();
    let nj = ext[j] - 1;
    let total: usize = ext.iter().product();
    let mut idx = vec![0; x.d];
    for flat in 0..total {
        unravel(flat, &ext, &mut idx);
        if idx[j] != 0 {
            continue;
        }
        let a_face = {
            let mut t = idx.clone();
            t[j] = nj;
            x.vertex(&t).to_vec()
        };
        let b_face = y.vertex(&idx);
        for i in 0..x.n {
            if (a_face[i] - b_face[i]).abs() > FACE_TOLERANCE {
                return Err(Error::NotComposable {
                    axis: j,
                    detail: format!(
                        "face mismatch at vertex {idx:?}, coordinate {}: {} vs {}",
                        i + 1,
                        a_face[i],
                        b_face[i]
                    ),
                });
            }
        }
    }
    let mut bps = x.breakpoints.clone();
    let old = &x.breakpoints[j];
    let mut axis: Vec<f64> = old.iter().map(|t| 0.5 * t).collect();
    axis.extend(old[1..].iter().map(|t| 0.5 + 0.5 * t));
    *axis.last_mut().unwrap() = 1.0;
    bps[j] = axis;
    let new_ext: Vec<usize> = bps.iter().map(Vec::len).collect();
    let new_total: usize = new_ext.iter().product();
    let mut samples = Vec::with_capacity(new_total * x.n);
    for flat in 0..new_total {
        unravel(flat, &new_ext, &mut idx);
        if idx[j] <= nj {
            samples.extend_from_slice(x.vertex(&idx));
        } else {
            idx[j] -= nj;
            samples.extend_from_slice(y.vertex(&idx));
        }
    }
    GridMap::new(x.n, bps, samples)
}

/// The sub-grid `lo_j..=hi_j` (breakpoint indices), rescaled affinely onto `[0,1]^d`.
pub fn restrict(x: &GridMap, sub: &SubdomainSpec) -> Result<GridMap> {
    sub.validate(&x.cells_per_axis())?;
    if sub.is_empty() {
        return Err(Error::InvalidIndex("cannot restrict to an empty box".into()));
    }
    let bps: Vec<Vec<f64>> = (0..x.d)
        .map(|j| {
            let a = x.breakpoints[j][sub.lo[j]];
            let b = x.breakpoints[j][sub.hi[j]];
            let last = sub.hi[j] - sub.lo[j];
            x.breakpoints[j][sub.lo[j]..=sub.hi[j]]
                .iter()
                .enumerate()
                .map(|(k, t)| {
                    if k == 0 {
                        0.0
                    } else if k == last {
                        1.0
                    } else {
                        (t - a) / (b - a)
                    }
                })
                .collect()
        })
        .collect();
    let ext: Vec<usize> = bps.iter().map(Vec::len).collect();
    let total: usize = ext.iter().product();
    let mut idx = vec![0; x.d];
    let mut samples = Vec::with_capacity(total * x.n);
    for flat in 0..total {
        unravel(flat, &ext, &mut idx);
        for j in 0..x.d {
            idx[j] += sub.lo[j];
        }
        samples.extend_from_slice(x.vertex(&idx));
    }
    GridMap::new(x.n, bps, samples)
}

/// `x ∘ ρ_g`.
pub fn bd_transform(x: &GridMap, g: &HyperoctahedralElement) -> Result<GridMap> {
    if g.dim() != x.d {
        return Err(Error::InvalidInput(format!(
            "group element of dimension {} applied to a d={} map",
            g.dim(),
            x.d
        )));
    }
    let sigma = g.rotation();
    let tau = g.reflections();
    let inv = sigma.inverse();
    // output axis l reads source axis σ⁻¹(l)
    let bps: Vec<Vec<f64>> = (0..x.d)
        .map(|l| {
            let src = &x.breakpoints[inv.apply(l)];
            if tau[l] {
                src.iter().rev().map(|t| 1.0 - t).collect()
            } else {
                src.clone()
            }
        })
        .collect();
    let ext: Vec<usize> = bps.iter().map(Vec::len).collect();
    let total: usize = ext.iter().product();
    let mut out_idx = vec![0; x.d];
    let mut src_idx = vec![0; x.d];
    let mut samples = Vec::with_capacity(total * x.n);
    for flat in 0..total {
        unravel(flat, &ext, &mut out_idx);
        for k in 0..x.d {
            let l = sigma.apply(k);
            src_idx[k] = if tau[l] {
                ext[l] - 1 - out_idx[l]
            } else {
                out_idx[l]
            };
        }
        samples.extend_from_slice(x.vertex(&src_idx));
    }
    GridMap::new(x.n, bps, samples)
}

/// Same samples on relabeled breakpoints: `x ∘ φ⁻¹` for monotone `φ`.
pub fn reparametrize(x: &GridMap, maps: &[Vec<f64>]) -> Result<GridMap> {
    if maps.len() != x.d {
        return Err(Error::InvalidInput(format!(
            "expected {} relabelings, got {}",
            x.d,
            maps.len()
        )));
    }
    for (j, m) in maps.iter().enumerate() {
        if m.len() != x.breakpoints[j].len() {
            return Err(Error::InvalidInput(format!(
                "relabeling {j} has {} entries, axis has {}",
                m.len(),
                x.breakpoints[j].len()
            )));
        }
        validate_breakpoints(j, m).map_err(|e| Error::InvalidInput(e.to_string()))?;
    }
    GridMap::new(x.n, maps.to_vec(), x.samples.clone())
}

/// `s ↦ (s, x(s))`.
pub fn lift_parametrized(x: &GridMap) -> Result<GridMap> {
    let ext = x.vertex_extents();
    let total: usize = ext.iter().product();
    let mut idx = vec![0; x.d];
    let mut samples = Vec::with_capacity(total * (x.d + x.n));
    for flat in 0..total {
        unravel(flat, &ext, &mut idx);
        for j in 0..x.d {
            samples.push(x.breakpoints[j][idx[j]]);
        }
        samples.extend_from_slice(&x.samples[flat * x.n..(flat + 1) * x.n]);
    }
    GridMap::new(x.d + x.n, x.breakpoints.clone(), samples)
}

/// The forms `W = {U} ∪ (O_{d,n} shifted past the parametrization block)`.
pub fn parametrized_forms(d: usize, n: usize) -> Result<Vec<OrderedInjection>> {
    let mut forms = vec![OrderedInjection::from_vec_unchecked((0..d).collect())];
    forms.extend(enumerate_injections(d, n)?.iter().map(|p| p.shifted(d)));
    Ok(forms)
}

/// The minor field of `lift_parametrized(x)` on `W`, with `J_U = 1` set directly.
pub fn lifted_field(x: &GridMap) -> Result<JacobianField> {
    let base = jacobian_field(x)?;
    let forms = parametrized_forms(x.d, x.n)?;
    let nf = base.forms.len();
    let mut minors = Vec::with_capacity(base.cell_count() * (nf + 1));
    for chunk in base.minors.chunks(nf) {
        minors.push(1.0);
        minors.extend_from_slice(chunk);
    }
    JacobianField::new(x.d + x.n, forms, base.widths.clone(), minors)
}

/// Pointwise `ν x`.
pub fn scale_map(x: &GridMap, nu: f64) -> Result<GridMap> {
    GridMap::new(
        x.n,
        x.breakpoints.clone(),
        x.samples.iter().map(|v| nu * v).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{enumerate_hyperoctahedral, enumerate_permutations};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, n: usize, cells: &[usize]) -> GridMap {
        let bps = cells.iter().map(|&c| uniform_breakpoints(c)).collect();
        let ext: usize = cells.iter().map(|c| c + 1).product();
        let samples = (0..ext * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        GridMap::new(n, bps, samples).unwrap()
    }

    #[test]
    fn linear_maps_have_constant_minors() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, -0.5, 0.25, 3.0, 1.0]);
        let x = from_linear_map(&a, &[5, 7]).unwrap();
        let f = jacobian_field(&x).unwrap();
        let expected = compound_col(&a);
        for cell in 0..f.cell_count() {
            for (k, e) in expected.iter().enumerate() {
                assert!((f.minor(cell, k) - e).abs() < 1e-12);
            }
        }
        let zero = from_linear_map(&DMatrix::zeros(3, 2), &[3, 3]).unwrap();
        assert!(zero.samples().iter().all(|&v| v == 0.0));
        let vols: f64 = f.cell_volumes().iter().sum();
        assert!((vols - 1.0).abs() < 1e-12);
    }

    fn compound_col(a: &DMatrix<f64>) -> Vec<f64> {
        enumerate_injections(a.ncols(), a.nrows())
            .unwrap()
            .iter()
            .map(|p| minor(a, p.image(), &(0..a.ncols()).collect::<Vec<_>>()))
            .collect()
    }

    #[test]
    fn algebraic_example_minors_converge() {
        let f = |s: &[f64]| {
            vec![
                s[0],
                s[0] * s[1].powi(2),
                s[0].powi(2) * s[1].powi(3),
                s[1].powi(4),
            ]
        };
        let forms = vec![
            OrderedInjection::from_one_based(&[1, 3], 4).unwrap(),
            OrderedInjection::from_one_based(&[1, 4], 4).unwrap(),
            OrderedInjection::from_one_based(&[2, 3], 4).unwrap(),
        ];
        let exact = |s: &[f64]| {
            [
                3.0 * (s[0] * s[1]).powi(2),
                4.0 * s[1].powi(3),
                -(s[0] * s[1].powi(2)).powi(2),
            ]
        };
        let mut prev = f64::INFINITY;
        for n in [8, 16, 32] {
            let x = GridMap::from_fn(4, vec![uniform_breakpoints(n); 2], f).unwrap();
            let field = jacobian_field_for(&x, forms.clone()).unwrap();
            let mut err: f64 = 0.0;
            for cell in 0..field.cell_count() {
                let e = exact(&field.cell_center(cell));
                for k in 0..3 {
                    err = err.max((field.minor(cell, k) - e[k]).abs());
                }
            }
            assert!(err < prev);
            prev = err;
        }
        assert!(prev < 0.05);
    }

    #[test]
    fn sum_of_paths_columns_are_separated() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p1 = PathSamples::new(
            uniform_breakpoints(4),
            (0..5).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        )
        .unwrap();
        let p2 = PathSamples::new(
            vec![0.0, 0.3, 0.5, 1.0],
            (0..4).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect(),
        )
        .unwrap();
        let x = from_sum_of_paths(&[p1.clone(), p2.clone()]).unwrap();
        for k1 in 0..4 {
            for k2 in 0..3 {
                let dm = cell_difference_matrix(&x, &[k1, k2]);
                for i in 0..3 {
                    let c1 = (p1.value(k1 + 1)[i] - p1.value(k1)[i]) / 0.25;
                    let w2 = p2.times()[k2 + 1] - p2.times()[k2];
                    let c2 = (p2.value(k2 + 1)[i] - p2.value(k2)[i]) / w2;
                    assert!((dm[(i, 0)] - c1).abs() < 1e-12);
                    assert!((dm[(i, 1)] - c2).abs() < 1e-12);
                }
                // Leibniz expansion over Σ_2
                let field = jacobian_field(&x).unwrap();
                let cell = k1 * 3 + k2;
                for (f, p) in field.forms().iter().enumerate() {
                    let leibniz: f64 = enumerate_permutations(2)
                        .iter()
                        .map(|s| {
                            s.sign()
                                * (0..2)
                                    .map(|j| dm[(p.image()[s.apply(j)], j)])
                                    .product::<f64>()
                        })
                        .sum();
                    assert!((field.minor(cell, f) - leibniz).abs() < 1e-12);
                }
            }
        }
        let d1 = from_sum_of_paths(&[p1.clone()]).unwrap();
        assert_eq!(d1.samples().len(), 15);
        assert_eq!(d1.vertex(&[2]), p1.value(2));
    }

    #[test]
    fn metric_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random_map(&mut rng, 3, &[3, 4]);
        assert_eq!(metric_mu(&x, &x, MetricKind::One).unwrap(), 0.0);
        let family = |a: f64| {
            GridMap::from_fn(3, vec![uniform_breakpoints(4); 2], move |s| {
                vec![a * s[0], s[1] / a, -a * s[0] + s[1] / a]
            })
            .unwrap()
        };
        for (a, b) in [(1.0, 2.0), (2.0, -0.5), (3.0, 1.0)] {
            assert!(metric_mu(&family(a), &family(b), MetricKind::Inf).unwrap() < 1e-12);
        }
        for _ in 0..100 {
            let a = random_map(&mut rng, 3, &[3, 4]);
            let b = random_map(&mut rng, 3, &[3, 4]);
            let c = random_map(&mut rng, 3, &[3, 4]);
            for kind in [MetricKind::One, MetricKind::Inf] {
                let ab = metric_mu(&a, &b, kind).unwrap();
                let bc = metric_mu(&b, &c, kind).unwrap();
                let ac = metric_mu(&a, &c, kind).unwrap();
                assert!(ac <= ab + bc + 1e-12);
            }
        }
        let other = random_map(&mut rng, 3, &[4, 4]);
        assert!(matches!(
            metric_mu(&x, &other, MetricKind::One),
            Err(Error::IncompatibleGrids(_))
        ));
    }

    #[test]
    fn compose_and_restrict_halves() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_map(&mut rng, 3, &[3, 4]);
        for j in 0..2 {
            // y shares x's j=1 face as its j=0 face
            let mut y = random_map(&mut rng, 3, &[3, 4]);
            let ext = x.vertex_extents();
            let total: usize = ext.iter().product();
            let mut idx = vec![0; 2];
            for flat in 0..total {
                unravel(flat, &ext, &mut idx);
                if idx[j] == 0 {
                    let mut t = idx.clone();
                    t[j] = ext[j] - 1;
                    let v = x.vertex(&t).to_vec();
                    y.samples[flat * 3..flat * 3 + 3].copy_from_slice(&v);
                }
            }
            let z = compose_j(&x, &y, j).unwrap();
            assert_eq!(z.breakpoints()[j].len(), 2 * (ext[j] - 1) + 1);
            let cells = z.cells_per_axis();
            let mut lo = vec![0, 0];
            let mut hi = cells.clone();
            hi[j] = cells[j] / 2;
            let left = restrict(&z, &SubdomainSpec::new(lo.clone(), hi.clone())).unwrap();
            lo[j] = cells[j] / 2;
            hi[j] = cells[j];
            let right = restrict(&z, &SubdomainSpec::new(lo, hi)).unwrap();
            let fx = jacobian_field(&x).unwrap();
            let fy = jacobian_field(&y).unwrap();
            assert!(metric_mu_fields(&jacobian_field(&left).unwrap(), &fx, MetricKind::Inf).unwrap() < 1e-12);
            assert!(metric_mu_fields(&jacobian_field(&right).unwrap(), &fy, MetricKind::Inf).unwrap() < 1e-12);
            // composed minors are the halves' minors scaled by the chain-rule factor 2
            let fz = jacobian_field(&z).unwrap();
            for cell in 0..fz.cell_count() {
                let k = fz.cell_multi_index(cell);
                let (src, mut kk) = if k[j] < ext[j] - 1 { (&fx, k.clone()) } else { (&fy, k.clone()) };
                kk[j] %= ext[j] - 1;
                let sc = kk[0] * fx.cells()[1] + kk[1];
                for f in 0..3 {
                    assert!((fz.minor(cell, f) - 2.0 * src.minor(sc, f)).abs() < 1e-12);
                }
            }
        }
        let y = random_map(&mut rng, 3, &[3, 4]);
        assert!(matches!(compose_j(&x, &y, 0), Err(Error::NotComposable { .. })));
    }

    #[test]
    fn compose_with_constant_extension() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = random_map(&mut rng, 2, &[3, 3]);
        let ext = x.vertex_extents();
        let y = GridMap::from_fn(2, x.breakpoints.clone(), |s| {
            let k1 = x.breakpoints[1].iter().position(|t| *t == s[1]).unwrap();
            x.vertex(&[ext[0] - 1, k1]).to_vec()
        })
        .unwrap();
        let z = compose_j(&x, &y, 0).unwrap();
        let f = jacobian_field(&z).unwrap();
        for cell in 0..f.cell_count() {
            if f.cell_multi_index(cell)[0] >= 3 {
                assert_eq!(f.minor(cell, 0), 0.0);
            }
        }
        // d = 1 concatenation
        let p = GridMap::new(1, vec![uniform_breakpoints(2)], vec![0.0, 1.0, 3.0]).unwrap();
        let q = GridMap::new(1, vec![uniform_breakpoints(2)], vec![3.0, 2.0, 5.0]).unwrap();
        let pq = compose_j(&p, &q, 0).unwrap();
        assert_eq!(pq.samples(), &[0.0, 1.0, 3.0, 2.0, 5.0]);
        assert_eq!(pq.breakpoints()[0], vec![0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn bd_transform_examples_and_action_law() {
        let path = GridMap::new(2, vec![vec![0.0, 0.2, 1.0]], vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let refl = HyperoctahedralElement::new(vec![true], crate::index::Permutation::identity(1)).unwrap();
        let rev = bd_transform(&path, &refl).unwrap();
        assert_eq!(rev.samples(), &[4.0, 5.0, 2.0, 3.0, 0.0, 1.0]);
        assert!((rev.breakpoints()[0][1] - 0.8).abs() < 1e-15);
        let back = bd_transform(&rev, &refl).unwrap();
        assert_eq!(back.samples(), path.samples());
        for (u, v) in back.breakpoints()[0].iter().zip(&path.breakpoints()[0]) {
            assert!((u - v).abs() < 1e-15);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let bps = vec![vec![0.0, 0.3, 1.0], vec![0.0, 0.1, 0.6, 1.0], vec![0.0, 0.5, 0.7, 0.9, 1.0]];
        let x = GridMap::from_fn(2, bps, |_| vec![rng.random(), rng.random()]).unwrap();
        assert_eq!(bd_transform(&x, &HyperoctahedralElement::identity(3)).unwrap(), x);
        let group = enumerate_hyperoctahedral(3);
        for g1 in group.iter().step_by(5) {
            for g2 in group.iter().step_by(3) {
                let lhs = bd_transform(&bd_transform(&x, g1).unwrap(), g2).unwrap();
                let rhs = bd_transform(&x, &g1.compose(g2)).unwrap();
                assert_eq!(lhs.samples(), rhs.samples());
                for (a, b) in lhs.breakpoints().iter().zip(rhs.breakpoints()) {
                    for (u, v) in a.iter().zip(b) {
                        assert!((u - v).abs() < 1e-15);
                    }
                }
            }
        }
        // vertex values follow x(ρ_g(s))
        let smooth = GridMap::from_fn(1, vec![vec![0.0, 0.3, 1.0], vec![0.0, 0.6, 1.0]], |s| {
            vec![s[0] + 10.0 * s[1]]
        })
        .unwrap();
        for g in enumerate_hyperoctahedral(2) {
            let y = bd_transform(&smooth, &g).unwrap();
            for k0 in 0..3 {
                for k1 in 0..3 {
                    let s = [y.breakpoints()[0][k0], y.breakpoints()[1][k1]];
                    let u = g.apply_point(&s);
                    assert!((y.vertex(&[k0, k1])[0] - (u[0] + 10.0 * u[1])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn reparametrize_and_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let x = random_map(&mut rng, 2, &[4]);
        assert_eq!(reparametrize(&x, &x.breakpoints.clone()).unwrap(), x);
        let sq: Vec<f64> = x.breakpoints()[0].iter().map(|t| t * t).collect();
        let y = reparametrize(&x, std::slice::from_ref(&sq)).unwrap();
        let cube: Vec<f64> = sq.iter().map(|t| t * t * t).collect();
        let z = reparametrize(&y, &[cube.clone()]).unwrap();
        let direct: Vec<f64> = x.breakpoints()[0].iter().map(|t| t.powi(6)).collect();
        for (a, b) in z.breakpoints()[0].iter().zip(&direct) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(reparametrize(&x, &[vec![0.0, 0.5, 0.4, 0.8, 1.0]]).is_err());
    }

    #[test]
    fn lift_and_scale() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let x = from_linear_map(&a, &[3, 3]).unwrap();
        let lifted = lift_parametrized(&x).unwrap();
        assert_eq!(lifted.n(), 4);
        let stacked = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 2.0, 3.0, 4.0]);
        let direct = from_linear_map(&stacked, &[3, 3]).unwrap();
        for (u, v) in lifted.samples().iter().zip(direct.samples()) {
            assert!((u - v).abs() < 1e-15);
        }
        let full = jacobian_field(&lifted).unwrap();
        let short = lifted_field(&x).unwrap();
        let restricted = full.select_forms(short.forms()).unwrap();
        assert!(metric_mu_fields(&restricted, &short, MetricKind::Inf).unwrap() < 1e-12);
        let constant = GridMap::from_fn(2, vec![uniform_breakpoints(3); 2], |_| vec![1.0, 2.0]).unwrap();
        let cf = jacobian_field(&lift_parametrized(&constant).unwrap()).unwrap();
        assert!((cf.minor(4, 0) - 1.0).abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let y = random_map(&mut rng, 3, &[3, 2]);
        assert_eq!(scale_map(&y, 1.0).unwrap(), y);
        assert!(scale_map(&y, 0.0).unwrap().samples().iter().all(|&v| v == 0.0));
        let fy = jacobian_field(&y).unwrap();
        let fs = jacobian_field(&scale_map(&y, 1.7).unwrap()).unwrap();
        for (u, v) in fy.minors().iter().zip(fs.minors()) {
            assert!((1.7f64.powi(2) * u - v).abs() < 1e-12);
        }
    }

    #[test]
    fn json_round_trip_and_first_violation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_map(&mut rng, 3, &[2, 3]);
        let v = x.to_json();
        assert_eq!(GridMap::from_json(&v).unwrap(), x);
        let mut bad = v.clone();
        bad["breakpoints"][1][2] = json!(0.1);
        let err = GridMap::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("breakpoints[1][2]"), "{err}");
        let mut bad = v.clone();
        bad["samples"][1][2] = json!([1.0, 2.0]);
        let err = GridMap::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("samples[1][2]"), "{err}");
    }
}
