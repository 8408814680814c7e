//! Combinatorial indices: order-preserving injections, permutations,
//! shuffles, level indices and elements of the hyperoctahedral group.
//!
//! Everything is stored 0-based. The JSON forms use the 1-based convention
//! (`[1,3]` is the injection picking coordinates one and three).

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A strictly increasing map `[d] -> [n]`, stored as its image.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedInjection(Vec<usize>);

impl OrderedInjection {
    pub fn new(image: Vec<usize>, n: usize) -> Result<Self> {
        if image.is_empty() {
            return Err(Error::InvalidIndex("empty injection".into()));
        }
        if image.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidIndex(format!(
                "injection {image:?} is not strictly increasing"
            )));
        }
        if image.iter().any(|&p| p >= n) {
            return Err(Error::InvalidIndex(format!(
                "injection {image:?} exceeds codomain dimension {n}"
            )));
        }
        Ok(Self(image))
    }

    /// Builds from 1-based entries.
    pub fn from_one_based(image: &[usize], n: usize) -> Result<Self> {
        if image.contains(&0) {
            return Err(Error::InvalidIndex("1-based index contains 0".into()));
        }
        Self::new(image.iter().map(|p| p - 1).collect(), n)
    }

    pub(crate) fn from_vec_unchecked(image: Vec<usize>) -> Self {
        Self(image)
    }

    pub fn image(&self) -> &[usize] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// Shifts every entry by `offset`, embedding `O_{d,n}` into `O_{d,n+offset}`.
    pub fn shifted(&self, offset: usize) -> Self {
        Self(self.0.iter().map(|p| p + offset).collect())
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|p| p + 1).collect()
    }
}

impl fmt::Display for OrderedInjection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, p) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, ")")
    }
}

impl Serialize for OrderedInjection {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for OrderedInjection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        if raw.contains(&0) || raw.windows(2).any(|w| w[0] >= w[1]) || raw.is_empty() {
            return Err(serde::de::Error::custom(format!(
                "invalid order-preserving injection {raw:?}"
            )));
        }
        Ok(Self(raw.into_iter().map(|p| p - 1).collect()))
    }
}

/// All `C(n,d)` order-preserving injections `[d] -> [n]`, lexicographic.
pub fn enumerate_injections(d: usize, n: usize) -> Result<Vec<OrderedInjection>> {
    if d == 0 || n == 0 || d > n {
        return Err(Error::InvalidDimension(format!(
            "need 1 <= d <= n, got d={d}, n={n}"
        )));
    }
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..d).collect();
    loop {
        out.push(OrderedInjection(current.clone()));
        // advance to the next combination
        let mut k = d;
        while k > 0 && current[k - 1] == n - d + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        current[k - 1] += 1;
        for t in k..d {
            current[t] = current[t - 1] + 1;
        }
    }
    Ok(out)
}

pub fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc as usize
}

pub fn factorial(m: usize) -> f64 {
    (1..=m).map(|k| k as f64).product()
}

/// A permutation of `0..m` in one-line notation: `images[i]` is the image of `i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let m = images.len();
        let mut seen = vec![false; m];
        for &v in &images {
            if v >= m || seen[v] {
                return Err(Error::InvalidIndex(format!(
                    "{images:?} is not a permutation of 0..{m}"
                )));
            }
            seen[v] = true;
        }
        Ok(Self(images))
    }

    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return Err(Error::InvalidIndex("1-based permutation contains 0".into()));
        }
        Self::new(images.iter().map(|v| v - 1).collect())
    }

    pub fn identity(m: usize) -> Self {
        Self((0..m).collect())
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| i == v)
    }

    /// `(self ∘ other)(i) = self(other(i))`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        debug_assert_eq!(self.degree(), other.degree());
        Permutation(other.0.iter().map(|&v| self.0[v]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Permutation(inv)
    }

    /// The reversal `i ↦ π(m+1−i)` (1-based), i.e. the one-line word read backwards.
    pub fn reversed(&self) -> Permutation {
        Permutation(self.0.iter().rev().copied().collect())
    }

    /// Parity as 0 (even) or 1 (odd).
    pub fn parity(&self) -> usize {
        let mut seen = vec![false; self.0.len()];
        let mut transpositions = 0;
        for start in 0..self.0.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0;
            let mut k = start;
            while !seen[k] {
                seen[k] = true;
                k = self.0[k];
                len += 1;
            }
            transpositions += len - 1;
        }
        transpositions % 2
    }

    pub fn sign(&self) -> f64 {
        if self.parity() == 0 {
            1.0
        } else {
            -1.0
        }
    }

    pub fn one_based(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, v) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, " ")?;
            }
            write!(f, "{}", v + 1)?;
        }
        write!(f, "]")
    }
}

impl Serialize for Permutation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.one_based().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Permutation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<usize>::deserialize(d)?;
        Permutation::from_one_based(&raw).map_err(serde::de::Error::custom)
    }
}

/// All permutations of `0..m` in lexicographic order.
pub fn enumerate_permutations(m: usize) -> Vec<Permutation> {
    let mut out = Vec::new();
    let mut current: Vec<usize> = (0..m).collect();
    loop {
        out.push(Permutation(current.clone()));
        // next lexicographic permutation
        let Some(i) = (1..m).rev().find(|&i| current[i - 1] < current[i]) else {
            break;
        };
        let j = (i..m).rev().find(|&j| current[j] > current[i - 1]).unwrap();
        current.swap(i - 1, j);
        current[i..].reverse();
    }
    out
}

/// The `(p,q)`-shuffles: permutations of `0..p+q` whose inverse is
/// increasing on `0..p` and on `p..p+q`. Lexicographic order.
pub fn enumerate_shuffles(p: usize, q: usize) -> Vec<Permutation> {
    let m = p + q;
    let mut out = Vec::new();
    // positions holding the first block, as a p-subset of 0..m
    let mut positions: Vec<usize> = (0..p).collect();
    loop {
        let mut images = vec![0; m];
        let mut first = 0;
        let mut second = p;
        for (slot, image) in images.iter_mut().enumerate() {
            if first < p && positions[first] == slot {
                *image = first;
                first += 1;
            } else {
                *image = second;
                second += 1;
            }
        }
        out.push(Permutation(images));
        let mut k = p;
        while k > 0 && positions[k - 1] == m - p + k - 1 {
            k -= 1;
        }
        if k == 0 {
            break;
        }
        positions[k - 1] += 1;
        for t in k..p {
            positions[t] = positions[t - 1] + 1;
        }
    }
    out.sort();
    out
}

/// `d` permutations sharing one degree `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PermutationTuple(Vec<Permutation>);

impl PermutationTuple {
    pub fn new(components: Vec<Permutation>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidIndex("permutation tuple needs d >= 1".into()));
        }
        let m = components[0].degree();
        if components.iter().any(|p| p.degree() != m) {
            return Err(Error::InvalidIndex(
                "permutation tuple components differ in degree".into(),
            ));
        }
        Ok(Self(components))
    }

    pub fn identity(d: usize, m: usize) -> Self {
        Self(vec![Permutation::identity(m); d])
    }

    pub fn arity(&self) -> usize {
        self.0.len()
    }

    pub fn degree(&self) -> usize {
        self.0[0].degree()
    }

    pub fn components(&self) -> &[Permutation] {
        &self.0
    }

    pub fn component(&self, j: usize) -> &Permutation {
        &self.0[j]
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().all(Permutation::is_identity)
    }

    /// Componentwise `σ ∘ π_j`.
    pub fn left_compose(&self, sigma: &Permutation) -> Self {
        Self(self.0.iter().map(|p| sigma.compose(p)).collect())
    }

    /// Componentwise `π_j ∘ σ_j`.
    pub fn right_compose(&self, sigmas: &[Permutation]) -> Self {
        Self(self.0.iter().zip(sigmas).map(|(p, s)| p.compose(s)).collect())
    }
}

/// All `d`-tuples of permutations of degree `m`, lexicographic.
pub fn enumerate_permutation_tuples(d: usize, m: usize) -> Vec<PermutationTuple> {
    let perms = enumerate_permutations(m);
    let mut out = vec![Vec::new()];
    for _ in 0..d {
        let mut next = Vec::with_capacity(out.len() * perms.len());
        for prefix in &out {
            for p in &perms {
                let mut v: Vec<Permutation> = prefix.clone();
                v.push(p.clone());
                next.push(v);
            }
        }
        out = next;
    }
    out.into_iter().map(PermutationTuple).collect()
}

/// Address of one signature coefficient: forms index `P` and permutation index `π`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LevelIndex {
    forms: Vec<OrderedInjection>,
    perms: PermutationTuple,
}

impl LevelIndex {
    pub fn new(forms: Vec<OrderedInjection>, perms: PermutationTuple) -> Result<Self> {
        if forms.len() != perms.degree() {
            return Err(Error::InvalidIndex(format!(
                "forms length {} differs from permutation degree {}",
                forms.len(),
                perms.degree()
            )));
        }
        let d = perms.arity();
        if forms.iter().any(|p| p.dim() != d) {
            return Err(Error::InvalidIndex(format!(
                "forms must be injections of [{d}]"
            )));
        }
        Ok(Self { forms, perms })
    }

    /// The level-0 index of a `d`-dimensional signature.
    pub fn empty(d: usize) -> Self {
        Self {
            forms: Vec::new(),
            perms: PermutationTuple::identity(d, 0),
        }
    }

    pub fn identity(forms: Vec<OrderedInjection>, d: usize) -> Result<Self> {
        let m = forms.len();
        Self::new(forms, PermutationTuple::identity(d, m))
    }

    pub fn level(&self) -> usize {
        self.forms.len()
    }

    pub fn dim(&self) -> usize {
        self.perms.arity()
    }

    pub fn forms(&self) -> &[OrderedInjection] {
        &self.forms
    }

    pub fn perms(&self) -> &PermutationTuple {
        &self.perms
    }

    /// Representative with `π_1 = id`, using `Φ^{P,π} = Φ^{π_1 P, π_1^{-1} π}`.
    pub fn canonical(&self) -> LevelIndex {
        if self.level() == 0 {
            return self.clone();
        }
        let first = self.perms.component(0).clone();
        let (relabeled, _) = act_on_level_index(&first, self)
            .expect("degree matches by construction");
        LevelIndex {
            forms: relabeled.forms,
            perms: self.perms.left_compose(&first.inverse()),
        }
    }

    /// Concatenation used by the shuffle product: forms `P₁‖P₂`, block-diagonal `π`.
    pub fn concat(&self, other: &LevelIndex) -> Result<LevelIndex> {
        if self.dim() != other.dim() {
            return Err(Error::InvalidIndex("concatenating indices of different d".into()));
        }
        let m1 = self.level();
        let mut forms = self.forms.clone();
        forms.extend(other.forms.iter().cloned());
        let perms = self
            .perms
            .components()
            .iter()
            .zip(other.perms.components())
            .map(|(a, b)| {
                let mut images = a.images().to_vec();
                images.extend(b.images().iter().map(|v| v + m1));
                Permutation(images)
            })
            .collect();
        LevelIndex::new(forms, PermutationTuple(perms))
    }
}

impl Ord for LevelIndex {
    fn cmp(&self, other: &Self) -> Ordering {
        self.level()
            .cmp(&other.level())
            .then_with(|| self.forms.cmp(&other.forms))
            .then_with(|| self.perms.cmp(&other.perms))
    }
}

impl PartialOrd for LevelIndex {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for LevelIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P=")?;
        for p in &self.forms {
            write!(f, "{p}")?;
        }
        write!(f, " pi=")?;
        for p in self.perms.components() {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct LevelIndexRepr {
    #[serde(rename = "P")]
    forms: Vec<OrderedInjection>,
    pi: Vec<Permutation>,
}

impl Serialize for LevelIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LevelIndexRepr {
            forms: self.forms.clone(),
            pi: self.perms.components().to_vec(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LevelIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = LevelIndexRepr::deserialize(d)?;
        let perms = PermutationTuple::new(raw.pi).map_err(serde::de::Error::custom)?;
        LevelIndex::new(raw.forms, perms).map_err(serde::de::Error::custom)
    }
}

/// All level-`m` indices over the given form set, in lexicographic order.
pub fn enumerate_level_indices(
    forms: &[OrderedInjection],
    d: usize,
    m: usize,
) -> Vec<LevelIndex> {
    if m == 0 {
        return vec![LevelIndex::empty(d)];
    }
    let mut sequences: Vec<Vec<OrderedInjection>> = vec![Vec::new()];
    for _ in 0..m {
        sequences = sequences
            .into_iter()
            .flat_map(|prefix| {
                forms.iter().map(move |p| {
                    let mut v = prefix.clone();
                    v.push(p.clone());
                    v
                })
            })
            .collect();
    }
    let tuples = enumerate_permutation_tuples(d, m);
    let mut out = Vec::with_capacity(sequences.len() * tuples.len());
    for seq in &sequences {
        for t in &tuples {
            out.push(LevelIndex {
                forms: seq.clone(),
                perms: t.clone(),
            });
        }
    }
    out
}

/// The two sides of permutation invariance: `(σP, π)` and `(P, σπ)`.
pub fn act_on_level_index(
    sigma: &Permutation,
    idx: &LevelIndex,
) -> Result<(LevelIndex, LevelIndex)> {
    if sigma.degree() != idx.level() {
        return Err(Error::InvalidIndex(format!(
            "permutation degree {} does not match level {}",
            sigma.degree(),
            idx.level()
        )));
    }
    let forms = (0..idx.level())
        .map(|i| idx.forms[sigma.apply(i)].clone())
        .collect();
    let relabeled = LevelIndex {
        forms,
        perms: idx.perms.clone(),
    };
    let moved = LevelIndex {
        forms: idx.forms.clone(),
        perms: idx.perms.left_compose(sigma),
    };
    Ok((relabeled, moved))
}

/// An element `(τ, σ)` of `B_d = Z_2^d ⋊ Σ_d` acting on the cube by
/// `ρ(s)_k = s_{σ(k)}` reflected when `τ_{σ(k)}` is set.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct HyperoctahedralElement {
    reflections: Vec<bool>,
    rotation: Permutation,
}

impl HyperoctahedralElement {
    pub fn new(reflections: Vec<bool>, rotation: Permutation) -> Result<Self> {
        if reflections.len() != rotation.degree() || reflections.is_empty() {
            return Err(Error::InvalidIndex(format!(
                "reflections length {} does not match rotation degree {}",
                reflections.len(),
                rotation.degree()
            )));
        }
        Ok(Self {
            reflections,
            rotation,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self {
            reflections: vec![false; d],
            rotation: Permutation::identity(d),
        }
    }

    pub fn dim(&self) -> usize {
        self.reflections.len()
    }

    pub fn reflections(&self) -> &[bool] {
        &self.reflections
    }

    pub fn rotation(&self) -> &Permutation {
        &self.rotation
    }

    pub fn reflection_count(&self) -> usize {
        self.reflections.iter().filter(|&&t| t).count()
    }

    /// The product with `ρ_{self·other} = ρ_self ∘ ρ_other`, so that
    /// `(x·g₁)·g₂ = x·(g₁g₂)` for the precomposition action on maps.
    pub fn compose(&self, other: &Self) -> Self {
        let rotation = other.rotation.compose(&self.rotation);
        let inv = other.rotation.inverse();
        let reflections = (0..self.dim())
            .map(|l| other.reflections[l] ^ self.reflections[inv.apply(l)])
            .collect();
        Self {
            reflections,
            rotation,
        }
    }

    pub fn inverse(&self) -> Self {
        // ρ⁻¹(u)_l = u_{σ⁻¹(l)} reflected by τ_l
        let rotation = self.rotation.inverse();
        let reflections = (0..self.dim())
            .map(|k| self.reflections[self.rotation.apply(k)])
            .collect();
        Self {
            reflections,
            rotation,
        }
    }

    /// Applies `ρ_g` to a point of the cube.
    pub fn apply_point(&self, s: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let src = self.rotation.apply(k);
                if self.reflections[src] {
                    1.0 - s[src]
                } else {
                    s[src]
                }
            })
            .collect()
    }
}

/// Every element of `B_d`.
pub fn enumerate_hyperoctahedral(d: usize) -> Vec<HyperoctahedralElement> {
    let mut out = Vec::new();
    for rotation in enumerate_permutations(d) {
        for mask in 0..(1usize << d) {
            let reflections = (0..d).map(|j| mask >> j & 1 == 1).collect();
            out.push(HyperoctahedralElement {
                reflections,
                rotation: rotation.clone(),
            });
        }
    }
    out
}

/// `π ↦ π_σ^τ` with the sign `(−1)^{m(|τ| + sgn σ)}`.
pub fn bd_act_on_perms(
    g: &HyperoctahedralElement,
    pi: &PermutationTuple,
) -> Result<(PermutationTuple, f64)> {
    if g.dim() != pi.arity() {
        return Err(Error::InvalidIndex(format!(
            "group element of dimension {} acting on {}-tuple",
            g.dim(),
            pi.arity()
        )));
    }
    let components = (0..g.dim())
        .map(|j| {
            let src = g.rotation.apply(j);
            let p = pi.component(src);
            if g.reflections[src] {
                p.reversed()
            } else {
                p.clone()
            }
        })
        .collect();
    let m = pi.degree();
    let exponent = m * (g.reflection_count() + g.rotation.parity());
    let sign = if exponent.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok((PermutationTuple(components), sign))
}

/// Preimage of `bd_act_on_perms`: the `π` with `π_σ^τ = target`.
pub(crate) fn bd_preimage(g: &HyperoctahedralElement, target: &PermutationTuple) -> PermutationTuple {
    let inv = g.rotation.inverse();
    let components = (0..g.dim())
        .map(|k| {
            let p = target.component(inv.apply(k));
            if g.reflections[k] {
                p.reversed()
            } else {
                p.clone()
            }
        })
        .collect();
    PermutationTuple(components)
}
