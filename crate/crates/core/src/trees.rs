//! Ulam-Harris genealogies: offspring laws, discrete Galton-Watson trees and
//! their continuous-time versions.
//!
//! A [`DiscreteTree`] is stored as the sequence of child counts in depth-first
//! (lexicographic) order of the addresses. That sequence determines the tree,
//! and the sibling/parent indices kept alongside it are derived from it.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vertex of the universal tree: a finite word over the positive integers.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Address(Vec<u32>);

impl Address {
    pub fn root() -> Self {
        Address(Vec::new())
    }

    pub fn new(path: Vec<u32>) -> Self {
        debug_assert!(path.iter().all(|&j| j >= 1), "Ulam-Harris indices start at 1");
        Address(path)
    }

    pub fn path(&self) -> &[u32] {
        &self.0
    }

    pub fn generation(&self) -> usize {
        self.0.len()
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn parent(&self) -> Option<Address> {
        if self.0.is_empty() {
            None
        } else {
            Some(Address(self.0[..self.0.len() - 1].to_vec()))
        }
    }

    /// The `j`-th child, `j >= 1`.
    pub fn child(&self, j: u32) -> Address {
        let mut p = self.0.clone();
        p.push(j);
        Address(p)
    }

    /// True when `self` is a strict ancestor of `other`.
    pub fn is_ancestor_of(&self, other: &Address) -> bool {
        self.0.len() < other.0.len() && other.0.starts_with(&self.0)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        write!(f, "(")?;
        for (i, j) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{j}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum LawError {
    #[error("pmf is empty")]
    Empty,
    #[error("pmf entry {index} is negative or not finite ({value})")]
    BadEntry { index: usize, value: f64 },
    #[error("pmf sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("offspring mean is {0}, the law must be critical")]
    NotCritical(f64),
    #[error("offspring variance must be positive and finite, got {0}")]
    Degenerate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawKind {
    GeometricHalf,
    PoissonOne,
    BinaryHalf,
    CustomPmf,
}

/// Critical reproduction law with finite positive variance.
#[derive(Clone, Debug, PartialEq)]
pub struct OffspringLaw {
    kind: LawKind,
    pmf: Vec<f64>,
    cdf: Vec<f64>,
    sigma2: f64,
}

impl OffspringLaw {
    /// `P(k) = 2^{-(k+1)}`, variance 2.
    pub fn geometric_half() -> Self {
        let pmf: Vec<f64> = (0..60).map(|k| 0.5f64.powi(k + 1)).collect();
        Self::build(LawKind::GeometricHalf, pmf, 2.0)
    }

    /// Poisson with mean 1, variance 1.
    pub fn poisson_one() -> Self {
        let mut pmf = Vec::with_capacity(30);
        let mut p = (-1.0f64).exp();
        for k in 0..30 {
            pmf.push(p);
            p /= (k + 1) as f64;
        }
        Self::build(LawKind::PoissonOne, pmf, 1.0)
    }

    /// Zero or two children with probability 1/2 each, variance 1.
    pub fn binary_half() -> Self {
        Self::build(LawKind::BinaryHalf, vec![0.5, 0.0, 0.5], 1.0)
    }

    pub fn custom(pmf: Vec<f64>) -> Result<Self, LawError> {
        if pmf.is_empty() {
            return Err(LawError::Empty);
        }
        for (index, &value) in pmf.iter().enumerate() {
            if !(value.is_finite() && value >= 0.0) {
                return Err(LawError::BadEntry { index, value });
            }
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LawError::NotNormalized(total));
        }
        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if (mean - 1.0).abs() > 1e-9 {
            return Err(LawError::NotCritical(mean));
        }
        let second: f64 = pmf.iter().enumerate().map(|(k, p)| (k * k) as f64 * p).sum();
        let sigma2 = second - mean * mean;
        if !(sigma2 > 1e-12 && sigma2.is_finite()) {
            return Err(LawError::Degenerate(sigma2));
        }
        Ok(Self::build(LawKind::CustomPmf, pmf, sigma2))
    }

    pub fn from_kind(kind: LawKind) -> Option<Self> {
        match kind {
            LawKind::GeometricHalf => Some(Self::geometric_half()),
            LawKind::PoissonOne => Some(Self::poisson_one()),
            LawKind::BinaryHalf => Some(Self::binary_half()),
            LawKind::CustomPmf => None,
        }
    }

    fn build(kind: LawKind, pmf: Vec<f64>, sigma2: f64) -> Self {
        let mut acc = 0.0;
        let cdf = pmf
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        OffspringLaw {
            kind,
            pmf,
            cdf,
            sigma2,
        }
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma(&self) -> f64 {
        self.sigma2.sqrt()
    }

    /// Probability of `k` children (0 beyond the tabulated support).
    pub fn pmf(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn pmf_table(&self) -> &[f64] {
        &self.pmf
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }

    pub(crate) fn cdf(&self) -> &[f64] {
        &self.cdf
    }

    /// Probability that the exploration walk steps down, i.e. `ρ(0)`.
    pub fn p_zero(&self) -> f64 {
        self.pmf[0]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        match self.kind {
            LawKind::GeometricHalf => {
                let mut k = 0;
                loop {
                    let tz = rng.next_u64().trailing_zeros();
                    k += tz;
                    if tz < 64 {
                        return k;
                    }
                }
            }
            LawKind::BinaryHalf => {
                if rng.next_u32() & 1 == 1 {
                    2
                } else {
                    0
                }
            }
            LawKind::PoissonOne | LawKind::CustomPmf => {
                let u: f64 = rng.gen();
                let idx = self.cdf.partition_point(|&c| c <= u);
                idx.min(self.pmf.len() - 1) as u32
            }
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum TreeError {
    #[error("child-count sequence is not the depth-first encoding of a finite tree")]
    BadEncoding,
    #[error("vertex set does not contain the root")]
    MissingRoot,
    #[error("vertex {0} is present but its parent is not")]
    NotParentClosed(String),
    #[error("children of {0} are not numbered 1..=k")]
    BadSiblings(String),
    #[error("lifetime of vertex {0} is not positive and finite")]
    BadLifetime(usize),
    #[error("lifetime vector has length {got}, tree has {expected} vertices")]
    LengthMismatch { got: usize, expected: usize },
    #[error("two death events share time {0}")]
    TiedEvents(f64),
}

/// The total progeny exceeded the sampling cap; the tree was not truncated.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("tree exceeded {cap} vertices")]
pub struct Overflow {
    pub cap: usize,
}

/// Finite plane tree. Vertex `i` is the `i`-th address in depth-first order,
/// so vertex 0 is the root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteTree {
    counts: Vec<u32>,
    parent: Vec<u32>,
    rank: Vec<u32>,
    child_offsets: Vec<u32>,
    child_list: Vec<u32>,
}

const NO_PARENT: u32 = u32::MAX;

impl DiscreteTree {
    /// Builds a tree from its child counts listed in depth-first order.
    pub fn from_preorder_counts(counts: Vec<u32>) -> Result<Self, TreeError> {
        let mut s: i64 = 0;
        for (i, &k) in counts.iter().enumerate() {
            s += k as i64 - 1;
            if s < 0 && i + 1 != counts.len() {
                return Err(TreeError::BadEncoding);
            }
        }
        if counts.is_empty() || s != -1 {
            return Err(TreeError::BadEncoding);
        }
        let n = counts.len();
        let mut parent = vec![NO_PARENT; n];
        let mut rank = vec![0u32; n];
        // (vertex, children handed out so far)
        let mut stack: Vec<(u32, u32)> = Vec::new();
        for v in 0..n {
            if let Some(top) = stack.last_mut() {
                top.1 += 1;
                parent[v] = top.0;
                rank[v] = top.1;
                if top.1 == counts[top.0 as usize] {
                    stack.pop();
                }
            }
            if counts[v] > 0 {
                stack.push((v as u32, 0));
            }
        }
        let mut child_offsets = Vec::with_capacity(n + 1);
        let mut acc = 0u32;
        for &k in &counts {
            child_offsets.push(acc);
            acc += k;
        }
        child_offsets.push(acc);
        let mut fill = child_offsets.clone();
        let mut child_list = vec![0u32; acc as usize];
        for v in 1..n {
            let p = parent[v] as usize;
            child_list[fill[p] as usize] = v as u32;
            fill[p] += 1;
        }
        Ok(DiscreteTree {
            counts,
            parent,
            rank,
            child_offsets,
            child_list,
        })
    }

    /// Builds a tree from an address → child-count map, checking that the
    /// root is present, the set is closed under parents, and that `u j` is
    /// present exactly when `j <= k_u`.
    pub fn from_address_map(map: &BTreeMap<Address, u32>) -> Result<Self, TreeError> {
        if !map.contains_key(&Address::root()) {
            return Err(TreeError::MissingRoot);
        }
        for (addr, &k) in map {
            if let Some(p) = addr.parent() {
                match map.get(&p) {
                    None => return Err(TreeError::NotParentClosed(addr.to_string())),
                    Some(&kp) => {
                        let j = *addr.path().last().unwrap();
                        if j == 0 || j > kp {
                            return Err(TreeError::BadSiblings(p.to_string()));
                        }
                    }
                }
            }
            for j in 1..=k {
                if !map.contains_key(&addr.child(j)) {
                    return Err(TreeError::BadSiblings(addr.to_string()));
                }
            }
        }
        // BTreeMap order on words is lexicographic, i.e. depth-first.
        Self::from_preorder_counts(map.values().copied().collect())
    }

    pub fn leaf() -> Self {
        Self::from_preorder_counts(vec![0]).unwrap()
    }

    /// Root with `k` leaf children.
    pub fn star(k: u32) -> Self {
        let mut counts = vec![k];
        counts.extend(std::iter::repeat_n(0, k as usize));
        Self::from_preorder_counts(counts).unwrap()
    }

    /// Path with `n` vertices.
    pub fn chain(n: usize) -> Self {
        assert!(n >= 1);
        let mut counts = vec![1; n];
        counts[n - 1] = 0;
        Self::from_preorder_counts(counts).unwrap()
    }

    pub fn size(&self) -> usize {
        self.counts.len()
    }

    pub fn preorder_counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn child_count(&self, v: usize) -> u32 {
        self.counts[v]
    }

    pub fn children(&self, v: usize) -> &[u32] {
        let lo = self.child_offsets[v] as usize;
        let hi = self.child_offsets[v + 1] as usize;
        &self.child_list[lo..hi]
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        match self.parent[v] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    /// Position of `v` among its siblings, starting at 1 (0 for the root).
    pub fn sibling_rank(&self, v: usize) -> u32 {
        self.rank[v]
    }

    pub fn generation(&self, v: usize) -> usize {
        let mut g = 0;
        let mut u = v;
        while let Some(p) = self.parent(u) {
            g += 1;
            u = p;
        }
        g
    }

    pub fn address(&self, v: usize) -> Address {
        let mut path = Vec::new();
        let mut u = v;
        while let Some(p) = self.parent(u) {
            path.push(self.rank[u]);
            u = p;
        }
        path.reverse();
        Address(path)
    }

    pub fn addresses(&self) -> Vec<Address> {
        (0..self.size()).map(|v| self.address(v)).collect()
    }

    pub fn vertex_of(&self, addr: &Address) -> Option<usize> {
        let mut v = 0usize;
        for &j in addr.path() {
            let ch = self.children(v);
            if j == 0 || j as usize > ch.len() {
                return None;
            }
            v = ch[j as usize - 1] as usize;
        }
        Some(v)
    }

    pub fn to_address_map(&self) -> BTreeMap<Address, u32> {
        (0..self.size())
            .map(|v| (self.address(v), self.counts[v]))
            .collect()
    }

    /// True when `a` is a strict ancestor of `b`.
    pub fn is_ancestor(&self, a: usize, b: usize) -> bool {
        let mut u = b;
        while let Some(p) = self.parent(u) {
            if p == a {
                return true;
            }
            u = p;
        }
        false
    }

    /// Number of vertices in the subtree rooted at `v` (including `v`).
    pub fn subtree_size(&self, v: usize) -> usize {
        // The subtree occupies a contiguous preorder block starting at v.
        let mut s: i64 = 0;
        let mut i = v;
        loop {
            s += self.counts[i] as i64 - 1;
            i += 1;
            if s == -1 {
                return i - v;
            }
        }
    }

    /// The subtree rooted at `v`, re-rooted at the empty address.
    pub fn subtree(&self, v: usize) -> DiscreteTree {
        let n = self.subtree_size(v);
        Self::from_preorder_counts(self.counts[v..v + n].to_vec()).unwrap()
    }

    /// Keeps the vertices flagged in `keep` (which must be parent-closed and
    /// contain the root), with child counts recomputed.
    pub(crate) fn restrict(&self, keep: &[bool]) -> DiscreteTree {
        debug_assert!(keep[0]);
        let counts = (0..self.size())
            .filter(|&v| keep[v])
            .map(|v| self.children(v).iter().filter(|&&c| keep[c as usize]).count() as u32)
            .collect();
        Self::from_preorder_counts(counts).expect("restriction to a parent-closed set")
    }

    /// Same as `restrict`, additionally returning the map new index → old index.
    pub(crate) fn restrict_with_map(&self, keep: &[bool]) -> (DiscreteTree, Vec<usize>) {
        let map: Vec<usize> = (0..self.size()).filter(|&v| keep[v]).collect();
        (self.restrict(keep), map)
    }

    #[cfg(debug_assertions)]
    pub(crate) fn check_invariants(&self) {
        let map = self.to_address_map();
        debug_assert!(Self::from_address_map(&map).is_ok());
    }
}

/// A discrete tree whose individuals carry life-lengths. The root is born at
/// time 0 and every child is born at its parent's death.
#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousTree {
    shape: DiscreteTree,
    lifetime: Vec<f64>,
    birth: Vec<f64>,
}

impl ContinuousTree {
    pub fn new(shape: DiscreteTree, lifetime: Vec<f64>) -> Result<Self, TreeError> {
        Self::with_root_birth(shape, lifetime, 0.0)
    }

    pub(crate) fn with_root_birth(
        shape: DiscreteTree,
        lifetime: Vec<f64>,
        root_birth: f64,
    ) -> Result<Self, TreeError> {
        if lifetime.len() != shape.size() {
            return Err(TreeError::LengthMismatch {
                got: lifetime.len(),
                expected: shape.size(),
            });
        }
        if let Some(v) = lifetime.iter().position(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(TreeError::BadLifetime(v));
        }
        let birth = births(&shape, &lifetime, root_birth);
        let t = ContinuousTree {
            shape,
            lifetime,
            birth,
        };
        if let Some(time) = t.first_tie() {
            return Err(TreeError::TiedEvents(time));
        }
        Ok(t)
    }

    pub fn shape(&self) -> &DiscreteTree {
        &self.shape
    }

    pub fn size(&self) -> usize {
        self.shape.size()
    }

    pub fn lifetime(&self, v: usize) -> f64 {
        self.lifetime[v]
    }

    pub fn lifetimes(&self) -> &[f64] {
        &self.lifetime
    }

    pub fn birth(&self, v: usize) -> f64 {
        self.birth[v]
    }

    pub fn death(&self, v: usize) -> f64 {
        self.birth[v] + self.lifetime[v]
    }

    /// Vertices sorted by death time (ties, which valid trees never have,
    /// fall back to depth-first order).
    pub fn by_death(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.size()).collect();
        order.sort_by(|&a, &b| self.death(a).total_cmp(&self.death(b)).then(a.cmp(&b)));
        order
    }

    fn first_tie(&self) -> Option<f64> {
        let order = self.by_death();
        order
            .windows(2)
            .find(|w| self.death(w[0]) == self.death(w[1]))
            .map(|w| self.death(w[0]))
    }

    /// Subtree rooted at `v`; event times are kept as in `self`.
    pub fn subtree(&self, v: usize) -> ContinuousTree {
        let n = self.shape.subtree_size(v);
        ContinuousTree {
            shape: self.shape.subtree(v),
            lifetime: self.lifetime[v..v + n].to_vec(),
            birth: self.birth[v..v + n].to_vec(),
        }
    }

    pub(crate) fn restrict(&self, keep: &[bool]) -> ContinuousTree {
        let (shape, map) = self.shape.restrict_with_map(keep);
        ContinuousTree {
            shape,
            lifetime: map.iter().map(|&v| self.lifetime[v]).collect(),
            birth: map.iter().map(|&v| self.birth[v]).collect(),
        }
    }
}

fn births(shape: &DiscreteTree, lifetime: &[f64], root_birth: f64) -> Vec<f64> {
    let mut birth = vec![0.0; shape.size()];
    birth[0] = root_birth;
    // Preorder: parents precede children.
    for v in 1..shape.size() {
        let p = shape.parent(v).unwrap();
        birth[v] = birth[p] + lifetime[p];
    }
    birth
}

/// Samples a Galton-Watson tree by drawing child counts in depth-first order
/// until the exploration walk reaches -1.
pub fn sample_gw_tree<R: Rng + ?Sized>(
    law: &OffspringLaw,
    rng: &mut R,
    max_vertices: usize,
) -> Result<DiscreteTree, Overflow> {
    assert!(max_vertices >= 1, "max_vertices must be at least 1");
    let mut counts = Vec::new();
    let mut s: i64 = 0;
    loop {
        if counts.len() == max_vertices {
            return Err(Overflow { cap: max_vertices });
        }
        let k = law.sample(rng);
        counts.push(k);
        s += k as i64 - 1;
        if s == -1 {
            break;
        }
    }
    let tree = DiscreteTree::from_preorder_counts(counts).expect("walk stopped at -1");
    #[cfg(debug_assertions)]
    if tree.size() <= 64 {
        tree.check_invariants();
    }
    Ok(tree)
}

/// Samples a Galton-Watson tree with i.i.d. exponential life-lengths.
pub fn sample_continuous_gw_tree<R: Rng + ?Sized>(
    law: &OffspringLaw,
    lifetime_mean: f64,
    rng: &mut R,
    max_vertices: usize,
) -> Result<ContinuousTree, Overflow> {
    assert!(lifetime_mean > 0.0, "lifetime mean must be positive");
    let shape = sample_gw_tree(law, rng, max_vertices)?;
    let exp = Exp::new(1.0 / lifetime_mean).unwrap();
    let mut lifetime: Vec<f64> = (0..shape.size()).map(|_| draw_positive(&exp, rng)).collect();
    loop {
        let birth = births(&shape, &lifetime, 0.0);
        let mut order: Vec<usize> = (0..shape.size()).collect();
        let death = |v: usize| birth[v] + lifetime[v];
        order.sort_by(|&a, &b| death(a).total_cmp(&death(b)));
        match order.windows(2).find(|w| death(w[0]) == death(w[1])) {
            None => break,
            Some(w) => {
                let v = w[1].max(w[0]);
                lifetime[v] = draw_positive(&exp, rng);
            }
        }
    }
    Ok(ContinuousTree::new(shape, lifetime).expect("ties were resampled"))
}

fn draw_positive<R: Rng + ?Sized>(exp: &Exp<f64>, rng: &mut R) -> f64 {
    loop {
        let x = exp.sample(rng);
        if x > 0.0 {
            return x;
        }
    }
}

pub fn tree_size(tree: &DiscreteTree) -> usize {
    tree.size()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn addr(p: &[u32]) -> Address {
        Address::new(p.to_vec())
    }

    #[test]
    fn address_parent_and_generation() {
        let a = addr(&[2, 1, 3]);
        assert_eq!(a.generation(), 3);
        assert_eq!(a.parent(), Some(addr(&[2, 1])));
        assert_eq!(Address::root().parent(), None);
        assert!(addr(&[2]).is_ancestor_of(&a));
        assert!(!a.is_ancestor_of(&a));
        assert_eq!(a.to_string(), "(2,1,3)");
    }

    #[test]
    fn sizes_of_small_trees() {
        assert_eq!(tree_size(&DiscreteTree::leaf()), 1);
        assert_eq!(tree_size(&DiscreteTree::star(3)), 4);
        assert_eq!(tree_size(&DiscreteTree::chain(3)), 3);
    }

    #[test]
    fn address_map_round_trip() {
        // root -> {(1) -> {(1,1)}, (2)}
        let t = DiscreteTree::from_preorder_counts(vec![2, 1, 0, 0]).unwrap();
        let map = t.to_address_map();
        let keys: Vec<String> = map.keys().map(|a| a.to_string()).collect();
        assert_eq!(keys, ["∅", "(1)", "(1,1)", "(2)"]);
        assert_eq!(DiscreteTree::from_address_map(&map).unwrap(), t);
        assert_eq!(t.vertex_of(&addr(&[1, 1])), Some(2));
        assert_eq!(t.vertex_of(&addr(&[3])), None);
    }

    #[test]
    fn address_map_rejects_bad_sets() {
        let mut m = BTreeMap::new();
        m.insert(addr(&[1]), 0);
        assert_eq!(DiscreteTree::from_address_map(&m), Err(TreeError::MissingRoot));
        m.insert(Address::root(), 2);
        assert!(matches!(
            DiscreteTree::from_address_map(&m),
            Err(TreeError::BadSiblings(_))
        ));
        m.insert(addr(&[2, 1]), 0);
        m.insert(addr(&[2]), 0);
        assert!(DiscreteTree::from_address_map(&m).is_err());
    }

    #[test]
    fn bad_encodings() {
        assert!(DiscreteTree::from_preorder_counts(vec![]).is_err());
        assert!(DiscreteTree::from_preorder_counts(vec![1]).is_err());
        assert!(DiscreteTree::from_preorder_counts(vec![0, 0]).is_err());
    }

    #[test]
    fn custom_law_validation() {
        assert!(OffspringLaw::custom(vec![0.5, 0.0, 0.5]).is_ok());
        assert_eq!(
            OffspringLaw::custom(vec![0.5, 0.5]).unwrap_err(),
            LawError::NotCritical(0.5)
        );
        assert!(matches!(
            OffspringLaw::custom(vec![0.0, 1.0]),
            Err(LawError::Degenerate(_))
        ));
        assert!(matches!(
            OffspringLaw::custom(vec![0.5, 0.6]),
            Err(LawError::NotNormalized(_))
        ));
    }

    #[test]
    fn builtin_laws_are_critical() {
        for law in [
            OffspringLaw::geometric_half(),
            OffspringLaw::poisson_one(),
            OffspringLaw::binary_half(),
        ] {
            let total: f64 = law.pmf_table().iter().sum();
            assert!((total - 1.0).abs() < 1e-12, "{:?}", law.kind());
            assert!((law.mean() - 1.0).abs() < 1e-12);
            let second: f64 = law
                .pmf_table()
                .iter()
                .enumerate()
                .map(|(k, p)| (k * k) as f64 * p)
                .sum();
            assert!((second - 1.0 - law.sigma2()).abs() < 1e-12);
        }
    }

    fn se(p: f64, n: f64) -> f64 {
        (p * (1.0 - p) / n).sqrt()
    }

    #[test]
    fn geometric_half_pmf() {
        let law = OffspringLaw::geometric_half();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 1_000_000;
        let mut hist = [0u32; 3];
        for _ in 0..n {
            let k = law.sample(&mut rng) as usize;
            if k < 3 {
                hist[k] += 1;
            }
        }
        for (k, &c) in hist.iter().enumerate() {
            let p = 0.5f64.powi(k as i32 + 1);
            let f = c as f64 / n as f64;
            assert!((f - p).abs() < 3.0 * se(p, n as f64), "k={k}: {f} vs {p}");
        }
    }

    #[test]
    fn binary_half_support() {
        let law = OffspringLaw::binary_half();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 1_000_000;
        let mut twos = 0;
        for _ in 0..n {
            match law.sample(&mut rng) {
                0 => {}
                2 => twos += 1,
                k => panic!("unexpected {k}"),
            }
        }
        let f = twos as f64 / n as f64;
        assert!((f - 0.5).abs() < 3.0 * se(0.5, n as f64));
    }

    #[test]
    fn sample_means_are_critical() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 1_000_000;
        for law in [
            OffspringLaw::geometric_half(),
            OffspringLaw::poisson_one(),
            OffspringLaw::binary_half(),
        ] {
            let sum: u64 = (0..n).map(|_| law.sample(&mut rng) as u64).sum();
            let mean = sum as f64 / n as f64;
            let tol = 3.0 * (law.sigma2() / n as f64).sqrt();
            assert!((mean - 1.0).abs() < tol, "{:?}: {mean}", law.kind());
        }
    }

    #[test]
    fn binary_trees_have_even_counts() {
        let law = OffspringLaw::binary_half();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..2000 {
            if let Ok(t) = sample_gw_tree(&law, &mut rng, 10_000) {
                assert!(t.preorder_counts().iter().all(|&k| k == 0 || k == 2));
            }
        }
    }

    #[test]
    fn cap_of_one_overflows_with_prob_one_minus_p0() {
        let law = OffspringLaw::poisson_one();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let over = (0..n)
            .filter(|_| sample_gw_tree(&law, &mut rng, 1).is_err())
            .count();
        let p = 1.0 - law.p_zero();
        let f = over as f64 / n as f64;
        assert!((f - p).abs() < 3.0 * se(p, n as f64));
    }

    #[test]
    fn small_tree_frequencies_geometric() {
        // Trees of size 1, 2, 3 under 2^{-(k+1)}: counts (0), (1,0), and
        // (2,0,0) or (1,1,0): probabilities 1/2, 1/8, 1/16 + 1/32... enumerated
        // directly below.
        let law = OffspringLaw::geometric_half();
        let p = |k: usize| law.pmf(k);
        let exact = [
            p(0),
            p(1) * p(0),
            p(2) * p(0) * p(0) + p(1) * p(1) * p(0),
        ];
        assert!((exact[0] - 0.5).abs() < 1e-15);
        assert!((exact[1] - 0.125).abs() < 1e-15);
        assert!((exact[2] - 0.0625).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let n = 400_000;
        let mut hist = [0u32; 3];
        for _ in 0..n {
            if let Ok(t) = sample_gw_tree(&law, &mut rng, 3) {
                hist[t.size() - 1] += 1;
            }
        }
        for s in 0..3 {
            let f = hist[s] as f64 / n as f64;
            assert!((f - exact[s]).abs() < 3.0 * se(exact[s], n as f64));
        }
    }

    #[test]
    fn continuous_tree_single_vertex() {
        let t = ContinuousTree::new(DiscreteTree::leaf(), vec![0.7]).unwrap();
        assert_eq!(t.birth(0), 0.0);
        assert_eq!(t.death(0), 0.7);
    }

    #[test]
    fn continuous_tree_rejects_ties_and_bad_lifetimes() {
        let shape = DiscreteTree::star(2);
        assert_eq!(
            ContinuousTree::new(shape.clone(), vec![1.0, 1.0, 1.0]),
            Err(TreeError::TiedEvents(2.0))
        );
        assert_eq!(
            ContinuousTree::new(shape, vec![1.0, 0.0, 1.0]),
            Err(TreeError::BadLifetime(1))
        );
    }

    #[test]
    fn sampled_continuous_trees_have_distinct_deaths() {
        let law = OffspringLaw::geometric_half();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..500 {
            if let Ok(t) = sample_continuous_gw_tree(&law, 2.0, &mut rng, 5000) {
                let order = t.by_death();
                assert!(order.windows(2).all(|w| t.death(w[0]) < t.death(w[1])));
                for v in 1..t.size() {
                    let p = t.shape().parent(v).unwrap();
                    assert_eq!(t.birth(v), t.death(p));
                    assert!(t.death(v) > t.birth(v));
                }
            }
        }
    }

    #[test]
    fn subtree_is_contiguous_block() {
        let t = DiscreteTree::from_preorder_counts(vec![2, 2, 0, 1, 0, 0]).unwrap();
        assert_eq!(t.subtree_size(1), 4);
        assert_eq!(t.subtree(1).preorder_counts(), &[2, 0, 1, 0]);
        assert_eq!(t.subtree(5).size(), 1);
    }
}
