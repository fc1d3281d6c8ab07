//! Migrants, trees of isles, and per-island (population, colonies) pairs.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::exploration::ExplorationWalk;
use crate::trees::{Address, ContinuousTree, DiscreteTree};

/// Migration model: fossil resources (the first `r` individuals in
/// breadth-first order stay) or regrowing resources (at most `r` alive at once).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Fossil,
    Regrow,
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Model::Fossil => "fossil",
            Model::Regrow => "regrow",
        })
    }
}

impl FromStr for Model {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fossil" => Ok(Model::Fossil),
            "regrow" => Ok(Model::Regrow),
            other => Err(format!("unknown model `{other}` (expected fossil or regrow)")),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PopCol {
    pub population: u64,
    pub colonies: u64,
}

impl PopCol {
    pub fn new(population: u64, colonies: u64) -> Self {
        PopCol { population, colonies }
    }
}

/// Migrants under the fossil model: vertices with breadth-first label above
/// `r` whose parent has label at most `r`, in label order.
pub fn migrants_fossil(tree: &DiscreteTree, r: usize) -> Vec<Address> {
    fossil_migrant_vertices(tree, 0, r)
        .into_iter()
        .map(|v| tree.address(v))
        .collect()
}

/// Breadth-first from `root`: after popping `r` vertices, the queue holds
/// exactly the migrants, in label order.
fn fossil_migrant_vertices(tree: &DiscreteTree, root: usize, r: usize) -> Vec<usize> {
    assert!(r >= 1);
    let mut queue = VecDeque::from([root]);
    let mut popped = 0;
    while popped < r {
        let Some(v) = queue.pop_front() else { return Vec::new() };
        popped += 1;
        queue.extend(tree.children(v).iter().map(|&c| c as usize));
    }
    queue.into()
}

/// Migrants under the regrowing model. Repeatedly: find the first death at
/// which the alive count on the island would exceed `r`, send the surplus
/// rightmost newborns away, remove their subtrees, and start over.
pub fn migrants_regrow(ctree: &ContinuousTree, r: usize) -> Vec<Address> {
    regrow_migrant_vertices(ctree, r)
        .into_iter()
        .map(|v| ctree.shape().address(v))
        .collect()
}

fn regrow_migrant_vertices(ctree: &ContinuousTree, r: usize) -> Vec<usize> {
    assert!(r >= 1);
    let shape = ctree.shape();
    let n = shape.size();
    let order = ctree.by_death();
    let mut removed = vec![false; n];
    let mut marked = Vec::new();
    loop {
        let mut alive = 1usize;
        let mut overflow = None;
        for &v in &order {
            if removed[v] {
                continue;
            }
            let kids = shape.children(v).iter().filter(|&&c| !removed[c as usize]).count();
            alive = alive - 1 + kids;
            if alive > r {
                overflow = Some((v, alive - r));
                break;
            }
        }
        let Some((v, surplus)) = overflow else { return marked };
        let kids: Vec<usize> = shape
            .children(v)
            .iter()
            .map(|&c| c as usize)
            .filter(|&c| !removed[c])
            .collect();
        for &c in &kids[kids.len() - surplus..] {
            marked.push(c);
            let size = shape.subtree_size(c);
            removed[c..c + size].iter_mut().for_each(|x| *x = true);
        }
    }
}

/// Number of vertices left once the subtrees of `migrants` are removed.
fn pruned_size(tree: &DiscreteTree, root: usize, migrants: &[usize]) -> usize {
    tree.subtree_size(root) - migrants.iter().map(|&m| tree.subtree_size(m)).sum::<usize>()
}

/// Exact oracle: prune at the migrants and count.
pub fn pop_col_direct_fossil(tree: &DiscreteTree, r: usize) -> PopCol {
    let m = fossil_migrant_vertices(tree, 0, r);
    PopCol::new(pruned_size(tree, 0, &m) as u64, m.len() as u64)
}

pub fn pop_col_direct_regrow(ctree: &ContinuousTree, r: usize) -> PopCol {
    let m = regrow_migrant_vertices(ctree, r);
    PopCol::new(pruned_size(ctree.shape(), 0, &m) as u64, m.len() as u64)
}

/// Walk formula for the fossil model: `P = min(ς∞, r)`, `C = 1 + S_P`.
pub fn pop_col_fossil_walk(walk: &ExplorationWalk, r: usize) -> PopCol {
    assert!(r >= 1);
    let p = walk.hitting_time().min(r);
    PopCol::new(p as u64, (1 + walk.at(p)) as u64)
}

/// Walk formula for the regrowing model: time spent in the stretches started
/// at the returns to `r - 1`, and the overshoots above `r - 1`.
pub fn pop_col_regrow_walk(walk: &ExplorationWalk, r: usize) -> PopCol {
    assert!(r >= 1);
    let level = r as i64 - 1;
    let s = walk.steps();
    let end = walk.hitting_time();
    let mut pop = 0u64;
    let mut col = 0u64;
    let mut sigma = 0usize;
    loop {
        let mut n = sigma + 1;
        while n < end && s[n] <= level {
            n += 1;
        }
        pop += (n - sigma) as u64;
        if n >= end {
            return PopCol::new(pop, col);
        }
        col += (s[n] - level) as u64;
        n += 1;
        while n < end && s[n] != level {
            n += 1;
        }
        if n >= end {
            return PopCol::new(pop, col);
        }
        sigma = n;
    }
}

/// Multitype tree of islands: address → population, colonies indexed in
/// migrant order.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IslesTree {
    nodes: BTreeMap<Address, u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IslesNode {
    pub address: Address,
    pub population: u64,
}

impl IslesTree {
    pub fn from_nodes(nodes: BTreeMap<Address, u64>) -> Self {
        debug_assert!(nodes.values().all(|&p| p >= 1));
        IslesTree { nodes }
    }

    pub fn nodes(&self) -> &BTreeMap<Address, u64> {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn population(&self, a: &Address) -> Option<u64> {
        self.nodes.get(a).copied()
    }

    pub fn root_population(&self) -> u64 {
        self.nodes[&Address::root()]
    }

    pub fn colony_count(&self, a: &Address) -> usize {
        (1..)
            .take_while(|&j| self.nodes.contains_key(&a.child(j)))
            .count()
    }

    pub fn total_population(&self) -> u64 {
        self.nodes.values().sum()
    }

    /// Nodes in depth-first order.
    pub fn to_nodes(&self) -> Vec<IslesNode> {
        self.nodes
            .iter()
            .map(|(a, &p)| IslesNode {
                address: a.clone(),
                population: p,
            })
            .collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&self.to_nodes()).expect("isles tree serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        let nodes: Vec<IslesNode> = serde_json::from_str(s)?;
        Ok(IslesTree {
            nodes: nodes.into_iter().map(|n| (n.address, n.population)).collect(),
        })
    }
}

/// Tree of isles under the fossil model.
pub fn build_tree_of_isles_fossil(tree: &DiscreteTree, r: usize) -> IslesTree {
    let mut nodes = BTreeMap::new();
    let mut work = vec![(Address::root(), 0usize)];
    while let Some((addr, v)) = work.pop() {
        let m = fossil_migrant_vertices(tree, v, r);
        nodes.insert(addr.clone(), pruned_size(tree, v, &m) as u64);
        for (j, &c) in m.iter().enumerate() {
            work.push((addr.child(j as u32 + 1), c));
        }
    }
    IslesTree { nodes }
}

/// Tree of isles under the regrowing model.
pub fn build_tree_of_isles_regrow(ctree: &ContinuousTree, r: usize) -> IslesTree {
    let mut nodes = BTreeMap::new();
    let mut work = vec![(Address::root(), ctree.clone())];
    while let Some((addr, t)) = work.pop() {
        let m = regrow_migrant_vertices(&t, r);
        nodes.insert(addr.clone(), pruned_size(t.shape(), 0, &m) as u64);
        for (j, &c) in m.iter().enumerate() {
            work.push((addr.child(j as u32 + 1), t.subtree(c)));
        }
    }
    IslesTree { nodes }
}
