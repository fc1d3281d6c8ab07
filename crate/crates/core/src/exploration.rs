//! Labelings of trees by Markovian rules and the associated exploration walks.
//!
//! A labeling is produced by the line-evolution loop: start from the line
//! `{root}`, let the rule pick a member of the current line, label it, and
//! replace it by its children. The rule only ever sees the tree pruned at the
//! current line (see [`PrunedView`]), so it cannot peek below the line.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, VecDeque};
use std::io::{self, Write};

use thiserror::Error;

use crate::trees::{Address, ContinuousTree, DiscreteTree};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExplorationError {
    #[error("rule returned vertex {0}, which is not on the current line")]
    RuleViolation(usize),
    #[error("labeling is not a bijection onto the tree's vertices")]
    NotBijection,
    #[error("labeling does not start at the root")]
    RootNotFirst,
    #[error("vertex {0} does not belong to the tree")]
    UnknownVertex(usize),
    #[error("line is not an antichain: {0} is an ancestor of {1}")]
    NotAntichain(usize, usize),
    #[error("walk violates the exploration-walk invariants at index {0}")]
    BadWalk(usize),
}

/// An antichain of vertices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Line {
    members: BTreeSet<usize>,
}

impl Line {
    pub fn new(tree: &DiscreteTree, members: impl IntoIterator<Item = usize>) -> Result<Self, ExplorationError> {
        let members: BTreeSet<usize> = members.into_iter().collect();
        for &v in &members {
            if v >= tree.size() {
                return Err(ExplorationError::UnknownVertex(v));
            }
        }
        for &a in &members {
            for &b in &members {
                if a != b && tree.is_ancestor(a, b) {
                    return Err(ExplorationError::NotAntichain(a, b));
                }
            }
        }
        Ok(Line { members })
    }

    pub fn from_addresses(tree: &DiscreteTree, addrs: &[Address]) -> Result<Self, ExplorationError> {
        let mut vs = Vec::with_capacity(addrs.len());
        for a in addrs {
            vs.push(tree.vertex_of(a).ok_or(ExplorationError::UnknownVertex(usize::MAX))?);
        }
        Self::new(tree, vs)
    }

    pub fn members(&self) -> &BTreeSet<usize> {
        &self.members
    }

    pub fn contains(&self, v: usize) -> bool {
        self.members.contains(&v)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// `order[i]` is the vertex carrying label `i + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labeling {
    order: Vec<usize>,
}

impl Labeling {
    pub fn new(order: Vec<usize>, tree_size: usize) -> Result<Self, ExplorationError> {
        if order.len() != tree_size {
            return Err(ExplorationError::NotBijection);
        }
        let mut seen = vec![false; tree_size];
        for &v in &order {
            if v >= tree_size || seen[v] {
                return Err(ExplorationError::NotBijection);
            }
            seen[v] = true;
        }
        if order.first() != Some(&0) {
            return Err(ExplorationError::RootNotFirst);
        }
        Ok(Labeling { order })
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn addresses(&self, tree: &DiscreteTree) -> Vec<Address> {
        self.order.iter().map(|&v| tree.address(v)).collect()
    }

    /// `labels()[v]` is the 1-based label of vertex `v`.
    pub fn labels(&self) -> Vec<usize> {
        let mut lab = vec![0; self.order.len()];
        for (i, &v) in self.order.iter().enumerate() {
            lab[v] = i + 1;
        }
        lab
    }
}

/// Integer walk `S_0 = 0, S_i = (k_1 - 1) + ... + (k_i - 1)`, stored up to the
/// tree size `s`, where it first equals -1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExplorationWalk {
    steps: Vec<i64>,
}

impl ExplorationWalk {
    pub fn new(steps: Vec<i64>) -> Result<Self, ExplorationError> {
        if steps.len() < 2 || steps[0] != 0 {
            return Err(ExplorationError::BadWalk(0));
        }
        let s = steps.len() - 1;
        for i in 1..=s {
            if steps[i] - steps[i - 1] < -1 {
                return Err(ExplorationError::BadWalk(i));
            }
            if i < s && steps[i] < 0 {
                return Err(ExplorationError::BadWalk(i));
            }
        }
        if steps[s] != -1 {
            return Err(ExplorationError::BadWalk(s));
        }
        Ok(ExplorationWalk { steps })
    }

    pub fn steps(&self) -> &[i64] {
        &self.steps
    }

    /// `S_i`; equals -1 for every `i` past the end.
    pub fn at(&self, i: usize) -> i64 {
        self.steps.get(i).copied().unwrap_or(-1)
    }

    /// First `n >= 1` with `S_n = -1`.
    pub fn hitting_time(&self) -> usize {
        self.steps
            .iter()
            .skip(1)
            .position(|&x| x == -1)
            .map(|p| p + 1)
            .expect("walk ends at -1")
    }

    pub fn increments(&self) -> impl Iterator<Item = i64> + '_ {
        self.steps.windows(2).map(|w| w[1] - w[0])
    }

    /// Writes `i,S_i` rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "i,S_i")?;
        for (i, s) in self.steps.iter().enumerate() {
            writeln!(w, "{i},{s}")?;
        }
        Ok(())
    }
}

pub fn exploration_walk(tree: &DiscreteTree, labeling: &Labeling) -> ExplorationWalk {
    assert_eq!(labeling.order().len(), tree.size(), "labeling/tree size mismatch");
    let mut steps = Vec::with_capacity(tree.size() + 1);
    let mut s = 0i64;
    steps.push(s);
    for &v in labeling.order() {
        s += tree.child_count(v) as i64 - 1;
        steps.push(s);
    }
    ExplorationWalk::new(steps).expect("a labeling of a finite tree yields a valid walk")
}

/// Either kind of tree, as seen by labeling rules.
#[derive(Clone, Copy, Debug)]
pub enum TreeRef<'a> {
    Discrete(&'a DiscreteTree),
    Continuous(&'a ContinuousTree),
}

impl<'a> TreeRef<'a> {
    pub fn shape(&self) -> &'a DiscreteTree {
        match self {
            TreeRef::Discrete(t) => t,
            TreeRef::Continuous(t) => t.shape(),
        }
    }
}

impl<'a> From<&'a DiscreteTree> for TreeRef<'a> {
    fn from(t: &'a DiscreteTree) -> Self {
        TreeRef::Discrete(t)
    }
}

impl<'a> From<&'a ContinuousTree> for TreeRef<'a> {
    fn from(t: &'a ContinuousTree) -> Self {
        TreeRef::Continuous(t)
    }
}

/// The tree pruned at the current line: labeled vertices with their
/// children, plus the line members as leaves. Life-lengths of line members
/// are visible; their offspring are not.
pub struct PrunedView<'a> {
    tree: TreeRef<'a>,
    line: &'a BTreeSet<usize>,
    labeled: &'a [bool],
}

impl<'a> PrunedView<'a> {
    pub fn line(&self) -> &BTreeSet<usize> {
        self.line
    }

    pub fn contains(&self, v: usize) -> bool {
        self.labeled[v] || self.line.contains(&v)
    }

    pub fn address(&self, v: usize) -> Address {
        debug_assert!(self.contains(v));
        self.tree.shape().address(v)
    }

    pub fn generation(&self, v: usize) -> usize {
        self.tree.shape().generation(v)
    }

    /// Children in the pruned tree (none for line members).
    pub fn children(&self, v: usize) -> &[u32] {
        if self.labeled[v] {
            self.tree.shape().children(v)
        } else {
            &[]
        }
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.tree.shape().parent(v)
    }

    pub fn death(&self, v: usize) -> Option<f64> {
        match self.tree {
            TreeRef::Continuous(t) if self.contains(v) => Some(t.death(v)),
            _ => None,
        }
    }

    /// Materializes the pruned tree together with the map from its vertex
    /// indices to the original ones.
    pub fn to_discrete(&self) -> (DiscreteTree, Vec<usize>) {
        let keep: Vec<bool> = (0..self.labeled.len()).map(|v| self.contains(v)).collect();
        self.tree.shape().restrict_with_map(&keep)
    }

    pub fn to_continuous(&self) -> Option<(ContinuousTree, Vec<usize>)> {
        match self.tree {
            TreeRef::Continuous(t) => {
                let keep: Vec<bool> = (0..self.labeled.len()).map(|v| self.contains(v)).collect();
                let map: Vec<usize> = (0..keep.len()).filter(|&v| keep[v]).collect();
                Some((t.restrict(&keep), map))
            }
            TreeRef::Discrete(_) => None,
        }
    }
}

/// Runs the line-evolution loop with an arbitrary rule.
pub fn run_markovian_labeling<'a, T, R>(tree: T, mut rule: R) -> Result<Labeling, ExplorationError>
where
    T: Into<TreeRef<'a>>,
    R: FnMut(&PrunedView<'_>) -> usize,
{
    let tree = tree.into();
    let shape = tree.shape();
    let n = shape.size();
    let mut line = BTreeSet::from([0usize]);
    let mut labeled = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while !line.is_empty() {
        let v = {
            let view = PrunedView {
                tree,
                line: &line,
                labeled: &labeled,
            };
            rule(&view)
        };
        if !line.remove(&v) {
            return Err(ExplorationError::RuleViolation(v));
        }
        labeled[v] = true;
        order.push(v);
        line.extend(shape.children(v).iter().map(|&c| c as usize));
    }
    Labeling::new(order, n)
}

/// Ready-made rules for [`run_markovian_labeling`].
pub mod rules {
    use super::PrunedView;
    use crate::isles::migrants_regrow;

    /// Leftmost vertex at the lowest generation: breadth-first order.
    pub fn leftmost_lowest(view: &PrunedView<'_>) -> usize {
        *view
            .line()
            .iter()
            .min_by_key(|&&v| (view.generation(v), view.address(v)))
            .expect("line is non-empty")
    }

    /// Lexicographically smallest address: depth-first order.
    pub fn lexicographic_smallest(view: &PrunedView<'_>) -> usize {
        *view
            .line()
            .iter()
            .min_by_key(|&&v| view.address(v))
            .expect("line is non-empty")
    }

    /// Individual on the line who dies first; leftmost address on ties.
    pub fn death_first(view: &PrunedView<'_>) -> usize {
        *view
            .line()
            .iter()
            .min_by(|&&a, &&b| {
                let da = view.death(a).expect("death-first needs life-lengths");
                let db = view.death(b).expect("death-first needs life-lengths");
                da.total_cmp(&db).then_with(|| view.address(a).cmp(&view.address(b)))
            })
            .expect("line is non-empty")
    }

    /// Modified death-first rule for regrowing resources: descendants of
    /// migrants first, then migrants, then everybody else, each class by
    /// death time. Migrants are recomputed on the pruned tree at every call.
    pub fn regrow(r: usize) -> impl FnMut(&PrunedView<'_>) -> usize {
        move |view: &PrunedView<'_>| {
            let (pruned, map) = view
                .to_continuous()
                .expect("regrow rule needs a continuous tree");
            let n = map.len();
            let mut migrant = vec![false; n];
            for a in migrants_regrow(&pruned, r) {
                let v = pruned.shape().vertex_of(&a).expect("migrant in pruned tree");
                migrant[v] = true;
            }
            // class: 0 = below a migrant, 1 = migrant, 2 = other
            let mut class = vec![2u8; n];
            for v in 0..n {
                if migrant[v] {
                    class[v] = 1;
                }
                if let Some(p) = pruned.shape().parent(v) {
                    if migrant[p] || class[p] == 0 {
                        class[v] = 0;
                    }
                }
            }
            let mut back = vec![usize::MAX; view.labeled.len()];
            for (i, &v) in map.iter().enumerate() {
                back[v] = i;
            }
            *view
                .line()
                .iter()
                .min_by(|&&a, &&b| {
                    let (ca, cb) = (class[back[a]], class[back[b]]);
                    ca.cmp(&cb)
                        .then_with(|| view.death(a).unwrap().total_cmp(&view.death(b).unwrap()))
                        .then_with(|| view.address(a).cmp(&view.address(b)))
                })
                .expect("line is non-empty")
        }
    }
}

pub fn label_bfs(tree: &DiscreteTree) -> Labeling {
    let mut order = Vec::with_capacity(tree.size());
    let mut queue = VecDeque::from([0usize]);
    while let Some(v) = queue.pop_front() {
        order.push(v);
        queue.extend(tree.children(v).iter().map(|&c| c as usize));
    }
    Labeling { order }
}

/// Depth-first (lexicographic) labeling: the identity on preorder indices.
pub fn label_dfs(tree: &DiscreteTree) -> Labeling {
    Labeling {
        order: (0..tree.size()).collect(),
    }
}

/// The line is exactly the set of living individuals, so labeling by the
/// first death on the line amounts to sorting all individuals by death time.
pub fn label_death_first(ctree: &ContinuousTree) -> Labeling {
    Labeling {
        order: ctree.by_death(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct ByDeath(f64, usize);

impl Eq for ByDeath {}

impl PartialOrd for ByDeath {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ByDeath {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// Modified death-first labeling for regrowing resources with `r` resources.
///
/// Migrant status is computed once by a single event sweep; a line member's
/// status in any pruned tree agrees with it because every labeled island
/// individual dies before every island individual still on the line.
pub fn label_regrow(ctree: &ContinuousTree, r: usize) -> Labeling {
    assert!(r >= 1);
    let shape = ctree.shape();
    let n = shape.size();
    let migrant = regrow_migrant_flags(ctree, r);
    let mut below_migrant = vec![false; n];
    for v in 1..n {
        let p = shape.parent(v).unwrap();
        below_migrant[v] = migrant[p] || below_migrant[p];
    }
    let mut heaps: [BinaryHeap<Reverse<ByDeath>>; 3] = Default::default();
    let class = |v: usize| {
        if below_migrant[v] {
            0
        } else if migrant[v] {
            1
        } else {
            2
        }
    };
    heaps[class(0)].push(Reverse(ByDeath(ctree.death(0), 0)));
    let mut order = Vec::with_capacity(n);
    loop {
        let next = heaps.iter_mut().find_map(|h| h.pop());
        let Some(Reverse(ByDeath(_, v))) = next else { break };
        order.push(v);
        for &c in shape.children(v) {
            let c = c as usize;
            heaps[class(c)].push(Reverse(ByDeath(ctree.death(c), c)));
        }
    }
    Labeling { order }
}

/// Single event sweep: walk through deaths in time order keeping the number of
/// living island individuals; when a death with `k` births pushes the count
/// above `r`, the surplus rightmost newborns migrate and their subtrees leave
/// the island.
pub(crate) fn regrow_migrant_flags(ctree: &ContinuousTree, r: usize) -> Vec<bool> {
    let shape = ctree.shape();
    let n = shape.size();
    let mut migrant = vec![false; n];
    let mut off_island = vec![false; n];
    let mut alive: usize = 1;
    for v in ctree.by_death() {
        if off_island[v] {
            for &c in shape.children(v) {
                off_island[c as usize] = true;
            }
            continue;
        }
        let kids = shape.children(v);
        alive = alive - 1 + kids.len();
        if alive > r {
            let surplus = alive - r;
            for &c in &kids[kids.len() - surplus..] {
                migrant[c as usize] = true;
                off_island[c as usize] = true;
            }
            alive = r;
        }
    }
    migrant
}

/// Removes every strict descendant of the line's members.
pub fn prune_at_line(tree: &DiscreteTree, line: &Line) -> DiscreteTree {
    tree.restrict(&keep_mask(tree, line))
}

/// Continuous version; line members keep their life-lengths.
pub fn prune_continuous_at_line(ctree: &ContinuousTree, line: &Line) -> ContinuousTree {
    ctree.restrict(&keep_mask(ctree.shape(), line))
}

fn keep_mask(tree: &DiscreteTree, line: &Line) -> Vec<bool> {
    let n = tree.size();
    let mut keep = vec![true; n];
    let mut cut = vec![false; n];
    for v in 1..n {
        let p = tree.parent(v).unwrap();
        if cut[p] || line.contains(p) {
            cut[v] = true;
            keep[v] = false;
        }
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::{sample_continuous_gw_tree, sample_gw_tree, OffspringLaw};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn addr(p: &[u32]) -> Address {
        Address::new(p.to_vec())
    }

    #[test]
    fn bfs_on_star() {
        let t = DiscreteTree::star(3);
        let lab = label_bfs(&t);
        assert_eq!(
            lab.addresses(&t),
            vec![Address::root(), addr(&[1]), addr(&[2]), addr(&[3])]
        );
        assert_eq!(exploration_walk(&t, &lab).steps(), &[0, 2, 1, 0, -1]);
    }

    #[test]
    fn bfs_goes_by_generation() {
        let t = DiscreteTree::from_preorder_counts(vec![2, 1, 0, 0]).unwrap();
        let lab = label_bfs(&t);
        assert_eq!(
            lab.addresses(&t),
            vec![Address::root(), addr(&[1]), addr(&[2]), addr(&[1, 1])]
        );
    }

    #[test]
    fn walks_of_leaf_and_chain() {
        let leaf = DiscreteTree::leaf();
        assert_eq!(exploration_walk(&leaf, &label_bfs(&leaf)).steps(), &[0, -1]);
        let chain = DiscreteTree::chain(3);
        assert_eq!(exploration_walk(&chain, &label_bfs(&chain)).steps(), &[0, 0, 0, -1]);
    }

    #[test]
    fn walk_validation() {
        assert!(ExplorationWalk::new(vec![0, -1]).is_ok());
        assert_eq!(ExplorationWalk::new(vec![0, 0]), Err(ExplorationError::BadWalk(1)));
        assert_eq!(ExplorationWalk::new(vec![0, 2, 0, -1]), Err(ExplorationError::BadWalk(2)));
        assert_eq!(ExplorationWalk::new(vec![0, -1, 0, -1]), Err(ExplorationError::BadWalk(1)));
    }

    #[test]
    fn walk_csv_dump() {
        let w = ExplorationWalk::new(vec![0, 1, 0, -1]).unwrap();
        let mut out = Vec::new();
        w.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "i,S_i\n0,0\n1,1\n2,0\n3,-1\n");
    }

    #[test]
    fn death_first_small_example() {
        // root dies at 1 with children A (dies 3) and B (dies 2)
        let t = ContinuousTree::new(DiscreteTree::star(2), vec![1.0, 2.0, 1.0]).unwrap();
        let lab = label_death_first(&t);
        assert_eq!(lab.order(), &[0, 2, 1]);
        let single = ContinuousTree::new(DiscreteTree::leaf(), vec![0.3]).unwrap();
        assert_eq!(label_death_first(&single).order(), &[0]);
    }

    /// Worked tree: root dies at 1 with children A, B; A dies at 2 with two
    /// childless children dying at 2.5 and 2.7; B dies at 3.
    pub(crate) fn worked_tree() -> ContinuousTree {
        // preorder: root, A, A1, A2, B
        let shape = DiscreteTree::from_preorder_counts(vec![2, 2, 0, 0, 0]).unwrap();
        ContinuousTree::new(shape, vec![1.0, 1.0, 0.5, 0.7, 2.0]).unwrap()
    }

    #[test]
    fn regrow_labeling_of_worked_tree() {
        let t = worked_tree();
        let lab = label_regrow(&t, 2);
        // root, A, A's right child, A's left child, B
        assert_eq!(lab.order(), &[0, 1, 3, 2, 4]);
        let walk = exploration_walk(t.shape(), &lab);
        assert_eq!(walk.steps(), &[0, 1, 2, 1, 0, -1]);
        let literal = run_markovian_labeling(&t, rules::regrow(2)).unwrap();
        assert_eq!(literal, lab);
    }

    #[test]
    fn regrow_without_migration_is_death_first() {
        let t = worked_tree();
        assert_eq!(label_regrow(&t, 3), label_death_first(&t));
    }

    #[test]
    fn generic_rules_reproduce_fast_labelings() {
        let law = OffspringLaw::geometric_half();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let Ok(t) = sample_gw_tree(&law, &mut rng, 200) else { continue };
            assert_eq!(run_markovian_labeling(&t, rules::leftmost_lowest).unwrap(), label_bfs(&t));
            assert_eq!(
                run_markovian_labeling(&t, rules::lexicographic_smallest).unwrap(),
                label_dfs(&t)
            );
            checked += 1;
        }
    }

    #[test]
    fn literal_regrow_rule_matches_fast_labeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for law in [OffspringLaw::geometric_half(), OffspringLaw::binary_half()] {
            let mut checked = 0;
            while checked < 300 {
                let Ok(t) = sample_continuous_gw_tree(&law, 1.0, &mut rng, 60) else { continue };
                for r in [1, 2, 3, 5] {
                    let fast = label_regrow(&t, r);
                    let slow = run_markovian_labeling(&t, rules::regrow(r)).unwrap();
                    assert_eq!(fast, slow, "r={r}");
                }
                assert_eq!(
                    run_markovian_labeling(&t, rules::death_first).unwrap(),
                    label_death_first(&t)
                );
                checked += 1;
            }
        }
    }

    #[test]
    fn rule_violation_is_reported() {
        let t = DiscreteTree::star(2);
        // Vertex 2 is not on the initial line {root}.
        let err = run_markovian_labeling(&t, |_view: &PrunedView<'_>| 2).unwrap_err();
        assert_eq!(err, ExplorationError::RuleViolation(2));
    }

    #[test]
    fn hitting_time_equals_size_for_all_rules() {
        let law = OffspringLaw::poisson_one();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..2000 {
            let Ok(t) = sample_continuous_gw_tree(&law, 1.0, &mut rng, 2000) else { continue };
            let s = t.size();
            for lab in [label_bfs(t.shape()), label_dfs(t.shape()), label_death_first(&t), label_regrow(&t, 3)] {
                assert_eq!(exploration_walk(t.shape(), &lab).hitting_time(), s);
            }
        }
    }

    #[test]
    fn death_first_head_count() {
        let law = OffspringLaw::geometric_half();
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..2000 {
            let Ok(t) = sample_continuous_gw_tree(&law, 1.0, &mut rng, 2000) else { continue };
            let walk = exploration_walk(t.shape(), &label_death_first(&t));
            let order = t.by_death();
            // Direct sweep: count individuals alive just after the i-th death.
            for i in 1..walk.steps().len() - 1 {
                let time = t.death(order[i - 1]);
                let alive = (0..t.size())
                    .filter(|&v| t.birth(v) <= time && t.death(v) > time)
                    .count() as i64;
                assert_eq!(1 + walk.at(i), alive);
            }
        }
    }

    #[test]
    fn pruning() {
        let t = DiscreteTree::from_preorder_counts(vec![2, 2, 0, 0, 2, 0, 0]).unwrap();
        let root_line = Line::new(&t, [0]).unwrap();
        assert_eq!(prune_at_line(&t, &root_line), DiscreteTree::leaf());
        assert_eq!(prune_at_line(&t, &Line::default()), t);
        let leaves = Line::from_addresses(
            &t,
            &[addr(&[1, 1]), addr(&[1, 2]), addr(&[2, 1]), addr(&[2, 2])],
        )
        .unwrap();
        assert_eq!(prune_at_line(&t, &leaves), t);
        let mid = Line::new(&t, [1]).unwrap();
        assert_eq!(prune_at_line(&t, &mid).preorder_counts(), &[2, 0, 2, 0, 0]);
        assert_eq!(Line::new(&t, [1, 2]), Err(ExplorationError::NotAntichain(1, 2)));
    }

    #[test]
    fn continuous_pruning_keeps_lifetimes() {
        let t = worked_tree();
        let line = Line::new(t.shape(), [1, 4]).unwrap();
        let p = prune_continuous_at_line(&t, &line);
        assert_eq!(p.size(), 3);
        assert_eq!(p.lifetimes(), &[1.0, 1.0, 2.0]);
    }
}
