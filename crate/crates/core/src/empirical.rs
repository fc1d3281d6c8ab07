//! Monte Carlo simulation of the N-island system.
//!
//! Islands are simulated from their exploration walk alone: the walk is run
//! only as far as the population and colony count require, and colonies are
//! queued as fresh islands. No genealogical tree is ever built.

use std::collections::{BTreeMap, VecDeque};
use std::io::{self, Write};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::isles::{Model, PopCol};
use crate::trees::{LawKind, OffspringLaw};
use crate::TestFunction;

pub const DEFAULT_STEP_CAP: u64 = 100_000_000;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("step budget of {budget} walk steps exhausted")]
pub struct StepBudgetExceeded {
    pub budget: u64,
}

/// Independent stream for replicate `replicate` of a run seeded by `master_seed`.
pub fn replicate_rng(master_seed: u64, replicate: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(replicate);
    rng
}

#[derive(Clone, Debug)]
enum StepKind {
    Geometric,
    Binary,
    Table(Vec<f64>),
}

/// Sum and maximum prefix sum of the eight ±1 steps encoded by each byte,
/// low bit first.
const BYTE_STEPS: [(i8, i8); 256] = {
    let mut t = [(0i8, 0i8); 256];
    let mut b = 0;
    while b < 256 {
        let (mut s, mut top) = (0i8, i8::MIN);
        let mut k = 0;
        while k < 8 {
            s += if (b >> k) & 1 == 1 { 1 } else { -1 };
            if s > top {
                top = s;
            }
            k += 1;
        }
        t[b] = (s, top);
        b += 1;
    }
    t
};

/// Sum and maximum prefix sum of the 64 ±1 steps of a word.
fn word_sum_max(w: u64) -> (i64, i64) {
    let (mut s, mut top) = (0i64, i64::MIN);
    for byte in w.to_le_bytes() {
        let (bs, bt) = BYTE_STEPS[byte as usize];
        top = top.max(s + bt as i64);
        s += bs as i64;
    }
    (s, top)
}

/// Draws exploration-walk increments and runs single islands.
///
/// Geometric-half counts are runs of zero bits, so whole random words can be
/// consumed at once; binary-half increments are signs of bits, so stretches of
/// up to 64 steps are one popcount.
#[derive(Clone, Debug)]
pub struct IslandWalker {
    kind: StepKind,
    word: u64,
    left: u32,
    pending: u32,
    steps: u64,
    budget: u64,
}

impl IslandWalker {
    pub fn new(law: &OffspringLaw, budget: u64) -> Self {
        let kind = match law.kind() {
            LawKind::GeometricHalf => StepKind::Geometric,
            LawKind::BinaryHalf => StepKind::Binary,
            LawKind::PoissonOne | LawKind::CustomPmf => StepKind::Table(law.cdf().to_vec()),
        };
        IslandWalker {
            kind,
            word: 0,
            left: 0,
            pending: 0,
            steps: 0,
            budget,
        }
    }

    /// Walk steps taken so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    /// Zeroes the step count and sets a new budget; buffered bits are kept.
    pub fn reset(&mut self, budget: u64) {
        self.steps = 0;
        self.budget = budget;
    }

    fn charge(&mut self, m: u64) -> Result<(), StepBudgetExceeded> {
        self.steps += m;
        if self.steps > self.budget {
            Err(StepBudgetExceeded { budget: self.budget })
        } else {
            Ok(())
        }
    }

    fn geometric_count<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> u32 {
        loop {
            if self.left == 0 {
                self.word = rng.next_u64();
                self.left = 64;
            }
            let tz = self.word.trailing_zeros();
            if tz < self.left {
                let k = self.pending + tz;
                self.pending = 0;
                self.word = (self.word >> tz) >> 1;
                self.left -= tz + 1;
                return k;
            }
            self.pending += self.left;
            self.left = 0;
            self.word = 0;
        }
    }

    /// Consumes every complete count in the buffered word if there are at
    /// most `max_steps` of them; returns (steps, sum of increments).
    fn geometric_batch<R: RngCore + ?Sized>(&mut self, max_steps: u64, rng: &mut R) -> Option<(u64, i64)> {
        if self.left == 0 {
            self.word = rng.next_u64();
            self.left = 64;
        }
        let p = self.word.count_ones() as u64;
        if p == 0 || p > max_steps {
            return None;
        }
        let t = 64 - self.word.leading_zeros();
        let zeros = self.pending as i64 + (t as i64 - p as i64);
        self.pending = self.left - t;
        self.word = 0;
        self.left = 0;
        Some((p, zeros - p as i64))
    }

    /// Sum of `b <= 64` binary-half increments.
    fn binary_batch<R: RngCore + ?Sized>(&mut self, b: u32, rng: &mut R) -> i64 {
        debug_assert!((1..=64).contains(&b));
        let mask = if b == 64 { u64::MAX } else { (1u64 << b) - 1 };
        2 * (rng.next_u64() & mask).count_ones() as i64 - b as i64
    }

    /// One increment `k - 1` of the exploration walk.
    pub fn step<R: RngCore + ?Sized>(&mut self, rng: &mut R) -> i64 {
        match &self.kind {
            StepKind::Geometric => self.geometric_count(rng) as i64 - 1,
            StepKind::Binary => {
                if rng.next_u32() & 1 == 1 {
                    1
                } else {
                    -1
                }
            }
            StepKind::Table(cdf) => {
                let u = (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                k as i64 - 1
            }
        }
    }

    /// Runs the walk from `start` for at most `max_steps` steps or until it
    /// reaches -1; returns (steps taken, final position).
    pub fn run_until_absorbed<R: RngCore + ?Sized>(
        &mut self,
        start: i64,
        max_steps: u64,
        rng: &mut R,
    ) -> Result<(u64, i64), StepBudgetExceeded> {
        let mut s = start;
        let mut n = 0u64;
        while n < max_steps && s >= 0 {
            let safe = ((s + 1) as u64).min(max_steps - n);
            let (m, inc) = match self.kind {
                StepKind::Geometric => match self.geometric_batch(safe, rng) {
                    Some(x) => x,
                    None => (1, self.geometric_count(rng) as i64 - 1),
                },
                StepKind::Binary => {
                    let b = safe.min(64) as u32;
                    (b as u64, self.binary_batch(b, rng))
                }
                StepKind::Table(_) => (1, self.step(rng)),
            };
            n += m;
            s += inc;
            self.charge(m)?;
        }
        Ok((n, s))
    }

    /// Fossil island: `P = min(ς∞, r)`, `C = 1 + S_P`.
    pub fn fossil_island<R: RngCore + ?Sized>(&mut self, r: u64, rng: &mut R) -> Result<PopCol, StepBudgetExceeded> {
        assert!(r >= 1);
        let (n, s) = self.run_until_absorbed(0, r, rng)?;
        Ok(PopCol::new(n, (1 + s) as u64))
    }

    /// Regrowing-resources island. The walk is followed below level `r - 1`
    /// only: a jump above it founds `S - (r - 1)` colonies, and the walk
    /// surely returns to `r - 1` once those colonies' subtrees are explored,
    /// so it is put back there directly.
    pub fn regrow_island<R: RngCore + ?Sized>(&mut self, r: u64, rng: &mut R) -> Result<PopCol, StepBudgetExceeded> {
        assert!(r >= 1);
        let level = r as i64 - 1;
        let mut s = 0i64;
        let mut pop = 0u64;
        let mut col = 0u64;
        while s >= 0 {
            let (m, inc) = match self.kind {
                StepKind::Binary if s < level => {
                    let b = ((s + 1).min(level - s)).min(64) as u32;
                    (b as u64, self.binary_batch(b, rng))
                }
                _ => (1, self.step(rng)),
            };
            pop += m;
            s += inc;
            if s > level {
                col += (s - level) as u64;
                s = level;
            }
            self.charge(m)?;
        }
        Ok(PopCol::new(pop, col))
    }

    /// Whether the walk from 0 jumps above `level` before reaching -1, which
    /// for a regrowing island with `r = level + 1` is the event `C > 0`.
    pub fn exceeds_before_absorbed<R: RngCore + ?Sized>(&mut self, level: i64, rng: &mut R) -> Result<bool, StepBudgetExceeded> {
        let mut s = 0i64;
        while s >= 0 && s <= level {
            let (m, inc) = match self.kind {
                StepKind::Binary if s < level => {
                    let b = ((s + 1).min(level - s)).min(64) as u32;
                    (b as u64, self.binary_batch(b, rng))
                }
                _ => (1, self.step(rng)),
            };
            s += inc;
            self.charge(m)?;
        }
        Ok(s > level)
    }

    /// Regrowing island conditioned on `C > 0`.
    ///
    /// For binary-half steps this is exact without rejection. Up to the first
    /// jump above `r - 1` the conditioned walk is `2M - X` for a free simple
    /// walk `X` with running maximum `M` (the h-transform with `h(x) = x + 1`).
    /// Afterwards the collapsed walk is `r - 1 + X' - M'` for a fresh walk
    /// `X'`, its colonies are the final `M'`, and it ends when the drawdown
    /// `M' - X'` reaches `r`. Both phases consume whole words while far from
    /// their boundaries. Other laws fall back to rejection.
    pub fn regrow_island_fertile<R: RngCore + ?Sized>(&mut self, r: u64, rng: &mut R) -> Result<PopCol, StepBudgetExceeded> {
        assert!(r >= 1);
        if !matches!(self.kind, StepKind::Binary) {
            loop {
                let pc = self.regrow_island(r, rng)?;
                if pc.colonies > 0 {
                    return Ok(pc);
                }
            }
        }
        let r = r as i64;
        // up phase: Y = 2M - X until Y = r
        let (mut x, mut m, mut t) = (0i64, 0i64, 0u64);
        'up: loop {
            let w = rng.next_u64();
            if 2 * m - x + 64 < r {
                let (sum, top) = word_sum_max(w);
                m = m.max(x + top);
                x += sum;
                t += 64;
                self.charge(64)?;
                continue;
            }
            for k in 0..64 {
                x += if (w >> k) & 1 == 1 { 1 } else { -1 };
                m = m.max(x);
                t += 1;
                if 2 * m - x >= r {
                    self.charge(k + 1)?;
                    break 'up;
                }
            }
            self.charge(64)?;
        }
        let pop_up = t;
        // down phase: reflected at r - 1 until the drawdown reaches r
        let (mut x, mut m, mut t) = (0i64, 0i64, 0u64);
        'down: loop {
            let w = rng.next_u64();
            if m - x + 64 < r {
                let (sum, top) = word_sum_max(w);
                m = m.max(x + top);
                x += sum;
                t += 64;
                self.charge(64)?;
                continue;
            }
            for k in 0..64 {
                x += if (w >> k) & 1 == 1 { 1 } else { -1 };
                m = m.max(x);
                t += 1;
                if m - x >= r {
                    self.charge(k + 1)?;
                    break 'down;
                }
            }
            self.charge(64)?;
        }
        Ok(PopCol::new(pop_up + t, 1 + m as u64))
    }

    pub fn island<R: RngCore + ?Sized>(&mut self, model: Model, r: u64, rng: &mut R) -> Result<PopCol, StepBudgetExceeded> {
        match model {
            Model::Fossil => self.fossil_island(r, rng),
            Model::Regrow => self.regrow_island(r, rng),
        }
    }
}

/// Island record emitted by [`IslandStream`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IslandRecord {
    pub generation: u32,
    pub pop_col: PopCol,
}

/// Islands of a tree of isles (or a forest of them) in first-in first-out
/// order. Colonies beyond `max_generation` are counted but not simulated.
pub struct IslandStream<'a, R: RngCore> {
    walker: IslandWalker,
    rng: &'a mut R,
    model: Model,
    r: u64,
    queue: VecDeque<(u32, u64)>,
    max_generation: Option<u32>,
    failed: bool,
}

impl<'a, R: RngCore> IslandStream<'a, R> {
    pub fn new(law: &OffspringLaw, model: Model, r: u64, roots: u64, budget: u64, rng: &'a mut R) -> Self {
        let mut queue = VecDeque::new();
        if roots > 0 {
            queue.push_back((0, roots));
        }
        IslandStream {
            walker: IslandWalker::new(law, budget),
            rng,
            model,
            r,
            queue,
            max_generation: None,
            failed: false,
        }
    }

    pub fn with_max_generation(mut self, g: Option<u32>) -> Self {
        self.max_generation = g;
        self
    }

    pub fn steps(&self) -> u64 {
        self.walker.steps()
    }
}

impl<R: RngCore> Iterator for IslandStream<'_, R> {
    type Item = Result<IslandRecord, StepBudgetExceeded>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let front = self.queue.front_mut()?;
        let generation = front.0;
        front.1 -= 1;
        if front.1 == 0 {
            self.queue.pop_front();
        }
        match self.walker.island(self.model, self.r, self.rng) {
            Ok(pc) => {
                let expand = self.max_generation.is_none_or(|g| generation < g);
                if pc.colonies > 0 && expand {
                    match self.queue.back_mut() {
                        Some(back) if back.0 == generation + 1 => back.1 += pc.colonies,
                        _ => self.queue.push_back((generation + 1, pc.colonies)),
                    }
                }
                Some(Ok(IslandRecord {
                    generation,
                    pop_col: pc,
                }))
            }
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}

/// All islands of one tree of isles, fossil model.
pub fn simulate_island_fossil<'a, R: RngCore>(law: &OffspringLaw, r: u64, rng: &'a mut R) -> IslandStream<'a, R> {
    IslandStream::new(law, Model::Fossil, r, 1, DEFAULT_STEP_CAP, rng)
}

/// All islands of one tree of isles, regrowing model. The exploration walk's
/// law does not involve life-lengths, so none are drawn.
pub fn simulate_island_regrow<'a, R: RngCore>(law: &OffspringLaw, r: u64, rng: &'a mut R) -> IslandStream<'a, R> {
    IslandStream::new(law, Model::Regrow, r, 1, DEFAULT_STEP_CAP, rng)
}

/// Finite point measure with positive atoms.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RescaledPointMeasure {
    atoms: Vec<f64>,
}

impl RescaledPointMeasure {
    pub fn new(atoms: Vec<f64>) -> Self {
        assert!(atoms.iter().all(|&a| a > 0.0), "atoms must be positive");
        RescaledPointMeasure { atoms }
    }

    pub fn push(&mut self, atom: f64) {
        assert!(atom > 0.0, "atoms must be positive");
        self.atoms.push(atom);
    }

    pub fn extend(&mut self, other: &RescaledPointMeasure) {
        self.atoms.extend_from_slice(&other.atoms);
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `⟨self, f⟩ = Σ f(atom)`.
    pub fn integrate(&self, f: &TestFunction) -> f64 {
        self.atoms.iter().map(|&x| f.eval(x)).sum()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "atom")?;
        for a in &self.atoms {
            writeln!(w, "{}", fmt_float(*a))?;
        }
        Ok(())
    }
}

/// 17 significant digits, enough for an exact round trip.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

/// `Z_{i,p}`: number of islands at generation `i` with population `p`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZTable {
    counts: BTreeMap<(u32, u64), u64>,
}

impl ZTable {
    pub fn add(&mut self, generation: u32, population: u64) {
        *self.counts.entry((generation, population)).or_insert(0) += 1;
    }

    pub fn get(&self, generation: u32, population: u64) -> u64 {
        self.counts.get(&(generation, population)).copied().unwrap_or(0)
    }

    pub fn generation_total(&self, generation: u32) -> u64 {
        self.counts
            .range((generation, 0)..=(generation, u64::MAX))
            .map(|(_, &c)| c)
            .sum()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u64, u64)> + '_ {
        self.counts.iter().map(|(&(g, p), &c)| (g, p, c))
    }
}

/// One island of a recorded forest; children occupy a contiguous index range.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForestIsland {
    pub generation: u32,
    pub population: u64,
    pub colonies: u64,
    pub first_child: usize,
    /// Colonies actually simulated (zero past the generation cutoff).
    pub explored: u64,
}

/// Islands in first-in first-out order; the first `roots` are the initial ones.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IslesForest {
    pub roots: usize,
    pub islands: Vec<ForestIsland>,
}

impl IslesForest {
    pub fn children(&self, i: usize) -> std::ops::Range<usize> {
        let isl = &self.islands[i];
        isl.first_child..isl.first_child + isl.explored as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ForestConfig {
    pub n: u64,
    pub c: f64,
    pub model: Model,
    pub law: OffspringLaw,
    /// Number of initial islands; `None` means `n`.
    pub roots: Option<u64>,
    pub step_cap: u64,
    pub max_generation: Option<u32>,
    /// Ends a replicate once every integral exceeds this value.
    pub stop_above: Option<f64>,
    pub test_functions: Vec<TestFunction>,
    pub keep_atoms: bool,
    pub keep_ztable: bool,
    pub keep_forest: bool,
}

impl ForestConfig {
    pub fn new(n: u64, c: f64, model: Model, law: OffspringLaw) -> Self {
        ForestConfig {
            n,
            c,
            model,
            law,
            roots: None,
            step_cap: DEFAULT_STEP_CAP,
            max_generation: None,
            stop_above: None,
            test_functions: Vec::new(),
            keep_atoms: false,
            keep_ztable: false,
            keep_forest: false,
        }
    }

    /// `r_N = ⌊cN²⌋` (fossil) or `⌊cN⌋` (regrow), at least 1.
    pub fn r(&self) -> u64 {
        resources(self.model, self.c, self.n)
    }

    pub fn roots(&self) -> u64 {
        self.roots.unwrap_or(self.n)
    }
}

pub fn resources(model: Model, c: f64, n: u64) -> u64 {
    let nf = n as f64;
    let r = match model {
        Model::Fossil => (c * nf * nf).floor(),
        Model::Regrow => (c * nf).floor(),
    };
    (r as u64).max(1)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub master_seed: u64,
    pub replicate_index: u64,
    pub n: u64,
    pub r: u64,
    pub model: Model,
    pub integrals: Vec<f64>,
    pub islands: u64,
    pub fertile: u64,
    pub overflow: bool,
    pub steps: u64,
    /// Ended early by `stop_above`.
    pub truncated: bool,
}

#[derive(Clone, Debug)]
pub struct ForestOutcome {
    pub summary: ReplicateSummary,
    pub measure: Option<RescaledPointMeasure>,
    pub ztable: Option<ZTable>,
    pub forest: Option<IslesForest>,
}

/// One replicate: `roots` independent trees of isles, populations rescaled
/// by `N²`. A replicate that exhausts its step budget is flagged and its
/// partial results should not enter estimates.
pub fn simulate_forest(config: &ForestConfig, master_seed: u64, replicate_index: u64) -> ForestOutcome {
    let mut rng = replicate_rng(master_seed, replicate_index);
    let r = config.r();
    let scale = 1.0 / (config.n as f64 * config.n as f64);
    let mut integrals = vec![0.0; config.test_functions.len()];
    let mut measure = config.keep_atoms.then(RescaledPointMeasure::default);
    let mut ztable = config.keep_ztable.then(ZTable::default);
    let mut forest = config.keep_forest.then(|| IslesForest {
        roots: config.roots() as usize,
        islands: Vec::new(),
    });
    let mut next_index = config.roots() as usize;
    let mut islands = 0u64;
    let mut fertile = 0u64;
    let mut overflow = false;
    let mut truncated = false;
    let mut stream = IslandStream::new(&config.law, config.model, r, config.roots(), config.step_cap, &mut rng)
        .with_max_generation(config.max_generation);
    for rec in stream.by_ref() {
        let Ok(rec) = rec else {
            overflow = true;
            break;
        };
        let IslandRecord { generation, pop_col } = rec;
        islands += 1;
        if pop_col.colonies > 0 {
            fertile += 1;
        }
        let x = pop_col.population as f64 * scale;
        for (acc, f) in integrals.iter_mut().zip(&config.test_functions) {
            *acc += f.eval(x);
        }
        if let Some(m) = measure.as_mut() {
            m.push(x);
        }
        if let Some(z) = ztable.as_mut() {
            z.add(generation, pop_col.population);
        }
        if let Some(fo) = forest.as_mut() {
            let explored = if config.max_generation.is_none_or(|g| generation < g) {
                pop_col.colonies
            } else {
                0
            };
            fo.islands.push(ForestIsland {
                generation,
                population: pop_col.population,
                colonies: pop_col.colonies,
                first_child: next_index,
                explored,
            });
            next_index += explored as usize;
        }
        if let Some(stop) = config.stop_above {
            if !integrals.is_empty() && integrals.iter().all(|&v| v > stop) {
                truncated = true;
                break;
            }
        }
    }
    let steps = stream.steps();
    ForestOutcome {
        summary: ReplicateSummary {
            master_seed,
            replicate_index,
            n: config.n,
            r,
            model: config.model,
            integrals,
            islands,
            fertile,
            overflow,
            steps,
            truncated,
        },
        measure,
        ztable,
        forest,
    }
}

/// Runs replicates `0..replicates` on a dedicated pool of `workers` threads.
/// Results come back in replicate order whatever the scheduling.
pub fn run_replicates(config: &ForestConfig, master_seed: u64, replicates: u64, workers: usize) -> Vec<ForestOutcome> {
    with_pool(workers, || {
        (0..replicates)
            .into_par_iter()
            .map(|i| simulate_forest(config, master_seed, i))
            .collect()
    })
}

/// Like [`run_replicates`] but keeps only the summaries.
pub fn run_summaries(config: &ForestConfig, master_seed: u64, replicates: u64, workers: usize) -> Vec<ReplicateSummary> {
    with_pool(workers, || {
        (0..replicates)
            .into_par_iter()
            .map(|i| simulate_forest(config, master_seed, i).summary)
            .collect()
    })
}

pub fn with_pool<T: Send, F: FnOnce() -> T + Send>(workers: usize, f: F) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}

/// Node of a reordered forest: rescaled population and fertility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReorderedNode {
    pub population: f64,
    pub fertility: f64,
    pub children: Vec<ReorderedNode>,
}

impl ReorderedNode {
    /// Coordinates `(population, fertility)` of the depth-`depth`, width-`width`
    /// prefix below this node, breadth-first, with zeros for missing nodes.
    pub fn prefix_coordinates(&self, depth: usize, width: usize) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        let mut level: Vec<Option<&ReorderedNode>> = vec![Some(self)];
        for _ in 0..depth {
            let mut next = Vec::with_capacity(level.len() * width);
            for node in &level {
                for j in 0..width {
                    next.push(node.and_then(|n| n.children.get(j)));
                }
            }
            out.extend(next.iter().map(|n| n.map_or((0.0, 0.0), |n| (n.population, n.fertility))));
            level = next;
        }
        out
    }
}

pub(crate) fn sort_children(children: &mut [ReorderedNode]) {
    // stable: equal keys keep their original order
    children.sort_by(|a, b| {
        b.population
            .total_cmp(&a.population)
            .then(b.fertility.total_cmp(&a.fertility))
    });
}

/// Links the initial islands under a virtual root of population `r/N²` and
/// fertility 1, sorts every island's colonies by decreasing population
/// (then fertility), and keeps the depth-`depth`, width-`width` prefix.
pub fn reorder_forest(forest: &IslesForest, n: u64, r: u64, depth: usize, width: usize) -> ReorderedNode {
    assert!(depth >= 1 && width >= 1);
    let nf = n as f64;
    let node = |i: usize| (forest.islands[i].population as f64 / (nf * nf), forest.islands[i].colonies as f64 / nf);
    fn build(
        forest: &IslesForest,
        idx: std::ops::Range<usize>,
        depth: usize,
        width: usize,
        node: &dyn Fn(usize) -> (f64, f64),
    ) -> Vec<ReorderedNode> {
        if depth == 0 {
            return Vec::new();
        }
        let mut kids: Vec<(usize, ReorderedNode)> = idx
            .map(|i| {
                let (p, f) = node(i);
                (
                    i,
                    ReorderedNode {
                        population: p,
                        fertility: f,
                        children: Vec::new(),
                    },
                )
            })
            .collect();
        kids.sort_by(|(ia, a), (ib, b)| {
            b.population
                .total_cmp(&a.population)
                .then(b.fertility.total_cmp(&a.fertility))
                .then(ia.cmp(ib))
        });
        kids.truncate(width);
        kids.into_iter()
            .map(|(i, mut k)| {
                k.children = build(forest, forest.children(i), depth - 1, width, node);
                k
            })
            .collect()
    }
    ReorderedNode {
        population: r as f64 / (nf * nf),
        fertility: 1.0,
        children: build(forest, 0..forest.roots.min(forest.islands.len()), depth, width, &node),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exploration::{exploration_walk, label_bfs, label_regrow};
    use crate::isles::{pop_col_direct_fossil, pop_col_fossil_walk, pop_col_regrow_walk};
    use crate::trees::{sample_continuous_gw_tree, sample_gw_tree};
    use std::collections::HashMap;

    fn chi2_same(a: &HashMap<(u64, u64), u64>, b: &HashMap<(u64, u64), u64>) -> f64 {
        crate::stats::chi_square_homogeneity(a, b, 5).p()
    }

    #[test]
    fn word_tables_match_steps() {
        let mut rng = replicate_rng(40, 0);
        for _ in 0..1000 {
            let w = rng.next_u64();
            let (mut s, mut top) = (0i64, i64::MIN);
            for k in 0..64 {
                s += if (w >> k) & 1 == 1 { 1 } else { -1 };
                top = top.max(s);
            }
            assert_eq!(word_sum_max(w), (s, top));
        }
    }

    #[test]
    fn conditioned_regrow_matches_rejection() {
        let law = OffspringLaw::binary_half();
        for r in [1u64, 3, 8, 70] {
            let mut w = IslandWalker::new(&law, u64::MAX);
            let mut rng = replicate_rng(41, r);
            let mut exact = HashMap::new();
            let mut rejected = HashMap::new();
            let n = 20_000;
            for _ in 0..n {
                let pc = w.regrow_island_fertile(r, &mut rng).unwrap();
                *exact.entry(bucket(pc, r)).or_insert(0) += 1;
            }
            let mut got = 0;
            while got < n {
                let pc = w.regrow_island(r, &mut rng).unwrap();
                if pc.colonies > 0 {
                    *rejected.entry(bucket(pc, r)).or_insert(0) += 1;
                    got += 1;
                }
            }
            let p = chi2_same(&exact, &rejected);
            assert!(p > 0.001, "r={r}: p={p}");
        }
    }

    /// Coarsens (population, colonies) so every cell is well populated.
    fn bucket(pc: PopCol, r: u64) -> (u64, u64) {
        let scale = (r * r / 4).max(1);
        ((pc.population / scale).min(40), (pc.colonies * 4 / r.max(4)).min(20))
    }

    #[test]
    fn exceedance_probability() {
        // binary-half: gambler's ruin gives 1/(level + 2)
        let law = OffspringLaw::binary_half();
        let mut w = IslandWalker::new(&law, u64::MAX);
        let mut rng = replicate_rng(42, 0);
        let level = 20;
        let n = 200_000;
        let hits = (0..n).filter(|_| w.exceeds_before_absorbed(level, &mut rng).unwrap()).count() as f64;
        let p = 1.0 / (level as f64 + 2.0);
        assert!((hits / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
        let geo = OffspringLaw::geometric_half();
        let mut w = IslandWalker::new(&geo, u64::MAX);
        let hits = (0..n).filter(|_| w.exceeds_before_absorbed(level, &mut rng).unwrap()).count() as f64;
        // geometric-half: 1/(level + 3)
        let p = 1.0 / (level as f64 + 3.0);
        assert!((hits / n as f64 - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    }

    #[test]
    fn geometric_bit_buffer_law() {
        let law = OffspringLaw::geometric_half();
        let mut w = IslandWalker::new(&law, u64::MAX);
        let mut rng = replicate_rng(1, 0);
        let mut counts = [0u64; 8];
        let n = 1_000_000;
        for _ in 0..n {
            let k = (w.step(&mut rng) + 1) as usize;
            if k < 8 {
                counts[k] += 1;
            }
        }
        for (k, &c) in counts.iter().enumerate().take(5) {
            let p = 0.5f64.powi(k as i32 + 1);
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 4.0 * se, "k={k}");
        }
    }

    #[test]
    fn batched_walks_match_single_steps_in_law() {
        // Fossil islands from batched steppers against tree-based islands.
        let mut rng = replicate_rng(2, 0);
        for law in [OffspringLaw::geometric_half(), OffspringLaw::binary_half(), OffspringLaw::poisson_one()] {
            let r = 7;
            let mut fast = HashMap::new();
            let mut slow = HashMap::new();
            let mut w = IslandWalker::new(&law, u64::MAX);
            for _ in 0..40_000 {
                let pc = w.fossil_island(r, &mut rng).unwrap();
                *fast.entry((pc.population, pc.colonies.min(6))).or_insert(0) += 1;
                let t = loop {
                    if let Ok(t) = sample_gw_tree(&law, &mut rng, 1 << 20) {
                        break t;
                    }
                };
                let pc = pop_col_direct_fossil(&t, r as usize);
                *slow.entry((pc.population, pc.colonies.min(6))).or_insert(0) += 1;
            }
            let p = chi2_same(&fast, &slow);
            assert!(p > 1e-3, "{:?}: p = {p}", law.kind());
        }
    }

    #[test]
    fn regrow_islands_match_tree_oracle_in_law() {
        let mut rng = replicate_rng(3, 0);
        for law in [OffspringLaw::geometric_half(), OffspringLaw::binary_half()] {
            let r = 4;
            let mut fast = HashMap::new();
            let mut slow = HashMap::new();
            let mut w = IslandWalker::new(&law, u64::MAX);
            let mut done = 0;
            while done < 30_000 {
                let Ok(t) = sample_continuous_gw_tree(&law, 1.0, &mut rng, 1 << 16) else { continue };
                let walk = exploration_walk(t.shape(), &label_regrow(&t, r as usize));
                let pc = pop_col_regrow_walk(&walk, r as usize);
                *slow.entry((pc.population.min(30), pc.colonies.min(5))).or_insert(0) += 1;
                let pc = w.regrow_island(r, &mut rng).unwrap();
                *fast.entry((pc.population.min(30), pc.colonies.min(5))).or_insert(0) += 1;
                done += 1;
            }
            let p = chi2_same(&fast, &slow);
            assert!(p > 1e-3, "{:?}: p = {p}", law.kind());
        }
    }

    #[test]
    fn fossil_r1_and_fixed_values() {
        let law = OffspringLaw::geometric_half();
        let mut rng = replicate_rng(4, 0);
        let mut w = IslandWalker::new(&law, u64::MAX);
        for _ in 0..1000 {
            let pc = w.fossil_island(1, &mut rng).unwrap();
            assert_eq!(pc.population, 1);
        }
        // r = 3: P(pop = 1) = 1/2, P(pop = 2) = 1/8
        let n = 1_000_000;
        let (mut one, mut two) = (0u64, 0u64);
        for _ in 0..n {
            match w.fossil_island(3, &mut rng).unwrap().population {
                1 => one += 1,
                2 => two += 1,
                _ => {}
            }
        }
        let check = |c: u64, p: f64| {
            let se = (p * (1.0 - p) / n as f64).sqrt();
            assert!((c as f64 / n as f64 - p).abs() < 3.5 * se, "{c} vs {p}");
        };
        check(one, 0.5);
        check(two, 0.125);
    }

    #[test]
    fn regrow_island_without_overshoot() {
        let law = OffspringLaw::binary_half();
        let mut rng = replicate_rng(5, 0);
        let mut w = IslandWalker::new(&law, u64::MAX);
        for _ in 0..10_000 {
            let pc = w.regrow_island(1 << 40, &mut rng);
            let Ok(pc) = pc else { continue };
            assert_eq!(pc.colonies, 0);
        }
    }

    #[test]
    fn walk_formulas_agree_with_walker_on_fixed_walks() {
        // Regrow: binary walk [0,1,2,1,0,-1] is the worked example.
        let w = crate::exploration::ExplorationWalk::new(vec![0, 1, 2, 1, 0, -1]).unwrap();
        assert_eq!(pop_col_regrow_walk(&w, 2), PopCol::new(4, 1));
        let t = crate::trees::DiscreteTree::star(3);
        assert_eq!(pop_col_fossil_walk(&exploration_walk(&t, &label_bfs(&t)), 2), PopCol::new(2, 2));
    }

    #[test]
    fn r1_binary_forest_atoms_are_one() {
        let mut cfg = ForestConfig::new(1, 1.0, Model::Fossil, OffspringLaw::binary_half());
        cfg.keep_atoms = true;
        cfg.keep_ztable = true;
        for i in 0..200 {
            let out = simulate_forest(&cfg, 9, i);
            if out.summary.overflow {
                continue;
            }
            let m = out.measure.unwrap();
            assert!(m.atoms().iter().all(|&a| a == 1.0));
            assert_eq!(m.len() as u64, out.summary.islands);
            assert_eq!(out.ztable.unwrap().generation_total(0), 1);
        }
    }

    #[test]
    fn ztable_generation_zero_mass() {
        let mut cfg = ForestConfig::new(50, 1.0, Model::Regrow, OffspringLaw::geometric_half());
        cfg.keep_ztable = true;
        let out = simulate_forest(&cfg, 10, 0);
        assert_eq!(out.ztable.unwrap().generation_total(0), 50);
    }

    #[test]
    fn integral_vanishes_above_atoms() {
        let mut cfg = ForestConfig::new(10, 1.0, Model::Fossil, OffspringLaw::geometric_half());
        cfg.test_functions = vec![TestFunction::new(5.0, 6.0, 7.0, 8.0, 1.0).unwrap()];
        for i in 0..50 {
            let out = simulate_forest(&cfg, 11, i);
            assert_eq!(out.summary.integrals[0], 0.0);
        }
    }

    #[test]
    fn deterministic_across_worker_counts() {
        let mut cfg = ForestConfig::new(20, 1.0, Model::Fossil, OffspringLaw::geometric_half());
        cfg.test_functions = vec![TestFunction::new(0.01, 0.1, 0.5, 1.0, 1.0).unwrap()];
        let a = run_summaries(&cfg, 77, 64, 1);
        let b = run_summaries(&cfg, 77, 64, 4);
        let c = run_summaries(&cfg, 77, 64, 16);
        assert_eq!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn step_budget_is_flagged() {
        let mut cfg = ForestConfig::new(100, 1.0, Model::Fossil, OffspringLaw::geometric_half());
        cfg.step_cap = 50;
        let out = simulate_forest(&cfg, 12, 0);
        assert!(out.summary.overflow);
    }

    #[test]
    fn reordering() {
        let forest = IslesForest {
            roots: 2,
            islands: vec![
                ForestIsland { generation: 0, population: 3, colonies: 0, first_child: 2, explored: 0 },
                ForestIsland { generation: 0, population: 7, colonies: 0, first_child: 2, explored: 0 },
            ],
        };
        let root = reorder_forest(&forest, 1, 1, 1, 3);
        let pops: Vec<f64> = root.children.iter().map(|c| c.population).collect();
        assert_eq!(pops, vec![7.0, 3.0]);
        assert_eq!(root.fertility, 1.0);
        // ties keep the original order
        let tied = IslesForest {
            roots: 2,
            islands: vec![
                ForestIsland { generation: 0, population: 5, colonies: 1, first_child: 2, explored: 1 },
                ForestIsland { generation: 0, population: 5, colonies: 1, first_child: 3, explored: 0 },
                ForestIsland { generation: 1, population: 2, colonies: 0, first_child: 3, explored: 0 },
            ],
        };
        let root = reorder_forest(&tied, 1, 1, 2, 2);
        assert_eq!(root.children[0].children.len(), 1);
        assert!(root.children[1].children.is_empty());
        let coords = root.prefix_coordinates(2, 2);
        assert_eq!(coords.len(), 2 + 4);
        assert_eq!(coords[2], (2.0, 0.0));
        assert_eq!(coords[3], (0.0, 0.0));
    }

    #[test]
    fn reorder_top_three_roots() {
        let mut cfg = ForestConfig::new(30, 1.0, Model::Fossil, OffspringLaw::geometric_half());
        cfg.keep_forest = true;
        cfg.max_generation = Some(0);
        let out = simulate_forest(&cfg, 13, 0);
        let forest = out.forest.unwrap();
        let root = reorder_forest(&forest, 30, cfg.r(), 1, 3);
        let mut pops: Vec<u64> = forest.islands.iter().map(|i| i.population).collect();
        pops.sort_unstable_by(|a, b| b.cmp(a));
        let got: Vec<f64> = root.children.iter().map(|c| c.population * 900.0).collect();
        for (g, p) in got.iter().zip(&pops) {
            assert!((g - *p as f64).abs() < 1e-9);
        }
    }
}
