//! Quicksort-driven pairwise ranking.
//!
//! A campaign ranks items on one emotion dimension. The scheduler keeps a set
//! of active partitions, each owning a contiguous block of final positions. Every
//! non-pivot member of a partition is compared against the pivot. Each
//! comparison collects three judgments from distinct annotators and resolves to
//! the majority winner. Once all of a pivot's comparisons are resolved, the
//! partition splits into the members that beat the pivot and those that did not.
//! The pivot takes the position between them. Sub-partitions of one item are
//! placed immediately.
//!
//! Comparisons are never repeated. An intransitive set of majorities therefore
//! still terminates with a complete (if inconsistent) order.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// Judgments collected per comparison before it resolves.
pub const VOTES_PER_COMPARISON: usize = 3;

#[derive(Debug, Error, PartialEq)]
pub enum RankingError {
    #[error("item list is empty")]
    Empty,
    #[error("duplicate item {0:?}")]
    DuplicateItem(String),
    #[error("a comparison needs two distinct items, got {0:?} twice")]
    SelfComparison(String),
    #[error("comparison {0} is not pending")]
    UnknownKey(ComparisonKey),
    #[error("comparison {0} is already resolved")]
    AlreadyResolved(ComparisonKey),
    #[error("annotator {annotator:?} already judged {key}")]
    DuplicateAnnotator {
        key: ComparisonKey,
        annotator: String,
    },
    #[error("winner {winner:?} is not part of {key}")]
    InvalidWinner { key: ComparisonKey, winner: String },
    #[error("ranking is incomplete: {placed} of {total} items placed")]
    Incomplete { placed: usize, total: usize },
    #[error("rank {rank} outside 1..={n}")]
    RankOutOfRange { rank: usize, n: usize },
    #[error("comparison {key} has {found} judgments, expected {VOTES_PER_COMPARISON}")]
    WrongJudgmentCount { key: ComparisonKey, found: usize },
    #[error("orders are not permutations of the same items")]
    MismatchedOrders,
}

pub type Result<T> = std::result::Result<T, RankingError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dimension {
    Arousal,
    Valence,
}

impl Dimension {
    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::Arousal => "arousal",
            Dimension::Valence => "valence",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Dimension {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "arousal" => Ok(Dimension::Arousal),
            "valence" => Ok(Dimension::Valence),
            other => Err(format!(
                "unknown dimension {other:?} (expected arousal|valence)"
            )),
        }
    }
}

/// An unordered pair of items on a dimension. `left < right` always holds, so
/// `(a, b)` and `(b, a)` build the same key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ComparisonKey {
    left: String,
    right: String,
    dimension: Dimension,
}

impl ComparisonKey {
    pub fn new(a: &str, b: &str, dimension: Dimension) -> Result<Self> {
        if a == b {
            return Err(RankingError::SelfComparison(a.to_string()));
        }
        let (left, right) = if a < b { (a, b) } else { (b, a) };
        Ok(Self {
            left: left.to_string(),
            right: right.to_string(),
            dimension,
        })
    }

    pub fn left(&self) -> &str {
        &self.left
    }

    pub fn right(&self) -> &str {
        &self.right
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn contains(&self, id: &str) -> bool {
        self.left == id || self.right == id
    }

    /// The member that is not `id`.
    pub fn other(&self, id: &str) -> Option<&str> {
        if self.left == id {
            Some(&self.right)
        } else if self.right == id {
            Some(&self.left)
        } else {
            None
        }
    }
}

impl fmt::Display for ComparisonKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}; {})", self.left, self.right, self.dimension)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgment {
    pub key: ComparisonKey,
    pub annotator: String,
    pub winner: String,
    pub timestamp_ms: u64,
}

/// Emitted when a comparison collects its third judgment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    pub key: ComparisonKey,
    pub winner: String,
    pub votes_for_winner: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Partition {
    /// First final position (0-based) owned by this partition.
    start: usize,
    pivot: String,
    members: Vec<String>,
    unresolved: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingState {
    dimension: Dimension,
    items: Vec<String>,
    seed: u64,
    partitions: BTreeMap<usize, Partition>,
    #[serde(with = "pairs")]
    judgments: BTreeMap<ComparisonKey, Vec<Judgment>>,
    #[serde(with = "pairs")]
    resolved: BTreeMap<ComparisonKey, String>,
    placed: BTreeMap<String, usize>,
}

mod pairs {
    use serde::de::DeserializeOwned;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};
    use std::collections::BTreeMap;

    pub fn serialize<K, V, S>(map: &BTreeMap<K, V>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize,
        V: Serialize,
        S: Serializer,
    {
        s.collect_seq(map.iter())
    }

    pub fn deserialize<'de, K, V, D>(d: D) -> Result<BTreeMap<K, V>, D::Error>
    where
        K: DeserializeOwned + Ord,
        V: DeserializeOwned,
        D: Deserializer<'de>,
    {
        Ok(Vec::<(K, V)>::deserialize(d)?.into_iter().collect())
    }
}

impl RankingState {
    /// Starts a ranking with one partition holding every item.
    pub fn new(items: &[String], dimension: Dimension, seed: u64) -> Result<Self> {
        if items.is_empty() {
            return Err(RankingError::Empty);
        }
        let mut seen = BTreeSet::new();
        for id in items {
            if !seen.insert(id.as_str()) {
                return Err(RankingError::DuplicateItem(id.clone()));
            }
        }
        let mut state = Self {
            dimension,
            items: items.to_vec(),
            seed,
            partitions: BTreeMap::new(),
            judgments: BTreeMap::new(),
            resolved: BTreeMap::new(),
            placed: BTreeMap::new(),
        };
        state.open_partition(0, items.to_vec());
        Ok(state)
    }

    pub fn dimension(&self) -> Dimension {
        self.dimension
    }

    pub fn items(&self) -> &[String] {
        &self.items
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_complete(&self) -> bool {
        self.placed.len() == self.items.len()
    }

    /// Final 1-based rank of every placed item.
    pub fn placed(&self) -> impl Iterator<Item = (&str, usize)> {
        self.placed.iter().map(|(id, &pos)| (id.as_str(), pos + 1))
    }

    pub fn placed_count(&self) -> usize {
        self.placed.len()
    }

    pub fn resolved_count(&self) -> usize {
        self.resolved.len()
    }

    pub fn resolved(&self) -> impl Iterator<Item = (&ComparisonKey, &str)> {
        self.resolved.iter().map(|(k, w)| (k, w.as_str()))
    }

    /// Judgments collected so far for `key`.
    pub fn judgments_for(&self, key: &ComparisonKey) -> &[Judgment] {
        self.judgments.get(key).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every judgment, grouped by comparison in key order.
    pub fn all_judgments(&self) -> impl Iterator<Item = &Judgment> {
        self.judgments.values().flatten()
    }

    /// Pivots of the partitions that currently have open comparisons.
    pub fn active_pivots(&self) -> Vec<&str> {
        self.partitions.values().map(|p| p.pivot.as_str()).collect()
    }

    pub fn pending_comparisons(&self) -> BTreeSet<ComparisonKey> {
        let mut out = BTreeSet::new();
        for p in self.partitions.values() {
            for m in &p.members {
                let key = self.key(&p.pivot, m);
                if !self.resolved.contains_key(&key) {
                    out.insert(key);
                }
            }
        }
        out
    }

    pub fn is_pending(&self, key: &ComparisonKey) -> bool {
        key.dimension == self.dimension
            && !self.resolved.contains_key(key)
            && self.partition_for(key).is_some()
    }

    fn key(&self, a: &str, b: &str) -> ComparisonKey {
        // Partition members are distinct from their pivot.
        ComparisonKey::new(a, b, self.dimension).expect("pivot compared with itself")
    }

    fn partition_for(&self, key: &ComparisonKey) -> Option<usize> {
        self.partitions.iter().find_map(|(&start, p)| {
            let other = key.other(&p.pivot)?;
            p.members.iter().any(|m| m == other).then_some(start)
        })
    }

    /// Records one judgment. Returns the resolution when this was the deciding
    /// vote. On error the state is left unchanged.
    pub fn submit_judgment(&mut self, judgment: Judgment) -> Result<Option<Resolution>> {
        let key = judgment.key.clone();
        if self.resolved.contains_key(&key) {
            return Err(RankingError::AlreadyResolved(key));
        }
        if key.dimension != self.dimension {
            return Err(RankingError::UnknownKey(key));
        }
        let start = self
            .partition_for(&key)
            .ok_or_else(|| RankingError::UnknownKey(key.clone()))?;
        if !key.contains(&judgment.winner) {
            return Err(RankingError::InvalidWinner {
                key,
                winner: judgment.winner,
            });
        }
        let votes = self.judgments.entry(key.clone()).or_default();
        if votes.iter().any(|j| j.annotator == judgment.annotator) {
            return Err(RankingError::DuplicateAnnotator {
                key,
                annotator: judgment.annotator,
            });
        }
        votes.push(judgment);
        if votes.len() < VOTES_PER_COMPARISON {
            return Ok(None);
        }

        let left_votes = votes.iter().filter(|j| j.winner == key.left).count();
        let (winner, count) = if 2 * left_votes > votes.len() {
            (key.left.clone(), left_votes)
        } else {
            (key.right.clone(), votes.len() - left_votes)
        };
        self.resolved.insert(key.clone(), winner.clone());

        let partition = self.partitions.get_mut(&start).expect("partition exists");
        partition.unresolved -= 1;
        if partition.unresolved == 0 {
            self.split(start);
        }
        Ok(Some(Resolution {
            key,
            winner,
            votes_for_winner: count,
        }))
    }

    fn split(&mut self, start: usize) {
        let p = self.partitions.remove(&start).expect("partition exists");
        let (higher, lower): (Vec<String>, Vec<String>) = p.members.into_iter().partition(|m| {
            let key = ComparisonKey::new(m, &p.pivot, self.dimension).expect("distinct");
            self.resolved.get(&key) == Some(m)
        });
        let pivot_pos = start + higher.len();
        self.placed.insert(p.pivot, pivot_pos);
        self.open_partition(start, higher);
        self.open_partition(pivot_pos + 1, lower);
    }

    fn open_partition(&mut self, start: usize, mut members: Vec<String>) {
        match members.len() {
            0 => {}
            1 => {
                self.placed
                    .insert(members.pop().expect("one member"), start);
            }
            len => {
                let mut rng = rng::stream(self.seed, &[start as u64, len as u64]);
                let pivot = members.remove(rng.random_range(0..len));
                self.partitions.insert(
                    start,
                    Partition {
                        start,
                        pivot,
                        unresolved: len - 1,
                        members,
                    },
                );
            }
        }
    }

    /// Items in final order, rank 1 (highest on the dimension) first.
    pub fn final_ranking(&self) -> Result<Vec<String>> {
        if !self.is_complete() {
            return Err(RankingError::Incomplete {
                placed: self.placed.len(),
                total: self.items.len(),
            });
        }
        let mut order: Vec<(&usize, &String)> =
            self.placed.iter().map(|(id, pos)| (pos, id)).collect();
        order.sort();
        Ok(order.into_iter().map(|(_, id)| id.clone()).collect())
    }
}

/// Maps rank 1..=n linearly onto ratings +1.0..=-1.0 with equal spacing.
pub fn rank_to_rating(rank: usize, n: usize) -> Result<f64> {
    if rank == 0 || rank > n {
        return Err(RankingError::RankOutOfRange { rank, n });
    }
    if n == 1 {
        return Ok(0.0);
    }
    if rank == n {
        return Ok(-1.0);
    }
    Ok(1.0 - 2.0 * (rank - 1) as f64 / (n - 1) as f64)
}

/// Renders `rank,clip_id,rating` CSV for a complete order.
pub fn ranking_csv(order: &[String]) -> String {
    let n = order.len();
    let mut out = String::from("rank,clip_id,rating\n");
    for (i, id) in order.iter().enumerate() {
        let rating = rank_to_rating(i + 1, n).expect("rank within range");
        out.push_str(&format!("{},{},{}\n", i + 1, id, rating));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityReport {
    /// Fraction of comparisons where all three annotators agreed.
    pub unanimous_rate: f64,
    /// Mean fraction of agreeing annotator pairs per comparison.
    pub pairwise_rate: f64,
    /// Nominal Krippendorff's alpha over left/right-wins labels.
    pub alpha: f64,
    pub comparisons: usize,
}

/// Nominal-data Krippendorff's alpha. Each unit lists the labels assigned to
/// it; units with fewer than two labels are not pairable and are skipped.
///
/// When every pairable value carries the same label, expected disagreement is
/// zero; alpha is then reported as 1.0.
pub fn krippendorff_alpha_nominal<L: Ord + Clone>(units: &[Vec<L>]) -> f64 {
    let mut coincidence: BTreeMap<(L, L), f64> = BTreeMap::new();
    for unit in units.iter().filter(|u| u.len() >= 2) {
        let weight = 1.0 / (unit.len() - 1) as f64;
        for (i, a) in unit.iter().enumerate() {
            for (j, b) in unit.iter().enumerate() {
                if i != j {
                    *coincidence.entry((a.clone(), b.clone())).or_insert(0.0) += weight;
                }
            }
        }
    }
    let mut marginals: BTreeMap<L, f64> = BTreeMap::new();
    for ((c, _), v) in &coincidence {
        *marginals.entry(c.clone()).or_insert(0.0) += v;
    }
    let n: f64 = marginals.values().sum();
    if n <= 1.0 {
        return 1.0;
    }
    let observed: f64 = coincidence
        .iter()
        .filter(|((a, b), _)| a != b)
        .map(|(_, v)| v)
        .sum::<f64>()
        / n;
    let counts: Vec<f64> = marginals.values().copied().collect();
    let mut expected = 0.0;
    for (i, a) in counts.iter().enumerate() {
        for (j, b) in counts.iter().enumerate() {
            if i != j {
                expected += a * b;
            }
        }
    }
    expected /= n * (n - 1.0);
    if expected == 0.0 {
        return if observed == 0.0 {
            1.0
        } else {
            f64::NEG_INFINITY
        };
    }
    1.0 - observed / expected
}

/// Agreement statistics over a campaign's real comparisons. Every key present
/// must carry exactly three judgments.
pub fn reliability<'a, I>(judgments: I) -> Result<ReliabilityReport>
where
    I: IntoIterator<Item = &'a Judgment>,
{
    let mut by_key: BTreeMap<&ComparisonKey, Vec<bool>> = BTreeMap::new();
    for j in judgments {
        by_key
            .entry(&j.key)
            .or_default()
            .push(j.winner == j.key.left);
    }
    for (key, labels) in &by_key {
        if labels.len() != VOTES_PER_COMPARISON {
            return Err(RankingError::WrongJudgmentCount {
                key: (*key).clone(),
                found: labels.len(),
            });
        }
    }
    let units: Vec<Vec<bool>> = by_key.into_values().collect();
    if units.is_empty() {
        return Ok(ReliabilityReport {
            unanimous_rate: 1.0,
            pairwise_rate: 1.0,
            alpha: 1.0,
            comparisons: 0,
        });
    }
    let m = units.len() as f64;
    let unanimous = units
        .iter()
        .filter(|u| u.iter().all(|&x| x == u[0]))
        .count() as f64;
    let pairwise: f64 = units
        .iter()
        .map(|u| {
            let agree = (0..u.len())
                .flat_map(|i| (i + 1..u.len()).map(move |j| (i, j)))
                .filter(|&(i, j)| u[i] == u[j])
                .count();
            agree as f64 / 3.0
        })
        .sum();
    Ok(ReliabilityReport {
        unanimous_rate: unanimous / m,
        pairwise_rate: pairwise / m,
        alpha: krippendorff_alpha_nominal(&units),
        comparisons: units.len(),
    })
}

/// Kendall's tau-a between two orders of the same items.
pub fn kendall_tau(order: &[String], reference: &[String]) -> Result<f64> {
    let n = order.len();
    if n != reference.len() {
        return Err(RankingError::MismatchedOrders);
    }
    if n < 2 {
        return Ok(1.0);
    }
    let position: BTreeMap<&str, usize> = reference
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let ranks: Vec<usize> = order
        .iter()
        .map(|id| {
            position
                .get(id.as_str())
                .copied()
                .ok_or(RankingError::MismatchedOrders)
        })
        .collect::<Result<_>>()?;
    if position.len() != n {
        return Err(RankingError::MismatchedOrders);
    }
    let mut concordant = 0i64;
    let mut discordant = 0i64;
    for i in 0..n {
        for j in i + 1..n {
            if ranks[i] < ranks[j] {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    Ok((concordant - discordant) as f64 / (n * (n - 1) / 2) as f64)
}

pub mod simulate {
    //! Simulated annotation campaigns against a known total order.

    use super::*;
    use rand::seq::index::sample;

    #[derive(Debug, Clone, Copy)]
    pub struct SimulationConfig {
        pub items: usize,
        /// Probability that an individual annotator reports the wrong winner.
        pub flip_noise: f64,
        /// Size of the annotator pool; each comparison draws three distinct ones.
        pub annotators: usize,
        pub seed: u64,
    }

    #[derive(Debug, Clone)]
    pub struct SimulationOutcome {
        pub order: Vec<String>,
        pub truth: Vec<String>,
        pub kendall_tau: f64,
        pub resolved: usize,
        pub reliability: ReliabilityReport,
    }

    pub fn item_id(i: usize) -> String {
        format!("item{i:04}")
    }

    /// Runs one campaign. Item `i` has true value `perm[i]` for a seeded
    /// permutation, so the truth order is by descending value.
    pub fn run(config: SimulationConfig) -> Result<SimulationOutcome> {
        let n = config.items;
        let ids: Vec<String> = (0..n).map(item_id).collect();
        let mut rng = rng::stream(config.seed, &[0x51]);
        let mut value: BTreeMap<String, usize> = BTreeMap::new();
        let perm = sample(&mut rng, n, n);
        for (i, v) in perm.iter().enumerate() {
            value.insert(ids[i].clone(), v);
        }
        let mut truth = ids.clone();
        truth.sort_by_key(|id| std::cmp::Reverse(value[id]));

        let pool = config.annotators.max(VOTES_PER_COMPARISON);
        let mut state = RankingState::new(&ids, Dimension::Arousal, config.seed)?;
        let mut clock = 0u64;
        loop {
            let pending = state.pending_comparisons();
            if pending.is_empty() {
                break;
            }
            for key in pending {
                let correct = if value[key.left()] > value[key.right()] {
                    key.left().to_string()
                } else {
                    key.right().to_string()
                };
                for a in sample(&mut rng, pool, VOTES_PER_COMPARISON).iter() {
                    let winner = if rng.random::<f64>() < config.flip_noise {
                        key.other(&correct).expect("member").to_string()
                    } else {
                        correct.clone()
                    };
                    clock += 1;
                    state.submit_judgment(Judgment {
                        key: key.clone(),
                        annotator: format!("a{a}"),
                        winner,
                        timestamp_ms: clock,
                    })?;
                }
            }
        }
        let order = state.final_ranking()?;
        Ok(SimulationOutcome {
            kendall_tau: kendall_tau(&order, &truth)?,
            resolved: state.resolved_count(),
            reliability: reliability(state.all_judgments())?,
            order,
            truth,
        })
    }

    /// Runs independent campaigns, in parallel when enabled.
    pub fn run_many(configs: &[SimulationConfig]) -> Result<Vec<SimulationOutcome>> {
        crate::par::try_map(configs, |c| run(*c))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    fn vote(
        state: &mut RankingState,
        key: &ComparisonKey,
        who: &str,
        winner: &str,
    ) -> Result<Option<Resolution>> {
        state.submit_judgment(Judgment {
            key: key.clone(),
            annotator: who.to_string(),
            winner: winner.to_string(),
            timestamp_ms: 0,
        })
    }

    /// Drives the state with a consistent comparator on `values`.
    fn drive(state: &mut RankingState, values: &BTreeMap<String, i64>) {
        while !state.is_complete() {
            for key in state.pending_comparisons() {
                let w = if values[key.left()] > values[key.right()] {
                    key.left()
                } else {
                    key.right()
                }
                .to_string();
                for a in ["x", "y", "z"] {
                    vote(state, &key, a, &w).unwrap();
                }
            }
        }
    }

    #[test]
    fn single_item_is_placed_immediately() {
        let s = RankingState::new(&ids(&["only"]), Dimension::Valence, 3).unwrap();
        assert!(s.is_complete());
        assert!(s.pending_comparisons().is_empty());
        assert_eq!(s.final_ranking().unwrap(), ids(&["only"]));
    }

    #[test]
    fn init_rejects_bad_inputs() {
        assert_eq!(
            RankingState::new(&[], Dimension::Arousal, 1).unwrap_err(),
            RankingError::Empty
        );
        assert!(matches!(
            RankingState::new(&ids(&["a", "b", "a"]), Dimension::Arousal, 1),
            Err(RankingError::DuplicateItem(_))
        ));
    }

    #[test]
    fn first_partition_compares_everything_with_the_pivot() {
        let items: Vec<String> = (0..400).map(simulate::item_id).collect();
        let s = RankingState::new(&items, Dimension::Arousal, 7).unwrap();
        let pending = s.pending_comparisons();
        assert_eq!(pending.len(), 399);
        let pivot = s.active_pivots()[0].to_string();
        assert!(pending.iter().all(|k| k.contains(&pivot)));

        let small = RankingState::new(&ids(&["a", "b", "c", "d"]), Dimension::Arousal, 1).unwrap();
        let p = small.active_pivots()[0].to_string();
        let keys = small.pending_comparisons();
        assert_eq!(keys.len(), 3);
        assert!(keys.iter().all(|k| k.contains(&p)));
    }

    #[test]
    fn majority_resolves_after_three_votes() {
        let mut s = RankingState::new(&ids(&["A", "B"]), Dimension::Arousal, 0).unwrap();
        let key = ComparisonKey::new("B", "A", Dimension::Arousal).unwrap();
        assert_eq!(vote(&mut s, &key, "u1", "A").unwrap(), None);
        assert_eq!(vote(&mut s, &key, "u2", "A").unwrap(), None);
        assert!(s.is_pending(&key));
        let r = vote(&mut s, &key, "u3", "B").unwrap().unwrap();
        assert_eq!(r.winner, "A");
        assert_eq!(r.votes_for_winner, 2);
        assert_eq!(s.final_ranking().unwrap(), ids(&["A", "B"]));
        assert_eq!(
            vote(&mut s, &key, "u4", "B"),
            Err(RankingError::AlreadyResolved(key))
        );
    }

    #[test]
    fn judgment_errors_leave_state_unchanged() {
        let mut s = RankingState::new(&ids(&["a", "b", "c"]), Dimension::Arousal, 5).unwrap();
        let key = s.pending_comparisons().into_iter().next().unwrap();
        vote(&mut s, &key, "u1", key.left()).unwrap();
        let before = s.clone();
        assert!(matches!(
            vote(&mut s, &key, "u1", key.right()),
            Err(RankingError::DuplicateAnnotator { .. })
        ));
        assert!(matches!(
            vote(&mut s, &key, "u2", "zzz"),
            Err(RankingError::InvalidWinner { .. })
        ));
        let stray = ComparisonKey::new("q", "r", Dimension::Arousal).unwrap();
        assert!(matches!(
            vote(&mut s, &stray, "u2", "q"),
            Err(RankingError::UnknownKey(_))
        ));
        let wrong_dim = ComparisonKey::new(key.left(), key.right(), Dimension::Valence).unwrap();
        assert!(matches!(
            vote(&mut s, &wrong_dim, "u2", key.left()),
            Err(RankingError::UnknownKey(_))
        ));
        assert_eq!(s, before);
        assert!(matches!(
            s.final_ranking(),
            Err(RankingError::Incomplete { .. })
        ));
    }

    #[test]
    fn split_opens_sub_partitions() {
        let items = ids(&["a", "b", "c", "d", "e"]);
        let values: BTreeMap<String, i64> = items.iter().cloned().zip([5, 1, 4, 2, 3]).collect();
        let mut s = RankingState::new(&items, Dimension::Arousal, 11).unwrap();
        let pivot = s.active_pivots()[0].to_string();
        for key in s.pending_comparisons() {
            let w = if values[key.left()] > values[key.right()] {
                key.left()
            } else {
                key.right()
            }
            .to_string();
            for a in ["x", "y", "z"] {
                vote(&mut s, &key, a, &w).unwrap();
            }
        }
        assert_eq!(
            s.placed().find(|(id, _)| *id == pivot).map(|(_, r)| r),
            Some(6 - values[&pivot] as usize)
        );
        for key in s.pending_comparisons() {
            let pivots = s.active_pivots();
            assert!(pivots.iter().any(|p| key.contains(p)));
        }
        drive(&mut s, &values);
        assert_eq!(s.final_ranking().unwrap(), ids(&["a", "c", "e", "d", "b"]));
    }

    #[test]
    fn consistent_comparator_sorts_descending() {
        let items = ids(&["w", "x", "y", "z"]);
        let values: BTreeMap<String, i64> = items.iter().cloned().zip([10, 30, 20, 40]).collect();
        for seed in 0..20 {
            let mut s = RankingState::new(&items, Dimension::Arousal, seed).unwrap();
            drive(&mut s, &values);
            assert_eq!(s.final_ranking().unwrap(), ids(&["z", "x", "y", "w"]));
        }
    }

    #[test]
    fn rank_to_rating_endpoints_and_midpoint() {
        assert_eq!(rank_to_rating(1, 400).unwrap(), 1.0);
        assert_eq!(rank_to_rating(400, 400).unwrap(), -1.0);
        assert!((rank_to_rating(200, 400).unwrap() - 1.0 / 399.0).abs() < 1e-15);
        assert_eq!(rank_to_rating(1, 1).unwrap(), 0.0);
        assert!(rank_to_rating(0, 4).is_err());
        assert!(rank_to_rating(5, 4).is_err());
    }

    #[test]
    fn alpha_hand_fixture() {
        let units = vec![vec!['A', 'A', 'A'], vec!['B', 'B', 'A']];
        assert!((krippendorff_alpha_nominal(&units) - 0.375).abs() < 1e-12);
    }

    #[test]
    fn reliability_counts() {
        let key1 = ComparisonKey::new("A", "B", Dimension::Arousal).unwrap();
        let key2 = ComparisonKey::new("A", "C", Dimension::Arousal).unwrap();
        let mk = |k: &ComparisonKey, a: &str, w: &str| Judgment {
            key: k.clone(),
            annotator: a.into(),
            winner: w.into(),
            timestamp_ms: 0,
        };
        // key1 all "left"; key2 two "right" and one "left"
        let js = vec![
            mk(&key1, "1", "A"),
            mk(&key1, "2", "A"),
            mk(&key1, "3", "A"),
            mk(&key2, "1", "C"),
            mk(&key2, "2", "C"),
            mk(&key2, "3", "A"),
        ];
        let r = reliability(&js).unwrap();
        assert_eq!(r.unanimous_rate, 0.5);
        assert!((r.pairwise_rate - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.alpha - 0.375).abs() < 1e-12);

        let perfect = vec![
            mk(&key1, "1", "A"),
            mk(&key1, "2", "A"),
            mk(&key1, "3", "A"),
            mk(&key2, "1", "C"),
            mk(&key2, "2", "C"),
            mk(&key2, "3", "C"),
        ];
        let r = reliability(&perfect).unwrap();
        assert_eq!(
            (r.unanimous_rate, r.pairwise_rate, r.alpha),
            (1.0, 1.0, 1.0)
        );

        assert!(matches!(
            reliability(&js[..2]),
            Err(RankingError::WrongJudgmentCount { .. })
        ));
    }

    #[test]
    fn ranking_csv_layout() {
        let csv = ranking_csv(&ids(&["a", "b", "c"]));
        assert_eq!(csv, "rank,clip_id,rating\n1,a,1\n2,b,0\n3,c,-1\n");
    }

    #[test]
    fn kendall_tau_extremes() {
        let a = ids(&["a", "b", "c", "d"]);
        let mut r = a.clone();
        r.reverse();
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &r).unwrap(), -1.0);
        assert!(kendall_tau(&a, &ids(&["a", "b", "c", "e"])).is_err());
    }

    #[test]
    fn snapshot_round_trips_through_json() {
        let items = ids(&["a", "b", "c", "d"]);
        let mut s = RankingState::new(&items, Dimension::Valence, 9).unwrap();
        let key = s.pending_comparisons().into_iter().next().unwrap();
        vote(&mut s, &key, "u", key.left()).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        let back: RankingState = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }

    proptest! {
        #[test]
        fn rank_to_rating_strictly_decreasing(n in 2usize..500) {
            let r: Vec<f64> = (1..=n).map(|k| rank_to_rating(k, n).unwrap()).collect();
            prop_assert_eq!(r[0], 1.0);
            prop_assert_eq!(r[n - 1], -1.0);
            prop_assert!(r.windows(2).all(|w| w[0] > w[1]));
        }

        #[test]
        fn arbitrary_votes_terminate_in_a_permutation(n in 1usize..25, seed in any::<u64>(), bits in any::<u64>()) {
            let items: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
            let mut s = RankingState::new(&items, Dimension::Arousal, seed).unwrap();
            let mut b = bits;
            let mut rounds = 0;
            while !s.is_complete() {
                rounds += 1;
                prop_assert!(rounds <= n);
                for key in s.pending_comparisons() {
                    for a in ["x", "y", "z"] {
                        b = crate::rng::mix(b);
                        let w = if b & 1 == 0 { key.left() } else { key.right() }.to_string();
                        vote(&mut s, &key, a, &w).unwrap();
                    }
                    prop_assert_eq!(s.judgments_for(&key).len(), 3);
                }
            }
            let mut order = s.final_ranking().unwrap();
            order.sort();
            let mut sorted = items.clone();
            sorted.sort();
            prop_assert_eq!(order, sorted);
        }

        #[test]
        fn alpha_invariant_under_relabeling(units in proptest::collection::vec(proptest::collection::vec(any::<bool>(), 3), 1..20)) {
            let flipped: Vec<Vec<bool>> = units.iter().map(|u| u.iter().map(|x| !x).collect()).collect();
            let a = krippendorff_alpha_nominal(&units);
            let b = krippendorff_alpha_nominal(&flipped);
            prop_assert!(a == b || (a - b).abs() < 1e-12);
        }
    }
}
