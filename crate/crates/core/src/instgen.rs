//! Procedural Opaque Knapsack instance generation.
//!
//! A candidate is sampled from a [`DifficultyConfig`], solved exactly, and
//! kept only if its optimum is non-degenerate. Accepted candidates receive an
//! inspection budget derived from capacity, item mix and optimum size.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::solver::{solve_dp, ProblemView, ReferenceSolution};

#[derive(Debug, Error, PartialEq)]
pub enum InstgenError {
    #[error("invalid difficulty config: {0}")]
    InvalidConfig(String),
    #[error("infeasible candidate: no allowed-class items")]
    Infeasible,
    #[error("generation exhausted after {attempts} candidates")]
    GenerationExhausted { attempts: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Hard,
}

impl Difficulty {
    pub fn as_str(self) -> &'static str {
        match self {
            Difficulty::Easy => "easy",
            Difficulty::Hard => "hard",
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty {other:?}")),
        }
    }
}

/// Sampling ranges and budget constants for one difficulty bucket.
/// Integer ranges are inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyConfig {
    pub name: Difficulty,
    pub item_count_range: (u32, u32),
    pub weight_range: (u64, u64),
    pub value_range: (u64, u64),
    pub class_universe_size: u32,
    pub allowed_class_count: u32,
    pub capacity_fraction_range: (f64, f64),
    pub safety_margin: f64,
    pub floor_multiplier: f64,
    pub min_budget: u32,
    pub max_attempts: u64,
}

impl DifficultyConfig {
    pub fn easy() -> Self {
        Self {
            name: Difficulty::Easy,
            item_count_range: (25, 40),
            weight_range: (5, 20),
            value_range: (10, 100),
            class_universe_size: 15,
            allowed_class_count: 3,
            capacity_fraction_range: (0.35, 0.5),
            safety_margin: 1.25,
            floor_multiplier: 1.5,
            min_budget: 5,
            max_attempts: 10_000,
        }
    }

    pub fn hard() -> Self {
        Self {
            name: Difficulty::Hard,
            item_count_range: (80, 120),
            weight_range: (5, 50),
            value_range: (10, 500),
            class_universe_size: 26,
            allowed_class_count: 5,
            capacity_fraction_range: (0.4, 0.6),
            ..Self::easy()
        }
    }

    pub fn for_difficulty(d: Difficulty) -> Self {
        match d {
            Difficulty::Easy => Self::easy(),
            Difficulty::Hard => Self::hard(),
        }
    }

    pub fn validate(&self) -> Result<(), InstgenError> {
        let bad = |msg: &str| Err(InstgenError::InvalidConfig(msg.to_string()));
        let (nlo, nhi) = self.item_count_range;
        let (wlo, whi) = self.weight_range;
        let (vlo, vhi) = self.value_range;
        let (flo, fhi) = self.capacity_fraction_range;
        if nlo == 0 || nlo > nhi {
            return bad("item_count_range");
        }
        if wlo == 0 || wlo > whi {
            return bad("weight_range");
        }
        if vlo == 0 || vlo > vhi {
            return bad("value_range");
        }
        if self.class_universe_size == 0 || self.class_universe_size > 26 {
            return bad("class_universe_size must be in 1..=26");
        }
        if self.allowed_class_count == 0 || self.allowed_class_count > self.class_universe_size {
            return bad("allowed_class_count");
        }
        if !(flo > 0.0 && flo <= fhi && fhi < 1.0) {
            return bad("capacity_fraction_range must lie in (0,1)");
        }
        if !(self.safety_margin > 0.0 && self.floor_multiplier >= 1.0) {
            return bad("budget constants");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub weight: u64,
    pub value: u64,
    pub class: String,
}

/// A sampled instance that has not yet been given an inspection budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub items: Vec<Item>,
    pub capacity: u64,
    pub class_universe: Vec<String>,
    pub allowed_classes: Vec<String>,
    pub capacity_fraction: f64,
}

impl Candidate {
    pub fn view(&self) -> ProblemView<'_> {
        ProblemView { items: &self.items, capacity: self.capacity, allowed_classes: &self.allowed_classes }
    }

    fn is_allowed(&self, item: &Item) -> bool {
        self.allowed_classes.contains(&item.class)
    }
}

/// On-disk instance document. Carries hidden attributes for the environment;
/// agents only ever see it through the tool API.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub capacity: u64,
    pub inspection_budget: u32,
    pub class_universe: Vec<String>,
    pub allowed_classes: Vec<String>,
    pub items: Vec<Item>,
}

impl Instance {
    pub fn view(&self) -> ProblemView<'_> {
        ProblemView { items: &self.items, capacity: self.capacity, allowed_classes: &self.allowed_classes }
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.items.iter().find(|it| it.id == id)
    }
}

/// Sidecar file holding the reference optimum for one instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSidecar {
    pub instance_id: String,
    pub optimal_value: u64,
    pub optimal_weight: u64,
    pub optimal_item_ids: Vec<String>,
}

impl ReferenceSidecar {
    pub fn new(instance_id: &str, sol: &ReferenceSolution) -> Self {
        Self {
            instance_id: instance_id.to_string(),
            optimal_value: sol.total_value,
            optimal_weight: sol.total_weight,
            optimal_item_ids: sol.item_ids.clone(),
        }
    }

    pub fn solution(&self) -> ReferenceSolution {
        ReferenceSolution {
            item_ids: self.optimal_item_ids.clone(),
            total_value: self.optimal_value,
            total_weight: self.optimal_weight,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Infeasible,
    TooSmallSolution,
    Dominated,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionStats {
    pub candidates_tried: u64,
    pub rejections_by_reason: BTreeMap<RejectReason, u64>,
}

impl RejectionStats {
    pub fn rejected(&self) -> u64 {
        self.rejections_by_reason.values().sum()
    }
}

/// Output of a successful generation run.
#[derive(Debug, Clone)]
pub struct Generated {
    pub instance: Instance,
    pub reference: ReferenceSolution,
    pub stats: RejectionStats,
}

/// Symbols `A`, `B`, ... used as class labels.
pub fn class_universe(size: u32) -> Vec<String> {
    (0..size).map(|i| char::from(b'A' + i as u8).to_string()).collect()
}

/// Draws one candidate. Degenerate draws are left to [`check_structural`].
pub fn sample_candidate<R: Rng + ?Sized>(config: &DifficultyConfig, rng: &mut R) -> Candidate {
    let universe = class_universe(config.class_universe_size);
    let mut picked: Vec<usize> = index::sample(rng, universe.len(), config.allowed_class_count as usize).into_vec();
    picked.sort_unstable();
    let allowed: Vec<String> = picked.iter().map(|&i| universe[i].clone()).collect();

    let n = rng.random_range(config.item_count_range.0..=config.item_count_range.1);
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let id = loop {
            let id = format!("item_{:08x}", rng.random::<u32>());
            if seen.insert(id.clone()) {
                break id;
            }
        };
        let weight = rng.random_range(config.weight_range.0..=config.weight_range.1);
        let value = rng.random_range(config.value_range.0..=config.value_range.1);
        let class = universe[rng.random_range(0..universe.len())].clone();
        items.push(Item { id, weight, value, class });
    }

    let (flo, fhi) = config.capacity_fraction_range;
    let fraction = rng.random_range(flo..=fhi);
    let allowed_weight: u64 = items.iter().filter(|it| allowed.contains(&it.class)).map(|it| it.weight).sum();
    let capacity = (fraction * allowed_weight as f64).floor() as u64;

    Candidate { items, capacity, class_universe: universe, allowed_classes: allowed, capacity_fraction: fraction }
}

/// Structural acceptance test on a solved candidate.
///
/// Checks run feasibility, then minimum optimum size, then anti-dominance; the
/// first failure is reported.
pub fn check_structural(candidate: &Candidate, refsol: &ReferenceSolution) -> Result<(), RejectReason> {
    let min_allowed_weight = candidate.items.iter().filter(|it| candidate.is_allowed(it)).map(|it| it.weight).min();
    match min_allowed_weight {
        Some(w) if candidate.capacity >= w => {}
        _ => return Err(RejectReason::Infeasible),
    }
    if refsol.item_ids.len() < 3 {
        return Err(RejectReason::TooSmallSolution);
    }
    let top = refsol
        .item_ids
        .iter()
        .filter_map(|id| candidate.items.iter().find(|it| &it.id == id))
        .map(|it| it.value)
        .max()
        .unwrap_or(0);
    // "more than 40%" rejects; exactly 40% passes. Integer form avoids float error.
    if top * 100 > refsol.total_value * 40 {
        return Err(RejectReason::Dominated);
    }
    Ok(())
}

/// Inspection budget for an accepted candidate.
pub fn derive_budget(
    candidate: &Candidate,
    refsol: &ReferenceSolution,
    config: &DifficultyConfig,
) -> Result<u32, InstgenError> {
    let n = candidate.items.len() as u64;
    let allowed = candidate.items.iter().filter(|it| candidate.is_allowed(it)).count() as u64;
    if allowed == 0 || n == 0 {
        return Err(InstgenError::Infeasible);
    }
    let total_weight: u64 = candidate.items.iter().map(|it| it.weight).sum();
    // (C / mean_w) / p_valid * margin, with mean_w = W/N and p_valid = allowed/N.
    let raw = (candidate.capacity as f64 * (n * n) as f64 * config.safety_margin
        / (total_weight as f64 * allowed as f64))
        .ceil() as u64;
    let floor = (config.floor_multiplier * refsol.item_ids.len() as f64).ceil() as u64;
    let budget = raw.max(floor).max(config.min_budget as u64).min(n);
    Ok(budget as u32)
}

/// Rejection-sampling loop producing one accepted instance.
pub fn generate_instance<R: Rng + ?Sized>(
    config: &DifficultyConfig,
    rng: &mut R,
    instance_id: &str,
    seed: u64,
) -> Result<Generated, InstgenError> {
    config.validate()?;
    let mut stats = RejectionStats::default();
    while stats.candidates_tried < config.max_attempts {
        stats.candidates_tried += 1;
        let candidate = sample_candidate(config, rng);
        let refsol = solve_dp(&candidate.view());
        if let Err(reason) = check_structural(&candidate, &refsol) {
            *stats.rejections_by_reason.entry(reason).or_insert(0) += 1;
            continue;
        }
        let inspection_budget = derive_budget(&candidate, &refsol, config)?;
        let instance = Instance {
            instance_id: instance_id.to_string(),
            difficulty: config.name,
            seed,
            capacity: candidate.capacity,
            inspection_budget,
            class_universe: candidate.class_universe,
            allowed_classes: candidate.allowed_classes,
            items: candidate.items,
        };
        return Ok(Generated { instance, reference: refsol, stats });
    }
    Err(InstgenError::GenerationExhausted { attempts: stats.candidates_tried })
}

/// Generates the instance for `seed` from its own ChaCha stream.
pub fn generate_seeded(config: &DifficultyConfig, seed: u64) -> Result<Generated, InstgenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let id = format!("{}_{seed}", config.name);
    generate_instance(config, &mut rng, &id, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, weight: u64, value: u64, class: &str) -> Item {
        Item { id: id.into(), weight, value, class: class.into() }
    }

    fn candidate(items: Vec<Item>, capacity: u64) -> Candidate {
        Candidate {
            items,
            capacity,
            class_universe: class_universe(3),
            allowed_classes: vec!["A".into()],
            capacity_fraction: 0.5,
        }
    }

    #[test]
    fn easy_sample_shape() {
        let cfg = DifficultyConfig::easy();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let c = sample_candidate(&cfg, &mut rng);
            assert!((25..=40).contains(&c.items.len()));
            assert_eq!(c.allowed_classes.len(), 3);
            assert!(c.items.iter().all(|it| (5..=20).contains(&it.weight) && (10..=100).contains(&it.value)));
            let ids: HashSet<_> = c.items.iter().map(|it| &it.id).collect();
            assert_eq!(ids.len(), c.items.len());
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = DifficultyConfig::easy();
        let a = serde_json::to_string(&generate_seeded(&cfg, 7).unwrap().instance).unwrap();
        let b = serde_json::to_string(&generate_seeded(&cfg, 7).unwrap().instance).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_allowed_items_rejected_infeasible() {
        let c = candidate(vec![item("x", 5, 10, "B"), item("y", 6, 10, "C")], 0);
        let sol = solve_dp(&c.view());
        assert_eq!(c.capacity, 0);
        assert_eq!(check_structural(&c, &sol), Err(RejectReason::Infeasible));
        assert_eq!(derive_budget(&c, &sol, &DifficultyConfig::easy()), Err(InstgenError::Infeasible));
    }

    #[test]
    fn structural_checks() {
        let two = candidate(vec![item("a", 5, 50, "A"), item("b", 5, 50, "A"), item("c", 50, 50, "A")], 10);
        let sol = solve_dp(&two.view());
        assert_eq!(sol.item_ids.len(), 2);
        assert_eq!(check_structural(&two, &sol), Err(RejectReason::TooSmallSolution));

        let dom = candidate(vec![item("a", 1, 50, "A"), item("b", 1, 30, "A"), item("c", 1, 20, "A")], 3);
        let sol = solve_dp(&dom.view());
        assert_eq!(sol.total_value, 100);
        assert_eq!(check_structural(&dom, &sol), Err(RejectReason::Dominated));

        let edge = candidate(vec![item("a", 1, 40, "A"), item("b", 1, 35, "A"), item("c", 1, 25, "A")], 3);
        let sol = solve_dp(&edge.view());
        assert_eq!(check_structural(&edge, &sol), Ok(()));
    }

    #[test]
    fn budget_formula_worked_example() {
        // N=30, 10 allowed, C=60, mean weight 12, |S*|=4:
        // ceil(60/12 * 3 * 1.25) = ceil(18.75) = 19; floor ceil(1.5*4) = 6.
        let mut items = Vec::new();
        for i in 0..30 {
            let class = if i < 10 { "A" } else { "B" };
            items.push(item(&format!("i{i:02}"), 12, 10, class));
        }
        let c = candidate(items, 60);
        let sol = ReferenceSolution {
            item_ids: vec!["i00".into(), "i01".into(), "i02".into(), "i03".into()],
            total_value: 40,
            total_weight: 48,
        };
        assert_eq!(derive_budget(&c, &sol, &DifficultyConfig::easy()).unwrap(), 19);
    }

    #[test]
    fn budget_clamps() {
        let items = vec![
            item("a", 10, 10, "A"),
            item("b", 10, 10, "A"),
            item("c", 10, 10, "A"),
            item("d", 10, 10, "A"),
            item("e", 10, 10, "A"),
            item("f", 10, 10, "A"),
        ];
        let tiny = candidate(items.clone(), 10);
        let one = ReferenceSolution { item_ids: vec!["a".into()], total_value: 10, total_weight: 10 };
        // raw = ceil(1 * 1 * 1.25) = 2 -> raised to the minimum of five.
        assert_eq!(derive_budget(&tiny, &one, &DifficultyConfig::easy()).unwrap(), 5);
        // raw = ceil(6 * 1.25) = 8 > N = 6 -> clamped to N.
        let big = candidate(items, 60);
        assert_eq!(derive_budget(&big, &one, &DifficultyConfig::easy()).unwrap(), 6);
    }

    #[test]
    fn degenerate_config_terminates() {
        let cfg = DifficultyConfig {
            class_universe_size: 1,
            allowed_class_count: 1,
            value_range: (10, 10),
            max_attempts: 50,
            ..DifficultyConfig::easy()
        };
        match generate_seeded(&cfg, 3) {
            Ok(g) => assert!(check_structural_instance(&g)),
            Err(e) => assert_eq!(e, InstgenError::GenerationExhausted { attempts: 50 }),
        }
    }

    fn check_structural_instance(g: &Generated) -> bool {
        g.reference.item_ids.len() >= 3
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = DifficultyConfig::easy();
        cfg.allowed_class_count = 16;
        assert!(matches!(cfg.validate(), Err(InstgenError::InvalidConfig(_))));
        let mut cfg = DifficultyConfig::easy();
        cfg.capacity_fraction_range = (0.6, 0.5);
        assert!(cfg.validate().is_err());
        assert!(DifficultyConfig::hard().validate().is_ok());
    }

    #[test]
    fn stats_account_for_every_candidate() {
        let g = generate_seeded(&DifficultyConfig::hard(), 11).unwrap();
        assert_eq!(g.stats.candidates_tried, 1 + g.stats.rejected());
        assert_eq!(g.instance.allowed_classes.len(), 5);
        assert_eq!(g.instance.class_universe.len(), 26);
    }
}
