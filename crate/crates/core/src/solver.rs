//! Exact reference solvers for the allowed-class-restricted 0/1 knapsack.
//!
//! Both solvers share one tie-breaking rule so their outputs are comparable
//! item-for-item: maximise total value, then minimise total weight, then take
//! the lexicographically smallest sorted id list.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::instgen::Item;

/// Allowed items per instance above which exhaustive enumeration is refused.
pub const BRUTEFORCE_MAX_ITEMS: usize = 22;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SolverError {
    #[error("too many allowed items for enumeration: {count} > {max}")]
    TooManyItems { count: usize, max: usize },
}

/// Optimal item set with its totals. Never shown to agents.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReferenceSolution {
    /// Sorted ids of the chosen items.
    pub item_ids: Vec<String>,
    pub total_value: u64,
    pub total_weight: u64,
}

impl ReferenceSolution {
    pub fn empty() -> Self {
        Self { item_ids: Vec::new(), total_value: 0, total_weight: 0 }
    }
}

/// Borrowed view of the data a solver needs.
#[derive(Debug, Clone, Copy)]
pub struct ProblemView<'a> {
    pub items: &'a [Item],
    pub capacity: u64,
    pub allowed_classes: &'a [String],
}

impl<'a> ProblemView<'a> {
    /// Allowed-class items, sorted by id.
    fn candidates(&self) -> Vec<&'a Item> {
        let mut out: Vec<&Item> = self.items.iter().filter(|it| self.allowed_classes.contains(&it.class)).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Best {
    value: u64,
    weight: u64,
}

impl Best {
    fn better_than(self, other: Best) -> bool {
        self.value > other.value || (self.value == other.value && self.weight < other.weight)
    }
}

/// Dynamic program over the capacity dimension, O(N·C) time and space.
///
/// `table[i][c]` is the best (value, weight) achievable using candidates
/// `i..` under capacity `c`. Reconstruction walks candidates in id order and
/// takes an item whenever some optimal completion contains it, which yields
/// the lexicographically smallest optimal id list.
pub fn solve_dp(problem: &ProblemView<'_>) -> ReferenceSolution {
    let items = problem.candidates();
    let cap = problem.capacity as usize;
    let n = items.len();
    if n == 0 || cap == 0 {
        return ReferenceSolution::empty();
    }
    let zero = Best { value: 0, weight: 0 };
    let mut table = vec![vec![zero; cap + 1]; n + 1];
    for i in (0..n).rev() {
        let w = items[i].weight as usize;
        let v = items[i].value;
        for c in 0..=cap {
            let skip = table[i + 1][c];
            let mut best = skip;
            if w <= c {
                let rest = table[i + 1][c - w];
                let take = Best { value: rest.value + v, weight: rest.weight + w as u64 };
                if take.better_than(best) {
                    best = take;
                }
            }
            table[i][c] = best;
        }
    }

    let mut ids = Vec::new();
    let mut c = cap;
    let target = table[0][cap];
    for (i, item) in items.iter().enumerate() {
        let w = item.weight as usize;
        if w <= c {
            let rest = table[i + 1][c - w];
            let want = table[i][c];
            if rest.value + item.value == want.value && rest.weight + w as u64 == want.weight {
                ids.push(item.id.clone());
                c -= w;
            }
        }
    }
    ReferenceSolution { item_ids: ids, total_value: target.value, total_weight: target.weight }
}

/// Exhaustive enumeration over all subsets of allowed items. Test oracle.
pub fn solve_bruteforce(problem: &ProblemView<'_>) -> Result<ReferenceSolution, SolverError> {
    let items = problem.candidates();
    if items.len() > BRUTEFORCE_MAX_ITEMS {
        return Err(SolverError::TooManyItems { count: items.len(), max: BRUTEFORCE_MAX_ITEMS });
    }
    let mut best = ReferenceSolution::empty();
    for mask in 0u32..(1u32 << items.len()) {
        let mut value = 0;
        let mut weight = 0;
        for (i, item) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                value += item.value;
                weight += item.weight;
            }
        }
        if weight > problem.capacity {
            continue;
        }
        let better = value > best.total_value
            || (value == best.total_value && weight < best.total_weight)
            || (value == best.total_value && weight == best.total_weight && {
                let ids = subset_ids(&items, mask);
                ids < best.item_ids
            });
        if better {
            best = ReferenceSolution { item_ids: subset_ids(&items, mask), total_value: value, total_weight: weight };
        }
    }
    Ok(best)
}

fn subset_ids(items: &[&Item], mask: u32) -> Vec<String> {
    items.iter().enumerate().filter(|(i, _)| mask & (1 << i) != 0).map(|(_, it)| it.id.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn item(id: &str, weight: u64, value: u64, class: &str) -> Item {
        Item { id: id.into(), weight, value, class: class.into() }
    }

    fn view<'a>(items: &'a [Item], capacity: u64, allowed: &'a [String]) -> ProblemView<'a> {
        ProblemView { items, capacity, allowed_classes: allowed }
    }

    #[test]
    fn zero_capacity_is_empty() {
        let items = vec![item("item_a", 1, 5, "A")];
        let allowed = vec!["A".to_string()];
        assert_eq!(solve_dp(&view(&items, 0, &allowed)), ReferenceSolution::empty());
    }

    #[test]
    fn single_feasible_item() {
        let items = vec![item("item_a", 3, 10, "A")];
        let allowed = vec!["A".to_string()];
        let sol = solve_dp(&view(&items, 5, &allowed));
        assert_eq!(sol.item_ids, vec!["item_a"]);
        assert_eq!((sol.total_value, sol.total_weight), (10, 3));
    }

    #[test]
    fn three_item_enumeration() {
        // Subsets under C=5: {w2,w3} gives value 7, every other feasible subset is worse.
        let items = vec![item("w2", 2, 3, "A"), item("w3", 3, 4, "A"), item("w4", 4, 5, "A")];
        let allowed = vec!["A".to_string()];
        let p = view(&items, 5, &allowed);
        let bf = solve_bruteforce(&p).unwrap();
        assert_eq!(bf.total_value, 7);
        assert_eq!(bf.item_ids, vec!["w2", "w3"]);
        assert_eq!(solve_dp(&p), bf);
    }

    #[test]
    fn no_allowed_items() {
        let items = vec![item("a", 1, 1, "Z")];
        let allowed = vec!["A".to_string()];
        let p = view(&items, 10, &allowed);
        assert_eq!(solve_bruteforce(&p).unwrap(), ReferenceSolution::empty());
        assert_eq!(solve_dp(&p), ReferenceSolution::empty());
        let none: Vec<Item> = Vec::new();
        assert_eq!(solve_bruteforce(&view(&none, 10, &allowed)).unwrap(), ReferenceSolution::empty());
    }

    #[test]
    fn ties_prefer_lighter_then_smaller_ids() {
        // {a} and {b,c} both reach value 10; {a} is heavier so {b,c} wins.
        let items = vec![item("a", 5, 10, "A"), item("b", 2, 5, "A"), item("c", 2, 5, "A")];
        let allowed = vec!["A".to_string()];
        let p = view(&items, 5, &allowed);
        assert_eq!(solve_dp(&p).item_ids, vec!["b", "c"]);
        assert_eq!(solve_bruteforce(&p).unwrap().item_ids, vec!["b", "c"]);
        // Identical items: smallest id list wins.
        let items = vec![item("z", 2, 5, "A"), item("y", 2, 5, "A"), item("x", 2, 5, "A")];
        let p = view(&items, 4, &allowed);
        assert_eq!(solve_dp(&p).item_ids, vec!["x", "y"]);
        assert_eq!(solve_bruteforce(&p).unwrap().item_ids, vec!["x", "y"]);
    }

    #[test]
    fn enumeration_guard() {
        let items: Vec<Item> = (0..23).map(|i| item(&format!("i{i:02}"), 1, 1, "A")).collect();
        let allowed = vec!["A".to_string()];
        assert_eq!(solve_bruteforce(&view(&items, 5, &allowed)), Err(SolverError::TooManyItems { count: 23, max: 22 }));
    }

    fn arb_items() -> impl Strategy<Value = Vec<(u64, u64, u8)>> {
        prop::collection::vec((1u64..20, 1u64..60, 0u8..3), 0..13)
    }

    fn build(raw: &[(u64, u64, u8)]) -> Vec<Item> {
        raw.iter()
            .enumerate()
            .map(|(i, &(w, v, c))| item(&format!("item_{i:02}"), w, v, ["A", "B", "C"][c as usize]))
            .collect()
    }

    proptest! {
        #[test]
        fn dp_matches_enumeration(raw in arb_items(), cap in 0u64..80) {
            let items = build(&raw);
            let allowed = vec!["A".to_string(), "B".to_string()];
            let p = view(&items, cap, &allowed);
            let dp = solve_dp(&p);
            let bf = solve_bruteforce(&p).unwrap();
            prop_assert_eq!(&dp, &bf);
            prop_assert!(dp.total_weight <= cap);
        }

        #[test]
        fn capacity_monotone(raw in arb_items(), cap in 0u64..80, extra in 0u64..20) {
            let items = build(&raw);
            let allowed = vec!["A".to_string(), "C".to_string()];
            let lo = solve_dp(&view(&items, cap, &allowed)).total_value;
            let hi = solve_dp(&view(&items, cap + extra, &allowed)).total_value;
            prop_assert!(hi >= lo);
        }

        #[test]
        fn value_scaling(raw in arb_items(), cap in 0u64..80, k in 1u64..7) {
            let items = build(&raw);
            let scaled: Vec<Item> = items.iter().map(|it| Item { value: it.value * k, ..it.clone() }).collect();
            let allowed = vec!["A".to_string(), "B".to_string(), "C".to_string()];
            let base = solve_dp(&view(&items, cap, &allowed));
            let s = solve_dp(&view(&scaled, cap, &allowed));
            prop_assert_eq!(s.total_value, base.total_value * k);
            prop_assert_eq!(s.item_ids, base.item_ids);
        }
    }
}
