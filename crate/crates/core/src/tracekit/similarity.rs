//! Ratcliff-Obershelp sequence similarity over characters, computed the way
//! a sequence matcher with the popularity heuristic disabled does.

use std::collections::HashMap;

/// `2M / (|a| + |b|)` where `M` counts characters in the recursive
/// longest-common-block decomposition. Not symmetric in general.
pub fn similarity_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let total = a.len() + b.len();
    if total == 0 {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / total as f64
}

/// Total size of the matching blocks.
pub fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut b2j: HashMap<char, Vec<usize>> = HashMap::new();
    for (j, c) in b.iter().enumerate() {
        b2j.entry(*c).or_default().push(j);
    }
    let mut matched = 0;
    let mut queue = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = queue.pop() {
        let (i, j, k) = longest_match(a, &b2j, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        matched += k;
        if alo < i && blo < j {
            queue.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            queue.push((i + k, ahi, j + k, bhi));
        }
    }
    matched
}

/// Longest block `a[i..i+k] == b[j..j+k]` inside the window; ties go to the
/// smallest `i`, then the smallest `j`.
fn longest_match(
    a: &[char],
    b2j: &HashMap<char, Vec<usize>>,
    alo: usize,
    ahi: usize,
    blo: usize,
    bhi: usize,
) -> (usize, usize, usize) {
    let (mut besti, mut bestj, mut bestk) = (alo, blo, 0);
    // j2len[j + 1] = length of the match ending at a[i - 1], b[j]
    let mut j2len: HashMap<usize, usize> = HashMap::new();
    for (i, c) in a.iter().enumerate().take(ahi).skip(alo) {
        let mut next: HashMap<usize, usize> = HashMap::new();
        if let Some(js) = b2j.get(c) {
            for &j in js {
                if j < blo {
                    continue;
                }
                if j >= bhi {
                    break;
                }
                let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                next.insert(j, k);
                if k > bestk {
                    besti = i + 1 - k;
                    bestj = j + 1 - k;
                    bestk = k;
                }
            }
        }
        j2len = next;
    }
    (besti, bestj, bestk)
}

#[cfg(test)]
mod tests {
    use super::*;

    const EPS: f64 = 1e-12;

    #[test]
    fn hand_derived_values() {
        assert_eq!(similarity_ratio("abc", "abc"), 1.0);
        assert_eq!(similarity_ratio("", "x"), 0.0);
        assert_eq!(similarity_ratio("", ""), 1.0);
        assert!((similarity_ratio("abc", "abd") - 4.0 / 6.0).abs() < 1e-9);
    }

    // Reference values produced by difflib.SequenceMatcher(None, a, b, autojunk=False).ratio().
    #[test]
    fn matches_reference_matcher() {
        let cases: &[(&str, &str, f64, f64)] = &[
            ("kitten", "sitting", 0.6153846153846154, 0.6153846153846154),
            ("abcd", "bcda", 0.75, 0.75),
            ("The quick brown fox", "The quack brown box", 0.8947368421052632, 0.8947368421052632),
            ("aaaa", "aa", 0.6666666666666666, 0.6666666666666666),
            ("print(x)\nfinish()", "print(y)\n finish()", 0.9142857142857143, 0.9142857142857143),
            ("qabxcd", "abycdf", 0.6666666666666666, 0.6666666666666666),
            ("aac", "abcabca", 0.6, 0.4),
            ("abbcaba", "abbabcca", 0.6666666666666666, 0.8),
            ("bcbcb", "abacbbc", 0.3333333333333333, 0.6666666666666666),
        ];
        for &(a, b, ab, ba) in cases {
            assert!((similarity_ratio(a, b) - ab).abs() < EPS, "{a:?} {b:?}");
            assert!((similarity_ratio(b, a) - ba).abs() < EPS, "{b:?} {a:?}");
        }
        let long_a = format!("{}c", "ab".repeat(30));
        let long_b = "ba".repeat(30);
        assert!((similarity_ratio(&long_a, &long_b) - 0.9752066115702479).abs() < EPS);
        let xa = format!("{}{}", "x".repeat(300), "y".repeat(250));
        let xb = format!("{}{}", "y".repeat(200), "x".repeat(310));
        assert!((similarity_ratio(&xa, &xb) - 0.5660377358490566).abs() < EPS);
    }

    #[test]
    fn ratio_bounded() {
        for (a, b) in [("a", "b"), ("hello", "hallo world"), ("żółw", "żółty")] {
            let r = similarity_ratio(a, b);
            assert!((0.0..=1.0).contains(&r));
        }
    }
}
