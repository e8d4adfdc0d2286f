//! Coverage AUC, Wilcoxon rank-sum, Holm-Bonferroni and Vargha-Delaney A12.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

/// Largest combined sample size handled by exact enumeration.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("empty coverage vector")]
    Empty,
    #[error("need at least {need} {what}, got {got}")]
    Insufficient {
        what: &'static str,
        need: usize,
        got: usize,
    },
}

/// Trapezoidal area under a per-step curve, unit step width.
pub fn auc(curve: &[f64]) -> Result<f64, StatsError> {
    if curve.is_empty() {
        return Err(StatsError::Empty);
    }
    Ok(curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum())
}

/// Midranks (1-based) of `values`.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PMethod {
    Exact,
    Normal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSum {
    /// Rank sum of the first sample.
    pub w: f64,
    pub p_value: f64,
    pub method: PMethod,
}

/// Two-sided Wilcoxon rank-sum test; exact for small samples.
pub fn wilcoxon_rank_sum(xs: &[f64], ys: &[f64]) -> RankSum {
    if xs.len() + ys.len() <= EXACT_LIMIT {
        rank_sum_exact(xs, ys)
    } else {
        rank_sum_normal(xs, ys)
    }
}

pub fn rank_sum_exact(xs: &[f64], ys: &[f64]) -> RankSum {
    let (n, m) = (xs.len(), ys.len());
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    // midranks are multiples of 1/2, so doubled ranks are exact integers
    let doubled: Vec<usize> = ranks.iter().map(|r| (2.0 * r).round() as usize).collect();
    let w2: usize = doubled[..n].iter().sum();
    let total2: usize = doubled.iter().sum();
    // centre of the null distribution of 2W is n * total2 / N; compare
    // deviations scaled by N to stay in integers
    let big_n = (n + m) as i128;
    let dev = |s: usize| (s as i128 * big_n - n as i128 * total2 as i128).abs();
    let observed = dev(w2);

    // counts[k][s]: subsets of size k with doubled-rank sum s
    let mut counts = vec![vec![0u64; total2 + 1]; n + 1];
    counts[0][0] = 1;
    for &r in &doubled {
        for k in (1..=n).rev() {
            for s in (r..=total2).rev() {
                counts[k][s] += counts[k - 1][s - r];
            }
        }
    }
    let all: u64 = counts[n].iter().sum();
    let extreme: u64 = counts[n]
        .iter()
        .enumerate()
        .filter(|(s, _)| dev(*s) >= observed)
        .map(|(_, c)| *c)
        .sum();
    RankSum {
        w: w2 as f64 / 2.0,
        p_value: extreme as f64 / all as f64,
        method: PMethod::Exact,
    }
}

pub fn rank_sum_normal(xs: &[f64], ys: &[f64]) -> RankSum {
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let pooled: Vec<f64> = xs.iter().chain(ys).copied().collect();
    let ranks = midranks(&pooled);
    let w: f64 = ranks[..xs.len()].iter().sum();
    let big_n = n + m;
    let mu = n * (big_n + 1.0) / 2.0;
    let mut ties = 0.0;
    let mut sorted = pooled.clone();
    sorted.sort_by(f64::total_cmp);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&v| v == sorted[i]).count();
        let t = j as f64;
        ties += t * t * t - t;
        i += j;
    }
    let var = n * m / 12.0 * ((big_n + 1.0) - ties / (big_n * (big_n - 1.0)));
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = ((w - mu).abs() - 0.5).max(0.0) / var.sqrt();
        let phi = Normal::new(0.0, 1.0).expect("standard normal").cdf(z);
        (2.0 * (1.0 - phi)).min(1.0)
    };
    RankSum {
        w,
        p_value,
        method: PMethod::Normal,
    }
}

/// Holm-Bonferroni step-down: rejection flags in input order.
pub fn holm_bonferroni(p_values: &[f64], alpha: f64) -> Vec<bool> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut reject = vec![false; m];
    for (i, &k) in order.iter().enumerate() {
        if p_values[k] <= alpha / (m - i) as f64 {
            reject[k] = true;
        } else {
            break;
        }
    }
    reject
}

/// Holm-adjusted p-values in input order.
pub fn holm_adjusted(p_values: &[f64]) -> Vec<f64> {
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]).then(a.cmp(&b)));
    let mut adjusted = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (i, &k) in order.iter().enumerate() {
        running = running.max(((m - i) as f64 * p_values[k]).min(1.0));
        adjusted[k] = running;
    }
    adjusted
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Magnitude {
    #[serde(rename = "N")]
    Negligible,
    #[serde(rename = "S")]
    Small,
    #[serde(rename = "M")]
    Medium,
    #[serde(rename = "L")]
    Large,
}

impl Magnitude {
    pub fn of(a12: f64) -> Self {
        // thresholds on the folded value, with slack for 0.71 - 0.5 != 0.21
        let a = a12.max(1.0 - a12) + 1e-12;
        if a >= 0.71 {
            Magnitude::Large
        } else if a >= 0.64 {
            Magnitude::Medium
        } else if a >= 0.56 {
            Magnitude::Small
        } else {
            Magnitude::Negligible
        }
    }

    pub fn letter(self) -> &'static str {
        match self {
            Magnitude::Negligible => "N",
            Magnitude::Small => "S",
            Magnitude::Medium => "M",
            Magnitude::Large => "L",
        }
    }
}

/// Vargha-Delaney A12: probability that a draw from `xs` beats one from
/// `ys`, ties counting half.
pub fn a12(xs: &[f64], ys: &[f64]) -> (f64, Magnitude) {
    let mut wins = 0.0;
    for x in xs {
        for y in ys {
            if x > y {
                wins += 1.0;
            } else if x == y {
                wins += 0.5;
            }
        }
    }
    let value = wins / (xs.len() * ys.len()) as f64;
    (value, Magnitude::of(value))
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation (n - 1 denominator); 0 for a single value.
pub fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mu = mean(xs);
    (xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub name: String,
    pub runs: usize,
    pub mean_auc: f64,
    pub std_auc: f64,
    pub aucs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairComparison {
    pub other: String,
    pub p_value: f64,
    pub method: PMethod,
    pub p_holm: f64,
    pub significant: bool,
    /// A12 of the winner against `other`; only for significant pairs.
    pub a12: Option<f64>,
    pub magnitude: Option<Magnitude>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub alpha: f64,
    pub winner: String,
    pub algorithms: Vec<AlgorithmSummary>,
    pub comparisons: Vec<PairComparison>,
}

impl ComparisonReport {
    /// Compact effect-size column, e.g. `L(random), M(q_learning)`.
    pub fn effect_column(&self) -> String {
        let mut by_mag: BTreeMap<std::cmp::Reverse<Magnitude>, Vec<&str>> = BTreeMap::new();
        for c in &self.comparisons {
            if let Some(m) = c.magnitude {
                if m != Magnitude::Negligible {
                    by_mag
                        .entry(std::cmp::Reverse(m))
                        .or_default()
                        .push(&c.other);
                }
            }
        }
        if by_mag.is_empty() {
            return "-".into();
        }
        by_mag
            .iter()
            .map(|(m, names)| format!("{}({})", m.0.letter(), names.join(", ")))
            .collect::<Vec<_>>()
            .join(", ")
    }

    pub fn comparison(&self, other: &str) -> Option<&PairComparison> {
        self.comparisons.iter().find(|c| c.other == other)
    }

    pub fn summary(&self, name: &str) -> Option<&AlgorithmSummary> {
        self.algorithms.iter().find(|a| a.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<24} {:>6} {:>12} {:>12}\n",
            "algorithm", "runs", "mean AUC", "sd"
        ));
        for a in &self.algorithms {
            let mark = if a.name == self.winner { " *" } else { "" };
            out.push_str(&format!(
                "{:<24} {:>6} {:>12.1} {:>12.1}{mark}\n",
                a.name, a.runs, a.mean_auc, a.std_auc
            ));
        }
        out.push_str(&format!(
            "\nwinner: {} (alpha {})\n",
            self.winner, self.alpha
        ));
        for c in &self.comparisons {
            let effect = match (c.a12, c.magnitude) {
                (Some(v), Some(m)) => format!("A12 {v:.3} {}", m.letter()),
                _ => "-".to_string(),
            };
            out.push_str(&format!(
                "  vs {:<20} p {:.3e} holm {:.3e} {} {}\n",
                c.other,
                c.p_value,
                c.p_holm,
                if c.significant { "significant" } else { "n.s." },
                effect
            ));
        }
        out.push_str(&format!("effect size: {}\n", self.effect_column()));
        out
    }
}

/// Winner by mean AUC (ties broken by name), tested against every other
/// algorithm with Holm correction over the family.
pub fn compare(
    groups: &BTreeMap<String, Vec<f64>>,
    alpha: f64,
) -> Result<ComparisonReport, StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::Insufficient {
            what: "algorithms",
            need: 2,
            got: groups.len(),
        });
    }
    if let Some(small) = groups.values().map(Vec::len).min().filter(|&n| n < 2) {
        return Err(StatsError::Insufficient {
            what: "runs per algorithm",
            need: 2,
            got: small,
        });
    }
    let algorithms: Vec<AlgorithmSummary> = groups
        .iter()
        .map(|(name, aucs)| AlgorithmSummary {
            name: name.clone(),
            runs: aucs.len(),
            mean_auc: mean(aucs),
            std_auc: std_dev(aucs),
            aucs: aucs.clone(),
        })
        .collect();
    let winner = algorithms
        .iter()
        .fold(None::<&AlgorithmSummary>, |best, a| match best {
            Some(b) if b.mean_auc >= a.mean_auc => Some(b),
            _ => Some(a),
        })
        .expect("non-empty")
        .name
        .clone();
    let best = &groups[&winner];
    let others: Vec<(&String, RankSum)> = groups
        .iter()
        .filter(|(n, _)| **n != winner)
        .map(|(n, v)| (n, wilcoxon_rank_sum(best, v)))
        .collect();
    let ps: Vec<f64> = others.iter().map(|(_, r)| r.p_value).collect();
    let flags = holm_bonferroni(&ps, alpha);
    let adjusted = holm_adjusted(&ps);
    let comparisons = others
        .iter()
        .zip(flags)
        .zip(adjusted)
        .map(|(((name, r), significant), p_holm)| {
            let effect = significant.then(|| a12(best, &groups[*name]));
            PairComparison {
                other: (*name).clone(),
                p_value: r.p_value,
                method: r.method,
                p_holm,
                significant,
                a12: effect.map(|e| e.0),
                magnitude: effect.map(|e| e.1),
            }
        })
        .collect();
    Ok(ComparisonReport {
        alpha,
        winner,
        algorithms,
        comparisons,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&[50.0; 4000]).unwrap(), 199_950.0);
        let ramp: Vec<f64> = (0..4000).map(|i| 100.0 * i as f64 / 3999.0).collect();
        assert!((auc(&ramp).unwrap() - 199_950.0).abs() < 1e-6);
        assert_eq!(auc(&[0.0, 100.0, 100.0]).unwrap(), 150.0);
        assert_eq!(auc(&[]), Err(StatsError::Empty));
        assert_eq!(auc(&[42.0]).unwrap(), 0.0);
    }

    #[test]
    fn midranks_handle_ties() {
        assert_eq!(midranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn rank_sum_examples() {
        let r = wilcoxon_rank_sum(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]);
        assert_eq!(r.method, PMethod::Exact);
        assert!((r.p_value - 0.1).abs() < 1e-15);
        assert_eq!(r.w, 6.0);
        let same = wilcoxon_rank_sum(&[1.0, 2.0, 5.0], &[5.0, 2.0, 1.0]);
        assert_eq!(same.p_value, 1.0);
        let big: Vec<f64> = (0..15).map(f64::from).collect();
        assert_eq!(wilcoxon_rank_sum(&big, &big).method, PMethod::Normal);
        assert!((wilcoxon_rank_sum(&big, &big).p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rank_sum_calibration() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut keep = 0;
        for _ in 0..1000 {
            let xs: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            let ys: Vec<f64> = (0..30).map(|_| rng.random::<f64>()).collect();
            if wilcoxon_rank_sum(&xs, &ys).p_value > 0.05 {
                keep += 1;
            }
        }
        assert!(keep >= 930, "{keep}");
    }

    #[test]
    fn exact_and_normal_agree_without_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for n in 8..=10 {
            for _ in 0..20 {
                let xs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                let ys: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 0.2).collect();
                let e = rank_sum_exact(&xs, &ys).p_value;
                let a = rank_sum_normal(&xs, &ys).p_value;
                assert!((e - a).abs() < 0.02, "n={n}: {e} vs {a}");
            }
        }
    }

    #[test]
    fn holm_examples() {
        assert_eq!(
            holm_bonferroni(&[0.01, 0.04, 0.03], 0.05),
            vec![true, false, false]
        );
        assert_eq!(holm_bonferroni(&[1.0, 1.0], 0.05), vec![false, false]);
        assert_eq!(holm_bonferroni(&[0.04], 0.05), vec![true]);
        assert_eq!(
            holm_bonferroni(&[0.001, 0.02, 0.04], 0.05),
            vec![true, true, true]
        );
        let adj = holm_adjusted(&[0.01, 0.04, 0.03]);
        assert!((adj[0] - 0.03).abs() < 1e-15);
        assert!((adj[2] - 0.06).abs() < 1e-15);
        assert!((adj[1] - 0.06).abs() < 1e-15);
    }

    #[test]
    fn a12_examples() {
        assert_eq!(a12(&[1.0, 2.0], &[1.0, 2.0]), (0.5, Magnitude::Negligible));
        assert_eq!(a12(&[5.0, 6.0], &[1.0, 2.0]), (1.0, Magnitude::Large));
        let (v, m) = a12(&[1.0, 2.0, 3.0], &[2.0, 3.0, 4.0]);
        assert!((v - 2.0 / 9.0).abs() < 1e-15);
        // |0.222 - 0.5| = 0.278 clears the 0.21 bar
        assert_eq!(m, Magnitude::Large);
        assert_eq!(Magnitude::of(0.64), Magnitude::Medium);
        assert_eq!(Magnitude::of(0.56), Magnitude::Small);
        assert_eq!(Magnitude::of(0.71), Magnitude::Large);
        assert_eq!(Magnitude::of(0.29), Magnitude::Large);
        assert_eq!(Magnitude::of(0.5599), Magnitude::Negligible);
    }

    #[test]
    fn compare_separated_groups() {
        let mut g = BTreeMap::new();
        g.insert(
            "fast".to_string(),
            (0..30).map(|i| 1000.0 + f64::from(i)).collect::<Vec<_>>(),
        );
        g.insert(
            "slow".to_string(),
            (0..30).map(f64::from).collect::<Vec<_>>(),
        );
        let r = compare(&g, 0.05).unwrap();
        assert_eq!(r.winner, "fast");
        let c = r.comparison("slow").unwrap();
        assert!(c.significant && c.p_holm < 0.05);
        assert_eq!((c.a12, c.magnitude), (Some(1.0), Some(Magnitude::Large)));
        assert_eq!(r.effect_column(), "L(slow)");
    }

    #[test]
    fn compare_identical_groups() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![1.0, 2.0, 3.0]);
        g.insert("b".to_string(), vec![1.0, 2.0, 3.0]);
        let r = compare(&g, 0.05).unwrap();
        assert!(r
            .comparisons
            .iter()
            .all(|c| !c.significant && c.a12.is_none()));
        assert_eq!(r.effect_column(), "-");
    }

    #[test]
    fn compare_three_way_fixture() {
        // winner w = 11..=20 (mean 15.5); x = 1..=10 fully separated; y overlaps.
        let w: Vec<f64> = (11..=20).map(f64::from).collect();
        let x: Vec<f64> = (1..=10).map(f64::from).collect();
        let y: Vec<f64> = (6..=15).map(f64::from).collect();
        let mut g = BTreeMap::new();
        g.insert("w".to_string(), w.clone());
        g.insert("x".to_string(), x.clone());
        g.insert("y".to_string(), y.clone());
        let r = compare(&g, 0.05).unwrap();
        assert_eq!(r.winner, "w");
        // by hand: w vs x has W = 155, the maximum; p = 2 / C(20,10)
        let cx = r.comparison("x").unwrap();
        assert!((cx.p_value - 2.0 / 184_756.0).abs() < 1e-15);
        // w vs y: 10 pairs with y > w, 5 ties, the rest won by w
        let (a, _) = a12(&w, &y);
        assert!((a - (100.0 - 10.0 - 2.5) / 100.0).abs() < 1e-15);
        let ps = [cx.p_value, r.comparison("y").unwrap().p_value];
        assert_eq!(
            vec![cx.significant, r.comparison("y").unwrap().significant],
            holm_bonferroni(&ps, 0.05)
        );
        assert_eq!(cx.a12, Some(1.0));
    }

    #[test]
    fn compare_needs_two_groups_and_runs() {
        let mut g = BTreeMap::new();
        g.insert("a".to_string(), vec![1.0, 2.0]);
        assert!(compare(&g, 0.05).is_err());
        g.insert("b".to_string(), vec![1.0]);
        assert!(compare(&g, 0.05).is_err());
    }

    proptest! {
        #[test]
        fn auc_bounds(curve in proptest::collection::vec(0.0f64..=100.0, 1..200)) {
            let a = auc(&curve).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!(a <= 100.0 * (curve.len() - 1) as f64 + 1e-9);
        }

        #[test]
        fn rank_sum_and_a12_symmetry(
            xs in proptest::collection::vec(0u8..6, 1..12),
            ys in proptest::collection::vec(0u8..6, 1..12),
        ) {
            let xs: Vec<f64> = xs.into_iter().map(f64::from).collect();
            let ys: Vec<f64> = ys.into_iter().map(f64::from).collect();
            let p1 = wilcoxon_rank_sum(&xs, &ys).p_value;
            let p2 = wilcoxon_rank_sum(&ys, &xs).p_value;
            prop_assert!((p1 - p2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&p1));
            prop_assert!((a12(&xs, &ys).0 + a12(&ys, &xs).0 - 1.0).abs() < 1e-12);
        }

        #[test]
        fn holm_monotone(ps in proptest::collection::vec(0.0f64..=1.0, 1..10), idx in any::<prop::sample::Index>(), shrink in 0.0f64..=1.0) {
            let before = holm_bonferroni(&ps, 0.05);
            let i = idx.index(ps.len());
            let mut lowered = ps.clone();
            lowered[i] *= shrink;
            let after = holm_bonferroni(&lowered, 0.05);
            for k in 0..ps.len() {
                prop_assert!(!before[k] || after[k]);
            }
        }
    }
}
