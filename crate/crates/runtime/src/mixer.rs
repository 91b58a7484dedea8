//! Source-diversity mixer: picks items so each category's share follows a
//! configured ratio.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MixerError {
    #[error("ratios sum to {0}, expected 1")]
    RatioSum(f64),
    #[error("ratio for {0:?} outside [0, 1]")]
    RatioRange(String),
    #[error("tolerance must be non-negative")]
    Tolerance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixerConfig {
    pub ratios: BTreeMap<String, f64>,
    /// Allowed deviation of a category's share from its ratio, as a fraction of n.
    pub tolerance: f64,
}

impl MixerConfig {
    pub fn new(ratios: BTreeMap<String, f64>, tolerance: f64) -> Result<Self, MixerError> {
        let c = Self { ratios, tolerance };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), MixerError> {
        if let Some((k, _)) = self.ratios.iter().find(|(_, r)| !(0.0..=1.0).contains(*r)) {
            return Err(MixerError::RatioRange(k.clone()));
        }
        let sum: f64 = self.ratios.values().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MixerError::RatioSum(sum));
        }
        if self.tolerance.is_nan() || self.tolerance < 0.0 {
            return Err(MixerError::Tolerance);
        }
        Ok(())
    }

    /// Whether `count` items of `category` out of `n` are within tolerance
    /// of the configured share (at least one item of slack for rounding).
    pub fn within_tolerance(&self, category: &str, count: usize, n: usize) -> bool {
        let target = self.ratios.get(category).copied().unwrap_or(0.0) * n as f64;
        (count as f64 - target).abs() <= (self.tolerance * n as f64).max(1.0)
    }

    /// Per-category counts for `n` picks given each category's supply.
    /// Shortfalls are handed to the remaining categories in proportion to
    /// their ratios; rounding uses largest remainders.
    pub fn quotas(&self, n: usize, supply: &BTreeMap<String, usize>) -> BTreeMap<String, usize> {
        let mut alloc: BTreeMap<String, usize> =
            self.ratios.keys().map(|k| (k.clone(), 0)).collect();
        let available = |k: &str, alloc: &BTreeMap<String, usize>| {
            supply.get(k).copied().unwrap_or(0) - alloc[k]
        };
        let total_supply: usize = self
            .ratios
            .keys()
            .map(|k| supply.get(k).copied().unwrap_or(0))
            .sum();
        let mut remaining = n.min(total_supply);
        while remaining > 0 {
            let active: Vec<(&String, f64)> = self
                .ratios
                .iter()
                .filter(|(k, r)| **r > 0.0 && available(k, &alloc) > 0)
                .map(|(k, r)| (k, *r))
                .collect();
            if active.is_empty() {
                break;
            }
            let weight: f64 = active.iter().map(|(_, r)| r).sum();
            let shares = largest_remainder(
                remaining,
                &active.iter().map(|(_, r)| r / weight).collect::<Vec<_>>(),
            );
            let mut given = 0;
            for ((k, _), share) in active.iter().zip(shares) {
                let g = share.min(available(k, &alloc));
                *alloc.get_mut(*k).expect("known category") += g;
                given += g;
            }
            if given == 0 {
                break;
            }
            remaining -= given;
        }
        alloc
    }
}

/// Split `n` by `fractions` (summing to 1): floors, then the leftover units
/// to the largest remainders, earlier entries first on ties.
pub fn largest_remainder(n: usize, fractions: &[f64]) -> Vec<usize> {
    let exact: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
    let mut out: Vec<usize> = exact.iter().map(|x| x.floor() as usize).collect();
    let mut left = n.saturating_sub(out.iter().sum());
    let mut order: Vec<usize> = (0..fractions.len()).collect();
    order.sort_by(|a, b| {
        let ra = exact[*a] - exact[*a].floor();
        let rb = exact[*b] - exact[*b].floor();
        rb.total_cmp(&ra).then(a.cmp(b))
    });
    for i in order {
        if left == 0 {
            break;
        }
        out[i] += 1;
        left -= 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixCandidate<T> {
    pub category: String,
    pub timestamp: Option<DateTime<Utc>>,
    pub item: T,
}

/// Select up to `n` candidates: category counts from [`MixerConfig::quotas`],
/// newest first within a category (undated last, then input order).
/// Output is grouped by category in name order.
pub fn mix<T: Clone>(items: &[MixCandidate<T>], config: &MixerConfig, n: usize) -> Vec<T> {
    let mut by_cat: BTreeMap<String, Vec<&MixCandidate<T>>> = BTreeMap::new();
    for c in items {
        by_cat.entry(c.category.clone()).or_default().push(c);
    }
    let supply = by_cat.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let quotas = config.quotas(n, &supply);
    let mut out = Vec::new();
    for (cat, q) in quotas {
        let Some(list) = by_cat.get_mut(&cat) else {
            continue;
        };
        list.sort_by_key(|c| std::cmp::Reverse(c.timestamp));
        out.extend(list.iter().take(q).map(|c| c.item.clone()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn config() -> MixerConfig {
        MixerConfig::new(
            [("A", 0.4), ("B", 0.4), ("C", 0.2)]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            0.1,
        )
        .unwrap()
    }

    fn pool(counts: &[(&str, usize)]) -> Vec<MixCandidate<String>> {
        counts
            .iter()
            .flat_map(|(cat, n)| {
                (0..*n).map(move |i| MixCandidate {
                    category: cat.to_string(),
                    timestamp: Some(
                        Utc.with_ymd_and_hms(2026, 1, 1 + i as u32, 0, 0, 0)
                            .unwrap(),
                    ),
                    item: format!("{cat}{i}"),
                })
            })
            .collect()
    }

    fn counts(sel: &[String]) -> BTreeMap<char, usize> {
        let mut m = BTreeMap::new();
        for s in sel {
            *m.entry(s.chars().next().unwrap()).or_default() += 1;
        }
        m
    }

    #[test]
    fn ample_supply_follows_ratios() {
        let sel = mix(&pool(&[("A", 20), ("B", 20), ("C", 20)]), &config(), 10);
        assert_eq!(counts(&sel), BTreeMap::from([('A', 4), ('B', 4), ('C', 2)]));
    }

    #[test]
    fn empty_category_redistributed() {
        let sel = mix(&pool(&[("A", 20), ("B", 20)]), &config(), 10);
        assert_eq!(counts(&sel), BTreeMap::from([('A', 5), ('B', 5)]));
    }

    #[test]
    fn zero_picks() {
        assert!(mix(&pool(&[("A", 3)]), &config(), 0).is_empty());
    }

    #[test]
    fn newest_first_within_category() {
        let sel = mix(&pool(&[("A", 5), ("B", 5), ("C", 5)]), &config(), 5);
        assert_eq!(sel[0], "A4");
    }

    #[test]
    fn invalid_ratios_rejected() {
        let bad = [("A".to_string(), 0.5), ("B".to_string(), 0.4)]
            .into_iter()
            .collect();
        assert!(matches!(
            MixerConfig::new(bad, 0.1),
            Err(MixerError::RatioSum(_))
        ));
    }
}
