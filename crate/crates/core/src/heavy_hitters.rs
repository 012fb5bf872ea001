//! Misra-Gries frequent-items summary and its relative-error certificate.
//!
//! The summary keeps at most `ℓ` labelled counters. An item that matches a
//! label increments it; otherwise it claims an empty slot; otherwise every
//! counter is decremented (and the item is dropped). Every estimate then
//! undercounts by at most the number of decrement rounds `r`, and
//! `r ≤ R_k/(ℓ−k)` where `R_k` is the mass outside the true top `k`.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

/// Opaque item identifier.
pub type ItemId = u64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HeavyHitterError {
    #[error("capacity must be at least 1")]
    ZeroCapacity,
    #[error("k = {k} must be strictly below the capacity {ell}")]
    KNotBelowCapacity { k: usize, ell: usize },
    #[error("eps must be a positive finite number, got {0}")]
    BadEps(f64),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MgSummary {
    slots: Vec<Option<(ItemId, u64)>>,
    n_processed: u64,
    decrements: u64,
}

impl MgSummary {
    pub fn new(capacity: usize) -> Result<Self, HeavyHitterError> {
        if capacity == 0 {
            return Err(HeavyHitterError::ZeroCapacity);
        }
        Ok(Self { slots: vec![None; capacity], n_processed: 0, decrements: 0 })
    }

    /// Summary sized `ℓ = ⌈k + k/ε⌉`.
    pub fn with_relative_error(k: usize, eps: f64) -> Result<Self, HeavyHitterError> {
        Self::new(relative_error_capacity(k, eps)?)
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn n_processed(&self) -> u64 {
        self.n_processed
    }

    /// Number of decrement-all rounds `r`.
    pub fn decrements(&self) -> u64 {
        self.decrements
    }

    pub fn update(&mut self, item: ItemId) {
        self.n_processed += 1;
        if let Some((_, count)) = self.slots.iter_mut().flatten().find(|(label, _)| *label == item) {
            *count += 1;
            return;
        }
        // lowest-indexed empty slot
        if let Some(slot) = self.slots.iter_mut().find(|s| s.is_none()) {
            *slot = Some((item, 1));
            return;
        }
        self.decrements += 1;
        for slot in &mut self.slots {
            if let Some((_, count)) = slot {
                *count -= 1;
                if *count == 0 {
                    *slot = None;
                }
            }
        }
    }

    pub fn extend<I: IntoIterator<Item = ItemId>>(&mut self, items: I) {
        for it in items {
            self.update(it);
        }
    }

    /// Estimated count `f̂_j`; zero for unlabelled items.
    pub fn estimate(&self, item: ItemId) -> u64 {
        self.slots
            .iter()
            .flatten()
            .find(|(label, _)| *label == item)
            .map_or(0, |&(_, c)| c)
    }

    /// Occupied `(label, count)` pairs in slot order.
    pub fn entries(&self) -> impl Iterator<Item = (ItemId, u64)> + '_ {
        self.slots.iter().flatten().copied()
    }

    /// Occupied pairs sorted by count descending, label ascending.
    pub fn top_items(&self) -> Vec<(ItemId, u64)> {
        let mut v: Vec<_> = self.entries().collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }

    /// Evaluates the relative-error bounds against the exact histogram of
    /// the processed stream.
    pub fn error_certificate(
        &self,
        true_freqs: &HashMap<ItemId, u64>,
        k: usize,
    ) -> Result<MgCertificate, HeavyHitterError> {
        let ell = self.capacity();
        if k >= ell {
            return Err(HeavyHitterError::KNotBelowCapacity { k, ell });
        }
        let mut ranked: Vec<(ItemId, u64)> = true_freqs.iter().map(|(&j, &f)| (j, f)).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));

        let n: u64 = ranked.iter().map(|&(_, f)| f).sum();
        let top_k = &ranked[..k.min(ranked.len())];
        let f_k: u64 = top_k.iter().map(|&(_, f)| f).sum();
        let f_hat_k: u64 = top_k.iter().map(|&(j, _)| self.estimate(j)).sum();
        let r_k = n - f_k;
        let r = self.decrements;

        let mut min_item_gap = i128::MAX;
        let mut max_item_gap = 0i128;
        for &(j, f) in &ranked {
            let gap = f as i128 - self.estimate(j) as i128;
            min_item_gap = min_item_gap.min(gap);
            max_item_gap = max_item_gap.max(gap);
        }
        // labels the histogram does not know about count as f_j = 0
        for (j, c) in self.entries() {
            if !true_freqs.contains_key(&j) {
                min_item_gap = min_item_gap.min(-(c as i128));
            }
        }
        if min_item_gap == i128::MAX {
            min_item_gap = 0;
        }

        let slack = (ell - k) as u128;
        Ok(MgCertificate {
            ell,
            k,
            n,
            r,
            r_k,
            f_k,
            f_hat_k,
            max_item_gap: max_item_gap as i64,
            min_item_gap: min_item_gap as i64,
            decrements_within_n_over_ell: r as u128 * ell as u128 <= n as u128,
            decrements_within_tail_bound: r as u128 * slack <= r_k as u128,
            item_gaps_within_decrements: min_item_gap >= 0 && max_item_gap <= r as i128,
            top_k_gap_within_bound: (f_k - f_hat_k.min(f_k)) as u128 * slack
                <= k as u128 * r_k as u128
                && f_hat_k <= f_k,
        })
    }
}

/// `ℓ = ⌈k + k/ε⌉`.
pub fn relative_error_capacity(k: usize, eps: f64) -> Result<usize, HeavyHitterError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(HeavyHitterError::BadEps(eps));
    }
    let ell = crate::sketch::tolerant_ceil(k as f64 + k as f64 / eps);
    if ell == 0 {
        return Err(HeavyHitterError::ZeroCapacity);
    }
    Ok(ell)
}

/// `ℓ = ⌈k + 1/ε⌉`, the per-item variant.
pub fn per_item_capacity(k: usize, eps: f64) -> Result<usize, HeavyHitterError> {
    if !(eps.is_finite() && eps > 0.0) {
        return Err(HeavyHitterError::BadEps(eps));
    }
    Ok(crate::sketch::tolerant_ceil(k as f64 + 1.0 / eps).max(1))
}

/// Bound values for one summary against the exact histogram.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MgCertificate {
    pub ell: usize,
    pub k: usize,
    pub n: u64,
    /// Decrement rounds.
    pub r: u64,
    /// Mass outside the true top `k`.
    pub r_k: u64,
    pub f_k: u64,
    pub f_hat_k: u64,
    pub max_item_gap: i64,
    pub min_item_gap: i64,
    pub decrements_within_n_over_ell: bool,
    /// `r ≤ R_k/(ℓ−k)`
    pub decrements_within_tail_bound: bool,
    /// `0 ≤ f_j − f̂_j ≤ r` for every item
    pub item_gaps_within_decrements: bool,
    /// `F_k − F̂_k ≤ k·R_k/(ℓ−k)`
    pub top_k_gap_within_bound: bool,
}

impl MgCertificate {
    pub fn all_pass(&self) -> bool {
        self.decrements_within_n_over_ell
            && self.decrements_within_tail_bound
            && self.item_gaps_within_decrements
            && self.top_k_gap_within_bound
    }
}

/// Exact histogram of a stream.
pub fn histogram<I: IntoIterator<Item = ItemId>>(items: I) -> HashMap<ItemId, u64> {
    let mut h = HashMap::new();
    for it in items {
        *h.entry(it).or_insert(0) += 1;
    }
    h
}
