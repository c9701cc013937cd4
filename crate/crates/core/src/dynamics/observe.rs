use serde::{Deserialize, Serialize};

use crate::scalar::Real;

/// Probability-weighted mean of the 1-based site index.
pub fn center_of_mass<T: Real>(probs: &[T]) -> T {
    let (mut w, mut s) = (T::zero(), T::zero());
    for (i, &p) in probs.iter().enumerate() {
        w = w + p;
        s = s + p * T::count(i + 1);
    }
    s / w
}

/// Smallest 1-based position where `probs` rises through `level`, linearly
/// interpolated between neighbouring sites.
pub fn front_position<T: Real>(probs: &[T], level: T) -> Option<T> {
    if probs.first().is_some_and(|&p| p >= level) {
        return Some(T::one());
    }
    for i in 1..probs.len() {
        if probs[i] >= level && probs[i - 1] < level {
            let frac = (level - probs[i - 1]) / (probs[i] - probs[i - 1]);
            return Some(T::count(i) + frac);
        }
    }
    None
}

pub fn median<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / T::lit(2.0) })
}

/// Median of `probs` over the 1-based sites `low..=high` (fractional bounds
/// are rounded inwards).
pub fn platform_height<T: Real>(probs: &[T], low: T, high: T) -> Option<T> {
    let lo = low.ceil().to_usize()?.max(1);
    let hi = high.floor().to_usize()?.min(probs.len());
    if lo > hi {
        return None;
    }
    median(&probs[lo - 1..hi])
}

/// First time `series` rises through `threshold`, interpolated.
pub fn first_crossing<T: Real>(times: &[T], series: &[T], threshold: T) -> Option<T> {
    if series.first().is_some_and(|&v| v >= threshold) {
        return times.first().copied();
    }
    for i in 1..series.len() {
        if series[i] >= threshold && series[i - 1] < threshold {
            let frac = (threshold - series[i - 1]) / (series[i] - series[i - 1]);
            return Some(times[i - 1] + frac * (times[i] - times[i - 1]));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateEventKind {
    Rise,
    Fall,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEvent<T> {
    pub kind: RateEventKind,
    pub time: T,
    /// Median rate of the active segment the event bounds.
    pub level: T,
}

/// Onsets and ends of intervals in which `series` changes.
///
/// The rate `dP/dt` is taken by central differences. Samples with
/// `|rate| < quiet · max|rate|` are quiet; each maximal run of non-quiet
/// samples is an active segment with level equal to its median rate. The
/// events are the interpolated crossings of half that level at the segment
/// edges.
pub fn rate_events<T: Real>(times: &[T], series: &[T], quiet: T) -> Vec<RateEvent<T>> {
    let n = times.len();
    if n < 3 {
        return vec![];
    }
    let mut rate = vec![T::zero(); n];
    for i in 1..n - 1 {
        rate[i] = (series[i + 1] - series[i - 1]) / (times[i + 1] - times[i - 1]);
    }
    rate[0] = rate[1];
    rate[n - 1] = rate[n - 2];
    let peak = rate.iter().fold(T::zero(), |m, r| m.max(r.abs()));
    if peak == T::zero() {
        return vec![];
    }
    let active: Vec<bool> = rate.iter().map(|r| r.abs() >= quiet * peak).collect();
    let mut events = vec![];
    let mut i = 0;
    while i < n {
        if !active[i] {
            i += 1;
            continue;
        }
        let start = i;
        while i < n && active[i] {
            i += 1;
        }
        let end = i - 1;
        let level = median(&rate[start..=end]).unwrap_or(T::zero());
        let half = level / T::lit(2.0);
        let above = |j: usize| if level >= T::zero() { rate[j] >= half } else { rate[j] <= half };
        let cross = |a: usize, b: usize| {
            let frac = (half - rate[a]) / (rate[b] - rate[a]);
            times[a] + frac * (times[b] - times[a])
        };
        if start > 0 {
            if let Some(j) = (start..=end).find(|&j| above(j)) {
                let t = if j > 0 && !above(j - 1) { cross(j - 1, j) } else { times[j] };
                events.push(RateEvent { kind: RateEventKind::Rise, time: t, level });
            }
        }
        if end < n - 1 {
            if let Some(j) = (start..=end).rev().find(|&j| above(j)) {
                let t = if j + 1 < n && !above(j + 1) { cross(j, j + 1) } else { times[j] };
                events.push(RateEvent { kind: RateEventKind::Fall, time: t, level });
            }
        }
    }
    events
}
