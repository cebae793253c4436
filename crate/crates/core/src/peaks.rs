//! Classical dip finder for high-field traces.
//!
//! Dips are mapped back to precession frequencies by inverting the
//! resonance condition used in [`crate::signal::resonance_taus`].

use std::f64::consts::PI;

use crate::signal::SignalTrace;

/// Which local minima count as dips.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DipThreshold {
    /// At or below the given quantile of the trace values.
    Quantile(f64),
    /// Below the midpoint between the trace minimum and 1.
    HalfDepth,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dip {
    pub index: usize,
    pub tau: f64,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakCandidate {
    pub dip: Dip,
    /// Odd resonance order.
    pub k: u32,
    /// Candidate `w~`, rad/s.
    pub omega_tilde: f64,
}

/// Interior indices not above either neighbor and strictly below at least one.
pub fn local_minima(values: &[f64]) -> Vec<usize> {
    (1..values.len().saturating_sub(1))
        .filter(|&i| {
            let (l, v, r) = (values[i - 1], values[i], values[i + 1]);
            v <= l && v <= r && (v < l || v < r)
        })
        .collect()
}

fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn find_dips(trace: &SignalTrace, threshold: DipThreshold) -> Vec<Dip> {
    let v = &trace.values;
    if v.len() < 3 {
        return Vec::new();
    }
    let level = match threshold {
        DipThreshold::Quantile(q) => quantile(v, q),
        DipThreshold::HalfDepth => {
            let min = v.iter().copied().fold(f64::INFINITY, f64::min);
            1.0 - 0.5 * (1.0 - min)
        }
    };
    local_minima(v)
        .into_iter()
        .filter(|&i| match threshold {
            DipThreshold::Quantile(_) => v[i] <= level,
            DipThreshold::HalfDepth => v[i] < level,
        })
        .map(|i| Dip {
            index: i,
            tau: trace.sequence.tau(i),
            value: v[i],
        })
        .collect()
}

/// Every odd order `k` whose inverted resonance puts `w~` within
/// `band` (rad/s) of `omega_l`.
pub fn resonance_candidates(dips: &[Dip], omega_l: f64, band: f64) -> Vec<PeakCandidate> {
    let mut out = Vec::new();
    for dip in dips {
        // w~ = k pi / tau - w_L, increasing in k
        let step = PI / dip.tau;
        let k_lo = ((omega_l - band + omega_l) / step).ceil().max(1.0) as u32;
        let k_hi = ((omega_l + band + omega_l) / step).floor() as u32;
        for k in (k_lo..=k_hi).filter(|k| k % 2 == 1) {
            let omega_tilde = k as f64 * step - omega_l;
            if omega_tilde > 0.0 {
                out.push(PeakCandidate {
                    dip: *dip,
                    k,
                    omega_tilde,
                });
            }
        }
    }
    out
}
