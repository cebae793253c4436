use serde::Serialize;

use super::BoundingBox;
use crate::error::Result;
use crate::imaging::{Detection, GridSpec, PATCH_HALF};
use crate::signal::Nucleus;

/// A box together with the couplings it stands for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub bbox: BoundingBox,
    pub a_par: f64,
    pub a_perp: f64,
}

impl Candidate {
    pub fn from_detection(d: &Detection) -> Self {
        Self {
            bbox: d.bbox,
            a_par: d.a_par,
            a_perp: d.a_perp,
        }
    }

    /// Truth box: 5x5 around the nearest pixel, clipped to the image.
    pub fn from_truth(n: &Nucleus, grid: &GridSpec) -> Result<Self> {
        let (r, c) = grid.nearest_pixel(n.a_par, n.a_perp)?;
        Ok(Self {
            bbox: BoundingBox::around(r as i64, c as i64, PATCH_HALF)
                .clip(grid.height(), grid.width()),
            a_par: n.a_par,
            a_perp: n.a_perp,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchPair {
    pub prediction: usize,
    pub truth: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct MatchReport {
    /// True positives in acceptance order.
    pub pairs: Vec<MatchPair>,
    /// Indices of unmatched predictions, ascending.
    pub false_positives: Vec<usize>,
    /// Indices of unmatched truths, ascending.
    pub false_negatives: Vec<usize>,
}

impl MatchReport {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.false_positives.len()
    }

    pub fn fn_count(&self) -> usize {
        self.false_negatives.len()
    }

    /// `TP / (TP + FP)`; zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        let d = self.tp() + self.fp();
        if d == 0 {
            0.0
        } else {
            self.tp() as f64 / d as f64
        }
    }

    /// `TP / (TP + FN)`; one when there is nothing to find.
    pub fn recall(&self) -> f64 {
        let d = self.tp() + self.fn_count();
        if d == 0 {
            1.0
        } else {
            self.tp() as f64 / d as f64
        }
    }

    /// Absolute `(a_par, a_perp)` error of every true positive.
    pub fn coupling_errors(
        &self,
        predictions: &[Candidate],
        truths: &[Candidate],
    ) -> Vec<(f64, f64)> {
        self.pairs
            .iter()
            .map(|p| {
                let (a, b) = (&predictions[p.prediction], &truths[p.truth]);
                ((a.a_par - b.a_par).abs(), (a.a_perp - b.a_perp).abs())
            })
            .collect()
    }
}

/// Assigns every prediction its best-overlapping truth, then accepts the
/// assignments in descending IoU order so that each truth is used at most
/// once. Ties between truths prefer lower `a_perp` then lower `a_par`;
/// ties between predictions are broken the same way.
pub fn match_candidates(predictions: &[Candidate], truths: &[Candidate]) -> MatchReport {
    let best: Vec<Option<(usize, f64)>> = predictions
        .iter()
        .map(|p| {
            let mut best: Option<(usize, f64)> = None;
            for (j, t) in truths.iter().enumerate() {
                let iou = p.bbox.iou(&t.bbox);
                let better = match best {
                    None => true,
                    Some((k, b)) => {
                        iou > b
                            || (iou == b
                                && (t.a_perp, t.a_par) < (truths[k].a_perp, truths[k].a_par))
                    }
                };
                if better {
                    best = Some((j, iou));
                }
            }
            best
        })
        .collect();

    let mut order: Vec<usize> = (0..predictions.len()).collect();
    let key = |i: usize| best[i].map_or(0.0, |b| b.1);
    order.sort_by(|&a, &b| {
        key(b)
            .total_cmp(&key(a))
            .then(predictions[a].a_perp.total_cmp(&predictions[b].a_perp))
            .then(predictions[a].a_par.total_cmp(&predictions[b].a_par))
            .then(a.cmp(&b))
    });

    let mut taken = vec![false; truths.len()];
    let mut matched = vec![false; predictions.len()];
    let mut report = MatchReport::default();
    for i in order {
        if let Some((j, iou)) = best[i] {
            if iou > 0.0 && !taken[j] {
                taken[j] = true;
                matched[i] = true;
                report.pairs.push(MatchPair {
                    prediction: i,
                    truth: j,
                    iou,
                });
            }
        }
    }
    report.false_positives = (0..predictions.len()).filter(|&i| !matched[i]).collect();
    report.false_negatives = (0..truths.len()).filter(|&j| !taken[j]).collect();
    report
}

/// Mean absolute coupling errors over true positives, `None` without any.
pub fn coupling_mae(errors: &[(f64, f64)]) -> Option<(f64, f64)> {
    if errors.is_empty() {
        return None;
    }
    let n = errors.len() as f64;
    let (sa, sb) = errors
        .iter()
        .fold((0.0, 0.0), |(sa, sb), (a, b)| (sa + a, sb + b));
    Some((sa / n, sb / n))
}
