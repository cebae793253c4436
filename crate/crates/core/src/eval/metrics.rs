use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use super::matching::{coupling_mae, match_candidates, Candidate, MatchPair};
use crate::dataset::{GenerationSpec, SampleRecord};
use crate::error::{Error, Result};
use crate::imaging::{Detection, GridSpec};
use crate::signal::{apply_decoherence, survival_probability, Nucleus, QuantumNode, SignalTrace};

/// Mean absolute difference between `original` and the noiseless, decohered
/// trace of the predicted nuclei.
pub fn signal_mae(
    predicted: &[Nucleus],
    b_z: f64,
    original: &SignalTrace,
    t2: f64,
) -> Result<f64> {
    let node = QuantumNode::new(predicted.to_vec(), b_z)?;
    let recon = apply_decoherence(&survival_probability(&node, &original.sequence), t2)?;
    let n = original.values.len() as f64;
    Ok(original
        .values
        .iter()
        .zip(&recon.values)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// Per-sample outcome, also the line format of the audit log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleEvaluation {
    pub sample_id: u64,
    pub n_true: usize,
    pub n_pred: usize,
    pub tp: Vec<MatchPair>,
    pub fp: Vec<usize>,
    #[serde(rename = "fn")]
    pub fn_: Vec<usize>,
    pub precision: f64,
    pub recall: f64,
    /// `(|d a_par|, |d a_perp|)` per true positive, Hz.
    pub coupling_errors: Vec<(f64, f64)>,
    /// Signal MAE per sequence slot, when originals were supplied.
    pub signal_mae: Option<[f64; 2]>,
}

pub fn evaluate_sample(
    sample_id: u64,
    truths: &[Nucleus],
    detections: &[Detection],
    grid: &GridSpec,
) -> Result<SampleEvaluation> {
    let t: Vec<Candidate> = truths
        .iter()
        .map(|n| Candidate::from_truth(n, grid))
        .collect::<Result<_>>()?;
    let p: Vec<Candidate> = detections.iter().map(Candidate::from_detection).collect();
    let report = match_candidates(&p, &t);
    Ok(SampleEvaluation {
        sample_id,
        n_true: truths.len(),
        n_pred: detections.len(),
        precision: report.precision(),
        recall: report.recall(),
        coupling_errors: report.coupling_errors(&p, &t),
        tp: report.pairs,
        fp: report.false_positives,
        fn_: report.false_negatives,
        signal_mae: None,
    })
}

/// Full evaluation of a stored sample, signal error included.
pub fn evaluate_record(
    record: &SampleRecord,
    spec: &GenerationSpec,
    detections: &[Detection],
    grid: &GridSpec,
) -> Result<SampleEvaluation> {
    let mut eval = evaluate_sample(record.sample_id, &record.nuclei, detections, grid)?;
    let predicted: Vec<Nucleus> = detections
        .iter()
        .map(|d| Nucleus::new(d.a_par, d.a_perp))
        .collect::<Result<_>>()?;
    let mut mae = [0.0; 2];
    for (slot, m) in mae.iter_mut().enumerate() {
        let original = record.trace(slot, &spec.sequences[slot])?;
        *m = signal_mae(&predicted, spec.b_z, &original, spec.noise.t2)?;
    }
    eval.signal_mae = Some(mae);
    Ok(eval)
}

/// One row of the metrics table. MAE fields are `None` when undefined.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub n_true: usize,
    #[serde(skip)]
    pub samples: usize,
    pub precision: f64,
    pub recall: f64,
    pub mae_apar_hz: Option<f64>,
    pub mae_aperp_hz: Option<f64>,
    pub mae_sig32: Option<f64>,
    pub mae_sig256: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary {
    /// One row per true nucleus count present, ascending.
    pub rows: Vec<MetricsRow>,
    /// All samples together (`n_true` is 0).
    pub overall: MetricsRow,
}

fn summarize(n_true: usize, evals: &[&SampleEvaluation]) -> MetricsRow {
    let k = evals.len() as f64;
    let errors: Vec<(f64, f64)> = evals
        .iter()
        .flat_map(|e| e.coupling_errors.iter().copied())
        .collect();
    let mae = coupling_mae(&errors);
    let sig: Vec<[f64; 2]> = evals.iter().filter_map(|e| e.signal_mae).collect();
    let sig_mean = |slot: usize| {
        (!sig.is_empty()).then(|| sig.iter().map(|s| s[slot]).sum::<f64>() / sig.len() as f64)
    };
    MetricsRow {
        n_true,
        samples: evals.len(),
        precision: evals.iter().map(|e| e.precision).sum::<f64>() / k,
        recall: evals.iter().map(|e| e.recall).sum::<f64>() / k,
        mae_apar_hz: mae.map(|m| m.0),
        mae_aperp_hz: mae.map(|m| m.1),
        mae_sig32: sig_mean(0),
        mae_sig256: sig_mean(1),
    }
}

/// Averages precision, recall and signal error over samples, and pools the
/// coupling errors of all true positives, per true nucleus count.
pub fn aggregate(evals: &[SampleEvaluation]) -> Result<MetricsSummary> {
    if evals.is_empty() {
        return Err(Error::EmptyDataset("no samples to aggregate".into()));
    }
    let mut buckets: BTreeMap<usize, Vec<&SampleEvaluation>> = BTreeMap::new();
    for e in evals {
        buckets.entry(e.n_true).or_default().push(e);
    }
    let rows = buckets.iter().map(|(n, es)| summarize(*n, es)).collect();
    let all: Vec<&SampleEvaluation> = evals.iter().collect();
    Ok(MetricsSummary {
        rows,
        overall: summarize(0, &all),
    })
}

impl MetricsSummary {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w =
            csv::Writer::from_path(path).map_err(|e| Error::format(path, e.to_string()))?;
        for row in &self.rows {
            w.serialize(row)?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn write_audit_log(path: &Path, evals: &[SampleEvaluation]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    for e in evals {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Aggregates each noise level after checking that every level covers the
/// same samples with the same truths.
pub fn robustness_sweep(
    levels: &[(u32, Vec<SampleEvaluation>)],
) -> Result<Vec<(u32, MetricsSummary)>> {
    let signature = |evals: &[SampleEvaluation]| {
        let mut s: Vec<(u64, usize)> = evals.iter().map(|e| (e.sample_id, e.n_true)).collect();
        s.sort_unstable();
        s
    };
    if let Some((first_nm, first)) = levels.first() {
        let reference = signature(first);
        for (nm, evals) in &levels[1..] {
            if signature(evals) != reference {
                return Err(Error::Misaligned(format!(
                    "samples at N_m = {nm} differ from those at N_m = {first_nm}"
                )));
            }
        }
    }
    levels
        .iter()
        .map(|(nm, evals)| Ok((*nm, aggregate(evals)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::BoundingBox;
    use crate::signal::{apply_shot_noise, AcquisitionNoise, PulseSequence, LOW_FIELD_T};

    fn det_at(grid: &GridSpec, row: i64, col: i64) -> Detection {
        let (a, b) = grid.pixel_to_coupling(row as usize, col as usize).unwrap();
        Detection {
            a_par: a,
            a_perp: b,
            position: grid.coupling_to_pixel(a, b),
            bbox: BoundingBox::around(row, col, 2),
            peak: 1.0,
        }
    }

    fn truth_at(grid: &GridSpec, row: usize, col: usize) -> Nucleus {
        let (a, b) = grid.pixel_to_coupling(row, col).unwrap();
        Nucleus::new(a, b).unwrap()
    }

    #[test]
    fn three_one_one_gives_three_quarters() {
        let g = GridSpec::default();
        let truths: Vec<Nucleus> = [(20, 20), (40, 40), (60, 60), (80, 80)]
            .iter()
            .map(|&(r, c)| truth_at(&g, r, c))
            .collect();
        let dets: Vec<Detection> = [(20, 20), (40, 41), (61, 60), (150, 10)]
            .iter()
            .map(|&(r, c)| det_at(&g, r, c))
            .collect();
        let evals: Vec<SampleEvaluation> = (0..5)
            .map(|i| evaluate_sample(i, &truths, &dets, &g).unwrap())
            .collect();
        let s = aggregate(&evals).unwrap();
        assert_eq!(s.rows.len(), 1);
        let row = &s.rows[0];
        assert_eq!((row.n_true, row.samples), (4, 5));
        assert!((row.precision - 0.75).abs() < 1e-15);
        assert!((row.recall - 0.75).abs() < 1e-15);
        // errors are 0, 1 px in a_perp and 1 px in a_par over the three TPs
        assert!((row.mae_apar_hz.unwrap() - g.pitch_par() / 3.0).abs() < 1e-9);
        assert!((row.mae_aperp_hz.unwrap() - g.pitch_perp() / 3.0).abs() < 1e-9);
        assert_eq!(row.mae_sig32, None);
    }

    #[test]
    fn buckets_by_true_count() {
        let g = GridSpec::default();
        let one = [truth_at(&g, 30, 30)];
        let two = [truth_at(&g, 30, 30), truth_at(&g, 90, 60)];
        let evals = vec![
            evaluate_sample(0, &one, &[det_at(&g, 30, 30)], &g).unwrap(),
            evaluate_sample(1, &two, &[det_at(&g, 30, 30)], &g).unwrap(),
            evaluate_sample(2, &two, &[], &g).unwrap(),
        ];
        let s = aggregate(&evals).unwrap();
        assert_eq!(s.rows.iter().map(|r| r.n_true).collect::<Vec<_>>(), [1, 2]);
        assert_eq!(s.rows[0].precision, 1.0);
        assert_eq!(s.rows[1].precision, 0.5);
        assert_eq!(s.rows[1].recall, 0.25);
        assert_eq!(s.rows[1].mae_apar_hz, Some(0.0));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn signal_mae_of_truth_is_zero_and_noise_sets_the_floor() {
        let node = QuantumNode::new(
            vec![
                Nucleus::from_khz(-20.0, 30.0).unwrap(),
                Nucleus::from_khz(45.0, 70.0).unwrap(),
            ],
            LOW_FIELD_T,
        )
        .unwrap();
        let seq = PulseSequence::cpmg32();
        let t2 = 200e-6;
        let clean = apply_decoherence(&survival_probability(&node, &seq), t2).unwrap();
        assert_eq!(signal_mae(&node.nuclei, node.b_z, &clean, t2).unwrap(), 0.0);

        let noise = AcquisitionNoise::new(t2, 1000, 17).unwrap();
        let noisy = apply_shot_noise(&clean, &noise, 0, 0);
        let mae = signal_mae(&node.nuclei, node.b_z, &noisy, t2).unwrap();
        let floor = clean
            .values
            .iter()
            .map(|p| (2.0 * p * (1.0 - p) / (std::f64::consts::PI * 1000.0)).sqrt())
            .sum::<f64>()
            / clean.values.len() as f64;
        assert!(mae > floor / 2.0 && mae < floor * 2.0, "{mae} vs {floor}");
    }

    #[test]
    fn sweep_rejects_misaligned_levels() {
        let g = GridSpec::default();
        let t = [truth_at(&g, 30, 30)];
        let a = vec![evaluate_sample(0, &t, &[], &g).unwrap()];
        let b = vec![evaluate_sample(1, &t, &[], &g).unwrap()];
        assert!(robustness_sweep(&[(1000, a.clone()), (500, a.clone())]).is_ok());
        assert!(matches!(
            robustness_sweep(&[(1000, a), (500, b)]),
            Err(Error::Misaligned(_))
        ));
    }

    #[test]
    fn csv_and_audit_outputs() {
        let g = GridSpec::default();
        let t = [truth_at(&g, 30, 30), truth_at(&g, 60, 30)];
        let evals = vec![evaluate_sample(4, &t, &[det_at(&g, 30, 31)], &g).unwrap()];
        let dir = tempfile::tempdir().unwrap();
        let csv_path = dir.path().join("m.csv");
        aggregate(&evals).unwrap().write_csv(&csv_path).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "n_true,precision,recall,mae_apar_hz,mae_aperp_hz,mae_sig32,mae_sig256"
        );
        assert!(lines.next().unwrap().starts_with("2,1.0,0.5,0.0,"));

        let log = dir.path().join("audit.jsonl");
        write_audit_log(&log, &evals).unwrap();
        let line: serde_json::Value =
            serde_json::from_str(std::fs::read_to_string(&log).unwrap().trim()).unwrap();
        assert_eq!(line["sample_id"], 4);
        assert_eq!(line["fn"], serde_json::json!([1]));
        assert!((line["tp"][0]["iou"].as_f64().unwrap() - 20.0 / 30.0).abs() < 1e-12);
    }
}
