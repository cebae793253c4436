//! One PASS/FAIL line per acceptance criterion.
//!
//! Built without the libtest harness so the report is always printed;
//! the process exits non-zero if any criterion fails.

use std::fmt::Write as _;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng;

use nvscope::eval::{
    coupling_mae, match_candidates, selectivity_scan, Candidate, SELECTIVITY_BASE_KHZ,
};
use nvscope::imaging::{post_process, render_target, GridSpec, PixelPosition, PostProcessConfig};
use nvscope::oracle::oracle_survival;
use nvscope::peaks::{find_dips, local_minima, DipThreshold};
use nvscope::rng::{keyed_rng, Channel};
use nvscope::signal::{
    apply_shot_noise, larmor_omega, resonance_taus, survival_probability, AcquisitionNoise,
    Nucleus, PulseSequence, QuantumNode, SignalTrace, HIGH_FIELD_T, LOW_FIELD_T,
};

struct Report {
    lines: Vec<(bool, String)>,
}

impl Report {
    fn record(&mut self, name: &str, pass: bool, detail: String) {
        let line = format!("[{}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        println!("{line}");
        self.lines.push((pass, line));
    }
}

const SEED: u64 = 0xACCE_97;

fn random_nucleus(rng: &mut impl Rng) -> Nucleus {
    Nucleus::new(
        rng.random_range(-100e3..=100e3),
        rng.random_range(2e3..=102e3),
    )
    .unwrap()
}

fn sequences() -> [PulseSequence; 2] {
    [PulseSequence::cpmg32(), PulseSequence::cpmg256()]
}

fn oracle_equivalence(r: &mut Report) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut nodes = 0;
    for (regime, b_z) in [(0u64, HIGH_FIELD_T), (1, LOW_FIELD_T)] {
        for i in 0..150u64 {
            let n = if i < 100 { 1 } else { 3 };
            let mut rng = keyed_rng(SEED, regime * 1000 + i, Channel::Node, 7);
            let nuclei = (0..n).map(|_| random_nucleus(&mut rng)).collect();
            let node = QuantumNode::new(nuclei, b_z).unwrap();
            for seq in sequences() {
                let closed = survival_probability(&node, &seq);
                let exact = oracle_survival(&node, &seq).unwrap();
                for (a, b) in closed.values.iter().zip(&exact.values) {
                    worst = worst.max((a - b).abs());
                }
            }
            nodes += 1;
        }
    }
    let elapsed = start.elapsed();
    r.record(
        "oracle equivalence",
        worst <= 1e-9 && elapsed < Duration::from_secs(60),
        format!(
            "{nodes} nodes (100 single + 50 three-nucleus per field), both sequences, \
             max |dP_x| = {worst:.2e} (<= 1e-9), {:.1} s (< 60 s)",
            elapsed.as_secs_f64()
        ),
    );
}

fn symmetry(r: &mut Report) {
    let mut identical = 0;
    let total = 1000u64;
    for i in 0..total {
        let mut rng = keyed_rng(SEED, i, Channel::Node, 8);
        let n = rng.random_range(1..=20);
        let nuclei: Vec<Nucleus> = (0..n).map(|_| random_nucleus(&mut rng)).collect();
        let b_z = if i % 2 == 0 { HIGH_FIELD_T } else { LOW_FIELD_T };
        let flipped: Vec<Nucleus> = nuclei
            .iter()
            .map(|n| Nucleus {
                a_par: n.a_par,
                a_perp: -n.a_perp,
            })
            .collect();
        let a = QuantumNode { nuclei, b_z };
        let b = QuantumNode {
            nuclei: flipped,
            b_z,
        };
        let same = sequences().iter().all(|seq| {
            let (x, y) = (survival_probability(&a, seq), survival_probability(&b, seq));
            x.values
                .iter()
                .zip(&y.values)
                .all(|(p, q)| p.to_bits() == q.to_bits())
        });
        identical += usize::from(same);
    }
    r.record(
        "symmetry",
        identical == total as usize,
        format!("{identical}/{total} nodes bitwise unchanged under a_perp -> -a_perp"),
    );
}

fn export_trace(path: &Path, traces: &[(&str, &SignalTrace)]) {
    let mut csv = String::from("field,tau_us,p_x\n");
    for (label, t) in traces {
        for (tau, v) in t.taus().zip(&t.values) {
            let _ = writeln!(csv, "{label},{},{v}", tau * 1e6);
        }
    }
    std::fs::write(path, csv).unwrap();
}

/// Share of trace points within 2% of full survival.
fn flat_fraction(t: &SignalTrace) -> f64 {
    t.values.iter().filter(|v| **v >= 0.98).count() as f64 / t.values.len() as f64
}

fn resonance(r: &mut Report) {
    let seq = PulseSequence::cpmg32();
    let step = seq.step();
    let omega_l = larmor_omega(HIGH_FIELD_T);
    let (mut dips, mut worst_steps) = (0usize, 0.0f64);
    let (mut all_minima, mut all_within) = (0usize, 0usize);
    let mut outside_depth = 0.0f64;
    for i in 0..300u64 {
        let mut rng = keyed_rng(SEED, i, Channel::Node, 9);
        let nuc = random_nucleus(&mut rng);
        let node = QuantumNode::new(vec![nuc], HIGH_FIELD_T).unwrap();
        let trace = survival_probability(&node, &seq);
        let res = resonance_taus(&nuc, omega_l, seq.tau_max() + step);
        let dist = |tau: f64| {
            res.iter()
                .map(|t| (t - tau).abs())
                .fold(f64::INFINITY, f64::min)
        };
        for d in find_dips(&trace, DipThreshold::HalfDepth) {
            dips += 1;
            worst_steps = worst_steps.max(dist(d.tau) / step);
        }
        for i in local_minima(&trace.values) {
            all_minima += 1;
            if dist(seq.tau(i)) <= step {
                all_within += 1;
            } else {
                // depth of an off-resonance ripple relative to its neighbours
                let v = &trace.values;
                outside_depth = outside_depth.max(v[i - 1].max(v[i + 1]) - v[i]);
            }
        }
    }

    let three_nucleus_node = |b_z| {
        let nuclei = [(3.0, 75.0), (-45.0, 42.0), (23.0, 4.0)]
            .iter()
            .map(|&(a, b)| Nucleus::from_khz(a, b).unwrap())
            .collect();
        QuantumNode::new(nuclei, b_z).unwrap()
    };
    let high = survival_probability(&three_nucleus_node(HIGH_FIELD_T), &seq);
    let low = survival_probability(&three_nucleus_node(LOW_FIELD_T), &seq);
    let out = Path::new(env!("CARGO_TARGET_TMPDIR")).join("resonance_traces.csv");
    export_trace(&out, &[("high", &high), ("low", &low)]);
    let (fh, fl) = (flat_fraction(&high), flat_fraction(&low));

    r.record(
        "resonance",
        dips > 0 && worst_steps <= 1.0 && fh > 0.5 && fl < 0.2,
        format!(
            "300 single nuclei at 0.056 T, N=32: {dips} dips (local minima below half depth) all \
             within {worst_steps:.2} steps of tau = k pi / (2 w), w = (w_L + w~)/2, k odd \
             (<= 1 step of 44 ns); [{all_within}/{all_minima} of all local minima within 1 step, \
             the rest are side lobes and ripples above the half-depth line, locally at most \
             {outside_depth:.2} deep]; three-nucleus node flat share high {fh:.2} vs low \
             {fl:.2}, traces in {}",
            out.display()
        ),
    );
}

fn grid_render(r: &mut Report) {
    let g = GridSpec::default();
    let (a, b) = g.pixel_to_coupling(60, 40).unwrap();
    let img = render_target(&[Nucleus::new(a, b).unwrap()], &g).unwrap();
    // (pixel, squared offset, printed value)
    let want = [
        ((60, 40), 0.0, 1.0),
        ((60, 41), 1.0, 0.60653),
        ((61, 41), 2.0, 0.36788),
        ((62, 40), 4.0, 0.13534),
    ];
    let value_err = want
        .iter()
        .map(|&((r, c), d2, _)| (f64::from(img.get(r, c)) - (-d2 / 2.0f64).exp()).abs())
        .fold(0.0, f64::max);
    let printed_ok = want
        .iter()
        .all(|&((r, c), _, p)| (f64::from(img.get(r, c)) * 1e5).round() == (p * 1e5f64).round());
    let step_par = (g.pixel_to_coupling(3, 2).unwrap().0 - g.pixel_to_coupling(2, 2).unwrap().0) / 1e3;
    let step_perp = (g.pixel_to_coupling(2, 3).unwrap().1 - g.pixel_to_coupling(2, 2).unwrap().1) / 1e3;
    let pass = value_err <= 1e-6
        && printed_ok
        && (step_par - 1.005).abs() <= 0.001
        && (step_perp - 1.0101).abs() <= 0.001;
    r.record(
        "grid/render",
        pass,
        format!(
            "Gaussian at offsets 0, 1, sqrt2, 2 within {value_err:.1e} of exp(-d^2/2) \
             (<= 1e-6), rounds to 1, 0.60653, 0.36788, 0.13534: {printed_ok}; pitches {step_par:.4} kHz \
             (1.005) and {step_perp:.4} kHz (1.0101)"
        ),
    );
}

fn separated_node(rng: &mut impl Rng, g: &GridSpec) -> Vec<Nucleus> {
    let n = rng.random_range(1..=20);
    let mut out: Vec<Nucleus> = Vec::new();
    while out.len() < n {
        let cand = random_nucleus(rng);
        let p = g.coupling_to_pixel(cand.a_par, cand.a_perp);
        let ok = out.iter().all(|o| {
            let q = g.coupling_to_pixel(o.a_par, o.a_perp);
            (p.row - q.row).abs().max((p.col - q.col).abs()) >= 5.0
        });
        if ok {
            out.push(cand);
        }
    }
    out
}

fn round_trip(r: &mut Report) {
    let g = GridSpec::default();
    let cfg = PostProcessConfig::default();
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let (mut worst_par, mut worst_perp) = (0.0f64, 0.0f64);
    for i in 0..1000u64 {
        let mut rng = keyed_rng(SEED, i, Channel::Node, 10);
        let node = separated_node(&mut rng, &g);
        let dets = post_process(&render_target(&node, &g).unwrap(), &g, &cfg).unwrap();
        let truths: Vec<Candidate> = node
            .iter()
            .map(|n| Candidate::from_truth(n, &g).unwrap())
            .collect();
        let preds: Vec<Candidate> = dets.iter().map(Candidate::from_detection).collect();
        let m = match_candidates(&preds, &truths);
        tp += m.tp();
        fp += m.fp();
        fn_ += m.fn_count();
        for (a, b) in m.coupling_errors(&preds, &truths) {
            worst_par = worst_par.max(a);
            worst_perp = worst_perp.max(b);
        }
    }
    let (p, rc) = (tp as f64 / (tp + fp) as f64, tp as f64 / (tp + fn_) as f64);
    r.record(
        "round-trip detection",
        p == 1.0 && rc == 1.0 && worst_par <= 1020.0 && worst_perp <= 1020.0,
        format!(
            "1000 nodes, >= 5 px separation: TP {tp}, FP {fp}, FN {fn_}, P = {p}, R = {rc}; \
             worst error a_par {:.3} kHz, a_perp {:.3} kHz (<= 1.02)",
            worst_par / 1e3,
            worst_perp / 1e3
        ),
    );
}

/// `(true a_par, predicted a_par, true a_perp, predicted a_perp, mae_par,
/// mae_perp)`; `None` marks an empty cell.
type Row = (Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>);

#[rustfmt::skip]
const TABLE_LOW: &[Row] = &[
    (Some(-98875.9444), Some(-98977.6469), Some(22447.4441), Some(22149.7736), Some(101.7025), Some(297.6705)),
    (None, Some(-91381.1482), None, Some(77329.0481), None, None),
    (Some(-82236.4611), Some(-81407.0352), Some(77605.0795), Some(79489.1775), Some(829.4259), Some(1884.0980)),
    (Some(-62594.5591), Some(-62383.3453), Some(52589.1205), Some(52937.9509), Some(211.2138), Some(348.8304)),
    (Some(-40809.0586), Some(-40134.6354), Some(79724.3165), Some(78805.7938), Some(674.4232), Some(918.5228)),
    (None, Some(-31221.3240), None, Some(75342.1168), None, None),
    (Some(-6661.2290), None, Some(6511.8053), None, None, None),
    (Some(618.3637), Some(215.3625), Some(71233.4150), Some(71235.2092), Some(403.0012), Some(1.7942)),
    (Some(22835.2283), Some(18848.5981), Some(35535.9281), Some(37496.4055), Some(3986.6302), Some(1960.4774)),
    (Some(16596.4429), Some(16086.5253), Some(41711.0597), Some(45149.3541), Some(509.9176), Some(3438.2945)),
    (Some(15900.9482), Some(15723.3536), Some(83833.8436), Some(81957.4694), Some(177.5945), Some(1876.3741)),
    (Some(29856.8923), Some(31612.6085), Some(64685.9245), Some(62537.1901), Some(1755.7162), Some(2148.7344)),
    (Some(34015.0876), Some(35494.7985), Some(51611.0833), Some(47527.5732), Some(1479.7109), Some(4083.5101)),
    (Some(41004.5308), Some(41864.7914), Some(35584.3040), Some(36961.9774), Some(860.2606), Some(1377.6733)),
    (Some(77065.1584), None, Some(29807.1735), None, None, None),
    (None, Some(79676.1586), None, Some(19732.8844), None, None),
    (Some(89884.9243), Some(92841.0141), Some(97399.2709), Some(96192.1903), Some(2956.0898), Some(1207.0806)),
    (None, Some(94358.1544), None, Some(49727.2727), None, None),
    (Some(97146.7497), Some(99163.0711), Some(89029.5304), Some(86725.7760), Some(2016.3214), Some(2303.7544)),
    (Some(97293.2625), Some(97487.4372), Some(37515.6950), Some(36848.4848), Some(194.1747), Some(667.2102)),
];

#[rustfmt::skip]
const TABLE_HIGH: &[Row] = &[
    (Some(-89149.1218), Some(-89391.4015), Some(58528.9955), Some(59126.8238), Some(242.2796), Some(597.8283)),
    (Some(-89250.2135), Some(-88996.2634), Some(17861.7656), Some(17565.9156), Some(253.9501), Some(295.8500)),
    (Some(-72472.3346), Some(-72437.9473), Some(76943.9533), Some(76196.5106), Some(34.3873), Some(747.4427)),
    (Some(-71864.3395), Some(-71922.1106), Some(43449.0304), Some(45797.3485), Some(57.7711), Some(2348.3181)),
    (Some(-67856.0332), Some(-67967.1083), Some(62388.9558), Some(63707.9890), Some(111.0751), Some(1319.0332)),
    (Some(-43283.2279), Some(-43177.4256), Some(36742.4227), Some(37291.3753), Some(105.8023), Some(548.9526)),
    (Some(-34559.2966), Some(-34673.3668), Some(72799.0305), Some(72707.0707), Some(114.0702), Some(91.9598)),
    (Some(-25741.1784), Some(-25642.2826), Some(41337.3828), Some(41100.0937), Some(98.8958), Some(237.2891)),
    (Some(-21229.8613), Some(-20136.9824), Some(31394.1066), Some(32611.2804), Some(1092.8789), Some(1217.1738)),
    (Some(-5100.0355), Some(-4781.0481), Some(63366.8872), Some(65145.7431), Some(318.9874), Some(1778.8560)),
    (None, Some(-3661.1630), None, Some(49835.4978), None, None),
    (Some(38751.9170), Some(38627.5640), Some(30000.2914), Some(28444.7756), Some(124.3530), Some(1555.5158)),
    (Some(41270.5583), Some(41909.5477), Some(70786.8143), Some(68707.0707), Some(638.9895), Some(2079.7436)),
    (Some(46661.3024), Some(47180.3462), Some(47310.4908), Some(46332.2110), Some(519.0437), Some(978.2798)),
    (Some(69741.6539), Some(69770.4207), Some(29130.9627), Some(27272.3312), Some(28.7668), Some(1858.6315)),
    (Some(76707.7658), Some(76469.3030), Some(40118.2734), Some(40647.3430), Some(238.4628), Some(529.0696)),
    (Some(87940.3129), Some(88358.4590), Some(40976.3481), Some(40236.5320), Some(418.1461), Some(739.8161)),
];

fn candidate(g: &GridSpec, a_par: f64, a_perp: f64) -> Candidate {
    Candidate::from_truth(&Nucleus::new(a_par, a_perp).unwrap(), g).unwrap()
}

/// Matches a printed table through the box pipeline; returns (TP, FP, FN,
/// largest per-nucleus MAE deviation, rows paired as printed).
fn replay_table(rows: &[Row]) -> (usize, usize, usize, f64, bool) {
    let g = GridSpec::default();
    let mut truths = Vec::new();
    let mut preds = Vec::new();
    let mut truth_row = Vec::new();
    let mut pred_row = Vec::new();
    for (i, row) in rows.iter().enumerate() {
        if let (Some(a), Some(b)) = (row.0, row.2) {
            truths.push(candidate(&g, a, b));
            truth_row.push(i);
        }
        if let (Some(a), Some(b)) = (row.1, row.3) {
            preds.push(candidate(&g, a, b));
            pred_row.push(i);
        }
    }
    let m = match_candidates(&preds, &truths);
    let errors = m.coupling_errors(&preds, &truths);
    let mut worst = 0.0f64;
    let mut paired_as_printed = true;
    for (pair, (ea, eb)) in m.pairs.iter().zip(&errors) {
        let (pi, ti) = (pred_row[pair.prediction], truth_row[pair.truth]);
        paired_as_printed &= pi == ti;
        let row = rows[ti];
        match (row.4, row.5) {
            (Some(ma), Some(mb)) => worst = worst.max((ea - ma).abs()).max((eb - mb).abs()),
            _ => worst = f64::INFINITY,
        }
    }
    // every printed MAE must be reproduced by some pair
    let printed = rows.iter().filter(|r| r.4.is_some()).count();
    paired_as_printed &= printed == m.tp();
    let _ = coupling_mae(&errors).expect("true positives");
    (m.tp(), m.fp(), m.fn_count(), worst, paired_as_printed)
}

fn ten_nucleus_scenario() -> (f64, f64) {
    let g = GridSpec::default();
    let at = |r: f64, c: f64| {
        let (a, b) = g.position_to_coupling(PixelPosition { row: r, col: c });
        candidate(&g, a, b)
    };
    let truth_px = [
        (20.0, 20.0), (40.0, 70.0), (60.0, 15.0), (80.0, 50.0), (100.0, 90.0),
        (120.0, 30.0), (140.0, 60.0), (160.0, 10.0), (180.0, 80.0), (195.0, 45.0),
    ];
    let truths: Vec<Candidate> = truth_px.iter().map(|&(r, c)| at(r, c)).collect();
    // nine close predictions, one over-prediction, the last truth missed
    let mut preds: Vec<Candidate> = truth_px[..9]
        .iter()
        .enumerate()
        .map(|(i, &(r, c))| at(r + (i % 3) as f64 - 1.0, c + (i % 2) as f64))
        .collect();
    preds.push(at(150.0, 95.0));
    let m = match_candidates(&preds, &truths);
    (m.precision(), m.recall())
}

fn metric_reproduction(r: &mut Report) {
    let (tp1, fp1, fn1, w1, ok1) = replay_table(TABLE_LOW);
    let (tp2, fp2, fn2, w2, ok2) = replay_table(TABLE_HIGH);
    let (p, rc) = ten_nucleus_scenario();
    let pass = w1 <= 1e-3 && w2 <= 1e-3 && ok1 && ok2 && p == 0.9 && rc == 0.9;
    r.record(
        "metric reproduction",
        pass,
        format!(
            "low-field table: TP {tp1} FP {fp1} FN {fn1}, paired as printed {ok1}, worst MAE \
             deviation {w1:.1e} Hz; high-field table: TP {tp2} FP {fp2} FN {fn2}, paired as \
             printed {ok2}, worst {w2:.1e} Hz (<= 1e-3); 10-nucleus scene P = {p}, R = {rc} (0.9)"
        ),
    );
}

fn shot_noise(r: &mut Report) {
    let draws = 10_000;
    let seq = PulseSequence::new(2, 1e-6, 2e-6, draws).unwrap();
    let clean = SignalTrace::new(seq, vec![0.5; draws]).unwrap();
    let mut parts = Vec::new();
    let mut pass = true;
    for nm in [1000u32, 500, 100, 10] {
        let noise = AcquisitionNoise::new(f64::INFINITY, nm, SEED).unwrap();
        let noisy = apply_shot_noise(&clean, &noise, u64::from(nm), 0);
        let mean = noisy.values.iter().sum::<f64>() / draws as f64;
        let var = noisy.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let want = (0.25 / f64::from(nm)).sqrt();
        let rel = (var.sqrt() - want).abs() / want;
        pass &= rel <= 0.10;
        parts.push(format!("N_m {nm}: std {:.5} vs {want:.5} ({:.1}%)", var.sqrt(), rel * 100.0));
    }
    r.record("shot-noise statistics", pass, format!("{} (<= 10%)", parts.join("; ")));
}

fn selectivity(r: &mut Report) {
    let base = Nucleus::from_khz(SELECTIVITY_BASE_KHZ.0, SELECTIVITY_BASE_KHZ.1).unwrap();
    let pts = selectivity_scan(
        base,
        &[(7e3, 7e3), (3e3, 3e3), (1e3, 1e3)],
        &GridSpec::default(),
        &PostProcessConfig::default(),
    )
    .unwrap();
    let (d7, d3, d1) = (pts[0].detections, pts[1].detections, pts[2].detections);
    r.record(
        "selectivity",
        d7 == 2 && d1 == 1,
        format!("offset (7,7) kHz -> {d7} (2), (1,1) kHz -> {d1} (1); (3,3) kHz -> {d3} (recorded)"),
    );
}

fn run_generate(dir: &Path, seed: u64, workers: usize) -> (String, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_nvscope"))
        .args(["generate", "--samples", "1000", "--seed", &seed.to_string()])
        .args(["--workers", &workers.to_string(), "--out"])
        .arg(dir)
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = std::fs::read_to_string(dir.join("all").join("dataset.manifest")).unwrap();
    (manifest, elapsed)
}

fn determinism(r: &mut Report) {
    let tmp = tempfile::tempdir().unwrap();
    let runs: Vec<(String, Duration)> = [(0usize, 0), (1, 1), (2, 4)]
        .iter()
        .map(|&(i, w)| run_generate(&tmp.path().join(format!("run{i}")), 11, w))
        .collect();
    let same = runs.iter().all(|(m, _)| *m == runs[0].0);
    let slowest = runs.iter().map(|(_, d)| *d).max().unwrap();
    let shards = runs[0].0.lines().count();
    r.record(
        "determinism",
        same && slowest < Duration::from_secs(5),
        format!(
            "generate --samples 1000 --seed 11 with 0, 1 and 4 workers: {shards} shard digest(s) \
             identical = {same}; slowest run {:.2} s (< 5 s)",
            slowest.as_secs_f64()
        ),
    );
}

fn main() {
    let mut r = Report { lines: Vec::new() };
    oracle_equivalence(&mut r);
    symmetry(&mut r);
    resonance(&mut r);
    grid_render(&mut r);
    round_trip(&mut r);
    metric_reproduction(&mut r);
    shot_noise(&mut r);
    selectivity(&mut r);
    determinism(&mut r);
    let failed = r.lines.iter().filter(|l| !l.0).count();
    println!(
        "acceptance: {}/{} criteria pass",
        r.lines.len() - failed,
        r.lines.len()
    );
    if failed > 0 {
        for (_, line) in r.lines.iter().filter(|l| !l.0) {
            eprintln!("{line}");
        }
        std::process::exit(1);
    }
}
