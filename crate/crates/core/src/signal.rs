//! Closed-form CPMG survival probability of an NV sensor coupled to a bath of
//! non-interacting spin-1/2 nuclei, plus the acquisition corruptions applied
//! to simulated data (contrast decay and binomial shot noise).
//!
//! Couplings and fields are stored as ordinary frequencies in Hz and converted
//! to angular frequency only where phases are formed.
//!
//! For one nucleus with couplings `(A_z, A_perp)` and Larmor frequency `w_L`
//! the NV-conditional precession frequencies are `w_L` and
//! `w~ = sqrt((A_z + w_L)^2 + A_perp^2)`. With `alpha = w~ tau`,
//! `beta = w_L tau`, `m_z = (A_z + w_L)/w~` and `m_x = A_perp/w~`:
//!
//! ```text
//! cos(phi) = cos(alpha) cos(beta) - m_z sin(alpha) sin(beta)
//! M = 1 - m_x^2 (1 - cos alpha)(1 - cos beta) / (1 + cos phi) * sin^2(N phi / 2)
//! P_x = (1 + prod_j M_j) / 2
//! ```
//!
//! The expression is exact for an even number of pulses `N`, which is why
//! [`PulseSequence`] rejects odd pulse counts.

use std::f64::consts::{PI, TAU};

use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{keyed_rng, Channel};

/// Reduced gyromagnetic ratio of 13C, `gamma_n / 2pi`, in Hz/T.
pub const GYROMAGNETIC_RATIO_HZ_PER_T: f64 = 10.705e6;

/// Field at which resonances are resolved.
pub const HIGH_FIELD_T: f64 = 0.056;

/// Field at which the secular picture breaks down.
pub const LOW_FIELD_T: f64 = 0.0056;

/// Below this magnitude the denominator `1 + cos(phi)` is treated as zero.
const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Hyperfine couplings of one nucleus, in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nucleus {
    pub a_par: f64,
    pub a_perp: f64,
}

impl Nucleus {
    /// Validated constructor: both couplings finite and `a_perp > 0`.
    ///
    /// The signal only depends on `a_perp^2`, so the fields stay public for
    /// callers that need a mirrored nucleus.
    pub fn new(a_par: f64, a_perp: f64) -> Result<Self> {
        if !a_par.is_finite() || !a_perp.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "non-finite coupling ({a_par}, {a_perp})"
            )));
        }
        if a_perp <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "a_perp must be positive, got {a_perp}"
            )));
        }
        Ok(Self { a_par, a_perp })
    }

    pub fn from_khz(a_par_khz: f64, a_perp_khz: f64) -> Result<Self> {
        Self::new(a_par_khz * 1e3, a_perp_khz * 1e3)
    }

    /// Conditional precession frequency `w~` in rad/s.
    pub fn omega_tilde(&self, omega_l: f64) -> f64 {
        let par = TAU * self.a_par + omega_l;
        let perp = TAU * self.a_perp;
        par.hypot(perp)
    }
}

/// An NV sensor plus its coupled nuclei in a field `b_z` (Tesla).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantumNode {
    pub nuclei: Vec<Nucleus>,
    pub b_z: f64,
}

impl QuantumNode {
    pub fn new(nuclei: Vec<Nucleus>, b_z: f64) -> Result<Self> {
        if !(b_z.is_finite() && b_z > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "b_z must be positive, got {b_z}"
            )));
        }
        Ok(Self { nuclei, b_z })
    }

    pub fn larmor_hz(&self) -> f64 {
        GYROMAGNETIC_RATIO_HZ_PER_T * self.b_z
    }

    /// Larmor angular frequency in rad/s.
    pub fn omega_l(&self) -> f64 {
        TAU * self.larmor_hz()
    }
}

/// Larmor angular frequency in rad/s for a field in Tesla.
pub fn larmor_omega(b_z: f64) -> f64 {
    TAU * GYROMAGNETIC_RATIO_HZ_PER_T * b_z
}

/// CPMG acquisition: `n_pulses` pi-pulses, half-spacing `tau` swept uniformly
/// over `[tau_min, tau_max]` (seconds) in `n_points` samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseSequence {
    n_pulses: u32,
    tau_min: f64,
    tau_max: f64,
    n_points: usize,
}

impl PulseSequence {
    pub fn new(n_pulses: u32, tau_min: f64, tau_max: f64, n_points: usize) -> Result<Self> {
        if n_pulses == 0 || n_pulses % 2 != 0 {
            return Err(Error::InvalidParameter(format!(
                "pulse count must be positive and even, got {n_pulses}"
            )));
        }
        if !(tau_min.is_finite() && tau_max.is_finite() && 0.0 < tau_min && tau_min < tau_max) {
            return Err(Error::InvalidParameter(format!(
                "need 0 < tau_min < tau_max, got [{tau_min}, {tau_max}]"
            )));
        }
        if n_points < 2 {
            return Err(Error::InvalidParameter(format!(
                "need at least 2 points, got {n_points}"
            )));
        }
        Ok(Self {
            n_pulses,
            tau_min,
            tau_max,
            n_points,
        })
    }

    /// 32 pulses, tau in [6, 50] us, 1000 points.
    pub fn cpmg32() -> Self {
        Self::new(32, 6e-6, 50e-6, 1000).expect("valid constants")
    }

    /// 256 pulses, tau in [10, 40] us, 1000 points.
    pub fn cpmg256() -> Self {
        Self::new(256, 10e-6, 40e-6, 1000).expect("valid constants")
    }

    pub fn n_pulses(&self) -> u32 {
        self.n_pulses
    }

    pub fn tau_min(&self) -> f64 {
        self.tau_min
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Grid spacing in seconds.
    pub fn step(&self) -> f64 {
        (self.tau_max - self.tau_min) / (self.n_points - 1) as f64
    }

    pub fn tau(&self, i: usize) -> f64 {
        if i + 1 == self.n_points {
            self.tau_max
        } else {
            self.tau_min + i as f64 * self.step()
        }
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.tau(i))
    }
}

/// Intermediate quantities of the single-nucleus modulation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinResponseTerms {
    pub omega_tilde: f64,
    pub m_z: f64,
    pub m_x: f64,
    pub alpha: f64,
    pub beta: f64,
    pub phi: f64,
    pub m_j: f64,
}

/// Per-nucleus constants reused across a tau sweep.
#[derive(Debug, Clone, Copy)]
struct NucleusFactors {
    omega_tilde: f64,
    m_z: f64,
    m_x: f64,
    m_x_sq: f64,
}

impl NucleusFactors {
    fn new(nuc: &Nucleus, omega_l: f64) -> Self {
        let par = TAU * nuc.a_par + omega_l;
        let perp = TAU * nuc.a_perp;
        let omega_tilde = par.hypot(perp);
        let m_x = perp / omega_tilde;
        Self {
            omega_tilde,
            m_z: par / omega_tilde,
            m_x,
            m_x_sq: m_x * m_x,
        }
    }

    fn terms(&self, omega_l: f64, tau: f64, n_pulses: u32) -> SpinResponseTerms {
        let beta = omega_l * tau;
        self.terms_at(tau, beta, beta.sin_cos(), n_pulses)
    }

    /// `terms` with the nucleus-independent `beta` and its sine and cosine
    /// supplied by the caller.
    fn terms_at(
        &self,
        tau: f64,
        beta: f64,
        (sin_b, cos_b): (f64, f64),
        n_pulses: u32,
    ) -> SpinResponseTerms {
        let alpha = self.omega_tilde * tau;
        let (sin_a, cos_a) = alpha.sin_cos();
        let cos_phi = cos_a * cos_b - self.m_z * sin_a * sin_b;
        let phi = cos_phi.clamp(-1.0, 1.0).acos();
        let denominator = 1.0 + cos_phi;
        // 1 + cos(phi) only vanishes where the geometric prefactor's removable
        // limit leaves the nucleus invisible.
        let m_j = if denominator.abs() > DENOMINATOR_FLOOR {
            let half = (0.5 * f64::from(n_pulses) * phi).sin();
            let prefactor = self.m_x_sq * (1.0 - cos_a) * (1.0 - cos_b) / denominator;
            (1.0 - prefactor * half * half).clamp(-1.0, 1.0)
        } else {
            1.0
        };
        SpinResponseTerms {
            omega_tilde: self.omega_tilde,
            m_z: self.m_z,
            m_x: self.m_x,
            alpha,
            beta,
            phi,
            m_j,
        }
    }
}

/// Modulation factor `M_j` and its intermediate terms for one nucleus.
///
/// `omega_l` is in rad/s, `tau` in seconds; couplings are read in Hz.
pub fn spin_response(nuc: &Nucleus, omega_l: f64, tau: f64, n_pulses: u32) -> SpinResponseTerms {
    NucleusFactors::new(nuc, omega_l).terms(omega_l, tau, n_pulses)
}

/// Sampled survival probability over a sequence's tau grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalTrace {
    pub sequence: PulseSequence,
    pub values: Vec<f64>,
}

impl SignalTrace {
    pub fn new(sequence: PulseSequence, values: Vec<f64>) -> Result<Self> {
        if values.len() != sequence.n_points() {
            return Err(Error::LengthMismatch {
                expected: sequence.n_points(),
                actual: values.len(),
            });
        }
        Ok(Self { sequence, values })
    }

    pub fn taus(&self) -> impl Iterator<Item = f64> + '_ {
        self.sequence.taus()
    }
}

/// Noiseless `P_x(tau_i) = (1 + prod_j M_j(tau_i)) / 2`.
pub fn survival_probability(node: &QuantumNode, seq: &PulseSequence) -> SignalTrace {
    let omega_l = node.omega_l();
    let factors: Vec<NucleusFactors> = node
        .nuclei
        .iter()
        .map(|n| NucleusFactors::new(n, omega_l))
        .collect();
    let n_pulses = seq.n_pulses();
    let values = seq
        .taus()
        .map(|tau| {
            let beta = omega_l * tau;
            let sc_b = beta.sin_cos();
            let product: f64 = factors
                .iter()
                .map(|f| f.terms_at(tau, beta, sc_b, n_pulses).m_j)
                .product();
            (0.5 * (1.0 + product)).clamp(0.0, 1.0)
        })
        .collect();
    SignalTrace {
        sequence: *seq,
        values,
    }
}

/// Damps the contrast toward 1/2: `v -> 1/2 + (v - 1/2) exp(-tau_i / t2)`.
///
/// `t2 = f64::INFINITY` leaves the trace unchanged.
pub fn apply_decoherence(trace: &SignalTrace, t2: f64) -> Result<SignalTrace> {
    if !(t2 > 0.0) {
        return Err(Error::InvalidParameter(format!("t2 must be positive, got {t2}")));
    }
    let values = trace
        .taus()
        .zip(&trace.values)
        .map(|(tau, &v)| (0.5 + (v - 0.5) * (-tau / t2).exp()).clamp(0.0, 1.0))
        .collect();
    Ok(SignalTrace {
        sequence: trace.sequence,
        values,
    })
}

/// Decoherence time, measurements per point and the seed of the noise
/// streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquisitionNoise {
    pub t2: f64,
    pub n_measurements: u32,
    pub seed: u64,
}

impl AcquisitionNoise {
    pub fn new(t2: f64, n_measurements: u32, seed: u64) -> Result<Self> {
        if !(t2 > 0.0) {
            return Err(Error::InvalidParameter(format!("t2 must be positive, got {t2}")));
        }
        if n_measurements == 0 {
            return Err(Error::InvalidParameter(
                "n_measurements must be at least 1".into(),
            ));
        }
        Ok(Self {
            t2,
            n_measurements,
            seed,
        })
    }
}

/// Replaces every value `p` by `k / N_m` with `k ~ Binomial(N_m, p)`.
///
/// Point `i` draws from the stream keyed by `(noise.seed, sample_id, slot, i)`,
/// so the result is independent of evaluation order.
pub fn apply_shot_noise(
    trace: &SignalTrace,
    noise: &AcquisitionNoise,
    sample_id: u64,
    slot: u8,
) -> SignalTrace {
    let n = u64::from(noise.n_measurements);
    let scale = 1.0 / f64::from(noise.n_measurements);
    let values = trace
        .values
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(0.0, 1.0);
            let mut rng = keyed_rng(noise.seed, sample_id, Channel::ShotNoise(slot), i as u64);
            let k = Binomial::new(n, p)
                .expect("probability clamped to [0, 1]")
                .sample(&mut rng);
            k as f64 * scale
        })
        .collect();
    SignalTrace {
        sequence: trace.sequence,
        values,
    }
}

/// Half-spacings of the odd-order resonances of one nucleus up to `tau_max`.
///
/// The resonance condition is `tau_k = k pi / (2 w)` with `w` the mean of the
/// two conditional precession frequencies, `w = (w_L + w~) / 2`; this is where
/// `alpha + beta` is an odd multiple of pi and `cos(phi)` reaches -1 in the
/// weak-perpendicular limit. For vanishing couplings `w = w_L`.
pub fn resonance_taus(nuc: &Nucleus, omega_l: f64, tau_max: f64) -> Vec<f64> {
    let omega = 0.5 * (omega_l + nuc.omega_tilde(omega_l));
    if !(tau_max > 0.0) || !(omega > 0.0) {
        return Vec::new();
    }
    let spacing = PI / omega;
    (0..)
        .map(|m: u64| (2 * m + 1) as f64 * 0.5 * spacing)
        .take_while(|&tau| tau <= tau_max)
        .collect()
}
