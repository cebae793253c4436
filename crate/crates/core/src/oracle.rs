//! Brute-force reference for the closed-form signal.
//!
//! Each nucleus is propagated separately through the piecewise-constant
//! toggling-frame Hamiltonian
//!
//! ```text
//! H = (w_L z + A/2) . I + f(t)/2 sigma_z A . I
//! ```
//!
//! with instantaneous pi-pulses flipping `f` between +1 and -1. For NV
//! eigenvalue `s = +-1` the nuclear Hamiltonian on a segment is therefore
//! `(w_L z + (1 + f s) A / 2) . I`, i.e. either the bare Larmor precession or
//! precession about `w_L z + A` with the full coupling. This is the splitting
//! the closed form is written in (its `m_z` uses `A_z + w_L`, not `A_z/2`).
//! The modulation factor is `Re Tr(rho U_0^dagger U_1)` with `rho = I/2`.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::signal::{Nucleus, PulseSequence, QuantumNode, SignalTrace};

/// Largest node `oracle_survival` accepts.
pub const ORACLE_MAX_NUCLEI: usize = 6;

/// Dense 2x2 complex matrix, row-major.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mat2(pub [[Complex64; 2]; 2]);

impl Mat2 {
    pub fn identity() -> Self {
        let one = Complex64::new(1.0, 0.0);
        let zero = Complex64::new(0.0, 0.0);
        Mat2([[one, zero], [zero, one]])
    }

    pub fn scaled(self, k: f64) -> Self {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a * k, b * k], [c * k, d * k]])
    }

    pub fn mul(&self, rhs: &Mat2) -> Mat2 {
        let a = &self.0;
        let b = &rhs.0;
        let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Mat2(out)
    }

    pub fn adjoint(&self) -> Mat2 {
        let [[a, b], [c, d]] = self.0;
        Mat2([[a.conj(), c.conj()], [b.conj(), d.conj()]])
    }

    pub fn trace(&self) -> Complex64 {
        self.0[0][0] + self.0[1][1]
    }

    /// `max |(U^dagger U - I)_ij|`.
    pub fn unitarity_defect(&self) -> f64 {
        let p = self.adjoint().mul(self);
        let id = Mat2::identity();
        let mut worst: f64 = 0.0;
        for i in 0..2 {
            for j in 0..2 {
                worst = worst.max((p.0[i][j] - id.0[i][j]).norm());
            }
        }
        worst
    }

    /// `exp(-i t h . I)` for a spin-1/2 with `I = sigma / 2` and `h` in rad/s,
    /// via the axis-angle form `cos(theta/2) 1 - i sin(theta/2) n . sigma`.
    pub fn spin_half_propagator(h: [f64; 3], t: f64) -> Mat2 {
        let norm = (h[0] * h[0] + h[1] * h[1] + h[2] * h[2]).sqrt();
        if norm == 0.0 {
            return Mat2::identity();
        }
        let half = 0.5 * norm * t;
        let (s, c) = half.sin_cos();
        let (nx, ny, nz) = (h[0] / norm, h[1] / norm, h[2] / norm);
        // -i s (nx sx + ny sy + nz sz)
        Mat2([
            [Complex64::new(c, -s * nz), Complex64::new(-s * ny, -s * nx)],
            [Complex64::new(s * ny, -s * nx), Complex64::new(c, s * nz)],
        ])
    }
}

/// Sign pattern of the modulation function `f(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ToggleSchedule {
    boundaries: Vec<f64>,
    total_time: f64,
}

impl ToggleSchedule {
    /// `f` starts at +1 and flips at every boundary.
    pub fn new(boundaries: Vec<f64>, total_time: f64) -> Result<Self> {
        let mut previous = 0.0;
        for &b in boundaries.iter().chain(std::iter::once(&total_time)) {
            if !(b > previous) || !b.is_finite() {
                return Err(Error::DegenerateSchedule(format!(
                    "segment ending at {b} s does not follow {previous} s"
                )));
            }
            previous = b;
        }
        Ok(Self {
            boundaries,
            total_time,
        })
    }

    /// CPMG: flips at `tau, 3 tau, ..., (2N - 1) tau`, ending at `2 N tau`.
    pub fn cpmg(n_pulses: u32, tau: f64) -> Result<Self> {
        let boundaries = (0..n_pulses).map(|k| (2 * k + 1) as f64 * tau).collect();
        Self::new(boundaries, 2.0 * f64::from(n_pulses) * tau)
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    pub fn total_time(&self) -> f64 {
        self.total_time
    }

    pub fn initial_sign(&self) -> i8 {
        1
    }

    /// `(duration, f)` for every segment in time order.
    pub fn segments(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let ends = self
            .boundaries
            .iter()
            .copied()
            .chain(std::iter::once(self.total_time));
        let mut start = 0.0;
        let mut sign = 1.0;
        ends.map(move |end| {
            let seg = (end - start, sign);
            start = end;
            sign = -sign;
            seg
        })
    }
}

/// Nuclear density matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NuclearState {
    pub density: Mat2,
}

impl Default for NuclearState {
    /// Unpolarized: `I / 2`.
    fn default() -> Self {
        Self {
            density: Mat2::identity().scaled(0.5),
        }
    }
}

/// Nuclear propagators `(U_0, U_1)` for NV eigenvalues `+1` and `-1`.
pub fn conditional_unitaries(
    nuc: &Nucleus,
    omega_l: f64,
    schedule: &ToggleSchedule,
) -> (Mat2, Mat2) {
    let a_par = TAU * nuc.a_par;
    let a_perp = TAU * nuc.a_perp;
    let branch = |s: f64| {
        schedule
            .segments()
            .fold(Mat2::identity(), |acc, (dt, f)| {
                let weight = 0.5 * (1.0 + f * s);
                let h = [weight * a_perp, 0.0, omega_l + weight * a_par];
                Mat2::spin_half_propagator(h, dt).mul(&acc)
            })
    };
    (branch(1.0), branch(-1.0))
}

/// `Tr(rho U_0^dagger U_1)`; the real part is the modulation factor.
pub fn overlap(u0: &Mat2, u1: &Mat2, state: &NuclearState) -> Complex64 {
    state.density.mul(&u0.adjoint().mul(u1)).trace()
}

/// Modulation factor of one nucleus at one half-spacing.
pub fn oracle_modulation(nuc: &Nucleus, omega_l: f64, tau: f64, n_pulses: u32) -> Result<f64> {
    let schedule = ToggleSchedule::cpmg(n_pulses, tau)?;
    let (u0, u1) = conditional_unitaries(nuc, omega_l, &schedule);
    Ok(overlap(&u0, &u1, &NuclearState::default()).re)
}

/// Survival probability from explicit propagation, for nodes of at most
/// [`ORACLE_MAX_NUCLEI`] nuclei.
pub fn oracle_survival(node: &QuantumNode, seq: &PulseSequence) -> Result<SignalTrace> {
    if node.nuclei.len() > ORACLE_MAX_NUCLEI {
        return Err(Error::OracleScale {
            nuclei: node.nuclei.len(),
            limit: ORACLE_MAX_NUCLEI,
        });
    }
    let omega_l = node.omega_l();
    let values = seq
        .taus()
        .map(|tau| {
            let mut product = 1.0;
            for nuc in &node.nuclei {
                product *= oracle_modulation(nuc, omega_l, tau, seq.n_pulses())?;
            }
            Ok(0.5 * (1.0 + product))
        })
        .collect::<Result<Vec<f64>>>()?;
    SignalTrace::new(*seq, values)
}
