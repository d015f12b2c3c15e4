//! Stationary Gaussian OU velocity fields as finite mode sums.
//!
//! `V(t, x) = sum_j w_j p_j (xi_j(t) cos(k_j.x) + eta_j(t) sin(k_j.x))` where
//! every amplitude is an independent stationary unit-variance OU process with
//! rate `theta_j`. The scaled field is `u(t, x) = V(t / eps^2, x) / eps`, so in
//! simulation time each amplitude decorrelates at rate `theta_j / eps^2`.

use std::io::{Read, Write};
use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Tensor;
use crate::rng::{self, Domain};
use crate::spectra::{Mode, ModeSet};

/// Structure-of-arrays copy of a mode set for the evaluation loops.
#[derive(Debug, Clone)]
pub(crate) struct ModeArrays {
    pub dim: usize,
    pub k: Vec<[f64; 3]>,
    /// `weight * polarization`
    pub wp: Vec<[f64; 3]>,
    /// `weight * (polarization . k)`
    pub wpk: Vec<f64>,
    pub theta: Vec<f64>,
}

impl ModeArrays {
    pub fn new(ms: &ModeSet) -> Self {
        let dim = ms.dim;
        let mut out = ModeArrays {
            dim,
            k: Vec::with_capacity(ms.len()),
            wp: Vec::with_capacity(ms.len()),
            wpk: Vec::with_capacity(ms.len()),
            theta: Vec::with_capacity(ms.len()),
        };
        for m in &ms.modes {
            let p = m.polarization;
            out.k.push(m.k);
            out.wp.push([m.weight * p[0], m.weight * p[1], m.weight * p[2]]);
            out.wpk.push(m.weight * (0..dim).map(|i| p[i] * m.k[i]).sum::<f64>());
            out.theta.push(m.theta);
        }
        out
    }

    /// `sum_j wp_j (a_j cos(k_j.x) + b_j sin(k_j.x))`, added into `out`.
    #[inline]
    pub fn superpose(&self, a: &[f64], b: &[f64], scale: f64, x: &[f64], out: &mut [f64]) {
        let mut acc = [0.0f64; 3];
        if self.dim == 2 {
            for j in 0..self.k.len() {
                let k = &self.k[j];
                let (s, c) = (k[0] * x[0] + k[1] * x[1]).sin_cos();
                let amp = a[j] * c + b[j] * s;
                acc[0] += amp * self.wp[j][0];
                acc[1] += amp * self.wp[j][1];
            }
        } else {
            for j in 0..self.k.len() {
                let k = &self.k[j];
                let (s, c) = (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]).sin_cos();
                let amp = a[j] * c + b[j] * s;
                acc[0] += amp * self.wp[j][0];
                acc[1] += amp * self.wp[j][1];
                acc[2] += amp * self.wp[j][2];
            }
        }
        for i in 0..self.dim {
            out[i] += scale * acc[i];
        }
    }

    /// Analytic divergence of the same superposition.
    pub fn divergence(&self, a: &[f64], b: &[f64], scale: f64, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for j in 0..self.k.len() {
            let k = &self.k[j];
            let phase: f64 = (0..self.dim).map(|i| k[i] * x[i]).sum();
            let (s, c) = phase.sin_cos();
            acc += self.wpk[j] * (-a[j] * s + b[j] * c);
        }
        scale * acc
    }
}

/// Per-step transition coefficients of a unit-variance OU amplitude with
/// rate `lambda` over a step `h`, including its time integral.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OuStep {
    pub rho: f64,
    /// `sqrt(1 - rho^2)`
    pub sd: f64,
    /// `E[int x | x0] = mean_integral * x0`
    pub mean_integral: f64,
    /// regression of the integral on the endpoint innovation
    pub integral_on_z1: f64,
    /// residual standard deviation of the integral
    pub integral_sd: f64,
}

/// `-expm1(-u) / u`, stable near zero.
fn one_minus_exp_over(u: f64) -> f64 {
    if u < 1e-8 {
        1.0 - u / 2.0
    } else {
        -(-u).exp_m1() / u
    }
}

/// `u - 2(1 - e^-u) + (1 - e^-2u)/2`, which is `u^3/3 + O(u^4)`.
fn integral_bracket(u: f64) -> f64 {
    if u < 0.1 {
        // coefficient of u^n is (-1)^(n+1) (2^(n-1) - 2) / n!
        let mut sum = 0.0;
        let mut pow = u * u;
        let mut fact = 2.0;
        for n in 3..16 {
            pow *= u;
            fact *= n as f64;
            let sign = if n % 2 == 1 { 1.0 } else { -1.0 };
            sum += sign * (2f64.powi(n - 1) - 2.0) / fact * pow;
        }
        sum
    } else {
        u + 2.0 * (-u).exp_m1() - 0.5 * (-2.0 * u).exp_m1()
    }
}

impl OuStep {
    pub fn new(lambda: f64, h: f64) -> Self {
        let u = lambda * h;
        let rho = (-u).exp();
        let var_x = -(-2.0 * u).exp_m1();
        let q = one_minus_exp_over(u); // (1 - rho) / u
        let mean_integral = h * q;
        // Cov(I, x_h | x0) = (1-rho)^2 / lambda, Var(I | x0) = 2 h^2 bracket / u^2
        let cov = h * u * q * q;
        let var_i = if u > 0.0 {
            2.0 * h * h * integral_bracket(u) / (u * u)
        } else {
            0.0
        };
        let (sd, integral_on_z1, integral_sd) = if var_x > 0.0 {
            let sd = var_x.sqrt();
            (sd, cov / sd, (var_i - cov * cov / var_x).max(0.0).sqrt())
        } else {
            (0.0, 0.0, 0.0)
        };
        OuStep {
            rho,
            sd,
            mean_integral,
            integral_on_z1,
            integral_sd,
        }
    }
}

/// Transition coefficient `exp(-theta dt / eps^2)` of one mode.
pub fn transition_coefficient(theta: f64, dt: f64, epsilon: f64) -> f64 {
    (-theta * (dt / (epsilon * epsilon))).exp()
}

/// The evolving random field: mode set, OU amplitudes and per-mode streams.
#[derive(Debug, Clone)]
pub struct FieldState {
    modeset: Arc<ModeSet>,
    arrays: Arc<ModeArrays>,
    xi: Vec<f64>,
    eta: Vec<f64>,
    time: f64,
    epsilon: f64,
    seed: u64,
    streams: Vec<ChaCha8Rng>,
}

/// Time integrals of the amplitudes over the last step, scaled by `1/eps`
/// so that `superpose` yields the particle displacement directly.
#[derive(Debug, Clone, Default)]
pub struct StepIntegrals {
    pub xi: Vec<f64>,
    pub eta: Vec<f64>,
}

impl FieldState {
    /// Stationary initial state: amplitudes i.i.d. `N(0, 1)`.
    pub fn init_stationary(modeset: impl Into<Arc<ModeSet>>, epsilon: f64, seed: u64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::InvalidParams(format!("epsilon = {epsilon} must be positive")));
        }
        let modeset = modeset.into();
        let arrays = Arc::new(ModeArrays::new(&modeset));
        let n = modeset.len();
        let mut streams: Vec<ChaCha8Rng> = (0..n as u64)
            .map(|j| rng::stream(seed, Domain::Field, j))
            .collect();
        let mut xi = Vec::with_capacity(n);
        let mut eta = Vec::with_capacity(n);
        for s in streams.iter_mut() {
            xi.push(rng::normal(s));
            eta.push(rng::normal(s));
        }
        Ok(FieldState {
            modeset,
            arrays,
            xi,
            eta,
            time: 0.0,
            epsilon,
            seed,
            streams,
        })
    }

    pub fn modeset(&self) -> &ModeSet {
        &self.modeset
    }

    pub(crate) fn arrays(&self) -> &ModeArrays {
        &self.arrays
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn dim(&self) -> usize {
        self.modeset.dim
    }

    /// RMS speed of the scaled field, `sqrt(sum w^2) / eps`.
    pub fn rms_speed(&self) -> f64 {
        self.modeset.total_variance().sqrt() / self.epsilon
    }

    /// Stationary RMS particle displacement produced by one step of `dt`
    /// at frozen position: ballistic for short steps, diffusive for long ones.
    pub fn step_rms_displacement(&self, dt: f64) -> f64 {
        let h = dt / (self.epsilon * self.epsilon);
        let d = self.dim();
        let mut total = 0.0;
        for j in 0..self.xi.len() {
            let u = self.arrays.theta[j] * h;
            // Var(int_0^h x) = 2 h^2 (u - 1 + e^-u) / u^2
            let ratio = if u < 1e-6 { 1.0 - u / 3.0 } else { 2.0 * (u + (-u).exp_m1()) / (u * u) };
            let wp2: f64 = self.arrays.wp[j][..d].iter().map(|v| v * v).sum();
            // xi and eta modes together contribute wp2 * Var
            total += wp2 * h * h * ratio;
        }
        (total * self.epsilon * self.epsilon).sqrt()
    }

    /// Overwrites the amplitudes; used to compare fields on frozen randomness.
    pub fn set_amplitudes(&mut self, xi: &[f64], eta: &[f64]) {
        self.xi.copy_from_slice(xi);
        self.eta.copy_from_slice(eta);
    }

    /// Exact OU transition of every amplitude over `dt` (simulation time).
    pub fn advance(&mut self, dt: f64) {
        if dt == 0.0 {
            return;
        }
        let h = dt / (self.epsilon * self.epsilon);
        for j in 0..self.xi.len() {
            let rho = (-self.arrays.theta[j] * h).exp();
            let sd = (-(-2.0 * self.arrays.theta[j] * h).exp_m1()).sqrt();
            let s = &mut self.streams[j];
            self.xi[j] = rho * self.xi[j] + sd * rng::normal(s);
            self.eta[j] = rho * self.eta[j] + sd * rng::normal(s);
        }
        self.time += dt;
    }

    /// Advances like [`advance`](Self::advance) and jointly samples the time
    /// integrals of the scaled amplitudes over the step.
    pub fn advance_integrated(&mut self, dt: f64, out: &mut StepIntegrals) {
        let n = self.xi.len();
        out.xi.resize(n, 0.0);
        out.eta.resize(n, 0.0);
        if dt == 0.0 {
            out.xi.iter_mut().for_each(|v| *v = 0.0);
            out.eta.iter_mut().for_each(|v| *v = 0.0);
            return;
        }
        let eps2 = self.epsilon * self.epsilon;
        let inv_eps = 1.0 / self.epsilon;
        // integral in OU time units, then times eps^2 for simulation time
        let h = dt / eps2;
        for j in 0..n {
            let step = OuStep::new(self.arrays.theta[j], h);
            let s = &mut self.streams[j];
            for (amp, slot) in [(&mut self.xi[j], &mut out.xi[j]), (&mut self.eta[j], &mut out.eta[j])] {
                let z1 = rng::normal(s);
                let z2 = rng::normal(s);
                let x0 = *amp;
                let integral = step.mean_integral * x0 + step.integral_on_z1 * z1 + step.integral_sd * z2;
                *amp = step.rho * x0 + step.sd * z1;
                *slot = eps2 * integral * inv_eps;
            }
        }
        self.time += dt;
    }

    /// `u(t, x)`.
    pub fn eval_velocity(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.arrays
            .superpose(&self.xi, &self.eta, 1.0 / self.epsilon, x, &mut v);
        v
    }

    pub fn eval_divergence(&self, x: &[f64]) -> f64 {
        self.arrays
            .divergence(&self.xi, &self.eta, 1.0 / self.epsilon, x)
    }

    pub fn snapshot(&self) -> FieldSnapshot {
        FieldSnapshot {
            modeset: Arc::clone(&self.modeset),
            arrays: Arc::clone(&self.arrays),
            xi: self.xi.clone().into(),
            eta: self.eta.clone().into(),
            time: self.time,
            epsilon: self.epsilon,
        }
    }
}

/// Frozen copy of a field: evaluable anywhere, never advanced.
#[derive(Debug, Clone)]
pub struct FieldSnapshot {
    modeset: Arc<ModeSet>,
    arrays: Arc<ModeArrays>,
    xi: Arc<[f64]>,
    eta: Arc<[f64]>,
    time: f64,
    epsilon: f64,
}

const SNAPSHOT_MAGIC: &[u8; 4] = b"OUF1";

impl FieldSnapshot {
    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn modeset(&self) -> &ModeSet {
        &self.modeset
    }

    pub fn xi(&self) -> &[f64] {
        &self.xi
    }

    pub fn eta(&self) -> &[f64] {
        &self.eta
    }

    pub fn eval_velocity(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.modeset.dim];
        self.arrays
            .superpose(&self.xi, &self.eta, 1.0 / self.epsilon, x, &mut v);
        v
    }

    pub fn eval_divergence(&self, x: &[f64]) -> f64 {
        self.arrays
            .divergence(&self.xi, &self.eta, 1.0 / self.epsilon, x)
    }

    /// Little-endian dump: `b"OUF1"`, `dim: u32`, `count: u64`, then per
    /// mode `k[dim], polarization[dim], weight, theta, xi, eta` as `f64`.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let d = self.modeset.dim;
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&(d as u32).to_le_bytes())?;
        w.write_all(&(self.modeset.len() as u64).to_le_bytes())?;
        for (j, m) in self.modeset.modes.iter().enumerate() {
            let mut rec: Vec<f64> = Vec::with_capacity(2 * d + 4);
            rec.extend_from_slice(&m.k[..d]);
            rec.extend_from_slice(&m.polarization[..d]);
            rec.extend_from_slice(&[m.weight, m.theta, self.xi[j], self.eta[j]]);
            for v in rec {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a dump written by [`write_to`](Self::write_to); `epsilon` and
    /// `time` are not part of the format.
    pub fn read_from<R: Read>(mut r: R, epsilon: f64) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Numerical("not an OUF1 snapshot".into()));
        }
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4)?;
        let dim = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b8)?;
        let count = u64::from_le_bytes(b8) as usize;
        if !(dim == 2 || dim == 3) {
            return Err(Error::Numerical(format!("snapshot dimension {dim}")));
        }
        let mut next = || -> Result<f64> {
            r.read_exact(&mut b8)?;
            Ok(f64::from_le_bytes(b8))
        };
        let mut modes = Vec::with_capacity(count);
        let mut xi = Vec::with_capacity(count);
        let mut eta = Vec::with_capacity(count);
        for _ in 0..count {
            let mut k = [0.0; 3];
            let mut p = [0.0; 3];
            for c in k.iter_mut().take(dim) {
                *c = next()?;
            }
            for c in p.iter_mut().take(dim) {
                *c = next()?;
            }
            let weight = next()?;
            let theta = next()?;
            xi.push(next()?);
            eta.push(next()?);
            modes.push(Mode {
                k,
                polarization: p,
                weight,
                theta,
            });
        }
        let modeset = Arc::new(ModeSet { dim, modes });
        Ok(FieldSnapshot {
            arrays: Arc::new(ModeArrays::new(&modeset)),
            modeset,
            xi: xi.into(),
            eta: eta.into(),
            time: 0.0,
            epsilon,
        })
    }
}

/// Monte-Carlo estimate of a tensor with its standard error.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEstimate {
    pub mean: Tensor,
    pub stderr: Tensor,
}

/// Estimates `E[(V(t,x+r)-V(t,x)) (x) (V(t+tau,x+r)-V(t+tau,x))]` of the
/// unscaled field over `n_samples` independent realizations.
pub fn structure_function(
    modeset: &Arc<ModeSet>,
    x: &[f64],
    r: &[f64],
    tau: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TensorEstimate> {
    if n_samples < 2 {
        return Err(Error::InvalidParams("structure_function needs n_samples >= 2".into()));
    }
    let d = modeset.dim;
    let xr: Vec<f64> = x.iter().zip(r).map(|(a, b)| a + b).collect();
    let mut sum = vec![0.0; d * d];
    let mut sum_sq = vec![0.0; d * d];
    for i in 0..n_samples {
        let mut field = FieldState::init_stationary(Arc::clone(modeset), 1.0, rng::derive_seed(seed, Domain::Replica, i as u64))?;
        let d1: Vec<f64> = field
            .eval_velocity(&xr)
            .iter()
            .zip(field.eval_velocity(x))
            .map(|(a, b)| a - b)
            .collect();
        field.advance(tau);
        let d2: Vec<f64> = field
            .eval_velocity(&xr)
            .iter()
            .zip(field.eval_velocity(x))
            .map(|(a, b)| a - b)
            .collect();
        for a in 0..d {
            for b in 0..d {
                let v = d1[a] * d2[b];
                sum[a * d + b] += v;
                sum_sq[a * d + b] += v * v;
            }
        }
    }
    let n = n_samples as f64;
    let mut mean = Tensor::zeros(d);
    let mut stderr = Tensor::zeros(d);
    for a in 0..d {
        for b in 0..d {
            let m = sum[a * d + b] / n;
            let var = ((sum_sq[a * d + b] / n - m * m) * n / (n - 1.0)).max(0.0);
            mean.set(a, b, m);
            stderr.set(a, b, (var / n).sqrt());
        }
    }
    Ok(TensorEstimate { mean, stderr })
}

/// Analytic structure function of the mode sum,
/// `sum w^2 p p^T (2 - 2 cos(k.r)) exp(-theta tau)`.
pub fn structure_function_exact(modeset: &ModeSet, r: &[f64], tau: f64) -> Tensor {
    let d = modeset.dim;
    let zero = vec![0.0; d];
    let c0 = modeset.lagged_covariance(&zero, tau);
    let cr = modeset.lagged_covariance(r, tau);
    let mut out = Tensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            out.set(i, j, 2.0 * (c0.get(i, j) - cr.get(i, j)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::{build_modeset, ExponentChoice, SpectrumParams};

    fn small_modeset() -> Arc<ModeSet> {
        Arc::new(build_modeset(&SpectrumParams::default(), ExponentChoice::Base, 8, 4).unwrap())
    }

    #[test]
    fn same_seed_same_state() {
        let ms = small_modeset();
        let a = FieldState::init_stationary(Arc::clone(&ms), 0.3, 11).unwrap();
        let b = FieldState::init_stationary(Arc::clone(&ms), 0.3, 11).unwrap();
        assert_eq!(a.xi(), b.xi());
        assert_eq!(a.eta(), b.eta());
        let c = FieldState::init_stationary(ms, 0.3, 12).unwrap();
        assert_ne!(a.xi(), c.xi());
    }

    #[test]
    fn rejects_nonpositive_epsilon() {
        assert!(FieldState::init_stationary(small_modeset(), 0.0, 1).is_err());
    }

    #[test]
    fn zero_step_is_identity() {
        let ms = small_modeset();
        let mut a = FieldState::init_stationary(ms, 0.5, 3).unwrap();
        let before = a.clone();
        a.advance(0.0);
        assert_eq!(a.xi(), before.xi());
        // the streams were not touched: the next real step matches
        let mut b = before;
        a.advance(0.1);
        b.advance(0.1);
        assert_eq!(a.xi(), b.xi());
    }

    #[test]
    fn transition_coefficient_closed_form() {
        let rho = transition_coefficient(2.0, 0.125, 0.5);
        assert!((rho - (-1f64).exp()).abs() < 1e-15);
        assert!((rho - 0.367_879_441_171_442_3).abs() < 1e-12);
    }

    #[test]
    fn empty_modeset_gives_zero() {
        let f = FieldState::init_stationary(ModeSet::empty(2), 1.0, 0).unwrap();
        assert_eq!(f.eval_velocity(&[0.3, 0.1]), vec![0.0, 0.0]);
        assert_eq!(f.eval_divergence(&[0.3, 0.1]), 0.0);
    }

    #[test]
    fn velocity_scales_with_inverse_epsilon() {
        let ms = small_modeset();
        let a = FieldState::init_stationary(Arc::clone(&ms), 1.0, 5).unwrap();
        let mut b = FieldState::init_stationary(ms, 0.5, 9).unwrap();
        b.set_amplitudes(a.xi(), a.eta());
        let x = [0.7, -1.3];
        let va = a.eval_velocity(&x);
        let vb = b.eval_velocity(&x);
        assert_eq!(vb[0], 2.0 * va[0]);
        assert_eq!(vb[1], 2.0 * va[1]);
    }

    #[test]
    fn longitudinal_single_mode_divergence() {
        let ms = ModeSet {
            dim: 2,
            modes: vec![Mode {
                k: [1.0, 0.0, 0.0],
                polarization: [1.0, 0.0, 0.0],
                weight: 0.8,
                theta: 1.0,
            }],
        };
        let mut f = FieldState::init_stationary(ms, 0.5, 0).unwrap();
        f.set_amplitudes(&[0.3], &[-1.1]);
        let x = [0.4, 2.0];
        let expect = -0.8 / 0.5 * (0.3 * 0.4f64.sin() - (-1.1) * 0.4f64.cos());
        assert!((f.eval_divergence(&x) - expect).abs() < 1e-15);
    }

    #[test]
    fn solenoidal_divergence_vanishes() {
        let ms = small_modeset();
        let f = FieldState::init_stationary(Arc::clone(&ms), 0.2, 1).unwrap();
        let scale: f64 = ms
            .modes
            .iter()
            .map(|m| m.weight * (m.k[0].hypot(m.k[1])))
            .sum::<f64>()
            / 0.2;
        for i in 0..20 {
            let x = [i as f64 * 0.37, -(i as f64) * 1.1];
            assert!(f.eval_divergence(&x).abs() < 1e-10 * scale);
        }
    }

    #[test]
    fn snapshot_round_trip() {
        let f = FieldState::init_stationary(small_modeset(), 0.5, 2).unwrap();
        let snap = f.snapshot();
        let mut buf = Vec::new();
        snap.write_to(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"OUF1");
        assert_eq!(buf.len(), 4 + 4 + 8 + snap.modeset().len() * 8 * 8);
        let back = FieldSnapshot::read_from(&buf[..], 0.5).unwrap();
        let x = [1.0, 2.0];
        assert_eq!(back.eval_velocity(&x), snap.eval_velocity(&x));
        assert!(FieldSnapshot::read_from(&b"XXXX"[..], 1.0).is_err());
    }

    #[test]
    fn ou_step_small_rate_limits() {
        // lambda h -> 0: amplitude frozen, integral = x0 h
        let s = OuStep::new(1e-12, 0.5);
        assert!((s.rho - 1.0).abs() < 1e-11);
        assert!((s.mean_integral - 0.5).abs() < 1e-11);
        assert!(s.integral_sd < 1e-5);
        // series and closed form agree at the switch point
        let below = integral_bracket(0.1 - 1e-12);
        let above = integral_bracket(0.1 + 1e-12);
        assert!((below - above).abs() < 1e-13);
    }

    #[test]
    fn ou_step_moments_match_brute_force() {
        // fine Euler discretization of one OU path, many samples, compare Var(I) and Cov(I, x_h)
        use rand::SeedableRng;
        use rand_distr::{Distribution, StandardNormal};
        let (lambda, h) = (1.7, 0.9);
        let step = OuStep::new(lambda, h);
        let var_x = step.sd * step.sd;
        let cov = step.integral_on_z1 * step.sd;
        let var_i = step.integral_on_z1.powi(2) + step.integral_sd.powi(2);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n_sub = 400;
        let dt = h / n_sub as f64;
        let (mut s_ii, mut s_ix, mut s_xx) = (0.0, 0.0, 0.0);
        let n = 20_000;
        for _ in 0..n {
            let mut x = 0.0f64;
            let mut integral = 0.0;
            let a = (-lambda * dt).exp();
            let b = (1.0 - a * a).sqrt();
            for _ in 0..n_sub {
                let z: f64 = StandardNormal.sample(&mut r);
                let next = a * x + b * z;
                integral += 0.5 * (x + next) * dt;
                x = next;
            }
            s_ii += integral * integral;
            s_ix += integral * x;
            s_xx += x * x;
        }
        let n = n as f64;
        assert!((s_xx / n - var_x).abs() < 4.0 * var_x * (2.0 / n).sqrt());
        assert!((s_ix / n - cov).abs() < 0.03 * cov.abs());
        assert!((s_ii / n - var_i).abs() < 0.03 * var_i);
    }
}
