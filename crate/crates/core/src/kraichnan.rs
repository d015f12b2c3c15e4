//! White-noise-in-time (Kraichnan) velocity fields.
//!
//! The limiting field is a Brownian vector field `B_t(x)` with spatial
//! covariance `(2/a) Gamma^(1)` built from the `alpha + beta` spectrum.
//! Particles move by `X <- X + dB(X) + b1 dt + sqrt(kappa0 dt) N`, every
//! particle of one call seeing the same increment `dB`.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ou_field::ModeArrays;
use crate::rng::{self, Domain};
use crate::spectra::{build_modeset, sphere_area, ExponentChoice, Mode, ModeSet, SpectrumParams};
use crate::transport::{MolecularNoise, ParticleEnsemble};

/// Itô drift `(1/2) sum_i d_i Gamma_ij(0)` of the limiting field.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftCorrection {
    pub b1: Vec<f64>,
}

impl DriftCorrection {
    pub fn zero(dim: usize) -> Self {
        DriftCorrection { b1: vec![0.0; dim] }
    }

    pub fn is_zero(&self) -> bool {
        self.b1.iter().all(|v| *v == 0.0)
    }
}

/// Assembles the drift by angular quadrature of the `k_i`-weighted spectrum.
///
/// The integrand `i k_i E(k) P_ij(k_hat)` is odd in `k`, so for an isotropic
/// band the quadrature over antipodal direction pairs cancels exactly. The
/// radial moment it multiplies is finite for the cutoff-free compressible
/// field only when `alpha + beta > 3/2`, which is checked first.
pub fn drift_correction(params: &SpectrumParams) -> Result<DriftCorrection> {
    params.validate()?;
    params.check_limit_well_posed()?;
    let d = params.dim;
    if params.is_solenoidal() {
        // k_i P_ij = 0 for transverse polarization
        return Ok(DriftCorrection::zero(d));
    }
    let gamma = ExponentChoice::Limit.exponent(params);
    // int k * k^(1 - 2 gamma) dk
    let moment = crate::spectra::power_moment(gamma - 0.5, params.k_min(), params.k_max());
    let longitudinal = 1.0 - params.solenoidal_fraction;
    let dirs = antipodal_directions(d);
    let weight = sphere_area(d) / dirs.len() as f64;
    let mut b1 = vec![0.0; d];
    for n in &dirs {
        // sum_i n_i P_ij(n) = (1 - f) n_j; transverse part drops out
        for j in 0..d {
            b1[j] += weight * longitudinal * n[j];
        }
    }
    let scale = 0.5 * 2.0 / params.a * params.e0 * moment;
    for v in b1.iter_mut() {
        *v *= scale;
    }
    Ok(DriftCorrection { b1 })
}

fn antipodal_directions(dim: usize) -> Vec<[f64; 3]> {
    use std::f64::consts::PI;
    let half: Vec<[f64; 3]> = if dim == 2 {
        (0..64)
            .map(|j| {
                let phi = PI * (j as f64 + 0.5) / 64.0;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect()
    } else {
        (0..256)
            .map(|j| {
                let z = 1.0 - (j as f64 + 0.5) / 256.0;
                let rho = (1.0 - z * z).sqrt();
                let phi = 2.0 * PI * (j as f64 * 0.618_033_988_749_894_9).fract();
                [rho * phi.cos(), rho * phi.sin(), z]
            })
            .collect()
    };
    half.iter()
        .flat_map(|n| [*n, [-n[0], -n[1], -n[2]]])
        .collect()
}

/// Mode-sum representation of the limiting Brownian field.
#[derive(Debug, Clone)]
pub struct KraichnanField {
    modeset: Arc<ModeSet>,
    arrays: Arc<ModeArrays>,
    drift: DriftCorrection,
}

/// Increment of the Brownian field over one step, evaluable anywhere.
#[derive(Debug, Clone)]
pub struct BrownianFieldIncrement {
    arrays: Arc<ModeArrays>,
    pub gaussians: Vec<[f64; 2]>,
    pub dt: f64,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl BrownianFieldIncrement {
    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        self.arrays.superpose(&self.a, &self.b, 1.0, x, out);
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.arrays.dim];
        self.eval_into(x, &mut v);
        v
    }
}

impl KraichnanField {
    /// Limit-exponent mode set with variance `2/a` times the spectrum.
    pub fn new(params: &SpectrumParams, shells: usize, dirs_per_shell: usize) -> Result<Self> {
        let drift = drift_correction(params)?;
        let ms = build_modeset(params, ExponentChoice::Limit, shells, dirs_per_shell)?.scaled(2.0 / params.a);
        Ok(KraichnanField::from_modeset(ms, drift))
    }

    pub fn from_modeset(modeset: ModeSet, drift: DriftCorrection) -> Self {
        let arrays = Arc::new(ModeArrays::new(&modeset));
        KraichnanField {
            modeset: Arc::new(modeset),
            arrays,
            drift,
        }
    }

    /// White-noise limit of an OU mode set: each amplitude's time integral
    /// `int eps^-1 xi(s / eps^2) ds` tends to a Brownian motion of variance
    /// `2 / theta` per unit time. Mode sums pair `k` with `-k`, so the drift
    /// vanishes identically.
    pub fn white_noise_limit(ou: &ModeSet) -> Result<Self> {
        let mut modes = Vec::with_capacity(ou.len());
        for m in &ou.modes {
            if !(m.theta > 0.0) {
                return Err(Error::InvalidParams("white-noise limit needs positive mode rates".into()));
            }
            modes.push(Mode {
                weight: m.weight * (2.0 / m.theta).sqrt(),
                ..*m
            });
        }
        Ok(KraichnanField::from_modeset(
            ModeSet { dim: ou.dim, modes },
            DriftCorrection::zero(ou.dim),
        ))
    }

    pub fn modeset(&self) -> &ModeSet {
        &self.modeset
    }

    pub fn dim(&self) -> usize {
        self.modeset.dim
    }

    pub fn drift(&self) -> &DriftCorrection {
        &self.drift
    }

    pub fn with_drift(mut self, drift: DriftCorrection) -> Self {
        self.drift = drift;
        self
    }

    /// Fresh increment over `dt`: `sqrt(dt)` times the mode sum with new
    /// standard gaussians.
    pub fn sample_increment(&self, dt: f64, rng: &mut ChaCha8Rng) -> Result<BrownianFieldIncrement> {
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt = {dt} must be positive")));
        }
        let n = self.modeset.len();
        let s = dt.sqrt();
        let gaussians: Vec<[f64; 2]> = (0..n).map(|_| [rng::normal(rng), rng::normal(rng)]).collect();
        Ok(BrownianFieldIncrement {
            arrays: Arc::clone(&self.arrays),
            a: gaussians.iter().map(|g| s * g[0]).collect(),
            b: gaussians.iter().map(|g| s * g[1]).collect(),
            gaussians,
            dt,
        })
    }

    /// One Euler-Maruyama step for every particle against the shared
    /// increment plus independent molecular noise.
    pub fn advect(
        &self,
        particles: &mut ParticleEnsemble,
        increment: &BrownianFieldIncrement,
        kappa0: f64,
        noise: &mut MolecularNoise,
    ) {
        advect_positions(
            &mut particles.positions,
            particles.dim,
            increment,
            &self.drift.b1,
            kappa0,
            noise,
        );
    }

    /// Runs `positions` over `[0, t]` with steps of at most `dt`; `observe`
    /// sees the positions after every step.
    pub fn run_observed(
        &self,
        positions: &mut [f64],
        t: f64,
        dt: f64,
        kappa0: f64,
        seed: u64,
        mut observe: impl FnMut(usize, f64, &[f64]),
    ) -> Result<()> {
        if !(dt > 0.0) || !(t >= 0.0) || !(kappa0 >= 0.0) {
            return Err(Error::InvalidParams("need dt > 0, t >= 0, kappa0 >= 0".into()));
        }
        if t == 0.0 {
            return Ok(());
        }
        let d = self.dim();
        let n = (t / dt - 1e-9).ceil().max(1.0) as usize;
        let h = t / n as f64;
        let mut inc_rng = rng::stream(seed, Domain::Increment, 0);
        let mut noise = MolecularNoise::new(seed, positions.len() / d);
        for step in 0..n {
            let inc = self.sample_increment(h, &mut inc_rng)?;
            advect_positions(positions, d, &inc, &self.drift.b1, kappa0, &mut noise);
            observe(step + 1, (step + 1) as f64 * h, positions);
        }
        Ok(())
    }
}

fn advect_positions(
    positions: &mut [f64],
    d: usize,
    inc: &BrownianFieldIncrement,
    b1: &[f64],
    kappa0: f64,
    noise: &mut MolecularNoise,
) {
    let sigma = (kappa0 * inc.dt).sqrt();
    let dt = inc.dt;
    positions
        .par_chunks_mut(d)
        .zip(noise.streams_mut().par_iter_mut())
        .with_min_len(16)
        .for_each(|(x, s)| {
            let mut dx = [0.0; 3];
            inc.eval_into(x, &mut dx[..d]);
            for c in 0..d {
                x[c] += dx[c] + b1[c] * dt;
                if sigma > 0.0 {
                    x[c] += sigma * rng::normal(s);
                }
            }
        });
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::covariance;

    fn params() -> SpectrumParams {
        SpectrumParams {
            ell0: 4.0,
            ell1: 0.25,
            e0: 1.0,
            ..SpectrumParams::default()
        }
    }

    #[test]
    fn drift_vanishes_and_guard_fires() {
        let p = params();
        assert!(drift_correction(&p).unwrap().is_zero());
        let c = SpectrumParams {
            solenoidal_fraction: 0.4,
            ..p
        };
        let b = drift_correction(&c).unwrap();
        assert!(b.b1.iter().all(|v| v.abs() < 1e-12));
        let bad = SpectrumParams {
            alpha: 1.2,
            beta: 0.2,
            ell1: 0.0,
            solenoidal_fraction: 0.5,
            ..p
        };
        assert!(matches!(
            drift_correction(&bad),
            Err(Error::IllPosedCompressibleLimit { .. })
        ));
    }

    #[test]
    fn increment_variance_matches_limit_covariance() {
        let p = params();
        let field = KraichnanField::new(&p, 48, 8).unwrap();
        let mut rng = rng::stream(3, Domain::Increment, 0);
        let n = 10_000;
        let dt = 0.01;
        let mut s2 = 0.0;
        let mut s4 = 0.0;
        for _ in 0..n {
            let inc = field.sample_increment(dt, &mut rng).unwrap();
            let v = inc.eval(&[0.3, -0.7])[0].powi(2) / dt;
            s2 += v;
            s4 += v * v;
        }
        let mean = s2 / n as f64;
        let se = ((s4 / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = 2.0 / p.a * covariance(&p, ExponentChoice::Limit, &[0.0, 0.0]).unwrap().get(0, 0);
        assert!((mean - exact).abs() < 4.0 * se + 2e-3 * exact, "{mean} vs {exact} se {se}");
    }

    #[test]
    fn disjoint_increments_uncorrelated() {
        let field = KraichnanField::new(&params(), 16, 4).unwrap();
        let mut rng = rng::stream(5, Domain::Increment, 0);
        let n = 10_000;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for _ in 0..n {
            let a = field.sample_increment(0.1, &mut rng).unwrap().eval(&[0.0, 0.0])[1];
            let b = field.sample_increment(0.1, &mut rng).unwrap().eval(&[0.0, 0.0])[1];
            sxy += a * b;
            sxx += a * a;
            syy += b * b;
        }
        let corr = sxy / (sxx * syy).sqrt();
        assert!(corr.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn accumulated_difference_has_linear_structure() {
        let p = params();
        let field = KraichnanField::new(&p, 32, 8).unwrap();
        let x = [0.0, 0.0];
        let y = [0.4, 0.1];
        let steps = 10;
        let dt = 0.05;
        let n = 4000;
        let mut rng = rng::stream(9, Domain::Increment, 0);
        let mut vals = Vec::with_capacity(n);
        for _ in 0..n {
            let mut acc = 0.0;
            for _ in 0..steps {
                let inc = field.sample_increment(dt, &mut rng).unwrap();
                acc += inc.eval(&x)[0] - inc.eval(&y)[0];
            }
            vals.push(acc * acc);
        }
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        let t = steps as f64 * dt;
        let ms = field.modeset();
        let r = [x[0] - y[0], x[1] - y[1]];
        let exact = t * (2.0 * ms.covariance(&[0.0, 0.0]).get(0, 0) - 2.0 * ms.covariance(&r).get(0, 0));
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} se {se}");
    }

    #[test]
    fn zero_amplitude_is_brownian_motion() {
        let p = SpectrumParams { e0: 0.0, ..params() };
        let field = KraichnanField::new(&p, 8, 4).unwrap();
        let n = 20_000;
        let mut pos = vec![0.0; 2 * n];
        field.run_observed(&mut pos, 1.0, 0.1, 0.5, 1, |_, _, _| {}).unwrap();
        let msd: Vec<f64> = pos.chunks(2).map(|x| x[0] * x[0] + x[1] * x[1]).collect();
        let mean = msd.iter().sum::<f64>() / n as f64;
        let se = (msd.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n * n) as f64).sqrt();
        assert!((mean - 2.0 * 0.5).abs() < 4.0 * se);
    }

    #[test]
    fn zero_drift_step_matches_driftless_step() {
        let field = KraichnanField::new(&params(), 8, 4).unwrap();
        let bare = field.clone().with_drift(DriftCorrection::zero(2));
        let mut a = vec![0.1, 0.2, 1.0, -3.0];
        let mut b = a.clone();
        field.run_observed(&mut a, 0.5, 0.05, 0.2, 4, |_, _, _| {}).unwrap();
        bare.run_observed(&mut b, 0.5, 0.05, 0.2, 4, |_, _, _| {}).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn white_noise_limit_weights() {
        let p = params();
        let ms = build_modeset(&p, ExponentChoice::Base, 8, 4).unwrap();
        let k = KraichnanField::white_noise_limit(&ms).unwrap();
        for (a, b) in ms.modes.iter().zip(&k.modeset().modes) {
            assert!((b.weight * b.weight - 2.0 * a.weight * a.weight / a.theta).abs() < 1e-14);
        }
    }
}
