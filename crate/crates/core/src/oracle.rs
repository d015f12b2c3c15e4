//! Predictions of the limiting model that do not go through any mode sum.
//!
//! The `n`-point motion of the white-noise limit is the diffusion with
//! generator `(kappa0/2) sum_j lap_j + (1/a) sum_ij Gamma(x_i - x_j) : grad_i grad_j`.
//! It is simulated here by stepping all points with jointly gaussian
//! increments whose covariance comes from the quadrature covariance table.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};
use crate::spectra::{effective_diffusivity, CovarianceTable, ExponentChoice, SpectrumParams};
use crate::transport::{Observable, ObservableKind};

pub const MAX_POINTS: usize = 4;

/// Relative eigenvalue floor below which a block covariance is treated as
/// broken rather than rounded.
pub const PSD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NPointState {
    pub dim: usize,
    /// `n x dim` row-major.
    pub positions: Vec<f64>,
    pub time: f64,
}

impl NPointState {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidParams("need at least one point of matching dimension".into()));
        }
        Ok(NPointState {
            dim,
            positions,
            time: 0.0,
        })
    }

    pub fn n(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }
}

/// Reusable simulator of the `n`-point limiting diffusion.
#[derive(Debug, Clone)]
pub struct GeneratorOracle {
    params: SpectrumParams,
    table: CovarianceTable,
}

impl GeneratorOracle {
    pub fn new(params: &SpectrumParams) -> Result<Self> {
        params.validate()?;
        params.check_limit_well_posed()?;
        let table = CovarianceTable::new(params, ExponentChoice::Limit, 2.0 / params.a)?;
        Ok(GeneratorOracle { params: *params, table })
    }

    pub fn params(&self) -> &SpectrumParams {
        &self.params
    }

    /// One step of size `h`: the field part is sampled jointly over the
    /// distinct positions, so coincident points receive identical field
    /// increments; molecular noise is independent per point.
    fn step(&self, x: &mut [f64], h: f64, rng: &mut rand_chacha::ChaCha8Rng) -> Result<()> {
        let d = self.params.dim;
        let n = x.len() / d;
        let mut unique: Vec<usize> = Vec::with_capacity(n);
        let mut owner = vec![0usize; n];
        for i in 0..n {
            match unique.iter().position(|&u| x[u * d..(u + 1) * d] == x[i * d..(i + 1) * d]) {
                Some(k) => owner[i] = k,
                None => {
                    owner[i] = unique.len();
                    unique.push(i);
                }
            }
        }
        let m = unique.len() * d;
        let mut cov = DMatrix::<f64>::zeros(m, m);
        let mut block = [0.0; 9];
        let mut r = [0.0; 3];
        for (a, &ia) in unique.iter().enumerate() {
            for (b, &ib) in unique.iter().enumerate().skip(a) {
                for c in 0..d {
                    r[c] = x[ia * d + c] - x[ib * d + c];
                }
                self.table.eval_into(&r[..d], &mut block[..d * d]);
                for p in 0..d {
                    for q in 0..d {
                        let v = block[p * d + q] * h;
                        cov[(a * d + p, b * d + q)] = v;
                        cov[(b * d + q, a * d + p)] = v;
                    }
                }
            }
        }
        let increments = sample_gaussian(cov, rng)?;
        let sigma = (self.params.kappa0 * h).sqrt();
        for i in 0..n {
            for c in 0..d {
                x[i * d + c] += increments[owner[i] * d + c];
                if sigma > 0.0 {
                    x[i * d + c] += sigma * rng::normal(rng);
                }
            }
        }
        Ok(())
    }

    /// Endpoints of `n_samples` independent runs from `state` over `t`.
    pub fn diffuse(&self, state: &NPointState, t: f64, dt: f64, n_samples: usize, seed: u64) -> Result<Vec<NPointState>> {
        let mut out = Vec::with_capacity(n_samples);
        let runs: Vec<Result<Vec<f64>>> = (0..n_samples)
            .into_par_iter()
            .map(|s| {
                let mut x = state.positions.clone();
                self.run(&mut x, &[t], dt, s as u64, seed, |_, _| {})?;
                Ok(x)
            })
            .collect();
        for r in runs {
            out.push(NPointState {
                dim: state.dim,
                positions: r?,
                time: state.time + t,
            });
        }
        Ok(out)
    }

    /// Runs one sample through the increasing `times`, calling `observe`
    /// with the index of each time reached.
    fn run(
        &self,
        x: &mut [f64],
        times: &[f64],
        dt: f64,
        sample: u64,
        seed: u64,
        mut observe: impl FnMut(usize, &[f64]),
    ) -> Result<()> {
        check_points(x.len(), self.params.dim)?;
        if !(dt > 0.0) {
            return Err(Error::InvalidParams(format!("dt = {dt} must be positive")));
        }
        let mut rng = rng::stream(seed, Domain::Generator, sample);
        let mut now = 0.0;
        for (k, &target) in times.iter().enumerate() {
            if !(target >= now) {
                return Err(Error::InvalidParams("times must be nonnegative and increasing".into()));
            }
            let span = target - now;
            if span > 0.0 {
                let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
                let h = span / steps as f64;
                for _ in 0..steps {
                    self.step(x, h, &mut rng)?;
                }
            }
            now = target;
            observe(k, x);
        }
        Ok(())
    }

    /// `E|x1 - x2|^2` on `t_grid` for a pair started at separation `r0`.
    pub fn pair_dispersion(&self, r0: &[f64], t_grid: &[f64], dt: f64, n_samples: usize, seed: u64) -> Result<PairDispersionCurve> {
        let d = self.params.dim;
        if r0.len() != d {
            return Err(Error::InvalidParams("separation has the wrong dimension".into()));
        }
        if n_samples == 0 {
            return Err(Error::InvalidParams("need at least one sample".into()));
        }
        let start: Vec<f64> = (0..d).map(|_| 0.0).chain(r0.iter().copied()).collect();
        let runs: Vec<Result<Vec<f64>>> = (0..n_samples)
            .into_par_iter()
            .map(|s| {
                let mut x = start.clone();
                let mut seps = vec![0.0; t_grid.len()];
                self.run(&mut x, t_grid, dt, s as u64, seed, |k, x| {
                    seps[k] = (0..d).map(|c| (x[c] - x[d + c]).powi(2)).sum();
                })?;
                Ok(seps)
            })
            .collect();
        let mut sum = vec![0.0; t_grid.len()];
        let mut sum_sq = vec![0.0; t_grid.len()];
        for r in runs {
            for (k, v) in r?.into_iter().enumerate() {
                sum[k] += v;
                sum_sq[k] += v * v;
            }
        }
        let n = n_samples as f64;
        let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let stderr = mean
            .iter()
            .zip(&sum_sq)
            .map(|(m, s2)| {
                if n_samples > 1 {
                    ((s2 / n - m * m).max(0.0) * n / (n - 1.0) / n).sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        Ok(PairDispersionCurve {
            times: t_grid.to_vec(),
            mean_sq_separation: mean,
            stderr,
        })
    }
}

fn check_points(len: usize, dim: usize) -> Result<()> {
    let n = len / dim;
    if n == 0 || n > MAX_POINTS {
        return Err(Error::InvalidParams(format!(
            "the generator oracle supports 1 to {MAX_POINTS} points, got {n}"
        )));
    }
    Ok(())
}

/// Draws `N(0, cov)` through a clamped symmetric eigendecomposition.
fn sample_gaussian(cov: DMatrix<f64>, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Vec<f64>> {
    let m = cov.nrows();
    let scale = (0..m).map(|i| cov[(i, i)].abs()).fold(0.0, f64::max);
    let z: Vec<f64> = (0..m).map(|_| rng::normal(rng)).collect();
    if scale == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let eig = SymmetricEigen::new(cov);
    let mut out = vec![0.0; m];
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda < -PSD_FLOOR * scale {
            return Err(Error::Numerical(format!(
                "block covariance has eigenvalue {lambda:e} (scale {scale:e}); not positive semidefinite"
            )));
        }
        let s = lambda.max(0.0).sqrt() * z[k];
        for i in 0..m {
            out[i] += eig.eigenvectors[(i, k)] * s;
        }
    }
    Ok(out)
}

/// Convenience wrapper building the oracle for a single call.
pub fn generator_diffuse(
    state: &NPointState,
    params: &SpectrumParams,
    t: f64,
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<NPointState>> {
    GeneratorOracle::new(params)?.diffuse(state, t, dt, n_samples, seed)
}

/// Mean scalar of the limit for gaussian-blob initial data: the blob spreads
/// by the isotropic effective diffusivity, `w^2 -> w^2 + K t`.
pub fn mean_scalar_exact(t0: &Observable, params: &SpectrumParams, t: f64, x: &[f64]) -> Result<f64> {
    let k = isotropic_diffusivity(params)?;
    mean_scalar_with(t0, k, t, x)
}

/// Scalar `K` of an isotropic `K_eff = K I`.
pub fn isotropic_diffusivity(params: &SpectrumParams) -> Result<f64> {
    let keff = effective_diffusivity(params)?;
    let d = params.dim;
    let k = keff.get(0, 0);
    let tol = 1e-9 * k.abs().max(1e-300);
    for i in 0..d {
        for j in 0..d {
            let expect = if i == j { k } else { 0.0 };
            if (keff.get(i, j) - expect).abs() > tol {
                return Err(Error::InvalidParams("effective diffusivity is not isotropic".into()));
            }
        }
    }
    Ok(k)
}

/// [`mean_scalar_exact`] for a known diffusivity.
pub fn mean_scalar_with(t0: &Observable, k: f64, t: f64, x: &[f64]) -> Result<f64> {
    let ObservableKind::GaussianBlob { center, width, height } = &t0.kind else {
        return Err(Error::InvalidObservable("closed-form mean needs a gaussian blob".into()));
    };
    if !(t >= 0.0) {
        return Err(Error::InvalidParams(format!("t = {t} must be nonnegative")));
    }
    if t == 0.0 {
        return Ok(t0.eval(x));
    }
    let w2 = width * width;
    let s2 = w2 + k * t;
    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
    Ok(height * (w2 / s2).powf(x.len() as f64 / 2.0) * (-r2 / (2.0 * s2)).exp())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDispersionCurve {
    pub times: Vec<f64>,
    pub mean_sq_separation: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl PairDispersionCurve {
    /// CSV with columns `t, value, stderr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,value,stderr")?;
        for k in 0..self.times.len() {
            writeln!(out, "{},{},{}", self.times[k], self.mean_sq_separation[k], self.stderr[k])?;
        }
        out.flush()?;
        Ok(())
    }
}

pub fn pair_dispersion_curve(
    params: &SpectrumParams,
    r0: &[f64],
    t_grid: &[f64],
    dt: f64,
    n_samples: usize,
    seed: u64,
) -> Result<PairDispersionCurve> {
    GeneratorOracle::new(params)?.pair_dispersion(r0, t_grid, dt, n_samples, seed)
}
