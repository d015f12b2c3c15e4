//! Power spectra, covariance tensors and quadrature mode sets.
//!
//! The spectrum of a band-limited power law is
//! `E(gamma, k) = e0 |k|^(1 - 2 gamma)` for `1/ell0 < |k| < 1/ell1` and zero
//! elsewhere. Covariances integrate `E(gamma, k) |k|^(1-d) P(k_hat)` over
//! wavevector space, where `P` is the polarization projector fixed by
//! `solenoidal_fraction`.

mod covariance;
mod modes;

pub use covariance::{covariance, covariance_with_tol, CovarianceTable, DEFAULT_COVARIANCE_TOL};
pub use modes::{build_modeset, build_modeset_randomized, Mode, ModeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Tensor;

/// All model constants of the OU velocity field and its white-noise limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumParams {
    pub alpha: f64,
    pub beta: f64,
    /// Inverse-time rate constant of the mode decorrelation `a |k|^(2 beta)`.
    pub a: f64,
    /// Integral scale; the band starts at `1/ell0`.
    pub ell0: f64,
    /// Viscous scale; `ell1 = 0` means no ultraviolet cutoff.
    pub ell1: f64,
    pub dim: usize,
    pub e0: f64,
    pub kappa: f64,
    pub kappa0: f64,
    /// 1 for divergence-free fields, 0 for purely longitudinal ones.
    pub solenoidal_fraction: f64,
}

impl Default for SpectrumParams {
    fn default() -> Self {
        SpectrumParams {
            alpha: 4.0 / 3.0,
            beta: 1.0 / 3.0,
            a: 1.0,
            ell0: 20.0,
            ell1: 0.05,
            dim: 2,
            e0: 0.002,
            kappa: 0.0,
            kappa0: 0.0,
            solenoidal_fraction: 1.0,
        }
    }
}

impl SpectrumParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.alpha > 1.0 && self.alpha < 2.0) {
            return bad(format!("alpha = {} must lie in (1, 2)", self.alpha));
        }
        // beta = 0 is the degenerate case of a k-independent correlation time.
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta = {} must be nonnegative", self.beta));
        }
        if !(self.a > 0.0 && self.a.is_finite()) {
            return bad(format!("a = {} must be positive", self.a));
        }
        if !(self.ell0 > 0.0 && self.ell0.is_finite()) {
            return bad(format!("ell0 = {} must be positive and finite", self.ell0));
        }
        if !(self.ell1 >= 0.0 && self.ell1 < self.ell0) {
            return bad(format!("ell1 = {} must lie in [0, ell0)", self.ell1));
        }
        if !(self.dim == 2 || self.dim == 3) {
            return bad(format!("dim = {} is not supported (2 or 3)", self.dim));
        }
        if !(self.e0 >= 0.0 && self.e0.is_finite()) {
            return bad(format!("e0 = {} must be nonnegative", self.e0));
        }
        if !(self.kappa >= 0.0 && self.kappa0 >= 0.0) {
            return bad("kappa and kappa0 must be nonnegative".into());
        }
        if !(0.0..=1.0).contains(&self.solenoidal_fraction) {
            return bad(format!(
                "solenoidal_fraction = {} must lie in [0, 1]",
                self.solenoidal_fraction
            ));
        }
        Ok(())
    }

    pub fn k_min(&self) -> f64 {
        1.0 / self.ell0
    }

    /// Upper band edge; infinite when `ell1 = 0`.
    pub fn k_max(&self) -> f64 {
        if self.ell1 > 0.0 {
            1.0 / self.ell1
        } else {
            f64::INFINITY
        }
    }

    pub fn is_solenoidal(&self) -> bool {
        self.solenoidal_fraction >= 1.0
    }

    pub fn with_cutoff(mut self, ell1: f64) -> Self {
        self.ell1 = ell1;
        self
    }

    /// Rejects the compressible, cutoff-free limit when the limiting field
    /// is too rough for the Stratonovich correction to exist.
    pub fn check_limit_well_posed(&self) -> Result<()> {
        let sum = self.alpha + self.beta;
        if !self.is_solenoidal() && self.ell1 == 0.0 && sum <= 1.5 {
            return Err(Error::IllPosedCompressibleLimit { sum });
        }
        Ok(())
    }
}

/// Which power-law exponent a spectrum evaluation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExponentChoice {
    /// `alpha`: the OU field itself.
    Base,
    /// `alpha + beta`: the white-noise limit.
    Limit,
    /// `alpha + 2 beta`: the time-integrated field.
    Integrated,
}

impl ExponentChoice {
    pub fn exponent(self, params: &SpectrumParams) -> f64 {
        match self {
            ExponentChoice::Base => params.alpha,
            ExponentChoice::Limit => params.alpha + params.beta,
            ExponentChoice::Integrated => params.alpha + 2.0 * params.beta,
        }
    }
}

/// `E(gamma, k)` evaluated at wavevector `k`; exactly zero outside the band.
pub fn spectral_density(params: &SpectrumParams, choice: ExponentChoice, k: &[f64]) -> f64 {
    let norm = k.iter().map(|c| c * c).sum::<f64>().sqrt();
    radial_density(params, choice.exponent(params), norm)
}

pub(crate) fn radial_density(params: &SpectrumParams, exponent: f64, k: f64) -> f64 {
    if k > params.k_min() && k < params.k_max() {
        params.e0 * k.powf(1.0 - 2.0 * exponent)
    } else {
        0.0
    }
}

/// Area of the unit sphere `S^(d-1)`.
pub fn sphere_area(dim: usize) -> f64 {
    use std::f64::consts::PI;
    match dim {
        2 => 2.0 * PI,
        3 => 4.0 * PI,
        d => 2.0 * PI.powf(d as f64 / 2.0) / libm::tgamma(d as f64 / 2.0),
    }
}

/// `int_lo^hi k^(1 - 2 gamma) dk`, with `hi = inf` allowed when `gamma > 1`.
pub(crate) fn power_moment(exponent: f64, lo: f64, hi: f64) -> f64 {
    let p = 2.0 - 2.0 * exponent;
    if p.abs() < 1e-14 {
        return (hi / lo).ln();
    }
    if hi.is_infinite() {
        return -lo.powf(p) / p;
    }
    (hi.powf(p) - lo.powf(p)) / p
}

/// Trace of the one-point covariance, `int E(gamma,k) |k|^(1-d) dk`.
pub fn variance_trace(params: &SpectrumParams, choice: ExponentChoice) -> f64 {
    let gamma = choice.exponent(params);
    params.e0 * sphere_area(params.dim) * power_moment(gamma, params.k_min(), params.k_max())
}

/// Parameters of the limiting white-noise field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpectrum {
    pub params: SpectrumParams,
    /// `alpha + beta`.
    pub exponent: f64,
    /// `2 e0 / a`.
    pub amplitude: f64,
    /// Spatial Hurst exponent `alpha + beta - 1`.
    pub hurst: f64,
}

impl LimitSpectrum {
    /// `2 a^-1 E(alpha + beta, k)` at a radial wavenumber.
    pub fn density(&self, k: f64) -> f64 {
        2.0 / self.params.a * radial_density(&self.params, self.exponent, k)
    }
}

pub fn limit_spectrum(params: &SpectrumParams) -> Result<LimitSpectrum> {
    params.validate()?;
    params.check_limit_well_posed()?;
    let exponent = params.alpha + params.beta;
    Ok(LimitSpectrum {
        params: *params,
        exponent,
        amplitude: 2.0 * params.e0 / params.a,
        hurst: exponent - 1.0,
    })
}

/// `kappa0 I + (2/a) Gamma^(1)(0)`: the diffusion tensor of the one-point
/// limiting generator.
pub fn effective_diffusivity(params: &SpectrumParams) -> Result<Tensor> {
    params.validate()?;
    params.check_limit_well_posed()?;
    let gamma0 = covariance(params, ExponentChoice::Limit, &vec![0.0; params.dim])?;
    let d = params.dim;
    let mut out = Tensor::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut v = 2.0 / params.a * gamma0.get(i, j);
            if i == j {
                v += params.kappa0;
            }
            out.set(i, j, v);
        }
    }
    Ok(out)
}
