//! Covariance tensors of isotropic band-limited power-law spectra.
//!
//! The angular integral is done in closed form (Bessel functions), which
//! leaves radial integrals `int k^mu f(k r) dk` with `mu = 1 - 2 gamma`.
//! Finite bands are integrated panel by panel; an infinite band
//! (`ell1 = 0`) subtracts a known Mellin transform instead.

use std::f64::consts::PI;

use super::{power_moment, sphere_area, ExponentChoice, SpectrumParams};
use crate::error::{Error, Result};
use crate::linalg::{norm, Tensor};

pub const DEFAULT_COVARIANCE_TOL: f64 = 1e-8;

const MAX_BISECTIONS: u32 = 24;
const SERIES_RADIUS: f64 = 0.5;

/// Radial kernels produced by the angular integrals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    /// `J_0(t)`
    J0,
    /// `J_2(t)`
    J2,
    /// spherical `j_0(t)`
    S0,
    /// `j_1(t) / t`
    S1OverT,
    /// spherical `j_2(t)`
    S2,
}

impl Kernel {
    fn at_zero(self) -> f64 {
        match self {
            Kernel::J0 | Kernel::S0 => 1.0,
            Kernel::S1OverT => 1.0 / 3.0,
            Kernel::J2 | Kernel::S2 => 0.0,
        }
    }

    fn eval(self, t: f64) -> f64 {
        self.eval_minus_zero(t) + self.at_zero()
    }

    /// `f(t) - f(0)` without cancellation near the origin.
    fn eval_minus_zero(self, t: f64) -> f64 {
        if t < SERIES_RADIUS {
            return self
                .series()
                .iter()
                .filter(|(p, _)| *p > 0)
                .map(|&(p, c)| c * t.powi(p))
                .sum();
        }
        let t2 = t * t;
        let (s, c) = t.sin_cos();
        match self {
            Kernel::J0 => libm::j0(t) - 1.0,
            Kernel::J2 => libm::jn(2, t),
            Kernel::S0 => s / t - 1.0,
            Kernel::S1OverT => (s / t2 - c / t) / t - 1.0 / 3.0,
            Kernel::S2 => (3.0 / t2 - 1.0) * s / t - 3.0 * c / t2,
        }
    }

    /// Power series `sum c t^p` as `(p, c)` pairs, accurate for `t < SERIES_RADIUS`.
    fn series(self) -> Vec<(i32, f64)> {
        const TERMS: u32 = 12;
        let mut out = Vec::with_capacity(TERMS as usize);
        match self {
            Kernel::J0 | Kernel::J2 => {
                // J_n(t) = sum_k (-1)^k (t/2)^(2k+n) / (k! (k+n)!)
                let n = if self == Kernel::J0 { 0 } else { 2 };
                let mut c = 0.5f64.powi(n as i32) / (1..=n).map(f64::from).product::<f64>();
                for k in 0..TERMS {
                    out.push(((2 * k + n) as i32, c));
                    c *= -0.25 / (f64::from(k + 1) * f64::from(k + 1 + n));
                }
            }
            Kernel::S0 | Kernel::S1OverT | Kernel::S2 => {
                // j_n(t) = t^n sum_k (-t^2/2)^k / (k! (2n+2k+1)!!)
                let (n, shift) = match self {
                    Kernel::S0 => (0, 0),
                    Kernel::S1OverT => (1, -1),
                    _ => (2, 0),
                };
                let mut c = 1.0 / (0..=n).map(|i| f64::from(2 * i + 1)).product::<f64>();
                for k in 0..TERMS {
                    out.push(((2 * k + n) as i32 + shift, c));
                    c *= -0.5 / (f64::from(k + 1) * f64::from(2 * n + 2 * k + 3));
                }
            }
        }
        out
    }

    /// `int_0^upper t^mu (f(t) - f(0)) dt`; `upper <= SERIES_RADIUS` is exact
    /// term by term, the rest is integrated numerically.
    fn head_integral(self, mu: f64, upper: f64, tol: f64) -> Result<f64> {
        let s_hi = upper.min(SERIES_RADIUS);
        let mut total: f64 = self
            .series()
            .iter()
            .filter(|(p, _)| *p > 0)
            .map(|&(p, c)| c * s_hi.powf(mu + p as f64 + 1.0) / (mu + p as f64 + 1.0))
            .sum();
        if upper > SERIES_RADIUS {
            total += integrate_panels(|t| self.eval_minus_zero(t), mu, SERIES_RADIUS, upper, tol)?;
        }
        Ok(total)
    }

    /// `int_0^inf t^mu (f(t) - f(0)) dt`, valid for `-3 < mu < -1`.
    fn mellin(self, mu: f64) -> f64 {
        let half_pi = (PI / 2.0).sqrt();
        match self {
            Kernel::J0 => mellin_j(mu, 0.0),
            Kernel::J2 => mellin_j(mu, 2.0),
            Kernel::S0 => half_pi * mellin_j(mu - 0.5, 0.5),
            Kernel::S1OverT => half_pi * mellin_j(mu - 1.5, 1.5),
            Kernel::S2 => half_pi * mellin_j(mu - 0.5, 2.5),
        }
    }
}

/// `int_0^inf t^mu J_nu(t) dt` continued analytically below its strip.
fn mellin_j(mu: f64, nu: f64) -> f64 {
    2f64.powf(mu) * libm::tgamma((nu + mu + 1.0) / 2.0) / libm::tgamma((nu - mu + 1.0) / 2.0)
}

/// Decomposition `F(z) I + G(z) r_hat r_hat^T` of the angular integral of
/// `cos(z k_hat.r_hat) P(k_hat)` in terms of the basis kernels.
fn kernel_terms(dim: usize, solenoidal_fraction: f64) -> (Vec<(f64, Kernel)>, Vec<(f64, Kernel)>) {
    let f = solenoidal_fraction;
    let c1 = f / (dim - 1) as f64;
    let c2 = 1.0 - f * dim as f64 / (dim - 1) as f64;
    if dim == 2 {
        (
            vec![(PI * (2.0 * c1 + c2), Kernel::J0), (PI * c2, Kernel::J2)],
            vec![(-2.0 * PI * c2, Kernel::J2)],
        )
    } else {
        (
            vec![(4.0 * PI * c1, Kernel::S0), (4.0 * PI * c2, Kernel::S1OverT)],
            vec![(-4.0 * PI * c2, Kernel::S2)],
        )
    }
}

fn integrate_adaptive<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64, depth: u32) -> Result<(f64, f64)> {
    let out = quadrature::integrate(f, a, b, tol);
    // below a few ulps of the panel value no refinement can help
    let floor = 64.0 * f64::EPSILON * out.integral.abs();
    if out.error_estimate <= tol.max(floor) && out.integral.is_finite() {
        return Ok((out.integral, out.error_estimate));
    }
    if depth >= MAX_BISECTIONS {
        return Err(Error::Quadrature {
            tolerance: tol,
            estimate: out.error_estimate,
        });
    }
    let mid = 0.5 * (a + b);
    let (l, el) = integrate_adaptive(f, a, mid, tol / 2.0, depth + 1)?;
    let (r, er) = integrate_adaptive(f, mid, b, tol / 2.0, depth + 1)?;
    Ok((l + r, el + er))
}

/// Panel breakpoints for an integrand oscillating with unit frequency in t:
/// geometric up to pi, then steps of pi.
fn breakpoints(lo: f64, hi: f64) -> Vec<f64> {
    let mut pts = vec![lo];
    let mut t = lo;
    while t < hi {
        t = if t < PI { (2.0 * t).min(PI) } else { t + PI };
        pts.push(t.min(hi));
    }
    pts.dedup();
    pts
}

/// `int_lo^hi t^mu g(t) dt` over panels, with absolute tolerance `tol`.
fn integrate_panels<G: Fn(f64) -> f64 + Copy>(g: G, mu: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let pts = breakpoints(lo, hi);
    let panel_tol = tol / (pts.len().max(2) - 1) as f64;
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (v, _) = integrate_adaptive(|t: f64| t.powf(mu) * g(t), w[0], w[1], panel_tol, 0)?;
        total += v;
    }
    Ok(total)
}

/// `int_{k0}^{k1} k^mu f(k rho) dk` for `rho > 0`; `k1` may be infinite.
fn radial_integral(kernel: Kernel, mu: f64, rho: f64, k0: f64, k1: f64, tol: f64) -> Result<f64> {
    let scale = rho.powf(-mu - 1.0);
    let t_tol = tol / scale;
    let t0 = k0 * rho;
    if k1.is_finite() {
        let v = integrate_panels(|t| kernel.eval(t), mu, t0, k1 * rho, t_tol)?;
        return Ok(scale * v);
    }
    let f0 = kernel.at_zero();
    let v = if mu > -3.0 && mu < -1.0 {
        let head = kernel.head_integral(mu, t0, t_tol)?;
        kernel.mellin(mu) - head - f0 * t0.powf(mu + 1.0) / (mu + 1.0)
    } else {
        // steep spectra: truncate where the tail bound t^(mu+1)/|mu+1| drops below tolerance
        let t_max = (t_tol * (-mu - 1.0)).powf(1.0 / (mu + 1.0)).max(2.0 * t0);
        integrate_panels(|t| kernel.eval(t), mu, t0, t_max, t_tol)?
    };
    Ok(scale * v)
}

/// Isotropic decomposition `Gamma(r) = iso(|r|) I + aniso(|r|) r_hat r_hat^T`.
fn covariance_parts(params: &SpectrumParams, gamma: f64, rho: f64, tol: f64) -> Result<(f64, f64)> {
    let k0 = params.k_min();
    let k1 = params.k_max();
    if rho == 0.0 {
        let trace = params.e0 * sphere_area(params.dim) * power_moment(gamma, k0, k1);
        return Ok((trace / params.dim as f64, 0.0));
    }
    if params.e0 == 0.0 {
        return Ok((0.0, 0.0));
    }
    let mu = 1.0 - 2.0 * gamma;
    let (iso_terms, aniso_terms) = kernel_terms(params.dim, params.solenoidal_fraction);
    let n_terms = (iso_terms.len() + aniso_terms.len()) as f64;
    let mut parts = [0.0; 2];
    for (slot, terms) in [&iso_terms, &aniso_terms].into_iter().enumerate() {
        for &(coef, kernel) in terms {
            if coef == 0.0 {
                continue;
            }
            let term_tol = tol / (n_terms * coef.abs() * params.e0);
            parts[slot] += coef * radial_integral(kernel, mu, rho, k0, k1, term_tol)?;
        }
    }
    Ok((params.e0 * parts[0], params.e0 * parts[1]))
}

fn assemble(dim: usize, r: &[f64], iso: f64, aniso: f64) -> Tensor {
    let rho = norm(r);
    let mut out = Tensor::zeros(dim);
    for i in 0..dim {
        for j in 0..dim {
            let mut v = if rho > 0.0 { aniso * r[i] * r[j] / (rho * rho) } else { 0.0 };
            if i == j {
                v += iso;
            }
            out.set(i, j, v);
        }
    }
    out
}

/// `int e^{i k.r} E(gamma,k) |k|^(1-d) P(k_hat) dk` at the default tolerance.
pub fn covariance(params: &SpectrumParams, choice: ExponentChoice, r: &[f64]) -> Result<Tensor> {
    covariance_with_tol(params, choice, r, DEFAULT_COVARIANCE_TOL)
}

pub fn covariance_with_tol(
    params: &SpectrumParams,
    choice: ExponentChoice,
    r: &[f64],
    tol: f64,
) -> Result<Tensor> {
    params.validate()?;
    if r.len() != params.dim {
        return Err(Error::InvalidParams(format!(
            "displacement has {} components, expected {}",
            r.len(),
            params.dim
        )));
    }
    let gamma = choice.exponent(params);
    if params.ell1 == 0.0 && gamma <= 1.0 {
        return Err(Error::InvalidParams(format!(
            "exponent {gamma} <= 1 diverges without an ultraviolet cutoff"
        )));
    }
    let (iso, aniso) = covariance_parts(params, gamma, norm(r), tol)?;
    Ok(assemble(params.dim, r, iso, aniso))
}

/// Tabulated isotropic covariance for repeated evaluation at arbitrary
/// separations (cubic interpolation in `log |r|`).
#[derive(Debug, Clone)]
pub struct CovarianceTable {
    params: SpectrumParams,
    gamma: f64,
    scale: f64,
    log_min: f64,
    log_step: f64,
    iso0: f64,
    iso: Vec<f64>,
    aniso: Vec<f64>,
}

impl CovarianceTable {
    const PER_DECADE: f64 = 48.0;

    /// Table of `scale * Gamma(r)` for the chosen exponent.
    pub fn new(params: &SpectrumParams, choice: ExponentChoice, scale: f64) -> Result<Self> {
        params.validate()?;
        let gamma = choice.exponent(params);
        if params.ell1 == 0.0 && gamma <= 1.0 {
            return Err(Error::InvalidParams(format!(
                "exponent {gamma} <= 1 diverges without an ultraviolet cutoff"
            )));
        }
        let small = if params.ell1 > 0.0 {
            params.ell1
        } else {
            params.ell0 * 1e-4
        };
        let log_min = (small * 1e-3).log10();
        let log_max = (params.ell0 * 50.0).log10();
        let n = ((log_max - log_min) * Self::PER_DECADE).ceil() as usize + 1;
        let log_step = (log_max - log_min) / (n - 1) as f64;
        let (iso0, _) = covariance_parts(params, gamma, 0.0, DEFAULT_COVARIANCE_TOL)?;
        let mut iso = Vec::with_capacity(n);
        let mut aniso = Vec::with_capacity(n);
        for i in 0..n {
            let rho = 10f64.powf(log_min + i as f64 * log_step);
            let (a, b) = covariance_parts(params, gamma, rho, DEFAULT_COVARIANCE_TOL)?;
            iso.push(a);
            aniso.push(b);
        }
        Ok(CovarianceTable {
            params: *params,
            gamma,
            scale,
            log_min,
            log_step,
            iso0,
            iso,
            aniso,
        })
    }

    pub fn dim(&self) -> usize {
        self.params.dim
    }

    fn parts(&self, rho: f64) -> (f64, f64) {
        if rho == 0.0 {
            return (self.iso0, 0.0);
        }
        let x = (rho.log10() - self.log_min) / self.log_step;
        let n = self.iso.len();
        if x < 0.0 {
            let w = rho / 10f64.powf(self.log_min);
            return (
                self.iso0 + w * (self.iso[0] - self.iso0),
                w * self.aniso[0],
            );
        }
        if x > (n - 1) as f64 {
            return covariance_parts(&self.params, self.gamma, rho, DEFAULT_COVARIANCE_TOL)
                .unwrap_or((0.0, 0.0));
        }
        let i = (x.floor() as usize).min(n - 2);
        let s = x - i as f64;
        (catmull_rom(&self.iso, i, s), catmull_rom(&self.aniso, i, s))
    }

    /// Writes `scale * Gamma(r)` into `out` (row-major `d x d`).
    pub fn eval_into(&self, r: &[f64], out: &mut [f64]) {
        let d = self.params.dim;
        let rho = norm(r);
        let (iso, aniso) = self.parts(rho);
        for i in 0..d {
            for j in 0..d {
                let mut v = if rho > 0.0 { aniso * r[i] * r[j] / (rho * rho) } else { 0.0 };
                if i == j {
                    v += iso;
                }
                out[i * d + j] = self.scale * v;
            }
        }
    }

    pub fn eval(&self, r: &[f64]) -> Tensor {
        let d = self.params.dim;
        let mut t = Tensor::zeros(d);
        let mut buf = vec![0.0; d * d];
        self.eval_into(r, &mut buf);
        for i in 0..d {
            for j in 0..d {
                t.set(i, j, buf[i * d + j]);
            }
        }
        t
    }
}

fn catmull_rom(v: &[f64], i: usize, s: f64) -> f64 {
    let n = v.len();
    let p1 = v[i];
    let p2 = v[i + 1];
    let p0 = if i > 0 { v[i - 1] } else { 2.0 * p1 - p2 };
    let p3 = if i + 2 < n { v[i + 2] } else { 2.0 * p2 - p1 };
    let s2 = s * s;
    let s3 = s2 * s;
    0.5 * (2.0 * p1
        + (-p0 + p2) * s
        + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * s2
        + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * s3)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn band_params() -> SpectrumParams {
        SpectrumParams {
            e0: 1.0,
            ell0: 100.0,
            ell1: 0.1,
            ..SpectrumParams::default()
        }
    }

    #[test]
    fn series_match_closed_forms() {
        for &t in &[0.49, 0.3, 0.1] {
            assert!((Kernel::J0.eval(t) - libm::j0(t)).abs() < 1e-15);
            assert!((Kernel::J2.eval(t) - libm::jn(2, t)).abs() < 1e-15);
            assert!((Kernel::S0.eval(t) - t.sin() / t).abs() < 1e-15);
            let j1 = t.sin() / (t * t) - t.cos() / t;
            assert!((Kernel::S1OverT.eval(t) - j1 / t).abs() < 1e-12);
        }
        for k in [Kernel::J0, Kernel::J2, Kernel::S0, Kernel::S1OverT, Kernel::S2] {
            let below = k.eval(0.499_999_999);
            let above = k.eval(0.500_000_001);
            assert!((below - above).abs() < 1e-8, "{k:?}");
        }
    }

    #[test]
    fn mellin_regularization_matches_quadrature() {
        // int_0^inf t^mu (f(t) - f(0)) dt computed by brute force with a tail bound
        for kernel in [Kernel::J0, Kernel::J2, Kernel::S0, Kernel::S1OverT, Kernel::S2] {
            for &mu in &[-2.6, -2.0, -1.5] {
                let upper = 4000.0;
                let head = kernel.head_integral(mu, upper, 1e-11).unwrap();
                // oscillatory part of the tail is O(upper^(mu - 1/2)); the constant part is exact
                let tail = -kernel.at_zero() * -upper.powf(mu + 1.0) / (mu + 1.0);
                let expect = head + tail;
                let got = kernel.mellin(mu);
                assert!((got - expect).abs() < 1e-5, "{kernel:?} mu={mu}: {got} vs {expect}");
            }
        }
    }

    #[test]
    fn r_zero_is_diagonal_and_isotropic() {
        let p = band_params();
        let c = covariance(&p, ExponentChoice::Base, &[0.0, 0.0]).unwrap();
        assert_eq!(c.get(0, 1), 0.0);
        assert_eq!(c.get(0, 0), c.get(1, 1));
    }

    #[test]
    fn continuous_at_origin() {
        let p = band_params();
        let c0 = covariance(&p, ExponentChoice::Base, &[0.0, 0.0]).unwrap();
        let c1 = covariance(&p, ExponentChoice::Base, &[1e-7, 0.0]).unwrap();
        assert!(c0.max_abs_diff(&c1) < 1e-6 * c0.get(0, 0));
    }

    #[test]
    fn decays_far_beyond_integral_scale() {
        let p = SpectrumParams {
            ell0: 5.0,
            ..band_params()
        };
        let c0 = covariance(&p, ExponentChoice::Base, &[0.0, 0.0]).unwrap();
        let far = covariance(&p, ExponentChoice::Base, &[3000.0, 0.0]).unwrap();
        assert!(far.data().iter().all(|v| v.abs() < 1e-2 * c0.get(0, 0)));
    }

    #[test]
    fn infinite_band_is_limit_of_finite_bands() {
        let p = SpectrumParams {
            ell1: 0.0,
            ..band_params()
        };
        let r = [0.7, 0.2];
        let inf = covariance(&p, ExponentChoice::Limit, &r).unwrap();
        let fin = covariance(&p.with_cutoff(1e-4), ExponentChoice::Limit, &r).unwrap();
        // tail beyond k = 1e4 is bounded by 2 pi * 0.75 * (1e4)^(-4/3)
        assert!(inf.max_abs_diff(&fin) < 1e-4, "{inf:?} {fin:?}");
        let p3 = SpectrumParams { dim: 3, solenoidal_fraction: 0.4, ..p };
        let r3 = [0.3, -0.5, 0.2];
        let inf = covariance(&p3, ExponentChoice::Limit, &r3).unwrap();
        let fin = covariance(&p3.with_cutoff(1e-4), ExponentChoice::Limit, &r3).unwrap();
        assert!(inf.max_abs_diff(&fin) < 1e-4, "{inf:?} {fin:?}");
    }

    #[test]
    fn infinite_band_base_exponent() {
        let p = SpectrumParams {
            ell1: 0.0,
            alpha: 1.2,
            ..band_params()
        };
        let c0 = covariance(&p, ExponentChoice::Base, &[0.0, 0.0]).unwrap();
        let c = covariance(&p, ExponentChoice::Base, &[0.5, 0.0]).unwrap();
        assert!(c.get(0, 0) < c0.get(0, 0) && c.get(0, 0) > 0.0);
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let p = SpectrumParams::default();
        let table = CovarianceTable::new(&p, ExponentChoice::Limit, 2.0).unwrap();
        for r in [[0.0, 0.0], [0.01, 0.0], [0.3, 0.4], [-2.0, 5.0], [15.0, 0.0]] {
            let direct = covariance(&p, ExponentChoice::Limit, &r).unwrap().scaled(2.0);
            let t = table.eval(&r);
            assert!(t.max_abs_diff(&direct) < 1e-6 * direct.get(0, 0).abs().max(1e-3), "{r:?}");
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn symmetric_and_bounded(x in -30.0f64..30.0, y in -30.0f64..30.0, f in 0.0f64..1.0) {
            let p = SpectrumParams { solenoidal_fraction: f, ..SpectrumParams::default() };
            let c0 = covariance(&p, ExponentChoice::Base, &[0.0, 0.0]).unwrap();
            let c = covariance(&p, ExponentChoice::Base, &[x, y]).unwrap();
            let cm = covariance(&p, ExponentChoice::Base, &[-x, -y]).unwrap();
            proptest::prop_assert!(c.max_abs_diff(&cm.transpose()) < 1e-12);
            for i in 0..2 {
                for j in 0..2 {
                    let bound = (c0.get(i, i) * c0.get(j, j)).sqrt();
                    proptest::prop_assert!(c.get(i, j).abs() <= bound * (1.0 + 1e-9));
                }
            }
        }
    }
}
