use serde::{Deserialize, Serialize};

use super::{power_moment, sphere_area, ExponentChoice, SpectrumParams};
use crate::error::{Error, Result};
use crate::linalg::{dot, Tensor};

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// One real Fourier mode `weight * polarization * (xi cos(k.x) + eta sin(k.x))`.
///
/// Vectors are padded to three components; only the first `dim` are used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub k: [f64; 3],
    pub polarization: [f64; 3],
    pub weight: f64,
    /// OU decorrelation rate `a |k_center|^(2 beta)` of the unscaled field.
    pub theta: f64,
}

/// Discretized spectral measure shared by all field synthesizers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub dim: usize,
    pub modes: Vec<Mode>,
}

impl ModeSet {
    pub fn empty(dim: usize) -> Self {
        ModeSet {
            dim,
            modes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    /// Multiplies every mode variance by `factor`.
    pub fn scaled(&self, factor: f64) -> ModeSet {
        let s = factor.sqrt();
        ModeSet {
            dim: self.dim,
            modes: self
                .modes
                .iter()
                .map(|m| Mode {
                    weight: m.weight * s,
                    ..*m
                })
                .collect(),
        }
    }

    /// `sum weight^2`, the trace of the one-point covariance.
    pub fn total_variance(&self) -> f64 {
        self.modes.iter().map(|m| m.weight * m.weight).sum()
    }

    pub fn max_theta(&self) -> f64 {
        self.modes.iter().map(|m| m.theta).fold(0.0, f64::max)
    }

    /// Exact covariance of the mode sum with stationary unit-variance
    /// amplitudes: `sum w^2 p p^T cos(k.r) exp(-theta tau)`.
    pub fn lagged_covariance(&self, r: &[f64], tau: f64) -> Tensor {
        let d = self.dim;
        let mut out = Tensor::zeros(d);
        for m in &self.modes {
            let c = m.weight * m.weight * dot(&m.k[..d], r).cos() * (-m.theta * tau).exp();
            for i in 0..d {
                for j in 0..d {
                    out.set(i, j, out.get(i, j) + c * m.polarization[i] * m.polarization[j]);
                }
            }
        }
        out
    }

    pub fn covariance(&self, r: &[f64]) -> Tensor {
        self.lagged_covariance(r, 0.0)
    }
}

/// Per-shell orientation of the direction set: a phase offset in units of
/// the direction spacing (d = 2) or a rotation matrix (d = 3).
struct Orientation {
    offset: f64,
    rotation: [[f64; 3]; 3],
}

const IDENTITY: [[f64; 3]; 3] = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];

fn directions(dim: usize, count: usize, orient: &Orientation) -> Vec<[f64; 3]> {
    use std::f64::consts::PI;
    let offset = orient.offset;
    match dim {
        // k and -k describe the same real mode, so half the circle suffices.
        2 => (0..count)
            .map(|j| {
                let phi = PI * (j as f64 + offset) / count as f64;
                [phi.cos(), phi.sin(), 0.0]
            })
            .collect(),
        _ => (0..count)
            .map(|j| {
                // equal-area points on the upper hemisphere
                let z = 1.0 - (j as f64 + 0.5) / count as f64;
                let rho = (1.0 - z * z).sqrt();
                let phi = 2.0 * PI * ((j as f64 * GOLDEN) + offset).fract();
                let v = [rho * phi.cos(), rho * phi.sin(), z];
                let r = &orient.rotation;
                [dot(&r[0], &v), dot(&r[1], &v), dot(&r[2], &v)]
            })
            .collect(),
    }
}

/// Uniform random rotation from a unit quaternion.
fn random_rotation(rng: &mut rand_chacha::ChaCha8Rng) -> [[f64; 3]; 3] {
    let q: Vec<f64> = (0..4).map(|_| crate::rng::normal(rng)).collect();
    let n = dot(&q, &q).sqrt();
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

fn transverse_basis(dim: usize, khat: &[f64; 3]) -> Vec<[f64; 3]> {
    if dim == 2 {
        return vec![[-khat[1], khat[0], 0.0]];
    }
    let axis = if khat[0].abs() < 0.9 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let e1 = normalize(cross(&axis, khat));
    let e2 = normalize(cross(khat, &e1));
    vec![e1, e2]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalize(v: [f64; 3]) -> [f64; 3] {
    let n = dot(&v, &v).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

/// Log-spaced shells over the band with equidistributed directions.
///
/// Each shell carries its exact spectral mass, split evenly across
/// directions and then between transverse and longitudinal polarizations
/// according to `solenoidal_fraction`.
pub fn build_modeset(
    params: &SpectrumParams,
    choice: ExponentChoice,
    shells: usize,
    dirs_per_shell: usize,
) -> Result<ModeSet> {
    build(params, choice, shells, dirs_per_shell, |m| Orientation {
        offset: (m as f64 * GOLDEN).fract(),
        rotation: IDENTITY,
    })
}

/// Like [`build_modeset`] but every shell gets an independent uniformly
/// random orientation drawn from `seed`. Averaged over seeds the mode-sum
/// covariance is exactly isotropic, which a fixed small direction set is not.
pub fn build_modeset_randomized(
    params: &SpectrumParams,
    choice: ExponentChoice,
    shells: usize,
    dirs_per_shell: usize,
    seed: u64,
) -> Result<ModeSet> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, crate::rng::Domain::Geometry, 0);
    build(params, choice, shells, dirs_per_shell, |_| {
        let offset = rng.gen::<f64>();
        let rotation = if params.dim == 3 {
            random_rotation(&mut rng)
        } else {
            IDENTITY
        };
        Orientation { offset, rotation }
    })
}

fn build(
    params: &SpectrumParams,
    choice: ExponentChoice,
    shells: usize,
    dirs_per_shell: usize,
    mut orientation: impl FnMut(usize) -> Orientation,
) -> Result<ModeSet> {
    params.validate()?;
    if params.ell1 == 0.0 {
        return Err(Error::InvalidParams(
            "a mode set needs a finite band; ell1 = 0 cannot be discretized".into(),
        ));
    }
    let min_dirs = if params.dim == 2 { 2 } else { 4 };
    if shells == 0 || dirs_per_shell < min_dirs {
        return Err(Error::InvalidParams(format!(
            "need shells >= 1 and dirs_per_shell >= {min_dirs}"
        )));
    }
    let gamma = choice.exponent(params);
    let (k_lo, k_hi) = (params.k_min(), params.k_max());
    let ratio = k_hi / k_lo;
    let f = params.solenoidal_fraction;
    let d = params.dim;
    let area = sphere_area(d);

    let mut modes = Vec::with_capacity(shells * dirs_per_shell * d);
    for m in 0..shells {
        let lo = k_lo * ratio.powf(m as f64 / shells as f64);
        let hi = k_lo * ratio.powf((m + 1) as f64 / shells as f64);
        let center = (lo * hi).sqrt();
        let mass = params.e0 * area * power_moment(gamma, lo, hi);
        let per_dir = mass / dirs_per_shell as f64;
        let theta = params.a * center.powf(2.0 * params.beta);
        let orient = orientation(m);
        for khat in directions(d, dirs_per_shell, &orient) {
            let k = [center * khat[0], center * khat[1], center * khat[2]];
            if f > 0.0 {
                let share = per_dir * f / (d - 1) as f64;
                for p in transverse_basis(d, &khat) {
                    modes.push(Mode {
                        k,
                        polarization: p,
                        weight: share.sqrt(),
                        theta,
                    });
                }
            }
            if f < 1.0 {
                modes.push(Mode {
                    k,
                    polarization: khat,
                    weight: (per_dir * (1.0 - f)).sqrt(),
                    theta,
                });
            }
        }
    }
    Ok(ModeSet { dim: d, modes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::variance_trace;

    #[test]
    fn single_shell_mode_count() {
        let p = SpectrumParams {
            ell0: 2.0,
            ell1: 0.5,
            ..SpectrumParams::default()
        };
        let ms = build_modeset(&p, ExponentChoice::Base, 1, 4).unwrap();
        assert_eq!(ms.len(), 4);
        let kc: f64 = 1.0;
        for m in &ms.modes {
            let kn = (m.k[0].powi(2) + m.k[1].powi(2)).sqrt();
            assert!((kn - kc).abs() < 1e-14);
            assert!((m.theta - p.a * kc.powf(2.0 * p.beta)).abs() < 1e-14);
        }
    }

    #[test]
    fn total_variance_matches_trace() {
        for dim in [2, 3] {
            let p = SpectrumParams {
                dim,
                e0: 1.0,
                ..SpectrumParams::default()
            };
            let ms = build_modeset(&p, ExponentChoice::Base, 64, 8).unwrap();
            let exact = variance_trace(&p, ExponentChoice::Base);
            assert!((ms.total_variance() - exact).abs() < 1e-3 * exact);
        }
    }

    #[test]
    fn solenoidal_polarization_orthogonal() {
        for dim in [2, 3] {
            let p = SpectrumParams {
                dim,
                ..SpectrumParams::default()
            };
            let ms = build_modeset(&p, ExponentChoice::Base, 16, 6).unwrap();
            for m in &ms.modes {
                let kn = dot(&m.k, &m.k).sqrt();
                assert!(dot(&m.k, &m.polarization).abs() < 1e-14 * kn);
                assert!((dot(&m.polarization, &m.polarization) - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn compressible_split_preserves_variance() {
        let p = SpectrumParams {
            solenoidal_fraction: 0.3,
            dim: 3,
            ..SpectrumParams::default()
        };
        let ms = build_modeset(&p, ExponentChoice::Base, 8, 6).unwrap();
        assert_eq!(ms.len(), 8 * 6 * 3);
        let exact = variance_trace(&p, ExponentChoice::Base);
        assert!((ms.total_variance() - exact).abs() < 1e-12 * exact);
        let longitudinal: f64 = ms
            .modes
            .iter()
            .filter(|m| dot(&m.k, &m.polarization).abs() > 1e-9)
            .map(|m| m.weight * m.weight)
            .sum();
        assert!((longitudinal - 0.7 * exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn rejects_zero_cutoff_and_few_directions() {
        let p = SpectrumParams::default();
        assert!(build_modeset(&p.with_cutoff(0.0), ExponentChoice::Base, 4, 4).is_err());
        assert!(build_modeset(&p, ExponentChoice::Base, 0, 4).is_err());
        assert!(build_modeset(&p, ExponentChoice::Base, 4, 1).is_err());
        let p3 = SpectrumParams { dim: 3, ..p };
        assert!(build_modeset(&p3, ExponentChoice::Base, 4, 3).is_err());
    }

    #[test]
    fn one_point_covariance_is_isotropic() {
        let p = SpectrumParams::default();
        let ms = build_modeset(&p, ExponentChoice::Base, 32, 8).unwrap();
        let c = ms.covariance(&[0.0, 0.0]);
        let tr = c.trace();
        assert!((c.get(0, 0) - tr / 2.0).abs() < 1e-12 * tr);
        assert!(c.get(0, 1).abs() < 1e-12 * tr);
    }

    #[test]
    fn randomized_sets_keep_mass_and_polarization() {
        for dim in [2, 3] {
            let p = SpectrumParams {
                dim,
                solenoidal_fraction: 0.6,
                ..SpectrumParams::default()
            };
            let a = build_modeset_randomized(&p, ExponentChoice::Base, 12, 6, 1).unwrap();
            let b = build_modeset_randomized(&p, ExponentChoice::Base, 12, 6, 1).unwrap();
            let c = build_modeset_randomized(&p, ExponentChoice::Base, 12, 6, 2).unwrap();
            assert_eq!(a, b);
            assert_ne!(a, c);
            let exact = variance_trace(&p, ExponentChoice::Base);
            assert!((a.total_variance() - exact).abs() < 1e-12 * exact);
            for m in &a.modes {
                assert!((dot(&m.polarization, &m.polarization) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn randomized_covariance_is_isotropic_on_average() {
        // one shell, two directions: strongly anisotropic per draw
        let p = SpectrumParams {
            ell0: 1.01,
            ell1: 1.0 / 1.01,
            e0: 1.0,
            ..SpectrumParams::default()
        };
        let r = [0.0, 2.0];
        let rot = [2.0, 0.0];
        let n = 4000;
        let (mut a, mut b) = (0.0, 0.0);
        for s in 0..n {
            let ms = build_modeset_randomized(&p, ExponentChoice::Base, 1, 2, s).unwrap();
            a += ms.covariance(&r).trace();
            b += ms.covariance(&rot).trace();
        }
        let tr0 = variance_trace(&p, ExponentChoice::Base);
        assert!(((a - b) / n as f64).abs() < 0.05 * tr0);
    }
}
