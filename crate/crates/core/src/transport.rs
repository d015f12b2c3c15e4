//! Passive scalar transport by backward stochastic flows.
//!
//! For `dT/dt = u.grad T + (kappa/2) lap T` the solution is
//! `T(t, x) = E[T0(Phi)]` where `Phi` is the endpoint of the characteristic
//! started at `x` and run backwards over `[0, t]`. A stationary OU field is
//! reversible in law, so the backward run is simulated as a forward run
//! through a freshly sampled stationary field:
//! `X <- X + int u dt + sqrt(kappa dt) N`, with the velocity integral taken
//! exactly in time at the start-of-step position.

use std::io::Write;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm;
use crate::ou_field::{FieldState, StepIntegrals};
use crate::rng::{self, Domain};

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// Cloud of particle positions, `n x dim` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub positions: Vec<f64>,
    /// Backward time `s` the ensemble has reached.
    pub time: f64,
    /// Starting point when the ensemble targets a single point.
    pub target: Option<Vec<f64>>,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn new(dim: usize, positions: Vec<f64>, time: f64, seed: u64) -> Result<Self> {
        if positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::InvalidParams(format!(
                "{} coordinates do not form a nonempty set of {dim}-vectors",
                positions.len()
            )));
        }
        if positions.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParams("particle positions must be finite".into()));
        }
        Ok(ParticleEnsemble {
            dim,
            positions,
            time,
            target: None,
            seed,
        })
    }

    /// `n` copies of `x`.
    pub fn at_point(x: &[f64], n: usize, time: f64, seed: u64) -> Result<Self> {
        let mut e = ParticleEnsemble::new(x.len(), x.repeat(n), time, seed)?;
        e.target = Some(x.to_vec());
        Ok(e)
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.positions.chunks_exact(self.dim)
    }
}

/// Independent molecular-noise streams, one per particle.
#[derive(Debug, Clone)]
pub struct MolecularNoise {
    streams: Vec<ChaCha8Rng>,
}

impl MolecularNoise {
    pub fn new(seed: u64, particles: usize) -> Self {
        MolecularNoise {
            streams: (0..particles as u64)
                .map(|i| rng::stream(seed, Domain::Molecular, i))
                .collect(),
        }
    }

    pub(crate) fn streams_mut(&mut self) -> &mut [ChaCha8Rng] {
        &mut self.streams
    }
}

/// Closed-form scalar fields used as initial data and test functions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservableKind {
    /// `height * exp(-|x - center|^2 / (2 width^2))`
    GaussianBlob {
        center: Vec<f64>,
        width: f64,
        height: f64,
    },
    /// `height * exp(1 - 1 / (1 - |x - center|^2 / radius^2))` inside the ball.
    Bump {
        center: Vec<f64>,
        radius: f64,
        height: f64,
    },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    InitialData,
    TestFunction,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    pub kind: ObservableKind,
    pub role: Role,
}

/// Gaussian blobs are treated as supported on `center +/- BLOB_SUPPORT * width`.
pub const BLOB_SUPPORT: f64 = 8.0;

impl Observable {
    pub fn new(kind: ObservableKind, role: Role) -> Result<Self> {
        let bad = |m: &str| Err(Error::InvalidObservable(m.to_string()));
        match &kind {
            ObservableKind::GaussianBlob { width, height, center } => {
                if !(*width > 0.0) || !height.is_finite() || center.is_empty() {
                    return bad("gaussian blob needs width > 0, finite height and a center");
                }
            }
            ObservableKind::Bump { radius, height, center } => {
                if !(*radius > 0.0) || !height.is_finite() || center.is_empty() {
                    return bad("bump needs radius > 0, finite height and a center");
                }
            }
            ObservableKind::Constant { value } => {
                if role == Role::TestFunction {
                    return bad("a constant is not an admissible test function");
                }
                if !value.is_finite() {
                    return bad("constant must be finite");
                }
            }
        }
        Ok(Observable { kind, role })
    }

    pub fn initial(kind: ObservableKind) -> Result<Self> {
        Observable::new(kind, Role::InitialData)
    }

    pub fn test_function(kind: ObservableKind) -> Result<Self> {
        Observable::new(kind, Role::TestFunction)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match &self.kind {
            ObservableKind::GaussianBlob { center, width, height } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                height * (-r2 / (2.0 * width * width)).exp()
            }
            ObservableKind::Bump { center, radius, height } => {
                let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c) * (a - c)).sum();
                let s = r2 / (radius * radius);
                if s >= 1.0 {
                    0.0
                } else {
                    height * (1.0 - 1.0 / (1.0 - s)).exp()
                }
            }
            ObservableKind::Constant { value } => *value,
        }
    }

    pub fn sup(&self) -> f64 {
        match &self.kind {
            ObservableKind::GaussianBlob { height, .. } | ObservableKind::Bump { height, .. } => height.max(0.0),
            ObservableKind::Constant { value } => *value,
        }
    }

    pub fn inf(&self) -> f64 {
        match &self.kind {
            ObservableKind::GaussianBlob { height, .. } | ObservableKind::Bump { height, .. } => height.min(0.0),
            ObservableKind::Constant { value } => *value,
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.sup().abs().max(self.inf().abs())
    }

    /// `||f||_1` in `dim` dimensions (infinite for a nonzero constant).
    pub fn l1_norm(&self, dim: usize) -> f64 {
        use std::f64::consts::PI;
        match &self.kind {
            ObservableKind::GaussianBlob { width, height, .. } => {
                height.abs() * (2.0 * PI * width * width).powf(dim as f64 / 2.0)
            }
            ObservableKind::Bump { radius, height, .. } => {
                let area = crate::spectra::sphere_area(dim);
                let radial = quadrature::integrate(
                    |s: f64| {
                        if s >= 1.0 {
                            0.0
                        } else {
                            s.powi(dim as i32 - 1) * (1.0 - 1.0 / (1.0 - s * s)).exp()
                        }
                    },
                    0.0,
                    1.0,
                    1e-14,
                )
                .integral;
                height.abs() * area * radius.powi(dim as i32) * radial
            }
            ObservableKind::Constant { value } => {
                if *value == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
        }
    }

    /// Bounding box of the (effective) support.
    pub fn support_box(&self) -> Option<(Vec<f64>, Vec<f64>)> {
        let (center, half) = match &self.kind {
            ObservableKind::GaussianBlob { center, width, .. } => (center, BLOB_SUPPORT * width),
            ObservableKind::Bump { center, radius, .. } => (center, *radius),
            ObservableKind::Constant { .. } => return None,
        };
        Some((
            center.iter().map(|c| c - half).collect(),
            center.iter().map(|c| c + half).collect(),
        ))
    }
}

/// Midpoint-rule grid on a rectangular box with estimates per cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub lower: Vec<f64>,
    pub spacing: f64,
    pub counts: Vec<usize>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl ScalarGrid {
    /// Cells of size `spacing` covering `[lower, upper]` (rounded outward).
    pub fn covering(lower: &[f64], upper: &[f64], spacing: f64) -> Result<Self> {
        if !(spacing > 0.0) || lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::InvalidParams("grid needs spacing > 0 and matching corners".into()));
        }
        let counts: Vec<usize> = lower
            .iter()
            .zip(upper)
            .map(|(l, u)| (((u - l) / spacing) - 1e-9).ceil().max(1.0) as usize)
            .collect();
        let n = counts.iter().product();
        Ok(ScalarGrid {
            lower: lower.to_vec(),
            spacing,
            counts,
            values: vec![0.0; n],
            stderr: vec![0.0; n],
        })
    }

    /// Grid centered on the support of `obs` with `spacing`.
    pub fn for_observable(obs: &Observable, spacing: f64) -> Result<Self> {
        let (lo, hi) = obs
            .support_box()
            .ok_or_else(|| Error::InvalidObservable("observable has no bounded support".into()))?;
        ScalarGrid::covering(&lo, &hi, spacing)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.counts)
            .map(|(l, &c)| l + c as f64 * self.spacing)
            .collect()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim() as i32)
    }

    /// Center of cell `index` (row-major, last axis fastest).
    pub fn point(&self, mut index: usize) -> Vec<f64> {
        let d = self.dim();
        let mut x = vec![0.0; d];
        for axis in (0..d).rev() {
            let i = index % self.counts[axis];
            index /= self.counts[axis];
            x[axis] = self.lower[axis] + (i as f64 + 0.5) * self.spacing;
        }
        x
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|i| self.point(i)).collect()
    }

    pub fn covers(&self, lo: &[f64], hi: &[f64]) -> bool {
        let up = self.upper();
        let slack = 1e-9 * self.spacing;
        self.lower.iter().zip(lo).all(|(g, l)| *g <= l + slack)
            && up.iter().zip(hi).all(|(g, h)| *g >= h - slack)
    }

    /// Midpoint quadrature of `f` over the box.
    pub fn integrate(&self, f: impl Fn(&[f64]) -> f64) -> f64 {
        let h = self.cell_volume();
        (0..self.len()).map(|i| f(&self.point(i))).sum::<f64>() * h
    }

    /// CSV with columns `x1..xd, estimate, stderr`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let d = self.dim();
        let header: Vec<String> = (1..=d)
            .map(|i| format!("x{i}"))
            .chain(["estimate".to_string(), "stderr".to_string()])
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for i in 0..self.len() {
            let x = self.point(i);
            let cols: Vec<String> = x
                .iter()
                .map(|v| v.to_string())
                .chain([self.values[i].to_string(), self.stderr[i].to_string()])
                .collect();
            writeln!(out, "{}", cols.join(","))?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Sample mean of `T0` over the ensemble endpoints.
///
/// The mean is accumulated relative to the first sample, so a constant
/// `T0` reproduces its value exactly, and it is confined to the sample
/// range so rounding cannot leave `[min T0, max T0]`.
pub fn feynman_kac(ensemble: &ParticleEnsemble, t0: &Observable) -> Estimate {
    let values: Vec<f64> = ensemble.iter().map(|x| t0.eval(x)).collect();
    mean_estimate(&values)
}

pub(crate) fn mean_estimate(values: &[f64]) -> Estimate {
    let n = values.len() as f64;
    let first = values[0];
    let mut lo = first;
    let mut hi = first;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &v in values {
        let dv = v - first;
        sum += dv;
        sum_sq += dv * dv;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let mean_dev = sum / n;
    let value = (first + mean_dev).clamp(lo, hi);
    let stderr = if values.len() > 1 {
        let var = ((sum_sq - n * mean_dev * mean_dev) / (n - 1.0)).max(0.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Estimate { value, stderr }
}

/// Result of a weak-observable evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakObservable {
    pub estimate: Estimate,
    /// Feynman-Kac point estimates of `T_t` on the grid cells where the test
    /// function is nonzero (zero elsewhere).
    pub grid: ScalarGrid,
}

/// Frozen-position steps stay consistent with the white-noise limit even
/// when a step moves particles across several of the smallest scales, so the
/// guard only rejects grossly under-resolved runs.
pub const DEFAULT_STEP_FRACTION: f64 = 10.0;

/// Euler-type integrator of the backward flow through an OU field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowIntegrator {
    pub kappa: f64,
    /// Maximal step; the actual step divides the horizon evenly.
    pub dt: f64,
    /// Rejects steps whose stationary RMS displacement exceeds this multiple
    /// of the smallest resolved length `1 / max |k|`.
    pub max_step_fraction: f64,
}

impl FlowIntegrator {
    pub fn new(kappa: f64, dt: f64) -> Self {
        FlowIntegrator {
            kappa,
            dt,
            max_step_fraction: DEFAULT_STEP_FRACTION,
        }
    }

    fn steps(&self, t: f64) -> Result<(usize, f64)> {
        if !(self.dt > 0.0) || !(t >= 0.0) || !(self.kappa >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "need dt > 0, t >= 0, kappa >= 0 (dt = {}, t = {t}, kappa = {})",
                self.dt, self.kappa
            )));
        }
        if t == 0.0 {
            return Ok((0, 0.0));
        }
        let n = (t / self.dt - 1e-9).ceil().max(1.0) as usize;
        Ok((n, t / n as f64))
    }

    fn check_step(&self, field: &FieldState, h: f64) -> Result<()> {
        let k_max = field
            .modeset()
            .modes
            .iter()
            .map(|m| norm(&m.k[..field.dim()]))
            .fold(0.0, f64::max);
        if k_max == 0.0 {
            return Ok(());
        }
        let step_length = field.step_rms_displacement(h);
        let limit = self.max_step_fraction / k_max;
        if step_length > limit {
            return Err(Error::StepSize {
                dt: h,
                step_length,
                limit,
            });
        }
        Ok(())
    }

    /// Moves `positions` through `[0, t]` of one realization; `observe` is
    /// called after every step with the elapsed time and current positions.
    pub fn run_observed(
        &self,
        field: &mut FieldState,
        positions: &mut [f64],
        t: f64,
        noise: &mut MolecularNoise,
        mut observe: impl FnMut(usize, f64, &[f64]),
    ) -> Result<()> {
        let d = field.dim();
        let (n, h) = self.steps(t)?;
        if n == 0 {
            return Ok(());
        }
        self.check_step(field, h)?;
        let sigma = (self.kappa * h).sqrt();
        let mut ints = StepIntegrals::default();
        for step in 0..n {
            field.advance_integrated(h, &mut ints);
            let arrays = field.arrays();
            positions
                .par_chunks_mut(d)
                .zip(noise.streams_mut().par_iter_mut())
                .with_min_len(16)
                .for_each(|(x, s)| {
                    let mut disp = [0.0; 3];
                    arrays.superpose(&ints.xi, &ints.eta, 1.0, x, &mut disp[..d]);
                    for c in 0..d {
                        x[c] += disp[c];
                        if sigma > 0.0 {
                            x[c] += sigma * rng::normal(s);
                        }
                    }
                });
            observe(step + 1, (step + 1) as f64 * h, positions);
        }
        Ok(())
    }

    pub fn run(&self, field: &mut FieldState, positions: &mut [f64], t: f64, noise_seed: u64) -> Result<()> {
        let mut noise = MolecularNoise::new(noise_seed, positions.len() / field.dim());
        self.run_observed(field, positions, t, &mut noise, |_, _, _| {})
    }

    /// `n_samples` endpoints `Phi_0` of the backward flow started at `x` at
    /// time `t`, all in the realization `field`, with independent molecular
    /// noise.
    pub fn backward_flow(&self, field: &FieldState, x: &[f64], t: f64, n_samples: usize, seed: u64) -> Result<ParticleEnsemble> {
        let mut ens = ParticleEnsemble::at_point(x, n_samples, t, seed)?;
        let mut f = field.clone();
        self.run(&mut f, &mut ens.positions, t, seed)?;
        ens.time = 0.0;
        Ok(ens)
    }

    /// `<T_t, theta>` by midpoint quadrature of Feynman-Kac point estimates
    /// over the cells where `theta` is nonzero.
    #[allow(clippy::too_many_arguments)]
    pub fn weak_observable(
        &self,
        field: &FieldState,
        theta: &Observable,
        t0: &Observable,
        t: f64,
        grid: &ScalarGrid,
        n_samples: usize,
        seed: u64,
    ) -> Result<WeakObservable> {
        let (lo, hi) = theta
            .support_box()
            .ok_or_else(|| Error::InvalidObservable("test function needs bounded support".into()))?;
        if !grid.covers(&lo, &hi) {
            return Err(Error::GridCoverage);
        }
        let n_samples = if self.kappa == 0.0 { 1 } else { n_samples.max(1) };
        let cells: Vec<usize> = (0..grid.len())
            .filter(|&i| theta.eval(&grid.point(i)) != 0.0)
            .collect();
        let mut out_grid = grid.clone();
        out_grid.values.iter_mut().for_each(|v| *v = 0.0);
        out_grid.stderr.iter_mut().for_each(|v| *v = 0.0);
        if cells.is_empty() {
            return Ok(WeakObservable {
                estimate: Estimate { value: 0.0, stderr: 0.0 },
                grid: out_grid,
            });
        }
        let d = grid.dim();
        let mut positions = Vec::with_capacity(cells.len() * n_samples * d);
        for &c in &cells {
            let x = grid.point(c);
            for _ in 0..n_samples {
                positions.extend_from_slice(&x);
            }
        }
        let mut f = field.clone();
        self.run(&mut f, &mut positions, t, seed)?;
        let h = grid.cell_volume();
        let mut value = 0.0;
        let mut var = 0.0;
        for (ci, &c) in cells.iter().enumerate() {
            let block = &positions[ci * n_samples * d..(ci + 1) * n_samples * d];
            let vals: Vec<f64> = block.chunks_exact(d).map(|x| t0.eval(x)).collect();
            let est = mean_estimate(&vals);
            out_grid.values[c] = est.value;
            out_grid.stderr[c] = est.stderr;
            let w = theta.eval(&grid.point(c)) * h;
            value += w * est.value;
            var += (w * est.stderr).powi(2);
        }
        Ok(WeakObservable {
            estimate: Estimate {
                value,
                stderr: var.sqrt(),
            },
            grid: out_grid,
        })
    }

    /// Grid estimate of `int |T_t|^2 dx` in one realization.
    ///
    /// With `kappa = 0` each cell needs a single characteristic. Otherwise
    /// `T^2` per cell uses the unbiased pair estimator over `n_samples`
    /// molecular paths.
    pub fn energy(&self, field: &FieldState, t0: &Observable, t: f64, grid: &ScalarGrid, n_samples: usize, seed: u64) -> Result<Estimate> {
        if matches!(t0.kind, ObservableKind::Constant { .. }) {
            return Err(Error::InvalidObservable(
                "energy needs square-integrable initial data, not a constant".into(),
            ));
        }
        let n_samples = if self.kappa == 0.0 { 1 } else { n_samples.max(2) };
        let d = grid.dim();
        let mut positions = Vec::with_capacity(grid.len() * n_samples * d);
        for i in 0..grid.len() {
            let x = grid.point(i);
            for _ in 0..n_samples {
                positions.extend_from_slice(&x);
            }
        }
        let mut f = field.clone();
        self.run(&mut f, &mut positions, t, seed)?;
        let h = grid.cell_volume();
        let ns = n_samples as f64;
        let mut total = 0.0;
        let mut var = 0.0;
        for block in positions.chunks_exact(n_samples * d) {
            let vals: Vec<f64> = block.chunks_exact(d).map(|x| t0.eval(x)).collect();
            if n_samples == 1 {
                total += vals[0] * vals[0];
                continue;
            }
            let s: f64 = vals.iter().sum();
            let s2: f64 = vals.iter().map(|v| v * v).sum();
            let square = (s * s - s2) / (ns * (ns - 1.0));
            total += square;
            let est = mean_estimate(&vals);
            var += 4.0 * est.value * est.value * est.stderr * est.stderr;
        }
        Ok(Estimate {
            value: total * h,
            stderr: var.sqrt() * h,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob() -> Observable {
        Observable::initial(ObservableKind::GaussianBlob {
            center: vec![0.0, 0.0],
            width: 1.0,
            height: 2.0,
        })
        .unwrap()
    }

    #[test]
    fn constant_test_function_rejected() {
        assert!(Observable::test_function(ObservableKind::Constant { value: 1.0 }).is_err());
        assert!(Observable::initial(ObservableKind::Constant { value: 1.0 }).is_ok());
        assert!(Observable::initial(ObservableKind::Bump {
            center: vec![0.0],
            radius: 0.0,
            height: 1.0
        })
        .is_err());
    }

    #[test]
    fn bump_has_compact_support() {
        let b = Observable::test_function(ObservableKind::Bump {
            center: vec![1.0, 1.0],
            radius: 2.0,
            height: 3.0,
        })
        .unwrap();
        assert_eq!(b.eval(&[1.0, 1.0]), 3.0);
        assert_eq!(b.eval(&[3.0, 1.0]), 0.0);
        assert_eq!(b.eval(&[5.0, 1.0]), 0.0);
        let (lo, hi) = b.support_box().unwrap();
        assert_eq!(lo, vec![-1.0, -1.0]);
        assert_eq!(hi, vec![3.0, 3.0]);
    }

    #[test]
    fn l1_norms_match_grid_quadrature() {
        let bump = Observable::test_function(ObservableKind::Bump {
            center: vec![0.0, 0.0],
            radius: 2.0,
            height: 1.0,
        })
        .unwrap();
        let grid = ScalarGrid::for_observable(&bump, 0.01).unwrap();
        let q = grid.integrate(|x| bump.eval(x).abs());
        assert!((q - bump.l1_norm(2)).abs() < 1e-6 * q);
        let b = blob();
        let grid = ScalarGrid::covering(&[-8.0, -8.0], &[8.0, 8.0], 0.05).unwrap();
        let q = grid.integrate(|x| b.eval(x).abs());
        assert!((q - b.l1_norm(2)).abs() < 1e-9 * q);
    }

    #[test]
    fn grid_points_are_cell_centers() {
        let g = ScalarGrid::covering(&[0.0, 0.0], &[1.0, 2.0], 0.5).unwrap();
        assert_eq!(g.counts, vec![2, 4]);
        assert_eq!(g.point(0), vec![0.25, 0.25]);
        assert_eq!(g.point(1), vec![0.25, 0.75]);
        assert_eq!(g.point(4), vec![0.75, 0.25]);
        assert!(g.covers(&[0.0, 0.0], &[1.0, 2.0]));
        assert!(!g.covers(&[-0.1, 0.0], &[1.0, 2.0]));
    }

    #[test]
    fn constant_feynman_kac_is_exact() {
        let c = Observable::initial(ObservableKind::Constant { value: 0.1 }).unwrap();
        let pos: Vec<f64> = (0..30).map(|i| i as f64 * 0.37).collect();
        let ens = ParticleEnsemble::new(2, pos, 0.0, 0).unwrap();
        let est = feynman_kac(&ens, &c);
        assert_eq!(est.value, 0.1);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn ensemble_rejects_bad_shapes() {
        assert!(ParticleEnsemble::new(2, vec![1.0, 2.0, 3.0], 0.0, 0).is_err());
        assert!(ParticleEnsemble::new(2, vec![], 0.0, 0).is_err());
        assert!(ParticleEnsemble::new(2, vec![f64::NAN, 0.0], 0.0, 0).is_err());
    }

    proptest::proptest! {
        #[test]
        fn estimate_within_sample_range(vals in proptest::collection::vec(-1e3f64..1e3, 1..64)) {
            let est = mean_estimate(&vals);
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            proptest::prop_assert!(est.value >= lo && est.value <= hi);
            proptest::prop_assert!(est.stderr >= 0.0);
        }
    }
}
