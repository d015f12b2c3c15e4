//! Epsilon sweeps comparing OU transport with the white-noise limit.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::Config;
use super::schedule::{validate_schedule, Condition, ScheduleVerdict};
use crate::error::{Error, Result};
use crate::kraichnan::KraichnanField;
use crate::oracle::{isotropic_diffusivity, mean_scalar_with, pair_dispersion_curve};
use crate::ou_field::FieldState;
use crate::rng::{self, derive_seed, Domain};
use crate::spectra::{build_modeset_randomized, ExponentChoice, SpectrumParams};
use crate::transport::{mean_estimate, Estimate, FlowIntegrator, MolecularNoise, Observable, ObservableKind, ScalarGrid};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "OULAB_WORKERS";

/// Centre spacing between the independent pairs of one replica.
const PAIR_SPACING: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStats {
    /// Mean over replicas of `<T_t, theta>`.
    pub obs_mean: Estimate,
    /// Variance over replicas of `<T_t, theta>`.
    pub obs_variance: Estimate,
    /// `E|X_t - X_0|^2 / t` over the grid particles.
    pub dispersion_slope: Estimate,
    /// `E|x1 - x2|^2` at the configured pair times.
    pub pair_dispersion: Vec<Estimate>,
    /// Grid `||T_t||_2^2` over the energy replicas.
    pub energy: Option<Estimate>,
    pub fk_estimates: u64,
    pub fk_violations: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub ell1: f64,
    pub kappa: f64,
    pub dt: f64,
    pub steps: usize,
    pub modes: usize,
    pub stats: Option<RowStats>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub ell1: f64,
    pub kappa0: f64,
    /// `d kappa0 + (2/a) tr Gamma(0)`.
    pub dispersion_slope: Estimate,
    /// Closed form when the initial data is a blob or a constant, otherwise
    /// the white-noise simulation.
    pub obs_mean: Estimate,
    /// From the white-noise simulation.
    pub obs_variance: Estimate,
    pub white_noise_obs_mean: Estimate,
    pub white_noise_dispersion_slope: Estimate,
    pub pair_dispersion: Vec<Estimate>,
    /// `||T_0||_2^2`, the conserved energy when `kappa0 = 0`.
    pub initial_energy: Option<f64>,
    pub error: Option<String>,
}

/// Gap between a sweep statistic and its oracle along the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapSeries {
    pub statistic: String,
    pub epsilon: Vec<f64>,
    pub gap: Vec<f64>,
    pub stderr: Vec<f64>,
    pub relative: Vec<f64>,
    pub monotone: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub seed: u64,
    pub crate_version: String,
    pub schedule: ScheduleVerdict,
    pub schedule_override: bool,
    pub grid_points: usize,
    pub config: Config,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub metadata: SweepMetadata,
    pub rows: Vec<SweepRow>,
    pub oracle: Option<OracleRow>,
    pub gaps: Vec<GapSeries>,
}

impl SweepReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn gap(&self, statistic: &str) -> Option<&GapSeries> {
        self.gaps.iter().find(|g| g.statistic == statistic)
    }

    pub fn fk_violations(&self) -> u64 {
        self.rows
            .iter()
            .filter_map(|r| r.stats.as_ref())
            .map(|s| s.fk_violations)
            .sum()
    }
}

/// Worker count from the environment, if set.
pub fn workers_from_env() -> Result<Option<usize>> {
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} = {v:?} is not a positive integer"))),
        Err(_) => Ok(None),
    }
}

/// Gaps that shrink with epsilon: no step up by more than two combined
/// standard errors, an overall drop of more than two, and a final relative
/// gap below `threshold`.
pub fn monotone_decrease(gap: &[f64], stderr: &[f64], relative: &[f64], threshold: f64) -> bool {
    let n = gap.len();
    if n < 2 {
        return false;
    }
    let comb = |i: usize, j: usize| (stderr[i].powi(2) + stderr[j].powi(2)).sqrt();
    let steps_ok = (0..n - 1).all(|i| gap[i + 1] <= gap[i] + 2.0 * comb(i, i + 1));
    steps_ok && gap[0] - gap[n - 1] > 2.0 * comb(0, n - 1) && relative[n - 1] < threshold
}

/// Shared, immutable inputs of every replica in the sweep.
struct Setup {
    t0: Observable,
    /// Cell centres where `theta` is nonzero, with `theta * h^d`.
    cells: Vec<(Vec<f64>, f64)>,
    energy_grid: Option<ScalarGrid>,
    steps: usize,
    step: f64,
}

struct ReplicaOut {
    obs: f64,
    disp: f64,
    pairs: Vec<f64>,
    energy: Option<f64>,
    fk_count: u64,
    fk_violations: u64,
}

fn setup(cfg: &Config) -> Result<Setup> {
    let t0 = cfg.observables.initial()?;
    let theta = cfg.observables.test_function()?;
    let grid = ScalarGrid::for_observable(&theta, cfg.transport.grid_spacing)?;
    let h = grid.cell_volume();
    let cells: Vec<(Vec<f64>, f64)> = (0..grid.len())
        .map(|i| grid.point(i))
        .filter_map(|x| {
            let w = theta.eval(&x);
            (w != 0.0).then(|| (x, w * h))
        })
        .collect();
    if cells.is_empty() {
        return Err(Error::Config("the test function vanishes on every grid cell".into()));
    }
    let energy_grid = match t0.kind {
        ObservableKind::Constant { .. } => None,
        _ => Some(ScalarGrid::for_observable(&t0, cfg.transport.energy_spacing)?),
    };
    let t = &cfg.transport;
    let steps = (t.horizon / t.dt - 1e-9).ceil().max(1.0) as usize;
    Ok(Setup {
        t0,
        cells,
        energy_grid,
        steps,
        step: t.horizon / steps as f64,
    })
}

fn row_seed(seed: u64, row: usize) -> u64 {
    derive_seed(seed, Domain::Replica, row as u64)
}

fn replica_seed(row_seed: u64, r: usize) -> u64 {
    derive_seed(row_seed, Domain::Replica, r as u64)
}

/// Starting positions: grid cells (each repeated `fk_samples` times) then
/// the pairs, spread far apart with random orientations.
fn start_positions(cfg: &Config, s: &Setup, seed: u64) -> Vec<f64> {
    let d = cfg.spectrum.dim;
    let t = &cfg.transport;
    let mut pos = Vec::with_capacity((s.cells.len() * t.fk_samples + 2 * t.pairs) * d);
    for (x, _) in &s.cells {
        for _ in 0..t.fk_samples {
            pos.extend_from_slice(x);
        }
    }
    let mut g = rng::stream(seed, Domain::Geometry, 1);
    for p in 0..t.pairs {
        let mut c = vec![PAIR_SPACING; d];
        c[0] = PAIR_SPACING * (p + 1) as f64;
        let dir: Vec<f64> = if d == 2 {
            let phi = std::f64::consts::TAU * g.gen::<f64>();
            vec![phi.cos(), phi.sin()]
        } else {
            let v: Vec<f64> = (0..d).map(|_| rng::normal(&mut g)).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter().map(|x| x / n).collect()
        };
        pos.extend_from_slice(&c);
        pos.extend(c.iter().zip(&dir).map(|(c, u)| c + t.pair_separation * u));
    }
    pos
}

/// Turns final positions and recorded pair separations into replica output.
fn summarize(cfg: &Config, s: &Setup, start: &[f64], end: &[f64], pairs: Vec<f64>, energy: Option<f64>) -> ReplicaOut {
    let d = cfg.spectrum.dim;
    let fk = cfg.transport.fk_samples;
    let (lo, hi) = (s.t0.inf(), s.t0.sup());
    let mut obs = 0.0;
    let mut violations = 0;
    let mut disp = 0.0;
    let block = fk * d;
    for (c, (_, w)) in s.cells.iter().enumerate() {
        let range = c * block..(c + 1) * block;
        let vals: Vec<f64> = end[range.clone()].chunks_exact(d).map(|x| s.t0.eval(x)).collect();
        let est = mean_estimate(&vals);
        if est.value < lo || est.value > hi {
            violations += 1;
        }
        obs += w * est.value;
        disp += end[range.clone()]
            .iter()
            .zip(&start[range])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>();
    }
    let n = (s.cells.len() * fk) as f64;
    ReplicaOut {
        obs,
        disp: disp / n / cfg.transport.horizon,
        pairs,
        energy,
        fk_count: s.cells.len() as u64,
        fk_violations: violations,
    }
}

fn pair_step_indices(cfg: &Config, s: &Setup) -> Vec<usize> {
    cfg.transport
        .pair_times
        .iter()
        .map(|t| ((t / s.step).round() as usize).clamp(1, s.steps))
        .collect()
}

fn mean_pair_sep(pos: &[f64], offset: usize, pairs: usize, d: usize) -> f64 {
    if pairs == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for p in 0..pairs {
        let a = offset + 2 * p * d;
        total += (0..d).map(|c| (pos[a + c] - pos[a + d + c]).powi(2)).sum::<f64>();
    }
    total / pairs as f64
}

fn ou_replica(cfg: &Config, s: &Setup, params: &SpectrumParams, eps: f64, index: usize, seed: u64) -> Result<ReplicaOut> {
    let t = &cfg.transport;
    let d = params.dim;
    let ms = build_modeset_randomized(params, ExponentChoice::Base, t.shells, t.dirs_per_shell, seed)?;
    let field = FieldState::init_stationary(ms, eps, seed)?;
    let integ = FlowIntegrator {
        kappa: params.kappa,
        dt: s.step,
        max_step_fraction: t.max_step_fraction,
    };
    let start = start_positions(cfg, s, seed);
    let mut pos = start.clone();
    let offset = s.cells.len() * t.fk_samples * d;
    let marks = pair_step_indices(cfg, s);
    let mut pairs = vec![0.0; marks.len()];
    let mut noise = MolecularNoise::new(seed, pos.len() / d);
    let mut f = field.clone();
    integ.run_observed(&mut f, &mut pos, t.horizon, &mut noise, |step, _, x| {
        for (k, &m) in marks.iter().enumerate() {
            if m == step {
                pairs[k] = mean_pair_sep(x, offset, t.pairs, d);
            }
        }
    })?;
    let energy = match &s.energy_grid {
        Some(g) if index < t.energy_replicas => {
            let e = integ.energy(&field, &s.t0, t.horizon, g, t.fk_samples.max(2), derive_seed(seed, Domain::Molecular, 1))?;
            Some(e.value)
        }
        _ => None,
    };
    Ok(summarize(cfg, s, &start, &pos, pairs, energy))
}

fn white_noise_replica(cfg: &Config, s: &Setup, params: &SpectrumParams, seed: u64) -> Result<ReplicaOut> {
    let t = &cfg.transport;
    let d = params.dim;
    let ms = build_modeset_randomized(params, ExponentChoice::Base, t.shells, t.dirs_per_shell, seed)?;
    let field = KraichnanField::white_noise_limit(&ms)?;
    let start = start_positions(cfg, s, seed);
    let mut pos = start.clone();
    let offset = s.cells.len() * t.fk_samples * d;
    let marks = pair_step_indices(cfg, s);
    let mut pairs = vec![0.0; marks.len()];
    field.run_observed(&mut pos, t.horizon, s.step, params.kappa0, seed, |step, _, x| {
        for (k, &m) in marks.iter().enumerate() {
            if m == step {
                pairs[k] = mean_pair_sep(x, offset, t.pairs, d);
            }
        }
    })?;
    Ok(summarize(cfg, s, &start, &pos, pairs, None))
}

fn mean_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Estimate {
        value: m,
        stderr: (var / n).sqrt(),
    }
}

/// Unbiased sample variance with its large-sample standard error.
fn variance_se(v: &[f64]) -> Estimate {
    let n = v.len() as f64;
    if v.len() < 2 {
        return Estimate { value: 0.0, stderr: 0.0 };
    }
    let m = v.iter().sum::<f64>() / n;
    let m2 = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = v.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    Estimate {
        value: m2 * n / (n - 1.0),
        stderr: ((m4 - m2 * m2).max(0.0) / n).sqrt(),
    }
}

fn reduce(outs: &[ReplicaOut], npairs: usize) -> RowStats {
    let obs: Vec<f64> = outs.iter().map(|o| o.obs).collect();
    let disp: Vec<f64> = outs.iter().map(|o| o.disp).collect();
    let pair_dispersion = (0..npairs)
        .map(|k| mean_se(&outs.iter().map(|o| o.pairs[k]).collect::<Vec<_>>()))
        .collect();
    let energies: Vec<f64> = outs.iter().filter_map(|o| o.energy).collect();
    RowStats {
        obs_mean: mean_se(&obs),
        obs_variance: variance_se(&obs),
        dispersion_slope: mean_se(&disp),
        pair_dispersion,
        energy: (!energies.is_empty()).then(|| mean_se(&energies)),
        fk_estimates: outs.iter().map(|o| o.fk_count).sum(),
        fk_violations: outs.iter().map(|o| o.fk_violations).sum(),
    }
}

/// Runs replicas `0..n` of `f` in parallel and returns them in index order,
/// or the error of the lowest failing index.
fn replicas<F>(n: usize, f: F) -> Result<Vec<ReplicaOut>>
where
    F: Fn(usize) -> Result<ReplicaOut> + Sync + Send,
{
    let outs: Vec<Result<ReplicaOut>> = (0..n)
        .into_par_iter()
        .map(f)
        .collect();
    outs.into_iter().collect()
}

fn run_row(cfg: &Config, s: &Setup, eps: f64, row: usize, seed: u64) -> SweepRow {
    let params = cfg.schedule.params_at(&cfg.spectrum, eps);
    let modes = cfg.transport.shells * cfg.transport.dirs_per_shell * (params.dim - 1 + usize::from(!params.is_solenoidal()));
    let mut out = SweepRow {
        epsilon: eps,
        ell1: params.ell1,
        kappa: params.kappa,
        dt: s.step,
        steps: s.steps,
        modes,
        stats: None,
        error: None,
    };
    let rs = row_seed(seed, row);
    match replicas(cfg.transport.replicas, |r| ou_replica(cfg, s, &params, eps, r, replica_seed(rs, r))) {
        Ok(outs) => out.stats = Some(reduce(&outs, cfg.transport.pair_times.len())),
        Err(e) => out.error = Some(e.to_string()),
    }
    out
}

fn run_oracle(cfg: &Config, s: &Setup, seed: u64) -> OracleRow {
    let limit = cfg.schedule.limit_params(&cfg.spectrum);
    let smallest_ell1 = cfg.schedule.ell1(*cfg.schedule.epsilons.last().unwrap());
    let mut out = OracleRow {
        ell1: limit.ell1,
        kappa0: limit.kappa0,
        dispersion_slope: Estimate { value: 0.0, stderr: 0.0 },
        obs_mean: Estimate { value: 0.0, stderr: 0.0 },
        obs_variance: Estimate { value: 0.0, stderr: 0.0 },
        white_noise_obs_mean: Estimate { value: 0.0, stderr: 0.0 },
        white_noise_dispersion_slope: Estimate { value: 0.0, stderr: 0.0 },
        pair_dispersion: vec![],
        initial_energy: None,
        error: None,
    };
    let result = (|| -> Result<()> {
        let k = isotropic_diffusivity(&limit)?;
        out.dispersion_slope = Estimate {
            value: k * limit.dim as f64,
            stderr: 0.0,
        };
        // the white-noise simulation needs a band: use the smallest cutoff of the sweep
        let mut banded = limit;
        if banded.ell1 == 0.0 {
            banded.ell1 = smallest_ell1;
        }
        let os = row_seed(seed, usize::MAX);
        let outs = replicas(cfg.transport.replicas, |r| white_noise_replica(cfg, s, &banded, replica_seed(os, r)))?;
        let stats = reduce(&outs, 0);
        out.obs_variance = stats.obs_variance;
        out.white_noise_obs_mean = stats.obs_mean;
        out.white_noise_dispersion_slope = stats.dispersion_slope;
        out.obs_mean = match &s.t0.kind {
            ObservableKind::GaussianBlob { .. } => {
                let mut total = 0.0;
                for (x, w) in &s.cells {
                    total += w * mean_scalar_with(&s.t0, k, cfg.transport.horizon, x)?;
                }
                Estimate { value: total, stderr: 0.0 }
            }
            ObservableKind::Constant { value } => Estimate {
                value: value * s.cells.iter().map(|(_, w)| w).sum::<f64>(),
                stderr: 0.0,
            },
            ObservableKind::Bump { .. } => stats.obs_mean,
        };
        out.initial_energy = s.energy_grid.as_ref().map(|g| g.integrate(|x| s.t0.eval(x).powi(2)));
        if !cfg.transport.pair_times.is_empty() {
            let mut r0 = vec![0.0; limit.dim];
            r0[0] = cfg.transport.pair_separation;
            let curve = pair_dispersion_curve(
                &limit,
                &r0,
                &cfg.transport.pair_times,
                s.step,
                cfg.transport.oracle_samples,
                derive_seed(os, Domain::Generator, 0),
            )?;
            out.pair_dispersion = curve
                .mean_sq_separation
                .iter()
                .zip(&curve.stderr)
                .map(|(&value, &stderr)| Estimate { value, stderr })
                .collect();
        }
        Ok(())
    })();
    if let Err(e) = result {
        out.error = Some(e.to_string());
    }
    out
}

fn gap_series(name: &str, rows: &[SweepRow], oracle: Estimate, pick: impl Fn(&RowStats) -> Estimate, threshold: f64) -> GapSeries {
    let mut g = GapSeries {
        statistic: name.to_string(),
        epsilon: vec![],
        gap: vec![],
        stderr: vec![],
        relative: vec![],
        monotone: false,
    };
    for row in rows {
        if let Some(st) = &row.stats {
            let e = pick(st);
            let gap = (e.value - oracle.value).abs();
            g.epsilon.push(row.epsilon);
            g.gap.push(gap);
            g.stderr.push((e.stderr.powi(2) + oracle.stderr.powi(2)).sqrt());
            g.relative.push(gap / oracle.value.abs());
        }
    }
    g.monotone = g.epsilon.len() == rows.len() && monotone_decrease(&g.gap, &g.stderr, &g.relative, threshold);
    g
}

/// Convergence threshold on the final relative gap.
pub const GAP_THRESHOLD: f64 = 0.1;

fn gaps(rows: &[SweepRow], oracle: &OracleRow, pair_times: &[f64]) -> Vec<GapSeries> {
    if oracle.error.is_some() {
        return vec![];
    }
    let mut out = vec![
        gap_series("obs_mean", rows, oracle.obs_mean, |s| s.obs_mean, GAP_THRESHOLD),
        gap_series("obs_variance", rows, oracle.obs_variance, |s| s.obs_variance, GAP_THRESHOLD),
        gap_series("dispersion_slope", rows, oracle.dispersion_slope, |s| s.dispersion_slope, GAP_THRESHOLD),
    ];
    for (k, t) in pair_times.iter().enumerate() {
        if let Some(o) = oracle.pair_dispersion.get(k) {
            out.push(gap_series(&format!("pair_dispersion_t{t}"), rows, *o, |s| s.pair_dispersion[k], GAP_THRESHOLD));
        }
    }
    out
}

/// Full sweep: validates the schedule, runs every epsilon row and the
/// oracle, and attaches gap diagnostics. Rows that fail are recorded and
/// the sweep continues.
pub fn run_sweep(cfg: &Config, seed: u64, workers: Option<usize>, allow_violation: bool) -> Result<SweepReport> {
    cfg.check()?;
    let verdict = validate_schedule(&cfg.spectrum, &cfg.schedule);
    if !verdict.is_valid() && !allow_violation {
        verdict.clone().into_result()?;
    }
    if cfg.schedule.condition == Condition::T1FixedCutoff || cfg.spectrum.is_solenoidal() {
        cfg.schedule.limit_params(&cfg.spectrum).check_limit_well_posed()?;
    }
    let s = setup(cfg)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let (rows, oracle) = pool.install(|| {
        let rows: Vec<SweepRow> = cfg
            .schedule
            .epsilons
            .iter()
            .enumerate()
            .map(|(i, &eps)| run_row(cfg, &s, eps, i, seed))
            .collect();
        (rows, run_oracle(cfg, &s, seed))
    });
    let gaps = gaps(&rows, &oracle, &cfg.transport.pair_times);
    Ok(SweepReport {
        metadata: SweepMetadata {
            seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            schedule: verdict,
            schedule_override: allow_violation,
            grid_points: s.cells.len(),
            config: cfg.clone(),
        },
        rows,
        oracle: Some(oracle),
        gaps,
    })
}
