//! Cutoff and diffusivity schedules along an epsilon sweep, and the
//! classification of a schedule against the small-scale conditions under
//! which the vanishing-cutoff limit holds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spectra::SpectrumParams;

/// Which convergence regime a sweep claims.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    /// Fixed positive cutoff.
    T1FixedCutoff,
    I,
    Ii,
    Iii,
    Iv,
    V,
    Vi,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::T1FixedCutoff => "t1_fixed_cutoff",
            Condition::I => "i",
            Condition::Ii => "ii",
            Condition::Iii => "iii",
            Condition::Iv => "iv",
            Condition::V => "v",
            Condition::Vi => "vi",
        }
    }

    /// The condition that applies to `s = alpha + 2 beta`.
    pub fn for_exponent(s: f64) -> Condition {
        const TOL: f64 = 1e-9;
        if s > 4.0 + TOL {
            Condition::I
        } else if (s - 4.0).abs() <= TOL {
            Condition::Ii
        } else if s > 3.0 + TOL {
            Condition::Iii
        } else if (s - 3.0).abs() <= TOL {
            Condition::Iv
        } else if s > 2.0 + TOL {
            Condition::V
        } else {
            Condition::Vi
        }
    }
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

/// `limit + coef * eps^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingRule {
    #[serde(default)]
    pub limit: f64,
    #[serde(default)]
    pub coef: f64,
    #[serde(default)]
    pub exponent: f64,
}

impl ScalingRule {
    pub fn constant(value: f64) -> Self {
        ScalingRule {
            limit: value,
            coef: 0.0,
            exponent: 0.0,
        }
    }

    pub fn power(coef: f64, exponent: f64) -> Self {
        ScalingRule {
            limit: 0.0,
            coef,
            exponent,
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        if self.coef == 0.0 {
            self.limit
        } else {
            self.limit + self.coef * eps.powf(self.exponent)
        }
    }

    /// Value as `eps -> 0`, or `None` when the rule does not converge.
    pub fn limit_value(&self) -> Option<f64> {
        if self.coef == 0.0 || self.exponent > 0.0 {
            Some(self.limit)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Schedule {
    pub condition: Condition,
    /// Strictly decreasing.
    pub epsilons: Vec<f64>,
    pub ell1_rule: ScalingRule,
    pub kappa_rule: ScalingRule,
    /// Largest admissible value of each limit expression at the final epsilon.
    pub threshold: f64,
}

impl Default for Schedule {
    fn default() -> Self {
        Schedule {
            condition: Condition::T1FixedCutoff,
            epsilons: vec![0.4, 0.2, 0.1, 0.05],
            ell1_rule: ScalingRule::constant(0.05),
            kappa_rule: ScalingRule::constant(0.0),
            threshold: 0.1,
        }
    }
}

impl Schedule {
    pub fn check(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::Config("schedule.epsilons is empty".into()));
        }
        if self.epsilons.iter().any(|e| !(*e > 0.0 && e.is_finite()))
            || self.epsilons.windows(2).any(|w| w[1] >= w[0])
        {
            return Err(Error::Config("schedule.epsilons must be positive and strictly decreasing".into()));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config("schedule.threshold must be positive".into()));
        }
        for (eps, name) in self.epsilons.iter().flat_map(|e| [(*e, "ell1"), (*e, "kappa")]) {
            let v = if name == "ell1" { self.ell1_rule.eval(eps) } else { self.kappa_rule.eval(eps) };
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} rule gives {v} at eps = {eps}")));
            }
        }
        Ok(())
    }

    pub fn ell1(&self, eps: f64) -> f64 {
        self.ell1_rule.eval(eps)
    }

    pub fn kappa(&self, eps: f64) -> f64 {
        self.kappa_rule.eval(eps)
    }

    /// Spectrum parameters of the sweep row at `eps`.
    pub fn params_at(&self, base: &SpectrumParams, eps: f64) -> SpectrumParams {
        SpectrumParams {
            ell1: self.ell1(eps),
            kappa: self.kappa(eps),
            ..*base
        }
    }

    /// Parameters of the limiting model: `kappa0` from the diffusivity rule;
    /// the cutoff stays fixed under the fixed-cutoff regime and is removed
    /// otherwise.
    pub fn limit_params(&self, base: &SpectrumParams) -> SpectrumParams {
        let ell1 = match self.condition {
            Condition::T1FixedCutoff => self.ell1_rule.limit,
            _ => 0.0,
        };
        SpectrumParams {
            ell1,
            kappa: self.kappa_rule.limit,
            kappa0: self.kappa_rule.limit,
            ..*base
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum ScheduleVerdict {
    Valid {
        condition: Condition,
    },
    Violated {
        condition: Condition,
        expression: String,
        value: f64,
    },
}

impl ScheduleVerdict {
    pub fn is_valid(&self) -> bool {
        matches!(self, ScheduleVerdict::Valid { .. })
    }

    pub fn into_result(self) -> Result<Condition> {
        match self {
            ScheduleVerdict::Valid { condition } => Ok(condition),
            ScheduleVerdict::Violated {
                condition,
                expression,
                value,
            } => Err(Error::ScheduleViolation {
                condition: condition.to_string(),
                expression,
                value,
            }),
        }
    }
}

type Expr = (&'static str, fn(f64, f64, f64, f64) -> f64);

/// Limit expressions `(eps, ell1, kappa, s) -> value` that must vanish.
fn expressions(condition: Condition, kappa0: f64) -> Vec<Expr> {
    fn ksq(e: f64, l: f64, k: f64, s: f64) -> f64 {
        k * e * e * l.powf(s - 4.0)
    }
    fn eps_pow(e: f64, l: f64, _k: f64, s: f64) -> f64 {
        e * l.powf(s - 3.0)
    }
    match condition {
        Condition::T1FixedCutoff | Condition::I => vec![],
        Condition::Ii => vec![("kappa*eps^2*sqrt(log(1/ell1))", |e, l, k, _| {
            k * e * e * (1.0 / l).ln().max(0.0).sqrt()
        })],
        Condition::Iii => vec![("kappa*eps^2*ell1^(s-4)", ksq)],
        Condition::Iv => vec![
            ("eps*sqrt(log(1/ell1))", |e, l, _, _| e * (1.0 / l).ln().max(0.0).sqrt()),
            ("kappa*eps^2/ell1", |e, l, k, _| k * e * e / l),
        ],
        // with kappa0 > 0 the diffusivity expression implies the other one
        Condition::V if kappa0 > 0.0 => vec![("kappa*eps^2*ell1^(s-4)", ksq)],
        Condition::V => vec![("eps*ell1^(s-3)", eps_pow), ("kappa*eps^2*ell1^(s-4)", ksq)],
        Condition::Vi => vec![("eps*ell1^(s-3)", eps_pow)],
    }
}

/// Checks `schedule` against the regime `params` fall in.
///
/// Every limit expression of the applicable condition must strictly decrease
/// along the sweep (an identically zero expression is fine) and end below
/// `schedule.threshold`.
pub fn validate_schedule(params: &SpectrumParams, schedule: &Schedule) -> ScheduleVerdict {
    let claimed = schedule.condition;
    let violated = |expression: &str, value: f64| ScheduleVerdict::Violated {
        condition: claimed,
        expression: expression.to_string(),
        value,
    };
    if schedule.check().is_err() {
        return violated("schedule well-formedness", f64::NAN);
    }
    let eps = &schedule.epsilons;
    let Some(kappa0) = schedule.kappa_rule.limit_value() else {
        return violated("kappa limit", f64::INFINITY);
    };
    if claimed == Condition::T1FixedCutoff {
        let ell1 = schedule.ell1(eps[0]);
        if schedule.ell1_rule.coef != 0.0 || !(ell1 > 0.0) {
            return violated("ell1 constant and positive", ell1);
        }
        return ScheduleVerdict::Valid { condition: claimed };
    }
    let s = params.alpha + 2.0 * params.beta;
    let regime = Condition::for_exponent(s);
    if regime != claimed {
        return violated("alpha+2beta regime", s);
    }
    if !params.is_solenoidal() {
        return violated("solenoidal_fraction", params.solenoidal_fraction);
    }
    let ell1: Vec<f64> = eps.iter().map(|&e| schedule.ell1(e)).collect();
    if ell1.iter().any(|&l| !(l > 0.0)) || ell1.windows(2).any(|w| w[1] >= w[0]) || schedule.ell1_rule.limit != 0.0 {
        return violated("ell1 -> 0", *ell1.last().unwrap());
    }
    for (name, f) in expressions(claimed, kappa0) {
        let values: Vec<f64> = eps
            .iter()
            .zip(&ell1)
            .map(|(&e, &l)| f(e, l, schedule.kappa(e), s))
            .collect();
        let last = *values.last().unwrap();
        if values.iter().all(|&v| v == 0.0) {
            continue;
        }
        if values.iter().any(|v| !v.is_finite()) || values.windows(2).any(|w| w[1] >= w[0]) || !(last < schedule.threshold) {
            return violated(name, last);
        }
    }
    ScheduleVerdict::Valid { condition: claimed }
}
