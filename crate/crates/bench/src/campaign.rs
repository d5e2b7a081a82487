//! Seeded trial campaigns: single runs, budget sweeps and their summaries.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use sural_core::learners::{run_algorithm1_with, run_erm_passive, Diagnostics};
use sural_core::oracle::DiscreteScenario;
use sural_core::synth::{
    estimate_disagreement_coefficient, make_monotone, make_threshold_tsybakov, make_two_point, EtaSpec,
    ThetaEstimate,
};
use sural_core::{
    derive_seed, FiniteClass, FunctionClass, LinearBall, MonotoneGrid, Problem, SurrogateLoss,
    ThresholdParams, TrialRecord,
};

use crate::config::{ClassSpec, ConfigError, EtaKind, ExperimentConfig, Method, ProblemSpec};
use crate::output::OracleValue;

/// A budget counts as sufficient when at least this share of trials succeeds.
pub const SUCCESS_QUORUM: f64 = 0.5;

/// Everything a trial needs, built once per configuration.
#[derive(Debug, Clone)]
pub struct Setup {
    pub problem: Problem,
    pub class: Arc<FunctionClass>,
    pub loss: SurrogateLoss,
    pub params: ThresholdParams,
}

fn core_error(config: &ExperimentConfig, fallback: &str, err: sural_core::Error) -> ConfigError {
    match err {
        sural_core::Error::InvalidParameter { name, reason } => config.invalid(name, reason),
        other => config.invalid(fallback, other),
    }
}

impl Setup {
    pub fn build(config: &ExperimentConfig) -> Result<Self, ConfigError> {
        let class = build_class(config)?;
        let problem = build_problem(config)?;
        match (&class, problem.atom_masses()) {
            (FunctionClass::Finite(f), Some(masses)) if f.domain_size() != masses.len() => {
                return Err(config.invalid(
                    "class.kind",
                    format!("class covers {} atoms, problem has {}", f.domain_size(), masses.len()),
                ))
            }
            (FunctionClass::Finite(_), None) => {
                return Err(config.invalid("class.kind", "finite classes need a discrete problem"))
            }
            (FunctionClass::MonotoneGrid(_) | FunctionClass::LinearBall(_), Some(_)) => {
                return Err(config.invalid("class.kind", "grid and linear classes need a continuous problem"))
            }
            _ => {}
        }
        let f_bar = config.f_bar.unwrap_or_else(|| class.f_bar());
        let loss = SurrogateLoss::new(config.loss_kind, f_bar).map_err(|e| core_error(config, "loss.f_bar", e))?;
        let t = &config.threshold;
        let params = ThresholdParams::new(t.variant, &loss, t.vc.unwrap_or_else(|| class.default_vc_dim()), t.delta)
            .and_then(|p| p.with_c0(t.c0))
            .and_then(|p| p.with_scale(t.scale))
            .map_err(|e| core_error(config, "threshold.variant", e))?;
        Ok(Self {
            problem,
            class: Arc::new(class),
            loss,
            params,
        })
    }
}

fn build_class(config: &ExperimentConfig) -> Result<FunctionClass, ConfigError> {
    let err = |e| core_error(config, "class.kind", e);
    Ok(match &config.class {
        ClassSpec::Finite { atoms, members } => {
            let atoms = if *atoms == 0 {
                members.first().map_or(0, Vec::len)
            } else {
                *atoms
            };
            FunctionClass::Finite(FiniteClass::new(atoms, members.clone()).map_err(err)?)
        }
        ClassSpec::FiniteProduct { atom_values } => {
            FunctionClass::Finite(FiniteClass::product(atom_values).map_err(err)?)
        }
        ClassSpec::ThresholdGrid { atoms } => {
            if *atoms == 0 {
                return Err(config.invalid("class.atoms", "must be positive"));
            }
            FunctionClass::Finite(FiniteClass::thresholds(*atoms))
        }
        ClassSpec::MonotoneGrid { cells } => FunctionClass::MonotoneGrid(MonotoneGrid::new(*cells).map_err(err)?),
        ClassSpec::LinearBall { dimension, radius } => {
            FunctionClass::LinearBall(LinearBall::new(*dimension, *radius).map_err(err)?)
        }
    })
}

fn build_problem(config: &ExperimentConfig) -> Result<Problem, ConfigError> {
    let err = |e| core_error(config, "problem.kind", e);
    match &config.problem {
        ProblemSpec::TwoPoint { z, eps0, eta_x0 } => make_two_point(*z, *eps0, *eta_x0).map_err(err),
        ProblemSpec::Threshold { t, alpha, z } => make_threshold_tsybakov(*t, *alpha, *z).map_err(err),
        ProblemSpec::Monotone { eta } => {
            let spec = match eta {
                EtaKind::Linear => EtaSpec::Linear,
                EtaKind::Knots(k) => EtaSpec::Knots(k.clone()),
            };
            make_monotone(spec).map_err(err)
        }
        ProblemSpec::DiscreteThreshold { atoms, t, z } => {
            if *atoms == 0 {
                return Err(config.invalid("problem.discrete_threshold.atoms", "must be positive"));
            }
            if !(0.0..=1.0).contains(t) {
                return Err(config.invalid("problem.discrete_threshold.t", "must lie in [0, 1]"));
            }
            if !(*z > 0.0 && *z <= 0.5) {
                return Err(config.invalid("problem.discrete_threshold.z", "must lie in (0, 1/2]"));
            }
            let cut = (t * *atoms as f64).round() as usize;
            let etas = (0..*atoms).map(|i| if i >= cut { 0.5 + z } else { 0.5 - z }).collect();
            Problem::discrete("discrete_threshold", vec![1.0 / *atoms as f64; *atoms], etas).map_err(err)
        }
    }
}

/// The learner behind a single trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Learner {
    Active,
    Passive,
}

impl Learner {
    pub fn name(self) -> &'static str {
        match self {
            Learner::Active => "active",
            Learner::Passive => "passive",
        }
    }

    fn of(method: Method) -> &'static [Learner] {
        match method {
            Method::Active => &[Learner::Active],
            Method::Passive => &[Learner::Passive],
            Method::Both => &[Learner::Active, Learner::Passive],
        }
    }
}

/// One trial's outcome. Solver failures are kept, not propagated.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRow {
    pub trial: u64,
    pub learner: Learner,
    pub eps: Option<f64>,
    pub seed: u64,
    pub outcome: Result<TrialRecord, String>,
}

impl TrialRow {
    /// `excess_error < eps`; `None` without a target or for failed trials.
    pub fn success(&self) -> Option<bool> {
        let rec = self.outcome.as_ref().ok()?;
        self.eps.map(|e| rec.final_excess_error < e)
    }

    pub fn failed(&self) -> bool {
        self.outcome.is_err()
    }
}

/// Label budgets for one trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Budget {
    pub u: u64,
    pub n: u64,
    pub m: u64,
}

/// Runs `trials` seeded trials of one learner in parallel; rows come back in trial order.
pub fn run_trials(
    setup: &Setup,
    learner: Learner,
    budget: Budget,
    trials: u64,
    master_seed: u64,
    eps: Option<f64>,
    dis_mass_samples: usize,
) -> Vec<TrialRow> {
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let seed = derive_seed(master_seed, trial);
            let outcome = match learner {
                Learner::Active => run_algorithm1_with(
                    &setup.problem,
                    &setup.class,
                    &setup.loss,
                    budget.u,
                    budget.n,
                    &setup.params,
                    seed,
                    Diagnostics { dis_mass_samples },
                ),
                Learner::Passive => run_erm_passive(&setup.problem, &setup.class, &setup.loss, budget.m, seed),
            };
            if let Err(e) = &outcome {
                log::warn!("trial {trial} ({}) failed: {e}", learner.name());
            }
            TrialRow {
                trial,
                learner,
                eps,
                seed,
                outcome: outcome.map(|(_, rec)| rec).map_err(|e| e.to_string()),
            }
        })
        .collect()
}

/// Runs the configured trials; rows are ordered by trial, then learner.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<TrialRow>, ConfigError> {
    let setup = Setup::build(config)?;
    let budget = Budget {
        u: config.u,
        n: config.n,
        m: config.m,
    };
    let mut rows: Vec<TrialRow> = Learner::of(config.method)
        .iter()
        .flat_map(|&l| run_trials(&setup, l, budget, config.trials, config.seed, config.eps, config.dis_mass_samples))
        .collect();
    rows.sort_by_key(|r| (r.trial, r.learner));
    Ok(rows)
}

/// One cell of a sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub eps: f64,
    pub learner: Learner,
    /// `None` when the search bound was reached without success.
    pub budget_found: Option<u64>,
    /// Success rate at the found budget, or at the bound.
    pub success_rate: f64,
    pub failed_trials: usize,
}

/// For every target and learner, the smallest budget at which at least half
/// of the trials succeed. Budgets are searched by doubling, then bisection.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<SweepRow>, ConfigError> {
    let spec = config
        .sweep
        .as_ref()
        .ok_or_else(|| config.invalid("sweep.eps", "a sweep needs a list of targets"))?;
    let mut rows = Vec::new();
    for &eps in &spec.eps {
        let cfg = if spec.bind_eps0 { config.with_eps0(eps) } else { config.clone() };
        let setup = Setup::build(&cfg)?;
        for &learner in Learner::of(config.method) {
            let max = match learner {
                Learner::Active => spec.max_n,
                Learner::Passive => spec.max_m,
            };
            let mut failures = BTreeMap::new();
            let mut rate = |b: u64| {
                let budget = Budget {
                    u: spec.active_u,
                    n: b,
                    m: b,
                };
                let trials = run_trials(&setup, learner, budget, config.trials, config.seed, Some(eps), config.dis_mass_samples);
                failures.insert(b, trials.iter().filter(|t| t.failed()).count());
                trials.iter().filter(|t| t.success() == Some(true)).count() as f64 / trials.len() as f64
            };
            let (budget_found, success_rate) = search_budget(max, &mut rate);
            let failed = failures.get(&budget_found.unwrap_or(max)).copied().unwrap_or(0);
            log::info!("eps {eps}: {} budget {budget_found:?} (rate {success_rate})", learner.name());
            rows.push(SweepRow {
                eps,
                learner,
                budget_found,
                success_rate,
                failed_trials: failed,
            });
        }
    }
    Ok(rows)
}

/// Smallest `b` in `1..=max` with `rate(b) >= SUCCESS_QUORUM`, assuming the
/// rate is roughly nondecreasing in `b`.
pub fn search_budget(max: u64, rate: &mut impl FnMut(u64) -> f64) -> (Option<u64>, f64) {
    let mut seen = BTreeMap::new();
    let mut eval = |b: u64| *seen.entry(b).or_insert_with(|| rate(b));
    if max == 0 {
        return (None, 0.0);
    }
    let mut lo = 0;
    let mut hi = 1;
    while eval(hi) < SUCCESS_QUORUM {
        if hi == max {
            return (None, eval(max));
        }
        lo = hi;
        hi = (hi * 2).min(max);
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if eval(mid) >= SUCCESS_QUORUM {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    (Some(hi), eval(hi))
}

/// Aggregates for one learner, recomputable from the raw rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub learner: Learner,
    pub trials: usize,
    pub failed: usize,
    pub median_labels: f64,
    pub median_excess: f64,
    pub q10_excess: f64,
    pub q90_excess: f64,
    pub success_rate: Option<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    match sorted.get(i + 1) {
        Some(next) => sorted[i] + frac * (next - sorted[i]),
        None => sorted[i],
    }
}

pub fn summarize(rows: &[TrialRow]) -> Vec<Summary> {
    let mut by_learner: BTreeMap<Learner, Vec<&TrialRow>> = BTreeMap::new();
    for r in rows {
        by_learner.entry(r.learner).or_default().push(r);
    }
    by_learner
        .into_iter()
        .map(|(learner, rows)| {
            let ok: Vec<&TrialRecord> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
            let sorted = |f: fn(&TrialRecord) -> f64| {
                let mut v: Vec<f64> = ok.iter().map(|r| f(r)).collect();
                v.sort_by(f64::total_cmp);
                v
            };
            let labels = sorted(|r| r.labels_used as f64);
            let excess = sorted(|r| r.final_excess_error);
            let judged: Vec<bool> = rows.iter().filter_map(|r| r.success()).collect();
            Summary {
                learner,
                trials: rows.len(),
                failed: rows.len() - ok.len(),
                median_labels: quantile(&labels, 0.5),
                median_excess: quantile(&excess, 0.5),
                q10_excess: quantile(&excess, 0.1),
                q90_excess: quantile(&excess, 0.9),
                success_rate: rows[0]
                    .eps
                    .map(|_| judged.iter().filter(|&&s| s).count() as f64 / rows.len() as f64),
            }
        })
        .collect()
}

/// Disagreement coefficient of the configured class at `theta.r0`.
pub fn theta(config: &ExperimentConfig) -> anyhow::Result<ThetaEstimate> {
    let setup = Setup::build(config)?;
    Ok(estimate_disagreement_coefficient(&setup.problem, &setup.class, &setup.loss, config.theta_r0)?)
}

/// `(x, psi_tilde, psi, closed_form)` on an evenly spaced grid of `points` values.
pub fn calibration_rows(config: &ExperimentConfig, points: usize) -> anyhow::Result<Vec<[f64; 4]>> {
    let f_bar = config.f_bar.unwrap_or(1.0);
    let loss = SurrogateLoss::new(config.loss_kind, f_bar).map_err(|e| core_error(config, "loss.f_bar", e))?;
    let last = points.max(2) - 1;
    (0..=last)
        .map(|i| {
            let x = i as f64 / last as f64;
            Ok([x, loss.psi_tilde(x), loss.psi(x)?, config.loss_kind.closed_form_psi(x)])
        })
        .collect()
}

/// Exact `phi` for `m = 1..=oracle.m` and `Gamma` at each `oracle.eps`.
pub fn oracle_values(config: &ExperimentConfig) -> anyhow::Result<Vec<OracleValue>> {
    let setup = Setup::build(config)?;
    let FunctionClass::Finite(finite) = &*setup.class else {
        anyhow::bail!("the oracle needs a finite class, got {}", setup.class.kind_name());
    };
    let scenario = DiscreteScenario::new(finite.clone(), setup.problem.clone(), setup.loss.clone())?;
    let mut values = Vec::new();
    for m in 1..=config.oracle_m {
        values.push(OracleValue::Phi {
            m,
            value: scenario.exact_phi(m)?,
        });
    }
    for &eps in &config.oracle_eps {
        values.push(OracleValue::Gamma {
            eps,
            value: scenario.exact_gamma_transform(eps),
        });
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn search_finds_first_passing_budget() {
        let mut calls = 0;
        let mut rate = |b: u64| {
            calls += 1;
            if b >= 37 {
                1.0
            } else {
                0.0
            }
        };
        assert_eq!(search_budget(1000, &mut rate), (Some(37), 1.0));
        assert!(calls < 20);
    }

    #[test]
    fn search_reports_bound() {
        assert_eq!(search_budget(10, &mut |_| 0.25), (None, 0.25));
        assert_eq!(search_budget(10, &mut |_| 0.5), (Some(1), 0.5));
    }

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.1) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn mismatched_class_and_problem_is_a_config_error() {
        let cfg: ExperimentConfig = "class.kind = \"monotone_grid\"\nproblem.kind = \"two_point\"\n".parse().unwrap();
        let err = Setup::build(&cfg).unwrap_err();
        assert!(err.to_string().contains("class.kind"), "{err}");
    }

    #[test]
    fn core_validation_maps_to_the_key() {
        let cfg: ExperimentConfig = "class.kind = \"threshold_grid\"\nclass.atoms = 2\nproblem.kind = \"two_point\"\nproblem.two_point.z = 0.7\n"
            .parse()
            .unwrap();
        let err = Setup::build(&cfg).unwrap_err();
        assert!(err.to_string().starts_with("line 4: `problem.two_point.z`"), "{err}");
    }
}
