//! Algorithm 1 (active, disagreement-based) and the passive ERM baseline.

use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{derive_seed, Labeled, LabeledBatch, Point};
use crate::classes::{constrained_min_risk, erm, DisRegion, Function, FunctionClass, VersionSpace};
use crate::complexity::{
    t_hat_rademacher, t_hat_recursive_vc, t_hat_strong_convexity, RecursionState, ThresholdParams,
    ThresholdVariant,
};
use crate::error::{Error, Result};
use crate::losses::SurrogateLoss;
use crate::numeric::integrate;
use crate::sign;
use crate::synth::{Problem, QUAD_PIECES};

/// Default number of diagnostic points for DIS-mass estimates.
pub const DIS_MASS_SAMPLES: usize = 10_000;
const MC_SAMPLES: usize = 100_000;

/// A value with an optional Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: Option<f64>,
}

impl Estimate {
    fn exact(value: f64) -> Self {
        Self {
            value,
            std_error: None,
        }
    }
}

/// State of the version space right after one update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateRecord {
    pub m: u64,
    pub q: usize,
    pub t_hat: f64,
    pub budget: f64,
    /// Fraction of the diagnostic sample inside `DIS(V)`.
    pub dis_mass: f64,
    pub f_star_in_v: Option<bool>,
}

/// Trace of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub labels_used: u64,
    pub unlabeled_used: u64,
    pub updates: Vec<UpdateRecord>,
    pub final_excess_error: f64,
    pub final_excess_surrogate: f64,
    /// Whether the class's surrogate-optimal member survived every update (finite classes).
    pub f_star_retained: Option<bool>,
    pub seed: u64,
    pub wall_ms: f64,
}

impl TrialRecord {
    /// The record with timing removed, for reproducibility comparisons.
    pub fn without_timing(mut self) -> Self {
        self.wall_ms = 0.0;
        self
    }
}

/// Knobs that affect only the recorded diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Diagnostics {
    pub dis_mass_samples: usize,
}

impl Default for Diagnostics {
    fn default() -> Self {
        Self {
            dis_mass_samples: DIS_MASS_SAMPLES,
        }
    }
}

/// Runs Algorithm 1 with the default diagnostics.
pub fn run_algorithm1(
    problem: &Problem,
    class: &Arc<FunctionClass>,
    loss: &SurrogateLoss,
    u: u64,
    n: u64,
    params: &ThresholdParams,
    seed: u64,
) -> Result<(Function, TrialRecord)> {
    run_algorithm1_with(problem, class, loss, u, n, params, seed, Diagnostics::default())
}

/// Algorithm 1: label only points in `DIS(V)`, and at every power of two
/// append the constraint `R(h; Q) <= inf_V R(.; Q) + T_hat` and reset `Q`.
#[allow(clippy::too_many_arguments)]
pub fn run_algorithm1_with(
    problem: &Problem,
    class: &Arc<FunctionClass>,
    loss: &SurrogateLoss,
    u: u64,
    n: u64,
    params: &ThresholdParams,
    seed: u64,
    diagnostics: Diagnostics,
) -> Result<(Function, TrialRecord)> {
    params.validate()?;
    let start = Instant::now();
    let mut data = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let mut diag_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let diag_points: Vec<Point> = (0..diagnostics.dis_mass_samples)
        .map(|_| problem.sample_x(&mut diag_rng))
        .collect();
    let f_star = class_optimum(problem, class, loss);

    let mut vspace = VersionSpace::new(Arc::clone(class));
    let mut region = DisRegion::compute(&vspace, loss)?;
    let mut batch = LabeledBatch::new();
    let mut recursion = RecursionState::new();
    let mut updates = Vec::new();
    let mut last_witness = None;
    let (mut m, mut t) = (1u64, 0u64);

    while m < u && t < n {
        m += 1;
        let (x, y) = problem.sample(&mut data);
        if region.contains(&x)? {
            batch.push(seed, m, Labeled::new(x, y))?;
            t += 1;
        }
        if m.is_power_of_two() {
            let (inf, witness) = constrained_min_risk(&vspace, loss, &batch)?;
            let q = batch.len();
            let t_hat = match params.variant {
                ThresholdVariant::Rademacher => t_hat_rademacher(&vspace, &batch, m, loss, params)?,
                ThresholdVariant::RecursiveVc => {
                    let (value, next) = t_hat_recursive_vc(&recursion, q, m, loss, params)?;
                    recursion = next;
                    value
                }
                ThresholdVariant::StrongConvexity => t_hat_strong_convexity(q, m, loss, params)?,
            };
            let budget = inf + t_hat;
            vspace = vspace.with_constraint(std::mem::take(&mut batch), budget);
            region = DisRegion::compute(&vspace, loss)?.intersect(&region);
            updates.push(UpdateRecord {
                m,
                q,
                t_hat,
                budget,
                dis_mass: region.mass_on(&diag_points)?,
                f_star_in_v: f_star.as_ref().map(|f| vspace.contains(loss, f)),
            });
            last_witness = Some(witness);
        }
    }

    let h_hat = match last_witness {
        Some(w) if batch.is_empty() => w,
        _ => constrained_min_risk(&vspace, loss, &batch)?.1,
    };
    let f_star_retained = f_star.as_ref().map(|f| vspace.contains(loss, f));
    let record = TrialRecord {
        labels_used: t,
        unlabeled_used: m - 1,
        updates,
        final_excess_error: excess_error(&h_hat, problem, class)?.value,
        final_excess_surrogate: excess_surrogate(&h_hat, problem, class, loss)?.value,
        f_star_retained,
        seed,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((h_hat, record))
}

/// ERM on `m` labeled draws from the same stream Algorithm 1 would see.
pub fn run_erm_passive(
    problem: &Problem,
    class: &FunctionClass,
    loss: &SurrogateLoss,
    m: u64,
    seed: u64,
) -> Result<(Function, TrialRecord)> {
    if m == 0 {
        return Err(Error::EmptySample);
    }
    let start = Instant::now();
    let mut data = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0));
    let samples: Vec<Labeled> = (0..m)
        .map(|_| {
            let (x, y) = problem.sample(&mut data);
            Labeled::new(x, y)
        })
        .collect();
    let h_hat = erm(class, loss, &samples)?;
    let record = TrialRecord {
        labels_used: m,
        unlabeled_used: m,
        updates: Vec::new(),
        final_excess_error: excess_error(&h_hat, problem, class)?.value,
        final_excess_surrogate: excess_surrogate(&h_hat, problem, class, loss)?.value,
        f_star_retained: None,
        seed,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((h_hat, record))
}

/// The member of a finite class with least population surrogate risk (first on ties).
pub fn class_optimum(problem: &Problem, class: &FunctionClass, loss: &SurrogateLoss) -> Option<Function> {
    let (FunctionClass::Finite(finite), Some(masses)) = (class, problem.atom_masses()) else {
        return None;
    };
    let risk = |f: &Function| -> f64 {
        masses
            .iter()
            .enumerate()
            .map(|(a, p)| p * loss.conditional_risk(problem.eta(&Point::Atom(a)), f.params()[a]))
            .sum()
    };
    let mut best: Option<(&Function, f64)> = None;
    for f in finite.members() {
        let r = risk(f);
        if best.map_or(true, |(_, b)| r < b - 1e-12) {
            best = Some((f, r));
        }
    }
    best.map(|(f, _)| f.clone())
}

fn unsupported(problem: &Problem, class: &FunctionClass) -> Error {
    Error::Unsupported {
        op: "excess risk",
        kind: format!("{} class on problem `{}`", class.kind_name(), problem.name),
    }
}

/// `er(h) - er(f*) = E |2 eta - 1| 1{sign h != sign(2 eta - 1)}`.
pub fn excess_error(h: &Function, problem: &Problem, class: &FunctionClass) -> Result<Estimate> {
    excess_by(h, problem, class, |eta, score| {
        let gap = 2.0 * eta - 1.0;
        if sign(score) != sign(gap) {
            gap.abs()
        } else {
            0.0
        }
    })
}

/// `R(h) - R(f*) = E [C_eta(h) - l*(eta)]`.
pub fn excess_surrogate(h: &Function, problem: &Problem, class: &FunctionClass, loss: &SurrogateLoss) -> Result<Estimate> {
    excess_by(h, problem, class, |eta, score| {
        (loss.conditional_risk(eta, score) - loss.optimal_conditional_risk(eta)).max(0.0)
    })
}

/// `E g(eta(X), h(X))`: exact on atoms, quadrature per cell, Monte Carlo otherwise.
fn excess_by(
    h: &Function,
    problem: &Problem,
    class: &FunctionClass,
    g: impl Fn(f64, f64) -> f64,
) -> Result<Estimate> {
    match (class, problem.atom_masses()) {
        (FunctionClass::Finite(_), Some(masses)) => Ok(Estimate::exact(
            masses
                .iter()
                .enumerate()
                .map(|(a, p)| {
                    let x = Point::Atom(a);
                    p * g(problem.eta(&x), class.eval(h, &x))
                })
                .sum(),
        )),
        (FunctionClass::MonotoneGrid(grid), None) => {
            let breaks = problem.breakpoints();
            let total = (0..grid.cells())
                .map(|j| {
                    let (a, b) = grid.cell_bounds(j);
                    let v = h.params()[j];
                    integrate(|x| g(problem.eta_real(x), v), a, b, &breaks, QUAD_PIECES)
                })
                .sum();
            Ok(Estimate::exact(total))
        }
        (FunctionClass::LinearBall(_), None) => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x00E5_CE55);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..MC_SAMPLES {
                let x = problem.sample_x(&mut rng);
                let v = g(problem.eta(&x), class.eval(h, &x));
                s += v;
                s2 += v * v;
            }
            let n = MC_SAMPLES as f64;
            let mean = s / n;
            let var = (s2 / n - mean * mean).max(0.0);
            Ok(Estimate {
                value: mean,
                std_error: Some((var / n).sqrt()),
            })
        }
        _ => Err(unsupported(problem, class)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classes::{FiniteClass, MonotoneGrid};
    use crate::losses::LossKind;
    use crate::synth::{make_monotone, make_two_point, EtaSpec};

    fn pair_class() -> Arc<FunctionClass> {
        Arc::new(FunctionClass::Finite(
            FiniteClass::new(2, vec![vec![0.5, 0.5], vec![0.5, -0.5]]).unwrap(),
        ))
    }

    #[test]
    fn two_point_excess_of_g() {
        let p = make_two_point(0.25, 0.1, 0.75).unwrap();
        let class = pair_class();
        let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
        let g = Function::new(vec![0.5, -0.5]);
        assert!((excess_error(&g, &p, &class).unwrap().value - 0.1).abs() < 1e-15);
        assert!((excess_surrogate(&g, &p, &class, &loss).unwrap().value - 0.2).abs() < 1e-12);
        let f = Function::new(vec![0.5, 0.5]);
        assert_eq!(excess_error(&f, &p, &class).unwrap().value, 0.0);
        assert!(excess_surrogate(&f, &p, &class, &loss).unwrap().value.abs() < 1e-12);
    }

    #[test]
    fn monotone_zero_function_excess() {
        let p = make_monotone(EtaSpec::Linear).unwrap();
        let class = FunctionClass::MonotoneGrid(MonotoneGrid::new(64).unwrap());
        let zero = Function::new(vec![0.0; 64]);
        assert!((excess_error(&zero, &p, &class).unwrap().value - 0.25).abs() < 1e-12);
    }

    #[test]
    fn n_zero_makes_no_requests() {
        let p = make_two_point(0.25, 0.1, 0.75).unwrap();
        let class = pair_class();
        let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.1).unwrap();
        let (h, rec) = run_algorithm1(&p, &class, &loss, 4096, 0, &params, 3).unwrap();
        assert_eq!(rec.labels_used, 0);
        assert_eq!(rec.unlabeled_used, 0);
        assert_eq!(h.params(), &[0.5, 0.5]);
    }

    #[test]
    fn passive_uses_exactly_m_labels() {
        let p = make_two_point(0.25, 0.1, 0.75).unwrap();
        let class = pair_class();
        let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
        let (_, rec) = run_erm_passive(&p, &class, &loss, 17, 5).unwrap();
        assert_eq!(rec.labels_used, 17);
        assert!(run_erm_passive(&p, &class, &loss, 0, 5).is_err());
    }

    #[test]
    fn bookkeeping_and_budgets() {
        let p = make_two_point(0.25, 0.1, 0.75).unwrap();
        let class = pair_class();
        let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.1)
            .unwrap()
            .with_scale(0.02)
            .unwrap();
        let diag = Diagnostics { dis_mass_samples: 500 };
        let (_, rec) = run_algorithm1_with(&p, &class, &loss, 300, 40, &params, 11, diag).unwrap();
        assert!(rec.labels_used <= 40 && rec.unlabeled_used <= 300);
        let ms: Vec<u64> = rec.updates.iter().map(|u| u.m).collect();
        for (k, m) in ms.iter().enumerate() {
            assert_eq!(*m, 2u64 << k);
        }
        assert!(rec.updates.windows(2).all(|w| w[1].dis_mass <= w[0].dis_mass));
        let (_, again) = run_algorithm1_with(&p, &class, &loss, 300, 40, &params, 11, diag).unwrap();
        assert_eq!(rec.without_timing(), again.without_timing());
    }
}
