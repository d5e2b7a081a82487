//! Brute-force references, written independently of the production paths.

use crate::batch::{Labeled, Point};
use crate::classes::{FiniteClass, Function, FunctionClass};
use crate::error::{invalid, Error, Result};
use crate::losses::{LossKind, SurrogateLoss};
use crate::synth::Problem;

/// Cap on enumerated sample outcomes.
pub const OUTCOME_CAP: f64 = 1e6;
/// Largest sample handled by the monotone brute-force fit.
pub const MONOTONE_SAMPLE_CAP: usize = 8;

/// Excess errors this close to `eps` count as equal to it.
pub const GAMMA_TIE_TOL: f64 = 1e-12;

/// A finite class on a discrete problem, small enough to enumerate.
#[derive(Debug, Clone)]
pub struct DiscreteScenario {
    pub class: FiniteClass,
    pub problem: Problem,
    pub loss: SurrogateLoss,
}

/// `Gamma(eps)` over a finite class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GammaValue {
    Finite(f64),
    /// Every member is within `eps` in excess error.
    Unbounded,
}

impl DiscreteScenario {
    pub fn new(class: FiniteClass, problem: Problem, loss: SurrogateLoss) -> Result<Self> {
        let masses = problem
            .atom_masses()
            .ok_or_else(|| invalid("problem", "scenario needs a discrete problem"))?;
        if masses.len() != class.domain_size() {
            return Err(invalid("class", "class domain does not match the problem atoms"));
        }
        Ok(Self { class, problem, loss })
    }

    fn masses(&self) -> &[f64] {
        self.problem.atom_masses().expect("checked at construction")
    }

    fn eta(&self, a: usize) -> f64 {
        self.problem.eta(&Point::Atom(a))
    }

    /// Population surrogate risk of every member.
    pub fn member_risks(&self) -> Vec<f64> {
        self.class
            .members()
            .iter()
            .map(|f| {
                self.masses()
                    .iter()
                    .enumerate()
                    .map(|(a, p)| {
                        let e = self.eta(a);
                        let v = f.params()[a];
                        p * (e * self.loss.eval(v) + (1.0 - e) * self.loss.eval(-v))
                    })
                    .sum()
            })
            .collect()
    }

    /// `(excess surrogate, excess error)` of every member, against the
    /// pointwise-optimal scores.
    pub fn member_excess(&self) -> Vec<(f64, f64)> {
        let masses = self.masses();
        let best_risk: f64 = masses
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.loss.pointwise_minimizer(self.eta(a)).value)
            .sum();
        let bayes: f64 = masses
            .iter()
            .enumerate()
            .map(|(a, p)| p * self.eta(a).min(1.0 - self.eta(a)))
            .sum();
        self.class
            .members()
            .iter()
            .zip(self.member_risks())
            .map(|(f, risk)| {
                let err: f64 = masses
                    .iter()
                    .enumerate()
                    .map(|(a, p)| {
                        let e = self.eta(a);
                        // P(Y != sign h(x)), sign(0) = +1.
                        p * if f.params()[a] >= 0.0 { 1.0 - e } else { e }
                    })
                    .sum();
                ((risk - best_risk).max(0.0), (err - bayes).max(0.0))
            })
            .collect()
    }

    /// `E sup_{h,g} (R(h) - R(g)) - (R(h;Q) - R(g;Q))` over every `Q ~ P^m`.
    pub fn exact_phi(&self, m: usize) -> Result<f64> {
        let masses = self.masses();
        // Outcomes (atom, label) with positive probability.
        let mut outcomes: Vec<(usize, f64, f64)> = Vec::new();
        for (a, &p) in masses.iter().enumerate() {
            let e = self.eta(a);
            for (y, py) in [(1.0, e), (-1.0, 1.0 - e)] {
                if p * py > 0.0 {
                    outcomes.push((a, y, p * py));
                }
            }
        }
        let total = (outcomes.len() as f64).powi(m as i32);
        if total > OUTCOME_CAP {
            return Err(Error::EnumerationTooLarge {
                outcomes: total,
                cap: OUTCOME_CAP,
            });
        }
        let risks = self.member_risks();
        let members = self.class.members();
        // Loss of member i on outcome o.
        let table: Vec<Vec<f64>> = members
            .iter()
            .map(|f| outcomes.iter().map(|&(a, y, _)| self.loss.eval(y * f.params()[a])).collect())
            .collect();
        if m == 0 {
            let max = risks.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = risks.iter().copied().fold(f64::INFINITY, f64::min);
            return Ok(max - min);
        }
        let mut idx = vec![0usize; m];
        let mut expectation = 0.0;
        loop {
            let prob: f64 = idx.iter().map(|&o| outcomes[o].2).product();
            // sup over pairs of D(h) - D(g) with D(h) = R(h) - R(h; Q).
            let d: Vec<f64> = (0..members.len())
                .map(|i| risks[i] - idx.iter().map(|&o| table[i][o]).sum::<f64>() / m as f64)
                .collect();
            let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = d.iter().copied().fold(f64::INFINITY, f64::min);
            expectation += prob * (max - min);
            let mut k = 0;
            loop {
                if k == m {
                    return Ok(expectation);
                }
                idx[k] += 1;
                if idx[k] < outcomes.len() {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    /// Smallest excess surrogate risk among members whose excess error exceeds `eps`.
    pub fn exact_gamma_transform(&self, eps: f64) -> GammaValue {
        self.member_excess()
            .into_iter()
            .filter(|&(_, err)| err > eps + GAMMA_TIE_TOL)
            .map(|(sur, _)| sur)
            .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            .map_or(GammaValue::Unbounded, GammaValue::Finite)
    }
}

/// Exact empirical minimizer by exhaustive search.
///
/// Finite classes: scan every member. Monotone grids with the quadratic loss
/// and at most eight samples: scan every partition of the occupied cells into
/// consecutive blocks, fit block means, and keep the best monotone candidate.
pub fn brute_erm(class: &FunctionClass, loss: &SurrogateLoss, samples: &[Labeled]) -> Result<Function> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    match class {
        FunctionClass::Finite(finite) => {
            let mut best: Option<(usize, f64)> = None;
            for (i, f) in finite.members().iter().enumerate() {
                let mut total = 0.0;
                for s in samples {
                    let Point::Atom(a) = s.x else {
                        return Err(invalid("samples", "finite classes take atom points"));
                    };
                    total += loss.eval(s.y.value() * f.params()[a]);
                }
                let risk = total / samples.len() as f64;
                if best.map_or(true, |(_, b)| risk < b - 1e-12) {
                    best = Some((i, risk));
                }
            }
            Ok(finite.members()[best.expect("nonempty class").0].clone())
        }
        FunctionClass::MonotoneGrid(grid) => {
            if loss.kind() != LossKind::Quadratic {
                return Err(Error::Unsupported {
                    op: "brute_erm",
                    kind: "monotone_grid with a non-quadratic loss".into(),
                });
            }
            if samples.len() > MONOTONE_SAMPLE_CAP {
                return Err(invalid("samples", format!("at most {MONOTONE_SAMPLE_CAP} samples")));
            }
            let g = grid.cells();
            let mut sums = vec![0.0; g];
            let mut counts = vec![0.0; g];
            for s in samples {
                let Point::Real(x) = s.x else {
                    return Err(invalid("samples", "monotone classes take real points"));
                };
                let j = grid.cell_of(x);
                sums[j] += s.y.value();
                counts[j] += 1.0;
            }
            let cells: Vec<usize> = (0..g).filter(|&j| counts[j] > 0.0).collect();
            let k = cells.len();
            let mut best: Option<(Vec<f64>, f64)> = None;
            // Bit i of `mask` cuts between occupied cells i and i + 1.
            for mask in 0u32..(1u32 << (k - 1)) {
                let mut values = vec![0.0; k];
                let mut start = 0;
                for i in 0..k {
                    if i == k - 1 || mask & (1 << i) != 0 {
                        let (s, c) = (start..=i).fold((0.0, 0.0), |(s, c), b| (s + sums[cells[b]], c + counts[cells[b]]));
                        let mean = (s / c).clamp(-1.0, 1.0);
                        values[start..=i].iter_mut().for_each(|v| *v = mean);
                        start = i + 1;
                    }
                }
                if values.windows(2).any(|w| w[1] < w[0]) {
                    continue;
                }
                let risk: f64 = samples
                    .iter()
                    .map(|s| {
                        let Point::Real(x) = s.x else { unreachable!() };
                        let j = cells.iter().position(|&c| c == grid.cell_of(x)).expect("occupied");
                        loss.eval(s.y.value() * values[j])
                    })
                    .sum();
                if best.as_ref().map_or(true, |(_, b)| risk < *b) {
                    best = Some((values, risk));
                }
            }
            let (values, _) = best.expect("the single block is always monotone");
            // Extend to every cell: copy left neighbours, leading cells copy the first value.
            let mut full = vec![values[0]; g];
            let mut k = 0;
            for (j, v) in full.iter_mut().enumerate() {
                while k + 1 < cells.len() && cells[k + 1] <= j {
                    k += 1;
                }
                *v = values[k];
            }
            Ok(Function::new(full))
        }
        FunctionClass::LinearBall(_) => Err(Error::Unsupported {
            op: "brute_erm",
            kind: "linear_ball".into(),
        }),
    }
}

/// DIS of an explicit set of functions: atoms where some pair differs in sign.
pub fn enumerate_dis(members: &[Function], domain_size: usize) -> Vec<bool> {
    (0..domain_size)
        .map(|a| {
            members.iter().any(|f| {
                members
                    .iter()
                    .any(|g| (f.params()[a] >= 0.0) != (g.params()[a] >= 0.0))
            })
        })
        .collect()
}
