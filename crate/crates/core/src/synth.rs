//! Synthetic problems with known regression function, optimal scores and
//! noise parameters, plus disagreement-coefficient estimation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::batch::{Label, Point};
use crate::classes::{Function, FunctionClass};
use crate::error::{invalid, Error, Result};
use crate::losses::SurrogateLoss;
use crate::numeric::integrate;
use crate::sign;

/// Subintervals per smooth piece in every quadrature.
pub(crate) const QUAD_PIECES: usize = 64;

/// The marginal distribution of `X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Marginal {
    /// Masses of atoms `0..len`.
    Atoms(Vec<f64>),
    /// Uniform on `[0, 1]`.
    Uniform,
}

/// `eta(x) = P(Y = +1 | X = x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regression {
    /// One value per atom.
    Atoms(Vec<f64>),
    /// `1/2 + z sign(x - t)`.
    BoundedNoise { t: f64, z: f64 },
    /// `1/2 + 1/2 sign(x - t) min(1, |2(x - t)|)^((1 - alpha)/alpha)`.
    PowerNoise { t: f64, alpha: f64 },
    /// Piecewise-linear through equally spaced knots on `[0, 1]`.
    Knots(Vec<f64>),
}

/// Noise parameters `(a, alpha)` with `dist(g, f*) <= a (er(g) - er(f*))^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseParams {
    pub a: f64,
    pub alpha: f64,
}

/// A synthetic classification distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub name: String,
    pub marginal: Marginal,
    pub eta: Regression,
    pub noise: Option<NoiseParams>,
}

impl Problem {
    /// A discrete problem from atom masses and conditional probabilities.
    pub fn discrete(name: impl Into<String>, masses: Vec<f64>, etas: Vec<f64>) -> Result<Self> {
        if masses.is_empty() || masses.len() != etas.len() {
            return Err(invalid("problem", "need one eta per atom"));
        }
        if masses.iter().any(|&p| !(p >= 0.0)) || (masses.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(invalid("problem.masses", "masses must be nonnegative and sum to 1"));
        }
        if etas.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return Err(invalid("problem.eta", "eta must lie in [0, 1]"));
        }
        let margin = etas
            .iter()
            .zip(&masses)
            .filter(|(_, &p)| p > 0.0)
            .map(|(e, _)| (2.0 * e - 1.0).abs())
            .fold(f64::INFINITY, f64::min);
        let noise = (margin > 0.0).then(|| NoiseParams {
            a: (1.0 / margin).max(1.0),
            alpha: 1.0,
        });
        Ok(Self {
            name: name.into(),
            marginal: Marginal::Atoms(masses),
            eta: Regression::Atoms(etas),
            noise,
        })
    }

    /// Atom masses, for discrete problems.
    pub fn atom_masses(&self) -> Option<&[f64]> {
        match &self.marginal {
            Marginal::Atoms(m) => Some(m),
            Marginal::Uniform => None,
        }
    }

    pub fn is_discrete(&self) -> bool {
        matches!(self.marginal, Marginal::Atoms(_))
    }

    pub fn eta(&self, x: &Point) -> f64 {
        match (&self.eta, x) {
            (Regression::Atoms(e), Point::Atom(a)) => e[*a],
            (_, Point::Real(x)) => self.eta_real(*x),
            _ => panic!("problem `{}` cannot evaluate eta at {x:?}", self.name),
        }
    }

    pub(crate) fn eta_real(&self, x: f64) -> f64 {
        match &self.eta {
            Regression::BoundedNoise { t, z } => 0.5 + z * sign(x - t),
            Regression::PowerNoise { t, alpha } => {
                let d = x - t;
                0.5 + 0.5 * sign(d) * (2.0 * d.abs()).min(1.0).powf((1.0 - alpha) / alpha)
            }
            Regression::Knots(k) => {
                if k.len() == 1 {
                    return k[0];
                }
                let pos = x.clamp(0.0, 1.0) * (k.len() - 1) as f64;
                let i = (pos.floor() as usize).min(k.len() - 2);
                let frac = pos - i as f64;
                k[i] + (k[i + 1] - k[i]) * frac
            }
            Regression::Atoms(_) => panic!("problem `{}` has atom-valued eta", self.name),
        }
    }

    /// Points where `eta` may be discontinuous or kinked.
    pub(crate) fn breakpoints(&self) -> Vec<f64> {
        match &self.eta {
            Regression::BoundedNoise { t, .. } => vec![*t],
            Regression::PowerNoise { t, .. } => vec![t - 0.5, *t, t + 0.5],
            Regression::Knots(k) if k.len() > 1 => {
                (1..k.len() - 1).map(|i| i as f64 / (k.len() - 1) as f64).collect()
            }
            _ => Vec::new(),
        }
    }

    pub fn sample_x<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match &self.marginal {
            Marginal::Atoms(masses) => {
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                for (a, &p) in masses.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        return Point::Atom(a);
                    }
                }
                Point::Atom(masses.iter().rposition(|&p| p > 0.0).unwrap_or(0))
            }
            Marginal::Uniform => Point::Real(rng.gen()),
        }
    }

    /// Draws `(x, y)`; always consumes the same amount of randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (Point, Label) {
        let x = self.sample_x(rng);
        let u: f64 = rng.gen();
        let y = if u < self.eta(&x) {
            Label::Positive
        } else {
            Label::Negative
        };
        (x, y)
    }

    /// The loss-optimal score `z*(eta(x))`.
    pub fn f_star(&self, loss: &SurrogateLoss, x: &Point) -> f64 {
        loss.pointwise_minimizer(self.eta(x)).z
    }

    /// `E min(eta, 1 - eta)`.
    pub fn bayes_error(&self) -> f64 {
        match (&self.marginal, &self.eta) {
            (Marginal::Atoms(m), Regression::Atoms(e)) => {
                m.iter().zip(e).map(|(p, e)| p * e.min(1.0 - e)).sum()
            }
            _ => integrate(
                |x| {
                    let e = self.eta_real(x);
                    e.min(1.0 - e)
                },
                0.0,
                1.0,
                &self.breakpoints(),
                4 * QUAD_PIECES,
            ),
        }
    }
}

/// The two-atom construction: `P(x1) = eps0 / (2z)`, `eta(x1) = 1/2 + z`.
/// Atom 0 is `x0`, atom 1 is `x1`.
pub fn make_two_point(z: f64, eps0: f64, eta_x0: f64) -> Result<Problem> {
    if !(z > 0.0 && z < 0.5) {
        return Err(invalid("problem.two_point.z", format!("must lie in (0, 1/2), got {z}")));
    }
    if !(eps0 > 0.0 && eps0 < z) {
        return Err(invalid("problem.two_point.eps0", format!("must lie in (0, z), got {eps0}")));
    }
    if !(4.0 / 6.0 - 1e-12..=5.0 / 6.0 + 1e-12).contains(&eta_x0) {
        return Err(invalid("problem.two_point.eta_x0", format!("must lie in [4/6, 5/6], got {eta_x0}")));
    }
    let p1 = eps0 / (2.0 * z);
    Problem::discrete("two_point", vec![1.0 - p1, p1], vec![eta_x0, 0.5 + z])
}

/// Uniform marginal with a threshold at `t`: bounded noise `z` when
/// `alpha = 1`, power-law noise near `t` otherwise. The constant `a` is fitted
/// over a grid of threshold classifiers.
pub fn make_threshold_tsybakov(t: f64, alpha: f64, z: f64) -> Result<Problem> {
    if !(t > 0.0 && t < 1.0) {
        return Err(invalid("problem.threshold.t", format!("must lie in (0, 1), got {t}")));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid("problem.threshold.alpha", format!("must lie in (0, 1], got {alpha}")));
    }
    if !(z > 0.0 && z <= 0.5) {
        return Err(invalid("problem.threshold.z", format!("must lie in (0, 1/2], got {z}")));
    }
    let eta = if alpha == 1.0 {
        Regression::BoundedNoise { t, z }
    } else {
        Regression::PowerNoise { t, alpha }
    };
    let mut problem = Problem {
        name: "threshold".into(),
        marginal: Marginal::Uniform,
        eta,
        noise: None,
    };
    let a = (0..=1000)
        .map(|i| i as f64 / 1000.0)
        .filter(|s| (s - t).abs() > 1e-12)
        .map(|s| {
            let d = (s - t).abs();
            d / problem.threshold_excess(s).expect("threshold problem").powf(alpha)
        })
        .fold(1.0, f64::max);
    problem.noise = Some(NoiseParams { a, alpha });
    Ok(problem)
}

impl Problem {
    /// Excess error of `x -> sign(x - s)` on a threshold problem.
    pub fn threshold_excess(&self, s: f64) -> Option<f64> {
        match &self.eta {
            Regression::BoundedNoise { t, z } => Some(2.0 * z * (s - t).abs()),
            Regression::PowerNoise { t, alpha } => {
                let d = (s - t).abs();
                let inner = d.min(0.5);
                Some((2.0 * inner).powf(1.0 / alpha) * alpha / 2.0 + (d - 0.5).max(0.0))
            }
            _ => None,
        }
    }
}

/// How `eta` is specified for the monotone problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EtaSpec {
    /// `eta(x) = x`.
    Linear,
    /// Nondecreasing values at equally spaced knots (one value means constant).
    Knots(Vec<f64>),
}

/// Uniform marginal with nondecreasing `eta`.
pub fn make_monotone(spec: EtaSpec) -> Result<Problem> {
    let knots = match spec {
        EtaSpec::Linear => vec![0.0, 1.0],
        EtaSpec::Knots(k) => k,
    };
    if knots.is_empty() {
        return Err(invalid("problem.monotone.eta", "need at least one knot"));
    }
    if knots.iter().any(|e| !(0.0..=1.0).contains(e)) {
        return Err(invalid("problem.monotone.eta", "values must lie in [0, 1]"));
    }
    if knots.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("problem.monotone.eta", "eta must be nondecreasing"));
    }
    Ok(Problem {
        name: "monotone".into(),
        marginal: Marginal::Uniform,
        eta: Regression::Knots(knots),
        noise: None,
    })
}

/// One point of the `P(DIS(B(f*, r))) / r` curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaPoint {
    pub r: f64,
    pub dis_mass: f64,
    pub ratio: f64,
    pub running_sup: f64,
}

/// Disagreement coefficient estimate with its curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub theta: f64,
    pub std_error: Option<f64>,
    pub curve: Vec<ThetaPoint>,
}

/// `theta(r0) = sup_{r > r0} P(DIS(B(f*, r))) / r  v  1`.
///
/// Balls only change at the distances realised in the class, so the sup runs
/// over those distances, each evaluated at `max(d, r0)` when its interval
/// reaches above `r0`.
pub fn estimate_disagreement_coefficient(
    problem: &Problem,
    class: &FunctionClass,
    loss: &SurrogateLoss,
    r0: f64,
) -> Result<ThetaEstimate> {
    if !(r0 > 0.0) {
        return Err(invalid("theta.r0", format!("must be positive, got {r0}")));
    }
    match class {
        FunctionClass::Finite(finite) => {
            let masses = problem.atom_masses().ok_or_else(|| Error::Unsupported {
                op: "disagreement coefficient",
                kind: "finite classes on continuous problems".into(),
            })?;
            if masses.len() != finite.domain_size() {
                return Err(invalid("class", "class domain does not match the problem atoms"));
            }
            let star: Vec<bool> = (0..masses.len())
                .map(|a| problem.f_star(loss, &Point::Atom(a)) >= 0.0)
                .collect();
            let signs: Vec<Vec<bool>> = finite
                .members()
                .iter()
                .map(|f| f.params().iter().map(|&v| v >= 0.0).collect())
                .collect();
            let dists: Vec<f64> = signs
                .iter()
                .map(|s| (0..masses.len()).filter(|&a| s[a] != star[a]).map(|a| masses[a]).sum())
                .collect();
            let mut order: Vec<usize> = (0..dists.len()).collect();
            order.sort_by(|&i, &j| dists[i].total_cmp(&dists[j]));
            let mut pos = vec![false; masses.len()];
            let mut neg = vec![false; masses.len()];
            let mut radii = Vec::new();
            let mut k = 0;
            while k < order.len() {
                let d = dists[order[k]];
                while k < order.len() && dists[order[k]] <= d + 1e-12 {
                    for (a, &s) in signs[order[k]].iter().enumerate() {
                        if s {
                            pos[a] = true;
                        } else {
                            neg[a] = true;
                        }
                    }
                    k += 1;
                }
                let next = order.get(k).map_or(f64::INFINITY, |&i| dists[i]);
                let mass: f64 = (0..masses.len()).filter(|&a| pos[a] && neg[a]).map(|a| masses[a]).sum();
                radii.push((d, next, mass));
            }
            Ok(curve_from_radii(&radii, r0, None))
        }
        FunctionClass::MonotoneGrid(grid) => {
            if problem.is_discrete() {
                return Err(Error::Unsupported {
                    op: "disagreement coefficient",
                    kind: "monotone_grid on discrete problems".into(),
                });
            }
            // Sign patterns of monotone functions are crossings k: cells < k negative.
            let g = grid.cells();
            let w = 1.0 / g as f64;
            let k_star = (0..g)
                .filter(|&j| {
                    let (a, b) = grid.cell_bounds(j);
                    integrate(|x| 2.0 * problem.eta_real(x) - 1.0, a, b, &problem.breakpoints(), QUAD_PIECES) < 0.0
                })
                .count();
            let reach = k_star.max(g - k_star);
            let radii: Vec<(f64, f64, f64)> = (0..=reach)
                .map(|j| {
                    let lo = k_star.saturating_sub(j);
                    let hi = (k_star + j).min(g);
                    (j as f64 * w, (j + 1) as f64 * w, (hi - lo) as f64 * w)
                })
                .map(|(d, next, mass)| (d, if next > reach as f64 * w + 1e-12 { f64::INFINITY } else { next }, mass))
                .collect();
            Ok(curve_from_radii(&radii, r0, None))
        }
        FunctionClass::LinearBall(ball) => linear_ball_theta(problem, class, ball.dim(), ball.radius(), loss, r0),
    }
}

/// `(d, next_d, mass)` triples to the theta curve.
fn curve_from_radii(radii: &[(f64, f64, f64)], r0: f64, se: Option<&dyn Fn(f64, f64) -> f64>) -> ThetaEstimate {
    let mut sup = 1.0f64;
    let mut best_se = None;
    let mut curve = Vec::new();
    for &(d, next, mass) in radii {
        if next <= r0 {
            continue;
        }
        let r = d.max(r0);
        let ratio = mass / r;
        if ratio > sup {
            sup = ratio;
            best_se = se.map(|f| f(mass, r));
        }
        curve.push(ThetaPoint {
            r,
            dis_mass: mass,
            ratio,
            running_sup: sup,
        });
    }
    ThetaEstimate {
        theta: sup,
        std_error: se.map(|_| best_se.unwrap_or(0.0)),
        curve,
    }
}

const THETA_MEMBERS: usize = 2000;
const THETA_POINTS: usize = 4000;

fn linear_ball_theta(
    problem: &Problem,
    class: &FunctionClass,
    dim: usize,
    radius: f64,
    loss: &SurrogateLoss,
    r0: f64,
) -> Result<ThetaEstimate> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x7E7A);
    let xs: Vec<Point> = (0..THETA_POINTS).map(|_| problem.sample_x(&mut rng)).collect();
    let star: Vec<bool> = xs.iter().map(|x| problem.f_star(loss, x) >= 0.0).collect();
    let members: Vec<Vec<bool>> = (0..THETA_MEMBERS)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
            let n = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let len = radius * rng.gen::<f64>().powf(1.0 / dim as f64);
            let f = Function::new(dir.iter().map(|v| v / n * len).collect());
            xs.iter().map(|x| class.eval(&f, x) >= 0.0).collect()
        })
        .collect();
    let npts = xs.len() as f64;
    let dists: Vec<f64> = members
        .iter()
        .map(|s| s.iter().zip(&star).filter(|(a, b)| a != b).count() as f64 / npts)
        .collect();
    // Centre the balls on the sampled member closest to f*.
    let centre = (0..members.len()).min_by(|&i, &j| dists[i].total_cmp(&dists[j])).unwrap_or(0);
    let rel: Vec<f64> = members
        .iter()
        .map(|s| s.iter().zip(&members[centre]).filter(|(a, b)| a != b).count() as f64 / npts)
        .collect();
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&i, &j| rel[i].total_cmp(&rel[j]));
    let mut pos = vec![false; xs.len()];
    let mut neg = vec![false; xs.len()];
    let mut radii = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let d = rel[order[k]];
        while k < order.len() && rel[order[k]] <= d {
            for (p, &s) in members[order[k]].iter().enumerate() {
                if s {
                    pos[p] = true;
                } else {
                    neg[p] = true;
                }
            }
            k += 1;
        }
        let next = order.get(k).map_or(f64::INFINITY, |&i| rel[i]);
        let mass = pos.iter().zip(&neg).filter(|(p, n)| **p && **n).count() as f64 / npts;
        radii.push((d, next, mass));
    }
    let se = move |mass: f64, r: f64| (mass * (1.0 - mass) / npts).sqrt() / r;
    Ok(curve_from_radii(&radii, r0, Some(&se)))
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}
