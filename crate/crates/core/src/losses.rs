//! Margin losses, their calibration functions and the noise-dependent
//! transform that turns surrogate excess risk into excess error.

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::golden_section;

/// Points on the coarse grid used before golden-section refinement.
pub const MINIMIZER_GRID: usize = 1025;
/// Golden-section tolerance on `z`.
pub const MINIMIZER_TOL: f64 = 1e-10;
/// Default number of intervals of the calibration grid on `[0, 1]`.
pub const CALIBRATION_RESOLUTION: usize = 1024;
/// Largest gap at which a closed-form `psi` is trusted over the envelope.
pub const CLOSED_FORM_TOL: f64 = 1e-4;
/// Slack allowed when checking that the envelope stays below `psi_tilde`.
const ENVELOPE_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Exponential,
    Hinge,
    Quadratic,
    TruncatedQuadratic,
    ZeroOne,
}

impl LossKind {
    pub const ALL: [LossKind; 5] = [
        LossKind::Exponential,
        LossKind::Hinge,
        LossKind::Quadratic,
        LossKind::TruncatedQuadratic,
        LossKind::ZeroOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Exponential => "exponential",
            LossKind::Hinge => "hinge",
            LossKind::Quadratic => "quadratic",
            LossKind::TruncatedQuadratic => "truncated_quadratic",
            LossKind::ZeroOne => "zero_one",
        }
    }

    pub fn is_convex(self) -> bool {
        self != LossKind::ZeroOne
    }

    /// Closed-form `psi` for this kind.
    pub fn closed_form_psi(self, x: f64) -> f64 {
        let x = x.abs();
        match self {
            LossKind::Exponential => 1.0 - (1.0 - x * x).max(0.0).sqrt(),
            LossKind::Hinge | LossKind::ZeroOne => x,
            LossKind::Quadratic | LossKind::TruncatedQuadratic => x * x,
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid("loss.kind", format!("unknown loss `{s}`")))
    }
}

/// A minimizer of the conditional risk and the attained value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimizer {
    pub z: f64,
    pub value: f64,
}

/// The `(b, beta)` pair controlling the variance/mean relation of loss differences.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvatureParams {
    pub b: f64,
    pub beta: f64,
}

/// A margin loss restricted to scores in `[-f_bar, f_bar]`, with its
/// Lipschitz/convexity record.
#[derive(Debug, Clone)]
pub struct SurrogateLoss {
    kind: LossKind,
    f_bar: f64,
    loss_bound: f64,
    lipschitz: f64,
    convexity_c: f64,
    convexity_r: f64,
    metric_bound: f64,
    table: Arc<OnceLock<Result<CalibrationTable>>>,
}

impl PartialEq for SurrogateLoss {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.f_bar == other.f_bar
            && self.metric_bound == other.metric_bound
    }
}

impl SurrogateLoss {
    pub fn new(kind: LossKind, f_bar: f64) -> Result<Self> {
        if !(f_bar.is_finite() && f_bar > 0.0) {
            return Err(invalid("f_bar", format!("must be positive and finite, got {f_bar}")));
        }
        let (lipschitz, convexity_c, convexity_r, metric_bound) = match kind {
            LossKind::Exponential => (f_bar.exp(), (-f_bar).exp() / 8.0, 2.0, 2.0 * f_bar),
            LossKind::Quadratic => (2.0 * (f_bar + 1.0), 0.25, 2.0, 2.0 * f_bar),
            LossKind::TruncatedQuadratic => {
                (2.0 * (f_bar + 1.0), 0.25, 2.0, f_bar.min(1.0) + f_bar)
            }
            // c is a placeholder: with r = infinity it drops out of (b, beta).
            LossKind::Hinge => (1.0, 1.0, f64::INFINITY, 2.0 * f_bar),
            LossKind::ZeroOne => (1.0, 1.0, f64::INFINITY, 1.0),
        };
        let mut loss = Self {
            kind,
            f_bar,
            loss_bound: 1.0,
            lipschitz,
            convexity_c,
            convexity_r,
            metric_bound,
            table: Arc::default(),
        };
        loss.loss_bound = 1f64.max(loss.eval(-f_bar)).max(loss.eval(f_bar));
        Ok(loss)
    }

    /// Overrides the pseudometric bound `d_bar`.
    pub fn with_metric_bound(mut self, d_bar: f64) -> Result<Self> {
        if !(d_bar.is_finite() && d_bar > 0.0) {
            return Err(invalid("metric_bound", format!("must be positive, got {d_bar}")));
        }
        self.metric_bound = d_bar;
        Ok(self)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn f_bar(&self) -> f64 {
        self.f_bar
    }

    /// `l_bar = max(1, l(-f_bar), l(f_bar))`.
    pub fn loss_bound(&self) -> f64 {
        self.loss_bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn convexity_c(&self) -> f64 {
        self.convexity_c
    }

    pub fn convexity_r(&self) -> f64 {
        self.convexity_r
    }

    pub fn metric_bound(&self) -> f64 {
        self.metric_bound
    }

    pub fn eval(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => (-z).exp(),
            LossKind::Hinge => (1.0 - z).max(0.0),
            LossKind::Quadratic => {
                let d = 1.0 - z;
                d * d
            }
            LossKind::TruncatedQuadratic => {
                let d = (1.0 - z).max(0.0);
                d * d
            }
            LossKind::ZeroOne => {
                if z <= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative (a subgradient for hinge) of the loss.
    pub fn derivative(&self, z: f64) -> f64 {
        match self.kind {
            LossKind::Exponential => -(-z).exp(),
            LossKind::Hinge => {
                if z < 1.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            LossKind::Quadratic => -2.0 * (1.0 - z),
            LossKind::TruncatedQuadratic => -2.0 * (1.0 - z).max(0.0),
            LossKind::ZeroOne => 0.0,
        }
    }

    /// `eta0 l(z) + (1 - eta0) l(-z)`, with `0 * inf = 0`.
    pub fn conditional_risk(&self, eta0: f64, z: f64) -> f64 {
        weighted(eta0, self.eval(z)) + weighted(1.0 - eta0, self.eval(-z))
    }

    /// Minimizer of the conditional risk over `[-f_bar, f_bar]`.
    pub fn pointwise_minimizer(&self, eta0: f64) -> Minimizer {
        self.minimize_on(eta0, -self.f_bar, self.f_bar)
    }

    /// Infimum of the conditional risk over scores whose sign disagrees with `eta0 - 1/2`.
    pub fn constrained_minimizer(&self, eta0: f64) -> f64 {
        let (lo, hi) = if eta0 > 0.5 {
            (-self.f_bar, 0.0)
        } else if eta0 < 0.5 {
            (0.0, self.f_bar)
        } else {
            (-self.f_bar, self.f_bar)
        };
        self.minimize_on(eta0, lo, hi).value
    }

    /// Fast evaluation of `l*(eta0)`, using the interior stationary point when
    /// it lies inside `[-f_bar, f_bar]` and the numeric search otherwise.
    pub fn optimal_conditional_risk(&self, eta0: f64) -> f64 {
        let s = 2.0 * eta0 - 1.0;
        match self.kind {
            LossKind::Quadratic | LossKind::TruncatedQuadratic if self.f_bar >= 1.0 => {
                4.0 * eta0 * (1.0 - eta0)
            }
            LossKind::Hinge if self.f_bar >= 1.0 => 1.0 - s.abs(),
            LossKind::ZeroOne => eta0.min(1.0 - eta0),
            LossKind::Exponential if eta0 > 0.0 && eta0 < 1.0 => {
                let z = 0.5 * (eta0 / (1.0 - eta0)).ln();
                if z.abs() <= self.f_bar {
                    2.0 * (eta0 * (1.0 - eta0)).sqrt()
                } else {
                    self.pointwise_minimizer(eta0).value
                }
            }
            _ => self.pointwise_minimizer(eta0).value,
        }
    }

    /// `psi_tilde(zeta) = l*_-((1+zeta)/2) - l*((1+zeta)/2)`, clamped at zero.
    pub fn psi_tilde(&self, zeta: f64) -> f64 {
        let eta0 = 0.5 * (1.0 + zeta);
        (self.constrained_minimizer(eta0) - self.pointwise_minimizer(eta0).value).max(0.0)
    }

    /// The calibration table for this loss, built on first use.
    pub fn calibration(&self) -> Result<&CalibrationTable> {
        self.table
            .get_or_init(|| CalibrationTable::build(self, CALIBRATION_RESOLUTION))
            .as_ref()
            .map_err(Clone::clone)
    }

    /// `psi(x)`: the closed form when it agrees with the envelope, else the envelope.
    pub fn psi(&self, x: f64) -> Result<f64> {
        Ok(self.calibration()?.psi(x))
    }

    /// `(b, beta)` with `beta = min(1, 2/r)` and `b = (2 c d_bar^min(r-2,0))^-beta L^2`.
    pub fn curvature_params(&self) -> CurvatureParams {
        let r = self.convexity_r;
        let beta = (2.0 / r).min(1.0);
        let base = 2.0 * self.convexity_c * self.metric_bound.powf((r - 2.0).min(0.0));
        CurvatureParams {
            b: base.powf(-beta) * self.lipschitz * self.lipschitz,
            beta,
        }
    }

    /// `Psi(eps) = a eps^alpha psi(eps^(1-alpha) / (2a))`.
    pub fn capital_psi(&self, eps: f64, a: f64, alpha: f64) -> Result<f64> {
        check_noise(a, alpha)?;
        if eps <= 0.0 {
            return Ok(0.0);
        }
        Ok(a * eps.powf(alpha) * self.psi(eps.powf(1.0 - alpha) / (2.0 * a))?)
    }

    /// `inf{eps > 0 : gamma <= Psi(eps)}`, capped at 1, by bisection.
    pub fn capital_psi_inverse(&self, gamma: f64, a: f64, alpha: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(invalid("gamma", format!("must be positive, got {gamma}")));
        }
        if gamma > self.capital_psi(1.0, a, alpha)? {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.capital_psi(mid, a, alpha)? >= gamma {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    fn minimize_on(&self, eta0: f64, lo: f64, hi: f64) -> Minimizer {
        if hi <= lo {
            return Minimizer {
                z: lo,
                value: self.conditional_risk(eta0, lo),
            };
        }
        let last = (MINIMIZER_GRID - 1) as f64;
        let zs: Vec<f64> = (0..MINIMIZER_GRID)
            .map(|i| lo + (hi - lo) * (i as f64 / last))
            .collect();
        let values: Vec<f64> = zs.iter().map(|&z| self.conditional_risk(eta0, z)).collect();
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        // Among near-ties prefer the score closest to zero.
        let best = (0..MINIMIZER_GRID)
            .filter(|&i| values[i] <= min + TIE_TOL)
            .min_by(|&i, &j| zs[i].abs().total_cmp(&zs[j].abs()))
            .unwrap_or(0);
        let a = zs[best.saturating_sub(1)];
        let b = zs[(best + 1).min(MINIMIZER_GRID - 1)];
        let (z, v) = golden_section(|z| self.conditional_risk(eta0, z), a, b, MINIMIZER_TOL);
        if v < values[best] - TIE_TOL {
            Minimizer { z, value: v }
        } else {
            Minimizer {
                z: zs[best],
                value: values[best],
            }
        }
    }
}

fn weighted(w: f64, v: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * v
    }
}

fn check_noise(a: f64, alpha: f64) -> Result<()> {
    if !(a >= 1.0) {
        return Err(invalid("a", format!("must be at least 1, got {a}")));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    Ok(())
}

/// `psi_tilde` on a uniform grid of `[0, 1]` with its lower convex envelope.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    kind: LossKind,
    xs: Vec<f64>,
    psi_tilde: Vec<f64>,
    hull: Vec<(f64, f64)>,
    closed_form_gap: f64,
}

impl CalibrationTable {
    pub fn build(loss: &SurrogateLoss, resolution: usize) -> Result<Self> {
        if resolution < 2 {
            return Err(invalid("resolution", "need at least two intervals"));
        }
        let xs: Vec<f64> = (0..=resolution).map(|i| i as f64 / resolution as f64).collect();
        let psi_tilde: Vec<f64> = xs.iter().map(|&x| loss.psi_tilde(x)).collect();
        let hull = lower_hull(&xs, &psi_tilde);
        let mut table = Self {
            kind: loss.kind(),
            xs,
            psi_tilde,
            hull,
            closed_form_gap: 0.0,
        };
        let excess = table
            .xs
            .iter()
            .zip(&table.psi_tilde)
            .map(|(&x, &p)| table.envelope(x) - p)
            .fold(0.0, f64::max);
        if excess > ENVELOPE_TOL {
            return Err(Error::EnvelopeValidation {
                loss: loss.kind().to_string(),
                excess,
            });
        }
        table.closed_form_gap = table
            .xs
            .iter()
            .map(|&x| (table.envelope(x) - loss.kind().closed_form_psi(x)).abs())
            .fold(0.0, f64::max);
        Ok(table)
    }

    pub fn kind(&self) -> LossKind {
        self.kind
    }

    pub fn grid(&self) -> &[f64] {
        &self.xs
    }

    pub fn psi_tilde_values(&self) -> &[f64] {
        &self.psi_tilde
    }

    pub fn hull_vertices(&self) -> &[(f64, f64)] {
        &self.hull
    }

    /// Largest gap between the envelope and the closed form on the grid.
    pub fn closed_form_gap(&self) -> f64 {
        self.closed_form_gap
    }

    pub fn uses_closed_form(&self) -> bool {
        self.closed_form_gap <= CLOSED_FORM_TOL
    }

    /// Linear interpolation of the envelope vertices; `x` is clamped to `[0, 1]`.
    pub fn envelope(&self, x: f64) -> f64 {
        let x = x.abs().clamp(0.0, 1.0);
        let k = self.hull.partition_point(|&(hx, _)| hx < x);
        if k == 0 {
            return self.hull[0].1;
        }
        if k >= self.hull.len() {
            return self.hull[self.hull.len() - 1].1;
        }
        let (x0, y0) = self.hull[k - 1];
        let (x1, y1) = self.hull[k];
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn psi(&self, x: f64) -> f64 {
        if self.uses_closed_form() {
            self.kind.closed_form_psi(x.clamp(-1.0, 1.0))
        } else {
            self.envelope(x)
        }
    }
}

/// Lower convex hull of points sorted by `x` (monotone chain).
fn lower_hull(xs: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(xs.len());
    for (&x, &y) in xs.iter().zip(ys) {
        while hull.len() >= 2 {
            let (ox, oy) = hull[hull.len() - 2];
            let (ax, ay) = hull[hull.len() - 1];
            let cross = (ax - ox) * (y - oy) - (ay - oy) * (x - ox);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push((x, y));
    }
    hull
}
