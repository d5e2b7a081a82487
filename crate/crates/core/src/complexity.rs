//! Data-dependent complexity estimates and the update thresholds used by
//! Algorithm 1.

use serde::{Deserialize, Serialize};

use crate::batch::LabeledBatch;
use crate::classes::{version_space_members, Function, FunctionClass, VersionSpace};
use crate::error::{invalid, Error, Result};
use crate::log_floor;
use crate::losses::SurrogateLoss;

/// Which threshold Algorithm 1 uses when it appends a constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdVariant {
    Rademacher,
    RecursiveVc,
    StrongConvexity,
}

impl ThresholdVariant {
    pub fn name(self) -> &'static str {
        match self {
            ThresholdVariant::Rademacher => "rademacher",
            ThresholdVariant::RecursiveVc => "recursive_vc",
            ThresholdVariant::StrongConvexity => "strong_convexity",
        }
    }
}

impl std::str::FromStr for ThresholdVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [Self::Rademacher, Self::RecursiveVc, Self::StrongConvexity]
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| invalid("threshold.variant", format!("unknown variant `{s}`")))
    }
}

/// Constants of the threshold formulas.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdParams {
    pub variant: ThresholdVariant,
    pub c0: f64,
    pub vc_dim: u32,
    pub b: f64,
    pub beta: f64,
    /// Multiplies the 12/34/752 constants and `c0`.
    pub constant_scale: f64,
    pub delta: f64,
}

impl ThresholdParams {
    /// Parameters with `(b, beta)` taken from the loss, `c0 = 1` and scale 1.
    pub fn new(variant: ThresholdVariant, loss: &SurrogateLoss, vc_dim: u32, delta: f64) -> Result<Self> {
        let curv = loss.curvature_params();
        let params = Self {
            variant,
            c0: 1.0,
            vc_dim: vc_dim.max(1),
            b: curv.b,
            beta: curv.beta,
            constant_scale: 1.0,
            delta,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn with_c0(mut self, c0: f64) -> Result<Self> {
        self.c0 = c0;
        self.validate()?;
        Ok(self)
    }

    pub fn with_scale(mut self, scale: f64) -> Result<Self> {
        self.constant_scale = scale;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 0.25) {
            return Err(invalid("threshold.delta", format!("must lie in (0, 1/4), got {}", self.delta)));
        }
        if !(self.constant_scale >= 0.0 && self.constant_scale.is_finite()) {
            return Err(invalid("threshold.scale", format!("must be nonnegative, got {}", self.constant_scale)));
        }
        if self.constant_scale == 0.0 {
            log::warn!("threshold.scale = 0 makes every threshold vanish");
        }
        if !(self.c0 > 0.0 && self.c0.is_finite()) {
            return Err(invalid("threshold.c0", format!("must be positive, got {}", self.c0)));
        }
        if !(self.b > 0.0) || !(0.0..=1.0).contains(&self.beta) {
            return Err(invalid("threshold.b", "need b > 0 and beta in [0, 1]"));
        }
        Ok(())
    }

    fn c(&self) -> f64 {
        self.c0 * self.constant_scale
    }
}

/// Losses `l(h(x_k) y_k)` for every member (rows) and sample (columns).
fn loss_matrix(class: &FunctionClass, members: &[Function], batch: &LabeledBatch, loss: &SurrogateLoss) -> Vec<Vec<f64>> {
    members
        .iter()
        .map(|h| {
            batch
                .examples()
                .map(|ex| loss.eval(ex.y.value() * class.eval(h, &ex.x)))
                .collect()
        })
        .collect()
}

/// `phi_hat = max_h A(h) - min_g A(g)` with `A(h) = (1/q) sum_k xi_k l(h(x_k) y_k)`.
pub fn phi_hat(class: &FunctionClass, members: &[Function], batch: &LabeledBatch, loss: &SurrogateLoss) -> f64 {
    if batch.is_empty() || members.is_empty() {
        return 0.0;
    }
    let q = batch.len() as f64;
    let xi: Vec<f64> = batch.entries().iter().map(|e| e.xi.value()).collect();
    let a: Vec<f64> = loss_matrix(class, members, batch, loss)
        .iter()
        .map(|row| row.iter().zip(&xi).map(|(l, x)| l * x).sum::<f64>() / q)
        .collect();
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}

/// `sqrt(sup_{h,g} (1/q) sum_k (l(h) - l(g))^2)`.
pub fn d_hat(class: &FunctionClass, members: &[Function], batch: &LabeledBatch, loss: &SurrogateLoss) -> f64 {
    if batch.is_empty() || members.is_empty() {
        return 0.0;
    }
    let q = batch.len() as f64;
    let rows = loss_matrix(class, members, batch, loss);
    let mut best = 0.0f64;
    for (i, a) in rows.iter().enumerate() {
        for b in &rows[i + 1..] {
            let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            best = best.max(s / q);
        }
    }
    best.sqrt()
}

/// `scale (12 phi_hat + 34 D_hat sqrt(s/q) + 752 l_bar s / q)`; `scale 752 l_bar s` on an empty batch.
pub fn u_hat(
    class: &FunctionClass,
    members: &[Function],
    batch: &LabeledBatch,
    loss: &SurrogateLoss,
    s: f64,
    scale: f64,
) -> Result<f64> {
    if !(s >= 1.0) {
        return Err(invalid("s", format!("must be at least 1, got {s}")));
    }
    let l_bar = loss.loss_bound();
    if batch.is_empty() {
        return Ok(scale * 752.0 * l_bar * s);
    }
    let q = batch.len() as f64;
    let phi = phi_hat(class, members, batch, loss);
    let d = d_hat(class, members, batch, loss);
    Ok(scale * (12.0 * phi + 34.0 * d * (s / q).sqrt() + 752.0 * l_bar * s / q))
}

/// `s_hat(m) = Log(12 log2(2m)^2 / delta)`.
pub fn s_hat_default(m: u64, delta: f64) -> f64 {
    let l = (2.0 * m as f64).log2();
    log_floor(12.0 * l * l / delta)
}

/// Threshold from `U_hat` over the current feasible members (finite classes).
pub fn t_hat_rademacher(
    vspace: &VersionSpace,
    batch: &LabeledBatch,
    m: u64,
    loss: &SurrogateLoss,
    params: &ThresholdParams,
) -> Result<f64> {
    let members = version_space_members(vspace, loss)?;
    u_hat(
        vspace.class(),
        &members,
        batch,
        loss,
        s_hat_default(m, params.delta),
        params.constant_scale,
    )
}

/// What the recursive threshold remembers from the previous update.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RecursionState {
    last: Option<RecursionStep>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct RecursionStep {
    m: u64,
    q: usize,
    /// `T_hat` capped at `l_bar`.
    t_capped: f64,
}

impl RecursionState {
    pub fn new() -> Self {
        Self::default()
    }

    /// `gamma_hat` for the update at `m`.
    pub fn gamma(&self, m: u64, l_bar: f64) -> Result<f64> {
        match self.last {
            None if m == 2 => Ok(l_bar),
            None => Err(Error::InvalidState(format!("first update must be at m = 2, got {m}"))),
            Some(step) if step.m.checked_mul(2) == Some(m) => {
                Ok(8.0 * step.q.max(1) as f64 / m as f64 * step.t_capped)
            }
            Some(step) => Err(Error::InvalidState(format!(
                "update at m = {m} does not follow m = {}",
                step.m
            ))),
        }
    }
}

/// Recursive VC-type threshold; returns the value and the next state.
pub fn t_hat_recursive_vc(
    state: &RecursionState,
    q_m: usize,
    m: u64,
    loss: &SurrogateLoss,
    params: &ThresholdParams,
) -> Result<(f64, RecursionState)> {
    if m < 2 || !m.is_power_of_two() {
        return Err(Error::InvalidState(format!("m = {m} is not a power of two >= 2")));
    }
    let l_bar = loss.loss_bound();
    let gamma = state.gamma(m, l_bar)?;
    debug_assert!(gamma <= 4.0 * l_bar + 1e-12, "gamma_hat {gamma} exceeds 4 l_bar");
    let s = s_hat_default(m, params.delta);
    let mf = m as f64;
    let vc = params.vc_dim as f64;
    let g = gamma.powf(params.beta);
    let log_term = log_floor(l_bar * (q_m as f64 + s) / (mf * params.b * g));
    let inner = vc * log_term + s;
    let t = params.c() * (mf / 2.0) / q_m.max(1) as f64
        * ((g * (params.b / mf) * inner).sqrt() + (l_bar / mf) * inner);
    let next = RecursionState {
        last: Some(RecursionStep {
            m,
            q: q_m,
            t_capped: t.min(l_bar),
        }),
    };
    Ok((t, next))
}

/// Closed-form threshold under strong convexity, capped at `l_bar`.
pub fn t_hat_strong_convexity(q: usize, m: u64, loss: &SurrogateLoss, params: &ThresholdParams) -> Result<f64> {
    if m < 2 {
        return Err(invalid("m", format!("must be at least 2, got {m}")));
    }
    let l_bar = loss.loss_bound();
    let s = s_hat_default(m, params.delta);
    let (b, beta) = (params.b, params.beta);
    let vc = params.vc_dim as f64;
    let qf = q as f64;
    let q1 = q.max(1) as f64;
    let first_log = log_floor(l_bar * l_bar / b * (qf / (b * vc)).powf(beta / (2.0 - beta)));
    let first = (b / q1 * (vc * first_log + s)).powf(1.0 / (2.0 - beta));
    let second_log = log_floor(l_bar * l_bar / b * (qf / (l_bar * vc)).powf(beta));
    let second = l_bar / q1 * (vc * second_log + s);
    Ok(l_bar.min(params.c() * first.max(second)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::batch::{Label, Labeled, Point};
    use crate::classes::FiniteClass;
    use crate::losses::LossKind;

    /// Two functions on two atoms whose zero-one losses are (1,0) and (0,1).
    fn two_function_instance() -> (FunctionClass, Vec<Function>, LabeledBatch, SurrogateLoss) {
        let finite = FiniteClass::new(2, vec![vec![-1.0, 1.0], vec![1.0, -1.0]]).unwrap();
        let members = finite.members().to_vec();
        let batch = LabeledBatch::from_examples(
            vec![
                Labeled::new(Point::Atom(0), Label::Positive),
                Labeled::new(Point::Atom(1), Label::Positive),
            ],
            &[Label::Positive, Label::Negative],
        );
        let loss = SurrogateLoss::new(LossKind::ZeroOne, 1.0).unwrap();
        (FunctionClass::Finite(finite), members, batch, loss)
    }

    #[test]
    fn phi_and_d_on_two_functions() {
        let (class, members, batch, loss) = two_function_instance();
        assert_eq!(phi_hat(&class, &members, &batch, &loss), 1.0);
        assert_eq!(d_hat(&class, &members, &batch, &loss), 1.0);
        assert_eq!(phi_hat(&class, &members[..1], &batch, &loss), 0.0);
        assert_eq!(d_hat(&class, &members[..1], &batch, &loss), 0.0);
        assert_eq!(phi_hat(&class, &members, &LabeledBatch::new(), &loss), 0.0);
        assert_eq!(d_hat(&class, &members, &LabeledBatch::new(), &loss), 0.0);
    }

    #[test]
    fn u_hat_examples() {
        let (class, members, batch, loss) = two_function_instance();
        assert_eq!(u_hat(&class, &members, &LabeledBatch::new(), &loss, 1.0, 1.0).unwrap(), 752.0);
        let expect = 12.0 + 34.0 / 2f64.sqrt() + 376.0;
        let got = u_hat(&class, &members, &batch, &loss, 1.0, 1.0).unwrap();
        assert!((got - expect).abs() < 1e-12);
        assert!((got - 412.042).abs() < 1e-3);
        let four = LabeledBatch::from_examples(
            vec![Labeled::new(Point::Atom(0), Label::Positive); 4],
            &[Label::Positive; 4],
        );
        assert_eq!(u_hat(&class, &members[..1], &four, &loss, 1.0, 1.0).unwrap(), 188.0);
    }

    #[test]
    fn s_hat_examples() {
        assert!((s_hat_default(2, 0.5) - 96f64.ln()).abs() < 1e-12);
        assert!((s_hat_default(8, 0.1) - 1920f64.ln()).abs() < 1e-12);
        assert!((s_hat_default(8, 0.1) - 7.5601).abs() < 1e-4);
        assert_eq!(s_hat_default(1, 1e9), 1.0);
    }

    fn quad_params(variant: ThresholdVariant, delta: f64) -> (SurrogateLoss, ThresholdParams) {
        let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
        let params = ThresholdParams::new(variant, &loss, 1, delta).unwrap();
        (loss, params)
    }

    #[test]
    fn recursive_base_case_uses_l_bar() {
        let (loss, params) = quad_params(ThresholdVariant::RecursiveVc, 0.1);
        let (t, state) = t_hat_recursive_vc(&RecursionState::new(), 1, 2, &loss, &params).unwrap();
        // Independent substitution with gamma = l_bar = 4, b = 32, beta = 1.
        let s = (12.0 * 4.0f64 / 0.1).ln();
        let lg = (4.0 * (1.0 + s) / (2.0 * 32.0 * 4.0)).ln().max(1.0);
        let inner = lg + s;
        let expect = 1.0 * ((4.0 * 16.0 * inner).sqrt() + 2.0 * inner);
        assert!((t - expect).abs() < 1e-12, "{t} vs {expect}");
        assert!(state.gamma(4, 4.0).unwrap() <= 16.0);
    }

    #[test]
    fn recursive_substitution_at_m8() {
        let (loss, params) = quad_params(ThresholdVariant::RecursiveVc, 0.1);
        let (_, s2) = t_hat_recursive_vc(&RecursionState::new(), 1, 2, &loss, &params).unwrap();
        let (t4, s4) = t_hat_recursive_vc(&s2, 2, 4, &loss, &params).unwrap();
        let (t8, _) = t_hat_recursive_vc(&s4, 3, 8, &loss, &params).unwrap();
        let gamma = 8.0 * 2.0 / 8.0 * t4.min(4.0);
        let s = (12.0 * 16.0f64 / 0.1).ln();
        let lg = (4.0 * (3.0 + s) / (8.0 * 32.0 * gamma)).ln().max(1.0);
        let inner = lg + s;
        let expect = 4.0 / 3.0 * ((gamma * 4.0 * inner).sqrt() + 0.5 * inner);
        assert!((t8 - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn recursive_rejects_out_of_order_updates() {
        let (loss, params) = quad_params(ThresholdVariant::RecursiveVc, 0.1);
        assert!(matches!(
            t_hat_recursive_vc(&RecursionState::new(), 1, 4, &loss, &params),
            Err(Error::InvalidState(_))
        ));
        let (_, s2) = t_hat_recursive_vc(&RecursionState::new(), 1, 2, &loss, &params).unwrap();
        assert!(t_hat_recursive_vc(&s2, 1, 8, &loss, &params).is_err());
        let (t, _) = t_hat_recursive_vc(&s2, 0, 4, &loss, &params).unwrap();
        assert!(t.is_finite());
    }

    #[test]
    fn strong_convexity_examples() {
        let (loss, params) = quad_params(ThresholdVariant::StrongConvexity, 0.05);
        assert_eq!(t_hat_strong_convexity(0, 2, &loss, &params).unwrap(), 4.0);
        let t = t_hat_strong_convexity(1_000_000, 1 << 20, &loss, &params).unwrap();
        let s = (12.0 * 21.0f64 * 21.0 / 0.05).ln();
        let first = 32.0 / 1e6 * ((16.0_f64 / 32.0 * (1e6 / 32.0)).ln() + s);
        let second = 4.0 / 1e6 * ((16.0_f64 / 32.0 * (1e6 / 4.0)).ln() + s);
        assert!((t - first.max(second)).abs() < 1e-15);
        assert!(t < 4.0);
    }

    #[test]
    fn strong_convexity_hinge_branch() {
        let loss = SurrogateLoss::new(LossKind::Hinge, 1.0).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::StrongConvexity, &loss, 2, 0.1).unwrap();
        let t = t_hat_strong_convexity(5000, 8192, &loss, &params).unwrap();
        let s = s_hat_default(8192, 0.1);
        // Hinge at f_bar = 1: l_bar = 2, b = 1, beta = 0.
        let log = 4.0f64.ln();
        let first = (1.0 / 5000.0 * (2.0 * log + s)).sqrt();
        let second = 2.0 / 5000.0 * (2.0 * log + s);
        assert!((t - first.max(second)).abs() < 1e-15);
    }

    #[test]
    fn zero_scale_zeroes_rademacher() {
        let (class, _, _, loss) = two_function_instance();
        let params = ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.1)
            .unwrap()
            .with_scale(0.0)
            .unwrap();
        let vs = VersionSpace::new(std::sync::Arc::new(class));
        assert_eq!(t_hat_rademacher(&vs, &LabeledBatch::new(), 4, &loss, &params).unwrap(), 0.0);
    }

    #[test]
    fn rademacher_singleton_empty_batch() {
        let finite = FiniteClass::new(1, vec![vec![0.5]]).unwrap();
        let loss = SurrogateLoss::new(LossKind::Quadratic, 0.5).unwrap();
        let params = ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.1)
            .unwrap()
            .with_scale(0.02)
            .unwrap();
        let vs = VersionSpace::new(std::sync::Arc::new(FunctionClass::Finite(finite)));
        let t = t_hat_rademacher(&vs, &LabeledBatch::new(), 16, &loss, &params).unwrap();
        let expect = 752.0 * loss.loss_bound() * s_hat_default(16, 0.1) * 0.02;
        assert!((t - expect).abs() < 1e-12);
    }

    #[test]
    fn delta_range_enforced() {
        let loss = SurrogateLoss::new(LossKind::Quadratic, 1.0).unwrap();
        assert!(ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.25).is_err());
        assert!(ThresholdParams::new(ThresholdVariant::Rademacher, &loss, 1, 0.0).is_err());
    }
}
