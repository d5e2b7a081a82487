//! Function classes, version spaces defined by accumulated empirical-risk
//! constraints, ERM and disagreement-region queries.

mod conic;
mod gradient;
pub mod pav;

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::batch::{Label, Labeled, LabeledBatch, Point};
use crate::error::{invalid, Error, Result};
use crate::losses::{LossKind, SurrogateLoss};

use conic::Objective;

/// Slack on every `R(h; Q_i) <= budget_i` check.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Scores below `-DIS_TOL` count as negative in solver-based sign tests.
pub const DIS_TOL: f64 = 1e-7;
const TIE_TOL: f64 = 1e-12;

/// Parameters of a class member: values per atom or cell, or a weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Function(Vec<f64>);

impl Function {
    pub fn new(params: Vec<f64>) -> Self {
        Self(params)
    }

    pub fn params(&self) -> &[f64] {
        &self.0
    }
}

/// An explicit list of functions over the atoms `0..domain_size`.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteClass {
    domain_size: usize,
    members: Vec<Function>,
}

impl FiniteClass {
    pub fn new(domain_size: usize, members: Vec<Vec<f64>>) -> Result<Self> {
        if members.is_empty() {
            return Err(invalid("class.members", "a finite class needs at least one member"));
        }
        if let Some(bad) = members.iter().find(|m| m.len() != domain_size) {
            return Err(invalid(
                "class.members",
                format!("member has {} values, domain has {domain_size} atoms", bad.len()),
            ));
        }
        if members.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid("class.members", "values must be finite"));
        }
        Ok(Self {
            domain_size,
            members: members.into_iter().map(Function).collect(),
        })
    }

    /// Every combination of per-atom values, in lexicographic order with atom 0 outermost.
    pub fn product(values: &[Vec<f64>]) -> Result<Self> {
        if values.iter().any(Vec::is_empty) {
            return Err(invalid("class.atom_values", "every atom needs at least one value"));
        }
        let mut members: Vec<Vec<f64>> = vec![Vec::new()];
        for choices in values {
            members = members
                .into_iter()
                .flat_map(|prefix| {
                    choices.iter().map(move |&v| {
                        let mut m = prefix.clone();
                        m.push(v);
                        m
                    })
                })
                .collect();
        }
        Self::new(values.len(), members)
    }

    /// Sign thresholds `i -> +1 if i >= t else -1` for `t = 0..=domain_size`.
    pub fn thresholds(domain_size: usize) -> Self {
        let members = (0..=domain_size)
            .map(|t| (0..domain_size).map(|i| if i >= t { 1.0 } else { -1.0 }).collect())
            .collect();
        Self::new(domain_size, members).expect("threshold class is well formed")
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn members(&self) -> &[Function] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn position(&self, f: &Function) -> Option<usize> {
        self.members.iter().position(|m| m == f)
    }
}

/// Nondecreasing step functions on `G` equal cells of `[0, 1]` with values in `[-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotoneGrid {
    cells: usize,
}

impl MonotoneGrid {
    pub fn new(cells: usize) -> Result<Self> {
        if cells < 2 {
            return Err(invalid("class.cells", "need at least two cells"));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn cell_of(&self, x: f64) -> usize {
        ((x * self.cells as f64).floor().max(0.0) as usize).min(self.cells - 1)
    }

    pub fn cell_bounds(&self, j: usize) -> (f64, f64) {
        let g = self.cells as f64;
        (j as f64 / g, (j + 1) as f64 / g)
    }
}

/// Linear scores `w . phi(x)` with `|w| <= radius`.
///
/// Real points use the polynomial features `(1, t, ..., t^(d-1))` with
/// `t = 2x - 1`; vector points are used as given.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBall {
    dim: usize,
    radius: f64,
    feature_bound: f64,
}

impl LinearBall {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("class.dimension", "must be positive"));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(invalid("class.radius", "must be positive"));
        }
        Ok(Self {
            dim,
            radius,
            feature_bound: (dim as f64).sqrt(),
        })
    }

    /// Sets the bound on `|phi(x)|` used for `f_bar` (vector inputs).
    pub fn with_feature_bound(mut self, bound: f64) -> Self {
        self.feature_bound = bound;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn features(&self, x: &Point) -> Vec<f64> {
        match x {
            Point::Real(x) => {
                let t = 2.0 * x - 1.0;
                std::iter::successors(Some(1.0), |p| Some(p * t)).take(self.dim).collect()
            }
            Point::Vector(v) => {
                assert_eq!(v.len(), self.dim, "feature dimension mismatch");
                v.clone()
            }
            Point::Atom(_) => panic!("linear_ball cannot evaluate atom points"),
        }
    }
}

/// The function classes supported by the learners.
#[derive(Debug, Clone, PartialEq)]
pub enum FunctionClass {
    Finite(FiniteClass),
    MonotoneGrid(MonotoneGrid),
    LinearBall(LinearBall),
}

impl FunctionClass {
    pub fn kind_name(&self) -> &'static str {
        match self {
            FunctionClass::Finite(_) => "finite",
            FunctionClass::MonotoneGrid(_) => "monotone_grid",
            FunctionClass::LinearBall(_) => "linear_ball",
        }
    }

    /// Uniform bound on `|h(x)|` over the class.
    pub fn f_bar(&self) -> f64 {
        match self {
            FunctionClass::Finite(c) => c
                .members
                .iter()
                .flat_map(|m| m.0.iter())
                .fold(0.0, |a: f64, v| a.max(v.abs())),
            FunctionClass::MonotoneGrid(_) => 1.0,
            FunctionClass::LinearBall(b) => b.radius * b.feature_bound,
        }
    }

    /// Default VC dimension used by the closed-form thresholds.
    pub fn default_vc_dim(&self) -> u32 {
        match self {
            FunctionClass::Finite(c) => (c.len() as f64).log2().ceil().max(1.0) as u32,
            FunctionClass::MonotoneGrid(_) => 1,
            FunctionClass::LinearBall(b) => b.dim as u32 + 1,
        }
    }

    pub fn n_params(&self) -> usize {
        match self {
            FunctionClass::Finite(c) => c.domain_size,
            FunctionClass::MonotoneGrid(g) => g.cells,
            FunctionClass::LinearBall(b) => b.dim,
        }
    }

    /// Evaluates `f(x)`. Panics if the point kind does not fit the class.
    pub fn eval(&self, f: &Function, x: &Point) -> f64 {
        self.margin_coeffs(x, 1.0)
            .iter()
            .map(|&(i, c)| c * f.0[i])
            .sum()
    }

    /// Coefficients `c` with `y f(x) = c . params`.
    fn margin_coeffs(&self, x: &Point, y: f64) -> Vec<(usize, f64)> {
        match (self, x) {
            (FunctionClass::Finite(c), Point::Atom(a)) => {
                assert!(*a < c.domain_size, "atom {a} outside the domain");
                vec![(*a, y)]
            }
            (FunctionClass::MonotoneGrid(g), Point::Real(x)) => vec![(g.cell_of(*x), y)],
            (FunctionClass::LinearBall(b), x) => {
                b.features(x).into_iter().enumerate().map(|(i, v)| (i, y * v)).collect()
            }
            (class, x) => panic!("{} class cannot evaluate {x:?}", class.kind_name()),
        }
    }

    /// Index of the atom or cell holding `x`, for table-valued classes.
    pub fn table_index(&self, x: &Point) -> Option<usize> {
        match (self, x) {
            (FunctionClass::Finite(_), Point::Atom(a)) => Some(*a),
            (FunctionClass::MonotoneGrid(g), Point::Real(x)) => Some(g.cell_of(*x)),
            _ => None,
        }
    }

    /// Mean loss `(1/q) sum l(y f(x))`; zero on an empty sample.
    pub fn empirical_risk<'a>(
        &self,
        loss: &SurrogateLoss,
        f: &Function,
        examples: impl IntoIterator<Item = &'a Labeled>,
    ) -> f64 {
        terms_risk(loss, &self.risk_terms(examples), &f.0)
    }

    /// Groups a sample into weighted margin terms.
    pub(crate) fn risk_terms<'a>(&self, examples: impl IntoIterator<Item = &'a Labeled>) -> Vec<MarginTerm> {
        match self {
            FunctionClass::Finite(_) | FunctionClass::MonotoneGrid(_) => {
                let mut counts: BTreeMap<(usize, bool), usize> = BTreeMap::new();
                let mut q = 0usize;
                for ex in examples {
                    let idx = self.table_index(&ex.x).unwrap_or_else(|| {
                        panic!("{} class cannot evaluate {:?}", self.kind_name(), ex.x)
                    });
                    *counts.entry((idx, ex.y == Label::Positive)).or_default() += 1;
                    q += 1;
                }
                counts
                    .into_iter()
                    .map(|((idx, pos), n)| MarginTerm {
                        coeffs: vec![(idx, if pos { 1.0 } else { -1.0 })],
                        weight: n as f64 / q as f64,
                    })
                    .collect()
            }
            FunctionClass::LinearBall(_) => {
                let mut terms: Vec<MarginTerm> = examples
                    .into_iter()
                    .map(|ex| MarginTerm {
                        coeffs: self.margin_coeffs(&ex.x, ex.y.value()),
                        weight: 1.0,
                    })
                    .collect();
                let q = terms.len() as f64;
                terms.iter_mut().for_each(|t| t.weight /= q);
                terms
            }
        }
    }

    fn clean_params(&self, mut x: Vec<f64>) -> Vec<f64> {
        match self {
            FunctionClass::MonotoneGrid(_) => {
                let mut run = -1.0f64;
                for v in &mut x {
                    run = run.max(v.clamp(-1.0, 1.0));
                    *v = run;
                }
            }
            FunctionClass::LinearBall(b) => {
                let n = gradient::norm(&x);
                if n > b.radius {
                    x.iter_mut().for_each(|v| *v *= b.radius / n);
                }
            }
            FunctionClass::Finite(_) => {}
        }
        x
    }
}

/// A weighted loss term `weight * l(coeffs . params)`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct MarginTerm {
    pub coeffs: Vec<(usize, f64)>,
    pub weight: f64,
}

impl MarginTerm {
    fn margin(&self, params: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(i, c)| c * params[i]).sum()
    }
}

pub(crate) fn terms_risk(loss: &SurrogateLoss, terms: &[MarginTerm], params: &[f64]) -> f64 {
    terms.iter().map(|t| t.weight * loss.eval(t.margin(params))).sum()
}

/// `R(h; batch) <= budget`, frozen at creation.
#[derive(Debug, Clone)]
pub struct RiskConstraint {
    batch: Arc<LabeledBatch>,
    budget: f64,
    terms: Arc<Vec<MarginTerm>>,
}

impl RiskConstraint {
    pub fn batch(&self) -> &LabeledBatch {
        &self.batch
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub(crate) fn terms(&self) -> &[MarginTerm] {
        &self.terms
    }

    fn admits(&self, loss: &SurrogateLoss, params: &[f64]) -> bool {
        terms_risk(loss, &self.terms, params) <= self.budget + FEASIBILITY_TOL
    }
}

/// The class intersected with every recorded risk constraint.
#[derive(Debug, Clone)]
pub struct VersionSpace {
    class: Arc<FunctionClass>,
    constraints: Vec<RiskConstraint>,
}

impl VersionSpace {
    pub fn new(class: Arc<FunctionClass>) -> Self {
        Self {
            class,
            constraints: Vec::new(),
        }
    }

    pub fn class(&self) -> &Arc<FunctionClass> {
        &self.class
    }

    pub fn constraints(&self) -> &[RiskConstraint] {
        &self.constraints
    }

    /// A new version space with one more constraint.
    pub fn with_constraint(&self, batch: LabeledBatch, budget: f64) -> Self {
        let terms = Arc::new(self.class.risk_terms(batch.examples()));
        let mut constraints = self.constraints.clone();
        constraints.push(RiskConstraint {
            batch: Arc::new(batch),
            budget,
            terms,
        });
        Self {
            class: Arc::clone(&self.class),
            constraints,
        }
    }

    /// Whether `f` satisfies every constraint (within the feasibility tolerance).
    pub fn contains(&self, loss: &SurrogateLoss, f: &Function) -> bool {
        self.constraints.iter().all(|c| c.admits(loss, &f.0))
    }

    fn finite(&self) -> Option<&FiniteClass> {
        match &*self.class {
            FunctionClass::Finite(c) => Some(c),
            _ => None,
        }
    }

    fn feasible_members<'a>(&'a self, finite: &'a FiniteClass, loss: &'a SurrogateLoss) -> impl Iterator<Item = &'a Function> + 'a {
        finite.members.iter().filter(move |f| self.contains(loss, f))
    }
}

/// Empirical risk minimizer over the whole class.
pub fn erm(class: &FunctionClass, loss: &SurrogateLoss, samples: &[Labeled]) -> Result<Function> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    let terms = class.risk_terms(samples);
    match class {
        FunctionClass::Finite(c) => Ok(argmin_members(c.members.iter(), loss, &terms)
            .expect("finite classes are nonempty")
            .0
            .clone()),
        FunctionClass::MonotoneGrid(g) => match loss.kind() {
            LossKind::Quadratic => Ok(monotone_pav_fit(g, &terms)),
            LossKind::ZeroOne => Err(Error::Unsupported {
                op: "erm",
                kind: "monotone_grid with the zero_one loss".into(),
            }),
            _ => Ok(Function(gradient::minimize(loss, &terms, g.cells, |v| {
                pav::project_monotone_box(v, -1.0, 1.0)
            }))),
        },
        FunctionClass::LinearBall(b) => {
            if loss.kind() == LossKind::ZeroOne {
                return Err(Error::Unsupported {
                    op: "erm",
                    kind: "linear_ball with the zero_one loss".into(),
                });
            }
            let params = gradient::minimize(loss, &terms, b.dim, |v| class.clean_params(v.to_vec()));
            Ok(Function(params))
        }
    }
}

/// Weighted PAV on cell means, clamped; empty cells copy their left neighbour
/// (leading empty cells copy the first fitted value).
fn monotone_pav_fit(grid: &MonotoneGrid, terms: &[MarginTerm]) -> Function {
    let mut weight = vec![0.0; grid.cells];
    let mut signed = vec![0.0; grid.cells];
    for t in terms {
        let (j, s) = t.coeffs[0];
        weight[j] += t.weight;
        signed[j] += s * t.weight;
    }
    let occupied: Vec<usize> = (0..grid.cells).filter(|&j| weight[j] > 0.0).collect();
    let means: Vec<f64> = occupied.iter().map(|&j| signed[j] / weight[j]).collect();
    let ws: Vec<f64> = occupied.iter().map(|&j| weight[j]).collect();
    let fit = pav::isotonic_regression(&means, &ws);
    let mut values = vec![0.0; grid.cells];
    let mut k = 0;
    for (j, v) in values.iter_mut().enumerate() {
        while k + 1 < occupied.len() && occupied[k + 1] <= j {
            k += 1;
        }
        *v = fit[k].clamp(-1.0, 1.0);
    }
    Function(values)
}

fn argmin_members<'a>(
    members: impl Iterator<Item = &'a Function>,
    loss: &SurrogateLoss,
    terms: &[MarginTerm],
) -> Option<(&'a Function, f64)> {
    let mut best: Option<(&Function, f64)> = None;
    for f in members {
        let v = terms_risk(loss, terms, &f.0);
        if best.map_or(true, |(_, b)| v < b - TIE_TOL) {
            best = Some((f, v));
        }
    }
    best
}

/// Minimum of `R(.; objective)` over the version space, with a minimizer.
pub fn constrained_min_risk(
    vspace: &VersionSpace,
    loss: &SurrogateLoss,
    objective: &LabeledBatch,
) -> Result<(f64, Function)> {
    let terms = vspace.class.risk_terms(objective.examples());
    if let Some(finite) = vspace.finite() {
        let (f, v) = argmin_members(vspace.feasible_members(finite, loss), loss, &terms)
            .ok_or(Error::Infeasible)?;
        return Ok((v, f.clone()));
    }
    let goal = if terms.is_empty() {
        Objective::Zero
    } else {
        Objective::Risk(&terms)
    };
    let params = conic::solve(&vspace.class, loss, &vspace.constraints, goal)?;
    Ok((terms_risk(loss, &terms, &params), Function(params)))
}

/// Whether two members of the version space disagree in sign at `x`.
pub fn dis_contains(vspace: &VersionSpace, loss: &SurrogateLoss, x: &Point) -> Result<bool> {
    if let Some(finite) = vspace.finite() {
        let (mut pos, mut neg) = (false, false);
        for f in vspace.feasible_members(finite, loss) {
            if vspace.class.eval(f, x) >= 0.0 {
                pos = true;
            } else {
                neg = true;
            }
            if pos && neg {
                return Ok(true);
            }
        }
        if !(pos || neg) {
            return Err(Error::Infeasible);
        }
        return Ok(false);
    }
    let (lo, hi) = score_range(vspace, loss, x)?;
    Ok(hi >= -DIS_TOL && lo < -DIS_TOL)
}

/// `(min, max)` of `h(x)` over a continuous version space.
fn score_range(vspace: &VersionSpace, loss: &SurrogateLoss, x: &Point) -> Result<(f64, f64)> {
    let coeffs = vspace.class.margin_coeffs(x, 1.0);
    if vspace.constraints.is_empty() {
        let bound = match &*vspace.class {
            FunctionClass::MonotoneGrid(_) => 1.0,
            FunctionClass::LinearBall(b) => b.radius * gradient::norm(&b.features(x)),
            FunctionClass::Finite(_) => unreachable!("finite classes are enumerated"),
        };
        return Ok((-bound, bound));
    }
    let score = |p: &[f64]| coeffs.iter().map(|&(i, c)| c * p[i]).sum::<f64>();
    let lo = conic::solve(&vspace.class, loss, &vspace.constraints, Objective::Linear(coeffs.clone()))?;
    let neg: Vec<(usize, f64)> = coeffs.iter().map(|&(i, c)| (i, -c)).collect();
    let hi = conic::solve(&vspace.class, loss, &vspace.constraints, Objective::Linear(neg))?;
    Ok((score(&lo), score(&hi)))
}

/// Feasible members of a finite version space.
pub fn version_space_members(vspace: &VersionSpace, loss: &SurrogateLoss) -> Result<Vec<Function>> {
    let finite = vspace.finite().ok_or_else(|| Error::Unsupported {
        op: "version_space_members",
        kind: vspace.class.kind_name().into(),
    })?;
    let members: Vec<Function> = vspace.feasible_members(finite, loss).cloned().collect();
    if members.is_empty() {
        return Err(Error::Infeasible);
    }
    Ok(members)
}

/// A precomputed region of disagreement.
#[derive(Debug, Clone)]
pub struct DisRegion {
    class: Arc<FunctionClass>,
    inner: RegionInner,
}

#[derive(Debug, Clone)]
enum RegionInner {
    /// Membership per atom or cell.
    Mask(Vec<bool>),
    /// Two solves per query.
    PerPoint(Box<(VersionSpace, SurrogateLoss)>),
}

impl DisRegion {
    /// Computes `DIS(V)`, as a mask for finite and monotone classes.
    pub fn compute(vspace: &VersionSpace, loss: &SurrogateLoss) -> Result<Self> {
        let class = Arc::clone(&vspace.class);
        let inner = match &*vspace.class {
            FunctionClass::Finite(finite) => {
                let mut pos = vec![false; finite.domain_size];
                let mut neg = vec![false; finite.domain_size];
                let mut any = false;
                for f in vspace.feasible_members(finite, loss) {
                    any = true;
                    for (a, &v) in f.0.iter().enumerate() {
                        if v >= 0.0 {
                            pos[a] = true;
                        } else {
                            neg[a] = true;
                        }
                    }
                }
                if !any {
                    return Err(Error::Infeasible);
                }
                RegionInner::Mask(pos.iter().zip(&neg).map(|(p, n)| *p && *n).collect())
            }
            FunctionClass::MonotoneGrid(grid) => RegionInner::Mask(monotone_mask(vspace, loss, grid)?),
            FunctionClass::LinearBall(_) => RegionInner::PerPoint(Box::new((vspace.clone(), loss.clone()))),
        };
        Ok(Self { class, inner })
    }

    pub fn contains(&self, x: &Point) -> Result<bool> {
        match &self.inner {
            RegionInner::Mask(mask) => {
                let idx = self
                    .class
                    .table_index(x)
                    .unwrap_or_else(|| panic!("{} class cannot locate {x:?}", self.class.kind_name()));
                Ok(mask[idx])
            }
            RegionInner::PerPoint(state) => dis_contains(&state.0, &state.1, x),
        }
    }

    /// Restricts to `previous`, removing solver noise for nested version spaces.
    pub fn intersect(mut self, previous: &DisRegion) -> Self {
        if let (RegionInner::Mask(a), RegionInner::Mask(b)) = (&mut self.inner, &previous.inner) {
            a.iter_mut().zip(b).for_each(|(x, &y)| *x = *x && y);
        }
        self
    }

    pub fn mask(&self) -> Option<&[bool]> {
        match &self.inner {
            RegionInner::Mask(m) => Some(m),
            RegionInner::PerPoint(_) => None,
        }
    }

    /// Fraction of `points` inside the region.
    pub fn mass_on(&self, points: &[Point]) -> Result<f64> {
        if points.is_empty() {
            return Ok(0.0);
        }
        let mut inside = 0usize;
        for x in points {
            if self.contains(x)? {
                inside += 1;
            }
        }
        Ok(inside as f64 / points.len() as f64)
    }
}

/// DIS of a monotone version space is a run of cells: those whose largest
/// score is nonnegative and whose smallest score is negative. Both
/// predicates are monotone in the cell index, so binary search suffices.
fn monotone_mask(vspace: &VersionSpace, loss: &SurrogateLoss, grid: &MonotoneGrid) -> Result<Vec<bool>> {
    let g = grid.cells;
    if vspace.constraints.is_empty() {
        return Ok(vec![true; g]);
    }
    let extreme = |j: usize, sign: f64| -> Result<f64> {
        let p = conic::solve(&vspace.class, loss, &vspace.constraints, Objective::Linear(vec![(j, sign)]))?;
        Ok(p[j])
    };
    // First cell whose max score is >= -tol.
    let (mut lo, mut hi) = (0usize, g);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if extreme(mid, -1.0)? >= -DIS_TOL {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    let first = lo;
    // One past the last cell whose min score is < -tol.
    let (mut lo, mut hi) = (0usize, g);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if extreme(mid, 1.0)? < -DIS_TOL {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let end = lo;
    Ok((0..g).map(|j| j >= first && j < end).collect())
}
