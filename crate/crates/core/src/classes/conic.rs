//! Conic formulations of constrained risk problems, solved with Clarabel.
//!
//! Every risk is a weighted sum of `l(c . theta)` over margin terms, so one
//! builder covers the monotone grid and the linear ball alike.

use std::collections::BTreeMap;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::losses::{LossKind, SurrogateLoss};

use super::{terms_risk, FunctionClass, MarginTerm, RiskConstraint, FEASIBILITY_TOL};

/// What to minimize over the version space.
pub(crate) enum Objective<'a> {
    Zero,
    Risk(&'a [MarginTerm]),
    Linear(Vec<(usize, f64)>),
}

/// `constant + coeffs . x`.
#[derive(Clone, Default)]
struct Affine {
    coeffs: Vec<(usize, f64)>,
    constant: f64,
}

impl Affine {
    fn constant(c: f64) -> Self {
        Self {
            coeffs: Vec::new(),
            constant: c,
        }
    }

    fn var(i: usize, scale: f64) -> Self {
        Self {
            coeffs: vec![(i, scale)],
            constant: 0.0,
        }
    }

    /// `scale * (constant - c . x)`.
    fn one_minus_margin(coeffs: &[(usize, f64)], scale: f64) -> Self {
        Self {
            coeffs: coeffs.iter().map(|&(i, c)| (i, -scale * c)).collect(),
            constant: scale,
        }
    }
}

#[derive(Default)]
struct Builder {
    q: Vec<f64>,
    p: BTreeMap<(usize, usize), f64>,
    nonneg: Vec<Affine>,
    socs: Vec<Vec<Affine>>,
    exps: Vec<[Affine; 3]>,
}

impl Builder {
    fn new(n: usize) -> Self {
        Self {
            q: vec![0.0; n],
            ..Self::default()
        }
    }

    fn add_var(&mut self) -> usize {
        self.q.push(0.0);
        self.q.len() - 1
    }

    fn add_p(&mut self, i: usize, j: usize, v: f64) {
        let key = if i <= j { (i, j) } else { (j, i) };
        *self.p.entry(key).or_insert(0.0) += v;
    }

    /// Adds auxiliary variables `u_k >= max(1 - c_k . x, 0)`.
    fn hinge_epigraph(&mut self, terms: &[MarginTerm]) -> Vec<usize> {
        terms
            .iter()
            .map(|t| {
                let u = self.add_var();
                let mut coeffs = t.coeffs.clone();
                coeffs.push((u, 1.0));
                self.nonneg.push(Affine {
                    coeffs,
                    constant: -1.0,
                });
                self.nonneg.push(Affine::var(u, 1.0));
                u
            })
            .collect()
    }

    /// Adds auxiliary variables `t_k >= exp(-c_k . x)`.
    fn exp_epigraph(&mut self, terms: &[MarginTerm]) -> Vec<usize> {
        terms
            .iter()
            .map(|term| {
                let t = self.add_var();
                let arg = Affine {
                    coeffs: term.coeffs.iter().map(|&(i, c)| (i, -c)).collect(),
                    constant: 0.0,
                };
                self.exps.push([arg, Affine::constant(1.0), Affine::var(t, 1.0)]);
                t
            })
            .collect()
    }

    fn risk_constraint(&mut self, loss: &SurrogateLoss, terms: &[MarginTerm], budget: f64) -> Result<()> {
        if budget < 0.0 {
            return Err(Error::Infeasible);
        }
        if terms.is_empty() {
            return Ok(());
        }
        match loss.kind() {
            LossKind::Quadratic => {
                let mut cone = vec![Affine::constant(budget.sqrt())];
                cone.extend(
                    terms
                        .iter()
                        .map(|t| Affine::one_minus_margin(&t.coeffs, t.weight.sqrt())),
                );
                self.socs.push(cone);
            }
            LossKind::TruncatedQuadratic => {
                let us = self.hinge_epigraph(terms);
                let mut cone = vec![Affine::constant(budget.sqrt())];
                cone.extend(us.iter().zip(terms).map(|(&u, t)| Affine::var(u, t.weight.sqrt())));
                self.socs.push(cone);
            }
            LossKind::Hinge | LossKind::Exponential => {
                let ts = if loss.kind() == LossKind::Hinge {
                    self.hinge_epigraph(terms)
                } else {
                    self.exp_epigraph(terms)
                };
                self.nonneg.push(Affine {
                    coeffs: ts.iter().zip(terms).map(|(&t, term)| (t, -term.weight)).collect(),
                    constant: budget,
                });
            }
            LossKind::ZeroOne => return Err(non_convex()),
        }
        Ok(())
    }

    fn risk_objective(&mut self, loss: &SurrogateLoss, terms: &[MarginTerm]) -> Result<()> {
        match loss.kind() {
            LossKind::Quadratic => {
                for t in terms {
                    for &(i, ci) in &t.coeffs {
                        self.q[i] -= 2.0 * t.weight * ci;
                        for &(j, cj) in &t.coeffs {
                            // Upper triangle of P = 2 sum_k w_k c_k c_k^T.
                            if i <= j {
                                self.add_p(i, j, 2.0 * t.weight * ci * cj);
                            }
                        }
                    }
                }
            }
            LossKind::TruncatedQuadratic => {
                let us = self.hinge_epigraph(terms);
                for (&u, t) in us.iter().zip(terms) {
                    self.add_p(u, u, 2.0 * t.weight);
                }
            }
            LossKind::Hinge => {
                let ts = self.hinge_epigraph(terms);
                for (&u, t) in ts.iter().zip(terms) {
                    self.q[u] += t.weight;
                }
            }
            LossKind::Exponential => {
                let ts = self.exp_epigraph(terms);
                for (&u, t) in ts.iter().zip(terms) {
                    self.q[u] += t.weight;
                }
            }
            LossKind::ZeroOne => return Err(non_convex()),
        }
        Ok(())
    }

    fn solve(self, n_main: usize) -> Result<(Vec<f64>, SolverStatus)> {
        let n = self.q.len();
        let (mut rows, mut cols, mut vals, mut b) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let mut cones = Vec::new();
        let mut push = |e: &Affine, b: &mut Vec<f64>| {
            let r = b.len();
            for &(j, c) in &e.coeffs {
                if c != 0.0 {
                    rows.push(r);
                    cols.push(j);
                    vals.push(-c);
                }
            }
            b.push(e.constant);
        };
        if !self.nonneg.is_empty() {
            self.nonneg.iter().for_each(|e| push(e, &mut b));
            cones.push(SupportedConeT::NonnegativeConeT(self.nonneg.len()));
        }
        for cone in &self.socs {
            cone.iter().for_each(|e| push(e, &mut b));
            cones.push(SupportedConeT::SecondOrderConeT(cone.len()));
        }
        for cone in &self.exps {
            cone.iter().for_each(|e| push(e, &mut b));
            cones.push(SupportedConeT::ExponentialConeT());
        }
        let a = CscMatrix::new_from_triplets(b.len(), n, rows, cols, vals);
        let mut pr = Vec::with_capacity(self.p.len());
        let mut pc = Vec::with_capacity(self.p.len());
        let mut pv = Vec::with_capacity(self.p.len());
        for (&(i, j), &v) in &self.p {
            pr.push(i);
            pc.push(j);
            pv.push(v);
        }
        let p = CscMatrix::new_from_triplets(n, n, pr, pc, pv);
        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(200)
            .build()
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        let mut solver = DefaultSolver::new(&p, &self.q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("{e:?}")))?;
        solver.solve();
        let status = solver.solution.status;
        Ok((solver.solution.x[..n_main].to_vec(), status))
    }
}

fn non_convex() -> Error {
    Error::Unsupported {
        op: "conic risk formulation",
        kind: "the zero_one loss".into(),
    }
}

/// Minimizes `objective` over the class intersected with `constraints`;
/// returns the cleaned parameter vector of a minimizer.
pub(crate) fn solve(
    class: &FunctionClass,
    loss: &SurrogateLoss,
    constraints: &[RiskConstraint],
    objective: Objective<'_>,
) -> Result<Vec<f64>> {
    let n_main = class.n_params();
    let mut builder = Builder::new(n_main);
    match class {
        FunctionClass::MonotoneGrid(grid) => {
            let g = grid.cells();
            builder.nonneg.push(Affine {
                coeffs: vec![(0, 1.0)],
                constant: 1.0,
            });
            builder.nonneg.push(Affine {
                coeffs: vec![(g - 1, -1.0)],
                constant: 1.0,
            });
            for j in 0..g - 1 {
                builder.nonneg.push(Affine {
                    coeffs: vec![(j + 1, 1.0), (j, -1.0)],
                    constant: 0.0,
                });
            }
        }
        FunctionClass::LinearBall(ball) => {
            let mut cone = vec![Affine::constant(ball.radius())];
            cone.extend((0..ball.dim()).map(|i| Affine::var(i, 1.0)));
            builder.socs.push(cone);
        }
        FunctionClass::Finite(_) => {
            return Err(Error::Unsupported {
                op: "conic solve",
                kind: "finite classes".into(),
            })
        }
    }
    for c in constraints {
        builder.risk_constraint(loss, c.terms(), c.budget() + FEASIBILITY_TOL)?;
    }
    match objective {
        Objective::Zero => {}
        Objective::Risk(terms) => builder.risk_objective(loss, terms)?,
        Objective::Linear(coeffs) => {
            for (i, c) in coeffs {
                builder.q[i] += c;
            }
        }
    }
    let (x, status) = builder.solve(n_main)?;
    let x = class.clean_params(x);
    match status {
        SolverStatus::Solved | SolverStatus::AlmostSolved => Ok(x),
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => Err(Error::Infeasible),
        other => {
            // Accept a stalled solve only if the point is feasible to a loose tolerance.
            let ok = x.iter().all(|v| v.is_finite())
                && constraints
                    .iter()
                    .all(|c| terms_risk(loss, c.terms(), &x) <= c.budget() + 1e-6);
            if ok {
                Ok(x)
            } else {
                Err(Error::Solver(format!("{other:?}")))
            }
        }
    }
}
