use crate::losses::SurrogateLoss;

use super::{terms_risk, MarginTerm};

pub(crate) const MAX_ITERATIONS: usize = 10_000;

/// Projected gradient descent with backtracking on `sum_k w_k l(c_k . theta)`.
pub(crate) fn minimize(
    loss: &SurrogateLoss,
    terms: &[MarginTerm],
    dim: usize,
    project: impl Fn(&[f64]) -> Vec<f64>,
) -> Vec<f64> {
    let mut theta = project(&vec![0.0; dim]);
    let mut value = terms_risk(loss, terms, &theta);
    let mut step = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let grad = gradient(loss, terms, &theta);
        let mut accepted = None;
        while step > 1e-18 {
            let cand: Vec<f64> = theta.iter().zip(&grad).map(|(t, g)| t - step * g).collect();
            let cand = project(&cand);
            let (lin, sq) = theta
                .iter()
                .zip(&cand)
                .zip(&grad)
                .fold((0.0, 0.0), |(l, s), ((t, c), g)| (l + g * (c - t), s + (c - t) * (c - t)));
            let cand_value = terms_risk(loss, terms, &cand);
            if cand_value <= value + lin + sq / (2.0 * step) + 1e-15 {
                accepted = Some((cand, cand_value, sq.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_value, moved)) = accepted else {
            break;
        };
        let improved = cand_value < value;
        if improved {
            theta = cand;
            value = cand_value;
        }
        if !improved || moved < 1e-12 * (1.0 + norm(&theta)) {
            break;
        }
        step *= 2.0;
    }
    theta
}

fn gradient(loss: &SurrogateLoss, terms: &[MarginTerm], theta: &[f64]) -> Vec<f64> {
    let mut grad = vec![0.0; theta.len()];
    for term in terms {
        let d = term.weight * loss.derivative(term.margin(theta));
        for &(i, c) in &term.coeffs {
            grad[i] += d * c;
        }
    }
    grad
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
