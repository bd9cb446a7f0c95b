//! Platt scaling: a sigmoid fitted over decision values by Newton's method
//! with backtracking, using prior-corrected targets.
//!
//! The fitted map is `p(DYG | f) = sigmoid(a·f + b)`.

use super::sigmoid;

const MAX_ITER: usize = 100;
const MIN_STEP: f64 = 1e-10;
const SIGMA: f64 = 1e-12;
const EPS: f64 = 1e-5;

/// Penalized log-likelihood term for one point in the `1/(1+exp(A f + B))`
/// parametrization, written to avoid overflow.
fn loss_term(f_ab: f64, t: f64) -> f64 {
    if f_ab >= 0.0 {
        t * f_ab + (1.0 + (-f_ab).exp()).ln()
    } else {
        (t - 1.0) * f_ab + (1.0 + f_ab.exp()).ln()
    }
}

/// Returns `(a, b)` such that `sigmoid(a·f + b)` estimates the probability
/// that a point with decision value `f` is positive.
pub fn fit(decisions: &[f64], positive: &[bool]) -> (f64, f64) {
    assert_eq!(decisions.len(), positive.len());
    let prior1 = positive.iter().filter(|&&p| p).count() as f64;
    let prior0 = positive.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    // internal parametrization: p = 1 / (1 + exp(A f + B))
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(f, t)| loss_term(f * a + b, *t))
            .sum()
    };
    let mut fval = objective(a, b);

    for _ in 0..MAX_ITER {
        let (mut h11, mut h22, mut h21) = (SIGMA, SIGMA, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (f, t) in decisions.iter().zip(&targets) {
            let f_ab = f * a + b;
            let (p, q) = if f_ab >= 0.0 {
                let e = (-f_ab).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = f_ab.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = t - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < EPS && g2.abs() < EPS {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;

        let mut step = 1.0;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < MIN_STEP {
            break;
        }
    }
    (-a, -b)
}

/// Calibrated positive-class probability for decision value `f`.
pub fn probability(a: f64, b: f64, f: f64) -> f64 {
    sigmoid(a * f + b)
}
