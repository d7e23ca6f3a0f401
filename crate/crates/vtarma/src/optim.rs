//! Derivative-free minimization for the likelihood fits: Nelder-Mead
//! simplex search followed by a finite-difference gradient polish, plus
//! standard errors from the numerical Hessian.

use nalgebra::DMatrix;

/// Relative function tolerance for simplex convergence.
const REL_TOL: f64 = 1e-9;

/// Relative coordinate step for Hessian differences.
const HESSIAN_REL_STEP: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimizes `f` by Nelder-Mead from `x0`, then polishes with a few
/// backtracking gradient steps. `f` may return infinity outside the
/// feasible region.
pub fn minimize(f: impl Fn(&[f64]) -> f64, x0: &[f64], max_evals: usize) -> OptimResult {
    let mut result = nelder_mead(&f, x0, max_evals);
    let polish_budget = (max_evals / 4).max(50);
    let polished = gradient_polish(&f, &result.x, result.value, polish_budget);
    result.evaluations += polished.evaluations;
    if polished.value < result.value {
        result.x = polished.x;
        result.value = polished.value;
    }
    result
}

fn sanitized(f: &impl Fn(&[f64]) -> f64, x: &[f64], evals: &mut usize) -> f64 {
    *evals += 1;
    let v = f(x);
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn nelder_mead(f: &impl Fn(&[f64]) -> f64, x0: &[f64], max_evals: usize) -> OptimResult {
    let dim = x0.len();
    let mut evals = 0usize;

    // Initial simplex: x0 plus a step along each coordinate.
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dim + 1);
    let fx0 = sanitized(f, x0, &mut evals);
    simplex.push((x0.to_vec(), fx0));
    for i in 0..dim {
        let mut point = x0.to_vec();
        let step = if point[i].abs() > 0.25 { 0.25 * point[i].abs() } else { 0.25 };
        point[i] += step;
        let value = sanitized(f, &point, &mut evals);
        simplex.push((point, value));
    }

    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN objectives"));
        let best = simplex[0].1;
        let worst = simplex[dim].1;
        if worst.is_finite() && (worst - best).abs() <= REL_TOL * (best.abs() + REL_TOL) {
            return OptimResult {
                x: simplex[0].0.clone(),
                value: best,
                evaluations: evals,
                converged: true,
            };
        }

        // Centroid of all but the worst point.
        let mut centroid = vec![0.0; dim];
        for (point, _) in &simplex[..dim] {
            for (c, p) in centroid.iter_mut().zip(point) {
                *c += p / dim as f64;
            }
        }

        let blend = |a: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[dim].0)
                .map(|(c, w)| c + a * (c - w))
                .collect()
        };

        let reflected = blend(1.0);
        let f_reflected = sanitized(f, &reflected, &mut evals);
        if f_reflected < simplex[0].1 {
            let expanded = blend(2.0);
            let f_expanded = sanitized(f, &expanded, &mut evals);
            simplex[dim] = if f_expanded < f_reflected {
                (expanded, f_expanded)
            } else {
                (reflected, f_reflected)
            };
        } else if f_reflected < simplex[dim - 1].1 {
            simplex[dim] = (reflected, f_reflected);
        } else {
            let contracted = if f_reflected < simplex[dim].1 {
                blend(0.5)
            } else {
                blend(-0.5)
            };
            let f_contracted = sanitized(f, &contracted, &mut evals);
            if f_contracted < simplex[dim].1.min(f_reflected) {
                simplex[dim] = (contracted, f_contracted);
            } else {
                // Shrink toward the best point.
                let best_point = simplex[0].0.clone();
                for entry in simplex.iter_mut().skip(1) {
                    for (p, b) in entry.0.iter_mut().zip(&best_point) {
                        *p = b + 0.5 * (*p - b);
                    }
                    entry.1 = sanitized(f, &entry.0, &mut evals);
                }
            }
        }
    }

    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("no NaN objectives"));
    OptimResult {
        x: simplex[0].0.clone(),
        value: simplex[0].1,
        evaluations: evals,
        converged: false,
    }
}

/// Steepest-descent polish with central finite differences and a
/// backtracking line search.
fn gradient_polish(
    f: &impl Fn(&[f64]) -> f64,
    x0: &[f64],
    f0: f64,
    max_evals: usize,
) -> OptimResult {
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f0;
    let mut evals = 0usize;

    'outer: for _ in 0..20 {
        let mut gradient = vec![0.0; dim];
        for i in 0..dim {
            let h = 1e-6 * (1.0 + x[i].abs());
            let mut hi = x.clone();
            hi[i] += h;
            let mut lo = x.clone();
            lo[i] -= h;
            gradient[i] = (f(&hi) - f(&lo)) / (2.0 * h);
            evals += 2;
            if !gradient[i].is_finite() {
                break 'outer;
            }
        }
        let norm: f64 = gradient.iter().map(|g| g * g).sum::<f64>().sqrt();
        if norm < 1e-12 {
            break;
        }
        let mut step = 0.1 / norm.max(1.0);
        let mut improved = false;
        for _ in 0..12 {
            let candidate: Vec<f64> = x
                .iter()
                .zip(&gradient)
                .map(|(xi, gi)| xi - step * gi)
                .collect();
            let fc = f(&candidate);
            evals += 1;
            if fc < fx {
                x = candidate;
                fx = fc;
                improved = true;
                break;
            }
            step *= 0.5;
            if evals >= max_evals {
                break 'outer;
            }
        }
        if !improved || evals >= max_evals {
            break;
        }
    }

    OptimResult {
        x,
        value: fx,
        evaluations: evals,
        converged: true,
    }
}

/// Standard errors from the inverse numerical Hessian of `neg_loglik` at
/// `estimate` (central differences, relative step `1e-4`).
///
/// Coordinates whose implied variance is not positive, or the whole vector
/// when the Hessian is singular, come back as `None` rather than a
/// fabricated value.
pub fn hessian_std_errors(neg_loglik: impl Fn(&[f64]) -> f64, estimate: &[f64]) -> Vec<Option<f64>> {
    let dim = estimate.len();
    let f0 = neg_loglik(estimate);
    let steps: Vec<f64> = estimate
        .iter()
        .map(|v| HESSIAN_REL_STEP * (1.0 + v.abs()))
        .collect();

    let mut hessian = DMatrix::zeros(dim, dim);
    let shifted = |i: usize, si: f64, j: usize, sj: f64| {
        let mut x = estimate.to_vec();
        x[i] += si;
        x[j] += sj;
        neg_loglik(&x)
    };
    for i in 0..dim {
        let hi = steps[i];
        let fpp = shifted(i, hi, i, 0.0);
        let fmm = shifted(i, -hi, i, 0.0);
        hessian[(i, i)] = (fpp - 2.0 * f0 + fmm) / (hi * hi);
        for j in (i + 1)..dim {
            let hj = steps[j];
            let value = (shifted(i, hi, j, hj) - shifted(i, hi, j, -hj)
                - shifted(i, -hi, j, hj)
                + shifted(i, -hi, j, -hj))
                / (4.0 * hi * hj);
            hessian[(i, j)] = value;
            hessian[(j, i)] = value;
        }
    }

    if !hessian.iter().all(|v| v.is_finite()) {
        return vec![None; dim];
    }
    match hessian.try_inverse() {
        Some(cov) => (0..dim)
            .map(|i| {
                let var = cov[(i, i)];
                if var.is_finite() && var > 0.0 {
                    Some(var.sqrt())
                } else {
                    None
                }
            })
            .collect(),
        None => vec![None; dim],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn minimizes_rosenbrock() {
        let rosenbrock = |x: &[f64]| {
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let result = minimize(rosenbrock, &[-1.2, 1.0], 4000);
        assert!(result.value < 1e-7, "value {}", result.value);
        assert_abs_diff_eq!(result.x[0], 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(result.x[1], 1.0, epsilon = 1e-3);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &[f64]| x.iter().map(|v| v.abs()).sum::<f64>();
        let start = [3.0, -2.0, 0.5];
        let result = minimize(f, &start, 300);
        assert!(result.value <= f(&start));
    }

    #[test]
    fn handles_infinite_regions() {
        // Infeasible for x < 0.
        let f = |x: &[f64]| {
            if x[0] < 0.0 {
                f64::INFINITY
            } else {
                (x[0] - 2.0).powi(2) + x[1].powi(2)
            }
        };
        let result = minimize(f, &[0.5, 1.0], 2000);
        assert!(result.value < 1e-6);
        assert_abs_diff_eq!(result.x[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn quadratic_standard_error_is_inverse_root_curvature() {
        // Negative log-likelihood 0.5 * lambda * x^2 has SE 1/sqrt(lambda).
        for lambda in [0.25, 1.0, 16.0] {
            let se = hessian_std_errors(|x| 0.5 * lambda * x[0] * x[0], &[0.0]);
            assert_abs_diff_eq!(se[0].unwrap(), 1.0 / lambda.sqrt(), epsilon = 1e-5);
        }
    }

    #[test]
    fn singular_directions_are_flagged_not_fabricated() {
        // Flat in the second coordinate: the Hessian is singular.
        let se = hessian_std_errors(|x| 0.5 * x[0] * x[0], &[0.0, 0.0]);
        assert!(se.iter().all(|s| s.is_none()));
        // Negative curvature direction is flagged per coordinate.
        let se = hessian_std_errors(|x| 0.5 * x[0] * x[0] - 0.5 * x[1] * x[1], &[0.0, 0.0]);
        assert!(se[0].is_some());
        assert!(se[1].is_none());
    }

    #[test]
    fn correlated_quadratic_recovers_marginal_errors() {
        // neg-loglik of a bivariate normal with unit variances and
        // correlation r: SEs are sqrt of the inverse-information diagonal.
        let r: f64 = 0.6;
        let det = 1.0 - r * r;
        let f = move |x: &[f64]| {
            0.5 * (x[0] * x[0] - 2.0 * r * x[0] * x[1] + x[1] * x[1]) / det
        };
        let se = hessian_std_errors(f, &[0.0, 0.0]);
        for s in se {
            assert_abs_diff_eq!(s.unwrap(), 1.0, epsilon = 1e-4);
        }
    }
}
