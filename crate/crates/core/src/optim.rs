//! Small box-constrained local optimizers shared by several modules.

use crate::domain::Bounds;

/// Projected quasi-Newton (BFGS) ascent on a box.
///
/// `objective` returns the value and gradient, or `None` when the point is
/// not evaluable (treated as a failed line-search trial).
pub fn bfgs_maximize<F>(
    mut objective: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    max_iter: usize,
) -> Option<(Vec<f64>, f64)>
where
    F: FnMut(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = x0.len();
    let project = |x: &mut [f64]| {
        for j in 0..n {
            x[j] = x[j].clamp(lower[j], upper[j]);
        }
    };
    let mut x = x0.to_vec();
    project(&mut x);
    let (mut fx, mut gx) = objective(&x)?;
    if !fx.is_finite() {
        return None;
    }
    let identity = |n: usize| {
        let mut h = vec![0.0; n * n];
        for i in 0..n {
            h[i * n + i] = 1.0;
        }
        h
    };
    let mut h = identity(n);
    for _ in 0..max_iter {
        let mut step_taken = false;
        for attempt in 0..2 {
            if attempt == 1 {
                h = identity(n);
            }
            // ascent direction p = H g
            let p: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| h[i * n + j] * gx[j]).sum())
                .collect();
            let mut t = 1.0;
            for _ in 0..40 {
                let mut trial: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
                project(&mut trial);
                let predicted: f64 = trial
                    .iter()
                    .zip(&x)
                    .zip(&gx)
                    .map(|((a, b), g)| (a - b) * g)
                    .sum();
                if let Some((ft, gt)) = objective(&trial) {
                    if ft.is_finite() && ft >= fx + 1e-4 * predicted.max(0.0) && ft >= fx {
                        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
                        let yv: Vec<f64> = gx.iter().zip(&gt).map(|(a, b)| a - b).collect();
                        let sy: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
                        if sy > 1e-14 {
                            bfgs_update(&mut h, &s, &yv, sy);
                        }
                        let improvement = ft - fx;
                        x = trial;
                        fx = ft;
                        gx = gt;
                        step_taken = improvement > 1e-12 * (1.0 + fx.abs());
                        break;
                    }
                }
                t *= 0.5;
            }
            if step_taken {
                break;
            }
        }
        if !step_taken {
            break;
        }
    }
    Some((x, fx))
}

/// Inverse-Hessian BFGS update for minimizing `-f`, written in terms of
/// `s = x_new - x_old` and `y = g_old - g_new` (gradients of `f`).
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n)
        .map(|i| (0..n).map(|j| h[i * n + j] * y[j]).sum())
        .collect();
    let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                + (rho * rho * yhy + rho) * s[i] * s[j];
        }
    }
}

/// Derivative-free compass search on a box, maximizing `objective`.
///
/// Non-finite values are treated as minus infinity. Starts with a step of
/// `initial_step` (as a fraction of each side length) and halves it after
/// every unsuccessful sweep until it drops below `min_step`.
pub fn pattern_search<F>(
    mut objective: F,
    start: &[f64],
    start_value: f64,
    domain: &Bounds,
    initial_step: f64,
    min_step: f64,
    max_evals: usize,
) -> (Vec<f64>, f64)
where
    F: FnMut(&[f64]) -> f64,
{
    let d = domain.dim();
    let mut x = start.to_vec();
    let mut fx = if start_value.is_finite() { start_value } else { f64::NEG_INFINITY };
    let mut step = initial_step;
    let mut evals = 0;
    while step >= min_step && evals < max_evals {
        let mut improved = false;
        'dirs: for j in 0..d {
            for sign in [1.0, -1.0] {
                let mut trial = x.clone();
                trial[j] += sign * step * domain.width(j);
                domain.project(&mut trial);
                if trial[j] == x[j] {
                    continue;
                }
                let ft = objective(&trial);
                evals += 1;
                if ft.is_finite() && ft > fx {
                    x = trial;
                    fx = ft;
                    improved = true;
                    break 'dirs;
                }
                if evals >= max_evals {
                    break 'dirs;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    (x, fx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_finds_quadratic_peak() {
        let f = |x: &[f64]| {
            let v = -(x[0] - 0.3).powi(2) - 10.0 * (x[1] + 0.2).powi(2) - x[0] * x[1];
            let g = vec![-2.0 * (x[0] - 0.3) - x[1], -20.0 * (x[1] + 0.2) - x[0]];
            Some((v, g))
        };
        let (x, _) = bfgs_maximize(f, &[0.0, 0.0], &[-5.0, -5.0], &[5.0, 5.0], 200).unwrap();
        // stationary point: [2 1; 1 20] x = [0.6; -4]
        let det = 2.0 * 20.0 - 1.0;
        let x0 = (0.6 * 20.0 - (-4.0)) / det;
        let x1 = (2.0 * -4.0 - 0.6) / det;
        assert!((x[0] - x0).abs() < 1e-6 && (x[1] - x1).abs() < 1e-6, "{x:?}");
    }

    #[test]
    fn bfgs_respects_bounds() {
        let f = |x: &[f64]| Some((x[0], vec![1.0]));
        let (x, fx) = bfgs_maximize(f, &[0.0], &[-1.0], &[2.0], 50).unwrap();
        assert_eq!(x[0], 2.0);
        assert_eq!(fx, 2.0);
    }

    #[test]
    fn pattern_search_converges_on_bowl() {
        let domain = Bounds::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let f = |x: &[f64]| -(x[0] - 0.37).powi(2) - (x[1] - 0.81).powi(2);
        let (x, _) = pattern_search(f, &[0.5, 0.5], f(&[0.5, 0.5]), &domain, 0.1, 1e-7, 10_000);
        assert!((x[0] - 0.37).abs() < 1e-5 && (x[1] - 0.81).abs() < 1e-5);
    }
}
