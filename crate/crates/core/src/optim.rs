//! Small unconstrained minimiser used by the metric estimators.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::dot;

pub struct Minimum {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// BFGS with an Armijo backtracking line search. `grad` writes the gradient
/// into its second argument.
pub fn bfgs<F, G>(mut f: F, mut grad: G, x0: Vec<f64>, max_iter: usize, gtol: f64) -> Minimum
where
    F: FnMut(&[f64]) -> f64,
    G: FnMut(&[f64], &mut [f64]),
{
    let n = x0.len();
    let mut x = x0;
    let mut fx = f(&x);
    let mut g = vec![0.0; n];
    grad(&x, &mut g);
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut p = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut hy = vec![0.0; n];

    for it in 0..max_iter {
        let gnorm = libm::sqrt(dot(&g, &g));
        if gnorm <= gtol {
            return Minimum {
                x,
                iterations: it,
                converged: true,
            };
        }
        for i in 0..n {
            p[i] = -dot(&h[i * n..(i + 1) * n], &g);
        }
        let mut slope = dot(&p, &g);
        if slope >= 0.0 {
            // Lost descent; restart from steepest descent.
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] = if i == j { 1.0 } else { 0.0 };
                }
                p[i] = -g[i];
            }
            slope = -gnorm * gnorm;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            let f_new = f(&x_new);
            if f_new <= fx + 1e-4 * step * slope {
                fx = f_new;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return Minimum {
                x,
                iterations: it,
                converged: false,
            };
        }
        grad(&x_new, &mut g_new);
        for i in 0..n {
            s[i] = x_new[i] - x[i];
            y[i] = g_new[i] - g[i];
        }
        core::mem::swap(&mut x, &mut x_new);
        core::mem::swap(&mut g, &mut g_new);
        let sy = dot(&s, &y);
        if sy <= 1e-14 * libm::sqrt(dot(&s, &s) * dot(&y, &y)) {
            continue;
        }
        for i in 0..n {
            hy[i] = dot(&h[i * n..(i + 1) * n], &y);
        }
        let yhy = dot(&y, &hy);
        let rho = 1.0 / sy;
        let coef = (1.0 + yhy * rho) * rho;
        for i in 0..n {
            for j in 0..n {
                h[i * n + j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
            }
        }
    }
    let gnorm = libm::sqrt(dot(&g, &g));
    Minimum {
        x,
        iterations: max_iter,
        converged: gnorm <= gtol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bfgs_rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &[f64], out: &mut [f64]| {
            out[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            out[1] = 200.0 * (x[1] - x[0] * x[0]);
        };
        let m = bfgs(f, g, vec![-1.2, 1.0], 500, 1e-10);
        assert!(m.converged);
        assert!((m.x[0] - 1.0).abs() < 1e-6 && (m.x[1] - 1.0).abs() < 1e-6);
    }
}
