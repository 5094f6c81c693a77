//! Limited-memory BFGS with Armijo backtracking.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
pub(crate) struct Lbfgs {
    pub memory: usize,
    pub max_iter: usize,
    /// Stop when the largest gradient component falls below this.
    pub grad_tol: f64,
    /// Stop when the relative objective change falls below this.
    pub f_tol: f64,
}

impl Default for Lbfgs {
    fn default() -> Self {
        Lbfgs {
            memory: 10,
            max_iter: 1000,
            grad_tol: 1e-7,
            f_tol: 1e-12,
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

impl Lbfgs {
    /// Minimizes `f`, which returns the objective and writes the gradient.
    pub fn minimize(&self, mut x: Vec<f64>, mut f: impl FnMut(&[f64], &mut [f64]) -> f64) -> Vec<f64> {
        let n = x.len();
        let mut g = vec![0.0; n];
        let mut fx = f(&x, &mut g);
        let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(self.memory);
        let mut dir = vec![0.0; n];
        let mut x_new = vec![0.0; n];
        let mut g_new = vec![0.0; n];
        let mut alpha = vec![0.0; self.memory];

        for _ in 0..self.max_iter {
            if inf_norm(&g) <= self.grad_tol {
                break;
            }
            // Two-loop recursion.
            dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
            for (i, (s, y, rho)) in history.iter().enumerate().rev() {
                alpha[i] = rho * dot(s, &dir);
                dir.iter_mut().zip(y).for_each(|(d, yi)| *d -= alpha[i] * yi);
            }
            let gamma = match history.back() {
                Some((s, y, _)) => dot(s, y) / dot(y, y),
                None => 1.0 / inf_norm(&g).max(1.0),
            };
            dir.iter_mut().for_each(|d| *d *= gamma);
            for (i, (s, y, rho)) in history.iter().enumerate() {
                let beta = rho * dot(y, &dir);
                dir.iter_mut().zip(s).for_each(|(d, si)| *d += (alpha[i] - beta) * si);
            }

            let mut slope = dot(&g, &dir);
            if slope >= 0.0 {
                history.clear();
                dir.iter_mut().zip(&g).for_each(|(d, gi)| *d = -gi);
                slope = -dot(&g, &g);
            }

            let mut step = 1.0;
            let mut f_new;
            let mut accepted = false;
            loop {
                x_new.iter_mut().zip(x.iter().zip(&dir)).for_each(|(xn, (xi, di))| *xn = xi + step * di);
                f_new = f(&x_new, &mut g_new);
                if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                    accepted = true;
                    break;
                }
                step *= 0.5;
                if step < 1e-20 {
                    break;
                }
            }
            if !accepted {
                break;
            }

            let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 {
                if history.len() == self.memory {
                    history.pop_front();
                }
                history.push_back((s, y, 1.0 / sy));
            }
            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut g, &mut g_new);
            let change = (fx - f_new).abs() / fx.abs().max(f_new.abs()).max(1.0);
            fx = f_new;
            if change <= self.f_tol {
                break;
            }
        }
        x
    }
}
