//! ℓ1 sparse recovery baseline: complex soft-thresholding, the Lipschitz
//! constant of the data term, and (F)ISTA.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{norm1, norm2, norm2_sqr, CMatrix, C64};

/// Complex soft-threshold of a single value; preserves phase.
#[inline]
pub fn shrink(x: C64, alpha: f64) -> C64 {
    let r = x.norm();
    if r <= alpha {
        C64::new(0.0, 0.0)
    } else {
        x * ((r - alpha) / r)
    }
}

/// Elementwise `S_α(x) = x/|x| · max(|x| − α, 0)`.
pub fn soft_threshold(x: &[C64], alpha: f64) -> Vec<C64> {
    x.iter().map(|&v| shrink(v, alpha)).collect()
}

const POWER_MAX_ITERS: usize = 10_000;
const POWER_REL_TOL: f64 = 1e-13;

/// Largest eigenvalue of `AᴴA`, by power iteration on the smaller of
/// `AᴴA` and `AAᴴ` from a fixed pseudo-random start.
pub fn power_iteration_eta(a: &CMatrix) -> Result<f64> {
    if a.rows() == 0 || a.cols() == 0 {
        return invalid("empty matrix");
    }
    let wide = a.cols() >= a.rows();
    let dim = if wide { a.rows() } else { a.cols() };
    let apply = |v: &[C64]| -> Vec<C64> {
        if wide {
            a.matvec(&a.adjoint_matvec(v))
        } else {
            a.adjoint_matvec(&a.matvec(v))
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut v: Vec<C64> = (0..dim)
        .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let n0 = norm2(&v);
    v.iter_mut().for_each(|x| *x /= n0);

    let mut eig = 0.0;
    for _ in 0..POWER_MAX_ITERS {
        let w = apply(&v);
        let next = norm2(&w);
        if next == 0.0 {
            return invalid("matrix is zero");
        }
        v = w.into_iter().map(|x| x / next).collect();
        if (next - eig).abs() <= POWER_REL_TOL * next {
            return Ok(next);
        }
        eig = next;
    }
    Err(Error::NoConvergence {
        iters: POWER_MAX_ITERS,
    })
}

/// `‖y − A b‖₂² + λ‖b‖₁`.
pub fn lasso_objective(y: &[C64], a: &CMatrix, b: &[C64], lambda: f64) -> f64 {
    let ab = a.matvec(b);
    let residual: f64 = y.iter().zip(&ab).map(|(u, v)| (u - v).norm_sqr()).sum();
    residual + lambda * norm1(b)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub lambda: f64,
    pub max_iters: usize,
    pub momentum: bool,
    /// Stop once `‖b_t − b_{t−1}‖₂ < tol`; zero runs the full budget.
    pub tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            max_iters: 100,
            momentum: true,
            tol: 0.0,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return invalid(format!("lambda {} must be positive", self.lambda));
        }
        if self.max_iters == 0 {
            return invalid("max_iters must be at least 1");
        }
        if !(self.tol >= 0.0) {
            return invalid("tol must be nonnegative");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseSolution {
    pub b: Vec<C64>,
    pub iterations_run: usize,
    /// Objective after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Proximal-gradient solver bound to one dictionary, so the step size is
/// computed once and reused across measurements.
#[derive(Clone, Debug)]
pub struct Fista<'a> {
    a: &'a CMatrix,
    eta: f64,
}

impl<'a> Fista<'a> {
    pub fn new(a: &'a CMatrix) -> Result<Self> {
        let eta = power_iteration_eta(a)?;
        Ok(Self { a, eta })
    }

    pub fn with_eta(a: &'a CMatrix, eta: f64) -> Self {
        Self { a, eta }
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// One step of `b ↦ S_{λ/η}(η⁻¹Aᴴy + (I − η⁻¹AᴴA) b)`.
    pub fn step(&self, y: &[C64], b: &[C64], lambda: f64) -> Vec<C64> {
        let ab = self.a.matvec(b);
        let r: Vec<C64> = y.iter().zip(&ab).map(|(u, v)| u - v).collect();
        let g = self.a.adjoint_matvec(&r);
        let inv = 1.0 / self.eta;
        b.iter()
            .zip(&g)
            .map(|(&bl, &gl)| shrink(bl + gl * inv, lambda * inv))
            .collect()
    }

    pub fn solve(&self, y: &[C64], config: &SolverConfig) -> Result<SparseSolution> {
        self.solve_from(y, config, vec![C64::new(0.0, 0.0); self.a.cols()])
    }

    pub fn solve_from(
        &self,
        y: &[C64],
        config: &SolverConfig,
        b0: Vec<C64>,
    ) -> Result<SparseSolution> {
        config.validate()?;
        if y.len() != self.a.rows() || b0.len() != self.a.cols() {
            return Err(Error::Shape(format!(
                "y has {} entries and b0 {}, dictionary is {}x{}",
                y.len(),
                b0.len(),
                self.a.rows(),
                self.a.cols()
            )));
        }
        let mut b = b0;
        let mut z = b.clone();
        let mut theta = 1.0f64;
        let mut trace = Vec::with_capacity(config.max_iters);
        let mut iterations_run = 0;
        for _ in 0..config.max_iters {
            let from = if config.momentum { &z } else { &b };
            let next = self.step(y, from, config.lambda);
            iterations_run += 1;
            let change: f64 = norm2_sqr(
                &next
                    .iter()
                    .zip(&b)
                    .map(|(u, v)| u - v)
                    .collect::<Vec<_>>(),
            )
            .sqrt();
            if config.momentum {
                let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
                let w = (theta - 1.0) / theta_next;
                z = next
                    .iter()
                    .zip(&b)
                    .map(|(&u, &v)| u + (u - v) * w)
                    .collect();
                theta = theta_next;
            }
            b = next;
            trace.push(lasso_objective(y, self.a, &b, config.lambda));
            if change < config.tol {
                break;
            }
        }
        Ok(SparseSolution {
            b,
            iterations_run,
            objective_trace: trace,
        })
    }
}

/// Convenience wrapper computing `η` for a one-off solve.
pub fn fista_solve(y: &[C64], a: &CMatrix, config: &SolverConfig) -> Result<SparseSolution> {
    Fista::new(a)?.solve(y, config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;
    use crate::signal::Dictionary;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn soft_threshold_examples() {
        assert_eq!(shrink(c(0.5, 0.0), 1.0), c(0.0, 0.0));
        assert!((shrink(c(2.0, 0.0), 1.0) - c(1.0, 0.0)).norm() < 1e-15);
        assert!((shrink(c(3.0, 4.0), 1.0) - c(2.4, 3.2)).norm() < 1e-15);
        // exactly at threshold is killed
        assert_eq!(shrink(c(0.0, 1.0), 1.0), c(0.0, 0.0));
    }

    #[test]
    fn eta_of_orthonormal_columns_is_one() {
        let mut a = CMatrix::zeros(4, 4);
        for i in 0..4 {
            a[(i, (i + 1) % 4)] = c(0.0, 1.0);
        }
        assert!((power_iteration_eta(&a).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_of_square_dft_dictionary_is_n() {
        let d = Dictionary::uniform(&[16], &[16]).unwrap();
        let eta = power_iteration_eta(d.matrix()).unwrap();
        assert!((eta - 16.0).abs() < 1e-8 * 16.0);
    }

    #[test]
    fn zero_matrix_rejected() {
        assert!(power_iteration_eta(&CMatrix::zeros(3, 5)).is_err());
    }

    #[test]
    fn objective_examples() {
        let d = Dictionary::uniform(&[4], &[8]).unwrap();
        let y: Vec<C64> = (0..4).map(|k| c(k as f64, 1.0)).collect();
        let zero = vec![c(0.0, 0.0); 8];
        assert!((lasso_objective(&y, d.matrix(), &zero, 3.0) - norm2_sqr(&y)).abs() < 1e-12);
        let mut b = zero.clone();
        b[2] = c(0.3, -0.2);
        let yb = d.matrix().matvec(&b);
        assert!(lasso_objective(&yb, d.matrix(), &b, 0.0).abs() < 1e-24);
    }

    #[test]
    fn zero_measurement_gives_zero_solution() {
        let d = Dictionary::uniform(&[8], &[16]).unwrap();
        let sol = fista_solve(&[c(0.0, 0.0); 8], d.matrix(), &SolverConfig::default()).unwrap();
        assert!(sol.b.iter().all(|v| v.norm() == 0.0));
        assert_eq!(sol.iterations_run, 100);
    }

    #[test]
    fn large_lambda_kills_first_iterate() {
        let d = Dictionary::uniform(&[8], &[16]).unwrap();
        let y: Vec<C64> = (0..8).map(|k| c((k as f64).sin(), (k as f64).cos())).collect();
        let lambda = d
            .matrix()
            .adjoint_matvec(&y)
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max);
        let cfg = SolverConfig {
            lambda,
            max_iters: 1,
            ..Default::default()
        };
        let sol = fista_solve(&y, d.matrix(), &cfg).unwrap();
        assert!(sol.b.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn early_stop_on_tolerance() {
        let d = Dictionary::uniform(&[8], &[16]).unwrap();
        let y = d.matrix().column(3);
        let cfg = SolverConfig {
            lambda: 0.1,
            max_iters: 10_000,
            momentum: false,
            tol: 1e-9,
        };
        let sol = fista_solve(&y, d.matrix(), &cfg).unwrap();
        assert!(sol.iterations_run < 10_000);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let d = Dictionary::uniform(&[8], &[16]).unwrap();
        assert!(fista_solve(&[c(0.0, 0.0); 7], d.matrix(), &SolverConfig::default()).is_err());
        let bad = SolverConfig {
            lambda: 0.0,
            ..Default::default()
        };
        assert!(fista_solve(&[c(0.0, 0.0); 8], d.matrix(), &bad).is_err());
    }

    #[test]
    fn single_step_matches_explicit_matrices() {
        let d = Dictionary::uniform(&[6], &[12]).unwrap();
        let a = d.matrix();
        let f = Fista::new(a).unwrap();
        let eta = f.eta();
        let y: Vec<C64> = (0..6).map(|k| c(0.3 * k as f64, -0.1)).collect();
        let b: Vec<C64> = (0..12).map(|k| c(0.05 * k as f64, 0.02)).collect();
        let mut w1 = a.adjoint();
        w1.scale(1.0 / eta);
        let mut w2 = a.adjoint().matmul(a);
        w2.scale(-1.0 / eta);
        for i in 0..12 {
            w2[(i, i)] += 1.0;
        }
        let pre: Vec<C64> = w1
            .matvec(&y)
            .iter()
            .zip(w2.matvec(&b))
            .map(|(u, v)| u + v)
            .collect();
        let want = soft_threshold(&pre, 0.5 / eta);
        assert!(max_abs_diff(&want, &f.step(&y, &b, 0.5)) < 1e-12);
    }
}
