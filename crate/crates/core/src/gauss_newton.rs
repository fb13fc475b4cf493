//! Gauss-Newton for overdetermined nonlinear systems `F(y) = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Matrix, Vector};

/// A residual map together with its Jacobian.
pub trait LeastSquares {
    fn residual(&self, y: &Vector) -> Result<Vector>;
    fn jacobian(&self, y: &Vector) -> Result<Matrix>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussNewtonOptions {
    /// Stop when `‖F‖∞ ≤ tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop when the accepted step satisfies `‖Δy‖∞ ≤ min_step`.
    pub min_step: f64,
    pub max_halvings: usize,
    /// Singular values below `rcond·σ_max` are treated as zero.
    pub rcond: f64,
}

impl Default for GaussNewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 50, min_step: 1e-12, max_halvings: 20, rcond: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Iteration {
    /// `‖F‖∞` at the iterate.
    pub residual_norm: f64,
    /// `‖Δy‖∞` of the step that produced the iterate, zero for the start.
    pub step_norm: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Tolerance,
    SmallStep,
    MaxIter,
    LineSearch,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub iterations: Vec<Iteration>,
    pub final_residual: f64,
    pub jacobian_rank: usize,
    pub smallest_singular_value: f64,
    pub singular_values: Vec<f64>,
    /// `ln(r_{j+1}/r_j) / ln(r_j/r_{j−1})` over the last three residual norms.
    pub order_estimate: Option<f64>,
    pub termination: Termination,
    pub converged: bool,
}

/// Empirical convergence order from the last three residual norms.
pub fn order_estimate(norms: &[f64]) -> Option<f64> {
    let [a, b, c] = norms.get(norms.len().checked_sub(3)?..)? else {
        return None;
    };
    if !(*a > 0.0 && *b > 0.0 && *c > 0.0) {
        return None;
    }
    let q = (c / b).ln() / (b / a).ln();
    q.is_finite().then_some(q)
}

/// Minimum-norm least-squares solution of `J d = −r` and the singular values of `J`.
pub fn min_norm_step(jac: &Matrix, r: &Vector, rcond: f64) -> (Vector, Vec<f64>, usize) {
    let svd = jac.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let smax = sv.first().copied().unwrap_or(0.0);
    let cut = rcond * smax;
    let rank = sv.iter().filter(|&&s| s > cut).count();
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let mut step = Vector::zeros(jac.ncols());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cut {
            let coef = -u.column(i).dot(r) / s;
            step += vt.row(i).transpose() * coef;
        }
    }
    (step, sv, rank)
}

fn spectrum(jac: &Matrix, rcond: f64) -> (Vec<f64>, usize) {
    let mut sv: Vec<f64> = jac.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let cut = rcond * sv.first().copied().unwrap_or(0.0);
    let rank = sv.iter().filter(|&&s| s > cut).count();
    (sv, rank)
}

/// Gauss-Newton with step halving on `‖F‖₂`.
///
/// Returns the final iterate when `‖F‖∞ ≤ tol` or the step became negligible. A
/// rank-deficient Jacobian at the final iterate is an error, as is running out of
/// iterations or of halvings.
pub fn gauss_newton(f: &dyn LeastSquares, y0: &Vector, opts: &GaussNewtonOptions) -> Result<(Vector, ConvergenceReport)> {
    let mut y = y0.clone();
    let mut r = f.residual(&y)?;
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteResidual);
    }
    let mut iterations = vec![Iteration { residual_norm: r.amax(), step_norm: 0.0 }];
    let mut termination = Termination::MaxIter;

    for _ in 0..opts.max_iter {
        if r.amax() <= opts.tol {
            termination = Termination::Tolerance;
            break;
        }
        let jac = f.jacobian(&y)?;
        let (step, _, _) = min_norm_step(&jac, &r, opts.rcond);
        let base = r.norm();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let trial = &y + &step * alpha;
            if let Ok(rt) = f.residual(&trial) {
                if rt.norm() < base {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((trial, rt)) = accepted else {
            termination = Termination::LineSearch;
            break;
        };
        let step_norm = (&trial - &y).amax();
        y = trial;
        r = rt;
        iterations.push(Iteration { residual_norm: r.amax(), step_norm });
        if r.amax() <= opts.tol {
            termination = Termination::Tolerance;
            break;
        }
        if step_norm <= opts.min_step {
            termination = Termination::SmallStep;
            break;
        }
    }

    let jac = f.jacobian(&y)?;
    let (singular_values, jacobian_rank) = spectrum(&jac, opts.rcond);
    let norms: Vec<f64> = iterations.iter().map(|i| i.residual_norm).collect();
    let final_residual = r.amax();
    let report = ConvergenceReport {
        order_estimate: order_estimate(&norms),
        iterations,
        final_residual,
        jacobian_rank,
        smallest_singular_value: singular_values.last().copied().unwrap_or(0.0),
        singular_values,
        termination,
        converged: final_residual <= opts.tol,
    };
    let best: Vec<f64> = y.iter().copied().collect();
    if jacobian_rank < y.len() {
        return Err(Error::RankDeficientJacobian { best, report: Box::new(report) });
    }
    match termination {
        Termination::Tolerance | Termination::SmallStep => Ok((y, report)),
        Termination::MaxIter | Termination::LineSearch => Err(Error::MaxIterExceeded { best, report: Box::new(report) }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Closure<F: Fn(&Vector) -> Vector, J: Fn(&Vector) -> Matrix>(F, J);

    impl<F: Fn(&Vector) -> Vector, J: Fn(&Vector) -> Matrix> LeastSquares for Closure<F, J> {
        fn residual(&self, y: &Vector) -> Result<Vector> {
            Ok((self.0)(y))
        }
        fn jacobian(&self, y: &Vector) -> Result<Matrix> {
            Ok((self.1)(y))
        }
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn affine_overdetermined_system_is_solved_in_one_step() {
        let f = Closure(|y: &Vector| v(&[y[0] - 1.0, 2.0 * (y[0] - 1.0)]), |_: &Vector| Matrix::from_column_slice(2, 1, &[1.0, 2.0]));
        for start in [-7.0, 0.0, 3.5, 1e3] {
            let (y, rep) = gauss_newton(&f, &v(&[start]), &GaussNewtonOptions::default()).unwrap();
            assert!((y[0] - 1.0).abs() < 1e-12);
            assert_eq!(rep.iterations.len(), 2);
            assert_eq!(rep.jacobian_rank, 1);
        }
    }

    #[test]
    fn quadratic_residual_converges_quadratically() {
        // F(y) = (y² − 4, y − 2): with e = y − 2 one GN step gives e⁺ = 2y e² / (4y² + 1)
        let f = Closure(
            |y: &Vector| v(&[y[0] * y[0] - 4.0, y[0] - 2.0]),
            |y: &Vector| Matrix::from_column_slice(2, 1, &[2.0 * y[0], 1.0]),
        );
        let opts = GaussNewtonOptions { tol: 1e-14, ..Default::default() };
        let (y, rep) = gauss_newton(&f, &v(&[3.0]), &opts).unwrap();
        assert!((y[0] - 2.0).abs() < 1e-14);
        let mut e = 1.0f64;
        for it in rep.iterations.iter().skip(1) {
            // ‖F‖∞ = |e||y + 2| ≈ 4|e|
            let next = it.residual_norm / 4.0;
            assert!(next <= e * e + 1e-15);
            e = next.max(1e-300);
        }
    }

    #[test]
    fn order_estimate_of_geometric_and_quadratic_sequences() {
        assert!((order_estimate(&[1e-1, 1e-2, 1e-3]).unwrap() - 1.0).abs() < 1e-12);
        assert!((order_estimate(&[1e-2, 1e-4, 1e-8]).unwrap() - 2.0).abs() < 1e-12);
        assert!(order_estimate(&[1.0, 0.5]).is_none());
        assert!(order_estimate(&[1.0, 0.5, 0.0]).is_none());
    }

    #[test]
    fn rank_deficiency_is_reported() {
        // y1 + y2 = 2 twice: infinitely many solutions, Jacobian rank 1 < 2
        let f = Closure(
            |y: &Vector| v(&[y[0] + y[1] - 2.0, y[0] + y[1] - 2.0]),
            |_: &Vector| Matrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
        );
        match gauss_newton(&f, &v(&[0.0, 0.0]), &GaussNewtonOptions::default()) {
            Err(Error::RankDeficientJacobian { best, report }) => {
                // the minimum-norm step lands on (1, 1)
                assert!((best[0] - 1.0).abs() < 1e-12 && (best[1] - 1.0).abs() < 1e-12);
                assert_eq!(report.jacobian_rank, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn max_iter_carries_best_iterate() {
        // F(y) = y³: the root is degenerate and GN only contracts by 2/3 per step
        let f = Closure(|y: &Vector| v(&[y[0].powi(3)]), |y: &Vector| Matrix::from_element(1, 1, 3.0 * y[0] * y[0]));
        let opts = GaussNewtonOptions { max_iter: 3, ..Default::default() };
        match gauss_newton(&f, &v(&[1.0]), &opts) {
            Err(Error::MaxIterExceeded { best, report }) => {
                assert!((best[0] - (2.0f64 / 3.0).powi(3)).abs() < 1e-12);
                assert!(!report.converged);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
