//! Control-affine problems with a scalar bounded control and one scalar state constraint:
//!
//! ```text
//! min φ(x(0), x(T))   s.t.  ẋ = f0(x) + u f1(x),  u_min ≤ u ≤ u_max,
//!                            g(x(t)) ≤ 0,          Φ(x(0), x(T)) = 0.
//! ```
//!
//! Everything the solver needs from a problem goes through [`ControlAffineProblem`].
//! Implementations must be pure: the finite-difference Jacobians and the parallel
//! shooting evaluations assume that the same input always gives the same output.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numdiff;

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Control bounds; `None` stands for an infinite bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

impl ControlBounds {
    pub fn new(lower: f64, upper: f64) -> Self {
        Self { lower: Some(lower), upper: Some(upper) }
    }

    pub fn unbounded() -> Self {
        Self { lower: None, upper: None }
    }

    pub fn width(&self) -> Option<f64> {
        Some(self.upper? - self.lower?)
    }

    /// Distance from `u` to the nearest finite bound, `+∞` when both are absent.
    pub fn margin(&self, u: f64) -> f64 {
        let lo = self.lower.map_or(f64::INFINITY, |l| u - l);
        let hi = self.upper.map_or(f64::INFINITY, |h| h - u);
        lo.min(hi)
    }

    pub fn clamp(&self, u: f64) -> f64 {
        let u = self.lower.map_or(u, |l| u.max(l));
        self.upper.map_or(u, |h| u.min(h))
    }
}

/// The three Lie brackets the shooting method uses, with `[X,Y] = X'Y − Y'X`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Bracket {
    /// `[f1, f0]`
    F1F0,
    /// `[[f1, f0], f0]`
    F1F0F0,
    /// `[[f1, f0], f1]`
    F1F0F1,
}

/// A control-affine optimal control problem in Mayer form.
///
/// Costates are stored as plain vectors and paired with vector fields through the dot
/// product, so `p·f1(x)` is `p.dot(&f1)`.
pub trait ControlAffineProblem: Send + Sync {
    fn name(&self) -> &str;
    /// State dimension `n`.
    fn state_dim(&self) -> usize;
    /// Number of endpoint equality constraints `q`.
    fn endpoint_dim(&self) -> usize;
    fn horizon(&self) -> f64;
    fn bounds(&self) -> ControlBounds;

    fn drift(&self, x: &Vector) -> Vector;
    fn drift_jacobian(&self, x: &Vector) -> Matrix;
    fn control_field(&self, x: &Vector) -> Vector;
    fn control_field_jacobian(&self, x: &Vector) -> Matrix;

    /// State constraint `g(x) ≤ 0`.
    fn constraint(&self, x: &Vector) -> f64;
    fn constraint_gradient(&self, x: &Vector) -> Vector;

    fn cost(&self, x0: &Vector, xt: &Vector) -> f64;
    /// Gradients of the cost with respect to the initial and the final state.
    fn cost_gradient(&self, x0: &Vector, xt: &Vector) -> (Vector, Vector);

    /// Endpoint constraints `Φ(x0, xT) = 0`, length `q`.
    fn endpoint(&self, x0: &Vector, xt: &Vector) -> Vector;
    /// Jacobians of `Φ` with respect to `x0` and `xT`, each `q × n`.
    fn endpoint_jacobian(&self, x0: &Vector, xt: &Vector) -> (Matrix, Matrix);

    /// Closed-form brackets, when the problem knows them. The default falls back to
    /// finite differences in [`lie_bracket`].
    fn analytic_bracket(&self, _which: Bracket, _x: &Vector) -> Option<Vector> {
        None
    }

    /// `Some(a)` when the endpoint constraints are exactly `x(0) = a`.
    fn fixed_initial_state(&self) -> Option<Vector> {
        None
    }
}

fn check_len(v: &Vector, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::config(format!("{what} returned length {}, expected {n}", v.len())));
    }
    Ok(())
}

fn check_shape(m: &Matrix, rows: usize, cols: usize, what: &str) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::config(format!(
            "{what} returned a {}x{} matrix, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Checks the bounds and the shape of every evaluation interface at `x`.
pub fn validate_at(p: &dyn ControlAffineProblem, x: &Vector) -> Result<()> {
    let n = p.state_dim();
    let q = p.endpoint_dim();
    if n == 0 {
        return Err(Error::config("state dimension must be positive"));
    }
    if !(p.horizon() > 0.0 && p.horizon().is_finite()) {
        return Err(Error::config(format!("horizon must be positive, got {}", p.horizon())));
    }
    let b = p.bounds();
    if let (Some(lo), Some(hi)) = (b.lower, b.upper) {
        if !(lo < hi) {
            return Err(Error::config(format!("control bounds must satisfy u_min < u_max, got [{lo}, {hi}]")));
        }
    }
    check_len(x, n, "probe point")?;
    check_len(&p.drift(x), n, "f0")?;
    check_len(&p.control_field(x), n, "f1")?;
    check_shape(&p.drift_jacobian(x), n, n, "df0")?;
    check_shape(&p.control_field_jacobian(x), n, n, "df1")?;
    check_len(&p.constraint_gradient(x), n, "dg")?;
    let (g0, g1) = p.cost_gradient(x, x);
    check_len(&g0, n, "dphi/dx0")?;
    check_len(&g1, n, "dphi/dxT")?;
    check_len(&p.endpoint(x, x), q, "Phi")?;
    let (j0, j1) = p.endpoint_jacobian(x, x);
    check_shape(&j0, q, n, "dPhi/dx0")?;
    check_shape(&j1, q, n, "dPhi/dxT")?;
    Ok(())
}

/// [`validate_at`] at the origin.
pub fn validate(p: &dyn ControlAffineProblem) -> Result<()> {
    validate_at(p, &Vector::zeros(p.state_dim()))
}

/// `[X,Y](x) = X'(x)Y(x) − Y'(x)X(x)` from field values and Jacobians.
pub fn bracket_from_parts(dx_field: &Matrix, y_field: &Vector, dy_field: &Matrix, x_field: &Vector) -> Vector {
    dx_field * y_field - dy_field * x_field
}

/// `[X,Y](x)` with both Jacobians taken by central differences.
pub fn fd_bracket<X, Y>(xf: X, yf: Y, x: &Vector) -> Result<Vector>
where
    X: Fn(&Vector) -> Result<Vector>,
    Y: Fn(&Vector) -> Result<Vector>,
{
    let h = bracket_step();
    let dx = numdiff::jacobian(&xf, x, h)?;
    let dy = numdiff::jacobian(&yf, x, h)?;
    Ok(bracket_from_parts(&dx, &yf(x)?, &dy, &xf(x)?))
}

/// Base step of the bracket finite differences; scaled by `max(1, ‖x‖∞)`.
fn bracket_step() -> f64 {
    1e-6
}

fn first_bracket(p: &dyn ControlAffineProblem, x: &Vector) -> Result<Vector> {
    let n = p.state_dim();
    let f0 = p.drift(x);
    let f1 = p.control_field(x);
    let df0 = p.drift_jacobian(x);
    let df1 = p.control_field_jacobian(x);
    check_len(&f0, n, "f0")?;
    check_len(&f1, n, "f1")?;
    check_shape(&df0, n, n, "df0")?;
    check_shape(&df1, n, n, "df1")?;
    Ok(bracket_from_parts(&df1, &f0, &df0, &f1))
}

/// Bracket value without consulting [`ControlAffineProblem::analytic_bracket`]:
/// `[f1,f0]` from the analytic Jacobians, second-level brackets by central differences
/// of `[f1,f0]` with step `1e-6·max(1, ‖x‖∞)`.
pub fn fd_lie_bracket(p: &dyn ControlAffineProblem, which: Bracket, x: &Vector) -> Result<Vector> {
    check_len(x, p.state_dim(), "bracket point")?;
    match which {
        Bracket::F1F0 => first_bracket(p, x),
        Bracket::F1F0F0 | Bracket::F1F0F1 => {
            let z = first_bracket(p, x)?;
            let dz = numdiff::jacobian(|y| first_bracket(p, y), x, bracket_step())?;
            let (y, dy) = if which == Bracket::F1F0F0 {
                (p.drift(x), p.drift_jacobian(x))
            } else {
                (p.control_field(x), p.control_field_jacobian(x))
            };
            Ok(bracket_from_parts(&dz, &y, &dy, &z))
        }
    }
}

/// Lie bracket at `x`, analytic when the problem provides it.
pub fn lie_bracket(p: &dyn ControlAffineProblem, which: Bracket, x: &Vector) -> Result<Vector> {
    match p.analytic_bracket(which, x) {
        Some(v) => {
            check_len(&v, p.state_dim(), "analytic bracket")?;
            Ok(v)
        }
        None => fd_lie_bracket(p, which, x),
    }
}

/// Scale-aware guard on `dg·f1`.
pub fn first_order_guard(dg: &Vector, f1: &Vector) -> f64 {
    1e-10 * (1.0 + dg.norm() * f1.norm())
}

/// Feedback control on constrained arcs, `Γ(x) = −(dg·f0)/(dg·f1)`.
pub fn gamma_control(p: &dyn ControlAffineProblem, x: &Vector) -> Result<f64> {
    let dg = p.constraint_gradient(x);
    let f0 = p.drift(x);
    let f1 = p.control_field(x);
    check_len(&dg, p.state_dim(), "dg")?;
    let den = dg.dot(&f1);
    if den.abs() < first_order_guard(&dg, &f1) {
        return Err(Error::FirstOrderViolation { x: x.iter().copied().collect(), denominator: den });
    }
    Ok(-dg.dot(&f0) / den)
}

/// Central-difference gradient of `Γ`.
pub fn gamma_gradient(p: &dyn ControlAffineProblem, x: &Vector) -> Result<Vector> {
    numdiff::gradient(|y| gamma_control(p, y), x, 1e-6)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FirstOrderReport {
    /// `min |dg(x)·f1(x)|` over the samples, `+∞` for an empty list.
    pub min_abs_denominator: f64,
    pub pass: bool,
    /// First sample below the guard, or first sample after a sign change.
    pub offending_index: Option<usize>,
}

/// Checks `|dg·f1| ≥ guard` and the absence of sign changes along sampled states.
pub fn check_first_order(p: &dyn ControlAffineProblem, xs: &[Vector]) -> FirstOrderReport {
    let mut min_abs = f64::INFINITY;
    let mut offending = None;
    let mut prev_sign: Option<f64> = None;
    for (i, x) in xs.iter().enumerate() {
        let dg = p.constraint_gradient(x);
        let f1 = p.control_field(x);
        let d = dg.dot(&f1);
        min_abs = min_abs.min(d.abs());
        let bad = d.abs() < first_order_guard(&dg, &f1) || prev_sign.is_some_and(|s| s != d.signum());
        if bad && offending.is_none() {
            offending = Some(i);
        }
        prev_sign = Some(d.signum());
    }
    FirstOrderReport { min_abs_denominator: min_abs, pass: offending.is_none(), offending_index: offending }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::Regulator;

    /// ẋ = A x + b u with `g(x) = −x1` and everything else trivial.
    struct Linear {
        a: Matrix,
        b: Vector,
    }

    impl ControlAffineProblem for Linear {
        fn name(&self) -> &str {
            "linear-test"
        }
        fn state_dim(&self) -> usize {
            self.b.len()
        }
        fn endpoint_dim(&self) -> usize {
            0
        }
        fn horizon(&self) -> f64 {
            1.0
        }
        fn bounds(&self) -> ControlBounds {
            ControlBounds::new(-1.0, 1.0)
        }
        fn drift(&self, x: &Vector) -> Vector {
            &self.a * x
        }
        fn drift_jacobian(&self, _x: &Vector) -> Matrix {
            self.a.clone()
        }
        fn control_field(&self, _x: &Vector) -> Vector {
            self.b.clone()
        }
        fn control_field_jacobian(&self, x: &Vector) -> Matrix {
            Matrix::zeros(x.len(), x.len())
        }
        fn constraint(&self, x: &Vector) -> f64 {
            -x[0]
        }
        fn constraint_gradient(&self, x: &Vector) -> Vector {
            let mut g = Vector::zeros(x.len());
            g[0] = -1.0;
            g
        }
        fn cost(&self, _x0: &Vector, _xt: &Vector) -> f64 {
            0.0
        }
        fn cost_gradient(&self, x0: &Vector, _xt: &Vector) -> (Vector, Vector) {
            (Vector::zeros(x0.len()), Vector::zeros(x0.len()))
        }
        fn endpoint(&self, _x0: &Vector, _xt: &Vector) -> Vector {
            Vector::zeros(0)
        }
        fn endpoint_jacobian(&self, x0: &Vector, _xt: &Vector) -> (Matrix, Matrix) {
            (Matrix::zeros(0, x0.len()), Matrix::zeros(0, x0.len()))
        }
    }

    fn linear() -> Linear {
        Linear {
            a: Matrix::from_row_slice(3, 3, &[1.0, 0.5, 0.0, 0.0, -2.0, 1.0, 0.3, 0.0, 0.7]),
            b: Vector::from_vec(vec![1.0, 0.0, 2.0]),
        }
    }

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn regulator_first_bracket() {
        let reg = Regulator::default();
        let x = v(&[0.3, -0.7, 2.0]);
        let b = lie_bracket(&reg, Bracket::F1F0, &x).unwrap();
        assert_eq!(b, v(&[-1.0, 0.0, 0.7]));
        // the FD route agrees with the closed form
        let fd = fd_lie_bracket(&reg, Bracket::F1F0, &x).unwrap();
        assert!((fd - b).amax() < 1e-12);
    }

    #[test]
    fn regulator_second_brackets_fd_vs_closed_form() {
        let reg = Regulator::default();
        let x = v(&[0.3, -0.7, 2.0]);
        let b00 = fd_lie_bracket(&reg, Bracket::F1F0F0, &x).unwrap();
        let b01 = fd_lie_bracket(&reg, Bracket::F1F0F1, &x).unwrap();
        assert!((b00 - v(&[0.0, 0.0, 0.3])).amax() < 1e-8);
        assert!((b01 - v(&[0.0, 0.0, -1.0])).amax() < 1e-8);
    }

    #[test]
    fn identical_fields_commute() {
        let a = Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.2]);
        let x = v(&[0.4, -1.3]);
        let field = |y: &Vector| Ok(&a * y + v(&[y[0] * y[1], 0.0]));
        let b = fd_bracket(field, field, &x).unwrap();
        assert!(b.amax() == 0.0);
    }

    #[test]
    fn linear_drift_constant_field() {
        let p = linear();
        let x = v(&[0.1, 2.0, -3.0]);
        let b = lie_bracket(&p, Bracket::F1F0, &x).unwrap();
        let expected = -(&p.a * &p.b);
        assert!((b - expected).amax() < 1e-12);
        // second-level brackets of an affine system: [[f1,f0],f0] = A²b, [[f1,f0],f1] = 0
        let b00 = lie_bracket(&p, Bracket::F1F0F0, &x).unwrap();
        assert!((b00 - &p.a * &p.a * &p.b).amax() < 1e-8);
        let b01 = lie_bracket(&p, Bracket::F1F0F1, &x).unwrap();
        assert!(b01.amax() < 1e-8);
    }

    #[test]
    fn gamma_on_regulator_is_zero() {
        let reg = Regulator::default();
        let x = v(&[0.5, -0.2, 0.1]);
        assert_eq!(gamma_control(&reg, &x).unwrap(), 0.0);
        assert!(gamma_gradient(&reg, &x).unwrap().amax() == 0.0);
    }

    #[test]
    fn gamma_for_g_minus_x1() {
        // g = −x1, f0_1 = x1 + 0.5 x2, f1_1 = 1: Γ = −(x1 + 0.5 x2)
        let p = linear();
        let x = v(&[0.8, 0.4, 1.0]);
        let gam = gamma_control(&p, &x).unwrap();
        assert!((gam + 1.0).abs() < 1e-15);
        let grad = gamma_gradient(&p, &x).unwrap();
        assert!((grad - v(&[-1.0, -0.5, 0.0])).amax() < 1e-8);
    }

    #[test]
    fn gamma_rejects_tangent_control_field() {
        let mut p = linear();
        p.b = v(&[0.0, 1.0, 0.0]);
        let err = gamma_control(&p, &v(&[1.0, 1.0, 1.0])).unwrap_err();
        assert!(matches!(err, Error::FirstOrderViolation { denominator, .. } if denominator == 0.0));
    }

    #[test]
    fn first_order_reports() {
        let reg = Regulator::default();
        let xs: Vec<Vector> = (0..10).map(|i| v(&[i as f64 * 0.1, -0.2, 0.0])).collect();
        let r = check_first_order(&reg, &xs);
        assert!(r.pass);
        assert_eq!(r.min_abs_denominator, 1.0);

        let r = check_first_order(&reg, &[]);
        assert!(r.pass && r.min_abs_denominator.is_infinite());
    }

    #[test]
    fn first_order_sign_change_is_flagged() {
        // f1 = (1, 0, 0), g = −x1 on a rotated field: dg·f1 = −cos(x2)
        struct Rot;
        impl ControlAffineProblem for Rot {
            fn name(&self) -> &str {
                "rot"
            }
            fn state_dim(&self) -> usize {
                2
            }
            fn endpoint_dim(&self) -> usize {
                0
            }
            fn horizon(&self) -> f64 {
                1.0
            }
            fn bounds(&self) -> ControlBounds {
                ControlBounds::unbounded()
            }
            fn drift(&self, _x: &Vector) -> Vector {
                Vector::zeros(2)
            }
            fn drift_jacobian(&self, _x: &Vector) -> Matrix {
                Matrix::zeros(2, 2)
            }
            fn control_field(&self, x: &Vector) -> Vector {
                Vector::from_vec(vec![x[1].cos(), x[1].sin()])
            }
            fn control_field_jacobian(&self, x: &Vector) -> Matrix {
                Matrix::from_row_slice(2, 2, &[0.0, -x[1].sin(), 0.0, x[1].cos()])
            }
            fn constraint(&self, x: &Vector) -> f64 {
                -x[0]
            }
            fn constraint_gradient(&self, _x: &Vector) -> Vector {
                Vector::from_vec(vec![-1.0, 0.0])
            }
            fn cost(&self, _a: &Vector, _b: &Vector) -> f64 {
                0.0
            }
            fn cost_gradient(&self, _a: &Vector, _b: &Vector) -> (Vector, Vector) {
                (Vector::zeros(2), Vector::zeros(2))
            }
            fn endpoint(&self, _a: &Vector, _b: &Vector) -> Vector {
                Vector::zeros(0)
            }
            fn endpoint_jacobian(&self, _a: &Vector, _b: &Vector) -> (Matrix, Matrix) {
                (Matrix::zeros(0, 2), Matrix::zeros(0, 2))
            }
        }
        // x2 sweeps through π/2 between samples 2 and 3 without landing on it
        let xs: Vec<Vector> = [1.0, 1.3, 1.5, 1.65, 2.0].iter().map(|&a| v(&[0.0, a])).collect();
        let r = check_first_order(&Rot, &xs);
        assert!(!r.pass);
        assert_eq!(r.offending_index, Some(3));
    }

    #[test]
    fn validation_catches_bad_bounds_and_shapes() {
        struct Bad;
        impl ControlAffineProblem for Bad {
            fn name(&self) -> &str {
                "bad"
            }
            fn state_dim(&self) -> usize {
                2
            }
            fn endpoint_dim(&self) -> usize {
                1
            }
            fn horizon(&self) -> f64 {
                1.0
            }
            fn bounds(&self) -> ControlBounds {
                ControlBounds::new(1.0, 1.0)
            }
            fn drift(&self, _x: &Vector) -> Vector {
                Vector::zeros(3)
            }
            fn drift_jacobian(&self, _x: &Vector) -> Matrix {
                Matrix::zeros(2, 2)
            }
            fn control_field(&self, _x: &Vector) -> Vector {
                Vector::zeros(2)
            }
            fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
                Matrix::zeros(2, 2)
            }
            fn constraint(&self, _x: &Vector) -> f64 {
                0.0
            }
            fn constraint_gradient(&self, _x: &Vector) -> Vector {
                Vector::zeros(2)
            }
            fn cost(&self, _a: &Vector, _b: &Vector) -> f64 {
                0.0
            }
            fn cost_gradient(&self, _a: &Vector, _b: &Vector) -> (Vector, Vector) {
                (Vector::zeros(2), Vector::zeros(2))
            }
            fn endpoint(&self, _a: &Vector, _b: &Vector) -> Vector {
                Vector::zeros(1)
            }
            fn endpoint_jacobian(&self, _a: &Vector, _b: &Vector) -> (Matrix, Matrix) {
                (Matrix::zeros(1, 2), Matrix::zeros(1, 2))
            }
        }
        let err = validate(&Bad).unwrap_err().to_string();
        assert!(err.contains("u_min < u_max"), "{err}");
        assert!(matches!(lie_bracket(&Bad, Bracket::F1F0, &Vector::zeros(2)), Err(Error::Config(_))));
    }

    #[test]
    fn bounds_helpers() {
        let b = ControlBounds { lower: Some(-1.0), upper: None };
        assert_eq!(b.margin(0.5), 1.5);
        assert_eq!(b.clamp(-3.0), -1.0);
        assert_eq!(b.width(), None);
        assert!((ControlBounds::new(-1.0, 1.0).margin(0.9) - 0.1).abs() < 1e-15);
    }
}
