//! Built-in problems: the state-constrained regulator, a one-arc bang problem and a
//! linear oscillator used as a test bed.

use crate::arcs::{ArcKind, ArcStructure};
use crate::error::{Error, Result};
use crate::problem::{Bracket, ControlAffineProblem, ControlBounds, Matrix, Vector};
use crate::shooting::ShootingVector;

fn v(xs: &[f64]) -> Vector {
    Vector::from_column_slice(xs)
}

/// Regulator with a lower bound on the velocity:
///
/// ```text
/// min ½∫(x1² + x2²) dt + ½x1(T)²,  ẋ1 = x2, ẋ2 = u, |u| ≤ 1, x2 ≥ −c, x(0) = (0, 1).
/// ```
///
/// The running cost is carried by a third state, so the cost is `x3(T) + ½x1(T)²`.
/// The optimal control is bang-constrained-singular: `u = −1` until `x2` hits `−c`,
/// then `u = 0` along the constraint until `x1 = c`, then the singular feedback `u = x1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Regulator {
    level: f64,
    horizon: f64,
}

impl Default for Regulator {
    fn default() -> Self {
        Self { level: 0.2, horizon: 5.0 }
    }
}

impl Regulator {
    /// `level` is `c` in `x2 ≥ −c`. The closed-form structure needs `0 < c < √2 − 1`
    /// and a horizon past the second switching time.
    pub fn new(level: f64, horizon: f64) -> Result<Self> {
        if !(level > 0.0 && level < std::f64::consts::SQRT_2 - 1.0) {
            return Err(Error::config(format!("regulator level must lie in (0, {:.6}), got {level}", 2f64.sqrt() - 1.0)));
        }
        let r = Self { level, horizon };
        let (_, b) = r.switching_times();
        if !(horizon > b) {
            return Err(Error::config(format!("regulator horizon must exceed the second switching time {b}, got {horizon}")));
        }
        Ok(r)
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    /// Entry and exit of the constrained arc.
    pub fn switching_times(&self) -> (f64, f64) {
        let c = self.level;
        let a = 1.0 + c;
        let x1a = a - 0.5 * a * a;
        (a, a + (x1a - c) / c)
    }

    fn bang_state(t: f64) -> [f64; 3] {
        let x3 = 0.5 * (t - t * t + 2.0 * t.powi(3) / 3.0 - t.powi(4) / 4.0 + t.powi(5) / 20.0);
        [t - 0.5 * t * t, 1.0 - t, x3]
    }

    fn constrained_state(&self, t: f64) -> [f64; 3] {
        let c = self.level;
        let (a, _) = self.switching_times();
        let [x1a, _, x3a] = Self::bang_state(a);
        let d = t - a;
        let x3 = x3a + 0.5 * (c * c * d + x1a * x1a * d - x1a * c * d * d + c * c * d.powi(3) / 3.0);
        [x1a - c * d, -c, x3]
    }

    fn singular_state(&self, t: f64) -> [f64; 3] {
        let c = self.level;
        let (_, b) = self.switching_times();
        let x3b = self.constrained_state(b)[2];
        let e = (-(t - b)).exp();
        [c * e, -c * e, x3b + 0.5 * c * c * (1.0 - e * e)]
    }

    /// Optimal state at time `t`.
    pub fn exact_state(&self, t: f64) -> Vector {
        let (a, b) = self.switching_times();
        v(&if t <= a {
            Self::bang_state(t)
        } else if t <= b {
            self.constrained_state(t)
        } else {
            self.singular_state(t)
        })
    }

    /// Optimal control at time `t`.
    pub fn exact_control(&self, t: f64) -> f64 {
        let (a, b) = self.switching_times();
        if t <= a {
            -1.0
        } else if t <= b {
            0.0
        } else {
            self.singular_state(t)[0]
        }
    }

    /// Costate of the transformed problem on arc `k` (0-based) at time `t`.
    ///
    /// On the constrained arc this is the costate without the constraint measure, which
    /// picks up a jump `γ dg` at the arc entry.
    pub fn exact_costate(&self, k: usize, t: f64) -> Vector {
        let c = self.level;
        let (a, b) = self.switching_times();
        let x1a = Self::bang_state(a)[0];
        let p1_c = |t: f64| c + x1a * (b - t) - 0.5 * c * ((b - a).powi(2) - (t - a).powi(2));
        let p2_c = |t: f64| {
            let (tp, bp) = (t - a, b - a);
            x1a * 0.5 * (bp - tp).powi(2) - 0.5 * c * (bp * bp * (bp - tp) - (bp.powi(3) - tp.powi(3)) / 3.0)
        };
        match k {
            0 => {
                let g = |s: f64| s * s / 2.0 - s.powi(3) / 6.0;
                let kk = |s: f64| s.powi(3) / 6.0 - s.powi(4) / 24.0;
                let p1a = p1_c(a);
                let p1 = p1a + g(a) - g(t);
                let p2 = (p1a + g(a) + 1.0) * (a - t) - (kk(a) - kk(t)) - 0.5 * (a * a - t * t);
                v(&[p1, p2, 1.0])
            }
            1 => v(&[p1_c(t), p2_c(t), 1.0]),
            _ => v(&[self.singular_state(t)[0], 0.0, 1.0]),
        }
    }

    /// Entry multiplier of the constrained arc.
    pub fn exact_gamma(&self) -> f64 {
        let (a, _) = self.switching_times();
        self.exact_costate(1, a)[1]
    }

    pub fn exact_cost(&self) -> f64 {
        let x = self.exact_state(self.horizon);
        x[2] + 0.5 * x[0] * x[0]
    }

    pub fn structure(&self) -> ArcStructure {
        let (a, b) = self.switching_times();
        ArcStructure { kinds: vec![ArcKind::BMinus, ArcKind::Constrained, ArcKind::Singular], tau: vec![a, b] }
    }

    /// Shooting unknowns of the closed-form extremal.
    pub fn exact_omega(&self) -> ShootingVector {
        let s = self.structure();
        let starts = s.times(self.horizon);
        let x0 = (0..3).map(|k| self.exact_state(starts[k])).collect();
        let p0: Vec<Vector> = (0..3).map(|k| self.exact_costate(k, starts[k])).collect();
        ShootingVector { psi: -&p0[0], x0, tau: s.tau, p0, gamma: vec![self.exact_gamma()] }
    }
}

impl ControlAffineProblem for Regulator {
    fn name(&self) -> &str {
        "regulator"
    }
    fn state_dim(&self) -> usize {
        3
    }
    fn endpoint_dim(&self) -> usize {
        3
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn bounds(&self) -> ControlBounds {
        ControlBounds::new(-1.0, 1.0)
    }
    fn drift(&self, x: &Vector) -> Vector {
        v(&[x[1], 0.0, 0.5 * (x[0] * x[0] + x[1] * x[1])])
    }
    fn drift_jacobian(&self, x: &Vector) -> Matrix {
        Matrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, x[0], x[1], 0.0])
    }
    fn control_field(&self, _x: &Vector) -> Vector {
        v(&[0.0, 1.0, 0.0])
    }
    fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(3, 3)
    }
    fn constraint(&self, x: &Vector) -> f64 {
        -x[1] - self.level
    }
    fn constraint_gradient(&self, _x: &Vector) -> Vector {
        v(&[0.0, -1.0, 0.0])
    }
    fn cost(&self, _x0: &Vector, xt: &Vector) -> f64 {
        xt[2] + 0.5 * xt[0] * xt[0]
    }
    fn cost_gradient(&self, _x0: &Vector, xt: &Vector) -> (Vector, Vector) {
        (Vector::zeros(3), v(&[xt[0], 0.0, 1.0]))
    }
    fn endpoint(&self, x0: &Vector, _xt: &Vector) -> Vector {
        x0 - v(&[0.0, 1.0, 0.0])
    }
    fn endpoint_jacobian(&self, _x0: &Vector, _xt: &Vector) -> (Matrix, Matrix) {
        (Matrix::identity(3, 3), Matrix::zeros(3, 3))
    }
    fn analytic_bracket(&self, which: Bracket, x: &Vector) -> Option<Vector> {
        Some(match which {
            Bracket::F1F0 => v(&[-1.0, 0.0, -x[1]]),
            Bracket::F1F0F0 => v(&[0.0, 0.0, x[0]]),
            Bracket::F1F0F1 => v(&[0.0, 0.0, -1.0]),
        })
    }
    fn fixed_initial_state(&self) -> Option<Vector> {
        Some(v(&[0.0, 1.0, 0.0]))
    }
}

/// `ẋ = u` on `[0, 1]`, `|u| ≤ 1`, `x(0) = 0`, minimize `x(1)`; the extremal is `u ≡ −1`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ToyBang;

impl ToyBang {
    pub fn structure(&self) -> ArcStructure {
        ArcStructure { kinds: vec![ArcKind::BMinus], tau: vec![] }
    }

    pub fn exact_omega(&self) -> ShootingVector {
        ShootingVector { x0: vec![v(&[0.0])], tau: vec![], p0: vec![v(&[1.0])], psi: v(&[-1.0]), gamma: vec![] }
    }
}

impl ControlAffineProblem for ToyBang {
    fn name(&self) -> &str {
        "toy-bang"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn endpoint_dim(&self) -> usize {
        1
    }
    fn horizon(&self) -> f64 {
        1.0
    }
    fn bounds(&self) -> ControlBounds {
        ControlBounds::new(-1.0, 1.0)
    }
    fn drift(&self, _x: &Vector) -> Vector {
        Vector::zeros(1)
    }
    fn drift_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }
    fn control_field(&self, _x: &Vector) -> Vector {
        v(&[1.0])
    }
    fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(1, 1)
    }
    fn constraint(&self, x: &Vector) -> f64 {
        -x[0] - 2.0
    }
    fn constraint_gradient(&self, _x: &Vector) -> Vector {
        v(&[-1.0])
    }
    fn cost(&self, _x0: &Vector, xt: &Vector) -> f64 {
        xt[0]
    }
    fn cost_gradient(&self, _x0: &Vector, _xt: &Vector) -> (Vector, Vector) {
        (Vector::zeros(1), v(&[1.0]))
    }
    fn endpoint(&self, x0: &Vector, _xt: &Vector) -> Vector {
        x0.clone()
    }
    fn endpoint_jacobian(&self, _x0: &Vector, _xt: &Vector) -> (Matrix, Matrix) {
        (Matrix::identity(1, 1), Matrix::zeros(1, 1))
    }
    fn fixed_initial_state(&self) -> Option<Vector> {
        Some(Vector::zeros(1))
    }
}

/// Harmonic oscillator `ẋ1 = x2, ẋ2 = −x1 + u` with `x1 ≤ 2`, linear cost `c·x(T)` and
/// `x(0) = a`. Every map is affine, which makes exact Jacobians available for testing.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTest {
    pub initial: Vector,
    pub weights: Vector,
    pub horizon: f64,
    pub bounds: ControlBounds,
}

impl Default for LinearTest {
    fn default() -> Self {
        Self { initial: v(&[1.0, 0.0]), weights: v(&[1.0, 0.5]), horizon: 3.0, bounds: ControlBounds::new(-1.0, 1.0) }
    }
}

impl LinearTest {
    pub fn with_bounds(mut self, bounds: ControlBounds) -> Self {
        self.bounds = bounds;
        self
    }

    pub fn system_matrix() -> Matrix {
        Matrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
    }
}

impl ControlAffineProblem for LinearTest {
    fn name(&self) -> &str {
        "linear"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn endpoint_dim(&self) -> usize {
        2
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn bounds(&self) -> ControlBounds {
        self.bounds
    }
    fn drift(&self, x: &Vector) -> Vector {
        Self::system_matrix() * x
    }
    fn drift_jacobian(&self, _x: &Vector) -> Matrix {
        Self::system_matrix()
    }
    fn control_field(&self, _x: &Vector) -> Vector {
        v(&[0.0, 1.0])
    }
    fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
        Matrix::zeros(2, 2)
    }
    fn constraint(&self, x: &Vector) -> f64 {
        x[0] - 2.0
    }
    fn constraint_gradient(&self, _x: &Vector) -> Vector {
        v(&[1.0, 0.0])
    }
    fn cost(&self, _x0: &Vector, xt: &Vector) -> f64 {
        self.weights.dot(xt)
    }
    fn cost_gradient(&self, _x0: &Vector, _xt: &Vector) -> (Vector, Vector) {
        (Vector::zeros(2), self.weights.clone())
    }
    fn endpoint(&self, x0: &Vector, _xt: &Vector) -> Vector {
        x0 - &self.initial
    }
    fn endpoint_jacobian(&self, _x0: &Vector, _xt: &Vector) -> (Matrix, Matrix) {
        (Matrix::identity(2, 2), Matrix::zeros(2, 2))
    }
    fn fixed_initial_state(&self) -> Option<Vector> {
        Some(self.initial.clone())
    }
}

/// Registry of the built-in problems.
#[derive(Clone, Debug, PartialEq)]
pub enum Builtin {
    Regulator(Regulator),
    ToyBang(ToyBang),
    Linear(LinearTest),
}

impl Builtin {
    pub const NAMES: [&'static str; 3] = ["regulator", "toy-bang", "linear"];

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "regulator" => Ok(Builtin::Regulator(Regulator::default())),
            "toy-bang" => Ok(Builtin::ToyBang(ToyBang)),
            "linear" => Ok(Builtin::Linear(LinearTest::default())),
            other => Err(Error::config(format!("unknown problem {other:?}; built-in problems are {:?}", Self::NAMES))),
        }
    }

    pub fn problem(&self) -> &dyn ControlAffineProblem {
        match self {
            Builtin::Regulator(p) => p,
            Builtin::ToyBang(p) => p,
            Builtin::Linear(p) => p,
        }
    }

    /// Known optimal structure and shooting unknowns, when available.
    pub fn analytic(&self) -> Option<(ArcStructure, ShootingVector)> {
        match self {
            Builtin::Regulator(p) => Some((p.structure(), p.exact_omega())),
            Builtin::ToyBang(p) => Some((p.structure(), p.exact_omega())),
            Builtin::Linear(_) => None,
        }
    }
}
