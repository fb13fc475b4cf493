//! Penalized direct transcription, used to guess the arc structure and the shooting unknowns.
//!
//! Controls are piecewise constant on a uniform grid and the states follow explicit Euler.
//! The objective is
//!
//! ```text
//! J(u, x0) = φ(x0, xK) + w Σ max(0, g(x_i))² Δt + w |Φ(x0, xK)|²
//! ```
//!
//! with `x0` a decision variable only when the problem does not pin the initial state.

use serde::{Deserialize, Serialize};

use crate::arcs::{ArcKind, ArcStructure, SampledTrajectory};
use crate::dynamics::propagate_arc;
use crate::error::{Error, Result};
use nalgebra::SymmetricEigen;

use crate::problem::{ControlAffineProblem, Matrix, Vector};
use crate::shooting::{Layout, ShootingVector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirectSolveConfig {
    /// Number of control intervals.
    pub grid_size: usize,
    pub penalty_weight: f64,
    /// First trial step along the Newton direction, at most 1.
    pub initial_step: f64,
    /// Step reduction per failed Armijo test.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub max_iters: usize,
    /// Stop when the projected-gradient step `|P(v − ∇J) − v|∞` falls below this.
    pub tol: f64,
}

impl Default for DirectSolveConfig {
    fn default() -> Self {
        Self {
            grid_size: 100,
            penalty_weight: 1e4,
            initial_step: 1.0,
            backtrack: 0.5,
            max_backtracks: 40,
            max_iters: 200,
            tol: 1e-9,
        }
    }
}

impl DirectSolveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid_size < 10 {
            return Err(Error::config(format!("grid_size must be at least 10, got {}", self.grid_size)));
        }
        if !(self.penalty_weight > 0.0) {
            return Err(Error::config("penalty_weight must be positive"));
        }
        if !(self.initial_step > 0.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::config("initial_step must be positive and backtrack in (0, 1)"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirectSolution {
    /// Grid nodes `t_0 = 0, …, t_K = T`.
    pub t: Vec<f64>,
    /// Control on `[t_i, t_{i+1})`.
    pub u: Vec<f64>,
    pub x: Vec<Vector>,
    /// Discrete adjoint `∂J/∂x_i`.
    pub lambda: Vec<Vector>,
    /// `φ(x0, xK)`.
    pub cost: f64,
    /// `J` including the penalties.
    pub objective: f64,
    /// `Σ max(0, g(x_i))² Δt`.
    pub violation: f64,
    /// `J` after every accepted iteration, starting with the initial guess.
    pub history: Vec<f64>,
    pub iterations: usize,
    /// Set when the line search found no decrease.
    pub stalled: bool,
}

impl DirectSolution {
    /// Node samples in the format read by structure detection; the last node repeats the
    /// last control.
    pub fn sampled(&self) -> SampledTrajectory {
        let mut u = self.u.clone();
        u.push(*self.u.last().expect("non-empty grid"));
        SampledTrajectory { t: self.t.clone(), u, x: self.x.clone() }
    }

    fn interval(&self, t: f64) -> (usize, f64) {
        let k = self.u.len();
        let dt = self.t[k] / k as f64;
        let pos = (t / dt).clamp(0.0, k as f64);
        let i = (pos.floor() as usize).min(k - 1);
        (i, pos - i as f64)
    }

    pub fn state_at(&self, t: f64) -> Vector {
        let (i, a) = self.interval(t);
        &self.x[i] * (1.0 - a) + &self.x[i + 1] * a
    }

    pub fn adjoint_at(&self, t: f64) -> Vector {
        let (i, a) = self.interval(t);
        &self.lambda[i] * (1.0 - a) + &self.lambda[i + 1] * a
    }
}

struct Transcription<'a> {
    p: &'a dyn ControlAffineProblem,
    k: usize,
    dt: f64,
    w: f64,
    fixed_x0: Option<Vector>,
}

struct Evaluation {
    x: Vec<Vector>,
    objective: f64,
    cost: f64,
    violation: f64,
}

impl Transcription<'_> {
    fn split(&self, v: &Vector) -> (Vec<f64>, Vector) {
        let u = v.rows(0, self.k).iter().copied().collect();
        let x0 = match &self.fixed_x0 {
            Some(x0) => x0.clone(),
            None => v.rows(self.k, self.p.state_dim()).into_owned(),
        };
        (u, x0)
    }

    fn evaluate(&self, v: &Vector) -> Result<Evaluation> {
        let (u, x0) = self.split(v);
        let mut x = Vec::with_capacity(self.k + 1);
        x.push(x0);
        for (i, &ui) in u.iter().enumerate() {
            let xi = &x[i];
            let next = xi + (self.p.drift(xi) + self.p.control_field(xi) * ui) * self.dt;
            if next.iter().any(|c| !c.is_finite()) {
                return Err(Error::NonFiniteState { step: i + 1 });
            }
            x.push(next);
        }
        let violation: f64 = x.iter().map(|xi| self.p.constraint(xi).max(0.0).powi(2)).sum::<f64>() * self.dt;
        let cost = self.p.cost(&x[0], &x[self.k]);
        let phi = self.p.endpoint(&x[0], &x[self.k]);
        let objective = cost + self.w * (violation + phi.norm_squared());
        Ok(Evaluation { x, objective, cost, violation })
    }

    /// Gradient of `J` by the discrete adjoint, with the adjoint itself.
    fn gradient(&self, v: &Vector, x: &[Vector]) -> (Vector, Vec<Vector>) {
        let (u, _) = self.split(v);
        let (x0, xk) = (&x[0], &x[self.k]);
        let phi = self.p.endpoint(x0, xk);
        let (j0, j1) = self.p.endpoint_jacobian(x0, xk);
        let (c0, c1) = self.p.cost_gradient(x0, xk);
        let direct = |i: usize| self.p.constraint_gradient(&x[i]) * (2.0 * self.w * self.dt * self.p.constraint(&x[i]).max(0.0));

        let mut lambda = vec![Vector::zeros(x0.len()); self.k + 1];
        lambda[self.k] = direct(self.k) + c1 + j1.tr_mul(&phi) * (2.0 * self.w);
        let mut grad = Vector::zeros(v.len());
        for i in (0..self.k).rev() {
            let xi = &x[i];
            grad[i] = self.dt * self.p.control_field(xi).dot(&lambda[i + 1]);
            let step = (self.p.drift_jacobian(xi) + self.p.control_field_jacobian(xi) * u[i]) * self.dt;
            lambda[i] = direct(i) + &lambda[i + 1] + step.tr_mul(&lambda[i + 1]);
        }
        lambda[0] += c0 + j0.tr_mul(&phi) * (2.0 * self.w);
        if self.fixed_x0.is_none() {
            grad.rows_mut(self.k, x0.len()).copy_from(&lambda[0]);
        }
        (grad, lambda)
    }

    /// Step minimizing the local quadratic model `g·d + ½dᵀHd` inside the bounds, with `H`
    /// the finite-difference Hessian made positive definite by taking its eigenvalues in
    /// absolute value and flooring them.
    fn newton_step(&self, v: &Vector, grad: &Vector) -> Result<Vector> {
        let m = v.len();
        let grad_at = |y: &Vector| -> Result<Vector> { Ok(self.gradient(y, &self.evaluate(y)?.x).0) };
        let mut h = Matrix::zeros(m, m);
        for j in 0..m {
            let step = 1e-6 * (1.0 + v[j].abs());
            let mut plus = v.clone();
            let mut minus = v.clone();
            plus[j] += step;
            minus[j] -= step;
            h.set_column(j, &((grad_at(&plus)? - grad_at(&minus)?) / (2.0 * step)));
        }
        let eig = SymmetricEigen::new((&h + h.transpose()) * 0.5);
        // a vanishing Hessian (linear objective) falls back to the gradient metric
        let top = eig.eigenvalues.amax();
        let floor = if top > 0.0 { 1e-10 * top } else { 1.0 };
        let vals = eig.eigenvalues.map(|l| l.abs().max(floor));
        let h = &eig.eigenvectors * Matrix::from_diagonal(&vals) * eig.eigenvectors.transpose();

        let b = self.p.bounds();
        let lo = Vector::from_fn(m, |i, _| if i < self.k { b.lower.map_or(f64::NEG_INFINITY, |l| l - v[i]) } else { f64::NEG_INFINITY });
        let hi = Vector::from_fn(m, |i, _| if i < self.k { b.upper.map_or(f64::INFINITY, |u| u - v[i]) } else { f64::INFINITY });
        Ok(box_qp(&h, grad, &lo, &hi))
    }

    fn project(&self, v: &mut Vector) {
        let b = self.p.bounds();
        for i in 0..self.k {
            v[i] = b.clamp(v[i]);
        }
    }
}

/// Minimizes the penalized transcription by a projected Newton method: each step solves
/// the bound-constrained quadratic model, then a monotone Armijo backtracking runs along it.
pub fn direct_solve(p: &dyn ControlAffineProblem, cfg: &DirectSolveConfig) -> Result<DirectSolution> {
    cfg.validate()?;
    let n = p.state_dim();
    let k = cfg.grid_size;
    let tr = Transcription { p, k, dt: p.horizon() / k as f64, w: cfg.penalty_weight, fixed_x0: p.fixed_initial_state() };

    let b = p.bounds();
    let u0 = match (b.lower, b.upper) {
        (Some(l), Some(h)) => 0.5 * (l + h),
        _ => 0.0,
    };
    let mut v = Vector::from_element(k + if tr.fixed_x0.is_some() { 0 } else { n }, u0);
    if tr.fixed_x0.is_none() {
        v.rows_mut(k, n).fill(0.0);
    }

    let mut ev = tr.evaluate(&v)?;
    let (mut grad, mut lambda) = tr.gradient(&v, &ev.x);
    let mut history = vec![ev.objective];
    let mut stalled = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        let mut probe = &v - &grad;
        tr.project(&mut probe);
        if (&probe - &v).amax() <= cfg.tol {
            break;
        }
        let d = tr.newton_step(&v, &grad)?;
        let slope = grad.dot(&d);
        let mut accepted = None;
        let mut a = cfg.initial_step.min(1.0);
        for _ in 0..=cfg.max_backtracks {
            if !(slope < 0.0) {
                break;
            }
            let mut trial = &v + &d * a;
            tr.project(&mut trial);
            if let Ok(te) = tr.evaluate(&trial) {
                if te.objective <= ev.objective + 1e-4 * a * slope {
                    accepted = Some((trial, te));
                    break;
                }
            }
            a *= cfg.backtrack;
        }
        let Some((trial, te)) = accepted else {
            stalled = true;
            break;
        };
        let (g_new, l_new) = tr.gradient(&trial, &te.x);
        grad = g_new;
        lambda = l_new;
        v = trial;
        ev = te;
        history.push(ev.objective);
        iterations += 1;
    }

    let (u, _) = tr.split(&v);
    Ok(DirectSolution {
        t: (0..=k).map(|i| p.horizon() * i as f64 / k as f64).collect(),
        u,
        x: ev.x,
        lambda,
        cost: ev.cost,
        objective: ev.objective,
        violation: ev.violation,
        history,
        iterations,
        stalled,
    })
}

/// Shooting unknowns for `structure` read off a direct solution.
///
/// States and costates are interpolated at the arc entries. On constrained arcs the
/// penalty distorts the discrete adjoint, so their initial costate is obtained by
/// integrating the arc equations backward from the exit. Entry multipliers follow from the
/// costate jumps and `Ψ` from the initial transversality condition, both by least squares.
pub fn initial_guess(
    p: &dyn ControlAffineProblem,
    sol: &DirectSolution,
    structure: &ArcStructure,
    steps: usize,
) -> Result<ShootingVector> {
    structure.validate_for(p)?;
    let times = structure.times(p.horizon());
    let kinds = &structure.kinds;
    let layout = Layout::new(p, kinds);
    let x0: Vec<Vector> = times[..kinds.len()].iter().map(|&t| sol.state_at(t)).collect();
    let mut p0 = Vec::with_capacity(kinds.len());
    for (k, &kind) in kinds.iter().enumerate() {
        if kind == ArcKind::Constrained {
            let (a, b) = (times[k], times[k + 1]);
            let back = propagate_arc(p, kind, a - b, &sol.state_at(b), &sol.adjoint_at(b), steps)?;
            p0.push(back.p_end().clone());
        } else {
            p0.push(sol.adjoint_at(times[k]));
        }
    }

    let mut gamma = Vec::with_capacity(layout.constrained);
    for (k, &kind) in kinds.iter().enumerate() {
        if kind != ArcKind::Constrained {
            continue;
        }
        if k == 0 {
            gamma.push(0.0);
            continue;
        }
        let before = sol.adjoint_at(times[k]);
        let dg = p.constraint_gradient(&x0[k]);
        let den = dg.norm_squared();
        gamma.push(if den > 0.0 { dg.dot(&(before - &p0[k])) / den } else { 0.0 });
    }

    let xt = sol.x.last().expect("non-empty grid");
    let (c0, _) = p.cost_gradient(&x0[0], xt);
    let (j0, _) = p.endpoint_jacobian(&x0[0], xt);
    let rhs = -(&p0[0] + c0);
    let psi = least_squares(&j0.transpose(), &rhs);

    Ok(ShootingVector { x0, tau: structure.tau.clone(), p0, psi, gamma })
}

#[derive(Clone, Copy, PartialEq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

/// Minimizes `g·d + ½dᵀHd` over `lo ≤ d ≤ hi` for positive definite `H` and `lo ≤ 0 ≤ hi`,
/// by a primal active-set method started from `d = 0`.
fn box_qp(h: &Matrix, g: &Vector, lo: &Vector, hi: &Vector) -> Vector {
    let m = g.len();
    let mut d = Vector::zeros(m);
    let mut state: Vec<Bound> = (0..m)
        .map(|i| {
            if lo[i] >= 0.0 && g[i] > 0.0 {
                Bound::Lower
            } else if hi[i] <= 0.0 && g[i] < 0.0 {
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();
    let tol = 1e-13 * (1.0 + g.amax());
    for _ in 0..20 * m.max(1) {
        for i in 0..m {
            match state[i] {
                Bound::Lower => d[i] = lo[i],
                Bound::Upper => d[i] = hi[i],
                Bound::Free => {}
            }
        }
        let free: Vec<usize> = (0..m).filter(|&i| state[i] == Bound::Free).collect();
        let mut target = d.clone();
        if !free.is_empty() {
            let mut fixed = d.clone();
            for &i in &free {
                fixed[i] = 0.0;
            }
            let rhs = -(g + h * fixed);
            let hff = Matrix::from_fn(free.len(), free.len(), |r, c| h[(free[r], free[c])]);
            let rf = Vector::from_iterator(free.len(), free.iter().map(|&i| rhs[i]));
            let Some(y) = hff.cholesky().map(|c| c.solve(&rf)) else {
                return d;
            };
            for (r, &i) in free.iter().enumerate() {
                target[i] = y[r];
            }
        }
        // walk towards the equality-constrained minimizer until a bound blocks
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let delta = target[i] - d[i];
            let limit = if delta < 0.0 { (lo[i] - d[i]) / delta } else if delta > 0.0 { (hi[i] - d[i]) / delta } else { f64::INFINITY };
            if limit < alpha {
                alpha = limit.max(0.0);
                blocking = Some((i, if delta < 0.0 { Bound::Lower } else { Bound::Upper }));
            }
        }
        d += (&target - &d) * alpha;
        if let Some((i, side)) = blocking {
            state[i] = side;
            continue;
        }
        let r = g + h * &d;
        let worst = (0..m)
            .filter_map(|i| match state[i] {
                Bound::Lower if r[i] < -tol => Some((i, -r[i])),
                Bound::Upper if r[i] > tol => Some((i, r[i])),
                _ => None,
            })
            .max_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((i, _)) => state[i] = Bound::Free,
            None => break,
        }
    }
    d
}

fn least_squares(a: &Matrix, b: &Vector) -> Vector {
    if a.ncols() == 0 {
        return Vector::zeros(0);
    }
    a.clone().svd(true, true).solve(b, 1e-12).unwrap_or_else(|_| Vector::zeros(a.ncols()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{Regulator, ToyBang};
    use crate::problem::ControlBounds;

    #[test]
    fn box_qp_matches_hand_solutions() {
        let h = Matrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let g = Vector::from_vec(vec![-4.0, 1.0]);
        let inf = f64::INFINITY;
        // unconstrained minimizer −H⁻¹g = (18/7, −16/7)
        let d = box_qp(&h, &g, &Vector::from_element(2, -inf), &Vector::from_element(2, inf));
        assert!((d[0] - 18.0 / 7.0).abs() < 1e-12 && (d[1] + 16.0 / 7.0).abs() < 1e-12);
        // d1 ≥ −1 binds: then d0 = (4 + 0.5)/2
        let d = box_qp(&h, &g, &Vector::from_vec(vec![-inf, -1.0]), &Vector::from_element(2, inf));
        assert!((d[0] - 2.25).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
        // d0 ≤ 1 and d1 ≥ −1: the multiplier of d1 becomes wrong-signed, so d1 is released
        let d = box_qp(&h, &g, &Vector::from_vec(vec![-inf, -1.0]), &Vector::from_vec(vec![1.0, inf]));
        assert!((d[0] - 1.0).abs() < 1e-12 && (d[1] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_is_checked() {
        let bad = DirectSolveConfig { grid_size: 5, ..Default::default() };
        assert!(direct_solve(&ToyBang, &bad).is_err());
        let bad = DirectSolveConfig { penalty_weight: 0.0, ..Default::default() };
        assert!(direct_solve(&ToyBang, &bad).is_err());
    }

    #[test]
    fn toy_bang_goes_to_the_lower_bound() {
        let sol = direct_solve(&ToyBang, &DirectSolveConfig { grid_size: 20, ..Default::default() }).unwrap();
        assert!(sol.u.iter().all(|&u| (u - ToyBang.bounds().lower.unwrap()).abs() < 1e-12));
        assert!(!sol.stalled);
    }

    #[test]
    fn adjoint_gradient_matches_finite_differences() {
        let reg = Regulator::default();
        let tr = Transcription { p: &reg, k: 12, dt: reg.horizon() / 12.0, w: 50.0, fixed_x0: reg.fixed_initial_state() };
        let v = Vector::from_fn(12, |i, _| -0.9 + 0.1 * (i as f64 * 0.7).sin());
        let ev = tr.evaluate(&v).unwrap();
        // drive x2 below the level so that the penalty is active
        assert!(ev.violation > 0.0);
        let (g, _) = tr.gradient(&v, &ev.x);
        for i in 0..12 {
            let mut a = v.clone();
            let mut b = v.clone();
            a[i] += 1e-6;
            b[i] -= 1e-6;
            let fd = (tr.evaluate(&a).unwrap().objective - tr.evaluate(&b).unwrap().objective) / 2e-6;
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{i}: {fd} vs {}", g[i]);
        }
    }

    #[test]
    fn objective_never_increases() {
        let reg = Regulator::default();
        let sol = direct_solve(&reg, &DirectSolveConfig { grid_size: 40, max_iters: 300, ..Default::default() }).unwrap();
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(sol.objective < sol.history[0]);
    }

    #[test]
    fn regulator_cost_converges_at_first_order_in_the_grid() {
        // Euler is first order, so 2J(2K) − J(K) removes the leading error term
        let reg = Regulator::default();
        let cost = |k: usize| direct_solve(&reg, &DirectSolveConfig { grid_size: k, ..Default::default() }).unwrap().cost;
        let (coarse, fine) = (cost(50), cost(100));
        let exact = reg.exact_cost();
        assert!(fine < coarse && fine > exact);
        assert!(((2.0 * fine - coarse) - exact).abs() < 0.01 * exact);
    }

    #[test]
    fn regulator_guess_is_close_and_shooting_converges() {
        use crate::arcs::{detect_structure, DetectTolerances};
        use crate::gauss_newton::{gauss_newton, GaussNewtonOptions};
        use crate::shooting::Shooting;

        let reg = Regulator::default();
        let sol = direct_solve(&reg, &DirectSolveConfig::default()).unwrap();
        let st = detect_structure(&reg, &sol.sampled(), &DetectTolerances::default()).unwrap();
        assert_eq!(st.kinds, reg.structure().kinds);
        let guess = initial_guess(&reg, &sol, &st, 100).unwrap();
        let exact = reg.exact_omega();
        assert!((guess.pack() - exact.pack()).amax() < 0.2);
        let sh = Shooting::new(&reg, st.kinds, 100).unwrap();
        let (w, _) = gauss_newton(&sh, &guess.pack(), &GaussNewtonOptions::default()).unwrap();
        assert!((w[9] - 1.2).abs() < 1e-6 && (w[10] - 2.6).abs() < 1e-6);
    }

    #[test]
    fn heavier_penalty_reduces_violation() {
        let reg = Regulator::default();
        let run = |w: f64| direct_solve(&reg, &DirectSolveConfig { grid_size: 50, penalty_weight: w, ..Default::default() }).unwrap();
        assert!(run(1e4).violation < run(1e2).violation);
    }

    struct Idle;

    impl ControlAffineProblem for Idle {
        fn name(&self) -> &str {
            "idle"
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
            ControlBounds::new(-1.0, 3.0)
        }
        fn drift(&self, _x: &Vector) -> Vector {
            Vector::zeros(1)
        }
        fn drift_jacobian(&self, _x: &Vector) -> Matrix {
            Matrix::zeros(1, 1)
        }
        fn control_field(&self, _x: &Vector) -> Vector {
            Vector::from_element(1, 1.0)
        }
        fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
            Matrix::zeros(1, 1)
        }
        fn constraint(&self, x: &Vector) -> f64 {
            x[0] - 10.0
        }
        fn constraint_gradient(&self, _x: &Vector) -> Vector {
            Vector::from_element(1, 1.0)
        }
        fn cost(&self, _x0: &Vector, _xt: &Vector) -> f64 {
            0.0
        }
        fn cost_gradient(&self, _x0: &Vector, _xt: &Vector) -> (Vector, Vector) {
            (Vector::zeros(1), Vector::zeros(1))
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

    #[test]
    fn zero_cost_keeps_the_initial_control() {
        let sol = direct_solve(&Idle, &DirectSolveConfig { grid_size: 10, ..Default::default() }).unwrap();
        assert_eq!(sol.iterations, 0);
        assert!(sol.u.iter().all(|&u| u == 1.0));
        assert_eq!(sol.cost, 0.0);
    }

    #[test]
    fn free_initial_state_is_pulled_to_the_endpoint_constraint() {
        struct Free;
        impl ControlAffineProblem for Free {
            fn name(&self) -> &str {
                "free"
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
                Vector::from_element(1, 1.0)
            }
            fn control_field_jacobian(&self, _x: &Vector) -> Matrix {
                Matrix::zeros(1, 1)
            }
            fn constraint(&self, x: &Vector) -> f64 {
                x[0] - 10.0
            }
            fn constraint_gradient(&self, _x: &Vector) -> Vector {
                Vector::from_element(1, 1.0)
            }
            fn cost(&self, _x0: &Vector, xt: &Vector) -> f64 {
                xt[0]
            }
            fn cost_gradient(&self, _x0: &Vector, _xt: &Vector) -> (Vector, Vector) {
                (Vector::zeros(1), Vector::from_element(1, 1.0))
            }
            fn endpoint(&self, x0: &Vector, _xt: &Vector) -> Vector {
                Vector::from_element(1, x0[0] - 2.0)
            }
            fn endpoint_jacobian(&self, _x0: &Vector, _xt: &Vector) -> (Matrix, Matrix) {
                (Matrix::identity(1, 1), Matrix::zeros(1, 1))
            }
        }
        let cfg = DirectSolveConfig { grid_size: 10, penalty_weight: 1e3, ..Default::default() };
        let sol = direct_solve(&Free, &cfg).unwrap();
        // minimizing x0 − 1 + w (x0 − 2)² gives x0 = 2 − 1/(2w)
        assert!((sol.x[0][0] - (2.0 - 0.5e-3)).abs() < 1e-6);
        assert!(sol.u.iter().all(|&u| u == -1.0));
    }
}
