//! Per-arc state/costate dynamics of the transformed problem.
//!
//! Every arc `k` is rescaled to `s ∈ [0, 1]` with its own copy of the state `x^k` and
//! costate `p^k`; the arc duration `dt_k = τ_k − τ_{k−1}` multiplies the vector field.
//! The control is eliminated on each arc: fixed to a bound on bang arcs, the feedback
//! `Γ(x)` on constrained arcs, and `−p[[f1,f0],f0] / p[[f1,f0],f1]` on singular arcs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::arcs::{ArcKind, ArcStructure};
use crate::error::{Error, Result};
use crate::problem::{gamma_control, gamma_gradient, lie_bracket, Bracket, ControlAffineProblem, Vector};

fn singular_guard(costate: &Vector, b: &Vector) -> f64 {
    1e-10 * (1.0 + costate.norm() * b.norm())
}

/// `p·[[f1,f0],f1](x)`; the strengthened Legendre-Clebsch condition asks for it to be negative.
pub fn legendre_clebsch(p: &dyn ControlAffineProblem, x: &Vector, costate: &Vector) -> Result<f64> {
    Ok(costate.dot(&lie_bracket(p, Bracket::F1F0F1, x)?))
}

/// Control rule `w^k` of an arc.
pub fn arc_control(p: &dyn ControlAffineProblem, kind: ArcKind, x: &Vector, costate: &Vector) -> Result<f64> {
    let bounds = p.bounds();
    match kind {
        ArcKind::BMinus => bounds.lower.ok_or_else(|| Error::InvalidStructure("B- arc without a lower bound".into())),
        ArcKind::BPlus => bounds.upper.ok_or_else(|| Error::InvalidStructure("B+ arc without an upper bound".into())),
        ArcKind::Constrained => gamma_control(p, x),
        ArcKind::Singular => {
            let b0 = lie_bracket(p, Bracket::F1F0F0, x)?;
            let b1 = lie_bracket(p, Bracket::F1F0F1, x)?;
            let den = costate.dot(&b1);
            if den.abs() < singular_guard(costate, &b1) {
                return Err(Error::SingularDenominator { x: x.iter().copied().collect(), denominator: den });
            }
            Ok(-costate.dot(&b0) / den)
        }
    }
}

/// `H^k = p·(f0(x) + w f1(x))` with `w` from [`arc_control`].
pub fn arc_hamiltonian(p: &dyn ControlAffineProblem, kind: ArcKind, x: &Vector, costate: &Vector) -> Result<f64> {
    let w = arc_control(p, kind, x, costate)?;
    Ok(costate.dot(&p.drift(x)) + w * costate.dot(&p.control_field(x)))
}

/// `D_x H^k` for a given control value. On constrained arcs the feedback term
/// `(p·f1) ∇Γ` is included; on singular arcs `u` is held fixed.
pub fn hamiltonian_state_gradient(
    p: &dyn ControlAffineProblem,
    kind: ArcKind,
    x: &Vector,
    costate: &Vector,
    w: f64,
) -> Result<Vector> {
    let mut grad = p.drift_jacobian(x).tr_mul(costate) + p.control_field_jacobian(x).tr_mul(costate) * w;
    if kind == ArcKind::Constrained {
        grad += gamma_gradient(p, x)? * costate.dot(&p.control_field(x));
    }
    Ok(grad)
}

/// Right-hand side of the coupled system on normalized time:
/// `dx/ds = dt (f0 + w f1)`, `dp/ds = −dt D_x H^k`.
pub fn arc_rhs(
    p: &dyn ControlAffineProblem,
    kind: ArcKind,
    dt: f64,
    x: &Vector,
    costate: &Vector,
) -> Result<(Vector, Vector)> {
    let w = arc_control(p, kind, x, costate)?;
    let dx = (p.drift(x) + p.control_field(x) * w) * dt;
    let dp = hamiltonian_state_gradient(p, kind, x, costate, w)? * (-dt);
    Ok((dx, dp))
}

/// State, costate and control of one arc on the uniform grid `s_i = i/M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ArcGrid {
    pub kind: ArcKind,
    pub dt: f64,
    pub x: Vec<Vector>,
    pub p: Vec<Vector>,
    pub w: Vec<f64>,
}

impl ArcGrid {
    pub fn steps(&self) -> usize {
        self.x.len() - 1
    }

    pub fn s(&self, i: usize) -> f64 {
        i as f64 / self.steps() as f64
    }

    pub fn x_end(&self) -> &Vector {
        self.x.last().expect("grid has nodes")
    }

    pub fn p_end(&self) -> &Vector {
        self.p.last().expect("grid has nodes")
    }
}

/// Classical RK4 with step `1/M` on the coupled `2n` system.
pub fn propagate_arc(
    p: &dyn ControlAffineProblem,
    kind: ArcKind,
    dt: f64,
    x0: &Vector,
    p0: &Vector,
    steps: usize,
) -> Result<ArcGrid> {
    if steps == 0 {
        return Err(Error::config("propagate_arc needs at least one step"));
    }
    let h = 1.0 / steps as f64;
    let mut xs = Vec::with_capacity(steps + 1);
    let mut ps = Vec::with_capacity(steps + 1);
    let mut ws = Vec::with_capacity(steps + 1);
    let mut x = x0.clone();
    let mut c = p0.clone();
    for i in 0..=steps {
        if x.iter().chain(c.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { step: i });
        }
        ws.push(arc_control(p, kind, &x, &c)?);
        xs.push(x.clone());
        ps.push(c.clone());
        if i == steps {
            break;
        }
        let (k1x, k1p) = arc_rhs(p, kind, dt, &x, &c)?;
        let (k2x, k2p) = arc_rhs(p, kind, dt, &(&x + &k1x * (0.5 * h)), &(&c + &k1p * (0.5 * h)))?;
        let (k3x, k3p) = arc_rhs(p, kind, dt, &(&x + &k2x * (0.5 * h)), &(&c + &k2p * (0.5 * h)))?;
        let (k4x, k4p) = arc_rhs(p, kind, dt, &(&x + &k3x * h), &(&c + &k3p * h))?;
        x += (k1x + k2x * 2.0 + k3x * 2.0 + k4x) * (h / 6.0);
        c += (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * (h / 6.0);
    }
    Ok(ArcGrid { kind, dt, x: xs, p: ps, w: ws })
}

/// Density of the state-constraint multiplier on a constrained arc,
/// `ν = p·[f1,f0](x) / (dg(x)·f1(x))`. Complementarity requires `ν ≥ 0`.
pub fn constraint_multiplier_density(p: &dyn ControlAffineProblem, x: &Vector, costate: &Vector) -> Result<f64> {
    let dg = p.constraint_gradient(x);
    let f1 = p.control_field(x);
    let den = dg.dot(&f1);
    if den.abs() < crate::problem::first_order_guard(&dg, &f1) {
        return Err(Error::FirstOrderViolation { x: x.iter().copied().collect(), denominator: den });
    }
    Ok(costate.dot(&lie_bracket(p, Bracket::F1F0, x)?) / den)
}

/// Propagated solution of the transformed problem.
#[derive(Clone, Debug, PartialEq)]
pub struct TpTrajectory {
    pub structure: ArcStructure,
    pub horizon: f64,
    pub arcs: Vec<ArcGrid>,
}

/// One row of the trajectory export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub arc: ArcKind,
    /// 1-based arc index.
    pub k: usize,
    pub s: f64,
    pub t: f64,
    pub u: f64,
    pub x: Vec<f64>,
    pub p: Vec<f64>,
}

impl TpTrajectory {
    /// Original time of node `i` of arc `k`, `τ_{k−1} + (τ_k − τ_{k−1}) s`.
    pub fn time(&self, k: usize, i: usize) -> f64 {
        let start = if k == 0 { 0.0 } else { self.structure.tau[k - 1] };
        start + self.arcs[k].dt * self.arcs[k].s(i)
    }

    pub fn rows(&self) -> Vec<TrajectoryRow> {
        let mut rows = Vec::new();
        for (k, arc) in self.arcs.iter().enumerate() {
            for i in 0..arc.x.len() {
                rows.push(TrajectoryRow {
                    arc: arc.kind,
                    k: k + 1,
                    s: arc.s(i),
                    t: self.time(k, i),
                    u: arc.w[i],
                    x: arc.x[i].iter().copied().collect(),
                    p: arc.p[i].iter().copied().collect(),
                });
            }
        }
        rows
    }

    /// CSV `arc,k,s,t,u,x1..xn,p1..pn`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        use crate::io::fmt_num;
        let n = self.arcs[0].x[0].len();
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = ["arc", "k", "s", "t", "u"].iter().map(|s| s.to_string()).collect();
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=n).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for r in self.rows() {
            let mut rec = vec![r.arc.token().to_string(), r.k.to_string(), fmt_num(r.s), fmt_num(r.t), fmt_num(r.u)];
            rec.extend(r.x.iter().chain(&r.p).map(|&v| fmt_num(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}
