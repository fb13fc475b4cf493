//! Shooting unknowns, the overdetermined shooting function and its Jacobian.

use serde::{Deserialize, Serialize};

use crate::arcs::{ArcKind, ArcStructure};
use crate::dynamics::{arc_hamiltonian, propagate_arc, TpTrajectory};
use crate::error::{Error, Result};
use crate::gauss_newton::LeastSquares;
use crate::problem::{lie_bracket, Bracket, ControlAffineProblem, Matrix, Vector};

/// Sizes that fix the packing of ω and of the residual.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    /// Number of arcs.
    #[serde(rename = "N")]
    pub arcs: usize,
    /// State dimension.
    pub n: usize,
    /// Number of endpoint constraints.
    pub q: usize,
    /// Number of constrained arcs.
    #[serde(rename = "C")]
    pub constrained: usize,
    /// Number of singular arcs.
    #[serde(rename = "S")]
    pub singular: usize,
}

impl Layout {
    pub fn new(p: &dyn ControlAffineProblem, kinds: &[ArcKind]) -> Self {
        Self {
            arcs: kinds.len(),
            n: p.state_dim(),
            q: p.endpoint_dim(),
            constrained: kinds.iter().filter(|&&k| k == ArcKind::Constrained).count(),
            singular: kinds.iter().filter(|&&k| k == ArcKind::Singular).count(),
        }
    }

    /// `2Nn + N − 1 + q + |C|`
    pub fn unknowns(&self) -> usize {
        2 * self.arcs * self.n + self.arcs - 1 + self.q + self.constrained
    }

    /// `unknowns + 2|S|`
    pub fn residuals(&self) -> usize {
        self.unknowns() + 2 * self.singular
    }
}

/// Shooting unknowns `ω = ((x0^k), (τ_k), (p0^k), Ψ, γ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShootingVector {
    pub x0: Vec<Vector>,
    pub tau: Vec<f64>,
    pub p0: Vec<Vector>,
    pub psi: Vector,
    /// One entry per constrained arc, in arc order.
    pub gamma: Vec<f64>,
}

impl ShootingVector {
    pub fn layout_matches(&self, l: &Layout) -> bool {
        self.x0.len() == l.arcs
            && self.p0.len() == l.arcs
            && self.tau.len() + 1 == l.arcs
            && self.x0.iter().chain(&self.p0).all(|v| v.len() == l.n)
            && self.psi.len() == l.q
            && self.gamma.len() == l.constrained
    }

    /// Flat vector in the order `x0^1..x0^N, τ_1..τ_{N−1}, p0^1..p0^N, Ψ, γ`.
    pub fn pack(&self) -> Vector {
        let mut out = Vec::new();
        for x in &self.x0 {
            out.extend(x.iter());
        }
        out.extend(&self.tau);
        for p in &self.p0 {
            out.extend(p.iter());
        }
        out.extend(self.psi.iter());
        out.extend(&self.gamma);
        Vector::from_vec(out)
    }

    pub fn unpack(l: &Layout, w: &[f64]) -> Result<Self> {
        if w.len() != l.unknowns() {
            return Err(Error::config(format!("shooting vector has length {}, expected {}", w.len(), l.unknowns())));
        }
        let (n, big_n) = (l.n, l.arcs);
        let mut at = 0;
        let mut take = |len: usize| {
            let s = &w[at..at + len];
            at += len;
            s
        };
        let x0 = (0..big_n).map(|_| Vector::from_column_slice(take(n))).collect();
        let tau = take(big_n - 1).to_vec();
        let p0 = (0..big_n).map(|_| Vector::from_column_slice(take(n))).collect();
        let psi = Vector::from_column_slice(take(l.q));
        let gamma = take(l.constrained).to_vec();
        Ok(Self { x0, tau, p0, psi, gamma })
    }
}

/// The shooting function of a problem for a fixed arc sequence.
pub struct Shooting<'a> {
    pub problem: &'a dyn ControlAffineProblem,
    pub kinds: Vec<ArcKind>,
    /// RK4 steps per arc.
    pub steps: usize,
}

impl<'a> Shooting<'a> {
    pub fn new(problem: &'a dyn ControlAffineProblem, kinds: Vec<ArcKind>, steps: usize) -> Result<Self> {
        ArcStructure::new(kinds.clone(), vec![0.0; kinds.len().saturating_sub(1)])?;
        if steps == 0 {
            return Err(Error::config("at least one integration step per arc is needed"));
        }
        Ok(Self { problem, kinds, steps })
    }

    /// Steps per arc for a total budget, at least one.
    pub fn steps_per_arc(total: usize, arcs: usize) -> usize {
        (total / arcs.max(1)).max(1)
    }

    pub fn layout(&self) -> Layout {
        Layout::new(self.problem, &self.kinds)
    }

    pub fn structure(&self, w: &ShootingVector) -> Result<ArcStructure> {
        let s = ArcStructure::new(self.kinds.clone(), w.tau.clone())?;
        s.validate_for(self.problem)?;
        Ok(s)
    }

    /// Propagates every arc from its `(x0^k, p0^k)`.
    pub fn trajectory(&self, w: &ShootingVector) -> Result<TpTrajectory> {
        if !w.layout_matches(&self.layout()) {
            return Err(Error::config("shooting vector does not match the structure"));
        }
        let structure = self.structure(w)?;
        let horizon = self.problem.horizon();
        let t = structure.times(horizon);
        let arcs = self
            .kinds
            .iter()
            .enumerate()
            .map(|(k, &kind)| {
                propagate_arc(self.problem, kind, t[k + 1] - t[k], &w.x0[k], &w.p0[k], self.steps)
                    .map_err(|e| Error::Propagation { arc: k, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TpTrajectory { structure, horizon, arcs })
    }

    /// Residual blocks in order: endpoint constraints, `g` at constrained entries, state
    /// continuity, initial transversality, costate jumps, final transversality,
    /// Hamiltonian continuity, and the two singular-entry conditions.
    pub fn residual(&self, w: &ShootingVector) -> Result<Vector> {
        let p = self.problem;
        let traj = self.trajectory(w)?;
        let big_n = self.kinds.len();
        let xt = traj.arcs[big_n - 1].x_end();
        let pt = traj.arcs[big_n - 1].p_end();
        let is_c = |k: usize| self.kinds[k] == ArcKind::Constrained;
        let mut gamma_of = vec![0.0; big_n];
        let mut gi = w.gamma.iter();
        for k in 0..big_n {
            if is_c(k) {
                gamma_of[k] = *gi.next().expect("layout checked");
            }
        }

        let mut r: Vec<f64> = Vec::with_capacity(self.layout().residuals());
        r.extend(p.endpoint(&w.x0[0], xt).iter());
        for k in (0..big_n).filter(|&k| is_c(k)) {
            r.push(p.constraint(&w.x0[k]));
        }
        for k in 0..big_n - 1 {
            r.extend((traj.arcs[k].x_end() - &w.x0[k + 1]).iter());
        }

        let (dphi0, dphi_t) = p.cost_gradient(&w.x0[0], xt);
        let (jac0, jac_t) = p.endpoint_jacobian(&w.x0[0], xt);
        let mut init = &w.p0[0] + dphi0 + jac0.tr_mul(&w.psi);
        if is_c(0) {
            init += p.constraint_gradient(&w.x0[0]) * gamma_of[0];
        }
        r.extend(init.iter());

        for k in 0..big_n - 1 {
            let mut jump = traj.arcs[k].p_end() - &w.p0[k + 1];
            if is_c(k + 1) {
                jump -= p.constraint_gradient(&w.x0[k + 1]) * gamma_of[k + 1];
            }
            r.extend(jump.iter());
        }

        r.extend((pt - dphi_t - jac_t.tr_mul(&w.psi)).iter());

        for k in 0..big_n - 1 {
            let h1 = arc_hamiltonian(p, self.kinds[k], traj.arcs[k].x_end(), traj.arcs[k].p_end())?;
            let h0 = arc_hamiltonian(p, self.kinds[k + 1], &w.x0[k + 1], &w.p0[k + 1])?;
            r.push(h1 - h0);
        }

        let singular: Vec<usize> = (0..big_n).filter(|&k| self.kinds[k] == ArcKind::Singular).collect();
        for &k in &singular {
            r.push(w.p0[k].dot(&p.control_field(&w.x0[k])));
        }
        for &k in &singular {
            r.push(w.p0[k].dot(&lie_bracket(p, Bracket::F1F0, &w.x0[k])?));
        }

        let r = Vector::from_vec(r);
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteResidual);
        }
        Ok(r)
    }

    pub fn residual_flat(&self, w: &Vector) -> Result<Vector> {
        self.residual(&ShootingVector::unpack(&self.layout(), w.as_slice())?)
    }

    /// Central-difference Jacobian with step `√ε·max(1, |ω_i|)` per column.
    pub fn jacobian_flat(&self, w: &Vector) -> Result<Matrix> {
        let h_base = f64::EPSILON.sqrt();
        let column = |i: usize| -> Result<Vector> {
            let h = crate::numdiff::scaled_step(h_base, w[i]);
            let mut wp = w.clone();
            wp[i] += h;
            let mut wm = w.clone();
            wm[i] -= h;
            let fp = self.residual_flat(&wp);
            let fm = self.residual_flat(&wm);
            match (fp, fm) {
                (Ok(a), Ok(b)) => Ok((a - b) / (2.0 * h)),
                (Err(e), _) | (_, Err(e)) => Err(Error::JacobianColumn { column: i, source: Box::new(e) }),
            }
        };
        #[cfg(feature = "parallel")]
        let cols: Vec<Result<Vector>> = {
            use rayon::prelude::*;
            (0..w.len()).into_par_iter().map(column).collect()
        };
        #[cfg(not(feature = "parallel"))]
        let cols: Vec<Result<Vector>> = (0..w.len()).map(column).collect();
        let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
        Ok(Matrix::from_columns(&cols))
    }
}

impl LeastSquares for Shooting<'_> {
    fn residual(&self, y: &Vector) -> Result<Vector> {
        self.residual_flat(y)
    }

    fn jacobian(&self, y: &Vector) -> Result<Matrix> {
        self.jacobian_flat(y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{LinearTest, Regulator, ToyBang};
    use ArcKind::*;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn pack_roundtrip_and_order() {
        let reg = Regulator::default();
        let w = reg.exact_omega();
        let l = Layout::new(&reg, &[BMinus, Constrained, Singular]);
        assert_eq!(l.unknowns(), 2 * 3 * 3 + 2 + 3 + 1);
        assert_eq!(l.residuals(), l.unknowns() + 2);
        let flat = w.pack();
        assert_eq!(flat.len(), l.unknowns());
        assert_eq!(&flat.as_slice()[0..3], &[0.0, 1.0, 0.0]);
        assert_eq!(flat[9], 1.2);
        assert_eq!(*flat.as_slice().last().unwrap(), w.gamma[0]);
        assert_eq!(ShootingVector::unpack(&l, flat.as_slice()).unwrap(), w);
        assert!(ShootingVector::unpack(&l, &flat.as_slice()[1..]).is_err());
    }

    #[test]
    fn toy_bang_extremal_is_an_exact_zero() {
        let toy = ToyBang;
        let sh = Shooting::new(&toy, vec![BMinus], 10).unwrap();
        let r = sh.residual(&toy.exact_omega()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.amax(), 0.0);
    }

    #[test]
    fn regulator_closed_form_is_a_zero() {
        let reg = Regulator::default();
        let sh = Shooting::new(&reg, vec![BMinus, Constrained, Singular], 333).unwrap();
        let r = sh.residual(&reg.exact_omega()).unwrap();
        assert_eq!(r.len(), 26);
        assert!(r.amax() < 1e-9, "{}", r.amax());
    }

    #[test]
    fn continuity_blocks_vanish_for_chained_arcs() {
        // arbitrary p0, but x0^{k+1}, p0^{k+1} copied from the end of arc k
        let lin = LinearTest::default();
        let sh = Shooting::new(&lin, vec![BMinus, BPlus], 50).unwrap();
        let mut w = ShootingVector {
            x0: vec![v(&[1.0, 0.0]), v(&[0.0, 0.0])],
            tau: vec![1.3],
            p0: vec![v(&[0.3, -0.2]), v(&[0.0, 0.0])],
            psi: v(&[0.1, 0.1]),
            gamma: vec![],
        };
        let traj = sh.trajectory(&w).unwrap();
        w.x0[1] = traj.arcs[0].x_end().clone();
        w.p0[1] = traj.arcs[0].p_end().clone();
        let r = sh.residual(&w).unwrap();
        // q = 2, then two continuity entries; after the initial transversality, two jump entries
        assert_eq!(&r.as_slice()[2..4], &[0.0, 0.0]);
        assert_eq!(&r.as_slice()[6..8], &[0.0, 0.0]);
    }

    #[test]
    fn dimensions_shrink_without_constrained_arcs() {
        let lin = LinearTest::default();
        let sh = Shooting::new(&lin, vec![BMinus], 20).unwrap();
        let l = sh.layout();
        assert_eq!((l.unknowns(), l.residuals()), (2 * 2 + 2, 2 * 2 + 2));
        let jac = sh.jacobian_flat(&v(&[1.0, 0.0, 0.2, 0.1, -0.2, 0.3])).unwrap();
        assert_eq!(jac.shape(), (6, 6));
    }

    #[test]
    fn fd_jacobian_matches_exact_linear_jacobian() {
        // one B- arc on the oscillator: x(T) is affine in x0, and p(t) = R(t) p0 exactly
        let lin = LinearTest::default();
        let sh = Shooting::new(&lin, vec![BMinus], 1000).unwrap();
        let w = v(&[0.7, -0.4, 0.2, 0.9, -0.3, 0.5]);
        let jac = sh.jacobian_flat(&w).unwrap();
        let t = lin.horizon;
        let mut exact = Matrix::zeros(6, 6);
        // Φ = x0 − a
        exact[(0, 0)] = 1.0;
        exact[(1, 1)] = 1.0;
        // p0 + Ψ
        exact[(2, 2)] = 1.0;
        exact[(3, 3)] = 1.0;
        exact[(2, 4)] = 1.0;
        exact[(3, 5)] = 1.0;
        // p(T) − c
        exact[(4, 2)] = t.cos();
        exact[(4, 3)] = t.sin();
        exact[(5, 2)] = -t.sin();
        exact[(5, 3)] = t.cos();
        assert!((jac - exact).amax() < 1e-6);
    }

    #[test]
    fn invalid_switching_times_are_rejected() {
        let reg = Regulator::default();
        let sh = Shooting::new(&reg, vec![BMinus, Constrained, Singular], 30).unwrap();
        let mut w = reg.exact_omega();
        w.tau = vec![2.7, 2.6];
        assert!(matches!(sh.residual(&w), Err(Error::InvalidStructure(_))));
    }

    #[test]
    fn singular_entry_rows_measure_switching_function() {
        let reg = Regulator::default();
        let sh = Shooting::new(&reg, vec![BMinus, Constrained, Singular], 60).unwrap();
        let mut w = reg.exact_omega();
        w.p0[2][1] = 0.05;
        let r = sh.residual(&w).unwrap();
        let n = r.len();
        assert!((r[n - 2] - 0.05).abs() < 1e-15);
    }
}
