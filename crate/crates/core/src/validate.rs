//! Post-solve checks of the structural hypotheses along a propagated extremal.

use serde::{Deserialize, Serialize};

use crate::arcs::ArcKind;
use crate::dynamics::{arc_hamiltonian, constraint_multiplier_density, legendre_clebsch, TpTrajectory};
use crate::error::Result;
use crate::problem::{check_first_order, lie_bracket, Bracket, ControlAffineProblem, FirstOrderReport};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationOptions {
    /// Required distance of the control from the bounds on C and S arcs; `None` picks
    /// `1e-3` times the bound width (or `1e-3`).
    pub margin: Option<f64>,
    /// Smallest control jump accepted at CS and SC junctions.
    pub min_jump: f64,
    pub constraint_tol: f64,
    pub multiplier_tol: f64,
    /// Relative tolerance on Hamiltonian constancy and continuity.
    pub hamiltonian_tol: f64,
}

impl Default for ValidationOptions {
    fn default() -> Self {
        Self { margin: None, min_jump: 1e-6, constraint_tol: 1e-6, multiplier_tol: 1e-8, hamiltonian_tol: 1e-6 }
    }
}

/// A scalar diagnostic compared against a threshold; `value` is `None` when there was
/// nothing to measure.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
}

impl Check {
    fn at_least(value: Option<f64>, threshold: f64) -> Self {
        Self { value, threshold, pass: value.is_none_or(|v| v >= threshold) }
    }

    fn at_most(value: Option<f64>, threshold: f64) -> Self {
        Self { value, threshold, pass: value.is_none_or(|v| v <= threshold) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Junction {
    /// 1-based index of the switching time.
    pub k: usize,
    pub from: ArcKind,
    pub to: ArcKind,
    pub jump: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    /// Minimum distance of the control from the bounds on C and S arcs.
    pub bound_margin: Check,
    /// Control jumps at CS and SC junctions.
    pub junctions: Vec<Junction>,
    pub junction_jump: Check,
    pub first_order: FirstOrderReport,
    /// Largest `p·[[f1,f0],f1]` on singular arcs; must be negative.
    pub legendre_clebsch: Check,
    /// Smallest constraint multiplier density on constrained arcs.
    pub multiplier: Check,
    /// Largest `g(x)` anywhere.
    pub constraint: Check,
    /// Per-arc `max |H(s) − H(0)| / (1 + |H(0)|)`.
    pub hamiltonian_variation: Vec<f64>,
    /// Per-junction `|H_1^k − H_0^{k+1}| / (1 + |H_0^{k+1}|)`.
    pub hamiltonian_mismatch: Vec<f64>,
    pub hamiltonian: Check,
    /// Largest `|p[[f1,f0],f0] + u p[[f1,f0],f1]|` on singular arcs.
    pub singular_feedback: Option<f64>,
    pub pass: bool,
    pub findings: Vec<String>,
}

fn fold_opt(acc: Option<f64>, v: f64, pick: fn(f64, f64) -> f64) -> Option<f64> {
    Some(acc.map_or(v, |a| pick(a, v)))
}

pub fn validate_solution(p: &dyn ControlAffineProblem, traj: &TpTrajectory, opts: &ValidationOptions) -> Result<ValidationReport> {
    let bounds = p.bounds();
    let margin_req = opts.margin.unwrap_or_else(|| 1e-3 * bounds.width().unwrap_or(1.0));

    let mut min_margin = None;
    let mut lc_max = None;
    let mut nu_min = None;
    let mut g_max = None;
    let mut feedback = None;
    let mut c_states = Vec::new();
    let mut variation = Vec::new();

    for arc in &traj.arcs {
        let h0 = arc_hamiltonian(p, arc.kind, &arc.x[0], &arc.p[0])?;
        let mut var: f64 = 0.0;
        for i in 0..arc.x.len() {
            let (x, c, u) = (&arc.x[i], &arc.p[i], arc.w[i]);
            g_max = fold_opt(g_max, p.constraint(x), f64::max);
            var = var.max((arc_hamiltonian(p, arc.kind, x, c)? - h0).abs());
            match arc.kind {
                ArcKind::Constrained => {
                    min_margin = fold_opt(min_margin, bounds.margin(u), f64::min);
                    nu_min = fold_opt(nu_min, constraint_multiplier_density(p, x, c)?, f64::min);
                    c_states.push(x.clone());
                }
                ArcKind::Singular => {
                    min_margin = fold_opt(min_margin, bounds.margin(u), f64::min);
                    let lc = legendre_clebsch(p, x, c)?;
                    lc_max = fold_opt(lc_max, lc, f64::max);
                    let r = c.dot(&lie_bracket(p, Bracket::F1F0F0, x)?) + u * lc;
                    feedback = fold_opt(feedback, r.abs(), f64::max);
                }
                _ => {}
            }
        }
        variation.push(var / (1.0 + h0.abs()));
    }

    let mut junctions = Vec::new();
    let mut mismatch = Vec::new();
    for k in 0..traj.arcs.len().saturating_sub(1) {
        let (a, b) = (&traj.arcs[k], &traj.arcs[k + 1]);
        let h1 = arc_hamiltonian(p, a.kind, a.x_end(), a.p_end())?;
        let h0 = arc_hamiltonian(p, b.kind, &b.x[0], &b.p[0])?;
        mismatch.push((h1 - h0).abs() / (1.0 + h0.abs()));
        let cs = matches!(
            (a.kind, b.kind),
            (ArcKind::Constrained, ArcKind::Singular) | (ArcKind::Singular, ArcKind::Constrained)
        );
        if cs {
            junctions.push(Junction { k: k + 1, from: a.kind, to: b.kind, jump: (b.w[0] - a.w[a.w.len() - 1]).abs() });
        }
    }
    let min_jump = junctions.iter().map(|j| j.jump).reduce(f64::min);
    let h_worst = variation.iter().chain(&mismatch).copied().reduce(f64::max);

    let report_first_order = check_first_order(p, &c_states);
    let bound_margin = Check::at_least(min_margin, margin_req);
    let junction_jump = Check::at_least(min_jump, opts.min_jump);
    let legendre = Check { value: lc_max, threshold: 0.0, pass: lc_max.is_none_or(|v| v < 0.0) };
    let multiplier = Check::at_least(nu_min, -opts.multiplier_tol);
    let constraint = Check::at_most(g_max, opts.constraint_tol);
    let hamiltonian = Check::at_most(h_worst, opts.hamiltonian_tol);

    let mut findings = Vec::new();
    let mut note = |ok: bool, msg: String| {
        if !ok {
            findings.push(msg);
        }
    };
    note(bound_margin.pass, format!("control within {margin_req:e} of a bound on a C or S arc ({min_margin:?})"));
    note(junction_jump.pass, format!("control continuous at a CS/SC junction ({min_jump:?})"));
    note(
        report_first_order.pass,
        format!("first-order condition fails on a constrained arc (min |dg·f1| = {:e})", report_first_order.min_abs_denominator),
    );
    note(legendre.pass, format!("strengthened Legendre-Clebsch condition fails (max p·[[f1,f0],f1] = {lc_max:?})"));
    note(multiplier.pass, format!("negative constraint multiplier density ({nu_min:?})"));
    note(constraint.pass, format!("state constraint violated (max g = {g_max:?})"));
    note(hamiltonian.pass, format!("Hamiltonian not constant or not continuous ({h_worst:?})"));

    Ok(ValidationReport {
        pass: findings.is_empty(),
        bound_margin,
        junctions,
        junction_jump,
        first_order: report_first_order,
        legendre_clebsch: legendre,
        multiplier,
        constraint,
        hamiltonian_variation: variation,
        hamiltonian_mismatch: mismatch,
        hamiltonian,
        singular_feedback: feedback,
        findings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::{Regulator, ToyBang};
    use crate::shooting::Shooting;

    fn regulator_traj(steps: usize) -> (Regulator, TpTrajectory) {
        let reg = Regulator::default();
        let sh = Shooting::new(&reg, reg.structure().kinds, steps).unwrap();
        let traj = sh.trajectory(&reg.exact_omega()).unwrap();
        (reg, traj)
    }

    #[test]
    fn regulator_extremal_passes_every_check() {
        let (reg, traj) = regulator_traj(333);
        let r = validate_solution(&reg, &traj, &ValidationOptions::default()).unwrap();
        assert!(r.pass, "{:?}", r.findings);
        assert!(r.bound_margin.value.unwrap() > 0.5);
        assert_eq!(r.junctions.len(), 1);
        assert!((r.junctions[0].jump - 0.2).abs() < 1e-9);
        assert!(r.multiplier.value.unwrap() > -1e-10);
        assert_eq!(r.legendre_clebsch.value, Some(-1.0));
        assert!(r.singular_feedback.unwrap() < 1e-12);
    }

    #[test]
    fn wrong_costate_is_flagged() {
        let (reg, _) = regulator_traj(50);
        let sh = Shooting::new(&reg, reg.structure().kinds, 50).unwrap();
        let mut w = reg.exact_omega();
        w.p0[2][2] = -1.0;
        let traj = sh.trajectory(&w).unwrap();
        let r = validate_solution(&reg, &traj, &ValidationOptions::default()).unwrap();
        assert!(!r.legendre_clebsch.pass);
        assert!(!r.pass);
    }

    #[test]
    fn bang_only_solution_has_nothing_to_measure() {
        let toy = ToyBang;
        let sh = Shooting::new(&toy, toy.structure().kinds, 10).unwrap();
        let traj = sh.trajectory(&toy.exact_omega()).unwrap();
        let r = validate_solution(&toy, &traj, &ValidationOptions::default()).unwrap();
        assert!(r.pass);
        assert_eq!(r.bound_margin.value, None);
        assert!(r.junctions.is_empty());
        assert_eq!(r.hamiltonian_variation, vec![0.0]);
    }
}
