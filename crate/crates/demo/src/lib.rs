//! Browser demo: the regulator problem solved, detected and certified from JavaScript.
//!
//! Every export takes plain numbers and returns a JSON string; errors become thrown
//! JavaScript strings.

use arcshoot::arcs::{detect_structure, ArcKind, DetectTolerances};
use arcshoot::builtin::Regulator;
use arcshoot::direct::{direct_solve, DirectSolveConfig};
use arcshoot::gauss_newton::{gauss_newton, GaussNewtonOptions};
use arcshoot::io::to_json_string;
use arcshoot::second_order::{assemble_omega, check_positivity, linearize, PositivityReport};
use arcshoot::shooting::{Shooting, ShootingVector};
use arcshoot::ControlAffineProblem;
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Plot samples: time, control and the first two states.
#[derive(Serialize, Default)]
pub struct Curves {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
}

impl Curves {
    fn push(&mut self, t: f64, u: f64, x1: f64, x2: f64) {
        self.t.push(t);
        self.u.push(u);
        self.x1.push(x1);
        self.x2.push(x2);
    }
}

#[derive(Serialize)]
pub struct SolveOutput {
    pub kinds: Vec<ArcKind>,
    pub tau: Vec<f64>,
    pub cost: f64,
    pub exact_cost: f64,
    pub exact_tau: [f64; 2],
    pub iterations: usize,
    pub residual: f64,
    pub order_estimate: Option<f64>,
    pub curves: Curves,
}

#[derive(Serialize)]
pub struct DetectOutput {
    pub kinds: Vec<ArcKind>,
    pub tau: Vec<f64>,
    pub direct_cost: f64,
    pub direct_iterations: usize,
    pub curves: Curves,
}

#[derive(Serialize)]
pub struct VerifyOutput {
    #[serde(flatten)]
    pub report: PositivityReport,
}

fn regulator(level: f64) -> Result<Regulator, String> {
    Regulator::new(level, 5.0).map_err(|e| e.to_string())
}

fn solve(reg: &Regulator, steps: usize) -> Result<(Shooting<'_>, ShootingVector, SolveOutput), String> {
    let kinds = reg.structure().kinds;
    let per_arc = Shooting::steps_per_arc(steps, kinds.len());
    let sh = Shooting::new(reg, kinds.clone(), per_arc).map_err(|e| e.to_string())?;
    // start away from the answer so the iteration has something to do
    let mut w0 = reg.exact_omega();
    w0.tau = vec![w0.tau[0] * 1.05, w0.tau[1] * 0.95];
    let (y, conv) = gauss_newton(&sh, &w0.pack(), &GaussNewtonOptions::default()).map_err(|e| e.to_string())?;
    let w = ShootingVector::unpack(&sh.layout(), y.as_slice()).map_err(|e| e.to_string())?;
    let traj = sh.trajectory(&w).map_err(|e| e.to_string())?;
    let mut curves = Curves::default();
    for r in traj.rows() {
        curves.push(r.t, r.u, r.x[0], r.x[1]);
    }
    let xt = traj.arcs.last().expect("three arcs").x_end();
    let (a, b) = reg.switching_times();
    let out = SolveOutput {
        kinds,
        tau: w.tau.clone(),
        cost: reg.cost(&w.x0[0], xt),
        exact_cost: reg.exact_cost(),
        exact_tau: [a, b],
        iterations: conv.iterations.len() - 1,
        residual: conv.final_residual,
        order_estimate: conv.order_estimate,
        curves,
    };
    Ok((sh, w, out))
}

/// Shooting solution of the regulator with constraint level `level` (0.2 in the
/// standard setup) using `steps` RK4 steps in total.
pub fn solve_json(level: f64, steps: usize) -> Result<String, String> {
    let reg = regulator(level)?;
    let (_, _, out) = solve(&reg, steps)?;
    to_json_string(&out).map_err(|e| e.to_string())
}

/// Direct method on `grid` intervals followed by structure detection.
pub fn detect_json(level: f64, grid: usize) -> Result<String, String> {
    let reg = regulator(level)?;
    let cfg = DirectSolveConfig { grid_size: grid, ..Default::default() };
    cfg.validate().map_err(|e| e.to_string())?;
    let sol = direct_solve(&reg, &cfg).map_err(|e| e.to_string())?;
    let st = detect_structure(&reg, &sol.sampled(), &DetectTolerances::default()).map_err(|e| e.to_string())?;
    let sampled = sol.sampled();
    let mut curves = Curves::default();
    for i in 0..sampled.t.len() {
        curves.push(sampled.t[i], sampled.u[i], sampled.x[i][0], sampled.x[i][1]);
    }
    let out = DetectOutput { kinds: st.kinds, tau: st.tau, direct_cost: sol.cost, direct_iterations: sol.iterations, curves };
    to_json_string(&out).map_err(|e| e.to_string())
}

/// Second-order positivity check at the shooting solution.
pub fn verify_json(level: f64, steps: usize) -> Result<String, String> {
    let reg = regulator(level)?;
    let (sh, w, _) = solve(&reg, steps)?;
    let traj = sh.trajectory(&w).map_err(|e| e.to_string())?;
    let lin = linearize(&reg, &traj, &w).map_err(|e| e.to_string())?;
    let q = assemble_omega(&lin).map_err(|e| e.to_string())?;
    let report = check_positivity(&q).map_err(|e| e.to_string())?;
    to_json_string(&VerifyOutput { report }).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn solve_regulator(level: f64, steps: usize) -> Result<String, JsValue> {
    solve_json(level, steps).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn detect_regulator(level: f64, grid: usize) -> Result<String, JsValue> {
    detect_json(level, grid).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn verify_regulator(level: f64, steps: usize) -> Result<String, JsValue> {
    verify_json(level, steps).map_err(|e| JsValue::from_str(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: &str) -> Value {
        serde_json::from_str(s).unwrap()
    }

    #[test]
    fn solve_reports_the_closed_form_switching_times() {
        let v = parse(&solve_json(0.2, 300).unwrap());
        assert!((v["tau"][0].as_f64().unwrap() - 1.2).abs() < 1e-6);
        assert!((v["tau"][1].as_f64().unwrap() - 2.6).abs() < 1e-6);
        assert!(v["iterations"].as_u64().unwrap() >= 1);
        assert_eq!(v["curves"]["t"].as_array().unwrap().len(), 3 * 101);
    }

    #[test]
    fn detect_returns_three_arcs() {
        let v = parse(&detect_json(0.2, 100).unwrap());
        assert_eq!(v["kinds"], serde_json::json!(["B-", "C", "S"]));
    }

    #[test]
    fn verify_returns_a_report() {
        let v = parse(&verify_json(0.2, 150).unwrap());
        assert!(v["nullspace_dim"].as_u64().unwrap() > 0);
        assert!(v.get("pass").is_some());
    }

    #[test]
    fn invalid_level_is_an_error() {
        assert!(solve_json(0.9, 300).is_err());
        assert!(detect_json(0.2, 3).is_err());
    }
}
