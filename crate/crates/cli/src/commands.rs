//! The three subcommands. Each returns whether its check passed; hard failures are errors.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{bail, Context, Result};
use arcshoot::arcs::{detect_structure, ArcKind, ArcStructure, ResolvedTolerances};
use arcshoot::direct::{direct_solve, initial_guess, DirectSolution};
use arcshoot::gauss_newton::{gauss_newton, ConvergenceReport};
use arcshoot::io::{write_json, OmegaFile};
use arcshoot::second_order::{assemble_omega, check_positivity, linearize, PositivityReport};
use arcshoot::shooting::{Layout, Shooting, ShootingVector};
use arcshoot::validate::{validate_solution, ValidationOptions, ValidationReport};
use arcshoot::ControlAffineProblem;
use serde::Serialize;

use crate::config::{DetectConfig, DetectSettings, Init, SolveConfig, StructureChoice, VerifyConfig, DEFAULT_STEPS};

fn write_json_file<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    write_json(value, BufWriter::new(file))?;
    Ok(())
}

fn prepare(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[derive(Serialize)]
struct DirectSummary {
    grid_size: usize,
    penalty_weight: f64,
    cost: f64,
    objective: f64,
    violation: f64,
    iterations: usize,
    stalled: bool,
}

#[derive(Serialize)]
struct StructureFile<'a> {
    problem: &'a str,
    kinds: &'a [ArcKind],
    tau: &'a [f64],
    tolerances: ResolvedTolerances,
    direct: DirectSummary,
}

struct Detected {
    solution: DirectSolution,
    structure: arcshoot::Result<ArcStructure>,
}

fn run_direct(p: &dyn ControlAffineProblem, s: &DetectSettings) -> Result<Detected> {
    let solution = direct_solve(p, &s.direct).context("direct method")?;
    let structure = detect_structure(p, &solution.sampled(), &s.tolerances);
    Ok(Detected { solution, structure })
}

fn resolved_tolerances(p: &dyn ControlAffineProblem, s: &DetectSettings, sol: &DirectSolution) -> ResolvedTolerances {
    let g_max = sol.x.iter().map(|x| p.constraint(x).abs()).fold(0.0, f64::max);
    s.tolerances.resolve(p, g_max)
}

pub fn detect(cfg: DetectConfig) -> Result<bool> {
    let p = cfg.common.builtin.problem();
    let d = run_direct(p, &cfg.detect)?;
    let structure = d.structure?;
    let dir = &cfg.common.output_dir;
    prepare(dir)?;
    let sol = &d.solution;
    let file = StructureFile {
        problem: p.name(),
        kinds: &structure.kinds,
        tau: &structure.tau,
        tolerances: resolved_tolerances(p, &cfg.detect, sol),
        direct: DirectSummary {
            grid_size: cfg.detect.direct.grid_size,
            penalty_weight: cfg.detect.direct.penalty_weight,
            cost: sol.cost,
            objective: sol.objective,
            violation: sol.violation,
            iterations: sol.iterations,
            stalled: sol.stalled,
        },
    };
    write_json_file(dir, "structure.json", &file)?;
    let csv = dir.join("direct.csv");
    sol.sampled().write_csv(File::create(&csv).with_context(|| format!("creating {}", csv.display()))?)?;
    println!("structure {}  tau {:?}", structure.tokens(), structure.tau);
    if sol.stalled {
        eprintln!("warning: the direct method stalled after {} iterations", sol.iterations);
    }
    Ok(true)
}

/// Starting point of the shooting iteration.
struct Start {
    kinds: Vec<ArcKind>,
    omega: ShootingVector,
    steps_per_arc: usize,
}

fn per_arc(total: Option<usize>, arcs: usize) -> usize {
    Shooting::steps_per_arc(total.unwrap_or(DEFAULT_STEPS), arcs)
}

fn starting_point(cfg: &SolveConfig) -> Result<Start> {
    let b = &cfg.common.builtin;
    let p = b.problem();
    match &cfg.init {
        Init::Analytic => {
            let Some((st, omega)) = b.analytic() else {
                bail!("problem {:?} has no built-in structure; use --init direct or a warm-start file", p.name());
            };
            match &cfg.structure {
                StructureChoice::Given(k) if *k != st.kinds => {
                    bail!("--structure {} differs from the built-in structure {}", tokens(k), st.tokens())
                }
                StructureChoice::Detect => bail!("--structure detect needs --init direct"),
                _ => {}
            }
            let steps_per_arc = per_arc(cfg.steps, st.len());
            Ok(Start { kinds: st.kinds, omega, steps_per_arc })
        }
        Init::File(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let file = OmegaFile::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
            if file.problem != p.name() {
                bail!("{} holds a solution of {:?}, not {:?}", path.display(), file.problem, p.name());
            }
            let kinds = file.structure.kinds.clone();
            match &cfg.structure {
                StructureChoice::Given(k) if *k != kinds => {
                    bail!("--structure {} differs from the warm start's {}", tokens(k), tokens(&kinds))
                }
                StructureChoice::Detect => bail!("--structure detect needs --init direct"),
                _ => {}
            }
            let omega = file.shooting_vector(&Layout::new(p, &kinds))?;
            let steps_per_arc = cfg.steps.map_or(file.meta.steps, |s| per_arc(Some(s), kinds.len()));
            Ok(Start { kinds, omega, steps_per_arc })
        }
        Init::Direct => {
            let d = run_direct(p, &cfg.detect)?;
            let structure = match &cfg.structure {
                StructureChoice::Default | StructureChoice::Detect => {
                    let mut s = d.structure?;
                    if let Some(tau) = &cfg.tau {
                        s = ArcStructure::new(s.kinds, tau.clone())?;
                    }
                    s
                }
                StructureChoice::Given(k) => match (&cfg.tau, d.structure) {
                    (Some(tau), _) => ArcStructure::new(k.clone(), tau.clone())?,
                    (None, Ok(s)) if s.kinds == *k => s,
                    _ => ArcStructure::uniform(k.clone(), p.horizon())?,
                },
            };
            let steps_per_arc = per_arc(cfg.steps, structure.len());
            let omega = initial_guess(p, &d.solution, &structure, steps_per_arc)?;
            Ok(Start { kinds: structure.kinds, omega, steps_per_arc })
        }
    }
}

fn tokens(k: &[ArcKind]) -> String {
    k.iter().map(|k| k.token()).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct SolveReport<'a> {
    problem: &'a str,
    kinds: &'a [ArcKind],
    tau: &'a [f64],
    cost: f64,
    steps_per_arc: usize,
    convergence: &'a ConvergenceReport,
    validation: &'a ValidationReport,
}

pub fn solve(cfg: SolveConfig) -> Result<bool> {
    let p = cfg.common.builtin.problem();
    let mut start = starting_point(&cfg)?;
    if let Some(tau) = &cfg.tau {
        if tau.len() + 1 != start.kinds.len() {
            bail!("--tau has {} entries, the structure needs {}", tau.len(), start.kinds.len() - 1);
        }
        start.omega.tau = tau.clone();
    }
    let sh = Shooting::new(p, start.kinds.clone(), start.steps_per_arc)?;
    let (y, conv) = gauss_newton(&sh, &start.omega.pack(), &cfg.gn).context("Gauss-Newton")?;
    let layout = sh.layout();
    let w = ShootingVector::unpack(&layout, y.as_slice())?;
    let traj = sh.trajectory(&w)?;
    let xt = traj.arcs.last().expect("at least one arc").x_end();
    let cost = p.cost(&w.x0[0], xt);
    let validation = validate_solution(p, &traj, &ValidationOptions::default())?;

    let dir = &cfg.common.output_dir;
    prepare(dir)?;
    let csv = dir.join("trajectory.csv");
    traj.write_csv(BufWriter::new(File::create(&csv).with_context(|| format!("creating {}", csv.display()))?))?;
    write_json_file(dir, "omega.json", &OmegaFile::new(p.name(), &start.kinds, &w, layout, start.steps_per_arc))?;
    let report = SolveReport {
        problem: p.name(),
        kinds: &start.kinds,
        tau: &w.tau,
        cost,
        steps_per_arc: start.steps_per_arc,
        convergence: &conv,
        validation: &validation,
    };
    write_json_file(dir, "report.json", &report)?;

    println!(
        "converged in {} iterations, |S|inf = {:.3e}, cost {}, tau {:?}",
        conv.iterations.len() - 1,
        conv.final_residual,
        arcshoot::io::fmt_num(cost),
        w.tau.iter().map(|&t| arcshoot::io::fmt_num(t)).collect::<Vec<_>>()
    );
    for f in &validation.findings {
        eprintln!("validation: {f}");
    }
    Ok(validation.pass)
}

#[derive(Serialize)]
struct PositivityFile<'a> {
    problem: &'a str,
    #[serde(flatten)]
    report: &'a PositivityReport,
    /// `‖S‖∞` of the loaded solution.
    residual: f64,
}

pub fn verify(cfg: VerifyConfig) -> Result<bool> {
    let p = cfg.common.builtin.problem();
    let file = &cfg.file;
    let kinds = file.structure.kinds.clone();
    let layout = Layout::new(p, &kinds);
    let w = file.shooting_vector(&layout)?;
    let sh = Shooting::new(p, kinds, file.meta.steps)?;
    let residual = sh.residual(&w)?.amax();
    if residual > 1e-6 {
        eprintln!("warning: the solution residual is {residual:.3e}; the certificate assumes a converged extremal");
    }
    let traj = sh.trajectory(&w)?;
    let lin = linearize(p, &traj, &w)?;
    let q = assemble_omega(&lin)?;
    let report = check_positivity(&q)?;
    let dir = &cfg.common.output_dir;
    prepare(dir)?;
    write_json_file(dir, "positivity.json", &PositivityFile { problem: p.name(), report: &report, residual })?;
    println!(
        "c_est = {:.6e} (scale {:.3e}), cone dimension {}, {}",
        report.c_est,
        report.lambda_max,
        report.nullspace_dim,
        if report.pass { "pass" } else { "fail" }
    );
    if let Some(w) = &report.warning {
        eprintln!("warning: {w}");
    }
    Ok(report.pass)
}
