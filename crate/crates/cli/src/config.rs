//! Command-line flags, the JSON config file, and their merge (flags win).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use arcshoot::arcs::{parse_kinds, ArcKind, DetectTolerances};
use arcshoot::builtin::{Builtin, Regulator};
use arcshoot::direct::DirectSolveConfig;
use arcshoot::gauss_newton::GaussNewtonOptions;
use arcshoot::io::OmegaFile;
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

pub const DEFAULT_STEPS: usize = 1000;

#[derive(Parser, Debug)]
#[command(name = "arcshoot", version, about = "Shooting solver for state-constrained control-affine optimal control problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Solve the shooting equations and validate the extremal.
    Solve(SolveArgs),
    /// Run the direct method and estimate the arc structure.
    Detect(DetectArgs),
    /// Check second-order positivity at a solved omega.json.
    Verify(VerifyArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct CommonArgs {
    /// Built-in problem: regulator, toy-bang or linear.
    #[arg(long)]
    pub problem: Option<String>,
    /// Regulator constraint level c in x2 >= -c.
    #[arg(long)]
    pub level: Option<f64>,
    /// Regulator horizon T.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Directory for the output files (created if missing).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// JSON file with any of the long flag names as keys (underscores for dashes).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Default)]
pub struct DetectFlags {
    /// Distance to a bound below which the control counts as saturated.
    #[arg(long)]
    pub tol_u: Option<f64>,
    /// |g| below which the state counts as on the constraint.
    #[arg(long)]
    pub tol_g: Option<f64>,
    /// Shortest credible arc; shorter runs are merged into a neighbour.
    #[arg(long)]
    pub min_arc_len: Option<f64>,
    /// Control intervals of the direct method.
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Penalty weight of the direct method.
    #[arg(long)]
    pub penalty: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Arc kinds such as B-,C,S, or "detect".
    #[arg(long)]
    pub structure: Option<String>,
    /// Switching-time guesses, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    /// "analytic", "direct", or the path of an omega.json warm start.
    #[arg(long)]
    pub init: Option<String>,
    /// Total RK4 steps, split evenly over the arcs. A warm start keeps its own step
    /// count unless this is given.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Convergence tolerance on the infinity norm of the residual.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    #[command(flatten)]
    pub detect: DetectFlags,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub detect: DetectFlags,
}

#[derive(Args, Debug)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Solved omega.json.
    #[arg(long)]
    pub solution: Option<PathBuf>,
}

/// Contents of `--config`; every key is optional.
#[derive(Deserialize, Debug, Default)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    problem: Option<String>,
    level: Option<f64>,
    horizon: Option<f64>,
    output_dir: Option<PathBuf>,
    structure: Option<String>,
    tau: Option<Vec<f64>>,
    init: Option<String>,
    steps: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    tol_u: Option<f64>,
    tol_g: Option<f64>,
    min_arc_len: Option<f64>,
    grid_size: Option<usize>,
    penalty: Option<f64>,
    solution: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}

pub enum Init {
    Analytic,
    Direct,
    File(PathBuf),
}

pub enum StructureChoice {
    Default,
    Detect,
    Given(Vec<ArcKind>),
}

/// Settings shared by all subcommands.
pub struct Common {
    pub builtin: Builtin,
    pub output_dir: PathBuf,
}

pub struct DetectSettings {
    pub tolerances: DetectTolerances,
    pub direct: DirectSolveConfig,
}

pub struct SolveConfig {
    pub common: Common,
    pub structure: StructureChoice,
    pub tau: Option<Vec<f64>>,
    pub init: Init,
    pub steps: Option<usize>,
    pub gn: GaussNewtonOptions,
    pub detect: DetectSettings,
}

pub struct DetectConfig {
    pub common: Common,
    pub detect: DetectSettings,
}

pub struct VerifyConfig {
    pub common: Common,
    pub file: OmegaFile,
}

fn existing(path: PathBuf, what: &str) -> Result<PathBuf> {
    if !path.is_file() {
        bail!("{what} {} does not exist", path.display());
    }
    Ok(path)
}

fn common(a: &CommonArgs, f: &mut FileConfig, fallback: &str) -> Result<Common> {
    let name = a.problem.clone().or(f.problem.take()).unwrap_or_else(|| fallback.into());
    let level = a.level.or(f.level);
    let horizon = a.horizon.or(f.horizon);
    let builtin = if name == "regulator" {
        let d = Regulator::default();
        let r = Regulator::new(level.unwrap_or(d.level()), horizon.unwrap_or(arcshoot::ControlAffineProblem::horizon(&d)))?;
        Builtin::Regulator(r)
    } else {
        if level.is_some() || horizon.is_some() {
            bail!("--level and --horizon only apply to the regulator problem");
        }
        Builtin::from_name(&name)?
    };
    let output_dir = a.output_dir.clone().or(f.output_dir.take()).unwrap_or_else(|| PathBuf::from("."));
    Ok(Common { builtin, output_dir })
}

fn detect_settings(a: &DetectFlags, f: &FileConfig) -> Result<DetectSettings> {
    let tolerances = DetectTolerances {
        tol_u: a.tol_u.or(f.tol_u),
        tol_g: a.tol_g.or(f.tol_g),
        min_arc_len: a.min_arc_len.or(f.min_arc_len),
    };
    for (name, v) in [("tol-u", tolerances.tol_u), ("tol-g", tolerances.tol_g), ("min-arc-len", tolerances.min_arc_len)] {
        if v.is_some_and(|v| !(v >= 0.0)) {
            bail!("--{name} must be non-negative");
        }
    }
    let mut direct = DirectSolveConfig::default();
    if let Some(k) = a.grid_size.or(f.grid_size) {
        direct.grid_size = k;
    }
    if let Some(w) = a.penalty.or(f.penalty) {
        direct.penalty_weight = w;
    }
    direct.validate()?;
    Ok(DetectSettings { tolerances, direct })
}

impl SolveArgs {
    pub fn resolve(self) -> Result<SolveConfig> {
        let mut f = FileConfig::load(self.common.config.as_deref())?;
        let common = common(&self.common, &mut f, "regulator")?;
        let structure = match self.structure.or(f.structure.take()).as_deref() {
            None => StructureChoice::Default,
            Some("detect") => StructureChoice::Detect,
            Some(s) => StructureChoice::Given(parse_kinds(s)?),
        };
        let init = match self.init.or(f.init.take()).as_deref() {
            None | Some("analytic") => Init::Analytic,
            Some("direct") => Init::Direct,
            Some(path) => Init::File(existing(PathBuf::from(path), "warm-start file")?),
        };
        let steps = self.steps.or(f.steps);
        if let (Some(s), StructureChoice::Given(k)) = (steps, &structure) {
            if s < k.len() {
                bail!("--steps {s} is smaller than the number of arcs {}", k.len());
            }
        }
        let mut gn = GaussNewtonOptions::default();
        if let Some(t) = self.tol.or(f.tol) {
            if !(t > 0.0) {
                bail!("--tol must be positive");
            }
            gn.tol = t;
        }
        if let Some(m) = self.max_iter.or(f.max_iter) {
            gn.max_iter = m;
        }
        let detect = detect_settings(&self.detect, &f)?;
        Ok(SolveConfig { common, structure, tau: self.tau.or(f.tau.take()), init, steps, gn, detect })
    }
}

impl DetectArgs {
    pub fn resolve(self) -> Result<DetectConfig> {
        let mut f = FileConfig::load(self.common.config.as_deref())?;
        let common = common(&self.common, &mut f, "regulator")?;
        let detect = detect_settings(&self.detect, &f)?;
        Ok(DetectConfig { common, detect })
    }
}

impl VerifyArgs {
    pub fn resolve(self) -> Result<VerifyConfig> {
        let mut f = FileConfig::load(self.common.config.as_deref())?;
        let solution = self.solution.or(f.solution.take()).context("--solution is required")?;
        let solution = existing(solution, "solution file")?;
        let text = std::fs::read_to_string(&solution).with_context(|| format!("reading {}", solution.display()))?;
        let file = OmegaFile::from_json(&text).with_context(|| format!("parsing {}", solution.display()))?;
        let common = common(&self.common, &mut f, &file.problem)?;
        if common.builtin.problem().name() != file.problem {
            bail!("{} was solved for problem {:?}, not {:?}", solution.display(), file.problem, common.builtin.problem().name());
        }
        Ok(VerifyConfig { common, file })
    }
}
