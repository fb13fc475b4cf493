//! Arc sequences (bang, constrained, singular) and their detection from sampled controls.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{ControlAffineProblem, Vector};

/// Type of an arc of the optimal control.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ArcKind {
    /// Control at its lower bound.
    #[serde(rename = "B-")]
    BMinus,
    /// Control at its upper bound.
    #[serde(rename = "B+")]
    BPlus,
    /// State constraint active, control given by the feedback `Γ(x)`.
    #[serde(rename = "C")]
    Constrained,
    /// Singular arc, control interior and recovered from `d²/dt² H_u = 0`.
    #[serde(rename = "S")]
    Singular,
}

impl ArcKind {
    pub const ALL: [ArcKind; 4] = [ArcKind::BMinus, ArcKind::BPlus, ArcKind::Constrained, ArcKind::Singular];

    pub fn token(self) -> &'static str {
        match self {
            ArcKind::BMinus => "B-",
            ArcKind::BPlus => "B+",
            ArcKind::Constrained => "C",
            ArcKind::Singular => "S",
        }
    }
}

impl fmt::Display for ArcKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ArcKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "B-" | "b-" | "Bminus" | "BMinus" => Ok(ArcKind::BMinus),
            "B+" | "b+" | "Bplus" | "BPlus" => Ok(ArcKind::BPlus),
            "C" | "c" => Ok(ArcKind::Constrained),
            "S" | "s" => Ok(ArcKind::Singular),
            other => Err(Error::InvalidStructure(format!("unknown arc token {other:?} (expected B-, B+, C or S)"))),
        }
    }
}

/// Parses a comma-separated list of arc tokens such as `B-,C,S`.
pub fn parse_kinds(s: &str) -> Result<Vec<ArcKind>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(str::parse).collect()
}

/// Arc indices (0-based) grouped by kind.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IndexSets {
    pub singular: Vec<usize>,
    pub constrained: Vec<usize>,
    pub lower: Vec<usize>,
    pub upper: Vec<usize>,
}

/// Ordered arc kinds together with the interior switching times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArcStructure {
    pub kinds: Vec<ArcKind>,
    /// `N − 1` interior switching times, strictly increasing in `(0, T)`.
    pub tau: Vec<f64>,
}

impl ArcStructure {
    /// Builds a structure and checks the problem-independent invariants.
    pub fn new(kinds: Vec<ArcKind>, tau: Vec<f64>) -> Result<Self> {
        let s = Self { kinds, tau };
        s.check_shape()?;
        Ok(s)
    }

    /// Switching times placed on a uniform partition of `[0, horizon]`.
    pub fn uniform(kinds: Vec<ArcKind>, horizon: f64) -> Result<Self> {
        let n = kinds.len();
        let tau = (1..n).map(|k| horizon * k as f64 / n as f64).collect();
        Self::new(kinds, tau)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    fn check_shape(&self) -> Result<()> {
        if self.kinds.is_empty() {
            return Err(Error::InvalidStructure("a structure needs at least one arc".into()));
        }
        if self.tau.len() + 1 != self.kinds.len() {
            return Err(Error::InvalidStructure(format!(
                "{} arcs need {} switching times, got {}",
                self.kinds.len(),
                self.kinds.len() - 1,
                self.tau.len()
            )));
        }
        if let Some(w) = self.kinds.windows(2).position(|w| w[0] == w[1]) {
            return Err(Error::InvalidStructure(format!(
                "arcs {} and {} are both {}; adjacent arcs must differ",
                w,
                w + 1,
                self.kinds[w]
            )));
        }
        Ok(())
    }

    /// Full check against a problem: horizon, monotone times, available bounds.
    pub fn validate_for(&self, p: &dyn ControlAffineProblem) -> Result<()> {
        self.check_shape()?;
        let horizon = p.horizon();
        let mut prev = 0.0;
        for (k, &t) in self.tau.iter().enumerate() {
            if !(t > prev && t < horizon) {
                return Err(Error::InvalidStructure(format!(
                    "switching times must satisfy 0 < τ1 < … < T = {horizon}; τ{} = {t}",
                    k + 1
                )));
            }
            prev = t;
        }
        let b = p.bounds();
        for (k, kind) in self.kinds.iter().enumerate() {
            match kind {
                ArcKind::BMinus if b.lower.is_none() => {
                    return Err(Error::InvalidStructure(format!("arc {k} is B- but the problem has no lower bound")))
                }
                ArcKind::BPlus if b.upper.is_none() => {
                    return Err(Error::InvalidStructure(format!("arc {k} is B+ but the problem has no upper bound")))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn index_sets(&self) -> IndexSets {
        let mut s = IndexSets::default();
        for (k, kind) in self.kinds.iter().enumerate() {
            match kind {
                ArcKind::Singular => s.singular.push(k),
                ArcKind::Constrained => s.constrained.push(k),
                ArcKind::BMinus => s.lower.push(k),
                ArcKind::BPlus => s.upper.push(k),
            }
        }
        s
    }

    pub fn count(&self, kind: ArcKind) -> usize {
        self.kinds.iter().filter(|&&k| k == kind).count()
    }

    /// Switching times including the endpoints `0` and `horizon`.
    pub fn times(&self, horizon: f64) -> Vec<f64> {
        let mut t = Vec::with_capacity(self.kinds.len() + 1);
        t.push(0.0);
        t.extend_from_slice(&self.tau);
        t.push(horizon);
        t
    }

    pub fn tokens(&self) -> String {
        self.kinds.iter().map(|k| k.token()).collect::<Vec<_>>().join(",")
    }
}

/// Classification thresholds for [`detect_structure`]; `None` picks the default.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DetectTolerances {
    pub tol_u: Option<f64>,
    pub tol_g: Option<f64>,
    pub min_arc_len: Option<f64>,
}

/// Thresholds actually used for one detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub tol_u: f64,
    pub tol_g: f64,
    pub min_arc_len: f64,
}

impl DetectTolerances {
    pub fn resolve(&self, p: &dyn ControlAffineProblem, g_max_abs: f64) -> ResolvedTolerances {
        let tol_u = self.tol_u.unwrap_or_else(|| 1e-3 * p.bounds().width().unwrap_or(1.0));
        let tol_g = self.tol_g.unwrap_or(1e-4 * (1.0 + g_max_abs));
        let min_arc_len = self.min_arc_len.unwrap_or(0.02 * p.horizon());
        ResolvedTolerances { tol_u, tol_g, min_arc_len }
    }
}

/// Control and state samples on a time grid, the input of structure detection.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    pub t: Vec<f64>,
    pub u: Vec<f64>,
    pub x: Vec<Vector>,
}

impl SampledTrajectory {
    /// Reads the `t,u,x1,…,xn` CSV layout.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.len() < 3 || &headers[0] != "t" || &headers[1] != "u" {
            return Err(Error::config(format!(
                "trajectory CSV header must be t,u,x1,...,xn; got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        let n = headers.len() - 2;
        let mut out = Self { t: Vec::new(), u: Vec::new(), x: Vec::new() };
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let vals: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            let vals = vals.map_err(|e| Error::config(format!("row {}: {e}", line + 1)))?;
            out.t.push(vals[0]);
            out.u.push(vals[1]);
            out.x.push(Vector::from_column_slice(&vals[2..2 + n]));
        }
        Ok(out)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let n = self.x.first().map_or(0, |x| x.len());
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string(), "u".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        w.write_record(&header)?;
        for i in 0..self.t.len() {
            let mut row = vec![crate::io::fmt_num(self.t[i]), crate::io::fmt_num(self.u[i])];
            row.extend(self.x[i].iter().map(|&v| crate::io::fmt_num(v)));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Pointwise classification: bound tests first, then the constraint test, otherwise singular.
pub fn classify_points(p: &dyn ControlAffineProblem, traj: &SampledTrajectory, tol: &ResolvedTolerances) -> Vec<ArcKind> {
    let b = p.bounds();
    traj.u
        .iter()
        .zip(&traj.x)
        .map(|(&u, x)| {
            if b.lower.is_some_and(|l| (u - l).abs() <= tol.tol_u) {
                ArcKind::BMinus
            } else if b.upper.is_some_and(|h| (u - h).abs() <= tol.tol_u) {
                ArcKind::BPlus
            } else if p.constraint(x).abs() <= tol.tol_g {
                ArcKind::Constrained
            } else {
                ArcKind::Singular
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug)]
struct Run {
    kind: ArcKind,
    start: usize,
    end: usize,
}

/// Estimates the arc structure from a sampled (e.g. direct-method) solution.
///
/// Runs shorter than `min_arc_len` are absorbed by their longer neighbour, and the
/// switching-time guesses are the midpoints between the last sample of one run and the
/// first sample of the next.
pub fn detect_structure(
    p: &dyn ControlAffineProblem,
    traj: &SampledTrajectory,
    tols: &DetectTolerances,
) -> Result<ArcStructure> {
    let m = traj.t.len();
    if m == 0 {
        return Err(Error::StructureDetection { reason: "empty grid".into(), raw: vec![] });
    }
    if traj.u.len() != m || traj.x.len() != m {
        return Err(Error::config("trajectory samples are not aligned with the grid"));
    }
    if traj.t.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::config("trajectory grid must be strictly increasing"));
    }
    let g_max = traj.x.iter().map(|x| p.constraint(x).abs()).fold(0.0, f64::max);
    let tol = tols.resolve(p, g_max);
    let raw = classify_points(p, traj, &tol);

    let t = &traj.t;
    let left = |r: &Run| if r.start == 0 { t[0] } else { 0.5 * (t[r.start - 1] + t[r.start]) };
    let right = |r: &Run| if r.end + 1 == m { t[m - 1] } else { 0.5 * (t[r.end] + t[r.end + 1]) };
    let length = |r: &Run| right(r) - left(r);

    let mut runs: Vec<Run> = Vec::new();
    for (i, &k) in raw.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if r.kind == k => r.end = i,
            _ => runs.push(Run { kind: k, start: i, end: i }),
        }
    }

    while runs.len() > 1 {
        let (idx, shortest) = runs
            .iter()
            .enumerate()
            .map(|(i, r)| (i, length(r)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("non-empty");
        if shortest >= tol.min_arc_len {
            break;
        }
        let target = match (idx.checked_sub(1), runs.get(idx + 1)) {
            (Some(l), Some(r)) => {
                if length(&runs[l]) >= length(r) {
                    l
                } else {
                    idx + 1
                }
            }
            (Some(l), None) => l,
            (None, _) => idx + 1,
        };
        runs[idx].kind = runs[target].kind;
        let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs.drain(..) {
            match merged.last_mut() {
                Some(prev) if prev.kind == r.kind => prev.end = r.end,
                _ => merged.push(r),
            }
        }
        runs = merged;
    }

    let kinds: Vec<ArcKind> = runs.iter().map(|r| r.kind).collect();
    let tau: Vec<f64> = runs.iter().skip(1).map(left).collect();
    let s = ArcStructure { kinds, tau };
    s.validate_for(p)
        .map_err(|e| Error::StructureDetection { reason: e.to_string(), raw: raw.clone() })?;
    Ok(s)
}
