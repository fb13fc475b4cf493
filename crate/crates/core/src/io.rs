//! File formats: number formatting, JSON artifacts and the solution file.

use std::io::Write;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::arcs::{ArcKind, ArcStructure};
use crate::error::{Error, Result};
use crate::shooting::{Layout, ShootingVector};

/// Significant digits of every number written to disk.
pub const DIGITS: usize = 9;

/// Rounds to [`DIGITS`] significant digits.
pub fn round_sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{:.*e}", DIGITS - 1, v).parse().unwrap_or(v)
}

/// Shortest text that reads back as `round_sig(v)`.
pub fn fmt_num(v: f64) -> String {
    let r = round_sig(v);
    if r == 0.0 {
        return "0".into();
    }
    let s = format!("{r:?}");
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

fn round_value(v: &mut Value) {
    match v {
        Value::Number(n) => {
            if n.is_f64() {
                if let Some(r) = n.as_f64().map(round_sig).and_then(serde_json::Number::from_f64) {
                    *n = r;
                }
            }
        }
        Value::Array(a) => a.iter_mut().for_each(round_value),
        Value::Object(o) => o.values_mut().for_each(round_value),
        _ => {}
    }
}

/// Serializes to pretty JSON with every float rounded to [`DIGITS`] significant digits.
pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut v = serde_json::to_value(value)?;
    round_value(&mut v);
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

pub fn write_json<T: Serialize, W: Write>(value: &T, mut w: W) -> Result<()> {
    w.write_all(to_json_string(value)?.as_bytes())?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaMeta {
    #[serde(flatten)]
    pub layout: Layout,
    /// RK4 steps per arc.
    pub steps: usize,
}

/// Solution and warm-start file: the structure, the packed ω and its sizes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OmegaFile {
    pub problem: String,
    pub structure: ArcStructure,
    pub omega: Vec<f64>,
    pub meta: OmegaMeta,
}

impl OmegaFile {
    pub fn new(problem: &str, kinds: &[ArcKind], w: &ShootingVector, layout: Layout, steps: usize) -> Self {
        Self {
            problem: problem.to_string(),
            structure: ArcStructure { kinds: kinds.to_vec(), tau: w.tau.clone() },
            omega: w.pack().iter().copied().collect(),
            meta: OmegaMeta { layout, steps },
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: Self = serde_json::from_str(text)?;
        let l = &f.meta.layout;
        if l.arcs != f.structure.kinds.len() {
            return Err(Error::config(format!("meta.N = {} but the structure has {} arcs", l.arcs, f.structure.kinds.len())));
        }
        if f.omega.len() != l.unknowns() {
            return Err(Error::config(format!("omega has length {}, meta implies {}", f.omega.len(), l.unknowns())));
        }
        Ok(f)
    }

    /// Checks the header against a problem and unpacks ω.
    pub fn shooting_vector(&self, layout: &Layout) -> Result<ShootingVector> {
        if &self.meta.layout != layout {
            return Err(Error::config(format!(
                "solution file sizes {:?} do not match the problem {:?}",
                self.meta.layout, layout
            )));
        }
        ShootingVector::unpack(layout, &self.omega)
    }
}
