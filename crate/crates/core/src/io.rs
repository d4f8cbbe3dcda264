//! CSV and JSON writers for the artifacts the command layer produces.
//!
//! Times are written in scientific notation with 9 fractional digits so
//! they survive a round trip; other values use the shortest exact decimal.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::dynamics::Trajectory;
use crate::error::Result;
use crate::uncertainty::{Marginal, MomentVector};

fn fmt_time(t: f64) -> String {
    format!("{t:.9e}")
}

/// `traj_id,t,x1,...,xn` with one row per stored state.
pub fn write_trajectories_csv(path: impl AsRef<Path>, trajectories: &[Trajectory]) -> Result<()> {
    let dim = trajectories
        .first()
        .and_then(|t| t.states.first())
        .map_or(0, Vec::len);
    let mut out = String::from("traj_id,t");
    for a in 1..=dim {
        write!(out, ",x{a}").unwrap();
    }
    out.push('\n');
    for (id, traj) in trajectories.iter().enumerate() {
        for (i, state) in traj.states.iter().enumerate() {
            write!(out, "{id},{}", fmt_time(i as f64 * traj.dt)).unwrap();
            for v in state {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
    }
    Ok(std::fs::write(path, out)?)
}

/// `t,m1,...,mK` with one row per time step.
pub fn write_moments_csv(path: impl AsRef<Path>, moments: &[MomentVector]) -> Result<()> {
    let k = moments.first().map_or(0, |m| m.m.len());
    let mut out = String::from("t");
    for i in 1..=k {
        write!(out, ",m{i}").unwrap();
    }
    out.push('\n');
    for m in moments {
        out.push_str(&fmt_time(m.t));
        for v in m.m.iter() {
            write!(out, ",{v}").unwrap();
        }
        out.push('\n');
    }
    Ok(std::fs::write(path, out)?)
}

/// `axis,t,node,value_raw,value_clipped_normalized`, one block per marginal.
pub fn write_marginals_csv(path: impl AsRef<Path>, marginals: &[Marginal]) -> Result<()> {
    let mut out = String::from("axis,t,node,value_raw,value_clipped_normalized\n");
    for m in marginals {
        for ((node, raw), norm) in m.nodes.iter().zip(&m.raw).zip(&m.normalized) {
            writeln!(out, "{},{},{node},{raw},{norm}", m.axis, fmt_time(m.t)).unwrap();
        }
    }
    Ok(std::fs::write(path, out)?)
}

/// One reported support interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SupportRecord {
    pub t: f64,
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub threshold: f64,
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    Ok(std::fs::write(path, text)?)
}
