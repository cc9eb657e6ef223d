//! Artifact export: trajectory CSV and peer-record JSON lines.
//!
//! The stochastic and fluid trajectory writers share one layout —
//! `t,<label>,...` with label columns quoted (label text contains
//! commas) — so the two levels of description diff directly.

use std::io::Write;

use crate::error::Result;
use crate::fluid::FluidTrajectory;
use crate::labels;
use crate::stochastic::{PeerRecord, TrajectorySample};

fn write_header<W: Write>(w: &mut W, n: u8) -> Result<()> {
    write!(w, "t")?;
    for label in labels::enumerate_labels(n)? {
        write!(w, ",\"{label}\"")?;
    }
    writeln!(w)?;
    Ok(())
}

/// One CSV row per recorded time, counts as integers.
pub fn write_trajectory_csv<W: Write>(w: &mut W, traj: &TrajectorySample) -> Result<()> {
    write_header(w, traj.n())?;
    for (t, state) in traj.rows() {
        write!(w, "{t}")?;
        for c in state {
            write!(w, ",{c}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// One CSV row per grid time, densities as floats.
pub fn write_fluid_csv<W: Write>(w: &mut W, traj: &FluidTrajectory) -> Result<()> {
    let n = traj.states.first().map(|s| s.n()).unwrap_or(1);
    write_header(w, n)?;
    for (t, state) in traj.times.iter().zip(&traj.states) {
        write!(w, "{t}")?;
        for v in state.values() {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    Ok(())
}

/// JSON-lines export of per-peer timelines.
pub fn write_peer_records_jsonl<W: Write>(w: &mut W, peers: &[PeerRecord]) -> Result<()> {
    for peer in peers {
        let line = serde_json::to_string(peer).expect("peer records always serialize");
        writeln!(w, "{line}")?;
    }
    Ok(())
}
