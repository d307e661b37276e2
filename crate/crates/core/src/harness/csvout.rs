//! Fixed-schema CSV output.
//!
//! Columns: `round,context_id,arm_id,payoff,inst_regret,cum_regret,structure_size`.
//! Floats print with the shortest round-trip representation, so reruns of
//! the same seeded config produce byte-identical files.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::harness::RunRow;

pub const CSV_HEADER: &str = "round,context_id,arm_id,payoff,inst_regret,cum_regret,structure_size";

pub fn rows_to_csv(rows: &[RunRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 32 + CSV_HEADER.len() + 1);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.round, r.context, r.arm, r.payoff, r.inst_regret, r.cum_regret, r.structure_size
        );
    }
    out
}

pub fn write_csv(path: &Path, rows: &[RunRow]) -> Result<()> {
    std::fs::write(path, rows_to_csv(rows))?;
    Ok(())
}
