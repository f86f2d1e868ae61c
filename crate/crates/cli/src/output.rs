//! Run artifacts: sweep.csv, verdicts.json, run_meta.json.

use std::io::Write;
use std::path::Path;

use eotlab_core::quantities::QuantityRecord;

pub const CSV_COLUMNS: [&str; 8] = [
    "eps",
    "ot_eps",
    "cost_term",
    "plan_entropy",
    "suboptimality",
    "c_eps",
    "w2_to_opt",
    "envelope_residual",
];

/// 17 significant digits, enough to round-trip any f64.
fn full(x: f64) -> String {
    format!("{x:.16e}")
}

/// One row per ε. Quantities that were not computed are written as NaN
/// (W₂) or left empty (envelope residual).
pub fn sweep_csv(records: &[QuantityRecord]) -> Result<Vec<u8>, csv::Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        w.write_record([
            full(r.eps),
            full(r.ot_eps),
            full(r.cost_term),
            full(r.plan_entropy),
            full(r.suboptimality),
            full(r.c_eps),
            full(r.w2_to_opt),
            r.envelope_residual.map(full).unwrap_or_default(),
        ])?;
    }
    w.into_inner().map_err(|e| e.into_error().into())
}

/// Writes every file to a temporary sibling first and renames them into
/// place only once all of them are complete.
pub fn write_all_atomic(dir: &Path, files: &[(&str, Vec<u8>)]) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut staged = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(bytes)?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, dir.join(name)));
    }
    for (tmp, path) in staged {
        tmp.persist(path).map_err(|e| e.error)?;
    }
    Ok(())
}
