use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{HarnessError, SweepRun};
use crate::grid::io::write_binary;

pub const BOUND_COLUMNS: [&str; 16] = [
    "index",
    "eps",
    "target",
    "x",
    "y",
    "t",
    "rho",
    "sigma",
    "ess_sup",
    "k_choice",
    "k_theorem",
    "margin",
    "eps_threshold",
    "eps_ok",
    "c_min",
    "pass",
];

fn num(v: f64) -> String {
    format!("{v}")
}

/// Writes `config.toml`, `sweep.json`, `energy.csv`, `gaps.csv`, one
/// `bounds_eps{i}.csv` and one `u_eps{i}.bin` per completed item.
pub fn emit_reports(run: &SweepRun, dir: impl AsRef<Path>) -> Result<(), HarnessError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let report = &run.report;
    fs::write(dir.join("config.toml"), report.config.to_toml_string()?)?;
    let mut json = BufWriter::new(File::create(dir.join("sweep.json"))?);
    serde_json::to_writer_pretty(&mut json, report)?;
    json.write_all(b"\n")?;
    json.flush()?;

    for item in &report.items {
        let mut w = csv::Writer::from_path(dir.join(format!("bounds_eps{}.csv", item.index)))?;
        w.write_record(BOUND_COLUMNS)?;
        for (k, t) in item.targets.iter().enumerate() {
            let b = &t.bound;
            let y = t.target.center.get(1).copied().map(num).unwrap_or_default();
            w.write_record([
                item.index.to_string(),
                num(item.eps),
                k.to_string(),
                num(t.target.center[0]),
                y,
                num(t.target.t),
                num(t.target.rho),
                num(t.target.sigma),
                num(b.ess_sup),
                num(b.k_choice),
                num(b.k_theorem),
                num(b.margin),
                num(b.eps_threshold),
                b.eps_ok.to_string(),
                num(t.c_min),
                b.pass.to_string(),
            ])?;
        }
        w.flush()?;
    }

    let mut w = csv::Writer::from_path(dir.join("energy.csv"))?;
    w.write_record([
        "index",
        "eps",
        "lhs",
        "m_g",
        "eps_data_term",
        "c_emp",
        "dual_term",
        "poincare_ratio",
        "sup_k",
    ])?;
    for item in &report.items {
        let e = &item.energy;
        w.write_record([
            item.index.to_string(),
            num(item.eps),
            num(e.lhs),
            num(e.m_g),
            num(e.eps_data_term),
            num(e.c_emp),
            num(e.dual_term),
            num(e.poincare_ratio),
            num(item.sup_k),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join("gaps.csv"))?;
    w.write_record(["map", "level", "gap", "scale"])?;
    for g in &report.gaps {
        for (j, v) in g.profile.iter().enumerate() {
            w.write_record([g.name.clone(), j.to_string(), num(*v), num(g.scale)])?;
        }
    }
    w.flush()?;

    for (item, field) in report.items.iter().zip(&run.fields) {
        let mut f = BufWriter::new(File::create(dir.join(format!("u_eps{}.bin", item.index)))?);
        write_binary(field, &mut f)?;
        f.flush()?;
    }
    Ok(())
}
