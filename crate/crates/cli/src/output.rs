//! Writing the report and the plot-ready CSV series.

use std::fs;
use std::path::{Path, PathBuf};

use brwre_core::simulator::TrialStatus;
use clap::ValueEnum;

use crate::error::{CliError, Result};
use crate::report::{fmt_f64, to_json, RunReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Both,
}

fn write_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes the requested artifacts into `dir` and returns their paths.
pub fn write_all(report: &RunReport, dir: &Path, format: Format) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(write_err(dir))?;
    let mut written = vec![];
    if matches!(format, Format::Json | Format::Both) {
        let path = dir.join("report.json");
        fs::write(&path, to_json(report)?).map_err(write_err(&path))?;
        written.push(path);
    }
    if matches!(format, Format::Csv | Format::Both) {
        written.extend(write_csv(report, dir)?);
    }
    Ok(written)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let file = fs::File::create(path).map_err(write_err(path))?;
    Ok(csv::Writer::from_writer(file))
}

fn opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut written = vec![];

    if let Some(rho) = &report.rho_series {
        let path = dir.join("rho_sweep.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["N", "rho"])?;
        for p in rho {
            w.write_record([p.n.to_string(), fmt_f64(p.rho)])?;
        }
        w.flush().map_err(write_err(&path))?;
        written.push(path);
    }

    if let Some(s) = &report.survival {
        let path = dir.join("survival.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["trial", "status", "extinction_time", "last_origin_visit"])?;
        for (i, o) in s.estimate.outcomes.iter().enumerate() {
            let status = match o.status {
                TrialStatus::Extinct => "Extinct",
                TrialStatus::CapReached => "CapReached",
                TrialStatus::AliveAtHorizon => "AliveAtHorizon",
            };
            w.write_record([
                i.to_string(),
                status.to_string(),
                opt(o.extinction_time),
                opt(o.last_origin_visit),
            ])?;
        }
        w.flush().map_err(write_err(&path))?;
        written.push(path);
    }

    if let Some(f) = &report.frozen {
        let path = dir.join("frozen_profile.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["k", "m_k", "ln_f_k"])?;
        // Flagged levels keep ln f(k) at its previous value, as in the
        // report's ln_f series which skips them.
        let mut ln_f = 0.0;
        w.write_record(["0".to_string(), String::new(), fmt_f64(ln_f)])?;
        for l in &f.profile.levels {
            if !l.flagged {
                ln_f += l.mean.ln();
            }
            w.write_record([l.k.to_string(), fmt_f64(l.mean), fmt_f64(ln_f)])?;
        }
        w.flush().map_err(write_err(&path))?;
        written.push(path);
    }

    if let Some(t) = &report.supermartingale {
        let path = dir.join("supermartingale.csv");
        let mut w = csv_writer(&path)?;
        w.write_record(["n", "mean_h"])?;
        for (n, h) in t.mean_h.iter().enumerate() {
            w.write_record([n.to_string(), fmt_f64(*h)])?;
        }
        w.flush().map_err(write_err(&path))?;
        written.push(path);
    }
    Ok(written)
}
