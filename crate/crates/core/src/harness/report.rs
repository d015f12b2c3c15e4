//! Persisting sweep reports as CSV, JSON and plot data.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::sweep::{SweepReport, SweepRow};
use crate::error::Result;
use crate::transport::Estimate;

pub const CSV_HEADER: &str =
    "epsilon,ell1,kappa,statistic,value,stderr,oracle,oracle_stderr,gap,gap_stderr,relative_gap";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
    Plot,
}

impl Format {
    pub fn parse(s: &str) -> Option<Format> {
        match s {
            "csv" => Some(Format::Csv),
            "json" => Some(Format::Json),
            "plot" => Some(Format::Plot),
            _ => None,
        }
    }
}

fn csv_line(row: &SweepRow, name: &str, est: Estimate, oracle: Option<Estimate>) -> String {
    let head = format!("{},{},{},{},{},{}", row.epsilon, row.ell1, row.kappa, name, est.value, est.stderr);
    match oracle {
        Some(o) => {
            let gap = (est.value - o.value).abs();
            let se = (est.stderr.powi(2) + o.stderr.powi(2)).sqrt();
            let rel = if o.value != 0.0 { gap / o.value.abs() } else { f64::INFINITY };
            format!("{head},{},{},{gap},{se},{rel}", o.value, o.stderr)
        }
        None => format!("{head},,,,,"),
    }
}

/// One line per epsilon per statistic.
pub fn csv_string(report: &SweepReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    let oracle = report.oracle.as_ref().filter(|o| o.error.is_none());
    let times = &report.metadata.config.transport.pair_times;
    for row in &report.rows {
        let Some(st) = &row.stats else { continue };
        let mut lines = vec![
            csv_line(row, "obs_mean", st.obs_mean, oracle.map(|o| o.obs_mean)),
            csv_line(row, "obs_variance", st.obs_variance, oracle.map(|o| o.obs_variance)),
            csv_line(row, "dispersion_slope", st.dispersion_slope, oracle.map(|o| o.dispersion_slope)),
        ];
        for (k, e) in st.pair_dispersion.iter().enumerate() {
            let o = oracle.and_then(|o| o.pair_dispersion.get(k).copied());
            lines.push(csv_line(row, &format!("pair_dispersion_t{}", times[k]), *e, o));
        }
        if let Some(e) = st.energy {
            let o = oracle
                .and_then(|o| o.initial_energy)
                .map(|value| Estimate { value, stderr: 0.0 });
            lines.push(csv_line(row, "energy", e, o));
        }
        lines.push(csv_line(
            row,
            "fk_violations",
            Estimate {
                value: st.fk_violations as f64,
                stderr: 0.0,
            },
            None,
        ));
        for l in lines {
            out.push_str(&l);
            out.push('\n');
        }
    }
    out
}

/// Whitespace-separated `epsilon gap stderr` per gap series.
pub fn plot_strings(report: &SweepReport) -> Vec<(String, String)> {
    report
        .gaps
        .iter()
        .map(|g| {
            let mut s = format!("# {} gap vs epsilon (monotone = {})\n# epsilon gap stderr\n", g.statistic, g.monotone);
            for i in 0..g.epsilon.len() {
                s.push_str(&format!("{} {} {}\n", g.epsilon[i], g.gap[i], g.stderr[i]));
            }
            (format!("gap_{}.dat", g.statistic.replace('.', "p")), s)
        })
        .collect()
}

/// Writes the requested formats into `dir` and returns the files written.
pub fn report_emit(report: &SweepReport, dir: &Path, formats: &[Format]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: &str| -> Result<()> {
        let path = dir.join(name);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(body.as_bytes())?;
        written.push(path);
        Ok(())
    };
    for f in formats {
        match f {
            Format::Csv => put("sweep.csv", &csv_string(report))?,
            Format::Json => put("report.json", &(report.to_json()? + "\n"))?,
            Format::Plot => {
                for (name, body) in plot_strings(report) {
                    put(&name, &body)?;
                }
            }
        }
    }
    Ok(written)
}

/// Reads a report written by [`report_emit`].
pub fn read_report(path: &Path) -> Result<SweepReport> {
    SweepReport::from_json(&std::fs::read_to_string(path)?)
}
