//! CSV result tables.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use freshsched_core::{Metric, ModelParams, PolicySpec, Threshold};
use thiserror::Error;

use crate::config::parse_threshold;
use crate::experiment::{ResultRow, Source, Status};

pub const HEADER: [&str; 16] = [
    "policy",
    "m",
    "n",
    "k",
    "lambda_u",
    "lambda_q",
    "mu_u",
    "mu_q",
    "metric",
    "source",
    "mean",
    "ci_half_width",
    "replications",
    "horizon",
    "seed",
    "status",
];

#[derive(Debug, Error)]
pub enum TableError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: record {record}: {message}", path.display())]
    Malformed {
        path: PathBuf,
        record: usize,
        message: String,
    },
}

/// Six significant digits, keeping trailing zeros (`2.5` -> `2.50000`).
/// Very large or small magnitudes switch to exponent form.
pub fn format_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..6).contains(&exp) {
        format!("{x:.*}", (5 - exp) as usize)
    } else {
        sci
    }
}

fn threshold_cell(t: Threshold) -> String {
    t.to_string()
}

/// `(m, n, k)` cells for a policy; blank where the policy has no such threshold.
pub fn threshold_cells(policy: &PolicySpec) -> [String; 3] {
    match *policy {
        PolicySpec::Fcfs => Default::default(),
        PolicySpec::QueryK(k) | PolicySpec::UpdateK(k) => [String::new(), String::new(), threshold_cell(k)],
        PolicySpec::JointMN { update, query } => [threshold_cell(update), threshold_cell(query), String::new()],
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(format_sig6).unwrap_or_default()
}

fn record(row: &ResultRow) -> [String; 16] {
    let [m, n, k] = threshold_cells(&row.policy);
    let p = &row.params;
    [
        row.policy.to_string(),
        m,
        n,
        k,
        format_sig6(p.lambda_u()),
        format_sig6(p.lambda_q()),
        format_sig6(p.mu_u()),
        format_sig6(p.mu_q()),
        row.metric.name().to_string(),
        row.source.name().to_string(),
        opt(row.mean),
        opt(row.ci_half_width),
        row.replications.map(|r| r.to_string()).unwrap_or_default(),
        opt(row.horizon),
        row.seed.map(|s| s.to_string()).unwrap_or_default(),
        row.status.to_string(),
    ]
}

/// Writes the header and one record per row, LF-terminated.
pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(HEADER)?;
    for row in rows {
        w.write_record(record(row))?;
    }
    w.flush()?;
    Ok(())
}

pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), TableError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| TableError::Io {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let file = File::create(path).map_err(|source| TableError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(rows, io::BufWriter::new(file)).map_err(|source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    })
}

fn policy_from_cells(name: &str, m: &str, n: &str, k: &str) -> Option<PolicySpec> {
    let t = |s: &str| parse_threshold(s);
    if name == "FCFS" {
        Some(PolicySpec::Fcfs)
    } else if name.starts_with("Query-") {
        Some(PolicySpec::QueryK(t(k)?))
    } else if name.starts_with("Update-") {
        Some(PolicySpec::UpdateK(t(k)?))
    } else if name.starts_with("Joint-") {
        PolicySpec::joint(t(m)?, t(n)?).ok()
    } else {
        None
    }
}

fn parse_row(rec: &csv::StringRecord) -> Result<ResultRow, String> {
    let cell = |i: usize| rec.get(i).unwrap_or("");
    let num = |i: usize| -> Result<Option<f64>, String> {
        match cell(i) {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| format!("{}: {s:?} is not a number", HEADER[i])),
        }
    };
    let policy = policy_from_cells(cell(0), cell(1), cell(2), cell(3))
        .ok_or_else(|| format!("unknown policy {:?}", cell(0)))?;
    let rate = |i: usize| num(i)?.ok_or_else(|| format!("{} is empty", HEADER[i]));
    let params = ModelParams::new(rate(4)?, rate(6)?, rate(5)?, rate(7)?).map_err(|e| e.to_string())?;
    let metric = Metric::from_name(cell(8)).ok_or_else(|| format!("unknown metric {:?}", cell(8)))?;
    let source = Source::from_name(cell(9)).ok_or_else(|| format!("unknown source {:?}", cell(9)))?;
    let int = |i: usize| -> Result<Option<u64>, String> {
        match cell(i) {
            "" => Ok(None),
            s => s.parse().map(Some).map_err(|_| format!("{}: {s:?} is not an integer", HEADER[i])),
        }
    };
    Ok(ResultRow {
        policy,
        params,
        metric,
        source,
        mean: num(10)?,
        ci_half_width: num(11)?,
        replications: int(12)?.map(|r| r as u32),
        horizon: num(13)?,
        seed: int(14)?,
        status: Status::parse(cell(15)),
    })
}

/// Reads a table written by [`emit_csv`].
pub fn read_csv(path: &Path) -> Result<Vec<ResultRow>, TableError> {
    let csv_err = |source| TableError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.iter().ne(HEADER) {
        return Err(TableError::Malformed {
            path: path.to_path_buf(),
            record: 0,
            message: "unexpected header".into(),
        });
    }
    r.records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec.map_err(csv_err)?;
            parse_row(&rec).map_err(|message| TableError::Malformed {
                path: path.to_path_buf(),
                record: i + 1,
                message,
            })
        })
        .collect()
}
