//! Bit-exact serialization: snapshots as a two-line text header plus raw
//! little-endian doubles, monitors as CSV with 17 significant digits
//! (lossless double round-trip), and plain-text certificate/rate reports.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::certificates::CertificateReport;
use crate::decay::RateReport;
use crate::error::{Error, Result};
use crate::flow::{Sample, Trajectory};
use crate::grid::{GraphState, Grid};

const SNAP_MAGIC: &str = "IMCF-SNAP 1";
pub const MONITOR_HEADER: &str =
    "t,y_inf,y_sup,v_sup,w_inf,H_inf,H_sup,grad_sup2,hess_sup,G_sup,P_max_sup";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        what: path.display().to_string(),
        reason: reason.into(),
    }
}

/// Writes `IMCF-SNAP 1`, a metadata line, then the heights row-major as
/// little-endian 64-bit floats. The metadata floats use shortest
/// round-trip formatting, so reading recovers them bit-exactly.
pub fn write_snapshot(path: &Path, state: &GraphState) -> Result<()> {
    let grid = state.grid;
    let shape = if grid.dim() == 1 {
        format!("{}", grid.points_per_axis())
    } else {
        format!("{0},{0}", grid.points_per_axis())
    };
    let mut bytes = format!(
        "{SNAP_MAGIC}\nn={} shape={shape} L={} t={}\n",
        grid.dim(),
        grid.length(),
        state.t
    )
    .into_bytes();
    for &v in state.y() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn read_snapshot(path: &Path) -> Result<GraphState> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let first_nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing header"))?;
    let magic = std::str::from_utf8(&bytes[..first_nl])
        .map_err(|_| format_err(path, "header is not text"))?;
    if magic != SNAP_MAGIC {
        return Err(format_err(path, format!("bad magic `{magic}`")));
    }
    let rest = &bytes[first_nl + 1..];
    let second_nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| format_err(path, "missing metadata line"))?;
    let meta = std::str::from_utf8(&rest[..second_nl])
        .map_err(|_| format_err(path, "metadata is not text"))?;

    let mut n: Option<usize> = None;
    let mut shape: Option<Vec<usize>> = None;
    let mut length: Option<f64> = None;
    let mut t: Option<f64> = None;
    for token in meta.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| format_err(path, format!("bad metadata token `{token}`")))?;
        match key {
            "n" => n = value.parse().ok(),
            "shape" => {
                shape = value
                    .split(',')
                    .map(|s| s.parse::<usize>().ok())
                    .collect::<Option<Vec<usize>>>()
            }
            "L" => length = value.parse().ok(),
            "t" => t = value.parse().ok(),
            other => return Err(format_err(path, format!("unknown metadata key `{other}`"))),
        }
    }
    let (n, shape, length, t) = match (n, shape, length, t) {
        (Some(n), Some(s), Some(l), Some(t)) => (n, s, l, t),
        _ => return Err(format_err(path, "incomplete or unparseable metadata")),
    };
    if shape.len() != n {
        return Err(format_err(
            path,
            format!("shape has {} component(s) for n={n}", shape.len()),
        ));
    }
    if n == 2 && shape[0] != shape[1] {
        return Err(format_err(path, "non-square shapes are not supported"));
    }
    let grid = Grid::new(n, shape[0], length)?;
    let data = &rest[second_nl + 1..];
    let expected = grid.num_points() * 8;
    if data.len() != expected {
        return Err(format_err(
            path,
            format!("expected {expected} data bytes, found {}", data.len()),
        ));
    }
    let y: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    GraphState::new(grid, t, y)
}

/// CSV with the pinned column order; every value is printed with 17
/// significant digits so the parse-back is bit-identical.
pub fn write_monitors(path: &Path, samples: &[Sample]) -> Result<()> {
    let mut out = String::with_capacity(64 + samples.len() * 24 * 11);
    out.push_str(MONITOR_HEADER);
    out.push('\n');
    for s in samples {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t,
            s.y_inf,
            s.y_sup,
            s.v_sup,
            s.w_inf,
            s.h_inf,
            s.h_sup,
            s.grad_sup2,
            s.hess_sup,
            s.g_sup,
            s.p_max_sup
        )
        .expect("string write is infallible");
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Reads monitors back. The per-sample curvature-at-gradient-argmax field
/// is not part of the CSV and comes back as None; downstream checks fall
/// back to H_sup, which bounds it.
pub fn read_monitors(path: &Path) -> Result<Vec<Sample>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == MONITOR_HEADER => {}
        Some(h) => return Err(format_err(path, format!("bad header `{h}`"))),
        None => return Err(format_err(path, "empty file")),
    }
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", idx + 2)))?;
        if fields.len() != 11 {
            return Err(format_err(
                path,
                format!("row {}: expected 11 columns, got {}", idx + 2, fields.len()),
            ));
        }
        samples.push(Sample {
            t: fields[0],
            y_inf: fields[1],
            y_sup: fields[2],
            v_sup: fields[3],
            w_inf: fields[4],
            h_inf: fields[5],
            h_sup: fields[6],
            grad_sup2: fields[7],
            hess_sup: fields[8],
            g_sup: fields[9],
            p_max_sup: fields[10],
            h_at_grad_argmax: None,
        });
    }
    Ok(samples)
}

pub fn render_certificates(report: &CertificateReport) -> String {
    let mut out = String::new();
    for r in &report.records {
        writeln!(
            out,
            "{} {} worst_margin={:.16e} at_t={:.16e}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.worst_margin,
            r.worst_t
        )
        .expect("string write is infallible");
    }
    out
}

pub fn write_certificates(path: &Path, report: &CertificateReport) -> Result<()> {
    fs::write(path, render_certificates(report)).map_err(io_err(path))
}

pub fn render_rates(report: &RateReport) -> String {
    let opt = |v: Option<f64>| match v {
        Some(x) => format!("{x:.6e}"),
        None => "none".into(),
    };
    let mut out = String::new();
    for r in &report.records {
        let (rate, r2, window, points) = match &r.fit {
            Some(f) => (
                Some(f.rate),
                Some(f.r_squared),
                format!("[{:.6e},{:.6e}]", f.window.0, f.window.1),
                f.n_points,
            ),
            None => (None, None, "[none]".into(), 0),
        };
        writeln!(
            out,
            "{} {} target={} rate={} r_squared={} deviation={} window={} points={} note={}",
            r.name,
            r.status.label(),
            opt(r.target),
            opt(rate),
            opt(r2),
            opt(r.relative_deviation),
            window,
            points,
            r.note
        )
        .expect("string write is infallible");
    }
    out
}

pub fn write_rates(path: &Path, report: &RateReport) -> Result<()> {
    fs::write(path, render_rates(report)).map_err(io_err(path))
}

pub fn snapshot_path(dir: &Path, index: usize) -> PathBuf {
    dir.join(format!("snapshot_{index:03}.snap"))
}

/// Emits monitors.csv, certificates.txt, rates.txt, and one snapshot file
/// per stored snapshot (snapshot_000.snap is the earliest).
pub fn write_outputs(
    dir: &Path,
    traj: &Trajectory,
    certs: &CertificateReport,
    rates: &RateReport,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_monitors(&dir.join("monitors.csv"), &traj.samples)?;
    write_certificates(&dir.join("certificates.txt"), certs)?;
    write_rates(&dir.join("rates.txt"), rates)?;
    for (k, snap) in traj.snapshots.iter().enumerate() {
        write_snapshot(&snapshot_path(dir, k), snap)?;
    }
    Ok(())
}
