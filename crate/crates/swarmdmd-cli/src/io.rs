//! File formats: trajectory CSV, interaction-model text, metric-series CSV,
//! density-grid CSV, and the summary tables. All floating-point values are
//! written with 17 significant digits so every round-trip is bit-lossless.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use swarmdmd::dmd::{Dynamics, InteractionModel};
use swarmdmd::metrics::{DensityGrid, MetricKind, MetricSeries, TimeBelow};
use swarmdmd::nalgebra::{DMatrix, Vector2};
use swarmdmd::observables::{FeatureKind, FeatureLayout};
use swarmdmd::trajectory::{AgentState, SwarmSnapshot, SwarmTrajectory};
use swarmdmd::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum FileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Invalid {
        path: String,
        #[source]
        source: CoreError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FileError + '_ {
    move |source| FileError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> FileError {
    FileError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// 17-significant-digit scientific notation: enough to reproduce any f64
/// exactly on parse.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(path: &Path, line: usize, field: &str, text: &str) -> Result<f64, FileError> {
    let v: f64 = text
        .trim()
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {field} value '{text}'")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite {field} '{text}'"),
        ));
    }
    Ok(v)
}

// ---------------------------------------------------------------------------
// Trajectory CSV: header `t,agent,x,y,theta`, rows sorted by (t, agent).
// ---------------------------------------------------------------------------

pub const TRAJECTORY_HEADER: &str = "t,agent,x,y,theta";

pub fn save_trajectory(traj: &SwarmTrajectory, path: &Path) -> Result<(), FileError> {
    let mut out = String::new();
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for snap in traj.snapshots() {
        for (i, agent) in snap.agents.iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                fmt_f64(snap.time),
                i,
                fmt_f64(agent.position.x),
                fmt_f64(agent.position.y),
                fmt_f64(agent.heading)
            );
        }
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_trajectory(path: &Path) -> Result<SwarmTrajectory, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRAJECTORY_HEADER => {}
        Some((_, header)) => {
            return Err(parse_err(
                path,
                1,
                format!("expected header '{TRAJECTORY_HEADER}', got '{header}'"),
            ))
        }
        None => return Err(parse_err(path, 1, "empty file")),
    }

    struct Row {
        t: f64,
        agent: usize,
        x: f64,
        y: f64,
        theta: f64,
        line: usize,
    }
    let mut rows: Vec<Row> = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(parse_err(
                path,
                line_no,
                format!("expected 5 comma-separated fields, got {}", fields.len()),
            ));
        }
        let t = parse_f64(path, line_no, "t", fields[0])?;
        let agent: usize = fields[1]
            .trim()
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("invalid agent id '{}'", fields[1])))?;
        let x = parse_f64(path, line_no, "x", fields[2])?;
        let y = parse_f64(path, line_no, "y", fields[3])?;
        let theta = parse_f64(path, line_no, "theta", fields[4])?;
        rows.push(Row {
            t,
            agent,
            x,
            y,
            theta,
            line: line_no,
        });
    }
    if rows.is_empty() {
        return Err(parse_err(path, 1, "no data rows"));
    }

    // Tolerate arbitrary row order: restore (t, agent) ordering. Times from
    // one snapshot print identically, so exact equality groups them.
    rows.sort_by(|a, b| {
        a.t.partial_cmp(&b.t)
            .expect("finite times compare")
            .then(a.agent.cmp(&b.agent))
    });
    let mut snapshots: Vec<SwarmSnapshot> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let t = rows[i].t;
        let mut j = i;
        while j < rows.len() && rows[j].t == t {
            j += 1;
        }
        let group = &rows[i..j];
        for (expected, row) in group.iter().enumerate() {
            if row.agent != expected {
                let message = if row.agent > expected {
                    format!("missing agent {expected} at t = {t}")
                } else {
                    format!("duplicate agent {} at t = {t}", row.agent)
                };
                return Err(parse_err(path, row.line, message));
            }
        }
        if let Some(first) = snapshots.first() {
            if group.len() != first.agent_count() {
                return Err(parse_err(
                    path,
                    group[0].line,
                    format!(
                        "t = {t} has {} agents, expected {}",
                        group.len(),
                        first.agent_count()
                    ),
                ));
            }
        }
        snapshots.push(SwarmSnapshot::new(
            t,
            group
                .iter()
                .map(|r| AgentState::new(Vector2::new(r.x, r.y), r.theta))
                .collect(),
        ));
        i = j;
    }
    if snapshots.len() < 2 {
        return Err(parse_err(
            path,
            1,
            "need at least two distinct times to infer the time step",
        ));
    }
    let dt = snapshots[1].time - snapshots[0].time;
    SwarmTrajectory::new(dt, snapshots).map_err(|source| FileError::Invalid {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Interaction-model text format:
//   line 1: `swarmdmd-k v1 <rows> <cols> <rank> <dynamics> <dt>`
//   rows of K, whitespace-separated
//   final line: feature kind names, plus `signed` when relative features
//   keep their sign
// ---------------------------------------------------------------------------

pub const MODEL_MAGIC: &str = "swarmdmd-k";
pub const MODEL_VERSION: &str = "v1";

pub fn save_model(model: &InteractionModel, path: &Path) -> Result<(), FileError> {
    let (rows, cols) = model.k.shape();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{MODEL_MAGIC} {MODEL_VERSION} {rows} {cols} {} {} {}",
        model.rank,
        model.dynamics.as_str(),
        fmt_f64(model.dt)
    );
    for r in 0..rows {
        let mut first = true;
        for c in 0..cols {
            if !first {
                out.push(' ');
            }
            out.push_str(&fmt_f64(model.k[(r, c)]));
            first = false;
        }
        out.push('\n');
    }
    for (i, kind) in model.layout.kinds().iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(kind.as_str());
    }
    if model.layout.signed_relatives() {
        out.push_str(" signed");
    }
    out.push('\n');
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<InteractionModel, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 7 || tokens[0] != MODEL_MAGIC || tokens[1] != MODEL_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("expected header '{MODEL_MAGIC} {MODEL_VERSION} rows cols rank dynamics dt'"),
        ));
    }
    let rows: usize = tokens[2]
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid row count"))?;
    let cols: usize = tokens[3]
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid column count"))?;
    let rank: usize = tokens[4]
        .parse()
        .map_err(|_| parse_err(path, 1, "invalid rank"))?;
    let dynamics = Dynamics::from_str(tokens[5]).map_err(|e| parse_err(path, 1, e.to_string()))?;
    let dt = parse_f64(path, 1, "dt", tokens[6])?;
    if rows == 0 || !rows.is_multiple_of(2) {
        return Err(parse_err(
            path,
            1,
            format!("row count must be a positive even number (2 per agent), got {rows}"),
        ));
    }

    let mut k = DMatrix::zeros(rows, cols);
    for r in 0..rows {
        let (line_no, line) = lines
            .next()
            .ok_or_else(|| parse_err(path, r + 2, format!("missing matrix row {r}")))?;
        let mut count = 0;
        for (c, tok) in line.split_whitespace().enumerate() {
            if c >= cols {
                return Err(parse_err(
                    path,
                    line_no + 1,
                    format!("row {r} has more than {cols} entries"),
                ));
            }
            k[(r, c)] = parse_f64(path, line_no + 1, "matrix entry", tok)?;
            count += 1;
        }
        if count != cols {
            return Err(parse_err(
                path,
                line_no + 1,
                format!("row {r} has {count} entries, expected {cols}"),
            ));
        }
    }

    let (line_no, kinds_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, rows + 2, "missing feature kind list"))?;
    let mut kinds = Vec::new();
    let mut signed = false;
    for tok in kinds_line.split_whitespace() {
        if tok == "signed" {
            signed = true;
        } else {
            kinds.push(
                FeatureKind::from_str(tok)
                    .map_err(|e| parse_err(path, line_no + 1, e.to_string()))?,
            );
        }
    }
    let layout = FeatureLayout::new(kinds, rows / 2)
        .map(|l| l.with_signed_relatives(signed))
        .map_err(|source| FileError::Invalid {
            path: path.display().to_string(),
            source,
        })?;
    if layout.total_width() != cols {
        return Err(parse_err(
            path,
            line_no + 1,
            format!(
                "feature kinds imply width {} but the matrix has {cols} columns",
                layout.total_width()
            ),
        ));
    }
    Ok(InteractionModel {
        k,
        layout,
        rank,
        dynamics,
        dt,
    })
}

// ---------------------------------------------------------------------------
// Metric series CSV: header `t,value`.
// ---------------------------------------------------------------------------

pub fn save_series(series: &MetricSeries, path: &Path) -> Result<(), FileError> {
    let mut out = String::from("t,value\n");
    for (t, v) in series.times.iter().zip(&series.values) {
        let _ = writeln!(out, "{},{}", fmt_f64(*t), fmt_f64(*v));
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn load_series(path: &Path, metric: MetricKind) -> Result<MetricSeries, FileError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if idx == 0 {
            if line.trim() != "t,value" {
                return Err(parse_err(path, 1, "expected header 't,value'"));
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, idx + 1, "expected 't,value' row"))?;
        times.push(parse_f64(path, idx + 1, "t", t)?);
        values.push(parse_f64(path, idx + 1, "value", v)?);
    }
    MetricSeries::new(metric, times, values).map_err(|source| FileError::Invalid {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Density grid CSV: two header lines (`spacing,<v>` and `width,<v>`), then
// the grid rows in row-major order.
// ---------------------------------------------------------------------------

pub fn save_grid(grid: &DensityGrid, path: &Path) -> Result<(), FileError> {
    let mut out = String::new();
    let _ = writeln!(out, "spacing,{}", fmt_f64(grid.spec.spacing));
    let _ = writeln!(out, "width,{}", fmt_f64(grid.spec.width));
    for row in 0..grid.cells.nrows() {
        let mut first = true;
        for col in 0..grid.cells.ncols() {
            if !first {
                out.push(',');
            }
            out.push_str(&fmt_f64(grid.cells[(row, col)]));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// Summary tables: aligned text plus machine-readable CSV with the column
// names e_x, e_theta, e_P, e_M, t_x, t_theta, t_P, t_M.
// ---------------------------------------------------------------------------

/// One experiment's summary: training means of the four error series and
/// the post-training survival times at the configured threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub name: String,
    pub interaction_radius: f64,
    pub noise: f64,
    pub e_x: f64,
    pub e_theta: f64,
    pub e_p: f64,
    pub e_m: f64,
    pub t_x: TimeBelow,
    pub t_theta: TimeBelow,
    pub t_p: TimeBelow,
    pub t_m: TimeBelow,
}

/// A suite entry: either a summary or a per-row failure record.
#[derive(Debug, Clone)]
pub enum SuiteRow {
    Ok(SummaryRow),
    Failed { name: String, message: String },
}

fn fmt_time_below(t: &TimeBelow) -> String {
    match t {
        TimeBelow::Bounded(v) => format!("{v:.2}"),
        TimeBelow::Unbounded => "-".to_string(),
    }
}

fn fmt_time_below_csv(t: &TimeBelow) -> String {
    match t {
        TimeBelow::Bounded(v) => fmt_f64(*v),
        TimeBelow::Unbounded => "unbounded".to_string(),
    }
}

pub const SUMMARY_CSV_HEADER: &str = "name,r,eta,e_x,e_theta,e_P,e_M,t_x,t_theta,t_P,t_M";

pub fn summary_csv(rows: &[SuiteRow]) -> String {
    let mut out = String::from(SUMMARY_CSV_HEADER);
    out.push('\n');
    for row in rows {
        match row {
            SuiteRow::Ok(s) => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{}",
                    s.name,
                    fmt_f64(s.interaction_radius),
                    fmt_f64(s.noise),
                    fmt_f64(s.e_x),
                    fmt_f64(s.e_theta),
                    fmt_f64(s.e_p),
                    fmt_f64(s.e_m),
                    fmt_time_below_csv(&s.t_x),
                    fmt_time_below_csv(&s.t_theta),
                    fmt_time_below_csv(&s.t_p),
                    fmt_time_below_csv(&s.t_m)
                );
            }
            SuiteRow::Failed { name, message } => {
                let _ = writeln!(out, "{name},,,,,,,,,,error: {}", message.replace(',', ";"));
            }
        }
    }
    out
}

pub fn summary_text(rows: &[SuiteRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} {:>6} {:>8} {:>10} {:>10} {:>10} {:>10} {:>8} {:>8} {:>8} {:>8}",
        "name", "r", "eta", "e_x", "e_theta", "e_P", "e_M", "t_x", "t_theta", "t_P", "t_M"
    );
    for row in rows {
        match row {
            SuiteRow::Ok(s) => {
                let _ = writeln!(
                    out,
                    "{:<24} {:>6.3} {:>8.4} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>8} {:>8} {:>8} {:>8}",
                    s.name,
                    s.interaction_radius,
                    s.noise,
                    s.e_x,
                    s.e_theta,
                    s.e_p,
                    s.e_m,
                    fmt_time_below(&s.t_x),
                    fmt_time_below(&s.t_theta),
                    fmt_time_below(&s.t_p),
                    fmt_time_below(&s.t_m)
                );
            }
            SuiteRow::Failed { name, message } => {
                let _ = writeln!(out, "{name:<24} FAILED: {message}");
            }
        }
    }
    out
}

pub fn save_summary(rows: &[SuiteRow], dir: &Path, stem: &str) -> Result<(), FileError> {
    let text_path = dir.join(format!("{stem}.txt"));
    fs::write(&text_path, summary_text(rows)).map_err(io_err(&text_path))?;
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, summary_csv(rows)).map_err(io_err(&csv_path))
}
