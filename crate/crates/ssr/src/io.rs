//! On-disk formats.
//!
//! A dataset is a CSV with one step per row plus a TOML sidecar holding the
//! fields that are not per-step. TutorBot observations go to a second CSV
//! keyed by the same `(traj_id, t)`. Policies and Q-tables are
//! `state,action,value` triples. Floats are written with 17 significant
//! digits so every finite value reads back bit-for-bit.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use ssr_core::envs::TutorBotObs;
use ssr_core::select::ScoreTable;
use ssr_core::{Dataset, Step, TabularPolicy, TabularQ, Trajectory};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{path}: {msg}")]
    Schema { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Toml { path: PathBuf, source: toml::de::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.to_path_buf(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> IoError + '_ {
    move |source| IoError::Csv { path: path.to_path_buf(), source }
}

fn schema(path: &Path, msg: impl Into<String>) -> IoError {
    IoError::Schema { path: path.to_path_buf(), msg: msg.into() }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(path: &Path, field: &str, s: &str) -> Result<f64, IoError> {
    s.trim().parse().map_err(|_| schema(path, format!("{field}: cannot parse {s:?} as a number")))
}

fn parse_usize(path: &Path, field: &str, s: &str) -> Result<usize, IoError> {
    s.trim().parse().map_err(|_| schema(path, format!("{field}: cannot parse {s:?} as an index")))
}

fn open_reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn expect_header(path: &Path, reader: &mut csv::Reader<fs::File>, want: &[&str]) -> Result<(), IoError> {
    let got = reader.headers().map_err(csv_err(path))?;
    if got.iter().ne(want.iter().copied()) {
        return Err(schema(path, format!("expected header {:?}, found {:?}", want.join(","), got.iter().collect::<Vec<_>>().join(","))));
    }
    Ok(())
}

fn write_rows(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), IoError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(header).map_err(csv_err(path))?;
    for row in rows {
        w.write_record(&row).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub gamma: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub env_tag: String,
}

pub const DATASET_HEADER: [&str; 7] = ["traj_id", "t", "state", "action", "reward", "next_state", "propensity"];
pub const AUX_HEADER: [&str; 6] = ["traj_id", "t", "pretest", "anxiety", "thinking", "pre_termination"];
pub const TABLE_HEADER: [&str; 3] = ["state", "action", "value"];

/// `data.csv` -> `data.meta.toml`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.toml")
}

/// `data.csv` -> `data.aux.csv`.
pub fn aux_path(csv: &Path) -> PathBuf {
    csv.with_extension("aux.csv")
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), IoError> {
    let rows = ds.trajectories.iter().enumerate().flat_map(|(i, traj)| {
        traj.steps.iter().enumerate().map(move |(t, s)| {
            vec![
                i.to_string(),
                t.to_string(),
                s.state.to_string(),
                s.action.to_string(),
                fmt_f64(s.reward),
                s.next_state.to_string(),
                fmt_f64(s.propensity),
            ]
        })
    });
    write_rows(path, &DATASET_HEADER, rows)?;
    let meta = DatasetMeta {
        gamma: ds.gamma,
        n_states: ds.n_states,
        n_actions: ds.n_actions,
        env_tag: ds.env_tag.clone(),
    };
    let mp = meta_path(path);
    let text = toml::to_string(&meta).expect("metadata is plain data");
    fs::write(&mp, text).map_err(io_err(&mp))
}

/// Rows grouped by `traj_id`, which must run `0, 1, ..` with `t` counting up
/// from 0 inside each trajectory.
fn grouped<T>(
    path: &Path,
    reader: &mut csv::Reader<fs::File>,
    mut parse: impl FnMut(&csv::StringRecord) -> Result<T, IoError>,
) -> Result<Vec<Vec<T>>, IoError> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let id = parse_usize(path, "traj_id", &rec[0])?;
        let t = parse_usize(path, "t", &rec[1])?;
        if id == out.len() && t == 0 {
            out.push(Vec::new());
        }
        if id + 1 != out.len() || t != out[id].len() {
            return Err(schema(path, format!("row {}: expected traj_id {} t {}, found {id} {t}", line + 2, out.len().saturating_sub(1), out.last().map_or(0, Vec::len))));
        }
        out[id].push(parse(&rec)?);
    }
    Ok(out)
}

pub fn read_dataset(path: &Path) -> Result<Dataset, IoError> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(io_err(&mp))?;
    let meta: DatasetMeta = toml::from_str(&text).map_err(|source| IoError::Toml { path: mp.clone(), source })?;
    let mut reader = open_reader(path)?;
    expect_header(path, &mut reader, &DATASET_HEADER)?;
    let trajectories = grouped(path, &mut reader, |r| {
        Ok(Step {
            state: parse_usize(path, "state", &r[2])?,
            action: parse_usize(path, "action", &r[3])?,
            reward: parse_f64(path, "reward", &r[4])?,
            next_state: parse_usize(path, "next_state", &r[5])?,
            propensity: parse_f64(path, "propensity", &r[6])?,
        })
    })?
    .into_iter()
    .map(|steps| Trajectory { steps })
    .collect();
    Dataset::new(trajectories, meta.gamma, meta.n_states, meta.n_actions, meta.env_tag)
        .map_err(|e| schema(path, e.to_string()))
}

pub fn write_aux(path: &Path, aux: &[Vec<TutorBotObs>]) -> Result<(), IoError> {
    let rows = aux.iter().enumerate().flat_map(|(i, obs)| {
        obs.iter().enumerate().map(move |(t, o)| {
            vec![
                i.to_string(),
                t.to_string(),
                o.pretest.to_string(),
                fmt_f64(o.anxiety),
                fmt_f64(o.thinking),
                o.pre_termination.to_string(),
            ]
        })
    });
    write_rows(path, &AUX_HEADER, rows)
}

pub fn read_aux(path: &Path) -> Result<Vec<Vec<TutorBotObs>>, IoError> {
    let mut reader = open_reader(path)?;
    expect_header(path, &mut reader, &AUX_HEADER)?;
    let small = |field: &str, s: &str| -> Result<u8, IoError> {
        s.trim().parse().map_err(|_| schema(path, format!("{field}: cannot parse {s:?}")))
    };
    grouped(path, &mut reader, |r| {
        Ok(TutorBotObs {
            pretest: small("pretest", &r[2])?,
            anxiety: parse_f64(path, "anxiety", &r[3])?,
            thinking: parse_f64(path, "thinking", &r[4])?,
            pre_termination: small("pre_termination", &r[5])?,
        })
    })
}

fn table_rows(n_states: usize, n_actions: usize, values: &[f64]) -> impl Iterator<Item = Vec<String>> + '_ {
    (0..n_states * n_actions).map(move |i| {
        vec![(i / n_actions).to_string(), (i % n_actions).to_string(), fmt_f64(values[i])]
    })
}

/// Dense `(n_states, n_actions, values)`; every pair must appear exactly once.
fn read_table(path: &Path) -> Result<(usize, usize, Vec<f64>), IoError> {
    let mut reader = open_reader(path)?;
    expect_header(path, &mut reader, &TABLE_HEADER)?;
    let mut entries = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        entries.push((
            parse_usize(path, "state", &rec[0])?,
            parse_usize(path, "action", &rec[1])?,
            parse_f64(path, "value", &rec[2])?,
        ));
    }
    let ns = entries.iter().map(|e| e.0 + 1).max().unwrap_or(0);
    let na = entries.iter().map(|e| e.1 + 1).max().unwrap_or(0);
    if ns * na != entries.len() {
        return Err(schema(path, format!("{} rows do not cover a {ns}x{na} table", entries.len())));
    }
    let mut values = vec![f64::NAN; ns * na];
    for (s, a, v) in entries {
        if !values[s * na + a].is_nan() {
            return Err(schema(path, format!("state {s} action {a} appears twice")));
        }
        values[s * na + a] = v;
    }
    Ok((ns, na, values))
}

pub fn write_policy(path: &Path, policy: &TabularPolicy) -> Result<(), IoError> {
    write_rows(path, &TABLE_HEADER, table_rows(policy.n_states(), policy.n_actions(), policy.probs()))
}

pub fn read_policy(path: &Path) -> Result<TabularPolicy, IoError> {
    let (ns, na, values) = read_table(path)?;
    TabularPolicy::new(ns, na, values).map_err(|e| schema(path, e.to_string()))
}

pub fn write_q(path: &Path, q: &TabularQ) -> Result<(), IoError> {
    write_rows(path, &TABLE_HEADER, table_rows(q.n_states(), q.n_actions(), q.values()))
}

pub fn read_q(path: &Path) -> Result<TabularQ, IoError> {
    let (ns, na, values) = read_table(path)?;
    TabularQ::new(ns, na, values).map_err(|e| schema(path, e.to_string()))
}

/// The score CSV as written: cells without a score are empty.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSheet {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<Option<f64>>>,
    pub aggregates: Vec<Option<f64>>,
    pub n_undefined: Vec<usize>,
}

impl From<&ScoreTable> for ScoreSheet {
    fn from(t: &ScoreTable) -> Self {
        ScoreSheet {
            labels: t.ah_specs.iter().map(|a| a.label.clone()).collect(),
            cells: t.cells.iter().map(|row| row.iter().map(|c| c.value()).collect()).collect(),
            aggregates: t.aggregates(),
            n_undefined: (0..t.n_ahs()).map(|i| t.n_undefined(i)).collect(),
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn write_scores(path: &Path, sheet: &ScoreSheet) -> Result<(), IoError> {
    let k = sheet.cells.first().map_or(0, Vec::len);
    let mut header = vec!["ah_label".to_string()];
    header.extend((0..k).map(|j| format!("split_{j}")));
    header.extend(["aggregate".to_string(), "n_undefined".to_string()]);
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = (0..sheet.labels.len()).map(|i| {
        let mut row = vec![sheet.labels[i].clone()];
        row.extend(sheet.cells[i].iter().map(|&c| opt(c)));
        row.push(opt(sheet.aggregates[i]));
        row.push(sheet.n_undefined[i].to_string());
        row
    });
    write_rows(path, &header, rows)
}

pub fn read_scores(path: &Path) -> Result<ScoreSheet, IoError> {
    let mut reader = open_reader(path)?;
    let header = reader.headers().map_err(csv_err(path))?.clone();
    let n = header.len();
    let k = n.checked_sub(3).ok_or_else(|| schema(path, "too few columns"))?;
    let ok = header.get(0) == Some("ah_label")
        && (0..k).all(|j| header.get(j + 1) == Some(format!("split_{j}").as_str()))
        && header.get(n - 2) == Some("aggregate")
        && header.get(n - 1) == Some("n_undefined");
    if !ok {
        return Err(schema(path, "header must be ah_label,split_0..,aggregate,n_undefined"));
    }
    let parse_opt = |field: &str, s: &str| -> Result<Option<f64>, IoError> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f64(path, field, s).map(Some)
        }
    };
    let mut sheet = ScoreSheet { labels: vec![], cells: vec![], aggregates: vec![], n_undefined: vec![] };
    for rec in reader.records() {
        let rec = rec.map_err(csv_err(path))?;
        sheet.labels.push(rec[0].to_string());
        sheet.cells.push((0..k).map(|j| parse_opt(&header[j + 1], &rec[j + 1])).collect::<Result<_, _>>()?);
        sheet.aggregates.push(parse_opt("aggregate", &rec[n - 2])?);
        sheet.n_undefined.push(parse_usize(path, "n_undefined", &rec[n - 1])?);
    }
    Ok(sheet)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub ssr: String,
}

impl Default for Versions {
    fn default() -> Self {
        Versions { ssr: env!("CARGO_PKG_VERSION").to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AhRecord {
    pub label: String,
    pub aggregate: Option<f64>,
    pub n_undefined: usize,
}

/// The run summary. Wall-clock time is kept out of it so reruns compare
/// byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub strategy: String,
    pub estimator: String,
    pub chosen_label: String,
    pub chosen_index: usize,
    pub aggregate: f64,
    pub true_value: Option<f64>,
    pub true_value_se: Option<f64>,
    pub seed: u64,
    pub versions: Versions,
    pub ahs: Vec<AhRecord>,
    /// Cells whose learner or estimator failed, as `label[split]: message`.
    pub failures: Vec<String>,
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(summary).expect("summary is plain data");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_summary(path: &Path) -> Result<Summary, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| schema(path, e.to_string()))
}

/// Appends one line to a log file.
pub fn append_line(path: &Path, line: &str) -> Result<(), IoError> {
    let mut f = fs::OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))?;
    writeln!(f, "{line}").map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_is_lossless() {
        for v in [0.1, 1.0 / 3.0, 201.0, -2.5e-300, f64::MIN_POSITIVE, f64::MAX, 5e-324] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(meta_path(Path::new("out/data.csv")), Path::new("out/data.meta.toml"));
        assert_eq!(aux_path(Path::new("out/data.csv")), Path::new("out/data.aux.csv"));
    }
}
