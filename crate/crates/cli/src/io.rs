//! CSV readers and writers for panels, timelines, model parameters, HMM
//! transitions and weights. Every float is written with `fmt_num`.

use std::fs;
use std::path::Path;

use tricluster::exp_model::ExpModelParams;
use tricluster::format::fmt_num;
use tricluster::hmm::ClusterHmm;
use tricluster::partition::{all_partitions, pairs, ClusterTimeline, Partition};
use tricluster::SeriesPanel;

use crate::error::{CliError, CliResult};

fn reader(path: &Path) -> CliResult<csv::Reader<fs::File>> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

fn writer(path: &Path) -> CliResult<csv::Writer<fs::File>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| CliError::io(path, e))
}

fn records(path: &Path) -> CliResult<(csv::StringRecord, Vec<csv::StringRecord>)> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| CliError::io(path, e))?.clone();
    let rows = rdr
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::io(path, e))?;
    Ok((header, rows))
}

fn field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, v: &str) -> CliResult<T>
where
    T::Err: std::fmt::Display,
{
    v.parse()
        .map_err(|e| CliError::io(path, format!("row {row}, column {name}: {e}")))
}

fn write_rows(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> CliResult<()> {
    let mut w = writer(path)?;
    w.write_record(header).map_err(|e| CliError::io(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| CliError::io(path, e))?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Panel CSV: `time,s1,...,sn` with times `1..=m` in order.
pub fn read_panel(path: &Path) -> CliResult<SeriesPanel> {
    let (header, rows) = records(path)?;
    if header.len() < 3 || &header[0] != "time" {
        return Err(CliError::io(path, "expected header time,s1,...,sn with n >= 2"));
    }
    let n = header.len() - 1;
    let mut values = Vec::with_capacity(rows.len() * n);
    for (r, row) in rows.iter().enumerate() {
        if row.len() != n + 1 {
            return Err(CliError::io(
                path,
                format!("row {} has {} fields, expected {}", r + 1, row.len(), n + 1),
            ));
        }
        let t: usize = field(path, r + 1, "time", &row[0])?;
        if t != r + 1 {
            return Err(CliError::io(
                path,
                format!("row {} has time {t}; times must be 1, 2, ...", r + 1),
            ));
        }
        for (c, v) in row.iter().enumerate().skip(1) {
            values.push(field::<f64>(path, r + 1, &header[c], v)?);
        }
    }
    if rows.is_empty() {
        return Err(CliError::io(path, "panel has no rows"));
    }
    Ok(SeriesPanel::new(n, rows.len(), values)?)
}

pub fn write_panel(path: &Path, panel: &SeriesPanel) -> CliResult<()> {
    let mut header = vec!["time".to_string()];
    header.extend((1..=panel.n_series()).map(|i| format!("s{i}")));
    let rows = (0..panel.n_steps()).map(|t| {
        let mut r = vec![(t + 1).to_string()];
        r.extend(panel.row(t + 1).iter().map(|&v| fmt_num(v)));
        r
    });
    write_rows(path, &header, rows)
}

/// Timeline CSV: `time,partition`.
pub fn read_timeline(path: &Path) -> CliResult<ClusterTimeline> {
    let (header, rows) = records(path)?;
    if header.len() != 2 || &header[0] != "time" || &header[1] != "partition" {
        return Err(CliError::io(path, "expected header time,partition"));
    }
    let steps = rows
        .iter()
        .enumerate()
        .map(|(r, row)| {
            Ok((
                field::<usize>(path, r + 1, "time", &row[0])?,
                field::<Partition>(path, r + 1, "partition", &row[1])?,
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(ClusterTimeline::new(steps)?)
}

pub fn write_timeline(path: &Path, tl: &ClusterTimeline) -> CliResult<()> {
    let header = ["time".to_string(), "partition".to_string()];
    write_rows(
        path,
        &header,
        tl.steps().iter().map(|(t, p)| vec![t.to_string(), p.to_string()]),
    )
}

/// Parameter CSV: `i,j,rate1,rate0,prior1`, one row per pair, 1-based.
pub fn read_params(path: &Path) -> CliResult<ExpModelParams> {
    let (header, rows) = records(path)?;
    let want = ["i", "j", "rate1", "rate0", "prior1"];
    if header.iter().ne(want) {
        return Err(CliError::io(path, "expected header i,j,rate1,rate0,prior1"));
    }
    let mut parsed = Vec::with_capacity(rows.len());
    for (r, row) in rows.iter().enumerate() {
        let i: usize = field(path, r + 1, "i", &row[0])?;
        let j: usize = field(path, r + 1, "j", &row[1])?;
        if i == 0 || i >= j {
            return Err(CliError::io(path, format!("row {}: need 1 <= i < j", r + 1)));
        }
        let vals: [f64; 3] = [
            field(path, r + 1, "rate1", &row[2])?,
            field(path, r + 1, "rate0", &row[3])?,
            field(path, r + 1, "prior1", &row[4])?,
        ];
        parsed.push((i - 1, j - 1, vals));
    }
    let n = parsed.iter().map(|&(_, j, _)| j + 1).max().unwrap_or(0);
    let expected = n * n.saturating_sub(1) / 2;
    let mut seen = vec![false; expected];
    let mut params = ExpModelParams::uniform(n.max(2), 1.0, 1.0, 0.5)?;
    for &(i, j, [r1, r0, p1]) in &parsed {
        let k = tricluster::partition::pair_index(i, j, n);
        if seen[k] {
            return Err(CliError::io(
                path,
                format!("pair ({}, {}) listed twice", i + 1, j + 1),
            ));
        }
        seen[k] = true;
        params.set_pair(i, j, r1, r0, p1)?;
    }
    if parsed.len() != expected || n < 2 {
        return Err(CliError::io(
            path,
            format!("expected all {expected} pairs for n = {n}"),
        ));
    }
    Ok(params)
}

pub fn write_params(path: &Path, params: &ExpModelParams) -> CliResult<()> {
    let header: Vec<String> = ["i", "j", "rate1", "rate0", "prior1"].map(String::from).to_vec();
    let rows = pairs(params.n()).map(|(i, j)| {
        vec![
            (i + 1).to_string(),
            (j + 1).to_string(),
            fmt_num(params.rate1(i, j)),
            fmt_num(params.rate0(i, j)),
            fmt_num(params.prior1(i, j)),
        ]
    });
    write_rows(path, &header, rows)
}

/// Transition CSV: `from,<states>`, one row per source state, then a row
/// labelled `initial`.
pub fn write_hmm(path: &Path, hmm: &ClusterHmm) -> CliResult<()> {
    let mut text = hmm.transition_csv(fmt_num);
    text.push_str("initial");
    for l in hmm.log_initial() {
        text.push(',');
        text.push_str(&fmt_num(l.exp()));
    }
    text.push('\n');
    write_text(path, &text)
}

/// Reads transitions written by [`write_hmm`]; emissions come from `params`.
pub fn read_hmm(path: &Path, params: ExpModelParams) -> CliResult<ClusterHmm> {
    let (header, rows) = records(path)?;
    let n = params.n();
    let states = all_partitions(n)?;
    let s = states.len();
    if header.len() != s + 1 || &header[0] != "from" {
        return Err(CliError::io(
            path,
            format!("expected header from plus {s} states for n = {n}"),
        ));
    }
    let locate = |text: &str, row: usize| -> CliResult<usize> {
        let p: Partition = field(path, row, "state", text)?;
        states
            .iter()
            .position(|q| *q == p)
            .ok_or_else(|| CliError::io(path, format!("state {text} does not cover {n} series")))
    };
    let cols: Vec<usize> = header
        .iter()
        .skip(1)
        .map(|h| locate(h, 0))
        .collect::<CliResult<_>>()?;
    let mut trans: Vec<Option<Vec<f64>>> = vec![None; s];
    let mut initial = None;
    for (r, row) in rows.iter().enumerate() {
        if row.len() != s + 1 {
            return Err(CliError::io(
                path,
                format!("row {} has {} fields", r + 1, row.len()),
            ));
        }
        let mut probs = vec![0.0; s];
        for (c, &dst) in cols.iter().enumerate() {
            probs[dst] = field(path, r + 1, &header[c + 1], &row[c + 1])?;
        }
        let slot = if &row[0] == "initial" {
            &mut initial
        } else {
            &mut trans[locate(&row[0], r + 1)?]
        };
        if slot.replace(probs).is_some() {
            return Err(CliError::io(path, format!("row {} repeats a state", r + 1)));
        }
    }
    let trans: Vec<Vec<f64>> = trans
        .into_iter()
        .collect::<Option<_>>()
        .ok_or_else(|| CliError::io(path, "missing transition rows"))?;
    let initial = initial.ok_or_else(|| CliError::io(path, "missing initial row"))?;
    Ok(ClusterHmm::from_probabilities(n, &trans, &initial, params)?)
}

pub fn write_weights(path: &Path, weights: &[f64]) -> CliResult<()> {
    let header = ["series".to_string(), "weight".to_string()];
    let rows = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| vec![format!("s{}", i + 1), fmt_num(w)]);
    write_rows(path, &header, rows)
}
