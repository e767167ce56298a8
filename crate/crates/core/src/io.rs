//! Lossless CSV and JSON persistence for the domain types.
//!
//! Floats are written as `{:.16e}` (17 significant digits), which round-trips
//! every finite binary64 value. Composite tables use a long layout with the
//! header `record,row,col,value` so one file can carry several arrays.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::counterfactual::{ApproachReport, CounterfactualReport, WelfareShares};
use crate::model::{ApplicantType, CutoffVector, Economy, MatchOutcome, ModelError, Rol};
use crate::strategy::CutoffDistribution;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{row}:{column}: {message}")]
    Parse { path: PathBuf, row: u64, column: usize, message: String },
    #[error("{path}:{line}:{column}: {message}")]
    Json { path: PathBuf, line: usize, column: usize, message: String },
    #[error("{path}: {source}")]
    Model { path: PathBuf, source: ModelError },
}

impl IoError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    fn parse(path: &Path, row: u64, column: usize, message: impl Display) -> Self {
        Self::Parse { path: path.to_path_buf(), row, column, message: message.to_string() }
    }
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| IoError::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>, IoError> {
    Ok(csv::WriterBuilder::new().from_writer(create(path)?))
}

fn csv_err(path: &Path, e: csv::Error) -> IoError {
    let row = e.position().map_or(0, |p| p.line());
    match e.into_kind() {
        csv::ErrorKind::Io(source) => IoError::io(path, source),
        other => IoError::parse(path, row, 0, format!("{other:?}")),
    }
}

/// A parsed CSV body with header validation and located field parsing.
pub struct CsvTable {
    path: PathBuf,
    rows: Vec<(u64, csv::StringRecord)>,
}

impl CsvTable {
    pub fn read(path: &Path, header: &[&str]) -> Result<Self, IoError> {
        let file = File::open(path).map_err(|e| IoError::io(path, e))?;
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(BufReader::new(file));
        let found = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
        for (j, want) in header.iter().enumerate() {
            match found.get(j) {
                Some(h) if h == *want => {}
                Some(h) => return Err(IoError::parse(path, 1, j + 1, format!("expected column `{want}`, found `{h}`"))),
                None => return Err(IoError::parse(path, 1, j + 1, format!("missing column `{want}`"))),
            }
        }
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let line = rec.position().map_or(0, |p| p.line());
            if rec.len() != header.len() {
                return Err(IoError::parse(path, line, rec.len().min(header.len()) + 1, format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            rows.push((line, rec));
        }
        Ok(Self { path: path.to_path_buf(), rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Raw field `col` (0-based) of data row `r`.
    pub fn str(&self, r: usize, col: usize) -> &str {
        &self.rows[r].1[col]
    }

    pub fn error(&self, r: usize, col: usize, message: impl Display) -> IoError {
        IoError::parse(&self.path, self.rows[r].0, col + 1, message)
    }

    pub fn get<T: std::str::FromStr>(&self, r: usize, col: usize) -> Result<T, IoError>
    where
        T::Err: Display,
    {
        let s = self.str(r, col);
        s.parse().map_err(|e| self.error(r, col, format!("cannot parse `{s}`: {e}")))
    }

    /// Empty field as `None`.
    pub fn get_opt<T: std::str::FromStr>(&self, r: usize, col: usize) -> Result<Option<T>, IoError>
    where
        T::Err: Display,
    {
        if self.str(r, col).is_empty() {
            Ok(None)
        } else {
            self.get(r, col).map(Some)
        }
    }
}

const LONG_HEADER: [&str; 4] = ["record", "row", "col", "value"];

struct LongWriter {
    path: PathBuf,
    w: csv::Writer<BufWriter<File>>,
}

impl LongWriter {
    fn new(path: &Path) -> Result<Self, IoError> {
        let mut w = csv_writer(path)?;
        w.write_record(LONG_HEADER).map_err(|e| csv_err(path, e))?;
        Ok(Self { path: path.to_path_buf(), w })
    }

    fn row(&mut self, record: &str, row: usize, col: usize, value: &str) -> Result<(), IoError> {
        self.w.write_record([record, &row.to_string(), &col.to_string(), value]).map_err(|e| csv_err(&self.path, e))
    }

    fn finish(mut self) -> Result<(), IoError> {
        self.w.flush().map_err(|e| IoError::io(&self.path, e))
    }
}

/// Grows `v` so that index `i` exists.
fn slot<T: Clone>(v: &mut Vec<T>, i: usize, fill: T) -> &mut T {
    if v.len() <= i {
        v.resize(i + 1, fill);
    }
    &mut v[i]
}

pub fn write_economy_csv(path: &Path, economy: &Economy) -> Result<(), IoError> {
    let mut w = LongWriter::new(path)?;
    w.row("label", 0, 0, economy.label())?;
    for (c, q) in economy.capacities().iter().enumerate() {
        w.row("capacity", 0, c, &q.to_string())?;
    }
    for (i, a) in economy.applicants().iter().enumerate() {
        for (c, u) in a.utilities().iter().enumerate() {
            w.row("utility", i, c, &fmt_f64(*u))?;
        }
        for (c, s) in a.scores().iter().enumerate() {
            w.row("score", i, c, &fmt_f64(*s))?;
        }
    }
    if let Some(groups) = economy.groups() {
        for (i, g) in groups.iter().enumerate() {
            w.row("disadvantaged", i, 0, if *g { "1" } else { "0" })?;
        }
    }
    w.finish()
}

pub fn read_economy_csv(path: &Path) -> Result<Economy, IoError> {
    let t = CsvTable::read(path, &LONG_HEADER)?;
    let mut label = String::new();
    let mut caps: Vec<usize> = Vec::new();
    let mut utils: Vec<Vec<f64>> = Vec::new();
    let mut scores: Vec<Vec<f64>> = Vec::new();
    let mut groups: Vec<bool> = Vec::new();
    let mut has_groups = false;
    for r in 0..t.len() {
        let (i, c): (usize, usize) = (t.get(r, 1)?, t.get(r, 2)?);
        match t.str(r, 0) {
            "label" => label = t.str(r, 3).to_string(),
            "capacity" => *slot(&mut caps, c, 0) = t.get(r, 3)?,
            "utility" => *slot(slot(&mut utils, i, Vec::new()), c, f64::NAN) = t.get(r, 3)?,
            "score" => *slot(slot(&mut scores, i, Vec::new()), c, f64::NAN) = t.get(r, 3)?,
            "disadvantaged" => {
                has_groups = true;
                *slot(&mut groups, i, false) = match t.str(r, 3) {
                    "1" => true,
                    "0" => false,
                    s => return Err(t.error(r, 3, format!("expected 0 or 1, found `{s}`"))),
                };
            }
            s => return Err(t.error(r, 0, format!("unknown record `{s}`"))),
        }
    }
    let model = |source| IoError::Model { path: path.to_path_buf(), source };
    if utils.len() != scores.len() {
        return Err(model(ModelError::LengthMismatch { utilities: utils.len(), scores: scores.len() }));
    }
    let applicants = utils.into_iter().zip(scores).map(|(u, s)| ApplicantType::new(u, s)).collect::<Result<Vec<_>, _>>().map_err(model)?;
    let economy = Economy::new(applicants, caps, label).map_err(model)?;
    if has_groups {
        economy.with_groups(groups).map_err(model)
    } else {
        Ok(economy)
    }
}

pub fn write_outcome_csv(path: &Path, outcome: &MatchOutcome) -> Result<(), IoError> {
    let mut w = LongWriter::new(path)?;
    w.row("rounds", 0, 0, &outcome.rounds.to_string())?;
    for (c, p) in outcome.cutoffs.as_slice().iter().enumerate() {
        w.row("cutoff", 0, c, &fmt_f64(*p))?;
    }
    for (i, a) in outcome.assignment.iter().enumerate() {
        w.row("assignment", i, 0, &a.map_or(String::new(), |c| c.to_string()))?;
    }
    w.finish()
}

pub fn read_outcome_csv(path: &Path) -> Result<MatchOutcome, IoError> {
    let t = CsvTable::read(path, &LONG_HEADER)?;
    let mut rounds = 0;
    let mut cutoffs = Vec::new();
    let mut assignment = Vec::new();
    for r in 0..t.len() {
        let (i, c): (usize, usize) = (t.get(r, 1)?, t.get(r, 2)?);
        match t.str(r, 0) {
            "rounds" => rounds = t.get(r, 3)?,
            "cutoff" => *slot(&mut cutoffs, c, f64::NAN) = t.get(r, 3)?,
            "assignment" => *slot(&mut assignment, i, None) = t.get_opt(r, 3)?,
            s => return Err(t.error(r, 0, format!("unknown record `{s}`"))),
        }
    }
    let cutoffs = CutoffVector::new(cutoffs).map_err(|source| IoError::Model { path: path.to_path_buf(), source })?;
    Ok(MatchOutcome { assignment, cutoffs, rounds })
}

/// One row per listed college: `applicant,rank,college`. Applicants with an
/// empty list get a single row with an empty rank and college.
pub fn write_rols_csv(path: &Path, rols: &[Rol]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record(["applicant", "rank", "college"]).map_err(err)?;
    for (i, r) in rols.iter().enumerate() {
        if r.is_empty() {
            w.write_record([i.to_string().as_str(), "", ""]).map_err(err)?;
        }
        for (rank, c) in r.as_slice().iter().enumerate() {
            w.write_record([i.to_string(), rank.to_string(), c.to_string()]).map_err(err)?;
        }
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn read_rols_csv(path: &Path, n_colleges: usize) -> Result<Vec<Rol>, IoError> {
    let t = CsvTable::read(path, &["applicant", "rank", "college"])?;
    let mut lists: Vec<Vec<usize>> = Vec::new();
    for r in 0..t.len() {
        let i: usize = t.get(r, 0)?;
        let list = slot(&mut lists, i, Vec::new());
        let Some(rank) = t.get_opt::<usize>(r, 1)? else { continue };
        if rank != list.len() {
            return Err(t.error(r, 1, format!("expected rank {}, found {rank}", list.len())));
        }
        list.push(t.get(r, 2)?);
    }
    lists
        .into_iter()
        .map(|l| Rol::new(l, n_colleges))
        .collect::<Result<_, _>>()
        .map_err(|source| IoError::Model { path: path.to_path_buf(), source })
}

pub fn write_cutoff_distribution_csv(path: &Path, dist: &CutoffDistribution) -> Result<(), IoError> {
    let mut w = LongWriter::new(path)?;
    for (s, p) in dist.samples.iter().enumerate() {
        for (c, v) in p.as_slice().iter().enumerate() {
            w.row("sample", s, c, &fmt_f64(*v))?;
        }
    }
    for (record, table) in [("admit_prob", &dist.admit_prob), ("match_freq", &dist.match_freq)] {
        for (i, row) in table.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                w.row(record, i, c, &fmt_f64(*v))?;
            }
        }
    }
    w.finish()
}

pub fn read_cutoff_distribution_csv(path: &Path) -> Result<CutoffDistribution, IoError> {
    let t = CsvTable::read(path, &LONG_HEADER)?;
    let mut samples: Vec<Vec<f64>> = Vec::new();
    let mut admit: Vec<Vec<f64>> = Vec::new();
    let mut freq: Vec<Vec<f64>> = Vec::new();
    for r in 0..t.len() {
        let (i, c): (usize, usize) = (t.get(r, 1)?, t.get(r, 2)?);
        let table = match t.str(r, 0) {
            "sample" => &mut samples,
            "admit_prob" => &mut admit,
            "match_freq" => &mut freq,
            s => return Err(t.error(r, 0, format!("unknown record `{s}`"))),
        };
        *slot(slot(table, i, Vec::new()), c, f64::NAN) = t.get(r, 3)?;
    }
    let samples = samples
        .into_iter()
        .map(CutoffVector::new)
        .collect::<Result<_, _>>()
        .map_err(|source| IoError::Model { path: path.to_path_buf(), source })?;
    Ok(CutoffDistribution { samples, admit_prob: admit, match_freq: freq })
}

/// Writes a plain CSV table; callers format floats with [`fmt_f64`].
pub fn write_table<I, R>(path: &Path, header: &[&str], rows: I) -> Result<(), IoError>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

/// The serde name of a unit enum variant, e.g. `STABILITY_EST`.
pub fn variant_name<T: Serialize>(value: &T) -> String {
    match serde_json::to_value(value) {
        Ok(serde_json::Value::String(s)) => s,
        _ => panic!("not a unit variant"),
    }
}

fn parse_variant<T: DeserializeOwned>(t: &CsvTable, r: usize, col: usize) -> Result<T, IoError> {
    let s = t.str(r, col);
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|_| t.error(r, col, format!("unknown value `{s}`")))
}

pub const COUNTERFACTUAL_HEADER: [&str; 7] = ["dgp", "approach", "group", "metric", "value", "sample", "seed"];

/// Group labels in the long counterfactual table, in report index order.
pub const GROUPS: [&str; 2] = ["T1", "T0"];

/// Long-format counterfactual table: welfare shares and mis-prediction rates
/// per group, plus predicted cutoffs under group `ALL`.
pub fn write_counterfactual_csv(path: &Path, reports: &[CounterfactualReport]) -> Result<(), IoError> {
    let mut w = csv_writer(path)?;
    let err = |e| csv_err(path, e);
    w.write_record(COUNTERFACTUAL_HEADER).map_err(err)?;
    for rep in reports {
        let (dgp, sample, seed) = (variant_name(&rep.dgp), rep.sample.to_string(), rep.seed.to_string());
        for a in &rep.approaches {
            let approach = variant_name(&a.approach);
            let mut row = |group: &str, metric: &str, value: f64| {
                w.write_record([dgp.as_str(), &approach, group, metric, &fmt_f64(value), &sample, &seed]).map_err(err)
            };
            for (g, group) in GROUPS.iter().enumerate() {
                row(group, "better", a.welfare[g].better)?;
                row(group, "worse", a.welfare[g].worse)?;
                row(group, "indifferent", a.welfare[g].indifferent)?;
                row(group, "misprediction", a.misprediction[g])?;
            }
            for (c, p) in a.predicted_cutoffs.as_slice().iter().enumerate() {
                row("ALL", &format!("cutoff_{c}"), *p)?;
            }
        }
    }
    w.flush().map_err(|e| IoError::io(path, e))
}

pub fn read_counterfactual_csv(path: &Path) -> Result<Vec<CounterfactualReport>, IoError> {
    let t = CsvTable::read(path, &COUNTERFACTUAL_HEADER)?;
    let mut reports: Vec<CounterfactualReport> = Vec::new();
    let mut cutoffs: Vec<Vec<Vec<f64>>> = Vec::new();
    for r in 0..t.len() {
        let dgp = parse_variant(&t, r, 0)?;
        let approach = parse_variant(&t, r, 1)?;
        let (value, sample, seed): (f64, usize, u64) = (t.get(r, 4)?, t.get(r, 5)?, t.get(r, 6)?);
        let same = reports.last().is_some_and(|l| l.dgp == dgp && l.sample == sample && l.seed == seed);
        if !same {
            reports.push(CounterfactualReport { seed, sample, dgp, approaches: Vec::new() });
            cutoffs.push(Vec::new());
        }
        let rep = reports.last_mut().expect("pushed above");
        let cuts = cutoffs.last_mut().expect("pushed above");
        if rep.approaches.last().is_none_or(|a| a.approach != approach) {
            rep.approaches.push(ApproachReport {
                approach,
                misprediction: [0.0; 2],
                welfare: [WelfareShares::default(); 2],
                predicted_cutoffs: CutoffVector::zeros(0),
            });
            cuts.push(Vec::new());
        }
        let a = rep.approaches.last_mut().expect("pushed above");
        let metric = t.str(r, 3);
        if t.str(r, 2) == "ALL" {
            let c: usize = metric.strip_prefix("cutoff_").and_then(|c| c.parse().ok()).ok_or_else(|| t.error(r, 3, format!("unknown metric `{metric}`")))?;
            *slot(cuts.last_mut().expect("pushed above"), c, f64::NAN) = value;
            continue;
        }
        let g = GROUPS.iter().position(|g| *g == t.str(r, 2)).ok_or_else(|| t.error(r, 2, format!("unknown group `{}`", t.str(r, 2))))?;
        match metric {
            "better" => a.welfare[g].better = value,
            "worse" => a.welfare[g].worse = value,
            "indifferent" => a.welfare[g].indifferent = value,
            "misprediction" => a.misprediction[g] = value,
            m => return Err(t.error(r, 3, format!("unknown metric `{m}`"))),
        }
    }
    for (rep, cuts) in reports.iter_mut().zip(cutoffs) {
        for (a, c) in rep.approaches.iter_mut().zip(cuts) {
            a.predicted_cutoffs = CutoffVector::new(c).map_err(|source| IoError::Model { path: path.to_path_buf(), source })?;
        }
    }
    Ok(reports)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| IoError::io(path, e.into()))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| IoError::io(path, e))
}

/// Parses JSON text, reporting errors at their line and column.
pub fn parse_json<T: DeserializeOwned>(path: &Path, text: &str) -> Result<T, IoError> {
    serde_json::from_str(text).map_err(|e| IoError::Json { path: path.to_path_buf(), line: e.line(), column: e.column(), message: e.to_string() })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = std::fs::read_to_string(path).map_err(|e| IoError::io(path, e))?;
    parse_json(path, &text)
}
