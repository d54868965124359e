//! CSV and JSON files.
//!
//! Every emitted file starts with a provenance record: a `#` comment line in
//! CSV, a `provenance` object in JSON. Readers skip `#` lines and locate
//! columns by header name, so extra columns are allowed.

use crate::collision_mc::EnsembleStats;
use crate::detection::CountRecord;
use crate::error::{domain, Error, Result};
use crate::estimate::relax::{Readout, ReadoutSeries};
use crate::estimate::{ContrastPoint, FitResult, MeasurementSet, Metadata, TimedRecord};
use crate::physics::constants::joule_to_millikelvin;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_sha256: &str, seed: u64) -> Self {
        Provenance { tool: "ionbath".into(), version: crate::VERSION.into(), config_sha256: config_sha256.into(), seed }
    }

    pub fn comment_line(&self) -> String {
        format!("# {} {} config_sha256={} seed={}", self.tool, self.version, self.config_sha256, self.seed)
    }
}

/// JSON document written by the fit commands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub provenance: Provenance,
    pub input: String,
    pub fit: FitResult,
}

fn csv_err(e: csv::Error) -> Error {
    Error::Csv(e.to_string())
}

/// Shortest round-trip decimal; `NaN` for missing values.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v}")
    }
}

/// CSV column name for a state label: `up`, `1_m1`, `1_0`, `1_p1`, `0_0`.
pub fn safe_label(label: &str) -> String {
    let inner = label.trim_start_matches('|').trim_end_matches('>');
    match inner.split_once(',') {
        Some((f, m)) => {
            let m = match m.strip_prefix('-') {
                Some(abs) => format!("m{abs}"),
                None if m == "0" => "0".into(),
                None => format!("p{m}"),
            };
            format!("{f}_{m}")
        }
        None => inner.replace(|c: char| !c.is_ascii_alphanumeric(), "_"),
    }
}

pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Table { columns: columns.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push_f64(&mut self, row: &[f64]) {
        self.rows.push(row.iter().map(|v| fmt_f64(*v)).collect());
    }

    pub fn write<W: Write>(&self, mut w: W, provenance: &Provenance) -> Result<()> {
        writeln!(w, "{}", provenance.comment_line())?;
        let mut c = csv::Writer::from_writer(w);
        c.write_record(&self.columns).map_err(csv_err)?;
        for r in &self.rows {
            c.write_record(r).map_err(csv_err)?;
        }
        c.flush()?;
        Ok(())
    }

    pub fn write_file(&self, path: &Path, provenance: &Provenance) -> Result<()> {
        self.write(std::fs::File::create(path)?, provenance)
    }
}

/// `t_over_tL, p_<label>..., stderr_<label>..., mean_Ekin_mK, stderr_Ekin_mK`.
pub fn ensemble_table(stats: &EnsembleStats) -> Table {
    let mut cols = vec!["t_over_tL".to_string()];
    cols.extend(stats.labels.iter().map(|l| format!("p_{}", safe_label(l))));
    cols.extend(stats.labels.iter().map(|l| format!("stderr_{}", safe_label(l))));
    cols.push("mean_Ekin_mK".into());
    cols.push("stderr_Ekin_mK".into());
    let mut t = Table { columns: cols, rows: Vec::new() };
    for k in 0..stats.t_over_tl.len() {
        let mut row = vec![stats.t_over_tl[k]];
        row.extend(&stats.populations[k]);
        row.extend(&stats.population_stderr[k]);
        row.push(joule_to_millikelvin(stats.mean_energy[k]));
        row.push(joule_to_millikelvin(stats.energy_stderr[k]));
        t.push_f64(&row);
    }
    t
}

/// `t_over_tL,n_trials,n_dark`.
pub fn relaxation_table(data: &MeasurementSet) -> Table {
    let mut t = Table::new(&["t_over_tL", "n_trials", "n_dark"]);
    for r in &data.records {
        t.rows.push(vec![fmt_f64(r.t_over_tl), r.record.n_trials.to_string(), r.record.n_dark.to_string()]);
    }
    t
}

/// `detuning_hz,n_trials,n_dark,p_dark,stderr`.
pub fn fringe_table(scan: &[(f64, CountRecord)]) -> Table {
    let mut t = Table::new(&["detuning_hz", "n_trials", "n_dark", "p_dark", "stderr"]);
    for (d, r) in scan {
        let p = r.dark_fraction();
        let se = (p * (1.0 - p) / r.n_trials as f64).sqrt();
        t.rows.push(vec![fmt_f64(*d), r.n_trials.to_string(), r.n_dark.to_string(), fmt_f64(p), fmt_f64(se)]);
    }
    t
}

/// `t_over_tL,contrast,sigma`.
pub fn contrast_table(points: &[ContrastPoint]) -> Table {
    let mut t = Table::new(&["t_over_tL", "contrast", "sigma"]);
    for p in points {
        t.push_f64(&[p.t_over_tl, p.contrast, p.sigma]);
    }
    t
}

struct Rows {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl Rows {
    fn read<R: Read>(r: R) -> Result<Self> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r);
        let header = rd.headers().map_err(csv_err)?.iter().map(str::to_owned).collect();
        let rows = rd.records().collect::<std::result::Result<Vec<_>, _>>().map_err(csv_err)?;
        Ok(Rows { header, rows })
    }

    fn column(&self, name: &str) -> Result<usize> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Csv(format!("missing column `{name}` (have {})", self.header.join(","))))
    }

    fn get<T: std::str::FromStr>(&self, row: usize, col: usize, name: &str) -> Result<T> {
        let s = self.rows[row].get(col).unwrap_or("");
        s.parse().map_err(|_| Error::Csv(format!("row {}: cannot parse `{s}` as {name}", row + 1)))
    }
}

fn count(rows: &Rows, i: usize, nt: usize, nd: usize) -> Result<CountRecord> {
    let n: u64 = rows.get(i, nt, "n_trials")?;
    let k: u64 = rows.get(i, nd, "n_dark")?;
    CountRecord::new(n, k).map_err(|e| Error::Csv(format!("row {}: {e}", i + 1)))
}

/// Relaxation counts. An optional `readout` column (`manifold` or a sublevel
/// label such as `|1,0>`) splits the file into four-level series.
pub fn read_relaxation<R: Read>(r: R) -> Result<Vec<ReadoutSeries>> {
    let rows = Rows::read(r)?;
    let (ct, nt, nd) = (rows.column("t_over_tL")?, rows.column("n_trials")?, rows.column("n_dark")?);
    let ro = rows.column("readout").ok();
    let mut out: Vec<ReadoutSeries> = Vec::new();
    for i in 0..rows.rows.len() {
        let readout = match ro.map(|c| rows.rows[i].get(c).unwrap_or("")) {
            None | Some("manifold") | Some("") => Readout::Manifold,
            Some(label) => Readout::Sublevel(label.to_string()),
        };
        let rec = TimedRecord { t_over_tl: rows.get(i, ct, "t_over_tL")?, record: count(&rows, i, nt, nd)? };
        match out.iter_mut().find(|s| s.readout == readout) {
            Some(s) => s.data.records.push(rec),
            None => out.push(ReadoutSeries {
                readout,
                data: MeasurementSet { records: vec![rec], metadata: Metadata::default() },
            }),
        }
    }
    if out.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }
    for s in &out {
        s.data.validate()?;
    }
    Ok(out)
}

pub fn read_measurement_set<R: Read>(r: R) -> Result<MeasurementSet> {
    let mut series = read_relaxation(r)?;
    if series.len() != 1 {
        return Err(domain("file holds several readout series; use the four-level fit"));
    }
    Ok(series.remove(0).data)
}

pub fn read_fringe<R: Read>(r: R) -> Result<Vec<(f64, CountRecord)>> {
    let rows = Rows::read(r)?;
    let (cd, nt, nd) = (rows.column("detuning_hz")?, rows.column("n_trials")?, rows.column("n_dark")?);
    (0..rows.rows.len()).map(|i| Ok((rows.get(i, cd, "detuning_hz")?, count(&rows, i, nt, nd)?))).collect()
}

pub fn read_contrast<R: Read>(r: R) -> Result<Vec<ContrastPoint>> {
    let rows = Rows::read(r)?;
    let (ct, cc, cs) = (rows.column("t_over_tL")?, rows.column("contrast")?, rows.column("sigma")?);
    (0..rows.rows.len())
        .map(|i| {
            Ok(ContrastPoint {
                t_over_tl: rows.get(i, ct, "t_over_tL")?,
                contrast: rows.get(i, cc, "contrast")?,
                sigma: rows.get(i, cs, "sigma")?,
            })
        })
        .collect()
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}
