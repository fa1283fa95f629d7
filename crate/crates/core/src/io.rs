//! CSV ingestion and output.
//!
//! Inputs: holiday calendar (`date,type`), demand and weather
//! (`date,y1,y2,w1,w2`, raw demand) and future weather (`date,w1,w2`).
//! Demand is logged on ingestion. Floats are written in shortest
//! round-trip form, so reading a written file reproduces the values
//! exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::calendar::{HolidayCalendar, HolidayType};
use crate::error::{Error, Result};
use crate::params::ParamLayout;
use crate::ppc::{Forecast, PpcSummary};
use crate::sampler::PosteriorDraws;
use crate::state_model::ModelMode;

/// Demand and weather as read from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct DemandSeries {
    pub dates: Vec<NaiveDate>,
    /// Raw demand per region, strictly positive.
    pub demand: Vec<[f64; 2]>,
    pub cwv: Vec<[f64; 2]>,
}

impl DemandSeries {
    /// Builds a series from log demand.
    pub fn from_log(dates: Vec<NaiveDate>, y: &[[f64; 2]], cwv: Vec<[f64; 2]>) -> Self {
        Self { dates, demand: y.iter().map(|v| v.map(f64::exp)).collect(), cwv }
    }

    pub fn log_demand(&self) -> Vec<[f64; 2]> {
        self.demand.iter().map(|v| v.map(f64::ln)).collect()
    }
}

struct Table {
    path: PathBuf,
    columns: Vec<usize>,
    rows: Vec<(usize, csv::StringRecord)>,
}

impl Table {
    fn parse_err(&self, line: usize, message: String) -> Error {
        Error::Parse { path: self.path.clone(), line, message }
    }

    fn field<'a>(&self, row: &'a csv::StringRecord, c: usize) -> &'a str {
        row.get(self.columns[c]).unwrap_or("").trim()
    }

    fn date(&self, line: usize, row: &csv::StringRecord, c: usize, name: &str) -> Result<NaiveDate> {
        let s = self.field(row, c);
        NaiveDate::parse_from_str(s, "%Y-%m-%d")
            .map_err(|_| self.parse_err(line, format!("column `{name}`: `{s}` is not an ISO-8601 date")))
    }

    fn number(&self, line: usize, row: &csv::StringRecord, c: usize, name: &str) -> Result<f64> {
        let s = self.field(row, c);
        match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(self.parse_err(line, format!("column `{name}`: `{s}` is not a finite number"))),
        }
    }
}

fn read_table<R: Read>(reader: R, path: &Path, wanted: &[&str]) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut columns = Vec::with_capacity(wanted.len());
    for w in wanted {
        let c = headers.iter().position(|h| h == *w).ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("missing column `{w}`"),
        })?;
        columns.push(c);
    }
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::Parse { path: path.to_path_buf(), line, message: e.to_string() }
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        rows.push((line, rec));
    }
    Ok(Table { path: path.to_path_buf(), columns, rows })
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

pub fn parse_holidays<R: Read>(reader: R, path: &Path) -> Result<HolidayCalendar> {
    let t = read_table(reader, path, &["date", "type"])?;
    let mut entries = Vec::with_capacity(t.rows.len());
    for (line, row) in &t.rows {
        let date = t.date(*line, row, 0, "date")?;
        let code = t.field(row, 1);
        let ty = code
            .parse::<u8>()
            .ok()
            .and_then(HolidayType::from_code)
            .ok_or_else(|| t.parse_err(*line, format!("column `type`: `{code}` is not 1, 2 or 3")))?;
        entries.push((date, ty));
    }
    entries.sort_by_key(|e| e.0);
    HolidayCalendar::new(entries)
}

pub fn read_holidays(path: &Path) -> Result<HolidayCalendar> {
    parse_holidays(open(path)?, path)
}

fn check_contiguous(t: &Table, dates: &[NaiveDate]) -> Result<()> {
    for (i, w) in dates.windows(2).enumerate() {
        if w[1] != w[0] + chrono::Days::new(1) {
            return Err(Error::NonContiguousDates(format!(
                "{}: line {}: {} follows {}",
                t.path.display(),
                t.rows[i + 1].0,
                w[1],
                w[0]
            )));
        }
    }
    Ok(())
}

pub fn parse_demand<R: Read>(reader: R, path: &Path) -> Result<DemandSeries> {
    let names = ["date", "y1", "y2", "w1", "w2"];
    let t = read_table(reader, path, &names)?;
    if t.rows.is_empty() {
        return Err(Error::InvalidInput(format!("{}: no data rows", path.display())));
    }
    let mut s = DemandSeries { dates: Vec::new(), demand: Vec::new(), cwv: Vec::new() };
    for (line, row) in &t.rows {
        s.dates.push(t.date(*line, row, 0, "date")?);
        let mut y = [0.0; 2];
        for j in 0..2 {
            y[j] = t.number(*line, row, 1 + j, names[1 + j])?;
            if y[j] <= 0.0 {
                return Err(t.parse_err(*line, format!("column `{}`: demand must be positive, got {}", names[1 + j], y[j])));
            }
        }
        s.demand.push(y);
        s.cwv.push([t.number(*line, row, 3, "w1")?, t.number(*line, row, 4, "w2")?]);
    }
    check_contiguous(&t, &s.dates)?;
    Ok(s)
}

pub fn read_demand(path: &Path) -> Result<DemandSeries> {
    parse_demand(open(path)?, path)
}

/// Future weather scenario: dates and CWV.
pub fn parse_cwv<R: Read>(reader: R, path: &Path) -> Result<(Vec<NaiveDate>, Vec<[f64; 2]>)> {
    let t = read_table(reader, path, &["date", "w1", "w2"])?;
    let mut dates = Vec::new();
    let mut cwv = Vec::new();
    for (line, row) in &t.rows {
        dates.push(t.date(*line, row, 0, "date")?);
        cwv.push([t.number(*line, row, 1, "w1")?, t.number(*line, row, 2, "w2")?]);
    }
    check_contiguous(&t, &dates)?;
    Ok((dates, cwv))
}

pub fn read_cwv(path: &Path) -> Result<(Vec<NaiveDate>, Vec<[f64; 2]>)> {
    parse_cwv(open(path)?, path)
}

fn writer(path: &Path) -> Result<csv::Writer<File>> {
    Ok(csv::Writer::from_writer(File::create(path)?))
}

fn num(v: f64) -> String {
    v.to_string()
}

pub fn write_demand_to<W: Write>(w: W, s: &DemandSeries) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["date", "y1", "y2", "w1", "w2"])?;
    for i in 0..s.dates.len() {
        wtr.write_record([
            s.dates[i].to_string(),
            num(s.demand[i][0]),
            num(s.demand[i][1]),
            num(s.cwv[i][0]),
            num(s.cwv[i][1]),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_demand(path: &Path, s: &DemandSeries) -> Result<()> {
    write_demand_to(File::create(path)?, s)
}

pub fn write_holidays(path: &Path, calendar: &HolidayCalendar) -> Result<()> {
    let mut wtr = writer(path)?;
    wtr.write_record(["date", "type"])?;
    for (d, ty) in calendar.entries() {
        wtr.write_record([d.to_string(), ty.code().to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Natural-scale draws, one row each, led by `chain`, `iter` and
/// `log_posterior`.
pub fn write_draws_to<W: Write>(w: W, draws: &PosteriorDraws) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["chain".to_string(), "iter".to_string(), "log_posterior".to_string()];
    header.extend(draws.names.iter().cloned());
    wtr.write_record(&header)?;
    for i in 0..draws.len() {
        let mut rec = vec![draws.chain[i].to_string(), draws.iteration[i].to_string(), num(draws.log_posterior[i])];
        rec.extend(draws.natural(i).into_iter().map(num));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_draws(path: &Path, draws: &PosteriorDraws) -> Result<()> {
    write_draws_to(File::create(path)?, draws)
}

/// Reads a draws file written by [`write_draws`]; the harmonic counts are
/// recovered from the column names.
pub fn parse_draws<R: Read>(reader: R, path: &Path, mode: ModelMode) -> Result<PosteriorDraws> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    let perr = |line: usize, message: String| Error::Parse { path: path.to_path_buf(), line, message };
    if headers.len() < 3 || headers[..3] != ["chain", "iter", "log_posterior"] {
        return Err(perr(1, "expected leading columns `chain,iter,log_posterior`".into()));
    }
    let names = &headers[3..];
    let count = |prefix: &str| names.iter().filter(|n| n.starts_with(prefix)).count();
    let layout = ParamLayout::new(count("gamma_1_cos_"), count("kappa_1_cos_"));
    if layout.names() != names {
        return Err(perr(1, "parameter columns do not match any model layout".into()));
    }
    let mut draws = PosteriorDraws {
        k_gamma: layout.k_gamma,
        k_kappa: layout.k_kappa,
        mode,
        names: names.to_vec(),
        unconstrained: Vec::new(),
        log_posterior: Vec::new(),
        chain: Vec::new(),
        iteration: Vec::new(),
    };
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| rec.get(i).unwrap_or("");
        let int = |i: usize| field(i).parse::<usize>().map_err(|_| perr(line, format!("column `{}`: not an integer", headers[i])));
        draws.chain.push(int(0)?);
        draws.iteration.push(int(1)?);
        let mut vals = Vec::with_capacity(headers.len() - 2);
        for i in 2..headers.len() {
            let v = field(i).parse::<f64>().map_err(|_| perr(line, format!("column `{}`: not a number", headers[i])))?;
            vals.push(v);
        }
        draws.log_posterior.push(vals[0]);
        let x = layout
            .unconstrain_vector(&vals[1..])
            .map_err(|e| perr(line, format!("draw outside the parameter support: {e}")))?;
        draws.unconstrained.push(x);
    }
    if draws.is_empty() {
        return Err(perr(2, "no draws".into()));
    }
    Ok(draws)
}

pub fn read_draws(path: &Path, mode: ModelMode) -> Result<PosteriorDraws> {
    parse_draws(open(path)?, path, mode)
}

/// `date,p_state1..p_state4` for the observed days; `probs` includes day 0.
pub fn write_smoothed(path: &Path, dates: &[NaiveDate], probs: &[[f64; 4]]) -> Result<()> {
    if probs.len() != dates.len() + 1 {
        return Err(Error::InvalidInput("smoothed probabilities must cover day 0 and every data day".into()));
    }
    let mut wtr = writer(path)?;
    wtr.write_record(["date", "p_state1", "p_state2", "p_state3", "p_state4"])?;
    for (d, p) in dates.iter().zip(&probs[1..]) {
        wtr.write_record([d.to_string(), num(p[0]), num(p[1]), num(p[2]), num(p[3])])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Per-day PPC rows on the log scale, one per region.
pub fn write_ppc_days(path: &Path, summary: &PpcSummary) -> Result<()> {
    let mut wtr = writer(path)?;
    wtr.write_record(["date", "region", "gap", "observed", "pred_mean", "pred_q025", "pred_q975", "outside95"])?;
    for d in &summary.days {
        for j in 0..2 {
            wtr.write_record([
                d.date.to_string(),
                (j + 1).to_string(),
                d.gap.to_string(),
                num(d.observed[j]),
                num(d.band.mean[j]),
                num(d.band.q025[j]),
                num(d.band.q975[j]),
                (d.outside[j] as u8).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Per-day forecast bands on the log scale and the share of paths in each
/// state.
pub fn write_forecast(path: &Path, f: &Forecast) -> Result<()> {
    let bands = f.bands()?;
    let n = f.states.len() as f64;
    let mut wtr = writer(path)?;
    wtr.write_record([
        "date", "region", "pred_mean", "pred_q025", "pred_q975", "p_state1", "p_state2", "p_state3", "p_state4",
    ])?;
    for (h, (d, b)) in f.dates.iter().zip(&bands).enumerate() {
        let mut count = [0usize; 4];
        for s in &f.states {
            count[s[h]] += 1;
        }
        let share = count.map(|c| c as f64 / n);
        for j in 0..2 {
            let mut rec = vec![d.to_string(), (j + 1).to_string(), num(b.mean[j]), num(b.q025[j]), num(b.q975[j])];
            rec.extend(share.iter().map(|&v| num(v)));
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
