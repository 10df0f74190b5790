use std::io::{Read, Write};

use bayescub::{Criterion, Error, Result, Transform};

pub const RECORD_HEADER: [&str; 13] = [
    "integrand",
    "d",
    "eps",
    "criterion",
    "transform",
    "r",
    "seed",
    "mu_hat",
    "err_ratio",
    "n",
    "half_width",
    "time_s",
    "converged",
];

/// One integration as written to CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub integrand: String,
    pub dim: usize,
    pub eps: f64,
    pub criterion: Criterion,
    pub transform: Transform,
    pub order: u32,
    pub seed: u64,
    pub mu_hat: f64,
    /// `|mu - mu_hat| / eps`, when the true value is known.
    pub err_ratio: Option<f64>,
    pub n: usize,
    pub half_width: f64,
    pub time_s: Option<f64>,
    pub converged: bool,
}

impl RunRecord {
    pub fn succeeded(&self) -> Option<bool> {
        self.err_ratio.map(|r| r <= 1.0)
    }
}

/// Round-trippable float formatting with 17 significant digits.
pub(crate) fn fmt_float(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_float).unwrap_or_default()
}

pub fn write_records<W: Write>(out: W, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("cannot write CSV: {e}"));
    w.write_record(RECORD_HEADER).map_err(io)?;
    for r in records {
        w.write_record([
            r.integrand.clone(),
            r.dim.to_string(),
            fmt_float(r.eps),
            r.criterion.name().to_string(),
            r.transform.name().to_string(),
            r.order.to_string(),
            r.seed.to_string(),
            fmt_float(r.mu_hat),
            fmt_opt(r.err_ratio),
            r.n.to_string(),
            fmt_float(r.half_width),
            fmt_opt(r.time_s),
            r.converged.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()
        .map_err(|e| Error::InvalidArgument(format!("cannot write CSV: {e}")))
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<RunRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let bad = |what: &str, v: &str| Error::InvalidArgument(format!("bad {what} field {v:?}"));
    let headers = rdr
        .headers()
        .map_err(|e| Error::InvalidArgument(format!("cannot read CSV: {e}")))?
        .clone();
    if headers.iter().ne(RECORD_HEADER) {
        return Err(Error::InvalidArgument(format!("unexpected header {headers:?}")));
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::InvalidArgument(format!("cannot read CSV: {e}")))?;
        let f = |i: usize| -> Result<f64> { row[i].parse().map_err(|_| bad(RECORD_HEADER[i], &row[i])) };
        let opt = |i: usize| -> Result<Option<f64>> {
            if row[i].is_empty() {
                Ok(None)
            } else {
                f(i).map(Some)
            }
        };
        records.push(RunRecord {
            integrand: row[0].to_string(),
            dim: row[1].parse().map_err(|_| bad("d", &row[1]))?,
            eps: f(2)?,
            criterion: row[3].parse()?,
            transform: row[4].parse()?,
            order: row[5].parse().map_err(|_| bad("r", &row[5]))?,
            seed: row[6].parse().map_err(|_| bad("seed", &row[6]))?,
            mu_hat: f(7)?,
            err_ratio: opt(8)?,
            n: row[9].parse().map_err(|_| bad("n", &row[9]))?,
            half_width: f(10)?,
            time_s: opt(11)?,
            converged: row[12].parse().map_err(|_| bad("converged", &row[12]))?,
        });
    }
    Ok(records)
}

/// Fraction of records whose error is within tolerance, or `None` when no
/// record has a known true value.
pub fn success_rate(records: &[RunRecord]) -> Option<f64> {
    let judged: Vec<bool> = records.iter().filter_map(RunRecord::succeeded).collect();
    if judged.is_empty() {
        return None;
    }
    Some(judged.iter().filter(|&&ok| ok).count() as f64 / judged.len() as f64)
}
