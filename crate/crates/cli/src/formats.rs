//! Plot-ready output files and their readers.
//!
//! Floats are written with 17 significant digits so every value reads back
//! to the same `f64`.

use nlsnet_core::attenuation::AttenuationEstimate;
use nlsnet_core::estimator::TrainHistory;
use nlsnet_core::landscape::{LandscapeGrid, MinimizerStats, ProbeRow, SweepRow};
use nlsnet_core::signal::ComplexSignal;
use nlsnet_core::C64;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::fmt::Write as _;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0}")]
    Malformed(String),
    #[error(transparent)]
    Signal(#[from] nlsnet_core::Error),
}

type Result<T> = std::result::Result<T, FormatError>;

fn malformed(msg: impl Into<String>) -> FormatError {
    FormatError::Malformed(msg.into())
}

/// `x` with 17 significant digits; `inf`, `-inf` and `nan` for non-finite.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.16e}")
    }
}

/// JSON number at 17 significant digits, `null` when not finite.
fn json_num(x: f64) -> String {
    if x.is_finite() {
        fmt_f64(x)
    } else {
        "null".into()
    }
}

fn parse_f64(field: &str) -> Result<f64> {
    field
        .trim()
        .parse()
        .map_err(|_| malformed(format!("not a number: {field:?}")))
}

fn json_f64(v: &Value) -> Result<f64> {
    match v {
        Value::Null => Ok(f64::NAN),
        v => v
            .as_f64()
            .ok_or_else(|| malformed(format!("expected number, got {v}"))),
    }
}

pub fn write_signal_json(signal: &ComplexSignal) -> String {
    let mut s = String::with_capacity(48 * signal.len() + 32);
    write!(
        s,
        "{{\"tau_ps\": {}, \"samples\": [",
        json_num(signal.tau())
    )
    .unwrap();
    for (i, z) in signal.samples().iter().enumerate() {
        if i > 0 {
            s.push_str(", ");
        }
        write!(s, "[{}, {}]", json_num(z.re), json_num(z.im)).unwrap();
    }
    s.push_str("]}\n");
    s
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SignalDoc {
    tau_ps: f64,
    samples: Vec<[f64; 2]>,
}

pub fn read_signal_json(text: &str) -> Result<ComplexSignal> {
    let doc: SignalDoc = serde_json::from_str(text)?;
    let samples = doc
        .samples
        .iter()
        .map(|[re, im]| C64::new(*re, *im))
        .collect();
    Ok(ComplexSignal::new(samples, doc.tau_ps)?)
}

fn csv_string(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| malformed(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| malformed(e.to_string()))
}

fn csv_rows(text: &str, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let found: Vec<&str> = r.headers()?.iter().collect();
    if found != header {
        return Err(malformed(format!(
            "expected header {header:?}, found {found:?}"
        )));
    }
    Ok(r.records().collect::<std::result::Result<_, _>>()?)
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

const HISTORY_HEADER: [&str; 6] = ["iter", "loss", "beta", "gamma", "e_beta", "e_gamma"];

pub fn write_history_csv(history: &TrainHistory) -> Result<String> {
    csv_string(
        &HISTORY_HEADER,
        history.records.iter().map(|r| {
            vec![
                r.iter.to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.beta),
                fmt_f64(r.gamma),
                opt(r.e_beta),
                opt(r.e_gamma),
            ]
        }),
    )
}

/// One parsed history row; error columns are `None` when empty.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub iter: usize,
    pub loss: f64,
    pub beta: f64,
    pub gamma: f64,
    pub e_beta: Option<f64>,
    pub e_gamma: Option<f64>,
}

pub fn read_history_csv(text: &str) -> Result<Vec<HistoryRow>> {
    let rows = csv_rows(text, &HISTORY_HEADER)?;
    let mut out: Vec<HistoryRow> = Vec::with_capacity(rows.len());
    for rec in rows {
        let maybe = |s: &str| {
            if s.is_empty() {
                Ok(None)
            } else {
                parse_f64(s).map(Some)
            }
        };
        let row = HistoryRow {
            iter: rec[0]
                .parse()
                .map_err(|_| malformed(format!("bad iter {:?}", &rec[0])))?,
            loss: parse_f64(&rec[1])?,
            beta: parse_f64(&rec[2])?,
            gamma: parse_f64(&rec[3])?,
            e_beta: maybe(&rec[4])?,
            e_gamma: maybe(&rec[5])?,
        };
        if out.last().is_some_and(|p| p.iter >= row.iter) {
            return Err(malformed("iter must be strictly increasing"));
        }
        out.push(row);
    }
    Ok(out)
}

const LANDSCAPE_HEADER: [&str; 3] = ["beta", "gamma", "loss"];

/// Row-major over the grid, `beta` the slow index.
pub fn write_landscape_csv(grid: &LandscapeGrid) -> Result<String> {
    let spec = grid.spec;
    csv_string(
        &LANDSCAPE_HEADER,
        (0..spec.num_cells()).map(|k| {
            let (i, j) = (k / spec.gamma_points, k % spec.gamma_points);
            vec![
                fmt_f64(spec.beta_at(i)),
                fmt_f64(spec.gamma_at(j)),
                fmt_f64(grid.losses[k]),
            ]
        }),
    )
}

/// `(beta, gamma, loss)` triples in file order.
pub fn read_landscape_csv(text: &str) -> Result<Vec<[f64; 3]>> {
    csv_rows(text, &LANDSCAPE_HEADER)?
        .iter()
        .map(|r| {
            let loss = parse_f64(&r[2])?;
            if loss.is_nan() || loss < 0.0 {
                return Err(malformed(format!("loss must be >= 0 or inf, got {loss}")));
            }
            Ok([parse_f64(&r[0])?, parse_f64(&r[1])?, loss])
        })
        .collect()
}

const SWEEP_HEADER: [&str; 6] = ["value", "loss", "beta", "gamma", "e_beta", "e_gamma"];

pub fn write_sweep_csv(rows: &[SweepRow]) -> Result<String> {
    csv_string(
        &SWEEP_HEADER,
        rows.iter().map(|r| {
            vec![
                r.value.to_string(),
                fmt_f64(r.loss),
                fmt_f64(r.beta),
                fmt_f64(r.gamma),
                fmt_f64(r.e_beta),
                fmt_f64(r.e_gamma),
            ]
        }),
    )
}

pub fn read_sweep_csv(text: &str) -> Result<Vec<SweepRow>> {
    csv_rows(text, &SWEEP_HEADER)?
        .iter()
        .map(|r| {
            Ok(SweepRow {
                value: r[0]
                    .parse()
                    .map_err(|_| malformed(format!("bad value {:?}", &r[0])))?,
                loss: parse_f64(&r[1])?,
                beta: parse_f64(&r[2])?,
                gamma: parse_f64(&r[3])?,
                e_beta: parse_f64(&r[4])?,
                e_gamma: parse_f64(&r[5])?,
            })
        })
        .collect()
}

const PROBE_HEADER: [&str; 3] = ["d_beta", "d_gamma", "distance"];

pub fn write_probe_csv(rows: &[ProbeRow]) -> Result<String> {
    csv_string(
        &PROBE_HEADER,
        rows.iter()
            .map(|r| vec![fmt_f64(r.d_beta), fmt_f64(r.d_gamma), fmt_f64(r.distance)]),
    )
}

pub fn read_probe_csv(text: &str) -> Result<Vec<ProbeRow>> {
    csv_rows(text, &PROBE_HEADER)?
        .iter()
        .map(|r| {
            Ok(ProbeRow {
                d_beta: parse_f64(&r[0])?,
                d_gamma: parse_f64(&r[1])?,
                distance: parse_f64(&r[2])?,
            })
        })
        .collect()
}

/// One gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckRow {
    pub beta: f64,
    pub gamma: f64,
    pub analytic: [f64; 2],
    pub finite_difference: [f64; 2],
    pub rel_err: [f64; 2],
}

const GRAD_HEADER: [&str; 8] = [
    "beta",
    "gamma",
    "dj_dbeta",
    "dj_dgamma",
    "fd_beta",
    "fd_gamma",
    "rel_err_beta",
    "rel_err_gamma",
];

pub fn write_grad_check_csv(rows: &[GradCheckRow]) -> Result<String> {
    csv_string(
        &GRAD_HEADER,
        rows.iter().map(|r| {
            [
                r.beta,
                r.gamma,
                r.analytic[0],
                r.analytic[1],
                r.finite_difference[0],
                r.finite_difference[1],
                r.rel_err[0],
                r.rel_err[1],
            ]
            .map(fmt_f64)
            .to_vec()
        }),
    )
}

pub fn read_grad_check_csv(text: &str) -> Result<Vec<GradCheckRow>> {
    csv_rows(text, &GRAD_HEADER)?
        .iter()
        .map(|r| {
            let v = (0..8)
                .map(|k| parse_f64(&r[k]))
                .collect::<Result<Vec<_>>>()?;
            Ok(GradCheckRow {
                beta: v[0],
                gamma: v[1],
                analytic: [v[2], v[3]],
                finite_difference: [v[4], v[5]],
                rel_err: [v[6], v[7]],
            })
        })
        .collect()
}

fn stats_object(s: &MinimizerStats) -> String {
    let pair = |a: [f64; 2]| format!("[{}, {}]", json_num(a[0]), json_num(a[1]));
    format!(
        "{{\"ns\": {}, \"mean\": {}, \"cov\": [{}, {}], \"bias\": {}, \"n_ok\": {}, \"n_excluded\": {}}}",
        s.num_symbols,
        pair(s.mean),
        pair(s.cov[0]),
        pair(s.cov[1]),
        pair(s.bias),
        s.n_ok,
        s.n_excluded
    )
}

/// A JSON array with one stats object per `Ns`.
pub fn write_stats_json(stats: &[MinimizerStats]) -> String {
    let items: Vec<String> = stats
        .iter()
        .map(|s| format!("  {}", stats_object(s)))
        .collect();
    format!("[\n{}\n]\n", items.join(",\n"))
}

pub fn read_stats_json(text: &str) -> Result<Vec<MinimizerStats>> {
    let doc: Value = serde_json::from_str(text)?;
    let items = doc
        .as_array()
        .ok_or_else(|| malformed("expected an array"))?;
    items
        .iter()
        .map(|item| {
            let obj = item
                .as_object()
                .ok_or_else(|| malformed("expected an object"))?;
            let keys = ["ns", "mean", "cov", "bias", "n_ok", "n_excluded"];
            if obj.len() != keys.len() || keys.iter().any(|k| !obj.contains_key(*k)) {
                return Err(malformed(format!("expected keys {keys:?}")));
            }
            let uint = |k: &str| {
                obj[k]
                    .as_u64()
                    .map(|v| v as usize)
                    .ok_or_else(|| malformed(format!("{k} must be an integer")))
            };
            let pair = |v: &Value| -> Result<[f64; 2]> {
                match v.as_array().map(|a| a.as_slice()) {
                    Some([a, b]) => Ok([json_f64(a)?, json_f64(b)?]),
                    _ => Err(malformed(format!("expected a pair, got {v}"))),
                }
            };
            let cov = match obj["cov"].as_array().map(|a| a.as_slice()) {
                Some([r0, r1]) => [pair(r0)?, pair(r1)?],
                _ => return Err(malformed("cov must be 2x2")),
            };
            let (n_ok, n_excluded) = (uint("n_ok")?, uint("n_excluded")?);
            Ok(MinimizerStats {
                num_symbols: uint("ns")?,
                group_size: n_ok + n_excluded,
                mean: pair(&obj["mean"])?,
                cov,
                bias: pair(&obj["bias"])?,
                n_ok,
                n_excluded,
            })
        })
        .collect()
}

/// Attenuation output: `{"alpha_per_km", "norm_in", "norm_out"}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaDoc {
    pub alpha_per_km: f64,
    pub norm_in: f64,
    pub norm_out: f64,
}

pub fn write_alpha_json(est: &AttenuationEstimate) -> String {
    format!(
        "{{\"alpha_per_km\": {}, \"norm_in\": {}, \"norm_out\": {}}}\n",
        json_num(est.alpha),
        json_num(est.norm_in),
        json_num(est.norm_out)
    )
}

pub fn read_alpha_json(text: &str) -> Result<AlphaDoc> {
    Ok(serde_json::from_str(text)?)
}
