//! Per-round measurements and their CSV form.
//!
//! A record holds the quantities the convergence statements talk about:
//! mean client loss, the squared gradient norm of the global objective at
//! the mean pair, the Frobenius deviation of each stacked block from its
//! mean (consensus error), and the interference a naive aggregation of the
//! current states would incur. The CSV schema is a stable contract:
//!
//! ```text
//! step,phase,mean_loss,grad_norm_sq,consensus_err_a,consensus_err_b,cross_term_norm,mean_accuracy
//! ```

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::lora::LoRAPair;
use std::io::{BufRead, Write};

/// Which block(s) a round trained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseLabel {
    A,
    B,
    Both,
}

impl std::fmt::Display for PhaseLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PhaseLabel::A => write!(f, "A"),
            PhaseLabel::B => write!(f, "B"),
            PhaseLabel::Both => write!(f, "AB"),
        }
    }
}

/// One row of the trace, plus the non-CSV extras the check battery uses.
#[derive(Debug, Clone)]
pub struct MetricsRecord {
    /// Number of completed rounds at measurement time (0 = init).
    pub step: usize,
    pub phase: PhaseLabel,
    /// Global objective at each client's pair, averaged across clients
    /// (equals the global loss at the shared pair when clients agree).
    pub mean_loss: f64,
    /// `‖∇L(mean pair)‖²` over both blocks, full batch.
    pub grad_norm_sq: f64,
    pub consensus_err_a: f64,
    pub consensus_err_b: f64,
    /// Frobenius norm of the cross term over current client pairs at
    /// uniform weights.
    pub cross_term_norm: f64,
    pub mean_accuracy: Option<f64>,
    /// Block components of `grad_norm_sq` (not part of the CSV schema).
    pub grad_a_norm_sq: f64,
    pub grad_b_norm_sq: f64,
    /// Step size used by the round ending at this record (0 at init).
    pub eta: f64,
}

impl MetricsRecord {
    pub fn all_finite(&self) -> bool {
        [
            self.mean_loss,
            self.grad_norm_sq,
            self.consensus_err_a,
            self.consensus_err_b,
            self.cross_term_norm,
        ]
        .iter()
        .all(|x| x.is_finite())
            && self.mean_accuracy.map(|a| a.is_finite()).unwrap_or(true)
    }
}

/// Client parameters stacked as columns: column `i` of `u_a` is client
/// `i`'s flattened `a`, likewise `u_b`.
#[derive(Debug, Clone)]
pub struct ParamStack {
    pub u_a: Matrix,
    pub u_b: Matrix,
}

impl ParamStack {
    pub fn from_pairs(pairs: &[LoRAPair]) -> ParamStack {
        let first = pairs.first().expect("need at least one client");
        let (ar, ac) = first.a.shape();
        let (br, bc) = first.b.shape();
        let n = pairs.len();
        let u_a = Matrix::from_fn(ar * ac, n, |d, i| pairs[i].a.entries()[d]);
        let u_b = Matrix::from_fn(br * bc, n, |d, i| pairs[i].b.entries()[d]);
        ParamStack { u_a, u_b }
    }

    pub fn consensus_err_a(&self) -> f64 {
        consensus_error(&self.u_a)
    }

    pub fn consensus_err_b(&self) -> f64 {
        consensus_error(&self.u_b)
    }
}

/// `‖U − Ū·𝟏ᵀ‖_F` where `Ū` is the mean over columns.
pub fn consensus_error(u: &Matrix) -> f64 {
    let n = u.cols() as f64;
    let mut acc = 0.0;
    for d in 0..u.rows() {
        let mean: f64 = (0..u.cols()).map(|i| u.get(d, i)).sum::<f64>() / n;
        for i in 0..u.cols() {
            let dev = u.get(d, i) - mean;
            acc += dev * dev;
        }
    }
    acc.sqrt()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CSV_HEADER: &str =
    "step,phase,mean_loss,grad_norm_sq,consensus_err_a,consensus_err_b,cross_term_norm,mean_accuracy";

/// Write the trace in the documented CSV schema (one row per recorded
/// round; the init record is not a row).
pub fn write_trace_csv(out: &mut impl Write, trace: &[MetricsRecord]) -> std::io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in trace {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.step,
            r.phase,
            r.mean_loss,
            r.grad_norm_sq,
            r.consensus_err_a,
            r.consensus_err_b,
            r.cross_term_norm,
            fmt_opt(r.mean_accuracy),
        )?;
    }
    Ok(())
}

/// Read a trace back. The non-CSV extras come back zeroed; `phase` must be
/// one of `A`, `B`, `AB`.
pub fn read_trace_csv(input: &mut impl BufRead) -> Result<Vec<MetricsRecord>> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed("empty file"))?
        .map_err(|e| malformed(&e.to_string()))?;
    if header.trim() != CSV_HEADER {
        return Err(malformed(&format!("unexpected header `{header}`")));
    }
    let mut out = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let line = line.map_err(|e| malformed(&e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(malformed(&format!(
                "row {}: {} fields, expected 8",
                lineno + 2,
                fields.len()
            )));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| malformed(&format!("row {}: bad {what} `{s}`", lineno + 2)))
        };
        let phase = match fields[1] {
            "A" => PhaseLabel::A,
            "B" => PhaseLabel::B,
            "AB" => PhaseLabel::Both,
            other => return Err(malformed(&format!("row {}: bad phase `{other}`", lineno + 2))),
        };
        out.push(MetricsRecord {
            step: fields[0]
                .parse()
                .map_err(|_| malformed(&format!("row {}: bad step", lineno + 2)))?,
            phase,
            mean_loss: num(fields[2], "mean_loss")?,
            grad_norm_sq: num(fields[3], "grad_norm_sq")?,
            consensus_err_a: num(fields[4], "consensus_err_a")?,
            consensus_err_b: num(fields[5], "consensus_err_b")?,
            cross_term_norm: num(fields[6], "cross_term_norm")?,
            mean_accuracy: if fields[7].is_empty() {
                None
            } else {
                Some(num(fields[7], "mean_accuracy")?)
            },
            grad_a_norm_sq: 0.0,
            grad_b_norm_sq: 0.0,
            eta: 0.0,
        });
    }
    Ok(out)
}

fn malformed(detail: &str) -> Error {
    Error::Malformed {
        what: "trace csv".into(),
        detail: detail.into(),
    }
}
