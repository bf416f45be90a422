//! ASCII tables and CSV for the sweep and comparison commands.
//!
//! Text tables mark the best value per metric column with a `*`; losses,
//! gradient norms, consensus and cross-term magnitudes count lower as
//! better, accuracy higher.

use crate::summary::{stat_of, Stat};
use adflora::engine::RunOutput;

const METRICS: [(&str, bool); 6] = [
    ("mean_loss", false),
    ("grad_norm_sq", false),
    ("consensus_err_a", false),
    ("consensus_err_b", false),
    ("cross_term_norm", false),
    ("mean_accuracy", true),
];

#[derive(Debug, Clone)]
pub struct MetricStats {
    pub stats: Vec<Option<Stat>>, // one per METRICS entry
}

fn collect_stats(outputs: &[RunOutput]) -> MetricStats {
    let finals: Vec<_> = outputs.iter().map(|o| o.final_record()).collect();
    let col = |f: &dyn Fn(&adflora::engine::MetricsRecord) -> f64| -> Option<Stat> {
        Some(stat_of(&finals.iter().map(|r| f(r)).collect::<Vec<_>>()))
    };
    let accuracy: Option<Vec<f64>> = finals.iter().map(|r| r.mean_accuracy).collect();
    MetricStats {
        stats: vec![
            col(&|r| r.mean_loss),
            col(&|r| r.grad_norm_sq),
            col(&|r| r.consensus_err_a),
            col(&|r| r.consensus_err_b),
            col(&|r| r.cross_term_norm),
            accuracy.map(|a| stat_of(&a)),
        ],
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub t: usize,
    pub metrics: MetricStats,
}

impl SweepRow {
    pub fn from_outputs(t: usize, outputs: &[RunOutput]) -> SweepRow {
        SweepRow {
            t,
            metrics: collect_stats(outputs),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareRow {
    pub method: String,
    pub metrics: MetricStats,
}

impl CompareRow {
    pub fn from_outputs(method: &str, outputs: &[RunOutput]) -> CompareRow {
        CompareRow {
            method: method.to_string(),
            metrics: collect_stats(outputs),
        }
    }
}

fn csv_header() -> String {
    let mut cols = vec![];
    for (name, _) in METRICS {
        cols.push(format!("{name}_mean"));
        cols.push(format!("{name}_std"));
    }
    cols.join(",")
}

fn csv_row(metrics: &MetricStats) -> String {
    METRICS
        .iter()
        .zip(&metrics.stats)
        .map(|(_, s)| match s {
            Some(st) => format!("{},{}", st.mean, st.std),
            None => ",".to_string(),
        })
        .collect::<Vec<_>>()
        .join(",")
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = format!("t,{}\n", csv_header());
    for row in rows {
        out.push_str(&format!("{},{}\n", row.t, csv_row(&row.metrics)));
    }
    out
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let mut out = format!("method,{}\n", csv_header());
    for row in rows {
        out.push_str(&format!("{},{}\n", row.method, csv_row(&row.metrics)));
    }
    out
}

/// Index of the best row per metric column (ties favor the earlier row).
fn best_per_column(rows: &[&MetricStats]) -> Vec<Option<usize>> {
    METRICS
        .iter()
        .enumerate()
        .map(|(c, (_, higher_better))| {
            let mut best: Option<(usize, f64)> = None;
            for (i, m) in rows.iter().enumerate() {
                if let Some(st) = &m.stats[c] {
                    let better = match best {
                        None => true,
                        Some((_, b)) => {
                            if *higher_better {
                                st.mean > b
                            } else {
                                st.mean < b
                            }
                        }
                    };
                    if better {
                        best = Some((i, st.mean));
                    }
                }
            }
            best.map(|(i, _)| i)
        })
        .collect()
}

fn render_table(label: &str, names: &[String], rows: &[&MetricStats]) -> String {
    let best = best_per_column(rows);
    let mut header: Vec<String> = vec![label.to_string()];
    header.extend(METRICS.iter().map(|(n, _)| n.to_string()));

    let mut body: Vec<Vec<String>> = Vec::new();
    for (i, (name, m)) in names.iter().zip(rows).enumerate() {
        let mut row = vec![name.clone()];
        for (c, s) in m.stats.iter().enumerate() {
            let cell = match s {
                Some(st) => {
                    let marker = if best[c] == Some(i) { "*" } else { "" };
                    format!("{marker}{:.6} ± {:.6}", st.mean, st.std)
                }
                None => "-".to_string(),
            };
            row.push(cell);
        }
        body.push(row);
    }

    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| -> String {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = w))
            .collect::<Vec<_>>()
            .join("  ")
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for row in &body {
        out.push_str(&line(row));
        out.push('\n');
    }
    out.push_str("(* best per column; metrics are final-round, mean ± std over seeds)\n");
    out
}

pub fn sweep_table(rows: &[SweepRow]) -> String {
    let names: Vec<String> = rows.iter().map(|r| format!("T={}", r.t)).collect();
    let metrics: Vec<&MetricStats> = rows.iter().map(|r| &r.metrics).collect();
    render_table("interval", &names, &metrics)
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let names: Vec<String> = rows.iter().map(|r| r.method.clone()).collect();
    let metrics: Vec<&MetricStats> = rows.iter().map(|r| &r.metrics).collect();
    render_table("method", &names, &metrics)
}
