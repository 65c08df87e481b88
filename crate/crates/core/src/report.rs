//! CSV and Markdown renderings of gap rows.

use std::fmt::Write as _;

use thiserror::Error;

use crate::metrics::{GapReportRow, LengthSplit, TTest};
use crate::script::Subset;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no rows to report")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Some(ReportFormat::Csv),
            "md" | "markdown" => Some(ReportFormat::Markdown),
            _ => None,
        }
    }
}

pub const CSV_COLUMNS: [&str; 17] = [
    "model",
    "variant",
    "length_group",
    "subset",
    "n_pairs",
    "acc_tw",
    "acc_cn",
    "delta_acc",
    "mse_tw",
    "mse_cn",
    "delta_mse",
    "t_acc",
    "p_acc",
    "stars_acc",
    "t_mse",
    "p_mse",
    "stars_mse",
];

pub fn emit_report(rows: &[GapReportRow], format: ReportFormat) -> Result<String, ReportError> {
    match format {
        ReportFormat::Csv => gap_csv(rows),
        ReportFormat::Markdown => gap_markdown(rows),
    }
}

/// One header line plus one line per row, columns as in [`CSV_COLUMNS`].
/// Missing values are empty cells.
pub fn gap_csv(rows: &[GapReportRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_COLUMNS)?;
    for row in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            row.model.clone(),
            row.variant.as_str().to_string(),
            row.length_group.as_str().to_string(),
            row.subset.as_str().to_string(),
            row.n_pairs.to_string(),
            opt(row.acc_tw),
            opt(row.acc_cn),
            opt(row.delta_acc),
            opt(row.mse_tw),
            opt(row.mse_cn),
            opt(row.delta_mse),
            opt(row.t_acc),
            opt(row.p_acc),
            row.stars_acc.clone(),
            opt(row.t_mse),
            opt(row.p_mse),
            row.stars_mse.clone(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Fixed decimals, with negative zero printed as zero.
pub fn fixed(v: Option<f64>, digits: usize) -> String {
    match v {
        None => "-".to_string(),
        Some(x) => {
            let s = format!("{x:.digits$}");
            if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
                s[1..].to_string()
            } else {
                s
            }
        }
    }
}

/// One section per subset, one table per length group; rows are
/// (model, variant) in input order.
pub fn gap_markdown(rows: &[GapReportRow]) -> Result<String, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut out = String::new();
    let mut subsets: Vec<Subset> = Vec::new();
    for r in rows {
        if !subsets.contains(&r.subset) {
            subsets.push(r.subset);
        }
    }
    for subset in subsets {
        let _ = writeln!(out, "## Subset: {}\n", subset.as_str());
        for split in LengthSplit::ALL {
            let group: Vec<&GapReportRow> = rows
                .iter()
                .filter(|r| r.subset == subset && r.length_group == split)
                .collect();
            if group.is_empty() {
                continue;
            }
            let _ = writeln!(out, "### {}\n", split.as_str());
            out.push_str(
                "| model | setting | n | Acc tw | Acc cn | ΔAcc (cn-tw) | sig | MSE tw | MSE cn | ΔMSE (cn-tw) | sig |\n\
                 |---|---|---:|---:|---:|---:|---|---:|---:|---:|---|\n",
            );
            for r in group {
                let _ = writeln!(
                    out,
                    "| {} | {} | {} | {} | {} | {} | {} | {} | {} | {} | {} |",
                    r.model,
                    r.variant.as_str(),
                    r.n_pairs,
                    fixed(r.acc_tw, 2),
                    fixed(r.acc_cn, 2),
                    fixed(r.delta_acc, 2),
                    r.stars_acc,
                    fixed(r.mse_tw, 3),
                    fixed(r.mse_cn, 3),
                    fixed(r.delta_mse, 3),
                    r.stars_mse,
                );
            }
            out.push('\n');
        }
    }
    out.push_str("Significance of the paired t-test: * p < .05, ** p < .01, *** p < .001.\n");
    Ok(out)
}

/// Short note on whether the two sides' own ratings differ.
pub fn score_test_markdown(n_pairs: usize, test: Option<TTest>) -> String {
    match test {
        Some(t) => format!(
            "Paired t-test on ratings (cn - tw) over {n_pairs} pairs: t = {:.4}, df = {}, p = {:.4} {}\n",
            t.t,
            t.df,
            t.p,
            crate::metrics::stars(t.p)
        ),
        None => format!("Paired t-test on ratings: not defined for {n_pairs} pairs.\n"),
    }
}
