//! Report rendering: full-precision CSV (lossless round-trip) and 2-decimal
//! markdown tables in the fixed report row order.

use std::fmt::Write as _;

use crate::tactic::Tactic;

use super::{EvalError, EvalReport, Prf, Subgroup, TacticRow};

/// Markdown table layouts: the full per-tactic P/R/F1/Support table, or the
/// compact F1-and-support variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarkdownLayout {
    Full,
    F1Only,
}

// `{}` on f64 prints the shortest string that parses back to the same value,
// which is what makes the CSV round-trip lossless.
fn num(v: f64) -> String {
    format!("{v}")
}

/// Render the CSV layout: a `meta` section (key=value), 14 `per_tactic`
/// rows in table order, and four `average` rows (samples, micro, macro,
/// weighted). Full float precision.
pub fn render_report_csv(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str("section,name,precision,recall,f1,support\n");
    let _ = writeln!(out, "meta,subgroup={},,,,", report.subgroup.label());
    let _ = writeln!(out, "meta,n_samples={},,,,", report.n_samples);
    out.push_str("meta,empty_prediction_convention=zero,,,,\n");
    for row in &report.per_tactic {
        let _ = writeln!(
            out,
            "per_tactic,{},{},{},{},{}",
            row.tactic.slug(),
            num(row.precision),
            num(row.recall),
            num(row.f1),
            row.support
        );
    }
    let avg = |name: &str, prf: &Prf, support: Option<u64>| {
        format!(
            "average,{},{},{},{},{}\n",
            name,
            num(prf.precision),
            num(prf.recall),
            num(prf.f1),
            support.map(|s| s.to_string()).unwrap_or_default()
        )
    };
    out.push_str(&avg("samples", &report.samples_avg, Some(report.total_support)));
    out.push_str(&avg("micro", &report.micro_avg, None));
    out.push_str(&avg("macro", &report.macro_avg, None));
    out.push_str(&avg("weighted", &report.weighted_avg, None));
    out
}

/// Render the human-readable markdown table, numbers to 2 decimals.
pub fn render_report_markdown(report: &EvalReport, layout: MarkdownLayout) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# Tactic prediction report ({})", report.subgroup.label());
    out.push('\n');
    out.push_str("Scoring conventions: empty predictions score P = R = F1 = 0; the headline\n");
    out.push_str("row is the samples average (per-sample scores averaged arithmetically).\n\n");
    let _ = writeln!(out, "Samples: {}. Total support: {}.", report.n_samples, report.total_support);
    out.push('\n');
    match layout {
        MarkdownLayout::Full => {
            out.push_str("| Tactics | Precision | Recall | F1 | Support |\n");
            out.push_str("|---|---|---|---|---|\n");
            for row in &report.per_tactic {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {:.2} | {:.2} | {} |",
                    row.tactic.canonical_name(),
                    row.precision,
                    row.recall,
                    row.f1,
                    row.support
                );
            }
            let _ = writeln!(
                out,
                "| **Samples Average** | **{:.2}** | **{:.2}** | **{:.2}** | **{}** |",
                report.samples_avg.precision,
                report.samples_avg.recall,
                report.samples_avg.f1,
                report.total_support
            );
        }
        MarkdownLayout::F1Only => {
            out.push_str("| Tactics | F1 Score | Support |\n");
            out.push_str("|---|---|---|\n");
            for row in &report.per_tactic {
                let _ = writeln!(
                    out,
                    "| {} | {:.2} | {} |",
                    row.tactic.canonical_name(),
                    row.f1,
                    row.support
                );
            }
            let _ = writeln!(
                out,
                "| **Samples Avg. F1** | **{:.2}** | **{}** |",
                report.samples_avg.f1, report.total_support
            );
        }
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "Supplementary averages — micro: {:.2}/{:.2}/{:.2}, macro: {:.2}/{:.2}/{:.2}, weighted: {:.2}/{:.2}/{:.2} (P/R/F1).",
        report.micro_avg.precision,
        report.micro_avg.recall,
        report.micro_avg.f1,
        report.macro_avg.precision,
        report.macro_avg.recall,
        report.macro_avg.f1,
        report.weighted_avg.precision,
        report.weighted_avg.recall,
        report.weighted_avg.f1,
    );
    out
}

fn parse_f64(field: &str, line: usize) -> Result<f64, EvalError> {
    field.parse::<f64>().map_err(|_| EvalError::CsvParse {
        line,
        reason: format!("not a number: {field:?}"),
    })
}

/// Reparse [`render_report_csv`] output back into an [`EvalReport`].
pub fn parse_report_csv(csv: &str) -> Result<EvalReport, EvalError> {
    let mut subgroup = None;
    let mut n_samples = None;
    let mut per_tactic: Vec<TacticRow> = Vec::new();
    let mut averages: Vec<(String, Prf, Option<u64>)> = Vec::new();

    for (i, line) in csv.lines().enumerate() {
        let lineno = i + 1;
        if i == 0 {
            if line != "section,name,precision,recall,f1,support" {
                return Err(EvalError::CsvParse { line: lineno, reason: "bad header".into() });
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(EvalError::CsvParse {
                line: lineno,
                reason: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        match fields[0] {
            "meta" => {
                let (key, value) = fields[1].split_once('=').ok_or(EvalError::CsvParse {
                    line: lineno,
                    reason: "meta row without key=value".into(),
                })?;
                match key {
                    "subgroup" => {
                        subgroup = Some(Subgroup::from_label(value).ok_or(EvalError::CsvParse {
                            line: lineno,
                            reason: format!("unknown subgroup {value:?}"),
                        })?)
                    }
                    "n_samples" => {
                        n_samples =
                            Some(value.parse::<u64>().map_err(|_| EvalError::CsvParse {
                                line: lineno,
                                reason: "bad n_samples".into(),
                            })?)
                    }
                    _ => {}
                }
            }
            "per_tactic" => {
                let tactic = Tactic::from_slug(fields[1]).ok_or(EvalError::CsvParse {
                    line: lineno,
                    reason: format!("unknown tactic slug {:?}", fields[1]),
                })?;
                per_tactic.push(TacticRow {
                    tactic,
                    precision: parse_f64(fields[2], lineno)?,
                    recall: parse_f64(fields[3], lineno)?,
                    f1: parse_f64(fields[4], lineno)?,
                    support: fields[5].parse().map_err(|_| EvalError::CsvParse {
                        line: lineno,
                        reason: "bad support".into(),
                    })?,
                });
            }
            "average" => {
                let prf = Prf {
                    precision: parse_f64(fields[2], lineno)?,
                    recall: parse_f64(fields[3], lineno)?,
                    f1: parse_f64(fields[4], lineno)?,
                };
                let support = if fields[5].is_empty() {
                    None
                } else {
                    Some(fields[5].parse::<u64>().map_err(|_| EvalError::CsvParse {
                        line: lineno,
                        reason: "bad support".into(),
                    })?)
                };
                averages.push((fields[1].to_string(), prf, support));
            }
            other => {
                return Err(EvalError::CsvParse {
                    line: lineno,
                    reason: format!("unknown section {other:?}"),
                })
            }
        }
    }

    let find = |name: &str| -> Result<Prf, EvalError> {
        averages
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, prf, _)| *prf)
            .ok_or_else(|| EvalError::CsvParse { line: 0, reason: format!("missing {name} average") })
    };
    let samples_row = averages
        .iter()
        .find(|(n, _, _)| n == "samples")
        .ok_or(EvalError::CsvParse { line: 0, reason: "missing samples average".into() })?;
    let total_support = samples_row.2.ok_or(EvalError::CsvParse {
        line: 0,
        reason: "samples average row lacks total support".into(),
    })?;

    Ok(EvalReport {
        subgroup: subgroup
            .ok_or(EvalError::CsvParse { line: 0, reason: "missing subgroup meta".into() })?,
        n_samples: n_samples
            .ok_or(EvalError::CsvParse { line: 0, reason: "missing n_samples meta".into() })?,
        samples_avg: samples_row.1,
        micro_avg: find("micro")?,
        macro_avg: find("macro")?,
        weighted_avg: find("weighted")?,
        per_tactic,
        total_support,
    })
}
