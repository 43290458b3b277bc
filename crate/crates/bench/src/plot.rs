//! Aligned tables for loss-versus-time, loss-versus-iteration and
//! Hessian-error figures. Rendering is left to external tools.

use std::collections::BTreeSet;
use std::io::Write;
use std::str::FromStr;

use span_core::TraceRecord;

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotMode {
    LossVsTime,
    LossVsIter,
    HessianErr,
}

impl FromStr for PlotMode {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, BenchError> {
        match s {
            "loss_vs_time" => Ok(Self::LossVsTime),
            "loss_vs_iter" => Ok(Self::LossVsIter),
            "hessian_err" => Ok(Self::HessianErr),
            other => Err(BenchError::Config(format!(
                "unknown plot mode {other:?} (expected loss_vs_time, loss_vs_iter or hessian_err)"
            ))),
        }
    }
}

/// One abscissa column followed by one column per method; `None` cells are
/// written empty.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
    pub warnings: Vec<String>,
}

fn check_traces(traces: &[(String, Vec<TraceRecord>)]) -> Result<(), BenchError> {
    if traces.is_empty() {
        return Err(BenchError::IncompatibleTraces("no traces given".into()));
    }
    let mut names = BTreeSet::new();
    for (name, trace) in traces {
        if !names.insert(name.as_str()) {
            return Err(BenchError::IncompatibleTraces(format!("duplicate method {name:?}")));
        }
        let ordered = trace
            .windows(2)
            .all(|w| w[0].iteration < w[1].iteration && w[0].wall_clock_s <= w[1].wall_clock_s);
        if !ordered {
            return Err(BenchError::IncompatibleTraces(format!("{name:?} is not a single ordered run")));
        }
    }
    Ok(())
}

/// Lines up traces on a shared abscissa. `loss_vs_time` uses the union of
/// all time stamps and carries each method's last value forward;
/// `loss_vs_iter` and `hessian_err` use the union of iteration numbers with
/// empty cells where a method has no record. With `suboptimality`, the
/// smallest loss over all traces is subtracted.
pub fn emit_plot_data(
    traces: &[(String, Vec<TraceRecord>)],
    mode: PlotMode,
    suboptimality: bool,
) -> Result<PlotTable, BenchError> {
    check_traces(traces)?;
    let mut warnings = Vec::new();
    let best = traces
        .iter()
        .flat_map(|(_, t)| t.iter().map(|r| r.loss))
        .fold(f64::INFINITY, f64::min);
    let offset = if suboptimality && mode != PlotMode::HessianErr && best.is_finite() {
        best
    } else {
        if suboptimality && mode == PlotMode::HessianErr {
            warnings.push("suboptimality ignored for hessian_err".to_owned());
        }
        0.0
    };

    let columns: Vec<&(String, Vec<TraceRecord>)> = match mode {
        PlotMode::HessianErr => traces
            .iter()
            .filter(|(name, t)| {
                let probed = t.iter().any(|r| r.hessian_err.is_some());
                if !probed {
                    warnings.push(format!("{name}: no hessian_err values, column omitted"));
                }
                probed
            })
            .collect(),
        _ => traces.iter().collect(),
    };
    if columns.is_empty() {
        return Err(BenchError::IncompatibleTraces("no trace carries hessian_err".into()));
    }

    let abscissa = if mode == PlotMode::LossVsTime { "wall_clock_s" } else { "iteration" };
    let mut header = vec![abscissa.to_owned()];
    header.extend(columns.iter().map(|(name, _)| name.clone()));

    let rows = match mode {
        PlotMode::LossVsTime => {
            let mut stamps: Vec<f64> = columns
                .iter()
                .flat_map(|(_, t)| t.iter().map(|r| r.wall_clock_s))
                .collect();
            stamps.sort_by(f64::total_cmp);
            stamps.dedup();
            stamps
                .into_iter()
                .map(|s| {
                    let mut row = vec![Some(s)];
                    for (_, t) in &columns {
                        let idx = t.partition_point(|r| r.wall_clock_s <= s);
                        row.push(idx.checked_sub(1).map(|i| t[i].loss - offset));
                    }
                    row
                })
                .collect()
        }
        PlotMode::LossVsIter | PlotMode::HessianErr => {
            let iters: BTreeSet<usize> = columns
                .iter()
                .flat_map(|(_, t)| t.iter().map(|r| r.iteration))
                .collect();
            iters
                .into_iter()
                .map(|it| {
                    let mut row = vec![Some(it as f64)];
                    for (_, t) in &columns {
                        let rec = t.binary_search_by_key(&it, |r| r.iteration).ok().map(|i| &t[i]);
                        row.push(match mode {
                            PlotMode::HessianErr => rec.and_then(|r| r.hessian_err),
                            _ => rec.map(|r| r.loss - offset),
                        });
                    }
                    row
                })
                .collect()
        }
    };
    Ok(PlotTable { header, rows, warnings })
}

pub fn write_table<W: Write>(table: &PlotTable, out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(&table.header)?;
    for row in &table.rows {
        w.write_record(row.iter().map(|c| c.map(|v| v.to_string()).unwrap_or_default()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(iteration: usize, t: f64, loss: f64) -> TraceRecord {
        TraceRecord {
            iteration,
            wall_clock_s: t,
            loss,
            grad_norm: 0.0,
            hessian_err: None,
            lambda_used: None,
        }
    }

    #[test]
    fn single_trace_by_iteration() {
        let t = vec![rec(1, 0.1, 3.0), rec(2, 0.2, 2.0)];
        let table = emit_plot_data(&[("gd".into(), t)], PlotMode::LossVsIter, false).unwrap();
        assert_eq!(table.header, vec!["iteration", "gd"]);
        assert_eq!(table.rows, vec![vec![Some(1.0), Some(3.0)], vec![Some(2.0), Some(2.0)]]);
    }

    #[test]
    fn time_union_carries_values_forward() {
        let a = vec![rec(1, 1.0, 10.0), rec(2, 3.0, 8.0), rec(3, 5.0, 7.0)];
        let b = vec![rec(1, 2.0, 9.0), rec(2, 4.0, 6.0)];
        let table = emit_plot_data(&[("a".into(), a), ("b".into(), b)], PlotMode::LossVsTime, false).unwrap();
        let want = vec![
            vec![Some(1.0), Some(10.0), None],
            vec![Some(2.0), Some(10.0), Some(9.0)],
            vec![Some(3.0), Some(8.0), Some(9.0)],
            vec![Some(4.0), Some(8.0), Some(6.0)],
            vec![Some(5.0), Some(7.0), Some(6.0)],
        ];
        assert_eq!(table.rows, want);
    }

    #[test]
    fn suboptimality_subtracts_best_loss() {
        let a = vec![rec(1, 1.0, 5.0), rec(2, 2.0, 4.5)];
        let b = vec![rec(1, 1.5, 4.0)];
        let table = emit_plot_data(&[("a".into(), a), ("b".into(), b)], PlotMode::LossVsIter, true).unwrap();
        assert_eq!(table.rows[0], vec![Some(1.0), Some(1.0), Some(0.0)]);
        assert_eq!(table.rows[1], vec![Some(2.0), Some(0.5), None]);
    }

    #[test]
    fn unprobed_methods_are_dropped_with_warning() {
        let mut probed = vec![rec(1, 0.1, 1.0)];
        probed[0].hessian_err = Some(0.3);
        let plain = vec![rec(1, 0.1, 1.0)];
        let table = emit_plot_data(&[("span".into(), probed), ("gd".into(), plain.clone())], PlotMode::HessianErr, false).unwrap();
        assert_eq!(table.header, vec!["iteration", "span"]);
        assert_eq!(table.warnings.len(), 1);
        assert!(matches!(
            emit_plot_data(&[("gd".into(), plain)], PlotMode::HessianErr, false),
            Err(BenchError::IncompatibleTraces(_))
        ));
    }

    #[test]
    fn incompatible_inputs() {
        let t = vec![rec(1, 0.1, 1.0)];
        assert!(emit_plot_data(&[], PlotMode::LossVsIter, false).is_err());
        let dup = [("a".to_owned(), t.clone()), ("a".to_owned(), t)];
        assert!(matches!(emit_plot_data(&dup, PlotMode::LossVsIter, false), Err(BenchError::IncompatibleTraces(_))));
        let unordered = vec![rec(2, 0.1, 1.0), rec(1, 0.2, 1.0)];
        assert!(emit_plot_data(&[("a".into(), unordered)], PlotMode::LossVsTime, false).is_err());
    }

    #[test]
    fn table_serializes_empty_cells() {
        let table = PlotTable {
            header: vec!["iteration".into(), "a".into()],
            rows: vec![vec![Some(1.0), None]],
            warnings: vec![],
        };
        let mut buf = Vec::new();
        write_table(&table, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "iteration,a\n1,\n");
    }
}
