//! Run traces and their CSV serialization.
//!
//! A [`RunTrace`] holds one row per recorded slot: per-agent train cost,
//! per-agent test RMSE/MAE, and the geodesic distances over the variant's
//! edge set. Distances that hit the log map's cut locus are recorded as an
//! empty cell rather than a number.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::completion::{fit_block, test_error};
use crate::error::{Error, Result};
use crate::gossip::AgentState;
use crate::grassmann::geodesic_distance;

/// One recorded slot.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub slot: u64,
    pub stepsize: f64,
    /// Per-agent local train cost, agents ascending.
    pub costs: Vec<f64>,
    /// Per-agent held-out RMSE (0 when an agent has no held-out entries).
    pub test_rmse: Vec<f64>,
    /// Per-agent held-out MAE (0 when an agent has no held-out entries).
    pub test_mae: Vec<f64>,
    /// Geodesic distance per recorded pair; `None` marks a cut-locus pair.
    pub dists: Vec<Option<f64>>,
}

impl TraceRow {
    pub fn mean_cost(&self) -> f64 {
        if self.costs.is_empty() {
            return 0.0;
        }
        self.costs.iter().sum::<f64>() / self.costs.len() as f64
    }

    pub fn total_cost(&self) -> f64 {
        self.costs.iter().sum()
    }

    /// Largest recorded pair distance, if every pair was defined.
    pub fn max_dist(&self) -> Option<f64> {
        let mut worst: f64 = 0.0;
        for d in &self.dists {
            worst = worst.max((*d)?);
        }
        Some(worst)
    }

    pub fn mean_rmse(&self) -> f64 {
        if self.test_rmse.is_empty() {
            return 0.0;
        }
        self.test_rmse.iter().sum::<f64>() / self.test_rmse.len() as f64
    }
}

/// Slot-indexed records of a run, plus the pair labels the distance columns
/// refer to (chain edges, or all pairs for the dynamic variant).
#[derive(Clone, Debug)]
pub struct RunTrace {
    pub n_agents: usize,
    /// 1-based agent id pairs, in recorded column order.
    pub pairs: Vec<(usize, usize)>,
    pub rows: Vec<TraceRow>,
    /// Slots (or pairs, in a parallel round) skipped on a cut-locus overlap.
    pub skipped: u64,
}

impl RunTrace {
    pub fn new(n_agents: usize, pairs: Vec<(usize, usize)>) -> Self {
        Self {
            n_agents,
            pairs,
            rows: Vec::new(),
            skipped: 0,
        }
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }
}

/// Computes and appends one trace row from the live agent states.
///
/// Costs re-solve the inner weights at the current point; test errors use the
/// same solve. All recorded costs and errors must come out finite or the run
/// is aborted; an undefined pair distance (cut locus) becomes `None`.
pub fn record(
    trace: &mut RunTrace,
    slot: u64,
    stepsize: f64,
    agents: &[AgentState],
    reg: f64,
) -> Result<()> {
    debug_assert!(trace.rows.last().is_none_or(|r| r.slot < slot));
    let mut costs = Vec::with_capacity(agents.len());
    let mut test_rmse = Vec::with_capacity(agents.len());
    let mut test_mae = Vec::with_capacity(agents.len());
    for agent in agents {
        let fit = fit_block(&agent.point, &agent.block, reg)?;
        if !fit.cost.is_finite() {
            return Err(Error::NonFinite {
                context: format!("train cost of agent {}", agent.id),
            });
        }
        costs.push(fit.cost);
        let (rmse, mae) = if agent.heldout.is_empty() {
            (0.0, 0.0)
        } else {
            test_error(&agent.point, &fit.weights, &agent.heldout)?
        };
        if !(rmse.is_finite() && mae.is_finite()) {
            return Err(Error::NonFinite {
                context: format!("test error of agent {}", agent.id),
            });
        }
        test_rmse.push(rmse);
        test_mae.push(mae);
    }
    let mut dists = Vec::with_capacity(trace.pairs.len());
    for &(i, k) in &trace.pairs {
        match geodesic_distance(&agents[i - 1].point, &agents[k - 1].point) {
            Ok(d) => dists.push(Some(d)),
            Err(Error::SingularOverlap { .. }) => dists.push(None),
            Err(e) => return Err(e),
        }
    }
    trace.rows.push(TraceRow {
        slot,
        stepsize,
        costs,
        test_rmse,
        test_mae,
        dists,
    });
    Ok(())
}

/// 12 significant digits, the round-trip precision of the CSV format.
fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

/// Writes the trace with the stable column layout
/// `slot,stepsize,cost_a1..N,rmse_a1..N,mae_a1..N,dist_i_k...`
/// (agents ascending, pairs in recorded order). Undefined distances are
/// empty cells.
pub fn write_csv(trace: &RunTrace, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let mut header = String::from("slot,stepsize");
    for a in 1..=trace.n_agents {
        header.push_str(&format!(",cost_a{a}"));
    }
    for a in 1..=trace.n_agents {
        header.push_str(&format!(",rmse_a{a}"));
    }
    for a in 1..=trace.n_agents {
        header.push_str(&format!(",mae_a{a}"));
    }
    for (i, k) in &trace.pairs {
        header.push_str(&format!(",dist_{i}_{k}"));
    }
    writeln!(out, "{header}")?;
    for row in &trace.rows {
        let mut line = format!("{},{}", row.slot, fmt_float(row.stepsize));
        for group in [&row.costs, &row.test_rmse, &row.test_mae] {
            for v in group {
                line.push(',');
                line.push_str(&fmt_float(*v));
            }
        }
        for d in &row.dists {
            line.push(',');
            if let Some(d) = d {
                line.push_str(&fmt_float(*d));
            }
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a trace back from the CSV layout produced by [`write_csv`].
pub fn read_csv(path: &Path) -> Result<RunTrace> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "empty file".into(),
    })??;
    let columns: Vec<&str> = header.split(',').collect();
    if columns.first() != Some(&"slot") || columns.get(1) != Some(&"stepsize") {
        return Err(Error::Parse {
            line: 1,
            msg: "expected header starting with slot,stepsize".into(),
        });
    }
    let n_agents = columns.iter().filter(|c| c.starts_with("cost_a")).count();
    let mut pairs = Vec::new();
    for c in &columns {
        if let Some(rest) = c.strip_prefix("dist_") {
            let (i, k) = rest.split_once('_').ok_or_else(|| Error::Parse {
                line: 1,
                msg: format!("bad distance column {c}"),
            })?;
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: 1,
                    msg: format!("bad distance column {c}"),
                })
            };
            pairs.push((parse(i)?, parse(k)?));
        }
    }
    let expected_cols = 2 + 3 * n_agents + pairs.len();
    if columns.len() != expected_cols {
        return Err(Error::Parse {
            line: 1,
            msg: format!("expected {expected_cols} columns, found {}", columns.len()),
        });
    }

    let mut trace = RunTrace::new(n_agents, pairs);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let lineno = lineno + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected_cols {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {expected_cols} fields, found {}", fields.len()),
            });
        }
        let parse_f64 = |s: &str| {
            s.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("bad float {s:?}"),
            })
        };
        let slot = fields[0].parse::<u64>().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("bad slot {:?}", fields[0]),
        })?;
        let stepsize = parse_f64(fields[1])?;
        let mut cursor = 2;
        let take = |n: usize, cursor: &mut usize| -> Result<Vec<f64>> {
            let vals: Result<Vec<f64>> = fields[*cursor..*cursor + n]
                .iter()
                .map(|s| parse_f64(s))
                .collect();
            *cursor += n;
            vals
        };
        let costs = take(n_agents, &mut cursor)?;
        let test_rmse = take(n_agents, &mut cursor)?;
        let test_mae = take(n_agents, &mut cursor)?;
        let mut dists = Vec::with_capacity(trace.pairs.len());
        for s in &fields[cursor..] {
            if s.is_empty() {
                dists.push(None);
            } else {
                dists.push(Some(parse_f64(s)?));
            }
        }
        trace.rows.push(TraceRow {
            slot,
            stepsize,
            costs,
            test_rmse,
            test_mae,
            dists,
        });
    }
    Ok(trace)
}
