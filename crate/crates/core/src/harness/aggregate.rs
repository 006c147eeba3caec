//! Cross-seed aggregation of evaluation curves.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::{Error, Result};

/// One parsed row of a per-seed evaluation CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub env_step: usize,
    pub success_rate: f64,
    pub queries_so_far: usize,
}

pub fn parse_eval_csv(text: &str) -> Result<Vec<EvalRow>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty evaluation CSV".into()))?;
    if header != "scenario,method,seed,env_step,success_rate,queries_so_far" {
        return Err(Error::Config(format!("unexpected eval CSV header '{header}'")));
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Config(format!("bad eval CSV row '{line}'")));
        }
        let bad = |what: &str| Error::Config(format!("bad {what} in eval CSV row '{line}'"));
        rows.push(EvalRow {
            scenario: f[0].to_string(),
            method: f[1].to_string(),
            seed: f[2].parse().map_err(|_| bad("seed"))?,
            env_step: f[3].parse().map_err(|_| bad("env_step"))?,
            success_rate: f[4].parse().map_err(|_| bad("success_rate"))?,
            queries_so_far: f[5].parse().map_err(|_| bad("queries_so_far"))?,
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub scenario: String,
    pub method: String,
    pub env_step: usize,
    pub mean_success_rate: f64,
    pub stderr_success_rate: f64,
    pub n_seeds: usize,
}

/// Per-(scenario, method, step) mean and standard error over seeds; rows are
/// sorted by (scenario, method, step). Seeds of one (scenario, method) cell
/// must share an identical step grid.
pub fn aggregate(rows: &[EvalRow]) -> Result<Vec<AggregateRow>> {
    // (scenario, method) -> seed -> ordered (step, rate)
    let mut cells: BTreeMap<(String, String), BTreeMap<u64, Vec<(usize, f64)>>> = BTreeMap::new();
    for r in rows {
        cells
            .entry((r.scenario.clone(), r.method.clone()))
            .or_default()
            .entry(r.seed)
            .or_default()
            .push((r.env_step, r.success_rate));
    }
    let mut out = Vec::new();
    for ((scenario, method), seeds) in &cells {
        let mut grids: Vec<Vec<usize>> = seeds
            .values()
            .map(|rows| rows.iter().map(|&(s, _)| s).collect())
            .collect();
        for g in &mut grids {
            g.sort_unstable();
        }
        if grids.windows(2).any(|w| w[0] != w[1]) {
            return Err(Error::Config(format!(
                "seeds of ({scenario}, {method}) have mismatched evaluation step grids"
            )));
        }
        let grid = &grids[0];
        for &step in grid {
            let rates: Vec<f64> = seeds
                .values()
                .map(|rows| {
                    rows.iter()
                        .find(|&&(s, _)| s == step)
                        .map(|&(_, r)| r)
                        .expect("validated grid")
                })
                .collect();
            let n = rates.len();
            let mean = rates.iter().sum::<f64>() / n as f64;
            let stderr = if n > 1 {
                let var = rates.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                    / (n - 1) as f64;
                (var / n as f64).sqrt()
            } else {
                0.0
            };
            out.push(AggregateRow {
                scenario: scenario.clone(),
                method: method.clone(),
                env_step: step,
                mean_success_rate: mean,
                stderr_success_rate: stderr,
                n_seeds: n,
            });
        }
    }
    Ok(out)
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> String {
    let mut out =
        String::from("scenario,method,env_step,mean_success_rate,stderr_success_rate,n_seeds\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.scenario, r.method, r.env_step, r.mean_success_rate, r.stderr_success_rate, r.n_seeds
        );
    }
    out
}

/// Aggregates every `*_eval.csv` under `dir` into one CSV at `out`.
pub fn aggregate_dir(dir: &Path, out: &Path) -> Result<Vec<AggregateRow>> {
    let mut rows = Vec::new();
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.ends_with("_eval.csv"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Config(format!(
            "no *_eval.csv files found in {}",
            dir.display()
        )));
    }
    for p in &paths {
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        rows.extend(parse_eval_csv(&text)?);
    }
    let agg = aggregate(&rows)?;
    std::fs::write(out, aggregate_csv(&agg)).map_err(|e| Error::io(out, e))?;
    Ok(agg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scenario: &str, method: &str, seed: u64, step: usize, rate: f64) -> EvalRow {
        EvalRow {
            scenario: scenario.into(),
            method: method.into(),
            seed,
            env_step: step,
            success_rate: rate,
            queries_so_far: 0,
        }
    }

    #[test]
    fn single_seed_mean_is_value_stderr_zero() {
        let rows = vec![row("a", "ours", 0, 5000, 0.45)];
        let agg = aggregate(&rows).unwrap();
        assert_eq!(agg.len(), 1);
        assert_eq!(agg[0].mean_success_rate, 0.45);
        assert_eq!(agg[0].stderr_success_rate, 0.0);
        assert_eq!(agg[0].n_seeds, 1);
    }

    #[test]
    fn two_seed_example() {
        let rows = vec![row("a", "bc", 0, 5000, 0.4), row("a", "bc", 1, 5000, 0.6)];
        let agg = aggregate(&rows).unwrap();
        approx::assert_abs_diff_eq!(agg[0].mean_success_rate, 0.5, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(agg[0].stderr_success_rate, 0.1, epsilon = 1e-12);
    }

    #[test]
    fn three_seed_fixture_matches_hand_computation() {
        // rates 0.2, 0.5, 0.8: mean 0.5; sample std 0.3; stderr 0.3/sqrt(3)
        let rows = vec![
            row("a", "ours", 0, 5000, 0.2),
            row("a", "ours", 1, 5000, 0.5),
            row("a", "ours", 2, 5000, 0.8),
        ];
        let agg = aggregate(&rows).unwrap();
        approx::assert_abs_diff_eq!(agg[0].mean_success_rate, 0.5, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(
            agg[0].stderr_success_rate,
            0.3 / 3.0f64.sqrt(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn mismatched_grids_are_rejected() {
        let rows = vec![
            row("a", "ours", 0, 5000, 0.2),
            row("a", "ours", 0, 10000, 0.3),
            row("a", "ours", 1, 5000, 0.5),
        ];
        assert!(aggregate(&rows).is_err());
    }

    #[test]
    fn rows_are_sorted_and_csv_round_trips() {
        let rows = vec![
            row("b", "ours", 0, 10000, 0.2),
            row("b", "ours", 0, 5000, 0.1),
            row("a", "bc", 0, 5000, 0.9),
        ];
        let agg = aggregate(&rows).unwrap();
        let keys: Vec<_> = agg
            .iter()
            .map(|r| (r.scenario.clone(), r.method.clone(), r.env_step))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        let text = aggregate_csv(&agg);
        assert!(text.starts_with("scenario,method,env_step"));
        assert_eq!(text.lines().count(), 4);
    }
}
