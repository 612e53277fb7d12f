//! Line-oriented `key=value` metrics and the batch summary table.
//!
//! Keys come out in a fixed order and numbers in a fixed format, so two runs
//! with the same inputs produce identical text. Wall-clock time is only
//! written when asked for. Log values are written in `log_base`, base 10 by
//! the UAI convention, while the engine works in natural log.

use std::fmt::Write as _;

use ibia_core::engine::delta_metrics;
use ibia_core::{IterationTrace, VariablePriority};

use crate::harness::{BatchRow, RunOutcome, Status};

fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9}")
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn priority_name(p: VariablePriority) -> &'static str {
    match p {
        VariablePriority::FewestCliques => "fewest-cliques",
        VariablePriority::Random => "random",
    }
}

fn histogram(counts: &[usize]) -> String {
    let parts: Vec<String> =
        counts.iter().enumerate().filter(|(_, &n)| n > 0).map(|(b, n)| format!("{b}:{n}")).collect();
    parts.join(",")
}

fn write_trace(s: &mut String, trace: &[IterationTrace]) {
    for (i, t) in trace.iter().enumerate() {
        let parts: Vec<String> = t.partitions.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "iter.{i}.known_before={}", t.known_before);
        let _ = writeln!(s, "iter.{i}.known_after={}", t.known_after);
        let _ = writeln!(s, "iter.{i}.partitions={}", parts.join(","));
        let _ = writeln!(s, "iter.{i}.decode_retried={}", t.decode_retried);
        for (j, p) in t.stats.iter().enumerate() {
            let key = format!("iter.{i}.part.{j}");
            let _ = writeln!(s, "{key}.cliques={}", p.cliques);
            let _ = writeln!(s, "{key}.max_clique_size={}", num(p.max_clique_size));
            let _ = writeln!(s, "{key}.added_vars={}", p.added_vars);
            let _ = writeln!(s, "{key}.clique_size_histogram={}", histogram(&p.size_histogram));
            let _ = writeln!(s, "{key}.peak_table_len={}", p.peak_table_len);
            let mcs_im = p.mcs_im_used.map_or_else(|| "-".into(), num);
            let _ = writeln!(s, "{key}.mcs_im_used={mcs_im}");
            let _ = writeln!(s, "{key}.soft_retries={}", p.soft_retries);
            let _ = writeln!(s, "{key}.residual_oversized={}", p.residual_oversized);
        }
    }
}

/// Metrics for one run. `exact`, in `log_base`, adds the two error columns.
pub fn metrics(run: &RunOutcome, exact: Option<f64>, timing: bool, log_base: f64) -> String {
    let mut s = String::new();
    let k = 1.0 / log_base.ln();
    let cfg = &run.options.engine;
    let chosen = run.chosen();
    let _ = writeln!(s, "status={}", run.status().as_str());
    let _ = writeln!(s, "mcs_p={}", num(cfg.mcs_p));
    let _ = writeln!(s, "mcs_im={}", num(cfg.mcs_im));
    let _ = writeln!(s, "seed={}", chosen.seed);
    let _ = writeln!(s, "priority={}", priority_name(chosen.priority));
    let _ = writeln!(s, "log_base={}", log_base);
    let (trace, estimate) = match &chosen.outcome {
        Ok(r) => {
            let _ = writeln!(s, "log_mpe={}", num(r.log_mpe * k));
            let _ = writeln!(s, "log_maxmarg_estimate={}", num(r.log_maxmarg_estimate * k));
            let _ = writeln!(s, "iterations={}", r.iterations);
            let _ = writeln!(s, "max_partitions={}", r.max_partitions);
            let _ = writeln!(s, "restarted={}", r.restarted);
            (&r.trace, Some(r.log_maxmarg_estimate))
        }
        Err(f) => {
            let _ = writeln!(s, "error={}", f.error);
            let _ = writeln!(s, "known_vars={}", f.partial.len());
            let est = f.log_maxmarg_estimate.map_or_else(|| "-".into(), |e| num(e * k));
            let _ = writeln!(s, "log_maxmarg_estimate={est}");
            let _ = writeln!(s, "iterations={}", f.trace.len());
            (&f.trace, f.log_maxmarg_estimate)
        }
    };
    let peak = trace.iter().flat_map(|t| t.stats.iter().map(|p| p.peak_table_len)).max().unwrap_or(0);
    let retries: usize = trace.iter().flat_map(|t| t.stats.iter().map(|p| p.soft_retries)).sum();
    let _ = writeln!(s, "peak_table_len={peak}");
    let _ = writeln!(s, "peak_table_within_bound={}", (peak as f64).log2() <= cfg.mcs_p + 1e-9 || peak == 0);
    let _ = writeln!(s, "soft_retries={retries}");
    if let Some(exact) = exact {
        let _ = writeln!(s, "exact_log={}", num(exact));
        let (dmm, dmpe) = deltas(run, exact, estimate, log_base);
        let _ = writeln!(s, "delta_maxmarg={dmm}");
        let _ = writeln!(s, "delta_mpe={dmpe}");
    }
    if run.attempts.len() > 1 {
        for (i, a) in run.attempts.iter().enumerate() {
            let _ = writeln!(s, "sweep.{i}.seed={}", a.seed);
            let _ = writeln!(s, "sweep.{i}.priority={}", priority_name(a.priority));
            let _ = writeln!(s, "sweep.{i}.log_mpe={}", num(a.log_mpe() * k));
        }
    }
    write_trace(&mut s, trace);
    if timing {
        let _ = writeln!(s, "wall_time_s={:.3}", run.elapsed.as_secs_f64());
    }
    s
}

/// Formatted `(delta_maxmarg, delta_mpe)` in `log_base`; a zero-probability
/// or missing assignment shows as `N`.
fn deltas(run: &RunOutcome, exact: f64, estimate: Option<f64>, log_base: f64) -> (String, String) {
    let ln_base = log_base.ln();
    match &run.chosen().outcome {
        Ok(r) => {
            let d = delta_metrics(r, exact * ln_base);
            (num(d.delta_maxmarg / ln_base), d.delta_mpe.map_or_else(|| "N".into(), |x| num(x / ln_base)))
        }
        Err(_) => (estimate.map_or_else(|| "-".into(), |e| num(e / ln_base - exact)), "N".into()),
    }
}

/// Width of a bin in the `|delta_maxmarg|` histogram.
pub const ERROR_BIN: f64 = 0.25;
const ERROR_BINS: usize = 20;

/// Per-instance rows, the solved count and a histogram of the absolute
/// max-marginal error. Exact values and log columns are in `log_base`.
pub fn batch_table(rows: &[BatchRow], timing: bool, log_base: f64) -> String {
    let mut s = String::new();
    let k = 1.0 / log_base.ln();
    let _ = write!(s, "name\tstatus\tI\tP\tlog_mpe\tlog_maxmarg\tdelta_maxmarg\tdelta_mpe");
    s.push_str(if timing { "\truntime_s\n" } else { "\n" });
    let mut errors = Vec::new();
    for row in rows {
        match &row.run {
            Err(msg) => {
                let _ = write!(s, "{}\terror\t-\t-\tN\t-\t-\tN", row.name);
                if timing {
                    s.push_str("\t-");
                }
                let _ = writeln!(s, "\t# {msg}");
            }
            Ok(run) => {
                let (i, p, mpe, est) = match &run.chosen().outcome {
                    Ok(r) => (
                        r.iterations.to_string(),
                        r.max_partitions.to_string(),
                        r.log_mpe,
                        Some(r.log_maxmarg_estimate),
                    ),
                    Err(f) => (f.trace.len().to_string(), "-".into(), f64::NEG_INFINITY, f.log_maxmarg_estimate),
                };
                let mpe = if run.status() == Status::Solved { num(mpe * k) } else { "N".into() };
                let est_s = est.map_or_else(|| "-".into(), |e| num(e * k));
                let (dmm, dmpe) = match row.exact {
                    Some(exact) => {
                        if let Some(e) = est {
                            errors.push((e * k - exact).abs());
                        }
                        deltas(run, exact, est, log_base)
                    }
                    None => ("-".into(), "-".into()),
                };
                let _ = write!(s, "{}\t{}\t{i}\t{p}\t{mpe}\t{est_s}\t{dmm}\t{dmpe}", row.name, run.status().as_str());
                if timing {
                    let _ = write!(s, "\t{:.3}", run.elapsed.as_secs_f64());
                }
                s.push('\n');
            }
        }
    }
    let solved = rows.iter().filter(|r| r.solved()).count();
    let _ = writeln!(s, "solved={solved}/{}", rows.len());
    if !errors.is_empty() {
        let mean = errors.iter().sum::<f64>() / errors.len() as f64;
        let _ = writeln!(s, "mean_abs_delta_maxmarg={}", num(mean));
        let mut bins = [0usize; ERROR_BINS + 1];
        for e in &errors {
            bins[((e / ERROR_BIN) as usize).min(ERROR_BINS)] += 1;
        }
        let _ = writeln!(s, "# abs_delta_maxmarg histogram: lo\thi\tcount");
        for (b, n) in bins.iter().enumerate() {
            let lo = b as f64 * ERROR_BIN;
            let hi = if b == ERROR_BINS { "inf".to_string() } else { format!("{:.2}", lo + ERROR_BIN) };
            let _ = writeln!(s, "hist\t{lo:.2}\t{hi}\t{n}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{solve, RunOptions};
    use ibia_core::oracle::{brute_force_mpe, random_network, RandomNetworkParams};
    use ibia_core::Assignment;

    #[test]
    fn metrics_are_stable_and_ordered() {
        let net = random_network(&RandomNetworkParams { n_vars: 10, seed: 1, ..Default::default() });
        let (_, exact) = brute_force_mpe(&net, &Assignment::new()).unwrap();
        let opts = RunOptions::default();
        let a = metrics(&solve(&net, &Assignment::new(), &opts), Some(exact), false, std::f64::consts::E);
        let b = metrics(&solve(&net, &Assignment::new(), &opts), Some(exact), false, std::f64::consts::E);
        assert_eq!(a, b);
        let keys: Vec<&str> = a.lines().map(|l| l.split('=').next().unwrap()).collect();
        assert_eq!(&keys[..5], &["status", "mcs_p", "mcs_im", "seed", "priority"]);
        assert!(a.contains("status=solved\n"));
        assert!(a.contains("delta_mpe=0.000000000\n"));
        assert!(!a.contains("wall_time_s"));
        let r = solve(&net, &Assignment::new(), &opts);
        let ten = metrics(&r, Some(exact / 10f64.ln()), false, 10.0);
        let want = r.chosen().outcome.as_ref().unwrap().log_mpe / 10f64.ln();
        assert!(ten.contains(&format!("log_mpe={want:.9}\n")));
        assert!(ten.contains("delta_mpe=0.000000000\n"));
    }

    #[test]
    fn empty_batch() {
        assert_eq!(
            batch_table(&[], false, 10.0),
            "name\tstatus\tI\tP\tlog_mpe\tlog_maxmarg\tdelta_maxmarg\tdelta_mpe\nsolved=0/0\n"
        );
    }
}
