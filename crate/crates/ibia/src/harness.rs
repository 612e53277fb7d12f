//! Running instances: single runs, seed sweeps and manifest batches.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ibia_core::{infer_mpe, Assignment, DiscreteNetwork, EngineConfig, MpeFailure, MpeResult, VariablePriority};
use rayon::prelude::*;

use crate::error::{read, Error, Result};
use crate::uai::{parse_evidence, UaiModel};

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub engine: EngineConfig,
    /// Runs per instance. The first uses `engine.priority`; the others use the
    /// random ordering with consecutive seeds.
    pub sweep_seeds: usize,
    pub time_limit: Option<Duration>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { engine: EngineConfig::default(), sweep_seeds: 1, time_limit: Some(Duration::from_secs(3600)) }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Status {
    /// A nonzero-probability assignment.
    Solved,
    /// An assignment of probability zero.
    Zero,
    /// Decoding or the reduction failed on every attempt.
    DeadEnd,
    TimedOut,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Solved => "solved",
            Status::Zero => "zero",
            Status::DeadEnd => "dead_end",
            Status::TimedOut => "timeout",
        }
    }
}

/// One engine run of a sweep.
#[derive(Clone, Debug)]
pub struct Attempt {
    pub seed: u64,
    pub priority: VariablePriority,
    pub outcome: std::result::Result<MpeResult, MpeFailure>,
}

impl Attempt {
    pub fn log_mpe(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::NEG_INFINITY, |r| r.log_mpe)
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub attempts: Vec<Attempt>,
    /// Index of the selected attempt.
    pub best: usize,
    pub elapsed: Duration,
    pub options: RunOptions,
}

impl RunOutcome {
    pub fn chosen(&self) -> &Attempt {
        &self.attempts[self.best]
    }

    pub fn status(&self) -> Status {
        match &self.chosen().outcome {
            Ok(r) if r.log_mpe > f64::NEG_INFINITY => Status::Solved,
            Ok(_) => Status::Zero,
            Err(f) if f.error == ibia_core::Error::TimedOut => Status::TimedOut,
            Err(_) => Status::DeadEnd,
        }
    }
}

/// Runs the sweep for one instance, in parallel on the current rayon pool.
/// The attempt with the largest `log_mpe` wins, ties to the earlier one.
pub fn solve(net: &DiscreteNetwork, evidence: &Assignment, opts: &RunOptions) -> RunOutcome {
    let start = Instant::now();
    let deadline = opts.time_limit.map(|d| start + d);
    let attempts: Vec<Attempt> = (0..opts.sweep_seeds.max(1) as u64)
        .into_par_iter()
        .map(|k| {
            let priority = if k == 0 { opts.engine.priority } else { VariablePriority::Random };
            let seed = opts.engine.seed.wrapping_add(k);
            let cfg = EngineConfig { seed, priority, ..opts.engine.clone() };
            let mut stop = || deadline.is_some_and(|d| Instant::now() >= d);
            Attempt { seed, priority, outcome: infer_mpe(net, evidence, &cfg, &mut stop) }
        })
        .collect();
    let mut best = 0;
    for (i, a) in attempts.iter().enumerate() {
        if a.log_mpe() > attempts[best].log_mpe() {
            best = i;
        }
    }
    RunOutcome { attempts, best, elapsed: start.elapsed(), options: opts.clone() }
}

pub fn load_instance(model: &Path, evidence: Option<&Path>) -> Result<(DiscreteNetwork, Assignment)> {
    let net = UaiModel::parse(&read(model)?)?.to_network()?;
    let ev = match evidence {
        Some(p) => parse_evidence(&read(p)?, net.cards())?,
        None => Assignment::new(),
    };
    Ok((net, ev))
}

/// One manifest line: model, optional evidence and optional exact log MPE.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub model: PathBuf,
    pub evidence: Option<PathBuf>,
    pub exact: Option<f64>,
}

/// Whitespace-separated triples, one per line; `-` marks a missing evidence
/// file or exact value, `#` starts a comment. Paths are relative to the
/// manifest's directory.
pub fn parse_manifest(text: &str, base: &Path) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Parse { what: "manifest", line: i + 1, msg };
        let fields: Vec<&str> = line.split_whitespace().collect();
        let [model, evid, exact] = fields[..] else {
            return Err(err(format!("expected 3 fields, found {}", fields.len())));
        };
        let exact = match exact {
            "-" => None,
            x => Some(x.parse::<f64>().map_err(|_| err(format!("bad exact value {x:?}")))?),
        };
        out.push(ManifestEntry { model: base.join(model), evidence: (evid != "-").then(|| base.join(evid)), exact });
    }
    Ok(out)
}

#[derive(Debug)]
pub struct BatchRow {
    pub name: String,
    pub exact: Option<f64>,
    /// `Err` holds the message of an instance that could not be loaded.
    pub run: std::result::Result<RunOutcome, String>,
}

impl BatchRow {
    pub fn solved(&self) -> bool {
        matches!(&self.run, Ok(r) if r.status() == Status::Solved)
    }
}

pub fn run_batch(entries: &[ManifestEntry], opts: &RunOptions) -> Vec<BatchRow> {
    entries
        .par_iter()
        .map(|e| {
            let name = e.model.file_name().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
            let run = load_instance(&e.model, e.evidence.as_deref())
                .map(|(net, ev)| solve(&net, &ev, opts))
                .map_err(|err| err.to_string());
            BatchRow { name, exact: e.exact, run }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ibia_core::oracle::{random_network, RandomNetworkParams};

    #[test]
    fn manifest_lines() {
        let text = "# name evid exact\n a.uai a.uai.evid -13.28\n\nb.uai - -\n";
        let m = parse_manifest(text, Path::new("/d")).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m[0].evidence.as_deref(), Some(Path::new("/d/a.uai.evid")));
        assert_eq!(m[0].exact, Some(-13.28));
        assert_eq!((m[1].evidence.clone(), m[1].exact), (None, None));
        assert!(matches!(parse_manifest("a b", Path::new(".")), Err(Error::Parse { line: 1, .. })));
        assert!(parse_manifest("", Path::new(".")).unwrap().is_empty());
    }

    #[test]
    fn sweep_keeps_best() {
        let net = random_network(&RandomNetworkParams { n_vars: 12, seed: 4, ..Default::default() });
        let opts = RunOptions { sweep_seeds: 4, ..Default::default() };
        let out = solve(&net, &Assignment::new(), &opts);
        assert_eq!(out.attempts.len(), 4);
        assert_eq!(out.attempts[0].priority, VariablePriority::FewestCliques);
        assert!(out.attempts[1..].iter().all(|a| a.priority == VariablePriority::Random));
        let best = out.chosen().log_mpe();
        assert!(out.attempts.iter().all(|a| a.log_mpe() <= best));
        assert_eq!(out.status(), Status::Solved);
    }

    #[test]
    fn zero_time_limit_times_out() {
        let net = random_network(&RandomNetworkParams { n_vars: 12, seed: 4, ..Default::default() });
        let opts = RunOptions { time_limit: Some(Duration::ZERO), ..Default::default() };
        assert_eq!(solve(&net, &Assignment::new(), &opts).status(), Status::TimedOut);
    }
}
