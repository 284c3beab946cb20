//! Parameter sweeps over many seeded frames.
//!
//! Configs are flat `key = value` text with `#` comments:
//!
//! ```text
//! sweep.axis = p
//! sweep.values = 0.1, 0.2, 0.3
//! M = 20
//! N = 15
//! mu = 0.5
//! policies = PF, ML, FVE, NVE
//! trials = 200
//! seed = 7
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{IdncError, Result};
use crate::sim::{
    run_frame, sample_heterogeneous_params, FrameConfig, FrameMetrics, PolicyKind, MAX_ERASURE,
};

/// Setting this to anything but `0` or the empty string runs every trial on
/// the calling thread, in order.
pub const SINGLE_THREAD_ENV: &str = "IDNC_SINGLE_THREAD";

/// Stream id of the network draw; policy ids are small.
const NETWORK_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SweepAxis {
    #[serde(rename = "p")]
    ErasureProbability,
    #[serde(rename = "mu")]
    DemandRatio,
    #[serde(rename = "M")]
    Receivers,
    #[serde(rename = "N")]
    Packets,
}

impl SweepAxis {
    pub fn key(self) -> &'static str {
        match self {
            SweepAxis::ErasureProbability => "p",
            SweepAxis::DemandRatio => "mu",
            SweepAxis::Receivers => "M",
            SweepAxis::Packets => "N",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "p" => Ok(SweepAxis::ErasureProbability),
            "mu" => Ok(SweepAxis::DemandRatio),
            "M" => Ok(SweepAxis::Receivers),
            "N" => Ok(SweepAxis::Packets),
            other => Err(IdncError::Config(format!(
                "unknown sweep axis `{other}` (p, mu, M or N)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = IdncError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(IdncError::Config(format!(
                "unknown format `{other}` (csv or json)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub receivers: usize,
    pub packets: usize,
    pub mu: f64,
    pub p: f64,
    pub reciprocal: bool,
    pub m_exponent: f64,
    pub policies: Vec<PolicyKind>,
    pub trials: usize,
    pub seed: u64,
    pub max_timeslots_factor: u64,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
}

impl ExperimentConfig {
    /// A one-point sweep over `p` with the given fixed parameters.
    pub fn single_point(receivers: usize, packets: usize, mu: f64, p: f64, trials: usize) -> Self {
        Self {
            axis: SweepAxis::ErasureProbability,
            values: vec![p],
            receivers,
            packets,
            mu,
            p,
            reciprocal: true,
            m_exponent: 3.0,
            policies: PolicyKind::ALL.to_vec(),
            trials,
            seed: 0,
            max_timeslots_factor: crate::sim::DEFAULT_TIMESLOT_FACTOR,
            output: None,
            format: OutputFormat::Csv,
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| IdncError::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let key = key.trim().to_string();
            if kv
                .insert(key.clone(), (lineno + 1, value.trim().to_string()))
                .is_some()
            {
                return Err(IdncError::Config(format!(
                    "line {}: duplicate key `{key}`",
                    lineno + 1
                )));
            }
        }

        let mut take = |key: &str| kv.remove(key);
        fn parse_as<T: FromStr>(key: &str, entry: &(usize, String)) -> Result<T> {
            entry.1.parse().map_err(|_| {
                IdncError::Config(format!("line {}: bad value `{}` for `{key}`", entry.0, entry.1))
            })
        }
        fn list(entry: &(usize, String)) -> Vec<&str> {
            entry
                .1
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect()
        }

        let axis_entry =
            take("sweep.axis").ok_or_else(|| IdncError::Config("missing `sweep.axis`".into()))?;
        let axis: SweepAxis = axis_entry.1.parse()?;
        let values_entry =
            take("sweep.values").ok_or_else(|| IdncError::Config("missing `sweep.values`".into()))?;
        let values = list(&values_entry)
            .into_iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| IdncError::Config(format!("line {}: bad sweep value `{v}`", values_entry.0)))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut config = Self::single_point(20, 15, 0.5, 0.25, 100);
        config.axis = axis;
        config.values = values;
        if let Some(e) = take("M") {
            config.receivers = parse_as("M", &e)?;
        }
        if let Some(e) = take("N") {
            config.packets = parse_as("N", &e)?;
        }
        if let Some(e) = take("mu") {
            config.mu = parse_as("mu", &e)?;
        }
        if let Some(e) = take("p") {
            config.p = parse_as("p", &e)?;
        }
        if let Some(e) = take("reciprocal") {
            config.reciprocal = parse_as("reciprocal", &e)?;
        }
        if let Some(e) = take("m") {
            config.m_exponent = parse_as("m", &e)?;
        }
        if let Some(e) = take("policies") {
            config.policies = list(&e).into_iter().map(str::parse).collect::<Result<_>>()?;
        }
        if let Some(e) = take("trials") {
            config.trials = parse_as("trials", &e)?;
        }
        if let Some(e) = take("seed") {
            config.seed = parse_as("seed", &e)?;
        }
        if let Some(e) = take("max_timeslots_factor") {
            config.max_timeslots_factor = parse_as("max_timeslots_factor", &e)?;
        }
        if let Some(e) = take("output") {
            config.output = Some(PathBuf::from(e.1));
        }
        if let Some(e) = take("format") {
            config.format = e.1.parse()?;
        }
        if let Some((key, (line, _))) = kv.into_iter().next() {
            return Err(IdncError::Config(format!("line {line}: unknown key `{key}`")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(IdncError::Config(msg));
        if self.values.is_empty() {
            return bad("`sweep.values` is empty".into());
        }
        if self.policies.is_empty() {
            return bad("`policies` is empty".into());
        }
        if self.trials == 0 {
            return bad("`trials` must be at least 1".into());
        }
        if self.max_timeslots_factor == 0 {
            return bad("`max_timeslots_factor` must be at least 1".into());
        }
        if !(self.m_exponent.is_finite() && self.m_exponent >= 0.0) {
            return bad(format!("`m` = {} must be a non-negative number", self.m_exponent));
        }
        for &v in &self.values {
            self.point(v)?.check()?;
        }
        Ok(())
    }

    /// Fixed parameters with the sweep axis set to `value`.
    pub fn point(&self, value: f64) -> Result<PointParams> {
        let mut pt = PointParams {
            receivers: self.receivers,
            packets: self.packets,
            mu: self.mu,
            p: self.p,
        };
        let as_count = |v: f64| -> Result<usize> {
            if v.fract() == 0.0 && v >= 1.0 {
                Ok(v as usize)
            } else {
                Err(IdncError::Config(format!(
                    "sweep value {v} for `{}` must be a positive integer",
                    self.axis.key()
                )))
            }
        };
        match self.axis {
            SweepAxis::ErasureProbability => pt.p = value,
            SweepAxis::DemandRatio => pt.mu = value,
            SweepAxis::Receivers => pt.receivers = as_count(value)?,
            SweepAxis::Packets => pt.packets = as_count(value)?,
        }
        Ok(pt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointParams {
    pub receivers: usize,
    pub packets: usize,
    pub mu: f64,
    pub p: f64,
}

impl PointParams {
    fn check(&self) -> Result<()> {
        if self.receivers == 0 || self.packets == 0 {
            return Err(IdncError::Config("`M` and `N` must be at least 1".into()));
        }
        if !(self.p > 0.0 && self.p < MAX_ERASURE) {
            return Err(IdncError::Config(format!(
                "`p` = {} outside (0, {MAX_ERASURE})",
                self.p
            )));
        }
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(IdncError::Config(format!("`mu` = {} outside (0, 1]", self.mu)));
        }
        Ok(())
    }
}

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `hash(master, sweep index, stream, trial index)`.
pub fn trial_seed(master: u64, sweep_index: u64, stream: u64, trial: u64) -> u64 {
    [sweep_index, stream, trial]
        .into_iter()
        .fold(splitmix64(master), |h, x| splitmix64(h ^ x))
}

/// How trials are spread over threads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parallelism {
    Sequential,
    /// Rayon's global pool.
    Auto,
    Threads(usize),
}

impl Parallelism {
    /// `threads = 0` means automatic; the environment override wins.
    pub fn from_env(threads: usize) -> Self {
        let forced = std::env::var(SINGLE_THREAD_ENV).is_ok_and(|v| !v.is_empty() && v != "0");
        match (forced, threads) {
            (true, _) => Parallelism::Sequential,
            (false, 0) => Parallelism::Auto,
            (false, k) => Parallelism::Threads(k),
        }
    }
}

/// One frame of one sweep point under one policy.
pub fn run_trial(
    config: &ExperimentConfig,
    sweep_index: usize,
    policy: PolicyKind,
    trial: usize,
) -> Result<FrameMetrics> {
    let pt = config.point(config.values[sweep_index])?;
    let (s, t) = (sweep_index as u64, trial as u64);
    let mut net_rng = ChaCha8Rng::seed_from_u64(trial_seed(config.seed, s, NETWORK_STREAM, t));
    let network = sample_heterogeneous_params(
        pt.p,
        pt.mu,
        pt.receivers,
        pt.packets,
        config.reciprocal,
        &mut net_rng,
    )?;
    let frame = FrameConfig {
        network,
        policy,
        m_exponent: config.m_exponent,
        max_timeslots: config.max_timeslots_factor * pt.packets as u64,
    };
    run_frame(&frame, trial_seed(config.seed, s, policy.id(), t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub policy: PolicyKind,
    pub mean_completion_delay: f64,
    pub ci95_completion: f64,
    pub mean_decoding_delay: f64,
    pub ci95_decoding: f64,
    pub trials: usize,
    pub truncated_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: &str = "sweep_value,policy,mean_completion_delay,ci95_completion,mean_decoding_delay,ci95_decoding,trials,truncated_count";

/// Sample mean and 95% normal-approximation half-width.
pub fn mean_ci95(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, 1.96 * (var / n as f64).sqrt())
}

impl ExperimentTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{}",
                r.sweep_value,
                r.policy,
                r.mean_completion_delay,
                r.ci95_completion,
                r.mean_decoding_delay,
                r.ci95_decoding,
                r.trials,
                r.truncated_count
            );
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("table serializes");
        s.push('\n');
        s
    }

    pub fn render(&self, format: OutputFormat) -> String {
        match format {
            OutputFormat::Csv => self.to_csv(),
            OutputFormat::Json => self.to_json(),
        }
    }

    pub fn row(&self, sweep_value: f64, policy: PolicyKind) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.sweep_value == sweep_value && r.policy == policy)
    }
}

fn aggregate(sweep_value: f64, policy: PolicyKind, runs: &[FrameMetrics]) -> SweepRow {
    let done: Vec<&FrameMetrics> = runs.iter().filter(|m| !m.truncated).collect();
    let completion: Vec<f64> = done
        .iter()
        .map(|m| m.completion_delay.expect("untruncated runs complete") as f64)
        .collect();
    let decoding: Vec<f64> = done.iter().map(|m| m.mean_decoding_delay()).collect();
    let (mean_completion_delay, ci95_completion) = mean_ci95(&completion);
    let (mean_decoding_delay, ci95_decoding) = mean_ci95(&decoding);
    SweepRow {
        sweep_value,
        policy,
        mean_completion_delay,
        ci95_completion,
        mean_decoding_delay,
        ci95_decoding,
        trials: runs.len(),
        truncated_count: runs.len() - done.len(),
    }
}

/// Every trial of every (sweep point, policy), aggregated in config order.
pub fn run_experiment(config: &ExperimentConfig, parallelism: Parallelism) -> Result<ExperimentTable> {
    config.validate()?;
    let jobs: Vec<(usize, PolicyKind, usize)> = (0..config.values.len())
        .flat_map(|s| {
            config
                .policies
                .iter()
                .flat_map(move |&p| (0..config.trials).map(move |t| (s, p, t)))
        })
        .collect();
    let run = |&(s, p, t): &(usize, PolicyKind, usize)| run_trial(config, s, p, t);
    let results: Vec<FrameMetrics> = match parallelism {
        Parallelism::Sequential => jobs.iter().map(run).collect::<Result<_>>()?,
        Parallelism::Auto => jobs.par_iter().map(run).collect::<Result<_>>()?,
        Parallelism::Threads(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| IdncError::Config(format!("thread pool: {e}")))?
            .install(|| jobs.par_iter().map(run).collect::<Result<_>>())?,
    };

    let rows = results
        .chunks(config.trials)
        .zip(jobs.iter().step_by(config.trials))
        .map(|(runs, &(s, p, _))| aggregate(config.values[s], p, runs))
        .collect();
    Ok(ExperimentTable {
        axis: config.axis,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
# two points
sweep.axis = N
sweep.values = 3, 4   # trailing comment
M = 4
mu = 0.75
p = 0.2
reciprocal = false
policies = PF ML
trials = 3
seed = 42
format = json
";

    #[test]
    fn parses_sample() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        assert_eq!(c.axis, SweepAxis::Packets);
        assert_eq!(c.values, vec![3.0, 4.0]);
        assert_eq!(c.receivers, 4);
        assert_eq!(c.mu, 0.75);
        assert!(!c.reciprocal);
        assert_eq!(c.policies, vec![PolicyKind::Pf, PolicyKind::Ml]);
        assert_eq!(c.trials, 3);
        assert_eq!(c.seed, 42);
        assert_eq!(c.format, OutputFormat::Json);
        assert_eq!(c.point(4.0).unwrap().packets, 4);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            "sweep.values = 1",
            "sweep.axis = q\nsweep.values = 1",
            "sweep.axis = p\nsweep.values = 0.2\nbogus = 1",
            "sweep.axis = p\nsweep.values = 0.2\ntrials = 0",
            "sweep.axis = p\nsweep.values = 0.2\nM = 3\nM = 4",
            "sweep.axis = M\nsweep.values = 2.5",
            "sweep.axis = p\nsweep.values = 1.5",
            "sweep.axis = p\nsweep.values = 0.2\npolicies = PF, XX",
            "sweep.axis = p\nsweep.values = 0.2\nno equals sign",
        ] {
            assert!(ExperimentConfig::parse(text).is_err(), "{text}");
        }
    }

    #[test]
    fn seeds_differ_by_every_coordinate() {
        let base = trial_seed(1, 2, 3, 4);
        assert_ne!(base, trial_seed(0, 2, 3, 4));
        assert_ne!(base, trial_seed(1, 0, 3, 4));
        assert_ne!(base, trial_seed(1, 2, 0, 4));
        assert_ne!(base, trial_seed(1, 2, 3, 0));
        assert_eq!(base, trial_seed(1, 2, 3, 4));
    }

    #[test]
    fn mean_and_half_width() {
        assert_eq!(mean_ci95(&[2.0]), (2.0, 0.0));
        let (m, h) = mean_ci95(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        let s = (5.0f64 / 3.0).sqrt();
        assert!((h - 1.96 * s / 2.0).abs() < 1e-15);
    }

    #[test]
    fn table_shape_and_determinism() {
        let c = ExperimentConfig::parse(SAMPLE).unwrap();
        let a = run_experiment(&c, Parallelism::Sequential).unwrap();
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.rows[1].policy, PolicyKind::Ml);
        assert_eq!(a.rows[2].sweep_value, 4.0);
        let b = run_experiment(&c, Parallelism::Threads(3)).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.to_json(), b.to_json());
        let csv = a.to_csv();
        assert!(csv.starts_with(CSV_HEADER));
        assert_eq!(csv.lines().count(), 5);
    }
}
