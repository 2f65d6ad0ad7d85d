//! Monte Carlo recovery experiments on the vertex-sum model.
//!
//! Each trial draws `K = A_y + W` at a noise level `s` placed just below
//! (`low`) or just above (`high`) the recovery threshold, runs the exact
//! solver, and records whether the estimate lies in the class of `y`.
//! Trial `t` at size `n` always uses the seed `derive_seed(base_seed, [n, t])`,
//! so results do not depend on thread count or on the other sizes in the run.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mle::{solve_known_sizes_with, solve_unknown_sizes_with, Objective, SolverOptions};
use crate::rng::derive_seed;
use crate::vertexsum::{noise_scale, parse_key_values, parse_value, VertexSumObjective, VertexSumSpec};

pub use crate::vertexsum::NoiseRegime;

/// `c` in the noise scale of the low-noise preset.
pub const LOW_NOISE_SQRT_FACTOR: f64 = 32.0;
/// `c` in the noise scale of the high-noise preset.
pub const HIGH_NOISE_SQRT_FACTOR: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeKnowledge {
    /// Search every assignment.
    Unknown,
    /// Search only assignments with the true community sizes.
    Known,
}

impl fmt::Display for SizeKnowledge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SizeKnowledge::Unknown => "unknown",
            SizeKnowledge::Known => "known",
        })
    }
}

impl FromStr for SizeKnowledge {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unknown" => Ok(SizeKnowledge::Unknown),
            "known" => Ok(SizeKnowledge::Known),
            other => Err(Error::Parse(format!("size knowledge '{other}' (expected known or unknown)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub n_min: usize,
    pub n_max: usize,
    pub alpha: f64,
    pub delta: f64,
    pub noise_regime: NoiseRegime,
    /// `c` in `s = (1 ∓ δ)(2α - 1)/√(c log n)`.
    pub sqrt_factor: f64,
    pub trials: usize,
    pub size_knowledge: SizeKnowledge,
    pub base_seed: u64,
    /// Count a tied minimum containing the truth as a recovery.
    pub count_ties: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self::preset(NoiseRegime::Low, SizeKnowledge::Unknown)
    }
}

impl ExperimentConfig {
    /// `n = 2..=20`, `α = 16/25`, `δ = 1/2`, 200 trials, with the noise
    /// factor matched to the regime.
    pub fn preset(regime: NoiseRegime, knowledge: SizeKnowledge) -> Self {
        Self {
            n_min: 2,
            n_max: 20,
            alpha: 16.0 / 25.0,
            delta: 0.5,
            noise_regime: regime,
            sqrt_factor: default_sqrt_factor(regime),
            trials: 200,
            size_knowledge: knowledge,
            base_seed: 0,
            count_ties: false,
        }
    }

    pub fn sizes(&self) -> std::ops::RangeInclusive<usize> {
        self.n_min..=self.n_max
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_min < 2 || self.n_min > self.n_max {
            return Err(Error::InvalidParameter(format!(
                "n_range {}..={} must be non-empty and start at 2 or more",
                self.n_min, self.n_max
            )));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be positive".into()));
        }
        let budget = SolverOptions::default().budget;
        let needed = 2f64.powi(self.n_max as i32 - 1);
        if needed > budget as f64 {
            return Err(Error::BudgetExceeded { required: needed, budget });
        }
        for n in self.sizes() {
            noise_scale(n, self.alpha, self.delta, self.sqrt_factor, self.noise_regime)?;
        }
        Ok(())
    }

    pub fn noise_scale(&self, n: usize) -> Result<f64> {
        noise_scale(n, self.alpha, self.delta, self.sqrt_factor, self.noise_regime)
    }

    /// Flat `key = value` lines that [`ExperimentConfig::parse`] reads back.
    pub fn to_config_string(&self) -> String {
        format!(
            "n_range = {}..={}\nalpha = {}\ndelta = {}\nnoise_regime = {}\nsqrt_factor = {}\n\
             trials = {}\nsize_knowledge = {}\nbase_seed = {}\ncount_ties = {}\n",
            self.n_min,
            self.n_max,
            self.alpha,
            self.delta,
            self.noise_regime,
            self.sqrt_factor,
            self.trials,
            self.size_knowledge,
            self.base_seed,
            self.count_ties
        )
    }

    /// Missing keys keep the low-noise, unknown-sizes preset values, except that `sqrt_factor`
    /// follows `noise_regime` unless given.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut factor = None;
        for (key, value) in parse_key_values(text)? {
            match key.as_str() {
                "n_range" => (cfg.n_min, cfg.n_max) = parse_range(&value)?,
                "alpha" => cfg.alpha = parse_value(&key, &value)?,
                "delta" => cfg.delta = parse_value(&key, &value)?,
                "noise_regime" => cfg.noise_regime = value.parse()?,
                "sqrt_factor" => factor = Some(parse_value(&key, &value)?),
                "trials" => cfg.trials = parse_value(&key, &value)?,
                "size_knowledge" => cfg.size_knowledge = value.parse()?,
                "base_seed" => cfg.base_seed = parse_value(&key, &value)?,
                "count_ties" => cfg.count_ties = parse_value(&key, &value)?,
                other => return Err(Error::Parse(format!("unknown key '{other}'"))),
            }
        }
        cfg.sqrt_factor = factor.unwrap_or_else(|| default_sqrt_factor(cfg.noise_regime));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

pub fn default_sqrt_factor(regime: NoiseRegime) -> f64 {
    match regime {
        NoiseRegime::Low => LOW_NOISE_SQRT_FACTOR,
        NoiseRegime::High => HIGH_NOISE_SQRT_FACTOR,
    }
}

/// `a..=b`, `a..b` or a single size `a`.
fn parse_range(value: &str) -> Result<(usize, usize)> {
    let num = |s: &str| parse_value::<usize>("n_range", s.trim());
    if let Some((a, b)) = value.split_once("..=") {
        Ok((num(a)?, num(b)?))
    } else if let Some((a, b)) = value.split_once("..") {
        let b = num(b)?;
        if b == 0 {
            return Err(Error::Parse("n_range upper bound must be positive".into()));
        }
        Ok((num(a)?, b - 1))
    } else {
        let a = num(value)?;
        Ok((a, a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub n: usize,
    pub trial: usize,
    pub seed: u64,
    pub recovered: bool,
    pub tied: bool,
    /// `f(y)` for the true assignment.
    pub objective_true: f64,
    /// `f(ŷ)`.
    pub objective_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub n: usize,
    pub rate: f64,
    /// `√(rate (1 - rate) / trials)`.
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub records: Vec<TrialRecord>,
    pub summary: Vec<SummaryRow>,
}

impl ExperimentOutput {
    pub fn rate(&self, n: usize) -> Option<f64> {
        self.summary.iter().find(|r| r.n == n).map(|r| r.rate)
    }

    pub fn row(&self, n: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|r| r.n == n)
    }
}

pub fn trial_seed(base_seed: u64, n: usize, trial: usize) -> u64 {
    derive_seed(base_seed, &[n as u64, trial as u64])
}

pub fn run_trial(cfg: &ExperimentConfig, n: usize, trial: usize) -> Result<TrialRecord> {
    let s = cfg.noise_scale(n)?;
    let spec = VertexSumSpec::new(n, cfg.alpha, s)?;
    let y = spec.truth();
    let seed = trial_seed(cfg.base_seed, n, trial);
    let k_obs = spec.observe(&y, seed)?;
    let obj = VertexSumObjective::new(&spec, &k_obs)?;
    let opts = SolverOptions::default();
    let mut result = match cfg.size_knowledge {
        SizeKnowledge::Unknown => solve_unknown_sizes_with(&obj, 0.0, &opts)?,
        SizeKnowledge::Known => solve_known_sizes_with(&obj, &spec.sizes(), &opts)?,
    };
    result.mark_truth(&obj, &y);
    Ok(TrialRecord {
        n,
        trial,
        seed,
        recovered: result.recovered(cfg.count_ties),
        tied: result.tied,
        objective_true: obj.eval(&y),
        objective_min: result.objective,
    })
}

pub fn summarize(records: &[TrialRecord]) -> Vec<SummaryRow> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .map(|n| {
            let (hits, total) = records
                .iter()
                .filter(|r| r.n == n)
                .fold((0usize, 0usize), |(h, t), r| (h + r.recovered as usize, t + 1));
            let rate = hits as f64 / total as f64;
            SummaryRow { n, rate, stderr: (rate * (1.0 - rate) / total as f64).sqrt() }
        })
        .collect()
}

/// Runs every `(n, trial)` pair in parallel. Records come back ordered by
/// `n`, then trial.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> =
        cfg.sizes().flat_map(|n| (0..cfg.trials).map(move |t| (n, t))).collect();
    let records = jobs
        .into_par_iter()
        .map(|(n, t)| run_trial(cfg, n, t))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&records);
    Ok(ExperimentOutput { records, summary })
}

pub const RECORD_HEADER: [&str; 7] = ["n", "trial", "seed", "recovered", "tied", "objective_true", "objective_min"];
pub const SUMMARY_HEADER: [&str; 3] = ["n", "rate", "stderr"];

pub fn write_records<W: Write>(records: &[TrialRecord], out: W) -> Result<()> {
    write_rows(&RECORD_HEADER, records, out)
}

pub fn read_records<R: Read>(input: R) -> Result<Vec<TrialRecord>> {
    read_rows(input)
}

pub fn write_summary<W: Write>(rows: &[SummaryRow], out: W) -> Result<()> {
    write_rows(&SUMMARY_HEADER, rows, out)
}

pub fn read_summary<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    read_rows(input)
}

/// The header is written even when `rows` is empty.
fn write_rows<T: Serialize, W: Write>(header: &[&str], rows: &[T], out: W) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(input: R) -> Result<Vec<T>> {
    csv::Reader::from_reader(input)
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(Error::from)
}

/// `out.csv` becomes `out_summary.csv`.
pub fn summary_path(records_path: &Path) -> std::path::PathBuf {
    let stem = records_path.file_stem().and_then(|s| s.to_str()).unwrap_or("results");
    records_path.with_file_name(format!("{stem}_summary.csv"))
}

#[cfg(test)]
mod tests {
    use super::*;

    use NoiseRegime::{High, Low};
    use SizeKnowledge::{Known, Unknown};

    fn small(regime: NoiseRegime, knowledge: SizeKnowledge) -> ExperimentConfig {
        ExperimentConfig { n_max: 8, trials: 20, ..ExperimentConfig::preset(regime, knowledge) }
    }

    #[test]
    fn presets() {
        let hi = ExperimentConfig::preset(High, Unknown);
        assert_eq!((hi.n_min, hi.n_max, hi.trials), (2, 20, 200));
        assert_eq!((hi.alpha, hi.delta), (0.64, 0.5));
        assert_eq!(hi.sqrt_factor, 2.0);
        let lo = ExperimentConfig::preset(Low, Known);
        assert_eq!(lo.sqrt_factor, 32.0);
        assert_eq!(ExperimentConfig::default(), ExperimentConfig::preset(Low, Unknown));
    }

    #[test]
    fn config_round_trip() {
        for (r, k) in [(Low, Unknown), (High, Unknown), (Low, Known), (High, Known)] {
            let mut cfg = ExperimentConfig::preset(r, k);
            cfg.base_seed = 987654321;
            cfg.alpha = 0.6;
            assert_eq!(ExperimentConfig::parse(&cfg.to_config_string()).unwrap(), cfg);
        }
    }

    #[test]
    fn config_parsing() {
        let cfg = ExperimentConfig::parse("n_range = 3..7\nnoise_regime = high # comment\n").unwrap();
        assert_eq!((cfg.n_min, cfg.n_max), (3, 6));
        assert_eq!(cfg.sqrt_factor, 2.0);
        let cfg = ExperimentConfig::parse("n_range = 5\nsqrt_factor = 8").unwrap();
        assert_eq!((cfg.n_min, cfg.n_max, cfg.sqrt_factor), (5, 5, 8.0));
        assert!(ExperimentConfig::parse("n_range = 1..=4").is_err());
        assert!(ExperimentConfig::parse("n_range = 2..=30").is_err());
        assert!(ExperimentConfig::parse("alpha = 0.5").is_err());
        assert!(ExperimentConfig::parse("delta = 1.5").is_err());
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("colour = red").is_err());
        assert!(ExperimentConfig::parse("size_knowledge = maybe").is_err());
    }

    #[test]
    fn seeds_depend_only_on_size_and_trial() {
        let a = run_trial(&small(Low, Unknown), 6, 3).unwrap();
        let cfg = ExperimentConfig { n_min: 6, n_max: 6, trials: 4, ..small(Low, Unknown) };
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records[3], a);
        assert_eq!(a.seed, trial_seed(0, 6, 3));
    }

    #[test]
    fn records_are_ordered_and_complete() {
        let cfg = small(High, Unknown);
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 7 * 20);
        for (i, r) in out.records.iter().enumerate() {
            assert_eq!((r.n, r.trial), (2 + i / 20, i % 20));
            assert!(r.objective_min <= r.objective_true + 1e-9 * r.objective_true.abs().max(1.0));
        }
        assert_eq!(out.summary.len(), 7);
    }

    #[test]
    fn known_sizes_never_lose_to_unknown() {
        let u = run_experiment(&small(Low, Unknown)).unwrap();
        let k = run_experiment(&small(Low, Known)).unwrap();
        for (a, b) in u.records.iter().zip(&k.records) {
            assert_eq!(a.seed, b.seed);
            assert!(!a.recovered || b.recovered, "n = {}, trial {}", a.n, a.trial);
        }
    }

    #[test]
    fn csv_round_trip() {
        let out = run_experiment(&ExperimentConfig { n_max: 5, trials: 3, ..small(High, Unknown) }).unwrap();
        let mut buf = Vec::new();
        write_records(&out.records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("n,trial,seed,recovered,tied,objective_true,objective_min\n"));
        assert_eq!(read_records(buf.as_slice()).unwrap(), out.records);

        let mut buf = Vec::new();
        write_summary(&out.summary, &mut buf).unwrap();
        assert!(buf.starts_with(b"n,rate,stderr\n"));
        assert_eq!(read_summary(buf.as_slice()).unwrap(), out.summary);
    }

    #[test]
    fn empty_output_is_header_only() {
        let mut buf = Vec::new();
        write_records(&[], &mut buf).unwrap();
        assert_eq!(buf, b"n,trial,seed,recovered,tied,objective_true,objective_min\n");
        assert!(read_records(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn summary_statistics() {
        let rec = |n, recovered| TrialRecord {
            n,
            trial: 0,
            seed: 0,
            recovered,
            tied: false,
            objective_true: 0.0,
            objective_min: 0.0,
        };
        let rows = summarize(&[rec(3, true), rec(2, false), rec(3, false), rec(3, true), rec(3, true)]);
        assert_eq!(rows[0], SummaryRow { n: 2, rate: 0.0, stderr: 0.0 });
        assert_eq!(rows[1].rate, 0.75);
        assert!((rows[1].stderr - (0.75f64 * 0.25 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn summary_path_naming() {
        assert_eq!(summary_path(Path::new("/tmp/out.csv")), Path::new("/tmp/out_summary.csv"));
    }
}
