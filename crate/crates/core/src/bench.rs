//! Closed-loop latency experiment: prescriptions submitted at a fixed or
//! Poisson rate over a simulated window, latency measured from send to
//! acknowledgement.

use crate::clinic::PendingSubmission;
use crate::deployment::{Deployment, DeploymentConfig};
use crate::domain::{Medicine, PharmacyId, PrescriptionDraft, PrincipalId};
use crate::link::{LinkConfig, SimTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const CSV_HEADER: &str = "rate,medicines,n,mean_latency_s,p95_latency_s";

/// Replications per cell stop here even if too few samples completed.
const MAX_REPLICATIONS: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Arrivals {
    #[default]
    Fixed,
    Poisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    /// Prescriptions per second.
    pub rates: Vec<f64>,
    pub medicine_counts: Vec<usize>,
    pub window_s: f64,
    pub link: LinkConfig,
    pub base_service_ms: f64,
    pub per_medicine_cost_ms: f64,
    pub seed: u64,
    pub arrivals: Arrivals,
    /// Windows are replicated until each cell has this many completions.
    pub min_samples: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            rates: vec![1.0, 5.0, 10.0],
            medicine_counts: vec![1, 5, 10],
            window_s: 30.0,
            link: LinkConfig::default(),
            base_service_ms: 20.0,
            per_medicine_cost_ms: 5.0,
            seed: 7,
            arrivals: Arrivals::Fixed,
            min_samples: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySample {
    pub rate: f64,
    pub medicines: usize,
    /// Completed submissions.
    pub n: usize,
    pub mean_latency_s: f64,
    pub p95_latency_s: f64,
    pub submitted: usize,
    pub failed: usize,
    /// Acknowledged only after the window closed.
    pub in_flight: usize,
    pub replications: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BenchError {
    #[error("invalid experiment: {0}")]
    InvalidSpec(String),
    #[error("service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("no samples to summarize")]
    EmptyInput,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::InvalidSpec(m));
        if self.rates.is_empty() || self.medicine_counts.is_empty() {
            return bad("rates and medicine counts must be non-empty".into());
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return bad(format!("rate must be positive, got {r}"));
        }
        if self.medicine_counts.contains(&0) {
            return bad("a prescription needs at least one medicine".into());
        }
        if !(self.window_s.is_finite() && self.window_s > 0.0) {
            return bad(format!("window must be positive, got {}", self.window_s));
        }
        if self.base_service_ms < 0.0 || self.per_medicine_cost_ms < 0.0 {
            return bad("service times must be non-negative".into());
        }
        self.link.validate().map_err(|e| BenchError::InvalidSpec(e.to_string()))
    }

    fn deployment(&self) -> Result<Deployment, BenchError> {
        let mut cfg = DeploymentConfig::default();
        cfg.clinic.link = self.link.clone();
        cfg.clinic.link.rng_seed = self.link.rng_seed.wrapping_add(self.seed);
        cfg.pharmacy.base_service_ms = self.base_service_ms;
        cfg.pharmacy.per_medicine_cost_ms = self.per_medicine_cost_ms;
        Deployment::new(cfg).map_err(|e| BenchError::ServiceUnavailable(e.to_string()))
    }

    /// Submission instants within the window for one replication.
    pub fn arrival_times(&self, rate: f64, replication: u64) -> Vec<SimTime> {
        let mut out = Vec::new();
        match self.arrivals {
            Arrivals::Fixed => {
                let mut k = 0u64;
                while (k as f64) / rate < self.window_s {
                    out.push(SimTime::from_secs_f64(k as f64 / rate));
                    k += 1;
                }
            }
            Arrivals::Poisson => {
                // the same unit-rate draws are rescaled for every rate
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(replication);
                let mut t = 0.0;
                loop {
                    let gap: f64 = rng.sample(Exp1);
                    t += gap / rate;
                    if t >= self.window_s {
                        break;
                    }
                    out.push(SimTime::from_secs_f64(t));
                }
            }
        }
        out
    }
}

fn sample_draft(patient: &str, medicines: usize) -> PrescriptionDraft {
    PrescriptionDraft {
        patient_id: PrincipalId::new(patient),
        pharmacy_id: PharmacyId::new("main"),
        medicines: (0..medicines)
            .map(|i| Medicine::new(format!("medicine-{i:02}"), "1 tablet daily", 30, 1).expect("valid medicine"))
            .collect(),
    }
}

#[derive(Default)]
struct Tally {
    latencies: Vec<f64>,
    submitted: usize,
    failed: usize,
    in_flight: usize,
}

fn run_window(spec: &ExperimentSpec, rate: f64, medicines: usize, replication: u64, tally: &mut Tally) -> Result<(), BenchError> {
    let d = spec.deployment()?;
    let token = d.clinic_login("dr-grey").map_err(|e| BenchError::ServiceUnavailable(e.to_string()))?;
    let window_end = SimTime::from_secs_f64(spec.window_s);
    let mut pending: Vec<PendingSubmission> = Vec::new();
    for (k, at) in spec.arrival_times(rate, replication).into_iter().enumerate() {
        tally.submitted += 1;
        let patient = if k % 2 == 0 { "pat-ann" } else { "pat-bob" };
        let stream = (replication << 32) | k as u64;
        match d.clinic.prepare_submission(&token, sample_draft(patient, medicines), at, stream) {
            Ok(p) => pending.push(p),
            Err(_) => tally.failed += 1,
        }
    }
    // the pharmacy sees requests in the order they come off the air
    pending.sort_by_key(|p| p.arrival());
    for p in pending {
        match d.clinic.complete_submission(p) {
            Ok(r) if r.acked_at <= window_end => tally.latencies.push(r.latency_s),
            Ok(_) => tally.in_flight += 1,
            Err(_) => tally.failed += 1,
        }
    }
    Ok(())
}

/// Nearest-rank percentile of sorted data.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

pub fn run_cell(spec: &ExperimentSpec, rate: f64, medicines: usize) -> Result<LatencySample, BenchError> {
    let mut tally = Tally::default();
    let mut replications = 0;
    while replications < MAX_REPLICATIONS {
        run_window(spec, rate, medicines, replications, &mut tally)?;
        replications += 1;
        if tally.latencies.len() >= spec.min_samples.max(1) {
            break;
        }
        if tally.latencies.is_empty() && tally.submitted > 0 && tally.failed == tally.submitted {
            break;
        }
    }
    let n = tally.latencies.len();
    if n == 0 {
        return Err(BenchError::ServiceUnavailable(format!(
            "no submission completed at rate {rate}/s with {medicines} medicines ({} failed)",
            tally.failed
        )));
    }
    tally.latencies.sort_by(f64::total_cmp);
    // offset from the minimum so a constant sample has an exact mean
    let lo = tally.latencies[0];
    let mean = lo + tally.latencies.iter().map(|x| x - lo).sum::<f64>() / n as f64;
    Ok(LatencySample {
        rate,
        medicines,
        n,
        mean_latency_s: mean,
        p95_latency_s: percentile(&tally.latencies, 95.0),
        submitted: tally.submitted,
        failed: tally.failed,
        in_flight: tally.in_flight,
        replications,
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<LatencySample>, BenchError> {
    spec.validate()?;
    let mut out = Vec::new();
    for &rate in &spec.rates {
        for &m in &spec.medicine_counts {
            out.push(run_cell(spec, rate, m)?);
        }
    }
    sort_samples(&mut out);
    Ok(out)
}

fn sort_samples(samples: &mut [LatencySample]) {
    samples.sort_by(|a, b| a.rate.total_cmp(&b.rate).then(a.medicines.cmp(&b.medicines)));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Table,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            _ => Err(format!("unknown format {s:?}, expected csv or table")),
        }
    }
}

pub fn summarize(samples: &[LatencySample], format: Format) -> Result<String, BenchError> {
    if samples.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    let mut rows = samples.to_vec();
    sort_samples(&mut rows);
    let mut out = String::new();
    match format {
        Format::Csv => {
            out.push_str(CSV_HEADER);
            out.push('\n');
            for s in &rows {
                writeln!(out, "{},{},{},{:.6},{:.6}", s.rate, s.medicines, s.n, s.mean_latency_s, s.p95_latency_s).unwrap();
            }
        }
        Format::Table => {
            writeln!(out, "{:>8}  {:>9}  {:>6}  {:>14}  {:>13}", "rate/s", "medicines", "n", "mean latency s", "p95 latency s").unwrap();
            for s in &rows {
                writeln!(out, "{:>8}  {:>9}  {:>6}  {:>14.6}  {:>13.6}", s.rate, s.medicines, s.n, s.mean_latency_s, s.p95_latency_s)
                    .unwrap();
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MonotonicityReport {
    pub pairs: usize,
    pub violations: usize,
    pub allowed: usize,
}

impl MonotonicityReport {
    pub fn passed(&self) -> bool {
        self.violations <= self.allowed
    }
}

/// Counts adjacent grid pairs, along either axis, where mean latency drops.
/// Up to 2% of the pairs (rounded down) may do so.
pub fn check_monotonicity(samples: &[LatencySample]) -> MonotonicityReport {
    let mut rates: Vec<f64> = samples.iter().map(|s| s.rate).collect();
    rates.sort_by(f64::total_cmp);
    rates.dedup();
    let mut meds: Vec<usize> = samples.iter().map(|s| s.medicines).collect();
    meds.sort();
    meds.dedup();
    let mean = |r: f64, m: usize| samples.iter().find(|s| s.rate == r && s.medicines == m).map(|s| s.mean_latency_s);
    let (mut pairs, mut violations) = (0, 0);
    let mut visit = |a: Option<f64>, b: Option<f64>| {
        if let (Some(a), Some(b)) = (a, b) {
            pairs += 1;
            if b < a {
                violations += 1;
            }
        }
    };
    for &m in &meds {
        for w in rates.windows(2) {
            visit(mean(w[0], m), mean(w[1], m));
        }
    }
    for &r in &rates {
        for w in meds.windows(2) {
            visit(mean(r, w[0]), mean(r, w[1]));
        }
    }
    MonotonicityReport {
        pairs,
        violations,
        allowed: pairs * 2 / 100,
    }
}
