//! Mean time to data loss.
//!
//! Two estimators, each the other's check:
//!
//! * [`mttdl_analytic`] solves an absorbing chain over symmetry classes of
//!   failed-node sets of one code group ([`ClassChain`]). It also reports the
//!   simpler count-indexed chain ([`MarkovChain`]) that splits the last
//!   survivable transition with [`fatal_fraction`] and counts anything deeper
//!   as loss.
//! * [`mttdl_montecarlo`] simulates node failures and repairs event by event
//!   and stops a trial the moment the failed set becomes undecodable.
//!
//! Only permanent failures are modeled. The simulator is only practical at
//! stress rates (MTTF of hundreds of hours); at realistic rates a single
//! trial runs for ~10^8 simulated years.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codes::{
    count_fatal, layout_recoverable, tolerance, CodeScheme, ErasurePattern, StripeLayout,
};

pub const HOURS_PER_YEAR: f64 = 8760.0;

/// Trials per independently seeded work unit of the simulator.
const TRIALS_PER_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReliabilityError {
    #[error("failure and repair rates must be positive and finite")]
    BadRates,
    #[error("at least {min} trials are required, got {got}")]
    TooFewTrials { min: usize, got: usize },
    #[error("groups must be at least 1")]
    NoGroups,
    #[error("code length {0} exceeds the simulator's 64-node limit")]
    TooManyNodes(usize),
    #[error("unknown repair mode {0:?}")]
    BadMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RepairMode {
    /// One repair in progress at a time, at rate `mu`; the node it
    /// completes is uniform among the failed ones.
    Serial,
    /// Every failed node repaired concurrently.
    Parallel,
}

impl fmt::Display for RepairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RepairMode::Serial => "serial",
            RepairMode::Parallel => "parallel",
        })
    }
}

impl FromStr for RepairMode {
    type Err = ReliabilityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "serial" => Ok(RepairMode::Serial),
            "parallel" => Ok(RepairMode::Parallel),
            _ => Err(ReliabilityError::BadMode(s.to_string())),
        }
    }
}

/// Per-node exponential failure and repair, rates in 1/hours.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub lambda_fail: f64,
    pub mu_repair: f64,
    pub mode: RepairMode,
}

impl FailureModel {
    pub fn new(
        lambda_fail: f64,
        mu_repair: f64,
        mode: RepairMode,
    ) -> Result<Self, ReliabilityError> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(lambda_fail) || !ok(mu_repair) {
            return Err(ReliabilityError::BadRates);
        }
        Ok(FailureModel {
            lambda_fail,
            mu_repair,
            mode,
        })
    }

    pub fn from_mttf_mttr(
        mttf_hours: f64,
        mttr_hours: f64,
        mode: RepairMode,
    ) -> Result<Self, ReliabilityError> {
        Self::new(1.0 / mttf_hours, 1.0 / mttr_hours, mode)
    }

    /// MTTF 4 years, MTTR 1 day, parallel repair.
    pub fn default_params() -> Self {
        Self::from_mttf_mttr(4.0 * HOURS_PER_YEAR, 24.0, RepairMode::Parallel).unwrap()
    }

    /// MTTF 100 h, MTTR 10 h, parallel repair; fast enough to simulate.
    pub fn stress() -> Self {
        Self::from_mttf_mttr(100.0, 10.0, RepairMode::Parallel).unwrap()
    }

    fn repair_rate(&self, failed: usize) -> f64 {
        match (self.mode, failed) {
            (_, 0) => 0.0,
            (RepairMode::Serial, _) => self.mu_repair,
            (RepairMode::Parallel, f) => f as f64 * self.mu_repair,
        }
    }
}

/// Fraction of the `C(n, f)` patterns of `f` failed nodes that lose data.
pub fn fatal_fraction(scheme: CodeScheme, f: usize) -> f64 {
    let (fatal, total) = count_fatal(scheme, f);
    if total == 0 {
        1.0
    } else {
        fatal as f64 / total as f64
    }
}

/// Absorbing chain over the number of failed nodes in one code group.
///
/// Transient states are `0..=max_failed`; state `max_failed + 1` is data
/// loss. From state `i` a failure happens at rate `(n - i) * lambda` and
/// leads to loss with probability `loss_prob[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarkovChain {
    pub nodes: usize,
    pub tolerance: usize,
    pub max_failed: usize,
    pub loss_prob: Vec<f64>,
    pub model: FailureModel,
}

impl MarkovChain {
    /// Chain with states up to `tolerance + 1` failures, the last of which
    /// exists only if some `(t+1)`-patterns survive; any failure beyond it
    /// is counted as data loss.
    pub fn for_scheme(scheme: CodeScheme, model: FailureModel) -> Self {
        let t = tolerance(scheme);
        Self::with_depth(scheme, model, t + 1)
    }

    /// Chain tracking survivable states up to `depth` failures.
    ///
    /// With `R_f` the number of recoverable `f`-patterns, and assuming the
    /// failed set is uniform over them, a failure from state `f` keeps data
    /// with probability `(f+1) R_{f+1} / ((n-f) R_f)`.
    pub fn with_depth(scheme: CodeScheme, model: FailureModel, depth: usize) -> Self {
        let n = scheme.code_length();
        let t = tolerance(scheme);
        let depth = depth.clamp(t, n);
        let mut recoverable = vec![0u64; depth + 2];
        for (f, r) in recoverable.iter_mut().enumerate() {
            if f <= t {
                *r = binomial(n, f);
            } else if f <= n {
                let (fatal, total) = count_fatal(scheme, f);
                *r = total - fatal;
            }
        }
        let mut loss_prob = Vec::new();
        for f in 0..=depth {
            if recoverable[f] == 0 {
                break;
            }
            let p = if f == depth || f == n {
                1.0
            } else {
                let keep = (f + 1) as f64 * recoverable[f + 1] as f64
                    / ((n - f) as f64 * recoverable[f] as f64);
                (1.0 - keep).clamp(0.0, 1.0)
            };
            loss_prob.push(p);
            if p >= 1.0 {
                break;
            }
        }
        MarkovChain {
            nodes: n,
            tolerance: t,
            max_failed: loss_prob.len() - 1,
            loss_prob,
            model,
        }
    }

    /// Generator matrix over transient states plus the absorbing state.
    pub fn generator(&self) -> Vec<Vec<f64>> {
        let m = self.max_failed + 2;
        let loss = m - 1;
        let mut q = vec![vec![0.0; m]; m];
        for i in 0..=self.max_failed {
            let fail = (self.nodes - i) as f64 * self.model.lambda_fail;
            let repair = self.model.repair_rate(i);
            let p = self.loss_prob[i];
            q[i][loss] += fail * p;
            if i < self.max_failed {
                q[i][i + 1] += fail * (1.0 - p);
            }
            if i > 0 {
                q[i][i - 1] += repair;
            }
            q[i][i] = -(fail + repair);
        }
        q
    }

    /// Expected hours to absorption from every transient state.
    pub fn absorption_times(&self) -> Vec<f64> {
        // Tridiagonal system: -Q_T * T = 1.
        let n = self.max_failed + 1;
        let q = self.generator();
        let lower: Vec<f64> = (0..n)
            .map(|i| if i > 0 { -q[i][i - 1] } else { 0.0 })
            .collect();
        let diag: Vec<f64> = (0..n).map(|i| -q[i][i]).collect();
        let upper: Vec<f64> = (0..n)
            .map(|i| if i + 1 < n { -q[i][i + 1] } else { 0.0 })
            .collect();
        solve_tridiagonal(&lower, &diag, &upper, &vec![1.0; n])
    }
}

/// Thomas algorithm; the chain's rows are diagonally dominant.
fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    for i in 0..n {
        let denom = diag[i] - if i > 0 { lower[i] * c[i - 1] } else { 0.0 };
        assert!(denom != 0.0 && denom.is_finite(), "singular chain");
        c[i] = upper[i] / denom;
        d[i] = (rhs[i] - if i > 0 { lower[i] * d[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = d[i] - if i + 1 < n { c[i] * x[i + 1] } else { 0.0 };
    }
    x
}

fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1u64, |acc, i| acc * (n - i) as u64 / (i + 1) as u64)
}

/// Absorbing chain over symmetry classes of failed-node sets.
///
/// Failed sets are grouped by a key that fully determines both
/// recoverability and the aggregated rates to every other class: the failure
/// count for replication and polygon codes, the number of half-lost and
/// fully-lost mirror pairs for RAID+m, and the failures per heptagon plus the
/// global node's state for heptagon-local. The lumped chain is exact, so no
/// truncation is needed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassChain {
    pub keys: Vec<Vec<usize>>,
    /// `rates[i]` lists `(j, rate)` to transient class `j`.
    pub rates: Vec<Vec<(usize, f64)>>,
    /// Rate from each transient class straight to data loss.
    pub loss_rates: Vec<f64>,
}

/// Symmetry class of a failed set (bit `i` of `mask` = node position `i`).
pub fn class_key(scheme: CodeScheme, mask: u64) -> Vec<usize> {
    match scheme {
        CodeScheme::Replication { .. } | CodeScheme::Polygon { .. } => {
            vec![mask.count_ones() as usize]
        }
        CodeScheme::RaidMirror { data } => {
            let (mut half, mut full) = (0, 0);
            for b in 0..=data {
                match (mask >> (2 * b)) & 0b11 {
                    0b11 => full += 1,
                    0 => {}
                    _ => half += 1,
                }
            }
            vec![half, full]
        }
        CodeScheme::HeptagonLocal => vec![
            (mask & 0x7F).count_ones() as usize,
            ((mask >> 7) & 0x7F).count_ones() as usize,
            ((mask >> 14) & 1) as usize,
        ],
    }
}

/// Outgoing transitions of one failed set: `(next mask, rate)`.
fn transitions(n: usize, mask: u64, model: FailureModel) -> Vec<(u64, f64)> {
    let failed = mask.count_ones() as usize;
    let per_repair = if failed == 0 {
        0.0
    } else {
        model.repair_rate(failed) / failed as f64
    };
    (0..n)
        .map(|i| {
            if mask >> i & 1 == 0 {
                (mask | 1 << i, model.lambda_fail)
            } else {
                (mask & !(1 << i), per_repair)
            }
        })
        .collect()
}

impl ClassChain {
    pub fn build(scheme: CodeScheme, model: FailureModel) -> Result<Self, ReliabilityError> {
        let n = scheme.code_length();
        if n > 64 {
            return Err(ReliabilityError::TooManyNodes(n));
        }
        let layout = StripeLayout::canonical(scheme);
        let recoverable = |mask: u64| {
            layout_recoverable(
                &layout,
                &ErasurePattern::new((0..n).filter(|i| mask >> i & 1 == 1)),
            )
        };
        let mut index: HashMap<Vec<usize>, usize> = HashMap::new();
        let mut reps: Vec<u64> = vec![0];
        let mut keys = vec![class_key(scheme, 0)];
        index.insert(keys[0].clone(), 0);
        let mut rates = Vec::new();
        let mut loss_rates = Vec::new();
        let mut i = 0;
        while i < reps.len() {
            let mut out: HashMap<usize, f64> = HashMap::new();
            let mut loss = 0.0;
            for (next, rate) in transitions(n, reps[i], model) {
                let key = class_key(scheme, next);
                let j = match index.get(&key) {
                    Some(&j) => j,
                    None if !recoverable(next) => {
                        loss += rate;
                        continue;
                    }
                    None => {
                        index.insert(key.clone(), reps.len());
                        reps.push(next);
                        keys.push(key);
                        reps.len() - 1
                    }
                };
                if j != i {
                    *out.entry(j).or_default() += rate;
                }
            }
            let mut out: Vec<(usize, f64)> = out.into_iter().collect();
            out.sort_by_key(|e| e.0);
            rates.push(out);
            loss_rates.push(loss);
            i += 1;
        }
        Ok(ClassChain {
            keys,
            rates,
            loss_rates,
        })
    }

    /// Expected hours to data loss starting from no failures.
    pub fn mttdl_hours(&self) -> f64 {
        let m = self.keys.len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let out: f64 = self.rates[i].iter().map(|e| e.1).sum::<f64>() + self.loss_rates[i];
            a[(i, i)] = out;
            for &(j, r) in &self.rates[i] {
                a[(i, j)] -= r;
            }
        }
        let b = DVector::from_element(m, 1.0);
        let x = a
            .lu()
            .solve(&b)
            .expect("transient block of an absorbing chain is nonsingular");
        x[0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticMttdl {
    pub hours: f64,
    /// Transient states of the exact chain.
    pub states: usize,
    /// Count-indexed chain truncated after `tolerance + 1` failures; a lower
    /// bound whenever patterns beyond that are survivable.
    pub truncated_hours: f64,
    pub note: String,
}

impl AnalyticMttdl {
    pub fn years(&self) -> f64 {
        self.hours / HOURS_PER_YEAR
    }
}

/// MTTDL of one code group.
pub fn mttdl_analytic(
    scheme: CodeScheme,
    model: FailureModel,
) -> Result<AnalyticMttdl, ReliabilityError> {
    let exact = ClassChain::build(scheme, model)?;
    let truncated = MarkovChain::for_scheme(scheme, model);
    Ok(AnalyticMttdl {
        hours: exact.mttdl_hours(),
        states: exact.keys.len(),
        truncated_hours: truncated.absorption_times()[0],
        note: format!(
            "exact symmetry-class chain; truncated count chain treats more than {} failures as loss",
            truncated.max_failed
        ),
    })
}

/// Independent-groups approximation: `groups` disjoint code groups lose data
/// at `groups` times the rate of one.
pub fn system_mttdl(group_mttdl: f64, groups: usize) -> Result<f64, ReliabilityError> {
    if groups == 0 {
        return Err(ReliabilityError::NoGroups);
    }
    Ok(group_mttdl / groups as f64)
}

/// Disjoint code groups that fit in a system of `nodes` nodes (at least 1).
pub fn groups_in_system(scheme: CodeScheme, nodes: usize) -> usize {
    (nodes / scheme.code_length()).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean_hours: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub trials: usize,
}

impl McEstimate {
    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }

    pub fn overlaps(&self, other: &McEstimate) -> bool {
        self.ci_low <= other.ci_high && other.ci_low <= self.ci_high
    }
}

/// Event-driven estimate of one group's MTTDL with a 95% normal CI.
///
/// Trials are split into fixed-size chunks, each seeded from `(seed, chunk)`,
/// so the estimate does not depend on how many threads run them.
pub fn mttdl_montecarlo(
    scheme: CodeScheme,
    model: FailureModel,
    trials: usize,
    seed: u64,
) -> Result<McEstimate, ReliabilityError> {
    if trials < 100 {
        return Err(ReliabilityError::TooFewTrials {
            min: 100,
            got: trials,
        });
    }
    let n = scheme.code_length();
    if n > 64 {
        return Err(ReliabilityError::TooManyNodes(n));
    }
    let layout = StripeLayout::canonical(scheme);
    let chunks = trials.div_ceil(TRIALS_PER_CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let count = TRIALS_PER_CHUNK.min(trials - c * TRIALS_PER_CHUNK);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64 + 1);
            let mut sim = TrialSim::new(&layout, model);
            (0..count).fold((0.0, 0.0), |(s, s2), _| {
                let t = sim.run(&mut rng);
                (s + t, s2 + t * t)
            })
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, s2)| (a + s, b + s2));
    let nf = trials as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    let half = 1.96 * (var / nf).sqrt();
    Ok(McEstimate {
        mean_hours: mean,
        ci_low: mean - half,
        ci_high: mean + half,
        trials,
    })
}

struct TrialSim<'a> {
    layout: &'a StripeLayout,
    model: FailureModel,
    n: usize,
    cache: HashMap<u64, bool>,
}

impl<'a> TrialSim<'a> {
    fn new(layout: &'a StripeLayout, model: FailureModel) -> Self {
        TrialSim {
            layout,
            model,
            n: layout.nodes.len(),
            cache: HashMap::new(),
        }
    }

    fn recoverable(&mut self, mask: u64) -> bool {
        let layout = self.layout;
        *self.cache.entry(mask).or_insert_with(|| {
            let pattern = ErasurePattern::new((0..64).filter(|i| mask >> i & 1 == 1));
            layout_recoverable(layout, &pattern)
        })
    }

    /// Hours until the failed set first becomes unrecoverable.
    fn run(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        let mut now = 0.0;
        let mut failed: Vec<usize> = Vec::new();
        let mut mask = 0u64;
        loop {
            let live = self.n - failed.len();
            let fail_rate = live as f64 * self.model.lambda_fail;
            let repair_rate = self.model.repair_rate(failed.len());
            let total = fail_rate + repair_rate;
            now += -(1.0 - rng.gen::<f64>()).ln() / total;
            if rng.gen::<f64>() * total < fail_rate {
                let pick = rng.gen_range(0..live);
                let node = (0..self.n)
                    .filter(|i| mask >> i & 1 == 0)
                    .nth(pick)
                    .unwrap();
                mask |= 1 << node;
                failed.push(node);
                if !self.recoverable(mask) {
                    return now;
                }
            } else {
                let i = rng.gen_range(0..failed.len());
                let node = failed.swap_remove(i);
                mask &= !(1 << node);
            }
        }
    }
}

/// One line of the reliability CSV.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReliabilityRow {
    pub scheme: String,
    pub lambda: f64,
    pub mu: f64,
    pub mode: RepairMode,
    pub analytic_hours: f64,
    pub mc_mean_hours: f64,
    pub mc_ci_low: f64,
    pub mc_ci_high: f64,
    pub trials: usize,
    pub seed: u64,
}

impl crate::report::CsvRow for ReliabilityRow {
    const HEADER: &'static [&'static str] = &[
        "scheme",
        "lambda",
        "mu",
        "mode",
        "analytic_hours",
        "mc_mean_hours",
        "mc_ci_low",
        "mc_ci_high",
        "trials",
        "seed",
    ];

    fn fields(&self) -> Vec<String> {
        vec![
            self.scheme.clone(),
            self.lambda.to_string(),
            self.mu.to_string(),
            self.mode.to_string(),
            self.analytic_hours.to_string(),
            self.mc_mean_hours.to_string(),
            self.mc_ci_low.to_string(),
            self.mc_ci_high.to_string(),
            self.trials.to_string(),
            self.seed.to_string(),
        ]
    }
}

/// Runs both estimators for one scheme and model.
pub fn reliability_row(
    scheme: CodeScheme,
    model: FailureModel,
    trials: usize,
    seed: u64,
) -> Result<ReliabilityRow, ReliabilityError> {
    let analytic = mttdl_analytic(scheme, model)?;
    let mc = mttdl_montecarlo(scheme, model, trials, seed)?;
    Ok(ReliabilityRow {
        scheme: scheme.to_string(),
        lambda: model.lambda_fail,
        mu: model.mu_repair,
        mode: model.mode,
        analytic_hours: analytic.hours,
        mc_mean_hours: mc.mean_hours,
        mc_ci_low: mc.ci_low,
        mc_ci_high: mc.ci_high,
        trials,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(l: f64, m: f64) -> FailureModel {
        FailureModel::new(l, m, RepairMode::Parallel).unwrap()
    }

    #[test]
    fn rates_validated() {
        assert_eq!(
            FailureModel::new(0.0, 1.0, RepairMode::Serial).unwrap_err(),
            ReliabilityError::BadRates
        );
        assert!(FailureModel::new(1.0, f64::NAN, RepairMode::Serial).is_err());
        assert_eq!("serial".parse::<RepairMode>().unwrap(), RepairMode::Serial);
        assert!("lazy".parse::<RepairMode>().is_err());
    }

    #[test]
    fn fatal_fractions() {
        assert_eq!(fatal_fraction(CodeScheme::HeptagonLocal, 3), 0.0);
        assert_eq!(fatal_fraction(CodeScheme::PENTAGON, 3), 1.0);
        assert_eq!(fatal_fraction(CodeScheme::PENTAGON, 0), 0.0);
        for s in [
            CodeScheme::PENTAGON,
            CodeScheme::HEPTAGON,
            CodeScheme::HeptagonLocal,
        ] {
            let mut prev = 0.0;
            for f in 0..=s.code_length() {
                let x = fatal_fraction(s, f);
                assert!(x >= prev, "{s} f={f}");
                prev = x;
            }
        }
    }

    #[test]
    fn unreplicated_block_lives_one_mttf() {
        let m = model(1.0 / 1000.0, 0.1);
        let a = mttdl_analytic(CodeScheme::Replication { copies: 1 }, m).unwrap();
        assert!((a.hours - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn two_replicas_closed_form() {
        // T0 = 1/(2l) + T1, T1 = (1 + m T0)/(l + m)  =>  T0 = (3l + m)/(2 l^2)
        let (l, m) = (1.0 / 1000.0, 0.1);
        let a = mttdl_analytic(CodeScheme::Replication { copies: 2 }, model(l, m)).unwrap();
        let expected = (3.0 * l + m) / (2.0 * l * l);
        assert!((a.hours - expected).abs() / expected < 1e-12);
        assert!((a.hours - 51_500.0).abs() < 1e-6);
    }

    #[test]
    fn generator_rows_sum_to_zero() {
        for s in [
            CodeScheme::PENTAGON,
            CodeScheme::HeptagonLocal,
            CodeScheme::RaidMirror { data: 9 },
        ] {
            let c = MarkovChain::for_scheme(s, FailureModel::default_params());
            let q = c.generator();
            for row in &q {
                assert!(row.iter().sum::<f64>().abs() < 1e-12);
            }
            assert!(q.last().unwrap().iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn survivable_extra_state_only_when_patterns_survive() {
        let m = FailureModel::default_params();
        assert_eq!(
            MarkovChain::for_scheme(CodeScheme::PENTAGON, m).max_failed,
            2
        );
        let hl = MarkovChain::for_scheme(CodeScheme::HeptagonLocal, m);
        assert_eq!(hl.max_failed, 4);
        assert!((hl.loss_prob[3] - fatal_fraction(CodeScheme::HeptagonLocal, 4)).abs() < 1e-12);
    }

    #[test]
    fn monotone_in_rates() {
        for s in [
            CodeScheme::PENTAGON,
            CodeScheme::HeptagonLocal,
            CodeScheme::Replication { copies: 3 },
        ] {
            let mut prev = f64::INFINITY;
            for l in [1e-4, 2e-4, 5e-4, 1e-3, 1e-2] {
                let h = mttdl_analytic(s, model(l, 0.05)).unwrap().hours;
                assert!(h <= prev);
                prev = h;
            }
            let mut prev = 0.0;
            for m in [0.01, 0.02, 0.05, 0.1, 1.0] {
                let h = mttdl_analytic(s, model(1e-3, m)).unwrap().hours;
                assert!(h >= prev);
                prev = h;
            }
        }
    }

    #[test]
    fn system_scaling() {
        assert_eq!(system_mttdl(100.0, 1).unwrap(), 100.0);
        assert_eq!(system_mttdl(100.0, 10).unwrap(), 10.0);
        assert_eq!(
            system_mttdl(1.0, 0).unwrap_err(),
            ReliabilityError::NoGroups
        );
        assert_eq!(groups_in_system(CodeScheme::PENTAGON, 25), 5);
        assert_eq!(groups_in_system(CodeScheme::HeptagonLocal, 25), 1);
    }

    #[test]
    fn montecarlo_exponential_mean() {
        let m = model(1.0 / 100.0, 0.1);
        let est = mttdl_montecarlo(CodeScheme::Replication { copies: 1 }, m, 4000, 1).unwrap();
        assert!(est.contains(100.0), "{est:?}");
        assert!(mttdl_montecarlo(CodeScheme::PENTAGON, m, 10, 1).is_err());
    }

    #[test]
    fn montecarlo_deterministic() {
        let m = FailureModel::stress();
        let a = mttdl_montecarlo(CodeScheme::Replication { copies: 2 }, m, 600, 9).unwrap();
        let b = mttdl_montecarlo(CodeScheme::Replication { copies: 2 }, m, 600, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn class_chain_matches_count_chain_where_truncation_is_exact() {
        let m = FailureModel::stress();
        for s in [
            CodeScheme::Replication { copies: 2 },
            CodeScheme::Replication { copies: 3 },
            CodeScheme::PENTAGON,
            CodeScheme::HEPTAGON,
        ] {
            let a = mttdl_analytic(s, m).unwrap();
            assert!((a.hours - a.truncated_hours).abs() / a.hours < 1e-9, "{s}");
        }
        let hl = mttdl_analytic(CodeScheme::HeptagonLocal, m).unwrap();
        assert!(hl.hours > hl.truncated_hours);
    }

    // Strong lumpability: every member of a class must agree on
    // recoverability and on the total rate into every other class.
    fn assert_lumpable(scheme: CodeScheme, model: FailureModel) {
        let n = scheme.code_length();
        let layout = StripeLayout::canonical(scheme);
        let rec = |mask: u64| {
            layout_recoverable(
                &layout,
                &ErasurePattern::new((0..n).filter(|i| mask >> i & 1 == 1)),
            )
        };
        let mut seen: HashMap<Vec<usize>, (bool, Vec<(Vec<usize>, i64)>)> = HashMap::new();
        for mask in 0..(1u64 << n) {
            let ok = rec(mask);
            let mut out: HashMap<Vec<usize>, f64> = HashMap::new();
            if ok {
                for (next, r) in transitions(n, mask, model) {
                    let key = if rec(next) {
                        class_key(scheme, next)
                    } else {
                        vec![usize::MAX]
                    };
                    *out.entry(key).or_default() += r;
                }
            }
            let mut out: Vec<(Vec<usize>, i64)> = out
                .into_iter()
                .map(|(k, r)| (k, (r * 1e9).round() as i64))
                .collect();
            out.sort();
            let entry = seen
                .entry(class_key(scheme, mask))
                .or_insert((ok, out.clone()));
            assert_eq!(entry.0, ok, "{scheme} mask {mask:b}");
            assert_eq!(entry.1, out, "{scheme} mask {mask:b}");
        }
    }

    #[test]
    fn class_keys_are_lumpable() {
        for mode in [RepairMode::Parallel, RepairMode::Serial] {
            let m = FailureModel::new(0.01, 0.1, mode).unwrap();
            assert_lumpable(CodeScheme::PENTAGON, m);
            assert_lumpable(CodeScheme::HeptagonLocal, m);
            assert_lumpable(CodeScheme::RaidMirror { data: 4 }, m);
        }
    }
}
