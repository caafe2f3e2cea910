//! Seeded Monte Carlo runner for the EPR protocol.
//!
//! Each trial throws a die over the setting pairs, samples λ and the two
//! instrument parameters from independent substreams, and records both
//! outcomes. Both stations read the same clock tick `t = index`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{Outcome, CHSH_SIGNS};
use crate::models::{
    check_anticorrelation, HiddenVariableModel, InstrumentParam, Station, TrialContext,
};
use crate::rng::{Stream, Substream};
use crate::{HiddenVariable, Setting, SettingQuad, TimeTag};

/// Statistical acceptance band used throughout, in standard errors.
pub const SIGMA_BAND: f64 = 4.0;

/// Trials in the anticorrelation pilot run preceding the Bell-form statistic.
pub const PILOT_TRIALS: u64 = 10_000;

const PILOT_SEED_SALT: u64 = 0xA11C_E5ED_0000_0003;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: u64,
    pub t: TimeTag,
    pub pair_id: usize,
    pub setting_1: Setting,
    pub setting_2: Setting,
    pub lambda: HiddenVariable,
    pub ip_1: InstrumentParam,
    pub ip_2: InstrumentParam,
    #[serde(rename = "A")]
    pub a: Outcome,
    #[serde(rename = "B")]
    pub b: Outcome,
}

impl TrialRecord {
    pub fn product(&self) -> i32 {
        self.a.product(self.b)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrialLog {
    pub records: Vec<TrialRecord>,
}

impl TrialLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks that clock ticks strictly increase.
    pub fn validate(&self) -> Result<()> {
        for w in self.records.windows(2) {
            if w[1].t <= w[0].t {
                return Err(LabError::Log(format!(
                    "time tags not strictly increasing at index {}",
                    w[1].index
                )));
            }
        }
        Ok(())
    }
}

/// Simulates trial `index` with the die ranging over `pairs`.
pub fn simulate_trial<M: HiddenVariableModel + ?Sized>(
    model: &M,
    pairs: &[(Setting, Setting)],
    seed: u64,
    index: u64,
) -> Result<TrialRecord> {
    let pair_id = Substream::new(seed, index, Stream::Die).below(pairs.len() as u32) as usize;
    let (setting_1, setting_2) = pairs[pair_id];
    let t = TimeTag(index);
    let ctx = TrialContext {
        t,
        pair_id: Some(pair_id),
    };
    let lambda = model.sample_source(&mut Substream::new(seed, index, Stream::Source))?;
    let ip_1 = model.sample_instrument_params(
        Station::S1,
        setting_1,
        &ctx,
        &lambda,
        &mut Substream::new(seed, index, Station::S1.stream()),
    )?;
    let ip_2 = model.sample_instrument_params(
        Station::S2,
        setting_2,
        &ctx,
        &lambda,
        &mut Substream::new(seed, index, Station::S2.stream()),
    )?;
    let a = model.detector_a(setting_1, &lambda, ip_1, t)?;
    let b = model.detector_b(setting_2, &lambda, ip_2, t)?;
    Ok(TrialRecord {
        index,
        t,
        pair_id,
        setting_1,
        setting_2,
        lambda,
        ip_1,
        ip_2,
        a,
        b,
    })
}

/// Runs `n_trials` trials choosing uniformly among `pairs`.
///
/// The log is identical for equal arguments regardless of how many threads
/// the current rayon pool has.
pub fn run_pairs<M: HiddenVariableModel + ?Sized>(
    model: &M,
    pairs: &[(Setting, Setting)],
    n_trials: u64,
    seed: u64,
) -> Result<TrialLog> {
    model.validate()?;
    if n_trials == 0 {
        return Err(LabError::InvalidValue("n_trials must be at least 1".into()));
    }
    if pairs.is_empty() {
        return Err(LabError::InvalidValue(
            "at least one setting pair is required".into(),
        ));
    }
    let records = (0..n_trials)
        .into_par_iter()
        .map(|i| simulate_trial(model, pairs, seed, i))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrialLog { records })
}

/// CHSH experiment: the die ranges over the four canonical pairs of `quad`.
pub fn run_experiment<M: HiddenVariableModel + ?Sized>(
    model: &M,
    quad: &SettingQuad,
    n_trials: u64,
    seed: u64,
) -> Result<TrialLog> {
    let pairs = quad.pairs().map(|p| (p.first, p.second));
    run_pairs(model, &pairs, n_trials, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationEstimate {
    pub pair_id: usize,
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

impl CorrelationEstimate {
    /// Estimate from the sum of `count` products, each ±1.
    ///
    /// Since every product squares to one, the sample variance is
    /// `(count − sum²/count) / (count − 1)`.
    pub fn from_product_sum(pair_id: usize, sum: i64, count: u64) -> Result<Self> {
        if count < 2 {
            return Err(LabError::InsufficientData { pair_id, count });
        }
        let n = count as f64;
        let s = sum as f64;
        let mean = s / n;
        let variance = ((n - s * s / n) / (n - 1.0)).max(0.0);
        Ok(Self {
            pair_id,
            mean,
            std_error: (variance / n).sqrt(),
            count,
        })
    }
}

/// Per-pair sample mean and standard error of `A·B` for pair ids `0..n_pairs`.
pub fn estimate_pair_correlations(
    log: &TrialLog,
    n_pairs: usize,
) -> Result<Vec<CorrelationEstimate>> {
    let mut sums = vec![0i64; n_pairs];
    let mut counts = vec![0u64; n_pairs];
    for r in &log.records {
        if r.pair_id >= n_pairs {
            return Err(LabError::Log(format!(
                "trial {} has pair id {} outside 0..{n_pairs}",
                r.index, r.pair_id
            )));
        }
        sums[r.pair_id] += r.product() as i64;
        counts[r.pair_id] += 1;
    }
    (0..n_pairs)
        .map(|p| CorrelationEstimate::from_product_sum(p, sums[p], counts[p]))
        .collect()
}

/// The four CHSH correlations in canonical pair order.
pub fn estimate_correlations(log: &TrialLog) -> Result<[CorrelationEstimate; 4]> {
    let v = estimate_pair_correlations(log, 4)?;
    Ok([v[0], v[1], v[2], v[3]])
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelFlags {
    pub setting_dependent_distribution: bool,
}

impl ModelFlags {
    pub fn of<M: HiddenVariableModel + ?Sized>(model: &M) -> Self {
        Self {
            setting_dependent_distribution: model.setting_dependent_distribution(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshStatistic {
    pub value: f64,
    pub std_error: f64,
    pub per_pair: [CorrelationEstimate; 4],
    pub flags: ModelFlags,
}

impl ChshStatistic {
    /// `(value − 2) / std_error`; infinite when the estimate is exact and above 2.
    pub fn sigma_above_bound(&self) -> f64 {
        sigma_units(self.value - 2.0, self.std_error)
    }

    pub fn within_local_bound(&self) -> bool {
        self.value.abs() <= 2.0 + SIGMA_BAND * self.std_error
    }
}

pub(crate) fn sigma_units(excess: f64, std_error: f64) -> f64 {
    if std_error > 0.0 {
        excess / std_error
    } else if excess == 0.0 {
        0.0
    } else {
        excess.signum() * f64::INFINITY
    }
}

/// `Δ = +E₀ − E₁ − E₂ − E₃` with independent-error propagation.
pub fn chsh_statistic(estimates: &[CorrelationEstimate; 4], flags: ModelFlags) -> ChshStatistic {
    let value = estimates
        .iter()
        .zip(CHSH_SIGNS)
        .map(|(e, s)| s as f64 * e.mean)
        .sum();
    let std_error = estimates
        .iter()
        .map(|e| e.std_error * e.std_error)
        .sum::<f64>()
        .sqrt();
    ChshStatistic {
        value,
        std_error,
        per_pair: *estimates,
        flags,
    }
}

/// Runs the CHSH experiment and reduces it to Δ.
pub fn simulate_chsh<M: HiddenVariableModel + ?Sized>(
    model: &M,
    quad: &SettingQuad,
    n_trials: u64,
    seed: u64,
) -> Result<(TrialLog, ChshStatistic)> {
    let log = run_experiment(model, quad, n_trials, seed)?;
    let estimates = estimate_correlations(&log)?;
    let stat = chsh_statistic(&estimates, ModelFlags::of(model));
    Ok((log, stat))
}

/// Bell's three-setting form `|E(a,b) − E(a,c)| ≤ 1 + E(b,c)`, written with
/// measured `A·B` correlations.
///
/// With `B_x = −A_x` this is `|E(A_aA_b) − E(A_aA_c)| ≤ 1 − E(A_bA_c)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BellStatistic {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub std_error: f64,
    /// Estimates for (a,b), (a,c), (b,c).
    pub per_pair: [CorrelationEstimate; 3],
}

impl BellStatistic {
    pub fn from_correlations(e_ab: f64, e_ac: f64, e_bc: f64) -> (f64, f64) {
        ((e_ab - e_ac).abs(), 1.0 + e_bc)
    }

    pub fn margin_sigma(&self) -> f64 {
        sigma_units(self.margin, self.std_error)
    }

    pub fn holds(&self) -> bool {
        self.margin >= -SIGMA_BAND * self.std_error
    }
}

/// Estimates Bell's inequality for settings `a, b, c`.
///
/// A pilot run first checks `A_x = −B_x` at all three settings; the
/// inequality's derivation presupposes it, so a failing pilot is an error.
pub fn bell_statistic<M: HiddenVariableModel + ?Sized>(
    model: &M,
    a: Setting,
    b: Setting,
    c: Setting,
    n_trials: u64,
    seed: u64,
) -> Result<BellStatistic> {
    let pilot = check_anticorrelation(model, &[a, b, c], PILOT_TRIALS, seed ^ PILOT_SEED_SALT)?;
    if pilot.violations > 0 {
        return Err(LabError::AnticorrelationViolated {
            violations: pilot.violations,
            trials: pilot.trials,
        });
    }
    let log = run_pairs(model, &[(a, b), (a, c), (b, c)], n_trials, seed)?;
    let e = estimate_pair_correlations(&log, 3)?;
    let (lhs, rhs) = BellStatistic::from_correlations(e[0].mean, e[1].mean, e[2].mean);
    let std_error = e
        .iter()
        .map(|x| x.std_error * x.std_error)
        .sum::<f64>()
        .sqrt();
    Ok(BellStatistic {
        lhs,
        rhs,
        margin: rhs - lhs,
        std_error,
        per_pair: [e[0], e[1], e[2]],
    })
}
