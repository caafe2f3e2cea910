//! Local hidden-variable model families.
//!
//! A model supplies the source distribution of λ, the per-station instrument
//! parameters Λ* (station 1) and Λ** (station 2), and the two detector
//! functions. [`HiddenVariableModel`] is the plug-in point; [`ModelSpec`] ships
//! four families:
//!
//! * `BellDeterministic`: `A = sign(cos(θ_a − θ_λ))`, `B = −sign(cos(θ_b − θ_λ))`,
//!   no instrument randomness.
//! * `FactorizableInstrument`: as above, but with probability ε each station
//!   independently replaces its output by a fair coin. Λ*, Λ** are drawn from
//!   each station's own substream, so they are conditionally independent given λ.
//! * `TimeTaggedAnticorrelated`: the instrument parameter is a deterministic
//!   hash of (local setting, clock tick) that flips the output sign. Both
//!   stations evaluate the same hash at the same tick, so `A_a = −B_a` survives
//!   even though the parameters depend on setting and time.
//! * `SettingPairDependent`: reads the trial's setting pair and emits product
//!   +1 on (a,c) and −1 on the other three columns. Not local; flagged.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::Outcome;
use crate::rng::{mix64, unit_interval, Stream, Substream};
use crate::{HiddenVariable, Setting, TimeTag};

/// Tolerance on the sum of discrete source weights.
pub const WEIGHT_TOLERANCE: f64 = 1e-12;

/// Canonical instrument-parameter value in `[0, 1)`; each family interprets it.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct InstrumentParam(f64);

impl InstrumentParam {
    pub const ZERO: InstrumentParam = InstrumentParam(0.0);

    pub fn new(value: f64) -> Result<Self> {
        if (0.0..1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(LabError::InvalidValue(format!(
                "instrument parameter {value} outside [0, 1)"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for InstrumentParam {
    type Error = LabError;
    fn try_from(v: f64) -> Result<Self> {
        Self::new(v)
    }
}

impl From<InstrumentParam> for f64 {
    fn from(p: InstrumentParam) -> f64 {
        p.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Station {
    S1,
    S2,
}

impl Station {
    pub fn stream(self) -> Stream {
        match self {
            Station::S1 => Stream::Station1,
            Station::S2 => Stream::Station2,
        }
    }
}

/// What a station may know about the trial besides its own setting.
/// `pair_id` is only read by the setting-pair-dependent diagnostic family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TrialContext {
    pub t: TimeTag,
    pub pair_id: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    BellDeterministic,
    FactorizableInstrument,
    TimeTaggedAnticorrelated,
    SettingPairDependent,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::BellDeterministic,
        ModelKind::FactorizableInstrument,
        ModelKind::TimeTaggedAnticorrelated,
        ModelKind::SettingPairDependent,
    ];

    /// Instrument parameters are conditionally independent given λ.
    pub fn is_factorizable(self) -> bool {
        matches!(
            self,
            ModelKind::BellDeterministic | ModelKind::FactorizableInstrument
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::BellDeterministic => "bell-deterministic",
            ModelKind::FactorizableInstrument => "factorizable-instrument",
            ModelKind::TimeTaggedAnticorrelated => "time-tagged-anticorrelated",
            ModelKind::SettingPairDependent => "setting-pair-dependent",
        }
    }
}

/// Distribution of the source variable. Never depends on the settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SourceDistribution {
    /// λ takes index i with probability `weights[i]`.
    Discrete { weights: Vec<f64> },
    /// λ uniform over `size` indices.
    UniformDiscrete { size: u32 },
    /// λ uniform planar angle on `[0, 2π)`.
    UniformAngle,
}

impl SourceDistribution {
    pub fn is_discrete(&self) -> bool {
        !matches!(self, SourceDistribution::UniformAngle)
    }

    /// Number of discrete values, `None` for the continuous source.
    pub fn size(&self) -> Option<u32> {
        match self {
            SourceDistribution::Discrete { weights } => Some(weights.len() as u32),
            SourceDistribution::UniformDiscrete { size } => Some(*size),
            SourceDistribution::UniformAngle => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            SourceDistribution::Discrete { weights } => {
                if weights.is_empty() {
                    return Err(LabError::InvalidSpec(
                        "discrete source has no weights".into(),
                    ));
                }
                if weights.len() > u32::MAX as usize {
                    return Err(LabError::InvalidSpec("too many source weights".into()));
                }
                if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
                    return Err(LabError::InvalidSpec(format!(
                        "source weight {w} is negative or not finite"
                    )));
                }
                let total = crate::scalar::Scalar::sum_ordered(weights.iter().copied());
                if (total - 1.0_f64).abs() > WEIGHT_TOLERANCE {
                    return Err(LabError::InvalidSpec(format!(
                        "source weights sum to {total}, expected 1"
                    )));
                }
                Ok(())
            }
            SourceDistribution::UniformDiscrete { size } => {
                if *size == 0 {
                    Err(LabError::InvalidSpec(
                        "discrete source size must be at least 1".into(),
                    ))
                } else {
                    Ok(())
                }
            }
            SourceDistribution::UniformAngle => Ok(()),
        }
    }

    /// Probability of each discrete index, in index order.
    pub fn weights(&self) -> Option<Vec<f64>> {
        match self {
            SourceDistribution::Discrete { weights } => Some(weights.clone()),
            SourceDistribution::UniformDiscrete { size } => {
                Some(vec![1.0 / *size as f64; *size as usize])
            }
            SourceDistribution::UniformAngle => None,
        }
    }

    pub fn sample(&self, rng: &mut Substream) -> Result<HiddenVariable> {
        self.validate()?;
        Ok(match self {
            SourceDistribution::Discrete { weights } => {
                let u = rng.uniform();
                let mut cumulative = 0.0;
                let mut chosen = None;
                for (i, w) in weights.iter().enumerate() {
                    cumulative += w;
                    if u < cumulative {
                        chosen = Some(i);
                        break;
                    }
                }
                // rounding can leave u above the final partial sum
                let i = chosen.unwrap_or_else(|| {
                    weights
                        .iter()
                        .rposition(|w| *w > 0.0)
                        .unwrap_or(weights.len() - 1)
                });
                HiddenVariable::DiscreteIndex(i as u32)
            }
            SourceDistribution::UniformDiscrete { size } => {
                HiddenVariable::DiscreteIndex(rng.below(*size))
            }
            SourceDistribution::UniformAngle => {
                HiddenVariable::angle(rng.uniform() * std::f64::consts::TAU)
            }
        })
    }

    /// Angle represented by `lambda`: discrete index i maps to 2πi/m.
    pub fn angle_of(&self, lambda: &HiddenVariable) -> Result<f64> {
        match (self.size(), lambda) {
            (Some(m), HiddenVariable::DiscreteIndex(i)) => {
                if *i >= m {
                    return Err(LabError::InvalidSpec(format!(
                        "hidden-variable index {i} outside source of size {m}"
                    )));
                }
                Ok(std::f64::consts::TAU * (*i as f64) / (m as f64))
            }
            (None, HiddenVariable::PlanarAngle(theta)) => Ok(*theta),
            _ => Err(LabError::InvalidSpec(format!(
                "hidden variable {lambda:?} does not match the source distribution"
            ))),
        }
    }
}

/// Interface every local hidden-variable model implements.
///
/// All methods are pure given their arguments; randomness only enters through
/// the substream the caller passes in.
pub trait HiddenVariableModel: Sync {
    fn validate(&self) -> Result<()>;

    /// True when the model's outcome distribution depends on the trial's
    /// setting pair. Reports derived from such a model carry this flag.
    fn setting_dependent_distribution(&self) -> bool;

    fn has_discrete_source(&self) -> bool;

    fn sample_source(&self, rng: &mut Substream) -> Result<HiddenVariable>;

    fn sample_instrument_params(
        &self,
        station: Station,
        setting_local: Setting,
        ctx: &TrialContext,
        lambda: &HiddenVariable,
        rng: &mut Substream,
    ) -> Result<InstrumentParam>;

    fn detector_a(
        &self,
        setting: Setting,
        lambda: &HiddenVariable,
        ip: InstrumentParam,
        t: TimeTag,
    ) -> Result<Outcome>;

    fn detector_b(
        &self,
        setting: Setting,
        lambda: &HiddenVariable,
        ip: InstrumentParam,
        t: TimeTag,
    ) -> Result<Outcome>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub source: SourceDistribution,
    /// Replacement probability ε; only valid for `FactorizableInstrument`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<f64>,
}

impl ModelSpec {
    pub fn new(kind: ModelKind, source: SourceDistribution) -> Self {
        Self {
            kind,
            source,
            noise: None,
        }
    }

    pub fn bell_deterministic(source: SourceDistribution) -> Self {
        Self::new(ModelKind::BellDeterministic, source)
    }

    pub fn factorizable(source: SourceDistribution, noise: f64) -> Self {
        Self {
            kind: ModelKind::FactorizableInstrument,
            source,
            noise: Some(noise),
        }
    }

    pub fn time_tagged(source: SourceDistribution) -> Self {
        Self::new(ModelKind::TimeTaggedAnticorrelated, source)
    }

    pub fn setting_pair_dependent(source: SourceDistribution) -> Self {
        Self::new(ModelKind::SettingPairDependent, source)
    }

    pub fn noise(&self) -> f64 {
        self.noise.unwrap_or(0.0)
    }

    fn lambda_sign(&self, setting: Setting, lambda: &HiddenVariable) -> Result<Outcome> {
        let theta = self.source.angle_of(lambda)?;
        Ok(bell_sign(setting.radians() - theta))
    }

    /// Station output before the station-2 negation.
    fn local_output(
        &self,
        setting: Setting,
        lambda: &HiddenVariable,
        ip: InstrumentParam,
    ) -> Result<Outcome> {
        self.validate()?;
        match self.kind {
            ModelKind::BellDeterministic => self.lambda_sign(setting, lambda),
            ModelKind::FactorizableInstrument => {
                let eps = self.noise();
                if ip.value() < eps {
                    Ok(Outcome::from_bool(ip.value() < eps / 2.0))
                } else {
                    self.lambda_sign(setting, lambda)
                }
            }
            ModelKind::TimeTaggedAnticorrelated => {
                Ok(time_flip(ip) * self.lambda_sign(setting, lambda)?)
            }
            ModelKind::SettingPairDependent => {
                unreachable!("pair-dependent outputs are not station-local")
            }
        }
    }
}

/// `sign(cos(x))` with ties resolved to +1. Values of `cos` within
/// `1e-12` of zero count as ties, so that grid points at exactly ±π/2 do not
/// depend on rounding of the angle difference.
pub fn bell_sign(x: f64) -> Outcome {
    let c = x.cos();
    if c.abs() < 1e-12 {
        Outcome::PLUS
    } else {
        Outcome::sign_of(c)
    }
}

/// Instrument parameter of the time-tagged family: a hash of the quantized
/// local angle and the clock tick.
pub fn time_tagged_param(setting: Setting, t: TimeTag) -> InstrumentParam {
    let q = (setting.radians() * 1e9).round() as u64;
    let h = mix64(q ^ mix64(t.0 ^ 0x5EED_7A6D_0000_0001));
    InstrumentParam(unit_interval(h))
}

/// The ±1 flip g(θ, t) encoded by a time-tagged instrument parameter.
pub fn time_flip(ip: InstrumentParam) -> Outcome {
    Outcome::from_bool(ip.value() < 0.5)
}

fn encode_pair(pair_id: Option<usize>) -> InstrumentParam {
    match pair_id {
        None => InstrumentParam(0.0),
        Some(p) => InstrumentParam((p as f64 + 1.0) / 5.0),
    }
}

fn decode_pair(ip: InstrumentParam) -> Option<usize> {
    match (ip.value() * 5.0).round() as usize {
        0 => None,
        k => Some(k - 1),
    }
}

impl HiddenVariableModel for ModelSpec {
    fn validate(&self) -> Result<()> {
        self.source.validate()?;
        match (self.kind, self.noise) {
            (ModelKind::FactorizableInstrument, Some(eps)) => {
                if !(0.0..=1.0).contains(&eps) {
                    return Err(LabError::InvalidSpec(format!("noise {eps} outside [0, 1]")));
                }
            }
            (ModelKind::FactorizableInstrument, None) => {
                return Err(LabError::InvalidSpec(
                    "factorizable-instrument requires a noise parameter".into(),
                ))
            }
            (kind, Some(_)) => {
                return Err(LabError::InvalidSpec(format!(
                    "noise is not a parameter of {}",
                    kind.name()
                )))
            }
            (_, None) => {}
        }
        Ok(())
    }

    fn setting_dependent_distribution(&self) -> bool {
        self.kind == ModelKind::SettingPairDependent
    }

    fn has_discrete_source(&self) -> bool {
        self.source.is_discrete()
    }

    fn sample_source(&self, rng: &mut Substream) -> Result<HiddenVariable> {
        self.validate()?;
        self.source.sample(rng)
    }

    fn sample_instrument_params(
        &self,
        _station: Station,
        setting_local: Setting,
        ctx: &TrialContext,
        lambda: &HiddenVariable,
        rng: &mut Substream,
    ) -> Result<InstrumentParam> {
        self.validate()?;
        self.source.angle_of(lambda)?;
        Ok(match self.kind {
            ModelKind::BellDeterministic => InstrumentParam::ZERO,
            ModelKind::FactorizableInstrument => InstrumentParam(rng.uniform()),
            ModelKind::TimeTaggedAnticorrelated => time_tagged_param(setting_local, ctx.t),
            ModelKind::SettingPairDependent => encode_pair(ctx.pair_id),
        })
    }

    fn detector_a(
        &self,
        setting: Setting,
        lambda: &HiddenVariable,
        ip: InstrumentParam,
        _t: TimeTag,
    ) -> Result<Outcome> {
        if self.kind == ModelKind::SettingPairDependent {
            self.validate()?;
            return Ok(Outcome::PLUS);
        }
        self.local_output(setting, lambda, ip)
    }

    fn detector_b(
        &self,
        setting: Setting,
        lambda: &HiddenVariable,
        ip: InstrumentParam,
        _t: TimeTag,
    ) -> Result<Outcome> {
        if self.kind == ModelKind::SettingPairDependent {
            self.validate()?;
            return Ok(Outcome::from_bool(decode_pair(ip) == Some(0)));
        }
        Ok(-self.local_output(setting, lambda, ip)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnticorrelationReport {
    pub violations: u64,
    pub trials: u64,
}

/// Outcome pair of one equal-setting trial.
pub fn equal_setting_trial<M: HiddenVariableModel + ?Sized>(
    model: &M,
    setting: Setting,
    index: u64,
    seed: u64,
) -> Result<(InstrumentParam, InstrumentParam, Outcome, Outcome)> {
    let t = TimeTag(index);
    let ctx = TrialContext { t, pair_id: None };
    let lambda = model.sample_source(&mut Substream::new(seed, index, Stream::Source))?;
    let ip1 = model.sample_instrument_params(
        Station::S1,
        setting,
        &ctx,
        &lambda,
        &mut Substream::new(seed, index, Station::S1.stream()),
    )?;
    let ip2 = model.sample_instrument_params(
        Station::S2,
        setting,
        &ctx,
        &lambda,
        &mut Substream::new(seed, index, Station::S2.stream()),
    )?;
    let a = model.detector_a(setting, &lambda, ip1, t)?;
    let b = model.detector_b(setting, &lambda, ip2, t)?;
    Ok((ip1, ip2, a, b))
}

/// Runs `n_trials` trials with the same setting at both stations and a shared
/// clock tick, cycling through `settings`, and counts trials with `A ≠ −B`.
pub fn check_anticorrelation<M: HiddenVariableModel + ?Sized>(
    model: &M,
    settings: &[Setting],
    n_trials: u64,
    seed: u64,
) -> Result<AnticorrelationReport> {
    use rayon::prelude::*;

    model.validate()?;
    if n_trials == 0 {
        return Err(LabError::InvalidValue("n_trials must be at least 1".into()));
    }
    if settings.is_empty() {
        return Err(LabError::InvalidValue(
            "at least one setting is required".into(),
        ));
    }
    let violations = (0..n_trials)
        .into_par_iter()
        .map(|i| {
            let setting = settings[(i % settings.len() as u64) as usize];
            let (_, _, a, b) = equal_setting_trial(model, setting, i, seed)?;
            Ok(u64::from(a != -b))
        })
        .try_reduce(|| 0, |x, y| Ok(x + y))?;
    Ok(AnticorrelationReport {
        violations,
        trials: n_trials,
    })
}
