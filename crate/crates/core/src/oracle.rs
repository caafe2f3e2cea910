//! Exact computations on finite hidden-variable spaces.
//!
//! A [`FiniteModel`] carries a source distribution over `m` values, per-station
//! instrument spaces with weights conditional on λ, and total detector tables.
//! Instrument weights are stored per station, so the joint instrument
//! distribution is a product given λ. Correlations are exact weighted sums in
//! fixed index order over any [`Scalar`].

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::{chsh_pairs, row_sum, Outcome, Real, CHSH_SIGNS};
use crate::models::{
    HiddenVariableModel, InstrumentParam, ModelKind, ModelSpec, SourceDistribution,
};
use crate::scalar::{is_normalized, Scalar};
use crate::{geometry, HiddenVariable, Setting, SettingQuad, TimeTag};

/// λ grid points used to discretize a continuous source.
pub const DISCRETIZATION_GRID: usize = 360;

/// Largest enumeration, as a power of two, `enumerate_deterministic_strategies` accepts.
pub const ENUMERATION_LIMIT_LOG2: u64 = 32;

/// Angles closer than this are the same setting for table lookup.
const SETTING_MATCH_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteModel<S> {
    pub lambda_weights: Vec<S>,
    pub settings_1: Vec<Setting>,
    pub settings_2: Vec<Setting>,
    /// `ip_weights_1[λ][i]`: weight of station-1 instrument value `i` given λ.
    pub ip_weights_1: Vec<Vec<S>>,
    pub ip_weights_2: Vec<Vec<S>>,
    /// `detector_1[setting][λ][i]`.
    pub detector_1: Vec<Vec<Vec<Outcome>>>,
    pub detector_2: Vec<Vec<Vec<Outcome>>>,
}

fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidSpec(msg.into())
}

fn check_table(
    table: &[Vec<Vec<Outcome>>],
    n_settings: usize,
    ip_weights: &[Vec<impl Sized>],
    station: u8,
) -> Result<()> {
    if table.len() != n_settings {
        return Err(invalid(format!(
            "station {station} table has {} settings, expected {n_settings}",
            table.len()
        )));
    }
    for (s, per_lambda) in table.iter().enumerate() {
        if per_lambda.len() != ip_weights.len() {
            return Err(invalid(format!(
                "station {station} setting {s}: {} λ rows, expected {}",
                per_lambda.len(),
                ip_weights.len()
            )));
        }
        for (l, row) in per_lambda.iter().enumerate() {
            if row.len() != ip_weights[l].len() {
                return Err(invalid(format!(
                    "station {station} setting {s} λ {l}: {} instrument entries, expected {}",
                    row.len(),
                    ip_weights[l].len()
                )));
            }
        }
    }
    Ok(())
}

impl<S: Scalar> FiniteModel<S> {
    /// Model without instrument randomness: `a_table[setting][λ]`, `b_table[setting][λ]`.
    pub fn deterministic(
        lambda_weights: Vec<S>,
        settings_1: Vec<Setting>,
        settings_2: Vec<Setting>,
        a_table: Vec<Vec<Outcome>>,
        b_table: Vec<Vec<Outcome>>,
    ) -> Result<Self> {
        let m = lambda_weights.len();
        let single = vec![vec![S::one()]; m];
        let lift = |t: Vec<Vec<Outcome>>| -> Vec<Vec<Vec<Outcome>>> {
            t.into_iter()
                .map(|per_lambda| per_lambda.into_iter().map(|o| vec![o]).collect())
                .collect()
        };
        let fm = Self {
            lambda_weights,
            settings_1,
            settings_2,
            ip_weights_1: single.clone(),
            ip_weights_2: single,
            detector_1: lift(a_table),
            detector_2: lift(b_table),
        };
        fm.validate()?;
        Ok(fm)
    }

    pub fn lambda_count(&self) -> usize {
        self.lambda_weights.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.lambda_weights.len();
        if m == 0 {
            return Err(invalid("finite model has no λ values"));
        }
        if !is_normalized(&self.lambda_weights) {
            return Err(invalid("λ weights are not a probability vector"));
        }
        for (station, ipw) in [(1u8, &self.ip_weights_1), (2, &self.ip_weights_2)] {
            if ipw.len() != m {
                return Err(invalid(format!(
                    "station {station} has instrument weights for {} λ values, expected {m}",
                    ipw.len()
                )));
            }
            for (l, w) in ipw.iter().enumerate() {
                if w.is_empty() || !is_normalized(w) {
                    return Err(invalid(format!(
                        "station {station} instrument weights for λ {l} are not a probability vector"
                    )));
                }
            }
        }
        check_table(
            &self.detector_1,
            self.settings_1.len(),
            &self.ip_weights_1,
            1,
        )?;
        check_table(
            &self.detector_2,
            self.settings_2.len(),
            &self.ip_weights_2,
            2,
        )?;
        Ok(())
    }

    fn setting_index(settings: &[Setting], s: Setting) -> Result<usize> {
        settings
            .iter()
            .position(|x| x.relative_angle(&s) < SETTING_MATCH_TOLERANCE)
            .ok_or(LabError::UnknownSetting { angle: s.radians() })
    }
}

/// `E(A·B) = Σ_{λ, i, j} w(λ) p₁(i|λ) p₂(j|λ) A(a,λ,i) B(b,λ,j)`.
pub fn exact_correlation<S: Scalar>(fm: &FiniteModel<S>, pair: (Setting, Setting)) -> Result<S> {
    fm.validate()?;
    let sa = FiniteModel::<S>::setting_index(&fm.settings_1, pair.0)?;
    let sb = FiniteModel::<S>::setting_index(&fm.settings_2, pair.1)?;
    let a = &fm.detector_1[sa];
    let b = &fm.detector_2[sb];
    let terms = fm.lambda_weights.iter().enumerate().flat_map(|(l, w)| {
        let p1 = &fm.ip_weights_1[l];
        let p2 = &fm.ip_weights_2[l];
        p1.iter().enumerate().flat_map(move |(i, wi)| {
            p2.iter().enumerate().map(move |(j, wj)| {
                let prod = a[l][i].product(b[l][j]) as i8;
                w.clone() * wi.clone() * wj.clone() * S::from_outcome(prod)
            })
        })
    });
    Ok(S::sum_ordered(terms))
}

/// Δ at `quad`. With `per_pair` overrides, column `k` is integrated against
/// `per_pair[k]` instead of `fm`: one distribution per setting pair.
pub fn exact_chsh<S: Scalar>(
    fm: &FiniteModel<S>,
    quad: &SettingQuad,
    per_pair: Option<&[FiniteModel<S>; 4]>,
) -> Result<S> {
    let columns = chsh_pairs(quad)
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let model = per_pair.map_or(fm, |o| &o[k]);
            let e = exact_correlation(model, (p.first, p.second))?;
            Ok(S::from_i32(p.sign).expect("sign fits") * e)
        })
        .collect::<Result<Vec<S>>>()?;
    Ok(S::sum_ordered(columns))
}

/// A deterministic local strategy: outcomes per setting and λ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicStrategy {
    /// Setting indices used as (a, b, c, d); a, d on station 1, b, c on station 2.
    pub quad_indices: [usize; 4],
    /// `a_table[setting][λ]`.
    pub a_table: Vec<Vec<Outcome>>,
    pub b_table: Vec<Vec<Outcome>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyBound<S> {
    pub max_abs_chsh: S,
    pub strategy: DeterministicStrategy,
    /// Total strategies covered, as a power of two.
    pub log2_strategies: u64,
}

fn log2_strategies(n1: usize, n2: usize, m: usize) -> Option<u64> {
    (n1 as u64).checked_add(n2 as u64)?.checked_mul(m as u64)
}

fn assignment(bits: u64, offset: usize, n: usize) -> Vec<Outcome> {
    (0..n)
        .map(|k| Outcome::from_bool(bits >> (offset + k) & 1 == 0))
        .collect()
}

/// Maximum of `|Δ|` over all deterministic strategies with `n1` settings at
/// station 1, `n2` at station 2, and a setting-independent λ distribution
/// `weights`.
///
/// A global strategy is an independent choice of local outcomes for every λ,
/// and Δ is the weighted average of per-λ rows. For a fixed choice of which
/// settings play a, b, c, d the maximum therefore decomposes into per-λ
/// maxima, each found by scanning all `2^(n1+n2)` local assignments.
pub fn enumerate_with_weights<S: Scalar>(
    n1: usize,
    n2: usize,
    weights: &[S],
) -> Result<StrategyBound<S>> {
    let m = weights.len();
    if n1 < 2 || n2 < 2 {
        return Err(LabError::InvalidValue(
            "CHSH needs at least 2 settings per station".into(),
        ));
    }
    if m == 0 || !is_normalized(weights) {
        return Err(invalid("λ weights are not a probability vector"));
    }
    let log2 = log2_strategies(n1, n2, m).unwrap_or(u64::MAX);
    if log2 > ENUMERATION_LIMIT_LOG2 {
        return Err(LabError::TooLarge {
            log2_strategies: log2,
            limit_log2: ENUMERATION_LIMIT_LOG2,
        });
    }
    let local_count = 1u64 << (n1 + n2);

    let mut best: Option<(S, DeterministicStrategy)> = None;
    for ia in 0..n1 {
        for id in (0..n1).filter(|&d| d != ia) {
            for ib in 0..n2 {
                for ic in (0..n2).filter(|&c| c != ib) {
                    // per λ: (max row, its bits), (min row, its bits)
                    let mut hi = Vec::with_capacity(m);
                    let mut lo = Vec::with_capacity(m);
                    for _ in 0..m {
                        let mut row_max = (i32::MIN, 0u64);
                        let mut row_min = (i32::MAX, 0u64);
                        for bits in 0..local_count {
                            let a = assignment(bits, 0, n1);
                            let b = assignment(bits, n1, n2);
                            let r = row_sum(a[ia], a[id], b[ib], b[ic]);
                            if r > row_max.0 {
                                row_max = (r, bits);
                            }
                            if r < row_min.0 {
                                row_min = (r, bits);
                            }
                        }
                        hi.push(row_max);
                        lo.push(row_min);
                    }
                    let total = |rows: &[(i32, u64)]| {
                        S::sum_ordered(
                            rows.iter()
                                .zip(weights)
                                .map(|((r, _), w)| w.clone() * S::from_i32(*r).unwrap()),
                        )
                    };
                    let max = total(&hi);
                    let min = total(&lo);
                    let (value, rows) = if max.abs() >= min.abs() {
                        (max.abs(), &hi)
                    } else {
                        (min.abs(), &lo)
                    };
                    if best.as_ref().is_none_or(|(v, _)| value > *v) {
                        let mut a_table = vec![Vec::with_capacity(m); n1];
                        let mut b_table = vec![Vec::with_capacity(m); n2];
                        for (_, bits) in rows {
                            for (s, o) in assignment(*bits, 0, n1).into_iter().enumerate() {
                                a_table[s].push(o);
                            }
                            for (s, o) in assignment(*bits, n1, n2).into_iter().enumerate() {
                                b_table[s].push(o);
                            }
                        }
                        best = Some((
                            value,
                            DeterministicStrategy {
                                quad_indices: [ia, ib, ic, id],
                                a_table,
                                b_table,
                            },
                        ));
                    }
                }
            }
        }
    }
    let (max_abs_chsh, strategy) = best.expect("at least one quad choice");
    Ok(StrategyBound {
        max_abs_chsh,
        strategy,
        log2_strategies: log2,
    })
}

/// [`enumerate_with_weights`] with λ uniform over `m` values.
pub fn enumerate_deterministic_strategies<S: Scalar>(
    n_settings_1: usize,
    n_settings_2: usize,
    m: usize,
) -> Result<StrategyBound<S>> {
    let log2 = log2_strategies(n_settings_1, n_settings_2, m).unwrap_or(u64::MAX);
    if log2 > ENUMERATION_LIMIT_LOG2 {
        return Err(LabError::TooLarge {
            log2_strategies: log2,
            limit_log2: ENUMERATION_LIMIT_LOG2,
        });
    }
    if m == 0 {
        return Err(LabError::InvalidValue("λ space must be non-empty".into()));
    }
    let weights = vec![S::ratio(1, m as i64); m];
    enumerate_with_weights(n_settings_1, n_settings_2, &weights)
}

/// Spin-singlet correlation `−cos(θ_a − θ_b)`.
pub fn singlet_correlation<T: Real>(a: &geometry::Setting<T>, b: &geometry::Setting<T>) -> T {
    -(a.radians() - b.radians()).cos()
}

/// Δ of the singlet correlation at `quad`.
pub fn quantum_chsh<T: Real>(quad: &geometry::SettingQuad<T>) -> T {
    chsh_pairs(quad)
        .iter()
        .zip(CHSH_SIGNS)
        .fold(T::zero(), |acc, (p, s)| {
            acc + T::from(s).unwrap() * singlet_correlation(&p.first, &p.second)
        })
}

/// Exact correlation of the continuous Bell model at relative angle θ ∈ [0, π].
pub fn bell_linear_correlation(theta: f64) -> f64 {
    -1.0 + 2.0 * theta / std::f64::consts::PI
}

/// λ values and weights used to discretize `source`.
pub fn lambda_grid(source: &SourceDistribution) -> Result<Vec<(HiddenVariable, f64)>> {
    source.validate()?;
    Ok(match source.weights() {
        Some(w) => w
            .into_iter()
            .enumerate()
            .map(|(i, p)| (HiddenVariable::DiscreteIndex(i as u32), p))
            .collect(),
        None => {
            let n = DISCRETIZATION_GRID;
            (0..n)
                .map(|k| {
                    let theta = (k as f64 + 0.5) * std::f64::consts::TAU / n as f64;
                    (HiddenVariable::angle(theta), 1.0 / n as f64)
                })
                .collect()
        }
    })
}

/// Representative instrument values and their weights for a factorizable family.
fn instrument_support(spec: &ModelSpec) -> Vec<(InstrumentParam, f64)> {
    match spec.kind {
        ModelKind::FactorizableInstrument => {
            let eps = spec.noise();
            // coin +1 on [0, ε/2), coin −1 on [ε/2, ε), unchanged on [ε, 1)
            [
                (eps / 4.0, eps / 2.0),
                (3.0 * eps / 4.0, eps / 2.0),
                (eps + (1.0 - eps) / 2.0, 1.0 - eps),
            ]
            .into_iter()
            .filter(|(_, w)| *w > 0.0)
            .map(|(v, w)| (InstrumentParam::new(v).expect("representative in [0,1)"), w))
            .collect()
        }
        _ => vec![(InstrumentParam::ZERO, 1.0)],
    }
}

/// Finite version of a factorizable model, for exact integration.
///
/// Continuous sources use [`DISCRETIZATION_GRID`] midpoints; discrete sources
/// keep their weights. Non-factorizable families are rejected.
pub fn discretize(
    spec: &ModelSpec,
    settings_1: &[Setting],
    settings_2: &[Setting],
) -> Result<FiniteModel<f64>> {
    spec.validate()?;
    if !spec.kind.is_factorizable() {
        return Err(invalid(format!(
            "{} has no setting-independent finite form",
            spec.kind.name()
        )));
    }
    let grid = lambda_grid(&spec.source)?;
    let support = instrument_support(spec);
    let t = TimeTag(0);
    let table = |settings: &[Setting], station_a: bool| -> Result<Vec<Vec<Vec<Outcome>>>> {
        settings
            .iter()
            .map(|s| {
                grid.iter()
                    .map(|(lambda, _)| {
                        support
                            .iter()
                            .map(|(ip, _)| {
                                if station_a {
                                    spec.detector_a(*s, lambda, *ip, t)
                                } else {
                                    spec.detector_b(*s, lambda, *ip, t)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect()
    };
    let ip_weights: Vec<Vec<f64>> = vec![support.iter().map(|(_, w)| *w).collect(); grid.len()];
    let fm = FiniteModel {
        lambda_weights: grid.iter().map(|(_, w)| *w).collect(),
        settings_1: settings_1.to_vec(),
        settings_2: settings_2.to_vec(),
        ip_weights_1: ip_weights.clone(),
        ip_weights_2: ip_weights,
        detector_1: table(settings_1, true)?,
        detector_2: table(settings_2, false)?,
    };
    fm.validate()?;
    Ok(fm)
}

/// Per-pair overrides realizing products (+1, −1, −1, −1) on the four columns
/// of `quad`, each a one-point distribution.
pub fn pair_dependent_overrides<S: Scalar>(quad: &SettingQuad) -> Result<[FiniteModel<S>; 4]> {
    let pairs = chsh_pairs(quad);
    let build = |k: usize| {
        let p = pairs[k];
        FiniteModel::deterministic(
            vec![S::one()],
            vec![p.first],
            vec![p.second],
            vec![vec![Outcome::PLUS]],
            vec![vec![Outcome::from_bool(p.sign > 0)]],
        )
    };
    Ok([build(0)?, build(1)?, build(2)?, build(3)?])
}

/// JSON record emitted by oracle commands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub operation: String,
    pub inputs_digest: String,
    pub value: f64,
    pub certificate: serde_json::Value,
}

impl OracleReport {
    pub fn new<I: Serialize>(
        operation: &str,
        inputs: &I,
        value: f64,
        certificate: serde_json::Value,
    ) -> Self {
        let bytes = serde_json::to_vec(inputs).expect("oracle inputs serialize");
        Self {
            operation: operation.to_string(),
            inputs_digest: crate::sha256_hex(&bytes),
            value,
            certificate,
        }
    }
}
