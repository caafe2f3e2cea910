//! Outcome tables built from trial logs.
//!
//! Trials are grouped by a row key and matched greedily, one trial per CHSH
//! column, in trial-index order. With the key `λ` alone, a discrete source
//! fills complete four-column rows whose sums are ±2 for deterministic
//! models. With the key `(λ, t)` every key is unique, so each row holds one
//! factual cell and three counterfactual ones, and its sum stays undefined.

use std::collections::{BTreeMap, VecDeque};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::geometry::CHSH_SIGNS;
use crate::simulate::{TrialLog, TrialRecord};
use crate::{HiddenVariable, TimeTag};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KeyMode {
    #[serde(rename = "lambda")]
    LambdaOnly,
    #[serde(rename = "lambda-time")]
    LambdaTime,
}

impl KeyMode {
    pub fn name(self) -> &'static str {
        match self {
            KeyMode::LambdaOnly => "lambda",
            KeyMode::LambdaTime => "lambda-time",
        }
    }
}

impl std::str::FromStr for KeyMode {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambda" => Ok(KeyMode::LambdaOnly),
            "lambda-time" => Ok(KeyMode::LambdaTime),
            other => Err(LabError::InvalidValue(format!(
                "unknown key mode {other:?}, expected \"lambda\" or \"lambda-time\""
            ))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TableCell {
    /// Signed product `sign · A·B` of a trial that was actually run.
    Factual { product: i32 },
    /// A setting pair that was not measured for this row.
    Counterfactual,
}

impl TableCell {
    pub fn is_factual(&self) -> bool {
        matches!(self, TableCell::Factual { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum RowKey {
    LambdaOnly { lambda: HiddenVariable },
    LambdaTime { lambda: HiddenVariable, t: TimeTag },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub key: RowKey,
    pub cells: [TableCell; 4],
    /// Trial index backing each factual cell.
    pub trials: [Option<u64>; 4],
}

impl TableRow {
    pub fn is_complete(&self) -> bool {
        self.cells.iter().all(TableCell::is_factual)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeTable {
    pub key_mode: KeyMode,
    pub n_trials: u64,
    pub complete_rows: u64,
    pub leftover_trials: u64,
    /// Complete rows in the order they filled, then incomplete rows ordered by
    /// their earliest trial.
    pub rows: Vec<TableRow>,
}

impl OutcomeTable {
    pub fn leftover_fraction(&self) -> f64 {
        if self.n_trials == 0 {
            0.0
        } else {
            self.leftover_trials as f64 / self.n_trials as f64
        }
    }
}

/// Totally ordered identity of a row key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum KeyId {
    Discrete(u32, Option<u64>),
    Angle(u64, Option<u64>),
}

fn key_of(record: &TrialRecord, mode: KeyMode) -> Result<(KeyId, RowKey)> {
    let t = match mode {
        KeyMode::LambdaOnly => None,
        KeyMode::LambdaTime => Some(record.t.0),
    };
    let id = match record.lambda {
        HiddenVariable::DiscreteIndex(i) => KeyId::Discrete(i, t),
        HiddenVariable::PlanarAngle(theta) => {
            if mode == KeyMode::LambdaOnly {
                return Err(LabError::ContinuousLambdaUnorderable);
            }
            KeyId::Angle(theta.to_bits(), t)
        }
    };
    let key = match mode {
        KeyMode::LambdaOnly => RowKey::LambdaOnly {
            lambda: record.lambda,
        },
        KeyMode::LambdaTime => RowKey::LambdaTime {
            lambda: record.lambda,
            t: record.t,
        },
    };
    Ok((id, key))
}

fn cell_of(record: &TrialRecord) -> TableCell {
    TableCell::Factual {
        product: CHSH_SIGNS[record.pair_id] * record.product(),
    }
}

fn row_from(key: RowKey, picks: [Option<&TrialRecord>; 4]) -> TableRow {
    TableRow {
        key,
        cells: picks.map(|p| p.map_or(TableCell::Counterfactual, cell_of)),
        trials: picks.map(|p| p.map(|r| r.index)),
    }
}

/// Groups trials into rows by key, first-fit in trial-index order.
///
/// Every trial lands in exactly one row. Trials that never complete a row
/// are counted as leftovers and shown as incomplete rows.
pub fn build_reordered_table(log: &TrialLog, key_mode: KeyMode) -> Result<OutcomeTable> {
    struct Pending {
        key: RowKey,
        queues: [VecDeque<usize>; 4],
    }

    let records = &log.records;
    let mut pending: BTreeMap<KeyId, Pending> = BTreeMap::new();
    let mut rows = Vec::new();

    for (pos, r) in records.iter().enumerate() {
        if r.pair_id >= 4 {
            return Err(LabError::Log(format!(
                "trial {} has pair id {}, expected 0..4",
                r.index, r.pair_id
            )));
        }
        let (id, key) = key_of(r, key_mode)?;
        let entry = pending.entry(id).or_insert_with(|| Pending {
            key,
            queues: Default::default(),
        });
        entry.queues[r.pair_id].push_back(pos);
        if entry.queues.iter().all(|q| !q.is_empty()) {
            let picks = [0, 1, 2, 3].map(|p| entry.queues[p].pop_front().map(|i| &records[i]));
            rows.push(row_from(entry.key, picks));
        }
    }
    let complete_rows = rows.len() as u64;

    let mut incomplete = Vec::new();
    for mut entry in pending.into_values() {
        while entry.queues.iter().any(|q| !q.is_empty()) {
            let picks = [0, 1, 2, 3].map(|p| entry.queues[p].pop_front().map(|i| &records[i]));
            let first = picks.iter().flatten().map(|r| r.index).min().unwrap_or(0);
            incomplete.push((first, row_from(entry.key, picks)));
        }
    }
    incomplete.sort_by_key(|(first, _)| *first);
    let n_trials = records.len() as u64;
    rows.extend(incomplete.into_iter().map(|(_, row)| row));

    Ok(OutcomeTable {
        key_mode,
        n_trials,
        complete_rows,
        leftover_trials: n_trials - 4 * complete_rows,
        rows,
    })
}

/// Sum of one table row.
///
/// A row containing a counterfactual cell has no sum. `RowSum` deliberately
/// has no numeric conversion, so an undefined sum cannot flow into arithmetic:
///
/// ```compile_fail
/// use bell_lab::tables::RowSum;
/// let x: i32 = RowSum::Undefined.into();
/// ```
///
/// ```compile_fail
/// use bell_lab::tables::RowSum;
/// let total: i32 = [RowSum::Undefined].iter().sum();
/// ```
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum RowSum {
    Sum(i32),
    Undefined,
}

impl RowSum {
    pub fn as_defined(self) -> Option<i32> {
        match self {
            RowSum::Sum(v) => Some(v),
            RowSum::Undefined => None,
        }
    }
}

pub fn row_sum_of(row: &TableRow) -> RowSum {
    let mut total = 0;
    for cell in &row.cells {
        match cell {
            TableCell::Factual { product } => total += product,
            TableCell::Counterfactual => return RowSum::Undefined,
        }
    }
    RowSum::Sum(total)
}

pub fn row_sums(table: &OutcomeTable) -> Vec<RowSum> {
    table.rows.iter().map(row_sum_of).collect()
}

/// Aggregate over row sums; undefined rows are counted, never summed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RowSumSummary {
    pub defined: u64,
    pub undefined: u64,
    /// Count per observed sum value.
    pub histogram: BTreeMap<i32, u64>,
    /// Mean of defined sums; `None` when there are none.
    pub mean: Option<f64>,
    pub std_error: Option<f64>,
}

impl RowSumSummary {
    pub fn from_sums(sums: &[RowSum]) -> Self {
        let mut histogram = BTreeMap::new();
        let mut undefined = 0;
        let mut total = 0i64;
        let mut total_sq = 0i64;
        for s in sums {
            match s.as_defined() {
                Some(v) => {
                    *histogram.entry(v).or_insert(0) += 1;
                    total += v as i64;
                    total_sq += (v as i64) * (v as i64);
                }
                None => undefined += 1,
            }
        }
        let defined: u64 = histogram.values().sum();
        let n = defined as f64;
        let mean = (defined > 0).then(|| total as f64 / n);
        let std_error = (defined > 1).then(|| {
            let m = total as f64 / n;
            let var = ((total_sq as f64 - n * m * m) / (n - 1.0)).max(0.0);
            (var / n).sqrt()
        });
        Self {
            defined,
            undefined,
            histogram,
            mean,
            std_error,
        }
    }

    /// Every defined sum is −2 or +2.
    pub fn all_plus_minus_two(&self) -> bool {
        self.histogram.keys().all(|v| *v == 2 || *v == -2)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPairCounts {
    pub lambda: u32,
    pub counts: [u64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceReport {
    pub per_key_pair_counts: Vec<KeyPairCounts>,
    pub max_abs_z: f64,
}

/// Checks that each source value appears about equally often under each
/// setting pair.
///
/// Conditional on the `n_λ` trials with value λ, each pair count is
/// Binomial(n_λ, 1/4); `max_abs_z` is the largest standardized deviation
/// over all (λ, pair) cells.
pub fn lln_balance_check(log: &TrialLog) -> Result<BalanceReport> {
    let mut counts: BTreeMap<u32, [u64; 4]> = BTreeMap::new();
    for r in &log.records {
        let HiddenVariable::DiscreteIndex(i) = r.lambda else {
            return Err(LabError::ContinuousLambdaUnorderable);
        };
        if r.pair_id >= 4 {
            return Err(LabError::Log(format!(
                "trial {} has pair id {}, expected 0..4",
                r.index, r.pair_id
            )));
        }
        counts.entry(i).or_default()[r.pair_id] += 1;
    }
    let mut max_abs_z: f64 = 0.0;
    for c in counts.values() {
        let n: u64 = c.iter().sum();
        let expected = n as f64 / 4.0;
        let sd = (n as f64 * 0.25 * 0.75).sqrt();
        for &k in c {
            max_abs_z = max_abs_z.max(((k as f64 - expected) / sd).abs());
        }
    }
    Ok(BalanceReport {
        per_key_pair_counts: counts
            .into_iter()
            .map(|(lambda, counts)| KeyPairCounts { lambda, counts })
            .collect(),
        max_abs_z,
    })
}

fn format_lambda(lambda: &HiddenVariable) -> String {
    match lambda {
        HiddenVariable::DiscreteIndex(i) => format!("λ{i}"),
        HiddenVariable::PlanarAngle(theta) => format!("λ={theta:.6}"),
    }
}

/// Plain-text view of at most `max_rows` rows. Rows with counterfactual cells
/// mark factual cells with `*` and show `?` for the unmeasured ones and for
/// the row sum.
pub fn render_text(table: &OutcomeTable, max_rows: usize) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<24} | {:>4} {:>4} {:>4} {:>4} | row sum",
        "key", "+ac", "-ab", "-db", "-dc"
    );
    for row in table.rows.iter().take(max_rows) {
        let key = match &row.key {
            RowKey::LambdaOnly { lambda } => format_lambda(lambda),
            RowKey::LambdaTime { lambda, t } => format!("{}, t={}", format_lambda(lambda), t.0),
        };
        let complete = row.is_complete();
        let cells: Vec<String> = row
            .cells
            .iter()
            .map(|c| match c {
                TableCell::Factual { product } if complete => format!("{product:+}"),
                TableCell::Factual { product } => format!("*{product:+}"),
                TableCell::Counterfactual => "?".to_string(),
            })
            .collect();
        let sum = match row_sum_of(row) {
            RowSum::Sum(v) => format!("{v:+}"),
            RowSum::Undefined => "?".to_string(),
        };
        let _ = writeln!(
            out,
            "{:<24} | {:>4} {:>4} {:>4} {:>4} | {}",
            key, cells[0], cells[1], cells[2], cells[3], sum
        );
    }
    if table.rows.len() > max_rows {
        let _ = writeln!(out, "... {} more rows", table.rows.len() - max_rows);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Outcome;
    use crate::models::{InstrumentParam, ModelSpec, SourceDistribution};
    use crate::simulate::run_experiment;
    use crate::{Setting, SettingQuad};

    fn record(
        index: u64,
        pair_id: usize,
        lambda: HiddenVariable,
        a: Outcome,
        b: Outcome,
    ) -> TrialRecord {
        let s = Setting::from_radians(0.0);
        TrialRecord {
            index,
            t: TimeTag(index),
            pair_id,
            setting_1: s,
            setting_2: s,
            lambda,
            ip_1: InstrumentParam::ZERO,
            ip_2: InstrumentParam::ZERO,
            a,
            b,
        }
    }

    fn four_trial_log() -> TrialLog {
        let l = HiddenVariable::DiscreteIndex(2);
        TrialLog {
            records: (0..4)
                .map(|i| record(i, i as usize, l, Outcome::PLUS, Outcome::PLUS))
                .collect(),
        }
    }

    #[test]
    fn four_trials_one_row() {
        let table = build_reordered_table(&four_trial_log(), KeyMode::LambdaOnly).unwrap();
        assert_eq!(table.complete_rows, 1);
        assert_eq!(table.leftover_trials, 0);
        assert_eq!(table.rows.len(), 1);
        assert_eq!(row_sums(&table), vec![RowSum::Sum(-2)]);
        assert_eq!(table.rows[0].trials, [Some(0), Some(1), Some(2), Some(3)]);
    }

    #[test]
    fn same_log_with_time_keys_has_no_complete_row() {
        let table = build_reordered_table(&four_trial_log(), KeyMode::LambdaTime).unwrap();
        assert_eq!(table.complete_rows, 0);
        assert_eq!(table.leftover_trials, 4);
        assert_eq!(table.rows.len(), 4);
        for (row, sum) in table.rows.iter().zip(row_sums(&table)) {
            assert_eq!(sum, RowSum::Undefined);
            assert_eq!(row.cells.iter().filter(|c| c.is_factual()).count(), 1);
        }
    }

    #[test]
    fn continuous_lambda_refuses_value_keys() {
        let log = TrialLog {
            records: vec![record(
                0,
                0,
                HiddenVariable::angle(0.5),
                Outcome::PLUS,
                Outcome::MINUS,
            )],
        };
        assert_eq!(
            build_reordered_table(&log, KeyMode::LambdaOnly),
            Err(LabError::ContinuousLambdaUnorderable)
        );
        assert_eq!(
            lln_balance_check(&log),
            Err(LabError::ContinuousLambdaUnorderable)
        );
        assert!(build_reordered_table(&log, KeyMode::LambdaTime).is_ok());
    }

    #[test]
    fn row_sum_examples() {
        let complete = TableRow {
            key: RowKey::LambdaOnly {
                lambda: HiddenVariable::DiscreteIndex(0),
            },
            cells: [1, -1, -1, -1].map(|product| TableCell::Factual { product }),
            trials: [Some(0), Some(1), Some(2), Some(3)],
        };
        assert_eq!(row_sum_of(&complete), RowSum::Sum(-2));
        let mut partial = complete.clone();
        partial.cells[3] = TableCell::Counterfactual;
        assert_eq!(row_sum_of(&partial), RowSum::Undefined);
    }

    #[test]
    fn greedy_matching_is_first_fit() {
        let l = HiddenVariable::DiscreteIndex(0);
        let pairs = [0, 0, 1, 2, 3, 1, 2, 3, 3];
        let log = TrialLog {
            records: pairs
                .iter()
                .enumerate()
                .map(|(i, &p)| record(i as u64, p, l, Outcome::PLUS, Outcome::MINUS))
                .collect(),
        };
        let table = build_reordered_table(&log, KeyMode::LambdaOnly).unwrap();
        assert_eq!(table.complete_rows, 2);
        assert_eq!(table.leftover_trials, 1);
        assert_eq!(table.rows[0].trials, [Some(0), Some(2), Some(3), Some(4)]);
        assert_eq!(table.rows[1].trials, [Some(1), Some(5), Some(6), Some(7)]);
        assert_eq!(table.rows[2].trials, [None, None, None, Some(8)]);
    }

    #[test]
    fn bell_rows_sum_to_plus_minus_two() {
        let spec = ModelSpec::bell_deterministic(SourceDistribution::UniformDiscrete { size: 16 });
        let log = run_experiment(&spec, &SettingQuad::canonical(), 20_000, 12).unwrap();
        let table = build_reordered_table(&log, KeyMode::LambdaOnly).unwrap();
        assert_eq!(4 * table.complete_rows + table.leftover_trials, 20_000);
        let sums = row_sums(&table);
        let summary = RowSumSummary::from_sums(&sums);
        assert_eq!(summary.defined, table.complete_rows);
        assert!(summary.all_plus_minus_two());
        let mean = summary.mean.unwrap();
        assert!((-2.0..=2.0).contains(&mean));
    }

    #[test]
    fn summary_never_sums_undefined() {
        let sums = [
            RowSum::Sum(2),
            RowSum::Undefined,
            RowSum::Sum(-2),
            RowSum::Sum(2),
        ];
        let s = RowSumSummary::from_sums(&sums);
        assert_eq!(s.defined, 3);
        assert_eq!(s.undefined, 1);
        assert_eq!(s.mean, Some(2.0 / 3.0));
        assert_eq!(RowSumSummary::from_sums(&[RowSum::Undefined]).mean, None);
    }

    #[test]
    fn single_key_balance_is_binomial() {
        let spec = ModelSpec::bell_deterministic(SourceDistribution::UniformDiscrete { size: 1 });
        let log = run_experiment(&spec, &SettingQuad::canonical(), 4000, 1).unwrap();
        let report = lln_balance_check(&log).unwrap();
        assert_eq!(report.per_key_pair_counts.len(), 1);
        let mut pair_counts = [0u64; 4];
        for r in &log.records {
            pair_counts[r.pair_id] += 1;
        }
        assert_eq!(report.per_key_pair_counts[0].counts, pair_counts);
        let sd = (4000.0f64 * 0.25 * 0.75).sqrt();
        let z = pair_counts
            .iter()
            .map(|&c| ((c as f64 - 1000.0) / sd).abs())
            .fold(0.0, f64::max);
        assert!((report.max_abs_z - z).abs() < 1e-12);
    }

    #[test]
    fn adversarial_log_fails_balance_loudly() {
        let log = TrialLog {
            records: (0..1000)
                .map(|i| {
                    record(
                        i,
                        0,
                        HiddenVariable::DiscreteIndex(0),
                        Outcome::PLUS,
                        Outcome::PLUS,
                    )
                })
                .collect(),
        };
        let report = lln_balance_check(&log).unwrap();
        // (1000 − 250) / sqrt(1000 · 3/16)
        assert!((report.max_abs_z - 750.0 / 187.5f64.sqrt()).abs() < 1e-9);
        assert!(report.max_abs_z > 50.0);
    }

    #[test]
    fn render_marks_factual_cells_in_counterfactual_rows() {
        let text = render_text(
            &build_reordered_table(&four_trial_log(), KeyMode::LambdaTime).unwrap(),
            10,
        );
        assert!(text.contains("*+1"));
        assert!(text.contains('?'));
        let text = render_text(
            &build_reordered_table(&four_trial_log(), KeyMode::LambdaOnly).unwrap(),
            10,
        );
        assert!(!text.contains('*'));
        assert!(text.contains("-2"));
    }

    #[test]
    fn key_mode_parses() {
        assert_eq!("lambda".parse::<KeyMode>().unwrap(), KeyMode::LambdaOnly);
        assert_eq!(
            "lambda-time".parse::<KeyMode>().unwrap(),
            KeyMode::LambdaTime
        );
        assert!("time".parse::<KeyMode>().is_err());
    }
}
