//! CSV and JSON serialization of trial logs.
//!
//! CSV columns, in order: `index,t,pair_id,setting_1,setting_2,lambda,ip_1,ip_2,A,B`.
//! Settings and instrument parameters are written with the shortest decimal
//! that parses back to the same `f64`, so a reloaded log is bit-identical.
//! The `lambda` column is `idx:<i>` for a discrete source value and
//! `rad:<angle>` for a planar angle.

use std::io::{Read, Write};

use crate::error::{LabError, Result};
use crate::geometry::Outcome;
use crate::models::InstrumentParam;
use crate::simulate::{TrialLog, TrialRecord};
use crate::{HiddenVariable, Setting, TimeTag};

pub const CSV_HEADER: [&str; 10] = [
    "index",
    "t",
    "pair_id",
    "setting_1",
    "setting_2",
    "lambda",
    "ip_1",
    "ip_2",
    "A",
    "B",
];

fn csv_err(e: csv::Error) -> LabError {
    LabError::Log(e.to_string())
}

pub fn format_lambda(lambda: &HiddenVariable) -> String {
    match lambda {
        HiddenVariable::DiscreteIndex(i) => format!("idx:{i}"),
        HiddenVariable::PlanarAngle(theta) => format!("rad:{theta}"),
    }
}

pub fn parse_lambda(field: &str) -> Result<HiddenVariable> {
    if let Some(i) = field.strip_prefix("idx:") {
        i.parse()
            .map(HiddenVariable::DiscreteIndex)
            .map_err(|e| LabError::Log(format!("bad lambda {field:?}: {e}")))
    } else if let Some(theta) = field.strip_prefix("rad:") {
        theta
            .parse::<f64>()
            .map(HiddenVariable::angle)
            .map_err(|e| LabError::Log(format!("bad lambda {field:?}: {e}")))
    } else {
        Err(LabError::Log(format!(
            "bad lambda {field:?}: expected idx:<i> or rad:<angle>"
        )))
    }
}

pub fn write_csv<W: Write>(log: &TrialLog, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in &log.records {
        w.write_record([
            r.index.to_string(),
            r.t.0.to_string(),
            r.pair_id.to_string(),
            r.setting_1.radians().to_string(),
            r.setting_2.radians().to_string(),
            format_lambda(&r.lambda),
            r.ip_1.value().to_string(),
            r.ip_2.value().to_string(),
            r.a.value().to_string(),
            r.b.value().to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| LabError::Log(e.to_string()))
}

pub fn to_csv_string(log: &TrialLog) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(log, &mut buf)?;
    String::from_utf8(buf).map_err(|e| LabError::Log(e.to_string()))
}

fn field(rec: &csv::StringRecord, i: usize, line: u64) -> Result<&str> {
    rec.get(i)
        .ok_or_else(|| LabError::Log(format!("line {line}: missing column {}", CSV_HEADER[i])))
}

fn parse_num<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: u64) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let s = field(rec, i, line)?;
    s.parse()
        .map_err(|e| LabError::Log(format!("line {line}: column {}: {e}", CSV_HEADER[i])))
}

pub fn read_csv<R: Read>(reader: R) -> Result<TrialLog> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER.iter().copied()) {
        return Err(LabError::Log(format!(
            "unexpected CSV header {:?}, expected {:?}",
            header.iter().collect::<Vec<_>>(),
            CSV_HEADER
        )));
    }
    let mut records = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let line = k as u64 + 2;
        if rec.len() != CSV_HEADER.len() {
            return Err(LabError::Log(format!("line {line}: expected 10 columns")));
        }
        let outcome =
            |i| -> Result<Outcome> { Outcome::try_from(parse_num::<i32>(&rec, i, line)?) };
        let ip = |i| -> Result<InstrumentParam> {
            InstrumentParam::new(parse_num::<f64>(&rec, i, line)?)
        };
        records.push(TrialRecord {
            index: parse_num(&rec, 0, line)?,
            t: TimeTag(parse_num(&rec, 1, line)?),
            pair_id: parse_num(&rec, 2, line)?,
            setting_1: Setting::from_radians(parse_num(&rec, 3, line)?),
            setting_2: Setting::from_radians(parse_num(&rec, 4, line)?),
            lambda: parse_lambda(field(&rec, 5, line)?)?,
            ip_1: ip(6)?,
            ip_2: ip(7)?,
            a: outcome(8)?,
            b: outcome(9)?,
        });
    }
    let log = TrialLog { records };
    log.validate()?;
    Ok(log)
}

pub fn to_json_string(log: &TrialLog) -> Result<String> {
    serde_json::to_string_pretty(log).map_err(|e| LabError::Log(e.to_string()))
}

pub fn from_json_str(s: &str) -> Result<TrialLog> {
    let log: TrialLog = serde_json::from_str(s).map_err(|e| LabError::Log(e.to_string()))?;
    log.validate()?;
    Ok(log)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelSpec, SourceDistribution};
    use crate::simulate::run_experiment;
    use crate::SettingQuad;
    use proptest::prelude::*;

    #[test]
    fn header_order_is_fixed() {
        let log = run_experiment(
            &ModelSpec::bell_deterministic(SourceDistribution::UniformDiscrete { size: 4 }),
            &SettingQuad::canonical(),
            3,
            1,
        )
        .unwrap();
        let csv = to_csv_string(&log).unwrap();
        assert_eq!(
            csv.lines().next().unwrap(),
            "index,t,pair_id,setting_1,setting_2,lambda,ip_1,ip_2,A,B"
        );
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn rejects_bad_rows() {
        let header = CSV_HEADER.join(",");
        let bad_outcome = format!("{header}\n0,0,1,0,0.5,idx:1,0,0,2,1\n");
        assert!(read_csv(bad_outcome.as_bytes()).is_err());
        let bad_lambda = format!("{header}\n0,0,1,0,0.5,x1,0,0,1,1\n");
        assert!(read_csv(bad_lambda.as_bytes()).is_err());
        let repeated_t =
            format!("{header}\n0,3,1,0,0.5,idx:1,0,0,1,1\n1,3,1,0,0.5,idx:1,0,0,1,1\n");
        assert!(read_csv(repeated_t.as_bytes()).is_err());
        assert!(read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    fn any_spec() -> impl Strategy<Value = ModelSpec> {
        let source = prop_oneof![
            Just(SourceDistribution::UniformAngle),
            (1u32..40).prop_map(|size| SourceDistribution::UniformDiscrete { size }),
        ];
        (source, 0usize..4, 0.0f64..=1.0).prop_map(|(source, k, eps)| match k {
            0 => ModelSpec::bell_deterministic(source),
            1 => ModelSpec::factorizable(source, eps),
            2 => ModelSpec::time_tagged(source),
            _ => ModelSpec::setting_pair_dependent(source),
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn csv_and_json_reload_bit_identical(
            spec in any_spec(),
            angles in prop::array::uniform4(-720.0f64..720.0),
            seed in any::<u64>(),
            n in 1u64..200,
        ) {
            let quad = SettingQuad::from_degrees(angles[0], angles[1], angles[2], angles[3]);
            let log = run_experiment(&spec, &quad, n, seed).unwrap();
            let csv = to_csv_string(&log).unwrap();
            let back = read_csv(csv.as_bytes()).unwrap();
            prop_assert_eq!(&back, &log);
            prop_assert_eq!(to_csv_string(&back).unwrap(), csv);
            let json = to_json_string(&log).unwrap();
            prop_assert_eq!(from_json_str(&json).unwrap(), log);
        }
    }
}
