use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use bell_lab::oracle::{
    self, discretize, enumerate_deterministic_strategies, exact_chsh, exact_correlation,
    pair_dependent_overrides, quantum_chsh, singlet_correlation, OracleReport,
};
use bell_lab::simulate::{
    bell_statistic, estimate_correlations, run_experiment, simulate_chsh, BellStatistic,
    ModelFlags, SIGMA_BAND,
};
use bell_lab::tables::{
    build_reordered_table, lln_balance_check, render_text, row_sums, KeyMode, RowSumSummary,
};
use bell_lab::{
    log_io, CorrelationEstimate, HiddenVariableModel, LabError, ModelKind, Setting, TrialLog,
};
use num_rational::Rational64;
use serde_json::json;

use crate::config::{ExperimentConfig, QuadDegrees};
use crate::error::CliError;
use crate::report::SimulationReport;

pub const DEFAULT_REPORT: &str = "report.json";
pub const DEFAULT_TABLE: &str = "table.json";
pub const CONVERGENCE_FILE: &str = "delta_convergence.csv";
pub const ANGLE_CURVE_FILE: &str = "angle_correlation.csv";
const TABLE_PREVIEW_ROWS: usize = 12;

fn write_file(dir: &Path, rel: &Path, contents: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> Result<(), CliError> {
    out.write_all(text.as_ref().as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Δ and its standard error over growing prefixes of the log.
///
/// Checkpoints are 1, 2 and 5 times powers of ten, plus the full length;
/// prefixes where some pair has fewer than two trials are skipped.
pub fn convergence_csv(log: &TrialLog) -> String {
    let n = log.records.len() as u64;
    let mut checkpoints = Vec::new();
    let mut scale = 1u64;
    while scale <= n {
        for k in [1, 2, 5] {
            if let Some(c) = scale.checked_mul(k).filter(|c| *c < n) {
                checkpoints.push(c);
            }
        }
        scale = match scale.checked_mul(10) {
            Some(s) => s,
            None => break,
        };
    }
    checkpoints.push(n);

    let mut csv = String::from("n,delta,std_error\n");
    let mut sums = [0i64; 4];
    let mut counts = [0u64; 4];
    let mut next = 0;
    for (i, r) in log.records.iter().enumerate() {
        sums[r.pair_id] += r.product() as i64;
        counts[r.pair_id] += 1;
        if i as u64 + 1 != checkpoints[next] {
            continue;
        }
        next += 1;
        let est: Result<Vec<CorrelationEstimate>, _> = (0..4)
            .map(|p| CorrelationEstimate::from_product_sum(p, sums[p], counts[p]))
            .collect();
        if let Ok(est) = est {
            let stat = bell_lab::simulate::chsh_statistic(
                &[est[0], est[1], est[2], est[3]],
                ModelFlags::default(),
            );
            let _ = writeln!(csv, "{},{},{}", i + 1, stat.value, stat.std_error);
        }
        if next == checkpoints.len() {
            break;
        }
    }
    csv
}

pub fn cmd_simulate(
    config: &ExperimentConfig,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<SimulationReport, CliError> {
    let quad = config.quad();
    let log = run_experiment(&config.model, &quad, config.n_trials, config.seed.0)?;
    let estimates = estimate_correlations(&log)?;
    let stat = bell_lab::simulate::chsh_statistic(&estimates, ModelFlags::of(&config.model));
    let report = SimulationReport::new(config, &stat);

    let report_rel = config
        .outputs
        .report
        .clone()
        .unwrap_or(DEFAULT_REPORT.into());
    let report_path = write_file(out_dir, &report_rel, report.to_json().as_bytes())?;
    if let Some(rel) = &config.outputs.trial_log {
        let mut buf = Vec::new();
        log_io::write_csv(&log, &mut buf)?;
        write_file(out_dir, rel, &buf)?;
    }
    write_file(
        out_dir,
        Path::new(CONVERGENCE_FILE),
        convergence_csv(&log).as_bytes(),
    )?;

    let mut text = String::new();
    for e in &stat.per_pair {
        let _ = writeln!(
            text,
            "pair {}: E = {:+.6} ± {:.6} (n = {})",
            e.pair_id, e.mean, e.std_error, e.count
        );
    }
    let _ = writeln!(text, "Δ = {:.6} ± {:.6}", stat.value, stat.std_error);
    if stat.flags.setting_dependent_distribution {
        let _ = writeln!(
            text,
            "note: model uses a setting-dependent source distribution"
        );
    }
    let _ = writeln!(text, "report: {}", report_path.display());
    say(out, text)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Reference {
    /// Simulate the configured model.
    Model,
    /// Exact singlet correlations at the configured settings.
    Quantum,
}

fn verdict(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "VIOLATION"
    }
}

fn sigma(x: f64) -> String {
    if x.is_finite() {
        format!("{x:+.2}σ")
    } else if x > 0.0 {
        "+∞σ".into()
    } else {
        "−∞σ".into()
    }
}

fn chsh_line(value: f64, std_error: f64) -> String {
    let margin = 2.0 - value.abs();
    let margin_sigma = if std_error > 0.0 {
        margin / std_error
    } else if margin == 0.0 {
        0.0
    } else {
        margin.signum() * f64::INFINITY
    };
    let pass = value.abs() <= 2.0 + SIGMA_BAND * std_error;
    format!(
        "CHSH  |Δ| = {:.6} ± {:.6}, bound 2, margin {:+.6} ({}) ... {}\n",
        value.abs(),
        std_error,
        margin,
        sigma(margin_sigma),
        verdict(pass)
    )
}

fn bell_line(b: &BellStatistic) -> String {
    format!(
        "BELL  |E(a,b) − E(a,c)| = {:.6} ≤ 1 + E(b,c) = {:.6} ± {:.6}, margin {:+.6} ({}) ... {}\n",
        b.lhs,
        b.rhs,
        b.std_error,
        b.margin,
        sigma(b.margin_sigma()),
        verdict(b.holds())
    )
}

/// Verdicts for the CHSH and three-setting Bell forms. A violation is a
/// result; only failed premises and invalid input are errors.
pub fn cmd_check(
    config: &ExperimentConfig,
    reference: Reference,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let quad = config.quad();
    match reference {
        Reference::Quantum => {
            say(out, "reference: singlet correlations (exact)\n")?;
            say(out, chsh_line(quantum_chsh(&quad), 0.0))?;
            let exact = |pair_id, x: &Setting, y: &Setting| CorrelationEstimate {
                pair_id,
                mean: singlet_correlation(x, y),
                std_error: 0.0,
                count: 0,
            };
            let per_pair = [
                exact(0, &quad.a, &quad.b),
                exact(1, &quad.a, &quad.c),
                exact(2, &quad.b, &quad.c),
            ];
            let (lhs, rhs) = BellStatistic::from_correlations(
                per_pair[0].mean,
                per_pair[1].mean,
                per_pair[2].mean,
            );
            let b = BellStatistic {
                lhs,
                rhs,
                margin: rhs - lhs,
                std_error: 0.0,
                per_pair,
            };
            say(out, bell_line(&b))?;
        }
        Reference::Model => {
            say(
                out,
                format!(
                    "model: {}, N = {}\n",
                    config.model.kind.name(),
                    config.n_trials
                ),
            )?;
            let (_, stat) = simulate_chsh(&config.model, &quad, config.n_trials, config.seed.0)?;
            say(out, chsh_line(stat.value, stat.std_error))?;
            if stat.flags.setting_dependent_distribution {
                say(out, "note: source distribution depends on the setting pair; the local bound does not apply\n")?;
            }
            let b = bell_statistic(
                &config.model,
                quad.a,
                quad.b,
                quad.c,
                config.n_trials,
                config.seed.0,
            )?;
            say(out, bell_line(&b))?;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct TablesSummary {
    pub key_mode: KeyMode,
    pub n_trials: u64,
    pub complete_rows: u64,
    pub leftover_fraction: f64,
    pub row_sums: RowSumSummary,
    pub max_abs_z: Option<f64>,
}

pub fn cmd_tables(
    config: &ExperimentConfig,
    key_mode: KeyMode,
    out_dir: &Path,
    out: &mut dyn Write,
) -> Result<TablesSummary, CliError> {
    let log = run_experiment(
        &config.model,
        &config.quad(),
        config.n_trials,
        config.seed.0,
    )?;
    let table = build_reordered_table(&log, key_mode)?;
    let summary = RowSumSummary::from_sums(&row_sums(&table));
    let balance = if config.model.has_discrete_source() {
        Some(lln_balance_check(&log)?)
    } else {
        None
    };

    let mut text = String::new();
    let _ = writeln!(text, "key mode: {}", key_mode.name());
    let _ = writeln!(text, "trials: {}", table.n_trials);
    let _ = writeln!(text, "complete rows: {}", table.complete_rows);
    let _ = writeln!(
        text,
        "leftover trials: {} ({:.4}%)",
        table.leftover_trials,
        100.0 * table.leftover_fraction()
    );
    if summary.defined > 0 {
        let _ = writeln!(text, "row-sum histogram:");
        for (v, c) in &summary.histogram {
            let _ = writeln!(text, "  {v:+}: {c}");
        }
        if let (Some(m), Some(se)) = (summary.mean, summary.std_error) {
            let _ = writeln!(text, "mean row sum: {m:.6} ± {se:.6}");
        }
    }
    let _ = writeln!(text, "undefined row sums: {}", summary.undefined);
    match &balance {
        Some(b) => {
            let _ = writeln!(
                text,
                "balance check: max |z| = {:.3} over {} source values ({})",
                b.max_abs_z,
                b.per_key_pair_counts.len(),
                if b.max_abs_z <= SIGMA_BAND {
                    "ok"
                } else {
                    "unbalanced"
                }
            );
        }
        None => {
            let _ = writeln!(text, "balance check: skipped, continuous source");
        }
    }
    text.push('\n');
    text.push_str(&render_text(&table, TABLE_PREVIEW_ROWS));

    let rel = config.outputs.table.clone().unwrap_or(DEFAULT_TABLE.into());
    let json = serde_json::to_string(&table).map_err(|e| CliError::Io(e.to_string()))?;
    let path = write_file(out_dir, &rel, json.as_bytes())?;
    let _ = writeln!(text, "table: {}", path.display());
    say(out, text)?;

    Ok(TablesSummary {
        key_mode,
        n_trials: table.n_trials,
        complete_rows: table.complete_rows,
        leftover_fraction: table.leftover_fraction(),
        row_sums: summary,
        max_abs_z: balance.map(|b| b.max_abs_z),
    })
}

pub fn oracle_enumerate(m: usize, settings: usize) -> Result<OracleReport, CliError> {
    let bound = enumerate_deterministic_strategies::<Rational64>(settings, settings, m)?;
    let value = *bound.max_abs_chsh.numer() as f64 / *bound.max_abs_chsh.denom() as f64;
    Ok(OracleReport::new(
        "enumerate",
        &json!({ "m": m, "settings_per_station": settings }),
        value,
        json!({
            "max_abs_chsh_exact": bound.max_abs_chsh.to_string(),
            "log2_strategies": bound.log2_strategies,
            "strategy": bound.strategy,
        }),
    ))
}

pub fn oracle_exact(config: &ExperimentConfig) -> Result<OracleReport, CliError> {
    let quad = config.quad();
    let inputs = json!({ "model": config.model, "quad_degrees": config.quad });
    let pairs = quad.pairs();
    if config.model.kind == ModelKind::SettingPairDependent {
        let overrides = pair_dependent_overrides::<f64>(&quad)?;
        let value = exact_chsh(&overrides[0], &quad, Some(&overrides))?;
        let per_pair: Vec<f64> = pairs
            .iter()
            .zip(&overrides)
            .map(|(p, fm)| exact_correlation(fm, (p.first, p.second)))
            .collect::<Result<_, LabError>>()?;
        return Ok(OracleReport::new(
            "exact",
            &inputs,
            value,
            json!({ "per_pair": per_pair, "distribution": "one per setting pair" }),
        ));
    }
    let fm = discretize(&config.model, &[quad.a, quad.d], &[quad.b, quad.c])?;
    let value = exact_chsh(&fm, &quad, None)?;
    let per_pair: Vec<f64> = pairs
        .iter()
        .map(|p| exact_correlation(&fm, (p.first, p.second)))
        .collect::<Result<_, LabError>>()?;
    Ok(OracleReport::new(
        "exact",
        &inputs,
        value,
        json!({
            "per_pair": per_pair,
            "lambda_points": fm.lambda_count(),
            "grid": if config.model.has_discrete_source() { None } else { Some(oracle::DISCRETIZATION_GRID) },
            "distribution": "shared",
        }),
    ))
}

pub fn oracle_quantum(quad: QuadDegrees) -> OracleReport {
    let q = quad.to_quad();
    let per_pair: Vec<f64> = q
        .pairs()
        .iter()
        .map(|p| singlet_correlation(&p.first, &p.second))
        .collect();
    OracleReport::new(
        "quantum",
        &json!({ "quad_degrees": quad }),
        quantum_chsh(&q),
        json!({ "per_pair": per_pair, "local_bound": 2.0 }),
    )
}

/// Singlet and classical correlation against relative angle, 0° to 180°.
pub fn angle_correlation_csv() -> String {
    let mut csv = String::from("angle_deg,quantum,classical\n");
    let origin = Setting::from_degrees(0.0);
    for deg in 0..=180 {
        let s = Setting::from_degrees(deg as f64);
        let _ = writeln!(
            csv,
            "{deg},{},{}",
            singlet_correlation(&origin, &s),
            oracle::bell_linear_correlation(origin.relative_angle(&s))
        );
    }
    csv
}

pub fn write_oracle_report(
    report: &OracleReport,
    out_dir: Option<&Path>,
    out: &mut dyn Write,
) -> Result<(), CliError> {
    let mut json = serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?;
    json.push('\n');
    if let Some(dir) = out_dir {
        write_file(
            dir,
            Path::new(&format!("oracle_{}.json", report.operation)),
            json.as_bytes(),
        )?;
        if report.operation == "quantum" {
            write_file(
                dir,
                Path::new(ANGLE_CURVE_FILE),
                angle_correlation_csv().as_bytes(),
            )?;
        }
    }
    say(out, json)
}

pub fn parse_angles(text: &str) -> Result<QuadDegrees, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Config(format!("--angles: {e}")))?;
    match v[..] {
        [a, b, c, d] if v.iter().all(|x| x.is_finite()) => Ok(QuadDegrees { a, b, c, d }),
        _ => Err(CliError::Config(
            "--angles: expected four finite degrees a,b,c,d".into(),
        )),
    }
}

/// (0°, 45°, 135°, 90°).
pub fn canonical_degrees() -> QuadDegrees {
    QuadDegrees {
        a: 0.0,
        b: 45.0,
        c: 135.0,
        d: 90.0,
    }
}
