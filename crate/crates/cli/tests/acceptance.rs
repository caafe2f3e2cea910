//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;

use bell_lab::models::{check_anticorrelation, time_flip};
use bell_lab::oracle::{
    bell_linear_correlation, enumerate_deterministic_strategies, exact_chsh,
    pair_dependent_overrides, quantum_chsh, FiniteModel,
};
use bell_lab::simulate::{estimate_correlations, run_experiment, simulate_chsh, SIGMA_BAND};
use bell_lab::tables::{
    build_reordered_table, lln_balance_check, row_sums, KeyMode, RowSum, RowSumSummary,
};
use bell_lab::{
    row_identity, row_sum, LabError, ModelSpec, Outcome, Setting, SettingQuad, SourceDistribution,
};
use bell_lab_cli::commands::cmd_simulate;
use bell_lab_cli::config::{ExperimentConfig, Outputs, QuadDegrees, Seed};
use bell_lab_cli::CliError;
use num_rational::Rational64;
use rand::{Rng, SeedableRng};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

const PM: [Outcome; 2] = [Outcome::PLUS, Outcome::MINUS];

fn row_identity_exhaustive() -> Verdict {
    let mut n = 0;
    for x in PM {
        for y in PM {
            for z in PM {
                let (lhs, rhs) = row_identity(x, y, z);
                let (xi, yi, zi) = (x.as_i8() as i32, y.as_i8() as i32, z.as_i8() as i32);
                ensure(lhs == rhs, format!("fails at ({xi},{yi},{zi})"))?;
                ensure(
                    lhs == (xi * zi - yi * zi).abs() && rhs == 1 - xi * yi,
                    "library arithmetic disagrees",
                )?;
                n += 1;
            }
        }
    }
    Ok(format!("|xz − yz| = 1 − xy on all {n} triples"))
}

fn row_sum_exhaustive() -> Verdict {
    let mut n = 0;
    for a in PM {
        for d in PM {
            for b in PM {
                for c in PM {
                    let s = row_sum(a, d, b, c);
                    ensure(s == 2 || s == -2, format!("row sum {s}"))?;
                    n += 1;
                }
            }
        }
    }
    Ok(format!("{n} tuples, all ±2"))
}

fn random_model(rng: &mut impl Rng, quad: &SettingQuad) -> FiniteModel<f64> {
    let m = rng.gen_range(1..=6);
    let normalized = |rng: &mut dyn rand::RngCore, k: usize| {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.01..1.0)).collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|x| x / total).collect::<Vec<f64>>()
    };
    let lambda_weights = normalized(rng, m);
    let ip = |rng: &mut dyn rand::RngCore| -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| {
                let k = rng.gen_range(1..=3);
                normalized(rng, k)
            })
            .collect()
    };
    let ip_weights_1 = ip(rng);
    let ip_weights_2 = ip(rng);
    let detector = |rng: &mut dyn rand::RngCore, ipw: &[Vec<f64>]| -> Vec<Vec<Vec<Outcome>>> {
        (0..2)
            .map(|_| {
                ipw.iter()
                    .map(|w| w.iter().map(|_| Outcome::from_bool(rng.gen())).collect())
                    .collect()
            })
            .collect()
    };
    let detector_1 = detector(rng, &ip_weights_1);
    let detector_2 = detector(rng, &ip_weights_2);
    FiniteModel {
        lambda_weights,
        settings_1: vec![quad.a, quad.d],
        settings_2: vec![quad.b, quad.c],
        ip_weights_1,
        ip_weights_2,
        detector_1,
        detector_2,
    }
}

fn bell_bound_certificate() -> Verdict {
    for m in [1, 2, 4, 8] {
        let bound =
            enumerate_deterministic_strategies::<Rational64>(2, 2, m).map_err(|e| e.to_string())?;
        ensure(
            bound.max_abs_chsh == Rational64::from_integer(2),
            format!("m = {m}: max {}", bound.max_abs_chsh),
        )?;
    }
    let mut rng = rand::rngs::StdRng::seed_from_u64(1964);
    let mut worst = f64::MIN;
    for _ in 0..1000 {
        let deg: [f64; 4] = std::array::from_fn(|_| rng.gen_range(0.0..360.0));
        let quad = SettingQuad::from_degrees(deg[0], deg[1], deg[2], deg[3]);
        let fm = random_model(&mut rng, &quad);
        let v = exact_chsh(&fm, &quad, None).map_err(|e| e.to_string())?;
        worst = worst.max(v.abs());
        ensure(v.abs() <= 2.0 + 1e-12, format!("random model reached {v}"))?;
    }
    Ok(format!(
        "enumeration max |Δ| = 2 for m ∈ {{1,2,4,8}}; 1000 random models, largest |Δ| = {worst:.6}"
    ))
}

fn pair_config(n_trials: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        n_trials,
        seed: Seed(seed),
        model: ModelSpec::setting_pair_dependent(SourceDistribution::UniformDiscrete { size: 4 }),
        quad: QuadDegrees {
            a: 0.0,
            b: 45.0,
            c: 135.0,
            d: 90.0,
        },
        outputs: Outputs::default(),
    }
}

fn column_escape() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut runs = 0;
    let mut thin = 0;
    for n in (4..=40).chain([100, 1000, 100_000]) {
        for seed in 0..8 {
            let config = pair_config(n, seed);
            let log = run_experiment(&config.model, &config.quad(), n, seed)
                .map_err(|e| e.to_string())?;
            let mut counts = [0u64; 4];
            log.records.iter().for_each(|r| counts[r.pair_id] += 1);
            if counts.contains(&0) {
                continue;
            }
            match cmd_simulate(&config, dir.path(), &mut std::io::sink()) {
                Ok(report) => {
                    ensure(
                        report.chsh.value == 4.0 && report.chsh.std_error == 0.0,
                        format!(
                            "N = {n}: Δ = {} ± {}",
                            report.chsh.value, report.chsh.std_error
                        ),
                    )?;
                    ensure(report.flags.setting_dependent_distribution, "flag not set")?;
                    runs += 1;
                }
                Err(CliError::Lab(LabError::InsufficientData { .. })) if counts.contains(&1) => {
                    thin += 1
                }
                Err(e) => return Err(format!("N = {n}: {e}")),
            }
        }
    }
    ensure(runs > 0, "no run had every pair sampled twice")?;
    let quad = SettingQuad::canonical();
    let overrides = pair_dependent_overrides::<Rational64>(&quad).map_err(|e| e.to_string())?;
    let exact = exact_chsh(&overrides[0], &quad, Some(&overrides)).map_err(|e| e.to_string())?;
    ensure(
        exact == Rational64::from_integer(4),
        format!("exact Δ = {exact}"),
    )?;
    Ok(format!(
        "Δ = 4 ± 0 in {runs} simulate runs (N from 4 to 10⁵); exact Δ = 4; \
         {thin} runs with a once-sampled pair have no standard error and report InsufficientData"
    ))
}

fn classical_calibration() -> Verdict {
    let spec = ModelSpec::bell_deterministic(SourceDistribution::UniformAngle);
    let mut parts = Vec::new();
    for k in 0..=4 {
        let deg = 45.0 * k as f64;
        let quad = SettingQuad::from_degrees(0.0, deg, deg, 0.0);
        let log = run_experiment(&spec, &quad, 1_000_000, 500 + k).map_err(|e| e.to_string())?;
        let e = estimate_correlations(&log).map_err(|e| e.to_string())?[1];
        let expected = bell_linear_correlation(deg.to_radians());
        ensure(
            (e.mean - expected).abs() <= SIGMA_BAND * e.std_error,
            format!(
                "θ = {deg}°: E = {} ± {}, expected {expected}",
                e.mean, e.std_error
            ),
        )?;
        if k == 0 {
            ensure(
                e.mean == -1.0 && e.std_error == 0.0,
                format!("θ = 0: E = {}", e.mean),
            )?;
        }
        parts.push(format!("{deg}°: {:+.4}", e.mean));
    }
    Ok(parts.join(", "))
}

fn time_dependent_anticorrelation() -> Verdict {
    let spec = ModelSpec::time_tagged(SourceDistribution::UniformAngle);
    let settings: Vec<Setting> = (0..8)
        .map(|k| Setting::from_degrees(45.0 * k as f64))
        .collect();
    let report = check_anticorrelation(&spec, &settings, 100_000, 77).map_err(|e| e.to_string())?;
    ensure(
        report.violations == 0,
        format!("{} violations", report.violations),
    )?;
    let log =
        run_experiment(&spec, &SettingQuad::canonical(), 1000, 77).map_err(|e| e.to_string())?;
    let flips: std::collections::BTreeSet<i8> = log
        .records
        .iter()
        .flat_map(|r| [time_flip(r.ip_1).as_i8(), time_flip(r.ip_2).as_i8()])
        .collect();
    ensure(flips.len() >= 2, "instrument flip is constant")?;
    Ok(format!(
        "0 of {} equal-setting trials violate A = −B; {} distinct flip values",
        report.trials,
        flips.len()
    ))
}

fn quantum_reference() -> Verdict {
    let q = quantum_chsh(&SettingQuad::canonical());
    ensure(
        (q - 2.0 * std::f64::consts::SQRT_2).abs() <= 1e-12,
        format!("Δ_QM = {q}"),
    )?;
    let local =
        enumerate_deterministic_strategies::<Rational64>(2, 2, 8).map_err(|e| e.to_string())?;
    let local = *local.max_abs_chsh.numer() as f64 / *local.max_abs_chsh.denom() as f64;
    ensure(q > local, "quantum value within local bound")?;
    Ok(format!("Δ_QM = {q:.15} > {local}"))
}

fn reordering() -> Verdict {
    let spec = ModelSpec::bell_deterministic(SourceDistribution::UniformDiscrete { size: 16 });
    let quad = SettingQuad::canonical();
    let n = 100_000;
    let (log, stat) = simulate_chsh(&spec, &quad, n, 8).map_err(|e| e.to_string())?;
    let table = build_reordered_table(&log, KeyMode::LambdaOnly).map_err(|e| e.to_string())?;
    let frac = table.leftover_fraction();
    ensure(frac <= 0.05, format!("leftover fraction {frac}"))?;
    let summary = RowSumSummary::from_sums(&row_sums(&table));
    ensure(
        summary.defined == table.complete_rows,
        "defined sums differ from complete rows",
    )?;
    ensure(
        summary.all_plus_minus_two(),
        format!("histogram {:?}", summary.histogram),
    )?;
    let mean = summary.mean.ok_or("no complete rows")?;
    let sigma = (stat.std_error.powi(2) + summary.std_error.unwrap_or(0.0).powi(2)).sqrt();
    ensure(
        (mean - stat.value).abs() <= SIGMA_BAND * sigma,
        format!("row mean {mean} vs Δ {} (σ {sigma})", stat.value),
    )?;
    let z = lln_balance_check(&log)
        .map_err(|e| e.to_string())?
        .max_abs_z;
    ensure(z <= SIGMA_BAND, format!("max |z| = {z}"))?;
    Ok(format!(
        "leftover {:.2}%, {} rows all ±2, row mean {mean:.4} vs Δ {:.4}, max |z| {z:.2}",
        100.0 * frac,
        table.complete_rows,
        stat.value
    ))
}

fn obstruction() -> Verdict {
    let quad = SettingQuad::canonical();
    let mut specs = Vec::new();
    for source in [
        SourceDistribution::UniformDiscrete { size: 16 },
        SourceDistribution::UniformAngle,
    ] {
        specs.push(ModelSpec::bell_deterministic(source.clone()));
        specs.push(ModelSpec::factorizable(source.clone(), 0.3));
        specs.push(ModelSpec::time_tagged(source.clone()));
        specs.push(ModelSpec::setting_pair_dependent(source));
    }
    let mut tables = 0;
    for spec in &specs {
        for n in [1, 1_000, 100_000] {
            let log = run_experiment(spec, &quad, n, n ^ 0x5eed).map_err(|e| e.to_string())?;
            let table =
                build_reordered_table(&log, KeyMode::LambdaTime).map_err(|e| e.to_string())?;
            ensure(
                table.complete_rows == 0,
                format!(
                    "{:?} N = {n}: {} complete rows",
                    spec.kind, table.complete_rows
                ),
            )?;
            let sums = row_sums(&table);
            ensure(
                sums.iter().all(|s| *s == RowSum::Undefined),
                "defined row sum under time keys",
            )?;
            let summary = RowSumSummary::from_sums(&sums);
            ensure(
                summary.defined == 0 && summary.mean.is_none(),
                "summary produced a number",
            )?;
            tables += 1;
        }
    }
    // Numeric use of RowSum::Undefined is rejected at compile time (compile_fail doctests on RowSum).
    ensure(
        RowSum::Undefined.as_defined().is_none(),
        "Undefined converted to a number",
    )?;
    Ok(format!(
        "{tables} tables over 4 model families, 0 complete rows, all sums Undefined"
    ))
}

fn run_simulate(config: &Path, out: &Path, threads: usize) -> Result<(Vec<u8>, Vec<u8>), String> {
    let o = Command::new(env!("CARGO_BIN_EXE_bell-lab"))
        .args(["simulate", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("BELL_LAB_THREADS", threads.to_string())
        .output()
        .map_err(|e| e.to_string())?;
    ensure(o.status.success(), String::from_utf8_lossy(&o.stderr))?;
    let read = |name| std::fs::read(out.join(name)).map_err(|e| e.to_string());
    Ok((read("report.json")?, read("trials.csv")?))
}

fn reproducibility() -> Verdict {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = ExperimentConfig {
        n_trials: 50_000,
        seed: Seed(u64::MAX - 12),
        model: ModelSpec::factorizable(SourceDistribution::UniformAngle, 0.2),
        quad: QuadDegrees {
            a: 0.0,
            b: 22.5,
            c: 67.5,
            d: 45.0,
        },
        outputs: Outputs {
            trial_log: Some("trials.csv".into()),
            ..Outputs::default()
        },
    };
    let path = dir.path().join("config.toml");
    std::fs::write(&path, config.to_toml()).map_err(|e| e.to_string())?;
    let many = std::thread::available_parallelism()
        .map_or(4, |n| n.get())
        .max(4);
    let mut outputs = Vec::new();
    for (k, threads) in [1, 1, many, many].into_iter().enumerate() {
        outputs.push(run_simulate(
            &path,
            &dir.path().join(format!("run{k}")),
            threads,
        )?);
    }
    ensure(
        outputs.iter().all(|o| *o == outputs[0]),
        "outputs differ between runs",
    )?;
    Ok(format!(
        "report ({} B) and CSV log ({} B) byte-identical over 2 runs at 1 thread and 2 at {many}",
        outputs[0].0.len(),
        outputs[0].1.len()
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("row identity", row_identity_exhaustive),
        ("row sum", row_sum_exhaustive),
        ("local bound certificate", bell_bound_certificate),
        ("setting-pair-dependent escape", column_escape),
        ("classical calibration", classical_calibration),
        (
            "anticorrelation with time-dependent instruments",
            time_dependent_anticorrelation,
        ),
        ("quantum reference", quantum_reference),
        ("reordering", reordering),
        ("time-keyed obstruction", obstruction),
        ("reproducibility", reproducibility),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .unwrap_or_else(|| "panicked".into()))
        });
        match verdict {
            Ok(detail) => println!("PASS [{}] {name}: {detail}", k + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL [{}] {name}: {why}", k + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
