use hecal::config::{Coupling, DeltaSource, ExperimentConfig, ToneConfig, WindowKind};
use hecal::output::{aggregate, write_aggregate, write_rows, write_sweep};
use hecal::{run_adcs, run_experiment, run_sweep, Algorithm, SweepKind};
use std::process::Command;

fn small(population: usize) -> ExperimentConfig {
    ExperimentConfig {
        population,
        seed: 11,
        ..ExperimentConfig::default()
    }
}

fn csv_bytes(rows: &[hecal::ResultRow]) -> Vec<u8> {
    let mut out = Vec::new();
    write_rows(&mut out, rows).unwrap();
    out
}

#[test]
fn empty_population_gives_header_only_csv() {
    let rows = run_experiment(&small(0)).unwrap();
    assert!(rows.is_empty());
    let text = String::from_utf8(csv_bytes(&rows)).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "# hecal-results v1");
    assert!(lines[1].starts_with("adc_id,seed,config_digest"));
}

#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let config = small(6);
    let a = csv_bytes(&run_experiment(&config).unwrap());
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let b = csv_bytes(&pool.install(|| run_experiment(&config)).unwrap());
    assert_eq!(a, b);
}

#[test]
fn removing_an_adc_leaves_the_others_unchanged() {
    let config = small(5);
    let full = run_experiment(&config).unwrap();
    let partial = run_adcs(&config, &[0, 2, 4]).unwrap();
    for row in &partial {
        let mut expected = full[row.adc_id].clone();
        expected.wall_clock = row.wall_clock;
        assert_eq!(*row, expected);
    }
}

#[test]
fn rows_are_sorted_and_carry_the_digest() {
    let config = small(5);
    let rows = run_experiment(&config).unwrap();
    let digest = config.digest().unwrap();
    for (i, r) in rows.iter().enumerate() {
        assert_eq!(r.adc_id, i);
        assert_eq!(r.config_digest, digest);
        assert_eq!(r.samples, 2000);
        assert!(r.post_sfdr_db > r.pre_sfdr_db + 20.0);
    }
}

#[test]
fn config_round_trips_through_toml() {
    let mut variants = vec![ExperimentConfig::default()];
    let mut c = small(7);
    c.snr_db = f64::INFINITY;
    c.eval_snr_db = 80.0;
    c.delta = DeltaSource::Fixed { value: -2.5e-3 };
    c.noise_coupling = Coupling::Held;
    c.window = WindowKind::BlackmanHarris;
    c.algorithm = Algorithm::BlhecSgd;
    c.ideal_stages = vec![0, 1, 2];
    c.mismatch.unit_bits = 0;
    c.tones = vec![
        ToneConfig {
            freq: 0.0942,
            amplitude: 0.45,
            phase: 0.3,
        },
        ToneConfig {
            freq: 0.11,
            amplitude: 0.45,
            phase: 0.0,
        },
    ];
    c.schedule.mu_nl_initial = 0.1 + 0.2;
    variants.push(c);
    for v in variants {
        let text = v.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, v, "{text}");
        assert_eq!(back.digest().unwrap(), v.digest().unwrap());
    }
}

/// Splits a simple CSV line; the harness never writes quoted fields.
fn fields(line: &str) -> Vec<&str> {
    line.split(',').collect()
}

#[test]
fn aggregate_matches_recomputation_from_row_file() {
    let mut config = small(6);
    config.delta = DeltaSource::Fixed { value: 0.0 };
    let points = run_sweep(
        SweepKind::Delta,
        &config,
        &[-1e-3, 0.0, 1e-3],
        &[Algorithm::HecWiener, Algorithm::BlhecWiener],
    )
    .unwrap();
    let mut rows_csv = Vec::new();
    write_sweep(&mut rows_csv, &points).unwrap();
    let mut agg_csv = Vec::new();
    write_aggregate(&mut agg_csv, &aggregate(&points)).unwrap();

    let rows_text = String::from_utf8(rows_csv).unwrap();
    let mut lines = rows_text.lines().skip(1);
    let header = fields(lines.next().unwrap());
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let data: Vec<Vec<&str>> = lines.map(fields).collect();

    let agg_text = String::from_utf8(agg_csv).unwrap();
    let mut checked = 0;
    for line in agg_text.lines().skip(2) {
        let f = fields(line);
        let (grid, algorithm, metric) = (f[1], f[2], f[3]);
        let values: Vec<f64> = data
            .iter()
            .filter(|r| r[col("grid_value")] == grid && r[col("algorithm")] == algorithm)
            .filter(|r| !r[col(metric)].is_empty())
            .map(|r| r[col(metric)].parse().unwrap())
            .collect();
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(f[4].parse::<usize>().unwrap(), values.len());
        assert!((f[5].parse::<f64>().unwrap() - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{line}");
        assert_eq!(f[6].parse::<f64>().unwrap(), min);
        assert_eq!(f[7].parse::<f64>().unwrap(), max);
        checked += 1;
    }
    // 3 grid points x (4 metrics for HEC + 5 for BL-HEC).
    assert_eq!(checked, 27);
}

#[test]
fn sweep_reuses_the_population() {
    let config = small(3);
    let points = run_sweep(SweepKind::Snr, &config, &[60.0, 80.0], &[Algorithm::HecWiener]).unwrap();
    assert_eq!(points.len(), 2);
    for (a, b) in points[0].rows.iter().zip(&points[1].rows) {
        assert_eq!(a.seed, b.seed);
        assert_eq!(a.pre_sfdr_db, b.pre_sfdr_db);
        assert_ne!(a.post_sfdr_db, b.post_sfdr_db);
    }
    assert!(run_sweep(SweepKind::Snr, &config, &[], &[Algorithm::HecWiener]).is_err());
}

#[test]
fn convergence_sweep_logs_error_norms() {
    let config = small(3);
    let wiener = run_sweep(SweepKind::Convergence, &config, &[2000.0], &[Algorithm::BlhecWiener]).unwrap();
    for r in &wiener[0].rows {
        assert_eq!(r.error_norm, Some(0.0));
    }
    let sgd = run_sweep(
        SweepKind::Convergence,
        &config,
        &[48_000.0, 4000.0, 24_000.0],
        &[Algorithm::BlhecSgd],
    )
    .unwrap();
    let values: Vec<f64> = sgd.iter().map(|p| p.value).collect();
    assert_eq!(values, vec![4000.0, 24_000.0, 48_000.0]);
    for i in 0..3 {
        let early = sgd[0].rows[i].error_norm.unwrap();
        let late = sgd[2].rows[i].error_norm.unwrap();
        assert!(late < early, "adc {i}: {early} -> {late}");
        assert_eq!(sgd[2].rows[i].samples, 48_000);
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_hecal")).args(args).output().unwrap()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();

    let ok = cli(&["calibrate", "--seed", "3", "--population", "2", "--out", out]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));
    assert!(dir.path().join("results.csv").exists());
    assert!(dir.path().join("results.timings.csv").exists());
    let saved = std::fs::read_to_string(dir.path().join("config.toml")).unwrap();
    assert_eq!(ExperimentConfig::from_toml(&saved).unwrap().seed, 3);

    assert_eq!(cli(&["calibrate", "--population", "2"]).status.code(), Some(2));
    let bad_q = cli(&["calibrate", "--seed", "3", "--q", "9", "--out", out]);
    assert_eq!(bad_q.status.code(), Some(2));

    // A small tone never reaches the outer codes, so the statistics are singular.
    let cfg = dir.path().join("weak.toml");
    std::fs::write(&cfg, "[[tones]]\nfreq = 0.1077\namplitude = 0.05\n").unwrap();
    let weak = cli(&["calibrate", "--seed", "3", "--population", "2", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(weak.status.code(), Some(3), "{}", String::from_utf8_lossy(&weak.stderr));
}

#[test]
fn cli_sweep_writes_aggregate() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let run = cli(&[
        "sweep", "--seed", "1", "--population", "2", "--kind", "delta", "--grid=-1e-3,1e-3", "--algorithms",
        "hec-wiener,blhec-wiener", "--out", out,
    ]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let agg = std::fs::read_to_string(dir.path().join("sweep-delta.aggregate.csv")).unwrap();
    assert!(agg.starts_with("# hecal-aggregate v1\nsweep,grid_value,algorithm,metric,count,mean,min,max\n"));
    assert_eq!(agg.lines().filter(|l| l.contains(",post_sfdr_db,")).count(), 4);

    let spec = dir.path().join("spectrum.csv");
    let sim = cli(&["simulate", "--seed", "1", "--spectrum", spec.to_str().unwrap()]);
    assert_eq!(sim.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(spec).unwrap().lines().count(), 2 + (1 << 13) + 1);
}
