use clap::{Args, Parser, Subcommand};
use hecal::config::{Coupling, DeltaSource, ExperimentConfig};
use hecal::output::{self, to_file};
use hecal::run::{child_seed, Stream};
use hecal::{run_experiment, run_sweep, Algorithm, HarnessError, ResultRow, SweepKind, SweepPoint};
use hecal_core::adc::build_adc;
use hecal_core::signal::gen_tones;
use hecal_core::spectral::{analyze, bin_omega, coherent_bin, spectrum};
use hecal_core::ToneSpec;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "hecal", version, about = "Pipelined ADC calibration experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert the evaluation tone with one converter and report its metrics.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0)]
        adc_id: usize,
        /// Write the uncalibrated spectrum to this CSV file.
        #[arg(long)]
        spectrum: Option<PathBuf>,
    },
    /// Calibrate the population and write one row per converter.
    Calibrate {
        #[command(flatten)]
        common: Common,
    },
    /// Sweep alpha, SNR or delta for one or more algorithms.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = ["alpha", "snr", "delta"])]
        kind: String,
        /// Comma-separated grid values.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        grid: Vec<f64>,
        /// Comma-separated algorithms; defaults to the configured one.
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
    },
    /// Performance and parameter error versus calibration sample count.
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Comma-separated sample counts.
        #[arg(long, value_delimiter = ',', required = true)]
        grid: Vec<f64>,
        #[arg(long, value_delimiter = ',')]
        algorithms: Vec<String>,
    },
}

#[derive(Args)]
struct Common {
    /// Master seed.
    #[arg(long)]
    seed: u64,
    /// TOML config file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    algorithm: Option<String>,
    /// Number of calibrated stages.
    #[arg(long)]
    q: Option<usize>,
    /// Calibration SNR in dB (`inf` for none).
    #[arg(long)]
    snr: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Fixed scale mismatch instead of a random draw.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long)]
    delta_variance: Option<f64>,
    /// Sample budget of the selected algorithm.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_parser = ["independent", "held"])]
    coupling: Option<String>,
    /// Comma-separated stages forced ideal.
    #[arg(long, value_delimiter = ',')]
    ideal_stages: Option<Vec<usize>>,
}

fn parse_algorithm(s: &str) -> Result<Algorithm, HarnessError> {
    Algorithm::parse(s).ok_or_else(|| HarnessError::Config(format!("unknown algorithm {s}")))
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig, HarnessError> {
        let mut c = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
                    path: path.clone(),
                    source,
                })?;
                ExperimentConfig::from_toml(&text)?
            }
            None => ExperimentConfig::default(),
        };
        c.seed = self.seed;
        if let Some(v) = self.population {
            c.population = v;
        }
        if let Some(a) = &self.algorithm {
            c.algorithm = parse_algorithm(a)?;
        }
        if let Some(v) = self.q {
            c.calibrated_stages = v;
        }
        if let Some(v) = self.snr {
            c.snr_db = v;
        }
        if let Some(v) = self.alpha {
            c.alpha_digital = v;
        }
        if let Some(v) = self.delta_variance {
            c.delta = DeltaSource::Normal { variance: v };
        }
        if let Some(v) = self.delta {
            c.delta = DeltaSource::Fixed { value: v };
        }
        if let Some(v) = self.samples {
            match c.algorithm {
                Algorithm::BlhecSgd => c.sgd_samples = v,
                _ => c.wiener_samples = v,
            }
        }
        if let Some(v) = &self.coupling {
            c.noise_coupling = if v == "held" { Coupling::Held } else { Coupling::Independent };
        }
        if let Some(v) = &self.ideal_stages {
            c.ideal_stages = v.clone();
        }
        c.validate()?;
        Ok(c)
    }
}

fn mean(rows: &[ResultRow], f: impl Fn(&ResultRow) -> f64) -> f64 {
    rows.iter().map(f).sum::<f64>() / rows.len() as f64
}

fn save_config(dir: &Path, c: &ExperimentConfig) -> Result<(), HarnessError> {
    let text = c.to_toml()?;
    to_file(&dir.join("config.toml"), |w| std::io::Write::write_all(w, text.as_bytes()))
}

fn save_points(dir: &Path, name: &str, points: &[SweepPoint]) -> Result<(), HarnessError> {
    to_file(&dir.join(format!("{name}.csv")), |w| output::write_sweep(w, points))?;
    let agg = output::aggregate(points);
    to_file(&dir.join(format!("{name}.aggregate.csv")), |w| output::write_aggregate(w, &agg))?;
    let rows: Vec<ResultRow> = points.iter().flat_map(|p| p.rows.iter().cloned()).collect();
    to_file(&dir.join(format!("{name}.timings.csv")), |w| output::write_timings(w, &rows))?;
    for a in agg.iter().filter(|a| a.metric == "post_sfdr_db" || a.metric == "post_sndr_db") {
        println!(
            "{} {:>10} {:<13} {:<13} mean {:8.2} [{:.2}, {:.2}]",
            a.sweep,
            output::fmt_f64(a.grid_value),
            a.algorithm,
            a.metric,
            a.mean,
            a.min,
            a.max
        );
    }
    Ok(())
}

fn algorithms(names: &[String], c: &ExperimentConfig) -> Result<Vec<Algorithm>, HarnessError> {
    if names.is_empty() {
        return Ok(vec![c.algorithm]);
    }
    names.iter().map(|s| parse_algorithm(s)).collect()
}

fn simulate(c: &ExperimentConfig, adc_id: usize, dump: Option<&Path>) -> Result<(), HarnessError> {
    let num = |e: &dyn std::fmt::Display| HarnessError::Numerical {
        adc_id,
        message: e.to_string(),
    };
    let seed = child_seed(c.seed, adc_id, Stream::Mismatch);
    let arch = c.architecture();
    let mut adc = build_adc(&arch, c.mismatch.bounds(), seed).map_err(|e| HarnessError::Config(e.to_string()))?;
    if !c.ideal_stages.is_empty() {
        adc = adc.with_ideal_stages(&c.ideal_stages);
    }
    let bins: Vec<usize> = c.tones.iter().map(|t| coherent_bin(t.freq, c.n_fft)).collect();
    let tones = c
        .tones
        .iter()
        .zip(&bins)
        .map(|(t, &b)| ToneSpec::new(bin_omega(b, c.n_fft), t.amplitude, t.phase))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let x = gen_tones(&tones, c.n_fft).map_err(|e| HarnessError::Config(e.to_string()))?;
    let y: Vec<f64> = x.iter().map(|&v| adc.convert(v).output).collect();
    let s = spectrum(&y, &c.window.window(), c.n_fft).map_err(|e| num(&e))?;
    let r = analyze(&s, &bins).map_err(|e| num(&e))?;
    println!("adc {adc_id} seed {seed} ({} bits)", arch.resolution_bits());
    println!("beta {:.6}", adc.beta());
    for (i, g) in adc.mismatches().gain.iter().enumerate() {
        println!("stage {i}: gain error {g:+.3e}, dac errors {:?}", adc.mismatches().dac[i]);
    }
    println!("SFDR {:.2} dB, SNDR {:.2} dB, top spur at bin {}", r.sfdr_db, r.sndr_db, r.spur_bin);
    if let Some(path) = dump {
        to_file(path, |w| output::write_spectrum(w, &s))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Simulate {
            common,
            adc_id,
            spectrum,
        } => simulate(&common.config()?, adc_id, spectrum.as_deref()),
        Command::Calibrate { common } => {
            let c = common.config()?;
            let rows = run_experiment(&c)?;
            save_config(&common.out, &c)?;
            to_file(&common.out.join("results.csv"), |w| output::write_rows(w, &rows))?;
            to_file(&common.out.join("results.timings.csv"), |w| output::write_timings(w, &rows))?;
            if !rows.is_empty() {
                println!(
                    "{} ADCs, {}: SFDR {:.2} -> {:.2} dB, SNDR {:.2} -> {:.2} dB",
                    rows.len(),
                    c.algorithm.name(),
                    mean(&rows, |r| r.pre_sfdr_db),
                    mean(&rows, |r| r.post_sfdr_db),
                    mean(&rows, |r| r.pre_sndr_db),
                    mean(&rows, |r| r.post_sndr_db),
                );
            }
            Ok(())
        }
        Command::Sweep {
            common,
            kind,
            grid,
            algorithms: names,
        } => {
            let c = common.config()?;
            let kind = SweepKind::parse(&kind).expect("clap restricts the kind");
            let points = run_sweep(kind, &c, &grid, &algorithms(&names, &c)?)?;
            save_config(&common.out, &c)?;
            save_points(&common.out, &format!("sweep-{}", kind.name()), &points)
        }
        Command::Convergence {
            common,
            grid,
            algorithms: names,
        } => {
            let c = common.config()?;
            let points = run_sweep(SweepKind::Convergence, &c, &grid, &algorithms(&names, &c)?)?;
            save_config(&common.out, &c)?;
            save_points(&common.out, "convergence", &points)
        }
    }
}

fn main() -> ExitCode {
    // clap exits with code 2 on usage errors.
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
