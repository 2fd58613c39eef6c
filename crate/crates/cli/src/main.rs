//! Command-line driver: one subcommand per experiment family, artifacts as
//! plot-ready CSV plus a manifest naming each file.
//!
//! Exit codes: 0 on success, 2 when a config or parameter fails validation,
//! 1 on runtime errors (IO, calibration, degenerate data).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pycra_core::export::{
    bin_class_csv, detect_report_csv, k_bound_csv, manifest_text, parse_scores_csv,
    qcd_scaling_csv, qcd_slope_csv, read_text, rfid_csv, roc_csv, spectro_csv, sweep_csv,
    trace_csv, track_csv, write_text,
};
use pycra_core::scenario::{
    parse_scenario_config, preset, run_scenario, ScenarioArtifacts, ScenarioConfig, PRESET_NAMES,
};
use pycra_core::sweep::{
    parse_qcd_config, parse_rfid_config, resilience_sweep, rfid_experiment, roc_curve, run_qcd,
    tau_sweep, QcdOutcome, RfidConfig, SweepReport,
};
use pycra_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "pycra",
    version,
    about = "Physical challenge-response sensor authentication simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the config's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory the artifact files are written into.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Override the trial count of sweep and Monte Carlo commands.
    #[arg(long, global = true)]
    trials: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and export its signal traces.
    Simulate { config: PathBuf },
    /// Run a scenario and export per-challenge detection verdicts.
    Detect { config: PathBuf },
    /// Run a scenario with the frequency-domain monitor and export the
    /// residual spectrogram and the secure frequency track.
    Resilient { config: PathBuf },
    /// Run a change-detection verification experiment (slope, scaling, or
    /// multi-challenge bound mode, chosen by the config).
    QcdVerify { config: PathBuf },
    /// Compute an ROC curve from a `score,label` CSV.
    Roc { scores: PathBuf },
    /// Run the RFID eavesdropper detectability study.
    Rfid { config: PathBuf },
    /// Materialize a named experiment recipe, run it, and write its
    /// artifacts plus a manifest under `<out-dir>/<name>/`.
    #[command(after_help = format!("recipes: {}", PRESET_NAMES.join(", ")))]
    Preset { name: String },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2u8 } else { 1u8 })
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate { config } => {
            let cfg = load_scenario(config, cli.seed)?;
            let art = run_scenario(&cfg)?;
            let anchor = stem(config);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            write_scenario_traces(&art, &mut man)?;
            man.finish()
        }
        Command::Detect { config } => {
            let cfg = load_scenario(config, cli.seed)?;
            let art = run_scenario(&cfg)?;
            let anchor = stem(config);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            write_detection(&cfg, &art, &mut man)?;
            man.finish()
        }
        Command::Resilient { config } => {
            let cfg = load_scenario(config, cli.seed)?;
            if !cfg.resilient_enabled {
                return Err(Error::Parameter(
                    "resilient command needs resilient.enabled = true in the config".into(),
                ));
            }
            let art = run_scenario(&cfg)?;
            let anchor = stem(config);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            write_resilience(&art, &mut man)?;
            write_detection(&cfg, &art, &mut man)?;
            man.finish()
        }
        Command::QcdVerify { config } => {
            let mut cfg = parse_qcd_config(&read_text(config)?)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(trials) = cli.trials {
                cfg.trials = trials;
            }
            let anchor = stem(config);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            match run_qcd(&cfg)? {
                QcdOutcome::Slope(report) => {
                    println!(
                        "reaction-probability slope over alpha: {:.4} (intercept {:.4})",
                        report.slope, report.intercept
                    );
                    man.write("qcd_slope.csv", &qcd_slope_csv(&report), "per-alpha reaction profile")?;
                }
                QcdOutcome::Scaling(arms) => {
                    let (b, s) = (&arms.base.delay_within[0], &arms.scaled.delay_within[0]);
                    println!(
                        "base arm P(delay <= {k}) = {:.4} [{:.4}, {:.4}]",
                        b.prob, b.ci.0, b.ci.1, k = arms.k
                    );
                    println!(
                        "scaled arm (amplitude / {beta}, slots x {bb}) = {:.4} [{:.4}, {:.4}]",
                        s.prob, s.ci.0, s.ci.1, beta = arms.beta, bb = arms.beta * arms.beta
                    );
                    man.write("qcd_scaling.csv", &qcd_scaling_csv(&arms), "amplitude/grid trade arms")?;
                }
                QcdOutcome::Bound { threshold, alpha, reports } => {
                    println!("calibrated threshold {threshold:.6} at per-challenge alpha {alpha}");
                    for r in &reports {
                        println!(
                            "K = {:>3}: detected {:.4} [{:.4}, {:.4}]  floor 1-(1-a)^K = {:.4}",
                            r.k, r.detected, r.detected_ci.0, r.detected_ci.1, r.bound
                        );
                    }
                    man.write("k_bound.csv", &k_bound_csv(&reports), "multi-challenge detection vs floor")?;
                }
            }
            man.finish()
        }
        Command::Roc { scores } => {
            let (s, l) = parse_scores_csv(&read_text(scores)?)?;
            let curve = roc_curve(&s, &l)?;
            println!("{} scores, AUC = {:.6}", s.len(), curve.auc);
            let anchor = stem(scores);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            man.write("roc.csv", &roc_csv(&curve), "threshold sweep of the score file")?;
            man.finish()
        }
        Command::Rfid { config } => {
            let cfg = load_rfid(config, cli.seed, cli.trials)?;
            let anchor = stem(config);
            let mut man = Manifest::new(&cli.out_dir, &anchor);
            run_rfid(&cfg, &mut man)?;
            man.finish()
        }
        Command::Preset { name } => run_preset(cli, name),
    }
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn load_scenario(path: &Path, seed: Option<u64>) -> Result<ScenarioConfig> {
    let mut cfg = parse_scenario_config(&read_text(path)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn load_rfid(path: &Path, seed: Option<u64>, trials: Option<u64>) -> Result<RfidConfig> {
    let mut cfg = parse_rfid_config(&read_text(path)?)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(trials) = trials {
        cfg.runs = trials as usize;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Collects (file, description) pairs while writing, then writes the
/// manifest naming them all.
struct Manifest {
    dir: PathBuf,
    anchor: String,
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(out_dir: &Path, anchor: &str) -> Self {
        Self { dir: out_dir.to_path_buf(), anchor: anchor.to_string(), entries: Vec::new() }
    }

    fn write(&mut self, file: &str, content: &str, description: &str) -> Result<()> {
        let path = self.dir.join(file);
        write_text(&path, content)?;
        println!("wrote {}", path.display());
        self.entries.push((file.to_string(), description.to_string()));
        Ok(())
    }

    fn finish(self) -> Result<()> {
        let path = self.dir.join("manifest.txt");
        write_text(&path, &manifest_text(&self.anchor, &self.entries))?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

fn write_scenario_traces(art: &ScenarioArtifacts, man: &mut Manifest) -> Result<()> {
    man.write("trace.csv", &trace_csv(&art.y), "sensor output")?;
    if let Some(attack) = &art.attack {
        man.write("attack.csv", &trace_csv(&attack.attack), "attacker signal at the pickup")?;
        man.write("attack_envelope.csv", &trace_csv(&attack.envelope), "attacker gating envelope")?;
    }
    man.write("schedule.txt", &art.schedule.to_text(), "challenge schedule")?;
    Ok(())
}

fn write_detection(cfg: &ScenarioConfig, art: &ScenarioArtifacts, man: &mut Manifest) -> Result<()> {
    let truth = vec![cfg.attacker_enabled; art.report.records.len()];
    let scored = art.report.records.iter().filter(|r| !r.skipped).count();
    println!(
        "challenges: {} scored, {} alarms, threshold {:.6}",
        scored,
        art.report.alarm_count(),
        art.alarm_threshold
    );
    for w in &art.report.warnings {
        eprintln!("warning: {w}");
    }
    man.write(
        "detect.csv",
        &detect_report_csv(&art.report.records, &truth)?,
        "per-challenge residual verdicts",
    )?;
    man.write("residual.csv", &trace_csv(&art.report.residual), "silence residual stream")?;
    Ok(())
}

fn write_resilience(art: &ScenarioArtifacts, man: &mut Manifest) -> Result<()> {
    let res = art
        .resilience
        .as_ref()
        .expect("caller checked resilient_enabled");
    let fresh = res.track.iter().filter(|p| p.fresh).count();
    println!(
        "frequency track: {} points ({} fresh), {} silent windows classified",
        res.track.len(),
        fresh,
        res.windows.len()
    );
    man.write("track.csv", &track_csv(&res.track), "secure frequency estimate over time")?;
    man.write("spectro.csv", &spectro_csv(&res.spectro), "residual spectrogram cells")?;
    Ok(())
}

fn run_rfid(cfg: &RfidConfig, man: &mut Manifest) -> Result<()> {
    let report = rfid_experiment(cfg)?;
    println!(
        "noise floor g = {:.6e}, alarm threshold {:.6e} ({}th percentile)",
        report.noise_g,
        report.threshold,
        (report.quantile * 100.0) as u32
    );
    for p in &report.points {
        println!(
            "kappa_eve = {:<7}: alarms {}/{} ({:.3}), displacement {:.2}x noise",
            p.kappa_eve, p.alarms, p.runs, p.alarm_rate, p.displacement_ratio
        );
    }
    man.write("rfid.csv", &rfid_csv(&report), "eavesdropper detectability grid")?;
    Ok(())
}

/// The tau grid a recipe sweeps, in seconds.
const FIG9_TAUS_10K: [f64; 6] = [0.0001, 0.0002, 0.0003, 0.0005, 0.0007, 0.001];
const FIG9_TAUS_30K: [f64; 3] = [0.0001, 0.00015, 0.0002];
const FIG10_TAUS: [f64; 4] = [0.0005, 0.001, 0.002, 0.005];

fn run_preset(cli: &Cli, name: &str) -> Result<()> {
    let dir = cli.out_dir.join(name);
    match name {
        "fig9" => {
            let mut cfg = preset(name)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let trials = cli.trials.unwrap_or(30) as usize;
            let mut man = Manifest::new(&dir, name);
            man.write("config.txt", &cfg.to_text(), "sweep base scenario")?;
            let mut report = tau_sweep(&cfg, &FIG9_TAUS_10K, trials)?;
            let mut hi = cfg.clone();
            hi.fs_hz *= 3.0;
            let fast = tau_sweep(&hi, &FIG9_TAUS_30K, trials)?;
            report.points.extend(fast.points);
            report.warnings.extend(fast.warnings);
            print_sweep(&report);
            man.write("sweep.csv", &sweep_csv(&report), "detection accuracy vs attacker lag")?;
            man.finish()
        }
        "fig10" => {
            let mut cfg = preset(name)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let trials = cli.trials.unwrap_or(5) as usize;
            let mut man = Manifest::new(&dir, name);
            man.write("config.txt", &cfg.to_text(), "bin-classification base scenario")?;
            let art = run_scenario(&cfg)?;
            write_resilience(&art, &mut man)?;
            let points = resilience_sweep(&cfg, &FIG10_TAUS, trials)?;
            for p in &points {
                println!(
                    "tau = {:>6}s: attacked-bin TPR {:.3} [{:.3}, {:.3}], FPR {:.4}",
                    p.tau_attack_s, p.tpr, p.tpr_ci.0, p.tpr_ci.1, p.fpr
                );
            }
            man.write("bin_class.csv", &bin_class_csv(&points), "attacked-bin hit rates vs lag")?;
            man.finish()
        }
        "fig14" => {
            let mut cfg = RfidConfig::default();
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            if let Some(trials) = cli.trials {
                cfg.runs = trials as usize;
            }
            cfg.validate()?;
            let mut man = Manifest::new(&dir, name);
            man.write("config.txt", &cfg.to_text(), "eavesdropper study parameters")?;
            run_rfid(&cfg, &mut man)?;
            man.finish()
        }
        // The remaining recipes are single scenario runs; which artifacts
        // they emit follows from what the config enables.
        _ => {
            let mut cfg = preset(name)?;
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let mut man = Manifest::new(&dir, name);
            man.write("config.txt", &cfg.to_text(), "scenario parameters")?;
            let art = run_scenario(&cfg)?;
            write_scenario_traces(&art, &mut man)?;
            write_detection(&cfg, &art, &mut man)?;
            if art.resilience.is_some() {
                write_resilience(&art, &mut man)?;
            }
            man.finish()
        }
    }
}

fn print_sweep(report: &SweepReport) {
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    for p in &report.points {
        println!(
            "fs = {:>5} Hz, tau = {:>7}s: accuracy {:.3}, F1 {:.3}, CI [{:.3}, {:.3}]",
            p.fs_hz, p.tau_attack_s, p.accuracy, p.f1, p.ci.0, p.ci.1
        );
    }
}
