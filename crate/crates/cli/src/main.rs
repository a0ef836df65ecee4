//! One binary tying the pipeline together: tube math, filtering,
//! enrollment, identification, the tube-dimension search, and the
//! validation studies. Exit codes are part of the contract: 0 on
//! success, 1 on domain errors, 2 on command-line misuse.

mod config;
mod selftest;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use voxtube::acoustics::{
    fundamental_frequency, quality_factor, resonance_profile_single, resonances_two_tube,
    Environment, ResonanceProfile, TubeSpec, TwoTubeSpec, DEFAULT_TEMPERATURE_K,
};
use voxtube::asi::{enroll, MfccConfig, SpeakerModel};
use voxtube::attack::{
    attack_target, confidence_gap_stats, consistency_rate, embedding_similarity_stats,
    write_attack_csv,
};
use voxtube::filterbank::BandPassFilterBank;
use voxtube::pitch::{pitch_shift_study, write_shift_csv};
use voxtube::signal::{read_wav, write_wav};
use voxtube::Result;

use config::{load_corpus, load_signals, load_wav_dir, require_dir, RunConfig};

#[derive(Parser)]
#[command(name = "voxtube", version, about = "Tube-resonance voice filtering and search")]
struct Cli {
    /// Cap the worker-thread count for parallel sections.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    jobs: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print a tube's fundamental, Q, and harmonic table.
    TubeInfo {
        /// Tube length in meters.
        #[arg(long)]
        length: f64,
        /// Inner diameter in meters.
        #[arg(long)]
        diameter: f64,
        /// Ambient temperature in kelvin.
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE_K)]
        temperature: f64,
        /// Upper frequency bound for the harmonic table.
        #[arg(long, default_value_t = 8000.0)]
        nyquist: f64,
    },
    /// Print the resonance roots of a two-tube assembly.
    TwoTube {
        /// First tube length in meters.
        #[arg(long)]
        l1: f64,
        /// First tube diameter in meters.
        #[arg(long)]
        d1: f64,
        /// Second tube length in meters.
        #[arg(long)]
        l2: f64,
        /// Second tube diameter in meters.
        #[arg(long)]
        d2: f64,
        /// Ambient temperature in kelvin.
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE_K)]
        temperature: f64,
        /// Upper frequency bound for the root scan.
        #[arg(long, default_value_t = 8000.0)]
        nyquist: f64,
    },
    /// Filter a WAV file through a tube's band-pass bank.
    Filter {
        /// Input WAV file.
        #[arg(long = "in")]
        input: PathBuf,
        /// Output WAV file.
        #[arg(long = "out")]
        output: PathBuf,
        /// Tube length in meters.
        #[arg(long)]
        length: f64,
        /// Inner diameter in meters.
        #[arg(long)]
        diameter: f64,
        /// Ambient temperature in kelvin.
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE_K)]
        temperature: f64,
    },
    /// Chirp self-test of a tube's bank; JSON report, exit 1 on FAIL.
    Validate {
        /// Tube length in meters.
        #[arg(long)]
        length: f64,
        /// Inner diameter in meters.
        #[arg(long)]
        diameter: f64,
        /// Ambient temperature in kelvin.
        #[arg(long, default_value_t = DEFAULT_TEMPERATURE_K)]
        temperature: f64,
        /// Sample rate of the synthesized sweep.
        #[arg(long, default_value_t = 16000)]
        sample_rate: u32,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Enroll a `<speaker>/<utt>.wav` corpus into a model file.
    Enroll {
        /// Corpus root directory.
        #[arg(long)]
        corpus: PathBuf,
        /// Destination model file.
        #[arg(long)]
        out: PathBuf,
        /// Run config supplying feature settings (flags win).
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Identify the speaker of a WAV file with an enrolled model.
    Identify {
        /// Enrolled model file.
        #[arg(long)]
        model: PathBuf,
        /// Utterance to classify.
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Search tube dimensions that make the oracle emit a target label.
    Attack {
        /// Run config naming the oracle, search space, and optimizer.
        #[arg(long)]
        config: PathBuf,
        /// Directory of attacker WAV files.
        #[arg(long)]
        attacker: PathBuf,
        /// Label the filtered audio should be identified as.
        #[arg(long)]
        target: String,
        /// Override the config's optimizer seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Batch studies over a corpus.
    #[command(subcommand)]
    Study(StudyCommand),
    /// Detection statistics from model outputs.
    #[command(subcommand)]
    Stats(StatsCommand),
}

#[derive(Subcommand)]
enum StudyCommand {
    /// Regress per-tube pitch shifts on tube dimensions.
    PitchShift {
        /// Run config naming the corpus and output directories.
        #[arg(long)]
        config: PathBuf,
        /// Tube as LENGTHxDIAMETER in meters (repeatable); default is
        /// the built-in six-tube reference set.
        #[arg(long = "tube", value_parser = parse_tube_dims)]
        tubes: Vec<(f64, f64)>,
        /// Override the config's output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Top-two score gap on clean versus adversarial utterances.
    ConfidenceGap {
        /// Enrolled model file.
        #[arg(long)]
        model: PathBuf,
        /// Directory of clean WAV files.
        #[arg(long)]
        clean: PathBuf,
        /// Directory of adversarial WAV files.
        #[arg(long)]
        adversarial: PathBuf,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Embedding cosine of attack audio to the victim versus others.
    Similarity {
        /// Enrolled model file.
        #[arg(long)]
        model: PathBuf,
        /// Directory of attack WAV files.
        #[arg(long)]
        attack: PathBuf,
        /// Victim label.
        #[arg(long)]
        victim: String,
        /// Comparison label (repeatable); default is every other
        /// enrolled label.
        #[arg(long = "nonvictim")]
        nonvictims: Vec<String>,
        /// Also write the report to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Percentage of positions where repeated runs agree.
    Consistency {
        /// JSON file holding an array of per-run label arrays.
        #[arg(long)]
        runs: PathBuf,
        /// Also write the summary to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_tube_dims(s: &str) -> std::result::Result<(f64, f64), String> {
    let (l, d) = s
        .split_once('x')
        .ok_or("expected LENGTHxDIAMETER in meters, e.g. 0.406x0.0345")?;
    let length: f64 = l.trim().parse().map_err(|e| format!("bad length: {e}"))?;
    let diameter: f64 = d.trim().parse().map_err(|e| format!("bad diameter: {e}"))?;
    Ok((length, diameter))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        // The global pool must exist before any parallel section spins up.
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs as usize)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::TubeInfo {
            length,
            diameter,
            temperature,
            nyquist,
        } => cmd_tube_info(length, diameter, temperature, nyquist)?,
        Command::TwoTube {
            l1,
            d1,
            l2,
            d2,
            temperature,
            nyquist,
        } => cmd_two_tube(l1, d1, l2, d2, temperature, nyquist)?,
        Command::Filter {
            input,
            output,
            length,
            diameter,
            temperature,
        } => cmd_filter(&input, &output, length, diameter, temperature)?,
        Command::Validate {
            length,
            diameter,
            temperature,
            sample_rate,
            out,
        } => return cmd_validate(length, diameter, temperature, sample_rate, out.as_deref()),
        Command::Enroll {
            corpus,
            out,
            config,
        } => cmd_enroll(&corpus, &out, config.as_deref())?,
        Command::Identify { model, input } => cmd_identify(&model, &input)?,
        Command::Attack {
            config,
            attacker,
            target,
            seed,
            out_dir,
        } => cmd_attack(&config, &attacker, &target, seed, out_dir)?,
        Command::Study(StudyCommand::PitchShift {
            config,
            tubes,
            out_dir,
        }) => cmd_study_pitch_shift(&config, &tubes, out_dir)?,
        Command::Stats(stats) => cmd_stats(stats)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn print_profile_table(profile: &ResonanceProfile) {
    println!("{:>4}  {:>10}  {:>8}", "i", "f_Hz", "Q");
    for (i, line) in profile.harmonics.iter().enumerate() {
        println!("{:>4}  {:>10.2}  {:>8.2}", i + 1, line.frequency_hz, line.q);
    }
}

fn cmd_tube_info(length: f64, diameter: f64, temperature: f64, nyquist: f64) -> Result<()> {
    let env = Environment::new(temperature)?;
    let tube = TubeSpec::new(length, diameter)?;
    let profile = resonance_profile_single(&tube, &env, nyquist)?;
    println!("tube: length {:.4} m, diameter {:.4} m", tube.length_m, tube.diameter_m);
    println!(
        "temperature: {:.1} K (speed of sound {:.1} m/s)",
        env.temperature_k,
        env.speed_of_sound()
    );
    println!("f0: {:.2} Hz", fundamental_frequency(&tube, &env));
    println!("Q0: {:.2}", quality_factor(&tube, &env));
    println!("harmonics below {nyquist:.0} Hz:");
    print_profile_table(&profile);
    Ok(())
}

fn cmd_two_tube(
    l1: f64,
    d1: f64,
    l2: f64,
    d2: f64,
    temperature: f64,
    nyquist: f64,
) -> Result<()> {
    let env = Environment::new(temperature)?;
    let spec = TwoTubeSpec::new(TubeSpec::new(l1, d1)?, TubeSpec::new(l2, d2)?)?;
    let profile = resonances_two_tube(&spec, &env, nyquist)?;
    if profile.is_empty() {
        println!("no roots below {nyquist:.0} Hz");
        return Ok(());
    }
    println!("roots below {nyquist:.0} Hz:");
    print_profile_table(&profile);
    Ok(())
}

fn cmd_filter(
    input: &Path,
    output: &Path,
    length: f64,
    diameter: f64,
    temperature: f64,
) -> Result<()> {
    let buf = read_wav(input)?;
    let env = Environment::new(temperature)?;
    let tube = TubeSpec::new(length, diameter)?;
    let profile = resonance_profile_single(&tube, &env, buf.sample_rate as f64 / 2.0)?;
    let bank = BandPassFilterBank::from_profile(&profile, buf.sample_rate)?;
    let filtered = bank.apply(&buf)?;
    write_wav(output, &filtered)?;
    println!(
        "wrote {} ({} samples at {} Hz)",
        output.display(),
        filtered.len(),
        filtered.sample_rate
    );
    Ok(())
}

fn cmd_validate(
    length: f64,
    diameter: f64,
    temperature: f64,
    sample_rate: u32,
    out: Option<&Path>,
) -> Result<ExitCode> {
    let env = Environment::new(temperature)?;
    let tube = TubeSpec::new(length, diameter)?;
    let report = selftest::run(&tube, &env, sample_rate)?;
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    print_json(&report)?;
    Ok(if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    })
}

fn cmd_enroll(corpus_dir: &Path, out: &Path, config: Option<&Path>) -> Result<()> {
    let corpus = load_corpus(corpus_dir)?;
    let configured = match config {
        Some(path) => RunConfig::load(path)?.mfcc,
        None => None,
    };
    let mfcc = match configured {
        Some(cfg) => cfg,
        None => {
            let rate = corpus
                .values()
                .next()
                .and_then(|utts| utts.first())
                .map(|buf| buf.sample_rate)
                .expect("load_corpus rejects empty corpora");
            MfccConfig::new(rate)?
        }
    };
    let enrollment = enroll(&corpus, &mfcc)?;
    for warning in &enrollment.warnings {
        eprintln!("warning: {warning}");
    }
    enrollment.model.save(out)?;
    let n_utts: usize = corpus.values().map(Vec::len).sum();
    println!(
        "enrolled {} speakers ({} utterances) -> {}",
        corpus.len(),
        n_utts,
        out.display()
    );
    Ok(())
}

fn cmd_identify(model_path: &Path, input: &Path) -> Result<()> {
    let model = SpeakerModel::load(model_path)?;
    let buf = read_wav(input)?;
    let (label, scores) = model.identify(&buf)?;
    print_json(&serde_json::json!({ "label": label, "scores": scores }))
}

/// File-name stem for a target label: anything outside [A-Za-z0-9_-]
/// becomes an underscore.
fn sanitize_label(label: &str) -> String {
    label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    let dir = match flag {
        Some(dir) => dir,
        None => cfg.paths()?.output_dir.clone(),
    };
    require_dir(&dir)?;
    Ok(dir)
}

fn cmd_attack(
    config: &Path,
    attacker: &Path,
    target: &str,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let env = cfg.environment();
    let mut de = cfg.de;
    if let Some(seed) = seed {
        de.rng_seed = seed;
    }
    let out_dir = resolve_out_dir(out_dir, &cfg)?;
    let oracle = cfg.build_oracle()?;
    let attacker_utts = load_wav_dir(attacker)?;
    let result = attack_target(
        &attacker_utts,
        target,
        oracle.as_ref(),
        &cfg.search_space,
        &de,
        &env,
    )?;
    let stem = sanitize_label(target);
    write_json(&out_dir.join(format!("attack_{stem}.json")), &result)?;
    let csv_file = File::create(out_dir.join(format!("attack_{stem}.csv")))?;
    write_attack_csv(std::iter::once(&result), csv_file)?;
    print_json(&result)
}

/// Built-in study set: six hardware-store tubes spanning the useful
/// resonance range.
fn reference_tubes() -> Vec<TubeSpec> {
    [
        (0.406, 0.0345),
        (0.613, 0.04),
        (0.87, 0.052),
        (0.994, 0.0345),
        (1.203, 0.052),
        (1.54, 0.052),
    ]
    .into_iter()
    .map(|(l, d)| TubeSpec::new(l, d).expect("static dims"))
    .collect()
}

fn cmd_study_pitch_shift(
    config: &Path,
    tube_dims: &[(f64, f64)],
    out_dir: Option<PathBuf>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let env = cfg.environment();
    let signals = load_signals(&cfg.paths()?.corpus_dir)?;
    let out_dir = resolve_out_dir(out_dir, &cfg)?;
    let tubes = if tube_dims.is_empty() {
        reference_tubes()
    } else {
        tube_dims
            .iter()
            .map(|&(l, d)| TubeSpec::new(l, d))
            .collect::<Result<_>>()?
    };
    let study = pitch_shift_study(&signals, &tubes, &env)?;
    write_json(&out_dir.join("pitch_shift_study.json"), &study.report)?;
    let csv_file = File::create(out_dir.join("pitch_shift_study.csv"))?;
    write_shift_csv(&study.observations, csv_file)?;
    print_json(&study.report)
}

#[derive(Serialize)]
struct ConsistencySummary {
    n_runs: usize,
    n_positions: usize,
    consistency_rate_percent: f64,
}

fn cmd_stats(stats: StatsCommand) -> Result<()> {
    match stats {
        StatsCommand::ConfidenceGap {
            model,
            clean,
            adversarial,
            out,
        } => {
            let model = SpeakerModel::load(&model)?;
            let clean_utts = load_wav_dir(&clean)?;
            let adversarial_utts = load_wav_dir(&adversarial)?;
            let report = confidence_gap_stats(&model, &clean_utts, &adversarial_utts)?;
            if let Some(path) = &out {
                write_json(path, &report)?;
            }
            print_json(&report)
        }
        StatsCommand::Similarity {
            model,
            attack,
            victim,
            nonvictims,
            out,
        } => {
            let model = SpeakerModel::load(&model)?;
            let utts = load_wav_dir(&attack)?;
            let nonvictims = if nonvictims.is_empty() {
                model
                    .labels
                    .iter()
                    .filter(|label| **label != victim)
                    .cloned()
                    .collect()
            } else {
                nonvictims
            };
            let report = embedding_similarity_stats(&model, &utts, &victim, &nonvictims)?;
            if let Some(path) = &out {
                write_json(path, &report)?;
            }
            print_json(&report)
        }
        StatsCommand::Consistency { runs, out } => {
            let text = std::fs::read_to_string(&runs)?;
            let parsed: Vec<Vec<String>> = serde_json::from_str(&text)?;
            let summary = ConsistencySummary {
                n_runs: parsed.len(),
                n_positions: parsed.first().map_or(0, Vec::len),
                consistency_rate_percent: consistency_rate(&parsed)?,
            };
            if let Some(path) = &out {
                write_json(path, &summary)?;
            }
            print_json(&summary)
        }
    }
}
