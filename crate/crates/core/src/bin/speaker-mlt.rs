use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use speaker_mlt::harness::{
    self, derive_seed, mean_report, synth_dataset, Condition, HarnessError, MetricsReport,
    RunConfig, SynthSpec, WorkDir,
};
use speaker_mlt::mlt::read_label_map;

#[derive(Parser)]
#[command(
    name = "speaker-mlt",
    version,
    about = "Multi-label training for speaker identification"
)]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "run.toml")]
    config: PathBuf,
    /// Overrides `[data] seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic speaker corpus, a noise bank and a config.
    SynthData(SynthArgs),
    /// Split the manifest into train/test and export the label map.
    Prepare,
    /// Train the speaker-ID network on clean features.
    TrainId,
    /// Train the enhancement network against the frozen speaker-ID network.
    TrainEnh,
    /// Evaluate the configured conditions and write the metrics report.
    Evaluate,
    /// Combine metrics reports into one table and plot-data file.
    Report(ReportArgs),
    /// Summarize a label map.
    InspectLabels {
        /// Label map to read (default: the one in the work directory).
        #[arg(long)]
        label_map: Option<PathBuf>,
    },
    /// prepare, train-id, train-enh and evaluate in one go.
    Run {
        /// Repeat with derived seeds and report the mean.
        #[arg(long, default_value_t = 1)]
        repeat: usize,
    },
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    speakers: usize,
    #[arg(long, default_value_t = 40)]
    utts: usize,
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    #[arg(long, default_value_t = 20.0)]
    noise_duration: f64,
}

#[derive(Args)]
struct ReportArgs {
    /// Metrics JSON files, one per model.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<HarnessError>()
                .map_or(1, HarnessError::exit_code);
            ExitCode::from(code as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.data.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::SynthData(args) => synth(args, cli.seed.unwrap_or(1)),
        Command::Prepare => {
            let cfg = load_config(&cli)?;
            let (train, test) = harness::prepare(&cfg)?;
            println!(
                "{} speakers: {} train, {} test utterances -> {}",
                train.num_speakers(),
                train.len(),
                test.len(),
                cfg.data.work_dir.display()
            );
            Ok(())
        }
        Command::TrainId => {
            let cfg = load_config(&cli)?;
            let losses = harness::run_train_id(&cfg)?;
            print_epochs(&losses);
            Ok(())
        }
        Command::TrainEnh => {
            let cfg = load_config(&cli)?;
            let losses = harness::run_train_enh(&cfg)?;
            print_epochs(&losses);
            Ok(())
        }
        Command::Evaluate => {
            let cfg = load_config(&cli)?;
            print!("{}", harness::run_evaluate(&cfg)?.to_table());
            Ok(())
        }
        Command::Report(args) => {
            let reports = args
                .inputs
                .iter()
                .map(MetricsReport::load)
                .collect::<Result<Vec<_>, _>>()?;
            let combined = MetricsReport::combine(&reports)?;
            harness::write_report(&combined, &WorkDir::new(&args.out))?;
            print!("{}", combined.to_table());
            Ok(())
        }
        Command::InspectLabels { label_map } => {
            let path = match label_map {
                Some(p) => p.clone(),
                None => WorkDir::new(&load_config(&cli)?.data.work_dir).label_map(),
            };
            inspect_labels(&path)
        }
        Command::Run { repeat } => {
            let cfg = load_config(&cli)?;
            run_repeated(&cfg, *repeat)
        }
    }
}

fn print_epochs(losses: &[harness::LossRecord]) {
    for (epoch, loss) in harness::epoch_means(losses).iter().enumerate() {
        println!("epoch {:>3}  loss {loss:.5}", epoch + 1);
    }
}

fn synth(args: &SynthArgs, seed: u64) -> Result<()> {
    let spec = SynthSpec {
        num_speakers: args.speakers,
        utts_per_speaker: args.utts,
        duration_s: args.duration,
        seed,
        noise_duration_s: args.noise_duration,
        ..SynthSpec::default()
    };
    let summary = synth_dataset(&spec, &args.out)?;
    let mut cfg = RunConfig::toy();
    cfg.data.seed = seed;
    cfg.data.manifest = PathBuf::from("manifest.csv");
    cfg.data.work_dir = PathBuf::from("work");
    for name in summary.noise_files.keys() {
        cfg.data
            .noise
            .insert(name.clone(), Path::new("noise").join(format!("{name}.wav")));
    }
    cfg.eval.conditions = vec![Condition::clean(false)];
    for name in summary.noise_files.keys() {
        for snr in [0.0, 10.0] {
            cfg.eval.conditions.push(Condition::noisy(name, snr, false));
            cfg.eval.conditions.push(Condition::noisy(name, snr, true));
        }
    }
    let cfg_path = args.out.join("run.toml");
    std::fs::write(&cfg_path, cfg.to_toml())
        .with_context(|| format!("writing {}", cfg_path.display()))?;
    println!(
        "{} utterances of {} speakers, {} noises; config in {}",
        summary.manifest.len(),
        summary.manifest.num_speakers(),
        summary.noise_files.len(),
        cfg_path.display()
    );
    Ok(())
}

fn inspect_labels(path: &Path) -> Result<()> {
    let rows = read_label_map(path).with_context(|| format!("reading {}", path.display()))?;
    if rows.is_empty() {
        bail!(HarnessError::Data(format!(
            "{} has no rows",
            path.display()
        )));
    }
    let subgroups = rows.iter().map(|r| r.subgroup).max().unwrap_or(0) + 1;
    let speakers = rows.iter().map(|r| r.speaker_index).max().unwrap_or(0) + 1;
    println!(
        "{speakers} speakers x {subgroups} subgroups = {} labels, {} utterances",
        speakers * subgroups,
        rows.len()
    );
    let mut counts = vec![vec![0usize; subgroups]; speakers];
    let mut names = vec![String::new(); speakers];
    for r in &rows {
        counts[r.speaker_index][r.subgroup] += 1;
        names[r.speaker_index] = r.speaker.clone();
    }
    let width = names.iter().map(String::len).max().unwrap_or(7).max(7);
    let header: Vec<String> = (0..subgroups).map(|m| format!("m{m}")).collect();
    println!(
        "{:>5}  {:<width$}  {}  aliases",
        "index",
        "speaker",
        header.join("  ")
    );
    for (s, c) in counts.iter().enumerate() {
        let cells: Vec<String> = c
            .iter()
            .zip(&header)
            .map(|(n, h)| format!("{n:>w$}", w = h.len()))
            .collect();
        let aliases: Vec<String> = (0..subgroups)
            .map(|m| (s + speakers * m).to_string())
            .collect();
        println!(
            "{s:>5}  {:<width$}  {}  {}",
            names[s],
            cells.join("  "),
            aliases.join(",")
        );
    }
    Ok(())
}

fn run_repeated(cfg: &RunConfig, repeat: usize) -> Result<()> {
    if repeat == 0 {
        bail!(HarnessError::Config("--repeat must be at least 1".into()));
    }
    if repeat == 1 {
        print!("{}", harness::run_all(cfg)?.to_table());
        return Ok(());
    }
    let mut reports = Vec::with_capacity(repeat);
    for i in 0..repeat {
        let mut rep = cfg.clone();
        if i > 0 {
            rep.data.seed = derive_seed(cfg.data.seed, &format!("repeat/{i}"));
        }
        rep.data.work_dir = cfg.data.work_dir.join(format!("repeat{i}"));
        eprintln!("repetition {}/{repeat} (seed {})", i + 1, rep.data.seed);
        reports.push(harness::run_all(&rep)?);
    }
    let mean = mean_report(&reports)?;
    harness::write_report(&mean, &WorkDir::new(&cfg.data.work_dir))?;
    print!("{}", mean.to_table());
    Ok(())
}
