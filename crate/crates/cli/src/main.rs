//! `qdarray` command-line front end.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use qdarray::extraction::load_report;
use qdarray::model::load_sample;
use qdarray::pipeline::{
    extract_campaign, load_campaign, load_pipeline_config, measure_configured, run_pipeline, save_campaign, summarize,
    synth_samples, write_extraction, write_sample, write_stats, ExtractConfig, Layout, PipelineConfig, StatsConfig,
    StudyReport, CAMPAIGNS_DIR, EXTRACTION_DIR, MANIFEST_FILE, SAMPLES_DIR,
};
use qdarray::statistics::GateFamily;
use qdarray::{Error, ErrorClass};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    /// CSV tables and a summary on stdout.
    Table,
    /// Tables plus SVG plots.
    VectorPlot,
}

#[derive(Debug, Parser)]
#[command(name = "qdarray", version)]
#[command(about = "Simulate and characterize dense quantum-dot arrays")]
struct Cli {
    /// Study configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory. Overrides `out` from the configuration; defaults to `out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Master seed. Overrides `seed` from the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[arg(long, global = true, value_enum, default_value = "table")]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize every configured sample into <out>/samples.
    Synth,
    /// Run the measurement protocol on sample files (default: <out>/samples/*.json).
    Measure { samples: Vec<PathBuf> },
    /// Extract per-dot parameters from campaign directories (default: <out>/campaigns/*).
    Extract { campaigns: Vec<PathBuf> },
    /// Array statistics from extraction reports (default: <out>/extraction/*.json).
    Stats { reports: Vec<PathBuf> },
    /// synth, measure, extract and stats in one go.
    Pipeline,
}

#[derive(Debug)]
struct Failure {
    class: ErrorClass,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            class: e.class(),
            msg: e.to_string(),
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure {
        class: ErrorClass::Usage,
        msg: msg.into(),
    }
}

type CliResult<T> = Result<T, Failure>;

fn exit_code(class: ErrorClass) -> u8 {
    match class {
        ErrorClass::Usage => 2,
        ErrorClass::Data => 3,
        ErrorClass::Fit => 4,
    }
}

impl Cli {
    fn load_config(&self) -> CliResult<PipelineConfig> {
        let path = self
            .config
            .as_deref()
            .ok_or_else(|| usage("this command needs --config"))?;
        // an unreadable or malformed configuration is a usage error
        let mut cfg = load_pipeline_config(path).map_err(|e| usage(e.to_string()))?;
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn optional_config(&self) -> CliResult<Option<PipelineConfig>> {
        self.config.as_ref().map(|_| self.load_config()).transpose()
    }

    fn layout(&self, cfg: Option<&PipelineConfig>) -> Layout {
        let root = self
            .out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out.as_ref()).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"));
        Layout::new(root)
    }

    fn plots(&self) -> bool {
        self.format == Format::VectorPlot
    }
}

/// Sorted entries of `dir` accepted by `keep`; a missing directory is empty.
fn list(dir: &Path, keep: impl Fn(&Path) -> bool) -> CliResult<Vec<PathBuf>> {
    let entries = match std::fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => {
            return Err(Error::Io {
                path: dir.into(),
                source: e,
            }
            .into())
        }
    };
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| keep(p))
        .collect();
    out.sort();
    Ok(out)
}

fn is_json(p: &Path) -> bool {
    p.extension().is_some_and(|e| e == "json")
}

fn cmd_synth(cli: &Cli) -> CliResult<()> {
    let cfg = cli.load_config()?;
    let layout = cli.layout(Some(&cfg));
    for s in synth_samples(&cfg)? {
        write_sample(&layout, &s)?;
        eprintln!("synth: {}", layout.sample(&s.label).display());
    }
    Ok(())
}

fn cmd_measure(cli: &Cli, samples: &[PathBuf]) -> CliResult<()> {
    let cfg = cli.load_config()?;
    let layout = cli.layout(Some(&cfg));
    let paths = if samples.is_empty() {
        list(&layout.root.join(SAMPLES_DIR), is_json)?
    } else {
        samples.to_vec()
    };
    if paths.is_empty() {
        return Err(usage(format!(
            "no sample files given and none in {}",
            layout.root.join(SAMPLES_DIR).display()
        )));
    }
    for p in &paths {
        let sample = load_sample(p)?;
        let campaign = measure_configured(&cfg, &sample)?;
        let dir = layout.campaign(&sample.label);
        save_campaign(&campaign, &dir)?;
        eprintln!("measure: {} ({} records)", dir.display(), campaign.records.len());
    }
    Ok(())
}

fn cmd_extract(cli: &Cli, campaigns: &[PathBuf]) -> CliResult<()> {
    let cfg = cli.optional_config()?;
    let layout = cli.layout(cfg.as_ref());
    let ecfg = cfg
        .as_ref()
        .map(|c| c.extraction)
        .unwrap_or_else(ExtractConfig::default);
    let dirs = if campaigns.is_empty() {
        list(&layout.root.join(CAMPAIGNS_DIR), |p| p.join(MANIFEST_FILE).is_file())?
    } else {
        campaigns.to_vec()
    };
    if dirs.is_empty() {
        return Err(usage(format!(
            "no measurement records: no campaign directories given and none in {}",
            layout.root.join(CAMPAIGNS_DIR).display()
        )));
    }
    for d in &dirs {
        let campaign = load_campaign(d)?;
        if campaign.records.is_empty() {
            return Err(usage(format!("{}: campaign has no records", d.display())));
        }
        let report = extract_campaign(&campaign, &ecfg)?;
        write_extraction(&layout, &report)?;
        eprintln!("extract: {}", layout.extraction(&report.sample_label).display());
    }
    Ok(())
}

fn print_summary(study: &StudyReport) {
    let mv = |x: Option<f64>| x.map_or_else(|| "-".into(), |v| format!("{:.1}", v * 1e3));
    println!(
        "{:<12} {:>5} {:>8} {:>8} {:>9} {:>9} {:>9} {:>9} {:>7}",
        "sample", "t1", "shared", "total", "P sigma", "P sigma~", "B sigma", "B sigma~", "C_P"
    );
    for s in &study.samples {
        println!(
            "{:<12} {:>5.1} {:>8.3} {:>8.3} {:>9} {:>9} {:>9} {:>9} {:>7}",
            s.label,
            s.t1,
            s.yields.row_shared_yield,
            s.yields.total_yield,
            mv(s.plunger.map(|x| x.sigma)),
            mv(s.plunger.map(|x| x.sigma_tilde)),
            mv(s.barrier.map(|x| x.sigma)),
            mv(s.barrier.map(|x| x.sigma_tilde)),
            s.mean_c_p.map_or_else(|| "-".into(), |c| format!("{c:.2}")),
        );
    }
    if let Some(v) = &study.variability {
        println!();
        println!(
            "{:<8} {:>7} {:>9} {:>9} {:>6}",
            "family", "t (nm)", "sigma", "sigma~", "dots"
        );
        for p in &v.points {
            let fam = match p.family {
                GateFamily::Plunger => "plunger",
                GateFamily::Barrier => "barrier",
            };
            println!(
                "{:<8} {:>7.1} {:>9.1} {:>9.1} {:>6}",
                fam,
                p.t_gate,
                p.sigma * 1e3,
                p.sigma_tilde * 1e3,
                p.count
            );
        }
    }
    if let Some(c) = &study.capacitance {
        println!();
        println!("parallel plate: A = {:.0} nm^2, delta2 = {:.2} nm", c.area, c.delta2);
    }
    for n in &study.notes {
        println!("note: {n}");
    }
}

fn cmd_stats(cli: &Cli, reports: &[PathBuf]) -> CliResult<()> {
    let cfg = cli.optional_config()?;
    let layout = cli.layout(cfg.as_ref());
    let scfg = cfg.as_ref().map(|c| c.statistics).unwrap_or_else(StatsConfig::default);
    let paths = if reports.is_empty() {
        list(&layout.root.join(EXTRACTION_DIR), is_json)?
    } else {
        reports.to_vec()
    };
    if paths.is_empty() {
        return Err(usage(format!(
            "no extraction reports given and none in {}",
            layout.root.join(EXTRACTION_DIR).display()
        )));
    }
    let reports = paths.iter().map(|p| load_report(p)).collect::<Result<Vec<_>, _>>()?;
    let study = summarize(&reports, &scfg)?;
    write_stats(&layout.stats(), &study, cli.plots())?;
    print_summary(&study);
    Ok(())
}

fn cmd_pipeline(cli: &Cli) -> CliResult<()> {
    let cfg = cli.load_config()?;
    let layout = cli.layout(Some(&cfg));
    let study = run_pipeline(&cfg, &layout, cli.plots())?;
    print_summary(&study);
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| usage(format!("cannot start thread pool: {e}")))?;
    }
    match &cli.command {
        Command::Synth => cmd_synth(cli),
        Command::Measure { samples } => cmd_measure(cli, samples),
        Command::Extract { campaigns } => cmd_extract(cli, campaigns),
        Command::Stats { reports } => cmd_stats(cli, reports),
        Command::Pipeline => cmd_pipeline(cli),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(exit_code(f.class))
        }
    }
}
