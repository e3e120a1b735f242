use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::warn;

use taxnet_core::conduit::DEFAULT_SINK_THRESHOLD;
use taxnet_core::flow::{Injection, TotalMode};
use taxnet_core::format::fmt_display;
use taxnet_core::ingest::IngestOptions;
use taxnet_core::multilayer::{DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_REPORT_THRESHOLD};
use taxnet_core::pipeline::{self, AnalysisParams, InputPaths, PipelineError};
use taxnet_core::report::{self, ReportError};
use taxnet_core::routing::{RoutingCostModel, DEFAULT_MAX_HOPS};
use taxnet_core::synth::{generate, SynthConfig, SynthError};

/// Betas swept by `sweep-beta` when none are given.
const SWEEP_BETAS: [f64; 4] = [0.1, 0.3, 0.5, 0.8];

#[derive(Parser)]
#[command(name = "taxnet", version, about = "Sink, conduit and tax-routing centrality on ownership networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the whole pipeline on an input bundle.
    Run {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Generate a synthetic input bundle with planted sinks and conduits.
    Synth {
        /// Flat `key = value` config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Override a config key, e.g. `--set n_firms=1000`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "synth")]
        out: PathBuf,
    },
    /// Sink scores from an input bundle.
    ComputeSink {
        #[command(flatten)]
        inputs: InputArgs,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Conduit scores from an input bundle and a sink table.
    ComputeConduit {
        #[command(flatten)]
        inputs: InputArgs,
        #[arg(long)]
        sink_scores: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Load scores from a withholding-tax table.
    ComputeLoad {
        #[arg(long)]
        tax: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Multilayer scores from conduit and load tables.
    ComputeMultilayer {
        #[arg(long)]
        conduit_scores: PathBuf,
        #[arg(long)]
        load_scores: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Multilayer scores over several betas, with threshold counts.
    SweepBeta {
        #[arg(long)]
        conduit_scores: PathBuf,
        #[arg(long)]
        load_scores: PathBuf,
        #[command(flatten)]
        analysis: AnalysisArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Equal-width bins of one score column.
    Histogram {
        scores: PathBuf,
        #[arg(long)]
        bin_width: f64,
        /// Column to bin; the last column by default.
        #[arg(long)]
        column: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// `jurisdiction,M` rows of one sector, for cartogram tools.
    CartogramData {
        multilayer: PathBuf,
        #[arg(long)]
        sector: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct InputArgs {
    /// Directory holding firms.csv, ownership.csv, tax.csv and gdp.csv.
    #[arg(long, default_value = ".")]
    input: PathBuf,
    #[arg(long)]
    firms: Option<PathBuf>,
    #[arg(long)]
    ownership: Option<PathBuf>,
    #[arg(long)]
    tax: Option<PathBuf>,
    #[arg(long)]
    gdp: Option<PathBuf>,
}

impl InputArgs {
    fn paths(&self) -> InputPaths {
        let mut p = InputPaths::in_dir(&self.input);
        let pick = |over: &Option<PathBuf>, dflt: &mut PathBuf| {
            if let Some(o) = over {
                *dflt = o.clone();
            }
        };
        pick(&self.firms, &mut p.firms);
        pick(&self.ownership, &mut p.ownership);
        pick(&self.tax, &mut p.tax);
        pick(&self.gdp, &mut p.gdp);
        p
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CostArg {
    Additive,
    Multiplicative,
}

#[derive(Clone, Copy, ValueEnum)]
enum VTotalArg {
    Received,
    Injected,
}

#[derive(Args)]
struct AnalysisArgs {
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    alpha: f64,
    /// Repeatable.
    #[arg(long)]
    beta: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_SINK_THRESHOLD)]
    sink_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_REPORT_THRESHOLD)]
    report_threshold: f64,
    #[arg(long, value_enum, default_value = "additive")]
    routing_cost: CostArg,
    #[arg(long, default_value_t = DEFAULT_MAX_HOPS)]
    max_hops: usize,
    /// Every firm injects its income, not only chain ends.
    #[arg(long)]
    inject_all: bool,
    #[arg(long, value_enum, default_value = "received")]
    vtotal_mode: VTotalArg,
    #[arg(long)]
    ratios_as_percent: bool,
    #[arg(long)]
    rates_as_percent: bool,
    #[arg(long)]
    exclude_negative_income: bool,
    /// Rate for missing tax pairs without a domestic rate.
    #[arg(long, default_value_t = 0.30)]
    default_rate: f64,
    /// Recorded in the manifest.
    #[arg(long)]
    seed: Option<u64>,
}

impl AnalysisArgs {
    fn params(&self, default_betas: &[f64]) -> AnalysisParams {
        AnalysisParams {
            alpha: self.alpha,
            betas: if self.beta.is_empty() { default_betas.to_vec() } else { self.beta.clone() },
            sink_threshold: self.sink_threshold,
            report_threshold: self.report_threshold,
            routing_cost: match self.routing_cost {
                CostArg::Additive => RoutingCostModel::Additive,
                CostArg::Multiplicative => RoutingCostModel::Multiplicative,
            },
            max_hops: self.max_hops,
            injection: if self.inject_all { Injection::All } else { Injection::ChainEnds },
            total_mode: match self.vtotal_mode {
                VTotalArg::Received => TotalMode::Received,
                VTotalArg::Injected => TotalMode::Injected,
            },
            seed: self.seed,
            ingest: IngestOptions {
                ratios_as_percent: self.ratios_as_percent,
                rates_as_percent: self.rates_as_percent,
                exclude_negative_income: self.exclude_negative_income,
                default_rate: self.default_rate,
            },
        }
    }
}

fn write_out(out: Option<&Path>, body: impl FnOnce(&mut dyn Write) -> csv::Result<()>) -> Result<(), PipelineError> {
    let path = out.map(|p| p.display().to_string()).unwrap_or_else(|| "<stdout>".into());
    let err = |source| PipelineError::Write { path: path.clone(), source };
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(err)?);
            body(&mut w).map_err(|e| err(e.into()))?;
            w.flush().map_err(err)
        }
        None => {
            let stdout = std::io::stdout();
            let mut w = stdout.lock();
            body(&mut w).map_err(|e| err(e.into()))
        }
    }
}

fn top<T>(rows: &[T], n: usize, key: impl Fn(&T) -> Option<f64>) -> Vec<(&T, f64)> {
    let mut v: Vec<_> = rows.iter().filter_map(|r| key(r).map(|k| (r, k))).collect();
    v.sort_by(|a, b| b.1.total_cmp(&a.1));
    v.truncate(n);
    v
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    match cli.command {
        Command::Run { inputs, analysis, out } => {
            let params = analysis.params(&[DEFAULT_BETA]);
            let r = pipeline::run(&inputs.paths(), &params, &out)?;
            for w in r.ownership.conduits.warnings.iter() {
                warn!("{w}");
            }
            println!("digest {}", r.manifest.digest);
            println!("wrote {} files to {}", r.manifest.outputs.len() + 1, out.display());
            println!("top sinks (S):");
            for (s, v) in top(&r.ownership.sinks, 5, |s| Some(s.s)) {
                println!("  {:<6} {:>12}", s.pair.to_string(), fmt_display(v));
            }
            println!("top conduits (C):");
            for (s, v) in top(&r.ownership.conduits.scores, 5, |s| s.c_combined) {
                println!("  {:<6} {:>12}", s.pair.to_string(), fmt_display(v));
            }
            for e in &r.sweep {
                println!("top multilayer (M, beta {}):", e.beta);
                for s in e.table.scores.iter().take(5) {
                    println!("  {:<6} {:>12}", s.pair.to_string(), fmt_display(s.m));
                }
            }
        }
        Command::Synth {
            config,
            overrides,
            seed,
            out,
        } => {
            let mut cfg = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|source| SynthError::Io {
                        path: p.display().to_string(),
                        source,
                    })?;
                    SynthConfig::parse(&text)?
                }
                None => SynthConfig::default(),
            };
            for o in &overrides {
                let (k, v) = o.split_once('=').ok_or_else(|| SynthError::Config {
                    line: 0,
                    message: format!("expected KEY=VALUE, got {o:?}"),
                })?;
                cfg.set(k.trim(), v.trim())
                    .map_err(|message| SynthError::Config { line: 0, message })?;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let data = generate(&cfg)?;
            data.write_bundle(&out)?;
            println!(
                "wrote {} firms, {} links, {} jurisdictions to {}",
                data.firms.len(),
                data.links.len(),
                data.tax.len(),
                out.display()
            );
        }
        Command::ComputeSink { inputs, analysis, out } => {
            let sinks = pipeline::compute_sink(&inputs.paths(), &analysis.params(&[DEFAULT_BETA]), &out)?;
            println!("scored {} pairs", sinks.len());
        }
        Command::ComputeConduit {
            inputs,
            sink_scores,
            analysis,
            out,
        } => {
            let t = pipeline::compute_conduit(&inputs.paths(), &sink_scores, &analysis.params(&[DEFAULT_BETA]), &out)?;
            for w in &t.warnings {
                warn!("{w}");
            }
            println!("scored {} pairs", t.scores.len());
        }
        Command::ComputeLoad { tax, analysis, out } => {
            let (result, scores) = pipeline::compute_load(&tax, &analysis.params(&[DEFAULT_BETA]), &out)?;
            if !result.unreachable.is_empty() {
                warn!("{} packets have no route", result.unreachable.len());
            }
            println!("scored {} jurisdictions", scores.len());
        }
        Command::ComputeMultilayer {
            conduit_scores,
            load_scores,
            analysis,
            out,
        } => {
            let sweep = pipeline::compute_multilayer(&conduit_scores, &load_scores, &analysis.params(&[DEFAULT_BETA]), &out)?;
            for e in &sweep {
                println!("beta {}: {} pairs", e.beta, e.table.scores.len());
            }
        }
        Command::SweepBeta {
            conduit_scores,
            load_scores,
            analysis,
            out,
        } => {
            let sweep = pipeline::compute_multilayer(&conduit_scores, &load_scores, &analysis.params(&SWEEP_BETAS), &out)?;
            for e in &sweep {
                let counts: Vec<String> = e
                    .counts
                    .iter()
                    .map(|c| format!("{}>{}", c.pairs, c.threshold))
                    .collect();
                println!("beta {}: {}", e.beta, counts.join(" "));
            }
        }
        Command::Histogram {
            scores,
            bin_width,
            column,
            out,
        } => {
            let file = File::open(&scores).map_err(|source| ReportError::Io {
                path: scores.display().to_string(),
                source,
            })?;
            let values = report::read_column(file, &scores.display().to_string(), column.as_deref())?;
            let bins = report::histogram(&values.rows, bin_width)?;
            write_out(out.as_deref(), |w| report::write_histogram(w, values.digest.as_deref(), &bins))?;
        }
        Command::CartogramData { multilayer, sector, out } => {
            let rows = report::load_multilayer_scores(&multilayer)?;
            let data = report::cartogram(&rows.rows, &sector)?;
            if data.is_empty() {
                warn!("no scored pairs in sector {sector}");
            }
            write_out(out.as_deref(), |w| report::write_cartogram(w, rows.digest.as_deref(), &data))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
