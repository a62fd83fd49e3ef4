//! Command-line surface tying the library together: metric computation,
//! dump-vs-dump CKA, layer-wise alignment profiles, hot-swap schedule
//! simulation over a checkpoint directory, synthetic corpus generation, and
//! report merging/rendering.
//!
//! # Conventions
//!
//! - Machine output goes to stdout (written in one piece, never partially);
//!   diagnostics, progress, and the effective configuration go to stderr.
//! - Exit codes: `0` success, `1` usage, `2` bad data or file format (and
//!   I/O), `3` numerical failure.
//! - Configuration precedence: command-line flags > `--config` file
//!   (`key=value` lines, `#` comments) > built-in defaults.
//! - Every command is deterministic for fixed inputs, configuration, and
//!   seed; the worker-pool degree (`--parallelism`) never changes output
//!   bytes because all parallel reductions are order-fixed.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::cka::{avg_utterance_cka, layerwise_alignment};
use crate::dataio::{
    assemble_corpus, parse_checkpoint_filename, read_embd_file, read_manifest_file,
    read_metrics_csv_file, read_phone_vocab_file, read_repd_file, render_line_chart,
    render_svg_lines, write_metrics_csv, write_metrics_json, EvalManifest, ManifestUtterance,
    MetricReport, MetricRow, RepresentationDump, SeriesKind,
};
use crate::error::{Error, Result};
use crate::scheduler::{
    emit_iasft_timeline, event_log_to_json_lines, format_event_table, format_timeline_table,
    run_schedule, timeline_to_json_lines, CheckpointObservation, ScheduleConfig,
};
use crate::synth::{generate, DriftSpec};
use crate::targets::metric_triple;

// ---------------------------------------------------------------------------
// Run configuration: defaults, config file, flag overrides.
// ---------------------------------------------------------------------------

/// Resolved knobs shared across commands.
///
/// Precedence when resolving: explicit flags beat the `--config` file, which
/// beats the defaults below. The resolved values are echoed to stderr so any
/// run can be reproduced from its log.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Projection width for the Gaussian information proxies.
    pub k: usize,
    /// Ridge regularizer added to the joint covariance diagonal.
    pub lambda: f64,
    /// CKA swap threshold for the hot-swap monitor.
    pub tau: f64,
    /// Pretraining step at which monitoring (and the reference) starts.
    pub monitor_start: u64,
    /// Steps between scheduled CKA evaluations.
    pub monitor_interval: u64,
    /// Pretraining step of the unconditional final swap.
    pub pretrain_end: u64,
    /// Worker-pool degree; 0 uses all available cores. Output bytes do not
    /// depend on this value.
    pub parallelism: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k: 16,
            lambda: 1e-3,
            tau: 0.975,
            monitor_start: 500_000,
            monitor_interval: 10_000,
            pretrain_end: 2_000_000,
            parallelism: 0,
        }
    }
}

impl RunConfig {
    /// Applies `key=value` lines from a config file. Unknown keys and
    /// unparsable values are usage errors naming the offender.
    fn apply_file(&mut self, text: &str, origin: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::usage(format!(
                    "{origin}:{}: expected key=value, got '{line}'",
                    lineno + 1
                ))
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "k" => self.k = parse_config_value(key, value)?,
                "lambda" => self.lambda = parse_config_value(key, value)?,
                "tau" => self.tau = parse_config_value(key, value)?,
                "monitor_start" => self.monitor_start = parse_config_value(key, value)?,
                "monitor_interval" => self.monitor_interval = parse_config_value(key, value)?,
                "pretrain_end" => self.pretrain_end = parse_config_value(key, value)?,
                "parallelism" => self.parallelism = parse_config_value(key, value)?,
                other => {
                    return Err(Error::usage(format!(
                        "{origin}:{}: unknown config key '{other}' (known: k, lambda, tau, \
                         monitor_start, monitor_interval, pretrain_end, parallelism)",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(())
    }

    /// Applies explicit flag overrides (highest precedence).
    fn apply_flags(&mut self, flags: &GlobalOpts) {
        if let Some(v) = flags.k {
            self.k = v;
        }
        if let Some(v) = flags.lambda {
            self.lambda = v;
        }
        if let Some(v) = flags.tau {
            self.tau = v;
        }
        if let Some(v) = flags.monitor_start {
            self.monitor_start = v;
        }
        if let Some(v) = flags.monitor_interval {
            self.monitor_interval = v;
        }
        if let Some(v) = flags.pretrain_end {
            self.pretrain_end = v;
        }
        if let Some(v) = flags.parallelism {
            self.parallelism = v;
        }
    }

    /// Validates the field-local invariants every command relies on.
    /// Cross-field schedule constraints are checked where the schedule is
    /// actually constructed.
    fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::usage("k must be at least 1"));
        }
        if !self.lambda.is_finite() || self.lambda <= 0.0 {
            return Err(Error::usage(format!(
                "lambda must be finite and positive, got {}",
                self.lambda
            )));
        }
        if !self.tau.is_finite() || self.tau <= 0.0 || self.tau >= 1.0 {
            return Err(Error::usage(format!(
                "tau must lie strictly inside (0, 1), got {}",
                self.tau
            )));
        }
        if self.monitor_interval == 0 {
            return Err(Error::usage("monitor_interval must be positive"));
        }
        Ok(())
    }

    /// Builds the resolved configuration from defaults, an optional config
    /// file, and flag overrides, then validates it.
    pub fn resolve(flags: &GlobalOpts) -> Result<RunConfig> {
        let mut rc = RunConfig::default();
        if let Some(path) = &flags.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
            rc.apply_file(&text, &path.display().to_string())?;
        }
        rc.apply_flags(flags);
        rc.validate()?;
        Ok(rc)
    }

    /// One-line reproducibility echo.
    fn describe(&self) -> String {
        let degree = if self.parallelism == 0 {
            "auto".to_string()
        } else {
            self.parallelism.to_string()
        };
        format!(
            "effective config: k={} lambda={} tau={} monitor_start={} monitor_interval={} \
             pretrain_end={} parallelism={degree}",
            self.k,
            self.lambda,
            self.tau,
            self.monitor_start,
            self.monitor_interval,
            self.pretrain_end
        )
    }
}

fn parse_config_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::usage(format!("config key '{key}' has unparsable value '{value}'")))
}

// ---------------------------------------------------------------------------
// Argument grammar.
// ---------------------------------------------------------------------------

/// Shared flags accepted before or after the subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct GlobalOpts {
    /// Config file with key=value lines (flags override it).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Projection width for the information proxies.
    #[arg(long, global = true, value_name = "N")]
    pub k: Option<usize>,
    /// Ridge regularizer for the joint covariance.
    #[arg(long, global = true, value_name = "X")]
    pub lambda: Option<f64>,
    /// CKA swap threshold in (0, 1).
    #[arg(long, global = true, value_name = "X")]
    pub tau: Option<f64>,
    /// Step at which monitoring starts (the reference checkpoint).
    #[arg(long, global = true, value_name = "STEP")]
    pub monitor_start: Option<u64>,
    /// Steps between scheduled CKA evaluations.
    #[arg(long, global = true, value_name = "STEPS")]
    pub monitor_interval: Option<u64>,
    /// Step of the unconditional final swap.
    #[arg(long, global = true, value_name = "STEP")]
    pub pretrain_end: Option<u64>,
    /// Worker-pool degree (0 = all cores); never changes output bytes.
    #[arg(long, global = true, value_name = "N")]
    pub parallelism: Option<usize>,
}

/// Entropy-allocation diagnostics for speech-encoder / LLM interfaces.
#[derive(Debug, Parser)]
#[command(name = "entalloc", version, about, max_term_width = 100)]
struct Cli {
    #[command(flatten)]
    globals: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

/// Output encoding for tabular results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compute the NSE / PAI / CSAI triple for one checkpoint dump.
    Metrics {
        /// Representation dump (.repd) for the checkpoint.
        #[arg(long, value_name = "FILE")]
        dump: PathBuf,
        /// Evaluation manifest (JSON) binding utterances to transcripts,
        /// phones, and embedding ids.
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        /// Semantic embedding table (.embd).
        #[arg(long, value_name = "FILE")]
        embeddings: PathBuf,
        /// Phone vocabulary (one token per line).
        #[arg(long, value_name = "FILE")]
        vocab: PathBuf,
        /// Optional reference dump; fills the cka_vs_ref column with the
        /// average utterance CKA between reference and dump.
        #[arg(long, value_name = "FILE")]
        reference: Option<PathBuf>,
        /// Corpus identifier recorded with the metrics.
        #[arg(long, default_value = "eval", value_name = "ID")]
        corpus_id: String,
        /// Output encoding.
        #[arg(long, value_enum, default_value = "csv")]
        format: OutputFormat,
        /// Write the table here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Average id-matched utterance CKA between two dumps.
    Cka {
        /// First representation dump.
        #[arg(value_name = "DUMP_A")]
        dump_a: PathBuf,
        /// Second representation dump.
        #[arg(value_name = "DUMP_B")]
        dump_b: PathBuf,
    },
    /// Layer-wise alignment profile: linear CKA between each dump's pooled
    /// representations and the semantic embeddings.
    Layerwise {
        /// Ordered representation dumps, one per layer.
        #[arg(long, value_name = "FILE", num_args = 1.., required = true)]
        dumps: Vec<PathBuf>,
        /// Semantic embedding table (.embd).
        #[arg(long, value_name = "FILE")]
        embeddings: PathBuf,
        /// Manifest binding utterance ids to embedding ids; when omitted,
        /// embedding ids must equal utterance ids and the first dump's order
        /// is used.
        #[arg(long, value_name = "FILE")]
        manifest: Option<PathBuf>,
        /// Write the profile CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also render the profile as an SVG line chart.
        #[arg(long, value_name = "FILE")]
        svg: Option<PathBuf>,
    },
    /// Replay the hot-swap monitor over a directory of step-named dumps.
    Schedule {
        /// Directory containing step_<step>.repd checkpoint dumps.
        #[arg(long, value_name = "DIR")]
        checkpoints: PathBuf,
        /// Post-training steps spent in the alignment stage; with
        /// --iasft-duration, switches output to the annotated timeline.
        #[arg(long, value_name = "STEPS", requires = "iasft_duration")]
        alignment_duration: Option<u64>,
        /// Post-training steps spent in IA-SFT; with --alignment-duration,
        /// switches output to the annotated timeline.
        #[arg(long, value_name = "STEPS", requires = "alignment_duration")]
        iasft_duration: Option<u64>,
        /// Write the JSON-lines log here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic drifting corpus: checkpoint dumps, manifest,
    /// embeddings, and phone vocabulary.
    Synth {
        /// Directory to write the corpus into (created if missing).
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        /// Representation width.
        #[arg(long, default_value_t = 24, value_name = "N")]
        feature_dim: usize,
        /// Minimum frames per utterance.
        #[arg(long, default_value_t = 12, value_name = "N")]
        frames_min: usize,
        /// Maximum frames per utterance (inclusive).
        #[arg(long, default_value_t = 40, value_name = "N")]
        frames_max: usize,
        /// Number of utterances.
        #[arg(long, default_value_t = 40, value_name = "N")]
        utterances: usize,
        /// Per-step rotation-mixing coefficient in [0, 1].
        #[arg(long, default_value_t = 0.0, value_name = "X")]
        drift_rate: f64,
        /// Per-utterance noise scale.
        #[arg(long, default_value_t = 1.0, value_name = "X")]
        noise_scale: f64,
        /// Per-frame jitter scale (0 makes utterances rank one).
        #[arg(long, default_value_t = 0.25, value_name = "X")]
        frame_jitter: f64,
        /// Strength of the semantic-embedding leak into representations.
        #[arg(long, default_value_t = 0.6, value_name = "X")]
        semantic_leak: f64,
        /// Phone vocabulary size.
        #[arg(long, default_value_t = 40, value_name = "N")]
        vocab_size: usize,
        /// Minimum phones per utterance.
        #[arg(long, default_value_t = 4, value_name = "N")]
        phones_min: usize,
        /// Maximum phones per utterance (inclusive).
        #[arg(long, default_value_t = 12, value_name = "N")]
        phones_max: usize,
        /// Semantic embedding width.
        #[arg(long, default_value_t = 16, value_name = "N")]
        embedding_dim: usize,
        /// RNG seed; a fixed seed reproduces the corpus byte for byte.
        #[arg(long, default_value_t = 7, value_name = "N")]
        seed: u64,
        /// Checkpoint steps: either start:interval:end or a comma list.
        #[arg(long, default_value = "100:100:1000", value_name = "SPEC")]
        steps: String,
        /// Extra rotation mixing at one checkpoint, as step=amount;
        /// repeatable.
        #[arg(long, value_name = "STEP=AMOUNT")]
        jolt: Vec<String>,
    },
    /// Merge metric CSVs (files or one directory) and render charts.
    Report {
        /// Metrics CSV files, or a single directory scanned for *.csv.
        #[arg(value_name = "PATH", num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Write the merged CSV here instead of stdout.
        #[arg(long, value_name = "FILE")]
        out: Option<PathBuf>,
        /// Also render the selected series as an SVG line chart.
        #[arg(long, value_name = "FILE")]
        svg: Option<PathBuf>,
        /// Comma list of series for the chart: nse, pai_bits, csai_bits,
        /// cka_vs_ref (default: all).
        #[arg(long, value_name = "LIST")]
        series: Option<String>,
    },
}

// ---------------------------------------------------------------------------
// Entry point and dispatch.
// ---------------------------------------------------------------------------

/// Runs the CLI and returns the process exit code.
pub fn run() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are successes; real parse errors are usage
            // errors and must exit 1 (clap's own default would be 2).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    let rc = RunConfig::resolve(&cli.globals)?;
    eprintln!("{}", rc.describe());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(rc.parallelism)
        .build()
        .map_err(|e| Error::usage(format!("could not build worker pool: {e}")))?;
    pool.install(|| dispatch(cli.command, &rc))
}

fn dispatch(command: Command, rc: &RunConfig) -> Result<()> {
    match command {
        Command::Metrics {
            dump,
            manifest,
            embeddings,
            vocab,
            reference,
            corpus_id,
            format,
            out,
        } => cmd_metrics(
            rc,
            &dump,
            &manifest,
            &embeddings,
            &vocab,
            reference.as_deref(),
            &corpus_id,
            format,
            out.as_deref(),
        ),
        Command::Cka { dump_a, dump_b } => cmd_cka(&dump_a, &dump_b),
        Command::Layerwise {
            dumps,
            embeddings,
            manifest,
            out,
            svg,
        } => cmd_layerwise(
            &dumps,
            &embeddings,
            manifest.as_deref(),
            out.as_deref(),
            svg.as_deref(),
        ),
        Command::Schedule {
            checkpoints,
            alignment_duration,
            iasft_duration,
            out,
        } => cmd_schedule(
            rc,
            &checkpoints,
            alignment_duration,
            iasft_duration,
            out.as_deref(),
        ),
        Command::Synth {
            out_dir,
            feature_dim,
            frames_min,
            frames_max,
            utterances,
            drift_rate,
            noise_scale,
            frame_jitter,
            semantic_leak,
            vocab_size,
            phones_min,
            phones_max,
            embedding_dim,
            seed,
            steps,
            jolt,
        } => {
            let spec = DriftSpec {
                feature_dim,
                frames_min,
                frames_max,
                utterances,
                drift_rate,
                noise_scale,
                frame_jitter,
                semantic_leak,
                vocab_size,
                phones_min,
                phones_max,
                embedding_dim,
                seed,
                checkpoint_steps: parse_steps(&steps)?,
                jolts: jolt
                    .iter()
                    .map(|j| parse_jolt(j))
                    .collect::<Result<Vec<_>>>()?,
            };
            cmd_synth(&spec, &out_dir)
        }
        Command::Report {
            inputs,
            out,
            svg,
            series,
        } => cmd_report(&inputs, out.as_deref(), svg.as_deref(), series.as_deref()),
    }
}

/// Writes finished machine output: whole-string to stdout, or to a file.
fn emit(out: Option<&Path>, content: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, content)
            .map_err(|e| Error::from(e).context(&format!("writing '{}'", path.display()))),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .and_then(|()| stdout.flush())
                .map_err(|e| Error::from(e).context("writing stdout"))
        }
    }
}

// ---------------------------------------------------------------------------
// Commands.
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn cmd_metrics(
    rc: &RunConfig,
    dump: &Path,
    manifest: &Path,
    embeddings: &Path,
    vocab: &Path,
    reference: Option<&Path>,
    corpus_id: &str,
    format: OutputFormat,
    out: Option<&Path>,
) -> Result<()> {
    let dump = read_repd_file(dump)?;
    let manifest = read_manifest_file(manifest)?;
    let embeddings = read_embd_file(embeddings)?;
    let vocab = read_phone_vocab_file(vocab)?;
    let corpus = assemble_corpus(&dump, &manifest, &embeddings)?;
    let triple = metric_triple(
        &corpus,
        &vocab,
        rc.k,
        rc.lambda,
        dump.checkpoint_step(),
        corpus_id,
    )?;
    let cka_vs_ref = match reference {
        Some(ref_path) => {
            let reference = read_repd_file(ref_path)?;
            Some(avg_utterance_cka(&reference, &dump)?.value)
        }
        None => None,
    };
    let report = MetricReport::new(vec![MetricRow::from_triple(&triple, cka_vs_ref)])?;
    let content = match format {
        OutputFormat::Csv => write_metrics_csv(&report),
        OutputFormat::Json => write_metrics_json(&report),
    };
    emit(out, &content)
}

fn cmd_cka(dump_a: &Path, dump_b: &Path) -> Result<()> {
    let a = read_repd_file(dump_a)?;
    let b = read_repd_file(dump_b)?;
    let avg = avg_utterance_cka(&a, &b)?;
    emit(
        None,
        &format!(
            "{:.6} compared={} skipped_single_frame={}\n",
            avg.value, avg.compared, avg.skipped_single_frame
        ),
    )
}

fn cmd_layerwise(
    dump_paths: &[PathBuf],
    embeddings: &Path,
    manifest: Option<&Path>,
    out: Option<&Path>,
    svg: Option<&Path>,
) -> Result<()> {
    let dumps = dump_paths
        .iter()
        .map(|p| read_repd_file(p))
        .collect::<Result<Vec<RepresentationDump>>>()?;
    let embeddings = read_embd_file(embeddings)?;
    let manifest = match manifest {
        Some(path) => read_manifest_file(path)?,
        // Without a manifest, bind each utterance to the embedding of the
        // same id, in the first dump's order.
        None => {
            let first = dumps
                .first()
                .ok_or_else(|| Error::usage("layer-wise alignment needs at least one dump"))?;
            EvalManifest::new(
                first
                    .utterances()
                    .iter()
                    .map(|u| ManifestUtterance {
                        id: u.utterance_id().to_string(),
                        transcript: String::new(),
                        phones: Vec::new(),
                        embedding_id: u.utterance_id().to_string(),
                    })
                    .collect(),
            )?
        }
    };
    let profile = layerwise_alignment(&dumps, &manifest, &embeddings)?;
    if let Some(svg_path) = svg {
        let chart = render_line_chart(&[profile.to_series()], "layer index", "cka");
        std::fs::write(svg_path, chart)
            .map_err(|e| Error::from(e).context(&format!("writing '{}'", svg_path.display())))?;
    }
    emit(out, &profile.to_csv())
}

fn cmd_schedule(
    rc: &RunConfig,
    checkpoints: &Path,
    alignment_duration: Option<u64>,
    iasft_duration: Option<u64>,
    out: Option<&Path>,
) -> Result<()> {
    let config = ScheduleConfig::new(
        rc.tau,
        rc.monitor_start,
        rc.monitor_interval,
        rc.pretrain_end,
    )?;
    let stream = scan_checkpoint_dir(checkpoints)?;
    eprintln!(
        "replaying {} checkpoints from '{}'",
        stream.len(),
        checkpoints.display()
    );
    let observations = stream
        .iter()
        .map(|(step, path)| CheckpointObservation::from_dump_ref(*step, path.display().to_string()))
        .collect::<Result<Vec<_>>>()?;

    // The reference dump stays loaded between evaluations and is replaced
    // only when the scheduler moves the reference (at swaps).
    let mut reference: Option<(String, RepresentationDump)> = None;
    let mut cka_fn = |ref_handle: &str, obs_handle: &str| -> Result<f64> {
        let cached = matches!(&reference, Some((handle, _)) if handle == ref_handle);
        if !cached {
            let dump = read_repd_file(Path::new(ref_handle))?;
            reference = Some((ref_handle.to_string(), dump));
        }
        let (_, ref_dump) = reference.as_ref().expect("reference cache was just filled");
        let observed = read_repd_file(Path::new(obs_handle))?;
        Ok(avg_utterance_cka(ref_dump, &observed)?.value)
    };
    let events = run_schedule(&observations, &config, &mut cka_fn)?;

    let (machine, table) = match (alignment_duration, iasft_duration) {
        (Some(align), Some(iasft)) => {
            let timeline = emit_iasft_timeline(&events, align, iasft)?;
            (
                timeline_to_json_lines(&timeline),
                format_timeline_table(&timeline),
            )
        }
        // clap's `requires` links make a lone duration flag unreachable.
        _ => (
            event_log_to_json_lines(&events),
            format_event_table(&events),
        ),
    };
    eprint!("{table}");
    emit(out, &machine)
}

/// Scans a checkpoint directory for `step_<decimal>.repd` files and returns
/// them sorted by step. Distinct filenames mapping to the same step (for
/// example `step_100.repd` and `step_0100.repd`) break the strictly
/// increasing step order and are a usage error.
fn scan_checkpoint_dir(dir: &Path) -> Result<Vec<(u64, PathBuf)>> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| Error::from(e).context(&format!("reading directory '{}'", dir.display())))?;
    let mut found: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| {
            Error::from(e).context(&format!("reading directory '{}'", dir.display()))
        })?;
        let name = entry.file_name();
        if let Some(step) = name.to_str().and_then(parse_checkpoint_filename) {
            found.push((step, entry.path()));
        }
    }
    if found.is_empty() {
        return Err(Error::data(format!(
            "no checkpoint dumps (step_<step>.repd) found in '{}'",
            dir.display()
        )));
    }
    found.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    for pair in found.windows(2) {
        if pair[0].0 == pair[1].0 {
            return Err(Error::usage(format!(
                "checkpoint steps must be strictly increasing: '{}' and '{}' both give step {}",
                pair[0].1.display(),
                pair[1].1.display(),
                pair[0].0
            )));
        }
    }
    Ok(found)
}

fn cmd_synth(spec: &DriftSpec, out_dir: &Path) -> Result<()> {
    let corpus = generate(spec)?;
    corpus.write_to_dir(out_dir)?;
    eprintln!(
        "wrote {} checkpoints, manifest, embeddings, and vocab to '{}'",
        corpus.checkpoints.len(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_report(
    inputs: &[PathBuf],
    out: Option<&Path>,
    svg: Option<&Path>,
    series: Option<&str>,
) -> Result<()> {
    let files = resolve_report_inputs(inputs)?;
    let reports = files
        .iter()
        .map(|p| read_metrics_csv_file(p))
        .collect::<Result<Vec<_>>>()?;
    let merged = MetricReport::merge(&reports)?;
    if let Some(svg_path) = svg {
        let kinds = match series {
            Some(list) => parse_series_list(list)?,
            None => SeriesKind::all().to_vec(),
        };
        let chart = render_svg_lines(&merged, &kinds)?;
        std::fs::write(svg_path, chart)
            .map_err(|e| Error::from(e).context(&format!("writing '{}'", svg_path.display())))?;
    }
    emit(out, &write_metrics_csv(&merged))
}

/// A single directory argument means "all *.csv inside, sorted by name";
/// anything else is taken as explicit file paths.
fn resolve_report_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    if inputs.len() == 1 && inputs[0].is_dir() {
        let dir = &inputs[0];
        let entries = std::fs::read_dir(dir).map_err(|e| {
            Error::from(e).context(&format!("reading directory '{}'", dir.display()))
        })?;
        let mut files: Vec<PathBuf> = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| {
                Error::from(e).context(&format!("reading directory '{}'", dir.display()))
            })?;
            let path = entry.path();
            if path.extension().is_some_and(|ext| ext == "csv") {
                files.push(path);
            }
        }
        if files.is_empty() {
            return Err(Error::data(format!(
                "no metrics CSV files found in '{}'",
                dir.display()
            )));
        }
        files.sort();
        Ok(files)
    } else {
        Ok(inputs.to_vec())
    }
}

fn parse_series_list(list: &str) -> Result<Vec<SeriesKind>> {
    let kinds = list
        .split(',')
        .map(|name| name.trim().parse())
        .collect::<Result<Vec<SeriesKind>>>()?;
    if kinds.is_empty() {
        return Err(Error::usage("--series must name at least one series"));
    }
    Ok(kinds)
}

// ---------------------------------------------------------------------------
// Flag-value parsers.
// ---------------------------------------------------------------------------

/// Parses `--steps`: `start:interval:end` expands to the inclusive arithmetic
/// progression (the end must land exactly on the grid); a comma list is taken
/// verbatim.
fn parse_steps(spec: &str) -> Result<Vec<u64>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(Error::usage("--steps must not be empty"));
    }
    if spec.contains(':') {
        let parts: Vec<&str> = spec.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::usage(format!(
                "--steps range must be start:interval:end, got '{spec}'"
            )));
        }
        let start = parse_u64_field(parts[0], "--steps start")?;
        let interval = parse_u64_field(parts[1], "--steps interval")?;
        let end = parse_u64_field(parts[2], "--steps end")?;
        if interval == 0 {
            return Err(Error::usage("--steps interval must be positive"));
        }
        if end < start {
            return Err(Error::usage(format!(
                "--steps end {end} is before start {start}"
            )));
        }
        if (end - start) % interval != 0 {
            return Err(Error::usage(format!(
                "--steps end {end} is not start {start} plus a whole number of intervals {interval}"
            )));
        }
        Ok((0..=(end - start) / interval)
            .map(|i| start + i * interval)
            .collect())
    } else {
        spec.split(',')
            .map(|part| parse_u64_field(part.trim(), "--steps entry"))
            .collect()
    }
}

/// Parses `--jolt step=amount`.
fn parse_jolt(spec: &str) -> Result<(u64, f64)> {
    let (step, amount) = spec
        .split_once('=')
        .ok_or_else(|| Error::usage(format!("--jolt must be step=amount, got '{spec}'")))?;
    let step = parse_u64_field(step.trim(), "--jolt step")?;
    let amount: f64 = amount
        .trim()
        .parse()
        .map_err(|_| Error::usage(format!("--jolt amount '{}' is not a number", amount.trim())))?;
    Ok((step, amount))
}

fn parse_u64_field(text: &str, what: &str) -> Result<u64> {
    text.parse()
        .map_err(|_| Error::usage(format!("{what} '{text}' is not a nonnegative integer")))
}
