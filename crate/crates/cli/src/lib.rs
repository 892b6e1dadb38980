//! `lexdef` subcommands and exit-code mapping.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use thiserror::Error;

use lexdef_core::aggregator::{AggregateOptions, DEFAULT_SIM_THRESHOLD};
use lexdef_core::attention::{run_selfcheck, SelfcheckOptions};
use lexdef_core::detector::{load_scores, DetectError, ScoreSource, ScoreTable, DEFAULT_THRESHOLD};
use lexdef_core::eval::{evaluate, read_gold, EvalError, Prediction, DEFAULT_PRECISION_WEIGHT, DEFAULT_RECALL_WEIGHT};
use lexdef_core::extract::{decode_bio, parse_bio_file, BioError, DefinitionRecord, RecordLine};
use lexdef_core::network::{build_network, export_graph, GraphFormat, NetworkError};
use lexdef_core::pipeline::{extract_reader, Extraction, PipelineError, PipelineOptions};
use lexdef_core::uslm::UslmError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_MALFORMED_XML: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_GOLD_MISMATCH: i32 = 4;
pub const EXIT_DUPLICATE_UNIT: i32 = 5;
pub const EXIT_SELFCHECK: i32 = 6;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: malformed XML: {message}")]
    MalformedXml { path: String, message: String },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    GoldMismatch(String),
    #[error("duplicate unit id {0}")]
    DuplicateUnit(String),
    #[error("{0} self-check properties failed")]
    Selfcheck(usize),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::MalformedXml { .. } => EXIT_MALFORMED_XML,
            CliError::Config(_) => EXIT_CONFIG,
            CliError::GoldMismatch(_) => EXIT_GOLD_MISMATCH,
            CliError::DuplicateUnit(_) => EXIT_DUPLICATE_UNIT,
            CliError::Selfcheck(_) => EXIT_SELFCHECK,
        }
    }

    fn io(path: &Path, source: io::Error) -> CliError {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lexdef", version, about = "Extract statutory definitions from USLM XML")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write one JSON line per extracted definition.
    Extract(ExtractArgs),
    /// Score detections against a gold label file.
    Eval(EvalArgs),
    /// Build the definition network from extracted JSONL records.
    Network(NetworkArgs),
    /// Run the attention property suite.
    Selfcheck(SelfcheckArgs),
    /// Decode BIO-tagged token sequences into term spans.
    DecodeBio(DecodeBioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    /// Built-in lexical patterns.
    Patterns,
    /// Scores from --scores only.
    External,
    /// Larger of the pattern score and the external score.
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Jsonl,
    Dot,
    Json,
}

#[derive(Debug, Args)]
pub struct DetectorArgs {
    /// USLM XML files or directories (searched recursively for *.xml).
    #[arg(long, num_args = 1.., value_delimiter = ',', env = "LEXDEF_INPUT")]
    pub input: Vec<PathBuf>,
    /// Tab-separated `identifier<TAB>score` file from an external classifier.
    #[arg(long, env = "LEXDEF_SCORES")]
    pub scores: Option<PathBuf>,
    #[arg(long, value_enum, env = "LEXDEF_MODE", default_value = "patterns")]
    pub mode: Mode,
    #[arg(long, env = "LEXDEF_THRESHOLD", default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long, env = "LEXDEF_SIM_THRESHOLD", default_value_t = DEFAULT_SIM_THRESHOLD)]
    pub sim_threshold: f64,
    /// Close the current unit at every non-definitional paragraph.
    #[arg(long, env = "LEXDEF_STRICT_FLUSH")]
    pub strict_flush: bool,
    /// Skip malformed XML files instead of failing.
    #[arg(long, env = "LEXDEF_KEEP_GOING")]
    pub keep_going: bool,
}

#[derive(Debug, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    #[arg(long, env = "LEXDEF_OUTPUT")]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, env = "LEXDEF_FORMAT", default_value = "jsonl")]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub detector: DetectorArgs,
    /// CSV with header `identifier,is_definition`.
    #[arg(long, env = "LEXDEF_GOLD")]
    pub gold: PathBuf,
    /// Largest fraction of gold identifiers that may lack a prediction.
    #[arg(long, env = "LEXDEF_MISMATCH_TOLERANCE", default_value_t = 0.1)]
    pub mismatch_tolerance: f64,
    #[arg(long, env = "LEXDEF_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NetworkArgs {
    /// JSONL files written by `extract`.
    #[arg(long, num_args = 1.., value_delimiter = ',', env = "LEXDEF_INPUT", required = true)]
    pub input: Vec<PathBuf>,
    #[arg(long, value_enum, env = "LEXDEF_FORMAT", default_value = "dot")]
    pub format: Format,
    #[arg(long, env = "LEXDEF_OUTPUT")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelfcheckArgs {
    #[arg(long, env = "LEXDEF_SEED", default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, hide = true)]
    pub force_fail: bool,
}

#[derive(Debug, Args)]
pub struct DecodeBioArgs {
    /// Records of two tab-separated lines (tokens, tags), blank-line separated.
    #[arg(long, env = "LEXDEF_INPUT")]
    pub input: PathBuf,
    #[arg(long, env = "LEXDEF_OUTPUT")]
    pub output: Option<PathBuf>,
}

/// Parse `args` (including the program name), run, and return the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match dispatch(cli.command, stdout, stderr) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Command::Extract(a) => cmd_extract(&a, stdout, stderr),
        Command::Eval(a) => cmd_eval(&a, stdout, stderr),
        Command::Network(a) => cmd_network(&a, stdout, stderr),
        Command::Selfcheck(a) => cmd_selfcheck(&a, stdout),
        Command::DecodeBio(a) => cmd_decode_bio(&a, stdout),
    }
}

fn unit_interval(name: &str, v: f64) -> Result<(), CliError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} {v} outside [0, 1]")))
    }
}

/// Expand directories into their `.xml` files, sorted; files are kept as given.
pub fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>, CliError> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| CliError::io(dir, e))?
            .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
            .collect::<Result<_, _>>()?;
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(&p, out)?;
            } else if p.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            walk(p, &mut out)?;
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

struct Detector {
    table: Option<ScoreTable>,
    mode: Mode,
    opts: PipelineOptions,
    keep_going: bool,
}

impl Detector {
    fn from_args(a: &DetectorArgs, stderr: &mut dyn Write) -> Result<Detector, CliError> {
        unit_interval("threshold", a.threshold)?;
        unit_interval("sim-threshold", a.sim_threshold)?;
        let table = match &a.scores {
            Some(p) => {
                let t = load_scores(p).map_err(|e| match e {
                    DetectError::Io(source) => CliError::io(p, source),
                    other => CliError::Config(format!("{}: {other}", p.display())),
                })?;
                if t.clamped > 0 {
                    let _ = writeln!(stderr, "warning: {} scores outside [0, 1] were clamped", t.clamped);
                }
                Some(t)
            }
            None => None,
        };
        if a.mode != Mode::Patterns && table.is_none() {
            return Err(CliError::Config("--mode external/max needs --scores".into()));
        }
        Ok(Detector {
            table,
            mode: a.mode,
            opts: PipelineOptions {
                threshold: a.threshold,
                aggregate: AggregateOptions {
                    sim_threshold: a.sim_threshold,
                    strict_flush: a.strict_flush,
                },
            },
            keep_going: a.keep_going,
        })
    }

    fn source(&self) -> ScoreSource<'_> {
        match (self.mode, &self.table) {
            (Mode::External, Some(t)) => ScoreSource::External(t),
            (Mode::Max, Some(t)) => ScoreSource::MaxOfBoth(t),
            _ => ScoreSource::Patterns,
        }
    }

    fn run_file(&self, path: &Path) -> Result<Extraction, CliError> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        extract_reader(BufReader::new(file), self.source(), self.opts).map_err(|e| match e {
            PipelineError::Uslm(UslmError::Io(source)) => CliError::io(path, source),
            PipelineError::Uslm(other) => CliError::MalformedXml {
                path: path.display().to_string(),
                message: other.to_string(),
            },
            other => CliError::Config(format!("{}: {other}", path.display())),
        })
    }

    /// Extract every file in parallel; results come back in input order.
    /// Malformed files are skipped with a warning under `--keep-going`.
    fn run_all(&self, files: &[PathBuf], stderr: &mut dyn Write) -> Result<Vec<(PathBuf, Extraction)>, CliError> {
        let results: Vec<Result<Extraction, CliError>> = files.par_iter().map(|f| self.run_file(f)).collect();
        let mut out = Vec::with_capacity(files.len());
        for (path, r) in files.iter().zip(results) {
            match r {
                Ok(x) => out.push((path.clone(), x)),
                Err(e @ CliError::MalformedXml { .. }) if self.keep_going => {
                    let _ = writeln!(stderr, "warning: skipped {e}");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

fn input_files(a: &DetectorArgs) -> Result<Vec<PathBuf>, CliError> {
    if a.input.is_empty() {
        return Err(CliError::Config("no --input given".into()));
    }
    let files = expand_inputs(&a.input)?;
    if files.is_empty() && !a.keep_going {
        return Err(CliError::Config("no XML files found under --input".into()));
    }
    Ok(files)
}

fn open_output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => {
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(stdout)),
    }
}

fn write_all(out: &mut dyn Write, bytes: &[u8], path: &Option<PathBuf>) -> Result<(), CliError> {
    let target = path.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    out.write_all(bytes)
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io(&target, e))
}

pub fn cmd_extract(a: &ExtractArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if a.format != Format::Jsonl {
        return Err(CliError::Config("extract writes jsonl only".into()));
    }
    let detector = Detector::from_args(&a.detector, stderr)?;
    let files = input_files(&a.detector)?;
    let results = detector.run_all(&files, stderr)?;

    let mut buf = Vec::new();
    let (mut total, mut review) = (0, 0);
    for (path, x) in &results {
        for r in &x.records {
            serde_json::to_writer(&mut buf, &r.to_line()).expect("records serialize");
            buf.push(b'\n');
            review += usize::from(r.needs_review());
        }
        total += x.records.len();
        let positives = x.detections.iter().filter(|d| d.is_definitional).count();
        let _ = writeln!(
            stderr,
            "{}: {} paragraphs, {} definitional, {} definitions",
            path.display(),
            x.paragraphs.len(),
            positives,
            x.records.len()
        );
        if x.missing_scores > 0 {
            let _ = writeln!(stderr, "warning: {}: {} paragraphs had no external score", path.display(), x.missing_scores);
        }
    }
    let _ = writeln!(stderr, "total: {} files, {} definitions, {} without a term", results.len(), total, review);
    let mut out = open_output(&a.output, stdout)?;
    write_all(&mut *out, &buf, &a.output)
}

fn eval_config(e: EvalError, path: &Path) -> CliError {
    CliError::Config(format!("{}: {e}", path.display()))
}

pub fn cmd_eval(a: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    unit_interval("mismatch-tolerance", a.mismatch_tolerance)?;
    let gold_file = File::open(&a.gold).map_err(|e| CliError::io(&a.gold, e))?;
    let gold = read_gold(gold_file).map_err(|e| eval_config(e, &a.gold))?;
    let detector = Detector::from_args(&a.detector, stderr)?;

    let preds: Vec<Prediction> = if a.detector.input.is_empty() {
        // bare score file
        let table = detector
            .table
            .as_ref()
            .ok_or_else(|| CliError::Config("eval needs --input or --scores".into()))?;
        let mut p: Vec<Prediction> = table
            .scores
            .iter()
            .map(|(id, &score)| Prediction {
                identifier: id.clone(),
                score,
                positive: score >= detector.opts.threshold,
            })
            .collect();
        p.sort_by(|x, y| x.identifier.cmp(&y.identifier));
        p
    } else {
        let files = input_files(&a.detector)?;
        detector
            .run_all(&files, stderr)?
            .iter()
            .flat_map(|(_, x)| x.detections.iter().map(Prediction::from))
            .collect()
    };

    let known: HashMap<&str, ()> = preds.iter().map(|p| (p.identifier.as_str(), ())).collect();
    let missing: Vec<&str> = gold
        .iter()
        .map(|g| g.identifier.as_str())
        .filter(|id| !known.contains_key(id))
        .collect();
    if !missing.is_empty() {
        let frac = missing.len() as f64 / gold.len() as f64;
        let _ = writeln!(
            stderr,
            "warning: {} of {} gold identifiers have no prediction (first: {})",
            missing.len(),
            gold.len(),
            missing[0]
        );
        if frac > a.mismatch_tolerance {
            return Err(CliError::GoldMismatch(format!(
                "{:.1}% of gold identifiers unmatched, tolerance {:.1}%",
                100.0 * frac,
                100.0 * a.mismatch_tolerance
            )));
        }
    }

    let report = evaluate(&preds, &gold, DEFAULT_PRECISION_WEIGHT, DEFAULT_RECALL_WEIGHT).map_err(|e| eval_config(e, &a.gold))?;
    if report.zero_division {
        let _ = writeln!(stderr, "warning: precision or recall is 0; weighted F reported as 0");
    }
    let mut json = serde_json::to_vec_pretty(&report).expect("report serializes");
    json.push(b'\n');
    let mut out = open_output(&a.output, stdout)?;
    write_all(&mut *out, &json, &a.output)
}

/// Read `extract` output. Blank lines are ignored.
pub fn read_records(path: &Path) -> Result<Vec<DefinitionRecord>, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(DefinitionRecord::from_line(rec));
    }
    Ok(out)
}

pub fn cmd_network(a: &NetworkArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    let format = match a.format {
        Format::Dot => GraphFormat::Dot,
        Format::Json => GraphFormat::Json,
        Format::Jsonl => return Err(CliError::Config("network writes dot or json".into())),
    };
    let mut records = Vec::new();
    for p in &a.input {
        records.extend(read_records(p)?);
    }
    let graph = build_network(&records).map_err(|e| match e {
        NetworkError::DuplicateUnit(id) => CliError::DuplicateUnit(id),
        other => CliError::Config(other.to_string()),
    })?;
    let unscoped = graph.edges.iter().filter(|e| e.unscoped).count();
    let _ = writeln!(
        stderr,
        "network: {} nodes, {} edges ({} assume unknown scope)",
        graph.nodes.len(),
        graph.edges.len(),
        unscoped
    );
    let text = export_graph(&graph, format);
    let mut out = open_output(&a.output, stdout)?;
    write_all(&mut *out, text.as_bytes(), &a.output)
}

pub fn cmd_selfcheck(a: &SelfcheckArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let outcomes = run_selfcheck(SelfcheckOptions {
        seed: a.seed,
        trials: a.trials,
        force_failure: a.force_fail,
    });
    let mut failed = 0;
    for o in &outcomes {
        failed += usize::from(!o.passed);
        let _ = writeln!(
            stdout,
            "{} {} worst={:.3e} tol={:.0e}",
            if o.passed { "PASS" } else { "FAIL" },
            o.name,
            o.worst,
            o.tolerance
        );
    }
    if failed > 0 {
        Err(CliError::Selfcheck(failed))
    } else {
        Ok(())
    }
}

pub fn cmd_decode_bio(a: &DecodeBioArgs, stdout: &mut dyn Write) -> Result<(), CliError> {
    let file = File::open(&a.input).map_err(|e| CliError::io(&a.input, e))?;
    let bio_err = |e: BioError| CliError::Config(format!("{}: {e}", a.input.display()));
    let records = parse_bio_file(BufReader::new(file)).map_err(bio_err)?;
    let mut buf = Vec::new();
    for r in &records {
        let d = decode_bio(&r.tokens, &r.tags).map_err(bio_err)?;
        serde_json::to_writer(&mut buf, &serde_json::json!({ "spans": d.spans, "repaired": d.repaired }))
            .expect("spans serialize");
        buf.push(b'\n');
    }
    let mut out = open_output(&a.output, stdout)?;
    write_all(&mut *out, &buf, &a.output)
}
