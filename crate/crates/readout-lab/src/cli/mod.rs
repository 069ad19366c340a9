//! Command-line front end over the experiment drivers, the meta-training
//! loop, and the convex-hull audit.
//!
//! Every command writes its artifacts into one output directory together
//! with a `*_meta.json` blob (fully resolved config, software version, seed
//! list) and a `*_manifest.json` recording a SHA-256 checksum per artifact.
//! Identical invocations reproduce identical bytes, so manifests double as
//! reproducibility receipts.
//!
//! Exit codes: 0 success, 1 computational failure (diverged solve,
//! non-finite loss, a failed check), 2 usage or input error. Config files
//! are JSON; explicit flags win over file values, which win over defaults.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::experiments::{
    calibration_bins_csv, calibration_csv, run_bimodal_sweep, run_calibration_suite,
    run_translation_sweep, run_worked_examples, sweep_csv, worked_examples_csv, BimodalConfig,
    CalibrationConfig, TranslationConfig,
};
use crate::geometry::flag_interior;
use crate::graphkit::{align_features, generate_sbm, hop_stack, sym_normalize};
use crate::metatrain::{
    bimodal_demo_setup, mix_seed, save_checkpoint, train, write_log_csv, EncoderParams, LogRow,
    TaskSource, TrainConfig,
};
use crate::numcore::{pca_project, Matrix};
use crate::readouts::fit_prototypes;

/// Parses `std::env::args_os()` and runs the selected command.
pub fn run() -> i32 {
    run_from(std::env::args_os())
}

/// Testable entry point: parses the given argument list, dispatches, and
/// maps errors to exit codes without touching the process.
pub fn run_from<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests arrive as "errors" but print to
            // stdout and succeed; real usage errors go to stderr.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Usage and input problems exit 2; numerical failures exit 1.
fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParam(_)
        | Error::ShapeMismatch(_)
        | Error::ClassWithoutSupport { .. }
        | Error::InsufficientClasses(_)
        | Error::Sampling(_)
        | Error::MissingEmbedding(_)
        | Error::Parse(_)
        | Error::Io(_)
        | Error::Json(_) => 2,
        Error::NotPositiveDefinite { .. }
        | Error::NoConvergence { .. }
        | Error::Degenerate(_)
        | Error::NonFiniteLoss { .. }
        | Error::Diverged(_) => 1,
    }
}

#[derive(Parser)]
#[command(
    name = "readout-lab",
    version,
    about = "Few-shot readout experiments, meta-training, and hull audits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one synthetic experiment driver and write CSV + JSON artifacts.
    Experiment {
        #[arg(value_enum)]
        name: ExperimentName,
        #[command(flatten)]
        flags: RunFlags,
    },
    /// Meta-train an encoder through the closed-form ridge readout.
    Train(TrainFlags),
    /// Audit an embedding file for convex-hull inclusion among class
    /// prototypes; writes a hull report and 2-D PCA coordinates.
    Audit(AuditFlags),
    /// Print the package version.
    Version,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentName {
    Translation,
    Bimodal,
    Calibration,
    WorkedExamples,
}

impl ExperimentName {
    fn stem(self) -> &'static str {
        match self {
            ExperimentName::Translation => "translation",
            ExperimentName::Bimodal => "bimodal",
            ExperimentName::Calibration => "calibration",
            ExperimentName::WorkedExamples => "worked_examples",
        }
    }

    fn command_line(self) -> &'static str {
        match self {
            ExperimentName::Translation => "experiment translation",
            ExperimentName::Bimodal => "experiment bimodal",
            ExperimentName::Calibration => "experiment calibration",
            ExperimentName::WorkedExamples => "experiment worked-examples",
        }
    }
}

#[derive(Args)]
struct RunFlags {
    /// Output directory; falls back to READOUT_LAB_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First seed of the sweep.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long, default_value_t = 20)]
    seeds: usize,
    /// Parallel seed fan-out; 1 runs everything on one thread.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// JSON config file for the driver; flags still win where they overlap.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Preset {
    /// Node, edge, and graph episodes over stochastic block models.
    SbmMix,
    /// Three-class node task whose first class is bimodal and mean-dominated.
    BimodalDemo,
}

impl Preset {
    fn name(self) -> &'static str {
        match self {
            Preset::SbmMix => "sbm-mix",
            Preset::BimodalDemo => "bimodal-demo",
        }
    }
}

#[derive(Args)]
struct TrainFlags {
    /// Task preset providing the encoder and episode sources.
    #[arg(long, value_enum, default_value_t = Preset::SbmMix)]
    preset: Preset,
    /// Optimizer steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Episodes per step: 1 (one sampled task) or 3 (one per task kind).
    #[arg(long)]
    episodes_per_step: Option<usize>,
    /// Training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; falls back to READOUT_LAB_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON train config; missing fields take preset values, flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct AuditFlags {
    /// Embedding matrix: numeric CSV (one row per line) or RLXM1 binary.
    embeddings: PathBuf,
    /// Text file with one integer class id per embedding row.
    labels: PathBuf,
    /// Output directory; falls back to READOUT_LAB_OUT, then ./out.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Experiment { name, flags } => cmd_experiment(name, &flags),
        Command::Train(flags) => cmd_train(&flags),
        Command::Audit(flags) => cmd_audit(&flags),
        Command::Version => {
            println!("readout-lab {}", env!("CARGO_PKG_VERSION"));
            Ok(0)
        }
    }
}

/// Output directory precedence: --out flag, READOUT_LAB_OUT, "./out".
fn resolve_out(flag: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p.to_path_buf();
    }
    if let Some(v) = std::env::var_os("READOUT_LAB_OUT") {
        if !v.is_empty() {
            return PathBuf::from(v);
        }
    }
    PathBuf::from("out")
}

fn seed_list(base: u64, count: usize) -> Result<Vec<u64>> {
    if count == 0 {
        return Err(Error::InvalidParam("--seeds must be at least 1".into()));
    }
    base.checked_add(count as u64 - 1).ok_or_else(|| {
        Error::InvalidParam(format!("seed range {base} + {count} overflows"))
    })?;
    Ok((0..count as u64).map(|i| base + i).collect())
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn to_json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut v = serde_json::to_vec_pretty(value)?;
    v.push(b'\n');
    Ok(v)
}

/// Deserializes `path` as a JSON object layered over `base`: keys present
/// in the file replace the base values, everything else keeps the base.
/// Unknown keys are rejected by the target type.
fn merge_config<T: Serialize + DeserializeOwned>(base: &T, path: Option<&Path>) -> Result<T> {
    let mut merged = serde_json::to_value(base)?;
    if let Some(p) = path {
        let text = std::fs::read_to_string(p)?;
        let overlay: serde_json::Value = serde_json::from_str(&text)?;
        let serde_json::Value::Object(overlay) = overlay else {
            return Err(Error::Parse(format!(
                "config file {} must hold a JSON object",
                p.display()
            )));
        };
        let serde_json::Value::Object(target) = &mut merged else {
            return Err(Error::Parse("config type does not serialize to an object".into()));
        };
        for (k, v) in overlay {
            target.insert(k, v);
        }
    }
    Ok(serde_json::from_value(merged)?)
}

/// Collects written artifacts and their checksums for the manifest.
struct ArtifactSet {
    dir: PathBuf,
    checksums: BTreeMap<String, String>,
}

impl ArtifactSet {
    fn create(dir: &Path) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(ArtifactSet { dir: dir.to_path_buf(), checksums: BTreeMap::new() })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes)?;
        self.checksums.insert(name.to_string(), sha256_hex(bytes));
        println!("wrote {}", path.display());
        Ok(())
    }

    /// Checksums a file some other writer already placed in the directory.
    fn note_file(&mut self, name: &str) -> Result<()> {
        let path = self.dir.join(name);
        let bytes = std::fs::read(&path)?;
        self.checksums.insert(name.to_string(), sha256_hex(&bytes));
        println!("wrote {}", path.display());
        Ok(())
    }
}

#[derive(Serialize)]
struct RunMetadata<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    seeds: &'a [u64],
    jobs: usize,
}

#[derive(Serialize)]
struct RunManifest<'a, C: Serialize> {
    command: &'a str,
    version: &'a str,
    config: &'a C,
    seeds: &'a [u64],
    jobs: usize,
    out_dir: String,
    artifacts: BTreeMap<String, String>,
}

/// Writes `<stem>_meta.json`, then `<stem>_manifest.json` with a checksum
/// for every artifact written so far (the metadata blob included).
fn write_meta_and_manifest<C: Serialize>(
    set: &mut ArtifactSet,
    command: &str,
    stem: &str,
    config: &C,
    seeds: &[u64],
    jobs: usize,
) -> Result<()> {
    let version = env!("CARGO_PKG_VERSION");
    let meta = RunMetadata { command, version, config, seeds, jobs };
    set.write(&format!("{stem}_meta.json"), &to_json_bytes(&meta)?)?;

    let manifest = RunManifest {
        command,
        version,
        config,
        seeds,
        jobs,
        out_dir: set.dir.display().to_string(),
        artifacts: set.checksums.clone(),
    };
    let name = format!("{stem}_manifest.json");
    let path = set.dir.join(&name);
    std::fs::write(&path, to_json_bytes(&manifest)?)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_experiment(name: ExperimentName, flags: &RunFlags) -> Result<i32> {
    if flags.jobs == 0 {
        return Err(Error::InvalidParam("--jobs must be at least 1".into()));
    }
    let out = resolve_out(flags.out.as_deref());
    let mut set = ArtifactSet::create(&out)?;
    let stem = name.stem();
    let command = name.command_line();

    if name == ExperimentName::WorkedExamples {
        if flags.config.is_some() {
            return Err(Error::InvalidParam(
                "experiment worked-examples takes no config file".into(),
            ));
        }
        let checks = run_worked_examples()?;
        for c in &checks {
            println!("{} {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        set.write(&format!("{stem}.csv"), worked_examples_csv(&checks).as_bytes())?;
        let empty = serde_json::Map::new();
        write_meta_and_manifest(&mut set, command, stem, &empty, &[], flags.jobs)?;
        let failed = checks.iter().filter(|c| !c.passed).count();
        if failed > 0 {
            eprintln!("{failed} worked example check(s) failed");
            return Ok(1);
        }
        return Ok(0);
    }

    let seeds = seed_list(flags.seed, flags.seeds)?;
    match name {
        ExperimentName::Translation => {
            let cfg: TranslationConfig =
                merge_config(&TranslationConfig::default(), flags.config.as_deref())?;
            let res = run_translation_sweep(&cfg, &seeds, flags.jobs)?;
            set.write(&format!("{stem}.csv"), sweep_csv(&res).as_bytes())?;
            write_meta_and_manifest(&mut set, command, stem, &cfg, &seeds, flags.jobs)?;
        }
        ExperimentName::Bimodal => {
            let cfg: BimodalConfig =
                merge_config(&BimodalConfig::default(), flags.config.as_deref())?;
            let res = run_bimodal_sweep(&cfg, &seeds, flags.jobs)?;
            set.write(&format!("{stem}.csv"), sweep_csv(&res).as_bytes())?;
            write_meta_and_manifest(&mut set, command, stem, &cfg, &seeds, flags.jobs)?;
        }
        ExperimentName::Calibration => {
            let cfg: CalibrationConfig =
                merge_config(&CalibrationConfig::default(), flags.config.as_deref())?;
            let summaries = run_calibration_suite(&cfg, &seeds, flags.jobs)?;
            set.write(&format!("{stem}.csv"), calibration_csv(&summaries).as_bytes())?;
            set.write(
                &format!("{stem}_bins.csv"),
                calibration_bins_csv(&summaries).as_bytes(),
            )?;
            write_meta_and_manifest(&mut set, command, stem, &cfg, &seeds, flags.jobs)?;
        }
        ExperimentName::WorkedExamples => unreachable!("handled above"),
    }
    Ok(0)
}

#[derive(Serialize)]
struct TrainRunConfig<'a> {
    preset: &'a str,
    train: &'a TrainConfig,
}

/// Node, edge, and graph task sources over stochastic block models, sized
/// so every task kind supports K = Q = 8 episodes. One 300-node 3-block
/// graph feeds node and edge episodes; 32 small 2-block graphs with
/// alternating labels feed graph episodes.
fn sbm_mix_setup(seed: u64) -> Result<(EncoderParams, Vec<TaskSource>)> {
    const D_IN: usize = 8;
    const ELL: usize = 3;
    let g = generate_sbm(300, &[100, 100, 100], 0.3, 0.05, mix_seed(seed, 1, 41))?;
    let a = sym_normalize(&g);
    let x0 = align_features(&g, D_IN, 2, mix_seed(seed, 2, 41))?;
    let hops = hop_stack(&x0, &a, ELL)?.hops;

    let mut graphs = Vec::new();
    let mut stacks = Vec::new();
    for i in 0..32u64 {
        let mut gg = generate_sbm(12, &[6, 6], 0.6, 0.1, mix_seed(seed, 3 + i, 41))?;
        gg.graph_label = Some((i % 2) as usize);
        let an = sym_normalize(&gg);
        let x = align_features(&gg, D_IN, 2, mix_seed(seed, 100 + i, 41))?;
        stacks.push(hop_stack(&x, &an, ELL)?.hops);
        graphs.push(gg);
    }

    let params =
        EncoderParams::new_hop_attention(D_IN, ELL + 1, 16, 16, 0.1, mix_seed(seed, 9, 9))?;
    let sources = vec![
        TaskSource::Node { graph: g.clone(), hops: hops.clone() },
        TaskSource::Edge { graph: g, hops },
        TaskSource::GraphSet { graphs, hops: stacks },
    ];
    Ok((params, sources))
}

fn preset_base_config(preset: Preset) -> TrainConfig {
    match preset {
        Preset::SbmMix => TrainConfig {
            k_override: Some(8),
            q_override: Some(8),
            ..TrainConfig::default()
        },
        Preset::BimodalDemo => bimodal_demo_setup(0).1,
    }
}

fn mean_query_accuracy(log: &[LogRow], first_step: usize) -> Option<f64> {
    let vals: Vec<f64> =
        log.iter().filter(|r| r.step >= first_step).map(|r| r.query_acc).collect();
    if vals.is_empty() {
        return None;
    }
    Some(vals.iter().sum::<f64>() / vals.len() as f64)
}

fn cmd_train(flags: &TrainFlags) -> Result<i32> {
    let out = resolve_out(flags.out.as_deref());
    let mut config = merge_config(&preset_base_config(flags.preset), flags.config.as_deref())?;
    if let Some(steps) = flags.steps {
        config.steps = steps;
    }
    if let Some(eps) = flags.episodes_per_step {
        config.episodes_per_step = eps;
    }
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    config.validate()?;

    let (params, sources) = match flags.preset {
        Preset::SbmMix => sbm_mix_setup(config.seed)?,
        Preset::BimodalDemo => {
            let (params, _, sources) = bimodal_demo_setup(config.seed);
            (params, sources)
        }
    };

    let started = Instant::now();
    let (trained, log) = train(params, &config, &sources)?;
    println!(
        "trained {} steps in {:.2}s ({} episodes logged)",
        config.steps,
        started.elapsed().as_secs_f64(),
        log.len()
    );
    if let Some(acc) = mean_query_accuracy(&log, config.steps.saturating_sub(50)) {
        println!("final-window mean query accuracy: {acc:.4}");
    }

    let mut set = ArtifactSet::create(&out)?;
    save_checkpoint(&set.dir.join("checkpoint.bin"), &trained)?;
    set.note_file("checkpoint.bin")?;
    set.write("train_log.csv", write_log_csv(&log).as_bytes())?;
    let echo = TrainRunConfig { preset: flags.preset.name(), train: &config };
    write_meta_and_manifest(&mut set, "train", "train", &echo, &[config.seed], 1)?;
    Ok(0)
}

pub const MATRIX_MAGIC: &[u8; 5] = b"RLXM1";

/// Writes a matrix as magic bytes, little-endian u64 row and column counts,
/// then the row-major f64 payload.
pub fn write_matrix_binary(path: &Path, m: &Matrix) -> Result<()> {
    let mut buf = Vec::with_capacity(MATRIX_MAGIC.len() + 16 + m.data().len() * 8);
    buf.extend_from_slice(MATRIX_MAGIC);
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for &v in m.data() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, buf)?;
    Ok(())
}

fn read_matrix_binary(bytes: &[u8]) -> Result<Matrix> {
    let body = &bytes[MATRIX_MAGIC.len()..];
    if body.len() < 16 {
        return Err(Error::Parse("binary matrix truncated before its shape".into()));
    }
    let rows = u64::from_le_bytes(body[0..8].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(body[8..16].try_into().unwrap()) as usize;
    let count = rows
        .checked_mul(cols)
        .ok_or_else(|| Error::Parse(format!("binary matrix shape overflow: {rows}x{cols}")))?;
    let payload = &body[16..];
    if payload.len() != count * 8 {
        return Err(Error::Parse(format!(
            "binary matrix payload holds {} bytes, shape {rows}x{cols} needs {}",
            payload.len(),
            count * 8
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Matrix::try_from_vec(rows, cols, data)
}

fn read_matrix_csv(text: &str) -> Result<Matrix> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for field in line.split(',') {
            let field = field.trim();
            row.push(field.parse::<f64>().map_err(|_| {
                Error::Parse(format!("line {}: '{field}' is not a number", i + 1))
            })?);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "line {}: {} fields, expected {}",
                    i + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse("embeddings file holds no rows".into()));
    }
    let cols = rows[0].len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Matrix::try_from_vec(data.len() / cols, cols, data)
}

/// Reads an embedding matrix, deciding the format by the RLXM1 magic.
pub fn read_matrix_file(path: &Path) -> Result<Matrix> {
    let bytes = std::fs::read(path)?;
    if bytes.starts_with(MATRIX_MAGIC) {
        return read_matrix_binary(&bytes);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Parse(format!("{} is neither RLXM1 nor UTF-8 CSV", path.display())))?;
    read_matrix_csv(&text)
}

/// Reads one integer class id per non-empty line.
pub fn read_labels_file(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut labels = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        labels.push(line.parse::<usize>().map_err(|_| {
            Error::Parse(format!("line {}: '{line}' is not a class id", i + 1))
        })?);
    }
    Ok(labels)
}

#[derive(Serialize)]
struct AuditConfig {
    embeddings: String,
    labels: String,
}

#[derive(Serialize)]
struct AuditReport {
    /// Distinct class ids from the labels file, ascending; all per-class
    /// vectors below follow this order.
    classes: Vec<usize>,
    counts: Vec<usize>,
    d_ch: Vec<f64>,
    d_ch_norm: Vec<f64>,
    weights: Vec<Vec<f64>>,
    interior: Vec<bool>,
    /// Original ids of the classes flagged as hull-interior.
    flagged: Vec<usize>,
    mean_pairwise: f64,
}

fn cmd_audit(flags: &AuditFlags) -> Result<i32> {
    let out = resolve_out(flags.out.as_deref());
    let z = read_matrix_file(&flags.embeddings)?;
    let raw_labels = read_labels_file(&flags.labels)?;
    if raw_labels.len() != z.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} embedding rows but {} labels",
            z.rows(),
            raw_labels.len()
        )));
    }

    let mut classes: Vec<usize> = raw_labels.clone();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::InsufficientClasses(format!(
            "audit needs at least 2 distinct labels, found {}",
            classes.len()
        )));
    }
    let dense: Vec<usize> =
        raw_labels.iter().map(|l| classes.binary_search(l).unwrap()).collect();
    let mut counts = vec![0usize; classes.len()];
    let mut y = Matrix::zeros(z.rows(), classes.len());
    for (i, &c) in dense.iter().enumerate() {
        counts[c] += 1;
        y[(i, c)] = 1.0;
    }

    let proto = fit_prototypes(&z, &y)?;
    let hull = flag_interior(&proto.prototypes)?;
    let flagged: Vec<usize> = hull
        .interior_flag
        .iter()
        .enumerate()
        .filter_map(|(c, &f)| f.then_some(classes[c]))
        .collect();
    let report = AuditReport {
        classes: classes.clone(),
        counts,
        d_ch: hull.d_ch.clone(),
        d_ch_norm: hull.d_ch_norm.clone(),
        weights: hull.weights.clone(),
        interior: hull.interior_flag.clone(),
        flagged: flagged.clone(),
        mean_pairwise: hull.mean_pairwise,
    };

    let pca = pca_project(&z, 2)?;
    let mut csv = String::from("x,y,label\n");
    for i in 0..z.rows() {
        csv.push_str(&format!("{},{},{}\n", pca[(i, 0)], pca[(i, 1)], raw_labels[i]));
    }

    let mut set = ArtifactSet::create(&out)?;
    set.write("hull_report.json", &to_json_bytes(&report)?)?;
    set.write("pca.csv", csv.as_bytes())?;
    let cfg = AuditConfig {
        embeddings: flags.embeddings.display().to_string(),
        labels: flags.labels.display().to_string(),
    };
    write_meta_and_manifest(&mut set, "audit", "audit", &cfg, &[], 1)?;

    if flagged.is_empty() {
        println!("no class prototype sits inside the others' hull");
    } else {
        let names: Vec<String> = flagged.iter().map(|c| c.to_string()).collect();
        println!("hull-interior classes: {}", names.join(", "));
    }
    Ok(0)
}
