//! `segdesc`: generate synthetic segments, preprocess them, train and
//! evaluate segment descriptors.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 numeric failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use segdesc::dataset::{read_dataset, KeyValues, Split};
use segdesc::eval::{EvalReport, CSV_HEADER};
use segdesc::models::Preset;
use segdesc::nn::gradcheck_suite;
use segdesc::par::Execution;
use segdesc::pipeline::{self, LoadedModel, Method, PipelineConfig, PreparedData};
use segdesc::Error;

#[derive(Parser, Debug)]
#[command(name = "segdesc", version, about = "Learned descriptors for 3D point-cloud segments")]
struct Cli {
    /// Run single-threaded. Output is identical either way.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnedMethod {
    Group,
    Siamese,
    Contrastive,
}

impl From<LearnedMethod> for Method {
    fn from(m: LearnedMethod) -> Self {
        match m {
            LearnedMethod::Group => Method::Group,
            LearnedMethod::Siamese => Method::Siamese,
            LearnedMethod::Contrastive => Method::Contrastive,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum EvalMethod {
    Group,
    Siamese,
    Contrastive,
    Eigen,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PresetArg {
    Default,
    Small,
}

impl From<PresetArg> for Preset {
    fn from(p: PresetArg) -> Self {
        match p {
            PresetArg::Default => Preset::Default,
            PresetArg::Small => Preset::Small,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BenchPreset {
    Default,
    Small,
    Both,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset into <out>/segments.seg.
    Generate {
        /// Config file with `synthetic.*` keys; defaults when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides `synthetic.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Group, split, align, augment, voxelize, deduplicate and normalize.
    Preprocess {
        /// Directory holding segments.seg, or a segment file.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a descriptor network and write a checkpoint.
    Train {
        #[arg(long, value_enum)]
        method: LearnedMethod,
        #[arg(long, value_enum)]
        preset: Option<PresetArg>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Preprocessed directory; overrides `data.dir`.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write descriptors of every preprocessed sample as CSV.
    Extract {
        #[arg(long)]
        model: PathBuf,
        /// Preprocessed directory.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// ROC and candidate-match evaluation on the test split.
    Evaluate {
        #[arg(long, value_enum)]
        method: EvalMethod,
        /// Checkpoint of a learned method.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Also evaluate the eigenvalue baseline.
        #[arg(long)]
        baseline_eigen: bool,
        /// Preprocessed directory; defaults to the one the model was trained on.
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Report directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Time descriptor extraction per preset.
    Bench {
        /// Also time this checkpoint's network; sets the grid size.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "both")]
        preset: BenchPreset,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Grid size nx,ny,nz when no model is given.
        #[arg(long, value_delimiter = ',')]
        grid: Option<Vec<usize>>,
    },
    /// Finite-difference check of every layer kind and loss.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

enum Failure {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type CliResult = std::result::Result<(), Failure>;

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, Failure> {
    match path {
        // Any problem with the config file itself is a usage error.
        Some(p) => PipelineConfig::read(p).map_err(|e| Failure::Usage(e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

fn cmd_generate(spec: Option<&Path>, out: &Path, seed: Option<u64>, exec: Execution) -> CliResult {
    let mut s = segdesc::dataset::SyntheticSpec::default();
    if let Some(p) = spec {
        let usage = |e: Error| Failure::Usage(e.to_string());
        let kv = KeyValues::read(p).map_err(usage)?;
        s.apply(&kv).map_err(usage)?;
        kv.finish().map_err(usage)?;
    }
    if let Some(seed) = seed {
        s.seed = seed;
    }
    let d = pipeline::generate(&s, out, exec)?;
    println!(
        "wrote {} segments of {} groups to {} ({} views dropped)",
        d.records.len(),
        s.n_groups,
        out.join(pipeline::SEGMENTS_FILE).display(),
        d.dropped_views
    );
    Ok(())
}

fn cmd_preprocess(input: &Path, config: Option<&Path>, out: &Path, exec: Execution) -> CliResult {
    let cfg = load_config(config)?;
    let file = if input.is_dir() {
        input.join(pipeline::SEGMENTS_FILE)
    } else {
        input.to_path_buf()
    };
    let records = read_dataset(&file)?;
    let p = pipeline::preprocess_records(&records, &cfg, exec)?;
    pipeline::write_preprocessed(out, &file, &cfg, &p)?;
    for (k, v) in &p.summary {
        println!("{k}={v}");
    }
    Ok(())
}

fn cmd_train(
    method: Method,
    preset: Option<Preset>,
    config: Option<&Path>,
    input: Option<&Path>,
    out: &Path,
    exec: Execution,
) -> CliResult {
    let mut cfg = load_config(config)?;
    if let Some(p) = preset {
        cfg.preset = p;
    }
    let dir = input
        .map(Path::to_path_buf)
        .or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| Failure::Usage("no preprocessed data: pass --in or set data.dir in the config".into()))?;
    let data = PreparedData::open(&dir)?;
    let (ckpt, report) = pipeline::train_method(method, &cfg, &data, exec)?;
    ckpt.save(out)?;
    println!("{report}");
    Ok(())
}

fn cmd_extract(model: &Path, input: &Path, out: &Path, exec: Execution) -> CliResult {
    let m = LoadedModel::load(model)?;
    let data = PreparedData::open(input)?;
    let sets = Split::ALL
        .into_iter()
        .filter(|s| data.manifest.voxel_files.contains_key(s))
        .map(|s| Ok((s, data.load(s, exec)?)))
        .collect::<Result<Vec<_>, Error>>()?;
    let refs: Vec<_> = sets.iter().map(|(s, set)| (*s, set)).collect();
    std::fs::write(out, pipeline::descriptors_csv(&m.net, &refs, exec)?)?;
    println!(
        "wrote {} descriptors to {}",
        sets.iter().map(|(_, s)| s.len()).sum::<usize>(),
        out.display()
    );
    Ok(())
}

fn write_report(dir: &Path, r: &EvalReport) -> CliResult {
    std::fs::write(dir.join(format!("{}.csv", r.method)), r.to_csv())?;
    std::fs::write(dir.join(format!("{}.records", r.method)), r.to_records())?;
    println!(
        "{}: auc={:.4} candidate_accuracy={:.4} ({} of {} segments, {} excluded){}",
        r.method,
        r.roc.auc,
        r.candidate.accuracy,
        r.candidate.correct,
        r.candidate.evaluated,
        r.candidate.excluded,
        r.throughput
            .map_or_else(String::new, |t| format!(" segments_per_second={t:.1}"))
    );
    Ok(())
}

fn cmd_evaluate(
    method: EvalMethod,
    model: Option<&Path>,
    baseline_eigen: bool,
    input: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
    exec: Execution,
) -> CliResult {
    let cfg = load_config(config)?;
    let loaded = match (method, model) {
        (EvalMethod::Eigen, _) => None,
        (_, Some(p)) => Some(LoadedModel::load(p)?),
        (_, None) => return Err(Failure::Usage("--model is required for learned methods".into())),
    };
    if let Some(m) = &loaded {
        let want = match method {
            EvalMethod::Group => Method::Group,
            EvalMethod::Siamese => Method::Siamese,
            EvalMethod::Contrastive => Method::Contrastive,
            EvalMethod::Eigen => Method::Eigen,
        };
        if m.method != want {
            return Err(Failure::Usage(format!(
                "checkpoint holds a {} model, not {want}",
                m.method
            )));
        }
    }
    let dir = input
        .map(Path::to_path_buf)
        .or_else(|| loaded.as_ref().and_then(|m| m.data_dir.clone()))
        .or_else(|| cfg.data_dir.clone())
        .ok_or_else(|| Failure::Usage("no preprocessed data: pass --in".into()))?;
    let data = PreparedData::open(&dir)?;
    std::fs::create_dir_all(out)?;
    let mut reports = Vec::new();
    if let Some(m) = &loaded {
        reports.push(pipeline::evaluate_model(m, &data, &cfg, exec)?);
    }
    if baseline_eigen || loaded.is_none() {
        reports.push(pipeline::evaluate_eigen(&data, &cfg, exec)?);
    }
    let mut summary = format!("{CSV_HEADER}\n");
    for r in &reports {
        write_report(out, r)?;
        summary.push_str(&r.to_csv_rows());
    }
    std::fs::write(out.join("report.csv"), summary)?;
    Ok(())
}

fn cmd_bench(
    model: Option<&Path>,
    preset: BenchPreset,
    config: Option<&Path>,
    grid: Option<&[usize]>,
    exec: Execution,
) -> CliResult {
    let cfg = load_config(config)?;
    let loaded = model.map(LoadedModel::load).transpose()?;
    let dims = match (&loaded, grid) {
        (Some(m), _) => m.net.grid_dims(),
        (None, Some(&[x, y, z])) => [x, y, z],
        (None, Some(_)) => return Err(Failure::Usage("--grid takes three sizes, nx,ny,nz".into())),
        (None, None) => cfg.preprocess.grid.dims,
    };
    let dim = loaded.as_ref().map_or(cfg.descriptor_dim, |m| m.net.descriptor_dim());
    let batch = pipeline::bench_batch(dims, cfg.bench.batch, 0)?;
    let presets: &[Preset] = match preset {
        BenchPreset::Default => &[Preset::Default],
        BenchPreset::Small => &[Preset::Small],
        BenchPreset::Both => &[Preset::Default, Preset::Small],
    };
    println!("label,segments_per_second,min,max,relative_spread,repetitions,batch,parallel");
    let print = |label: &str, t: &segdesc::eval::Throughput| {
        println!(
            "{label},{:.2},{:.2},{:.2},{:.4},{},{},{}",
            t.segments_per_second, t.min, t.max, t.relative_spread, t.repetitions, t.batch, t.parallel
        )
    };
    for (p, t) in pipeline::bench_presets(presets, dim, &batch, cfg.bench.repetitions, exec)? {
        print(&p.to_string(), &t);
    }
    if let Some(m) = &loaded {
        let t = segdesc::eval::throughput_bench(&m.net, &batch, cfg.bench.repetitions, exec)?;
        print("model", &t);
    }
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> CliResult {
    let cases = gradcheck_suite(seed)?;
    let mut failed = 0;
    for c in &cases {
        let verdict = if c.passed() { "ok" } else { "FAIL" };
        println!(
            "{verdict:4} {:.3e} < {:.0e}  {}",
            c.max_relative_error, c.tolerance, c.name
        );
        failed += usize::from(!c.passed());
    }
    if failed > 0 {
        return Err(Failure::Numeric(format!(
            "{failed} of {} gradient checks above tolerance",
            cases.len()
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    let exec = if cli.sequential {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    match cli.command {
        Command::Generate { spec, out, seed } => cmd_generate(spec.as_deref(), &out, seed, exec),
        Command::Preprocess { input, config, out } => cmd_preprocess(&input, config.as_deref(), &out, exec),
        Command::Train {
            method,
            preset,
            config,
            input,
            out,
        } => cmd_train(
            method.into(),
            preset.map(Into::into),
            config.as_deref(),
            input.as_deref(),
            &out,
            exec,
        ),
        Command::Extract { model, input, out } => cmd_extract(&model, &input, &out, exec),
        Command::Evaluate {
            method,
            model,
            baseline_eigen,
            input,
            config,
            out,
        } => cmd_evaluate(
            method,
            model.as_deref(),
            baseline_eigen,
            input.as_deref(),
            config.as_deref(),
            &out,
            exec,
        ),
        Command::Bench {
            model,
            preset,
            config,
            grid,
        } => cmd_bench(model.as_deref(), preset, config.as_deref(), grid.as_deref(), exec),
        Command::Gradcheck { seed } => cmd_gradcheck(seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
