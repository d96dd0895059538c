//! The `slicewatch` command line.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use slicewatch_core::attack::{inject_all, AttackConfig, AttackStrategy};
use slicewatch_core::eval::experiment::{
    compare_scores, evaluate, of_slice, roc_of, stage_seed, sweep_cell_seed, train_pair,
    train_test_split, Stage,
};
use slicewatch_core::features::{extract_all, FeatureVector};
use slicewatch_core::flow::{aggregate, anonymize_windows, join_labels};
use slicewatch_core::learn::{train_artifact_on_grid, GridPoint, ModelKind, Scope};
use slicewatch_core::traffic::ScenarioConfig;
use slicewatch_core::SliceId;

use crate::campaign::{default_workers, par_map, run_campaign, RunOptions};
use crate::error::{Error, Result};
use crate::formats::{
    self, read_dataset, read_events, read_model, read_stream, write_dataset, write_events,
    write_model, write_stream,
};
use crate::manifest::{ExperimentManifest, MANIFEST_FILE};
use crate::registry::ModelRegistry;
use crate::report::{campaign_checks, write_bundle};
use crate::service::{line_source, serve, ServeConfig};

pub const OUT_ENV: &str = "SLICEWATCH_OUT";

/// Exit code of `repro --check` when a check fails.
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "slicewatch",
    version,
    about = "Slice-aware identity spoofing detection for 5G traffic"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a benign packet stream.
    Generate(GenerateArgs),
    /// Inject spoofing attacks into a stream.
    Inject(InjectArgs),
    /// Aggregate a stream into labeled flow windows and features.
    Featurize(FeaturizeArgs),
    /// Train a detector on a feature dataset.
    Train(TrainArgs),
    /// Score a model on a feature dataset.
    Evaluate(EvaluateArgs),
    /// Per-slice models against one pooled model over several datasets.
    Compare(CompareArgs),
    /// RF F1 over window lengths and intensities.
    Sweep(SweepArgs),
    /// Run the streaming detector over a stream file or socket.
    Serve(ServeArgs),
    /// Run (or resume) a manifest and write its report bundle.
    Report(ReportArgs),
    /// Build a manifest from flags, run it and write the report bundle.
    Repro(ReproArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum SliceArg {
    Embb,
    Urllc,
    Mmtc,
    All,
}

impl SliceArg {
    fn scope(self) -> Scope {
        match self {
            SliceArg::Embb => Scope::PerSlice(SliceId::Embb),
            SliceArg::Urllc => Scope::PerSlice(SliceId::Urllc),
            SliceArg::Mmtc => Scope::PerSlice(SliceId::Mmtc),
            SliceArg::All => Scope::Global,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Lr,
    Rf,
}

impl From<ModelArg> for ModelKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Lr => ModelKind::Lr,
            ModelArg::Rf => ModelKind::Rf,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
enum StrategyArg {
    Impersonation,
    Replay,
    Both,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Scenario file (TOML); flags below are ignored when given.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Scenario length in seconds.
    #[arg(long)]
    duration: Option<f64>,
    /// Twenty-minute captures at the sparser full-scale density.
    #[arg(long)]
    paper_scale: bool,
    /// Output stream; `.bin` selects the binary format.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the effective scenario config here.
    #[arg(long)]
    save_config: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InjectArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long)]
    events: PathBuf,
    /// Fraction of each slice's flows attacked, split evenly over strategies.
    #[arg(long, default_value_t = 0.2)]
    intensity: f64,
    #[arg(long, value_enum, default_value_t = StrategyArg::Both)]
    strategy: StrategyArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Restrict the attack to these slices.
    #[arg(long, value_delimiter = ',')]
    slices: Vec<SliceId>,
}

#[derive(Args, Debug)]
struct FeaturizeArgs {
    #[arg(long)]
    stream: PathBuf,
    #[arg(long)]
    events: PathBuf,
    #[arg(long, default_value_t = 2)]
    window: u64,
    #[arg(long, default_value_t = 1)]
    tolerance_ms: u64,
    #[arg(long, short)]
    out: PathBuf,
    /// Also write the labeled windows (plus their `.series` sidecar).
    #[arg(long)]
    windows: Option<PathBuf>,
    /// Pseudonymize identifiers and coarsen timestamps with this key first.
    #[arg(long)]
    anonymize_key: Option<String>,
}

#[derive(Args, Debug, Clone)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    slice: SliceArg,
    #[arg(long, value_enum)]
    model: ModelArg,
    #[arg(long, short)]
    out: PathBuf,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    grid: GridArgs,
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// LR inverse regularization strengths.
    #[arg(long, value_delimiter = ',')]
    lr_c: Vec<f64>,
    /// RF tree counts.
    #[arg(long, value_delimiter = ',')]
    rf_trees: Vec<usize>,
    /// RF depth limits; 0 means unlimited.
    #[arg(long, value_delimiter = ',')]
    rf_depths: Vec<usize>,
}

impl GridArgs {
    fn lr(&self, default: Vec<GridPoint>) -> Vec<GridPoint> {
        if self.lr_c.is_empty() {
            default
        } else {
            self.lr_c.iter().map(|&c| GridPoint::Lr { c }).collect()
        }
    }

    fn rf(&self, default: Vec<GridPoint>) -> Vec<GridPoint> {
        if self.rf_trees.is_empty() && self.rf_depths.is_empty() {
            return default;
        }
        let trees = if self.rf_trees.is_empty() {
            vec![100]
        } else {
            self.rf_trees.clone()
        };
        let depths = if self.rf_depths.is_empty() {
            vec![0]
        } else {
            self.rf_depths.clone()
        };
        let mut g = Vec::new();
        for &n in &trees {
            for &d in &depths {
                g.push(GridPoint::Rf {
                    n_estimators: n,
                    max_depth: (d > 0).then_some(d),
                });
            }
        }
        g
    }
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Score every window rather than the held-out split.
    #[arg(long)]
    all: bool,
    #[command(flatten)]
    split: SplitArgs,
    /// Write the metrics record as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the ROC points as CSV.
    #[arg(long)]
    roc: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// One dataset per seeded session.
    #[arg(long, num_args = 2.., required = true)]
    datasets: Vec<PathBuf>,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[command(flatten)]
    split: SplitArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long, value_delimiter = ',', default_values_t = [1u64, 2, 3, 4])]
    windows: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.2, 0.4])]
    intensities: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
    seeds: Vec<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ServeArgs {
    /// Model files; per-slice models route by slice, a pooled one is the fallback.
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<PathBuf>,
    /// Stream file to replay, or `-` for standard input.
    #[arg(long, conflicts_with = "listen")]
    input: Option<PathBuf>,
    /// Accept one TCP connection here and read stream lines from it.
    #[arg(long)]
    listen: Option<String>,
    #[arg(long, default_value_t = 2)]
    window: u64,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    #[arg(long, default_value_t = 100)]
    grace_ms: u64,
    /// Replay at this multiple of real time.
    #[arg(long)]
    pace: Option<f64>,
    #[arg(long, default_value_t = 65_536)]
    queue: usize,
    /// Verdict log; standard output when absent.
    #[arg(long)]
    verdicts: Option<PathBuf>,
    #[arg(long)]
    unscored: Option<PathBuf>,
    /// Write the final service counters as JSON.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory; the manifest's own when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Recompute every cell.
    #[arg(long)]
    no_resume: bool,
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct ReproArgs {
    /// Number of seeds (0, 1, ...) or an explicit list.
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<u64>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    paper_scale: bool,
    #[arg(long, value_delimiter = ',')]
    intensities: Vec<f64>,
    #[arg(long)]
    headline_intensity: Option<f64>,
    #[arg(long)]
    window: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    test_fraction: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    tolerance_ms: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    sweep_windows: Vec<u64>,
    #[arg(long, value_delimiter = ',')]
    sweep_intensities: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    sweep_seeds: Vec<u64>,
    #[arg(long)]
    onset: Option<f64>,
    #[arg(long)]
    temporal_seed: Option<u64>,
    #[command(flatten)]
    grid: GridArgs,
    /// Output directory; `$SLICEWATCH_OUT/repro` or `./out/repro` when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    no_resume: bool,
    /// Exit with code 3 when any check fails.
    #[arg(long)]
    check: bool,
}

/// Parses `argv` and runs the command; returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.cmd) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Generate(a) => generate(a),
        Command::Inject(a) => inject(a),
        Command::Featurize(a) => featurize(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Compare(a) => compare(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve_cmd(a),
        Command::Report(a) => report(a),
        Command::Repro(a) => repro(a),
    }?;
    Ok(0)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(BufWriter::new(
        File::create(path).map_err(|e| Error::io(path, e))?,
    ))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    Ok(())
}

fn generate(a: GenerateArgs) -> Result<()> {
    let config = match &a.config {
        Some(p) => formats::read_scenario(p)?,
        None => {
            let mut c = if a.paper_scale {
                ScenarioConfig::paper_scale(a.seed)
            } else {
                ScenarioConfig::desk_scale(a.seed)
            };
            if let Some(d) = a.duration {
                c.duration_s = d;
            }
            c
        }
    };
    let packets = config.generate()?;
    ensure_parent(&a.out)?;
    write_stream(&a.out, &packets)?;
    if let Some(p) = &a.save_config {
        ensure_parent(p)?;
        formats::write_scenario(p, &config)?;
    }
    eprintln!("{} packets over {} s", packets.len(), config.duration_s);
    Ok(())
}

fn inject(a: InjectArgs) -> Result<()> {
    let stream = read_stream(&a.stream)?;
    let strategies = match a.strategy {
        StrategyArg::Impersonation => vec![AttackStrategy::IdentityImpersonation],
        StrategyArg::Replay => vec![AttackStrategy::Replay],
        StrategyArg::Both => vec![
            AttackStrategy::IdentityImpersonation,
            AttackStrategy::Replay,
        ],
    };
    let share = a.intensity / strategies.len() as f64;
    let configs: Vec<AttackConfig> = strategies
        .into_iter()
        .map(|s| {
            let mut c = AttackConfig::new(s, share, stage_seed(a.seed, Stage::Attack));
            if !a.slices.is_empty() {
                c.target_slices = a.slices.clone();
            }
            c
        })
        .collect();
    let (packets, events) = inject_all(&stream, &configs)?;
    ensure_parent(&a.out)?;
    ensure_parent(&a.events)?;
    write_stream(&a.out, &packets)?;
    write_events(&a.events, &events)?;
    eprintln!("{} events, {} packets", events.len(), packets.len());
    Ok(())
}

fn featurize(a: FeaturizeArgs) -> Result<()> {
    let packets = read_stream(&a.stream)?;
    let events = read_events(&a.events)?;
    let windows = aggregate(&packets, a.window)?;
    let (mut joined, report) = join_labels(&windows, &events, a.tolerance_ms);
    if let Some(key) = &a.anonymize_key {
        joined = anonymize_windows(&joined, key.as_bytes());
    }
    let vectors = extract_all(&joined);
    ensure_parent(&a.out)?;
    write_dataset(&a.out, &vectors)?;
    if let Some(p) = &a.windows {
        ensure_parent(p)?;
        formats::write_windows(p, &joined)?;
    }
    eprintln!(
        "{} windows, {} spoofed ({} by tolerance only)",
        report.total_windows, report.labeled_spoofed, report.ambiguous
    );
    Ok(())
}

fn split(
    data: &[FeatureVector],
    s: &SplitArgs,
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>)> {
    if !(s.test_fraction > 0.0 && s.test_fraction < 1.0) {
        return Err(Error::Usage("test fraction must be in (0, 1)".into()));
    }
    Ok(train_test_split(
        data,
        s.test_fraction,
        stage_seed(s.split_seed, Stage::Split),
    ))
}

fn train(a: TrainArgs) -> Result<()> {
    let data = read_dataset(&a.dataset)?;
    let (tr, _) = split(&data, &a.split)?;
    let scope = a.slice.scope();
    let tr: Vec<FeatureVector> = tr.into_iter().filter(|f| scope.admits(f.slice)).collect();
    let kind: ModelKind = a.model.into();
    let grid = match kind {
        ModelKind::Lr => a.grid.lr(kind.grid()),
        ModelKind::Rf => a.grid.rf(kind.grid()),
    };
    let (artifact, cv) = train_artifact_on_grid(
        kind,
        scope,
        &tr,
        &grid,
        a.folds,
        stage_seed(a.seed, Stage::Model),
    )?;
    ensure_parent(&a.out)?;
    write_model(&a.out, &artifact)?;
    eprintln!(
        "{} on {} windows: {:?}, cv f1 {:.4}",
        kind.as_str(),
        tr.len(),
        artifact.meta.grid_point,
        cv.best_mean_f1()
    );
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<()> {
    let model = read_model(&a.model)?;
    let data = read_dataset(&a.dataset)?;
    let test = if a.all {
        data
    } else {
        split(&data, &a.split)?.1
    };
    let test: Vec<FeatureVector> = test
        .into_iter()
        .filter(|f| model.scope.admits(f.slice))
        .collect();
    let m = evaluate(&model, &test, a.threshold)?;
    println!(
        "windows {} accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4} auc {} fpr {:.4} fnr {:.4}",
        test.len(),
        m.accuracy,
        m.precision,
        m.recall,
        m.f1,
        m.auc.map_or("-".into(), |v| format!("{v:.4}")),
        m.fpr,
        m.fnr
    );
    if let Some(p) = &a.out {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &m).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(p, e))?;
    }
    if let Some(p) = &a.roc {
        let roc = roc_of(&model, &test)?;
        let mut w = create(p)?;
        let res = (|| {
            writeln!(w, "fpr,tpr,threshold")?;
            for (pt, th) in roc.points.iter().zip(&roc.thresholds) {
                writeln!(w, "{},{},{}", pt.0, pt.1, th)?;
            }
            w.flush()
        })();
        res.map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn compare(a: CompareArgs) -> Result<()> {
    let mut aware = Vec::new();
    let mut pooled = Vec::new();
    let spec_grid = slicewatch_core::eval::experiment::CampaignSpec {
        folds: a.folds,
        threshold: a.threshold,
        lr_grid: a.grid.lr(slicewatch_core::learn::lr_grid()),
        rf_grid: a.grid.rf(slicewatch_core::learn::rf_grid()),
        ..slicewatch_core::eval::experiment::CampaignSpec::desk(0.2)
    };
    for (i, p) in a.datasets.iter().enumerate() {
        let data = read_dataset(p)?;
        let (tr, te) = split(&data, &a.split)?;
        let seed = stage_seed(i as u64, Stage::Model);
        let global = train_pair(Scope::Global, &tr, &spec_grid, seed)?;
        let mut x = [f64::NAN; 3];
        let mut y = [f64::NAN; 3];
        for s in SliceId::ALL {
            let (str_, ste) = (of_slice(&tr, s), of_slice(&te, s));
            if str_.is_empty() || ste.is_empty() {
                continue;
            }
            let pair = train_pair(Scope::PerSlice(s), &str_, &spec_grid, seed)?;
            let f = |m| evaluate(m, &ste, a.threshold).map(|r| r.f1);
            x[s.index()] = (f(&pair.lr)? + f(&pair.rf)?) / 2.0;
            y[s.index()] = (f(&global.lr)? + f(&global.rf)?) / 2.0;
        }
        aware.push(x);
        pooled.push(y);
    }
    let c = compare_scores(&aware, &pooled)?;
    let mut w = create(&a.out)?;
    let res = (|| {
        writeln!(w, "slice,aware_f1,pooled_f1,delta,p_value")?;
        for s in &c.slices {
            writeln!(
                w,
                "{},{},{},{},{}",
                s.slice,
                s.a_f1,
                s.b_f1,
                s.delta,
                s.t_test.as_ref().map_or(f64::NAN, |t| t.p_value)
            )?;
        }
        writeln!(
            w,
            "all,,,{},{}",
            c.mean_delta,
            c.t_test.as_ref().map_or(f64::NAN, |t| t.p_value)
        )?;
        w.flush()
    })();
    res.map_err(|e| Error::io(&a.out, e))?;
    for s in &c.slices {
        println!(
            "{} aware {:.4} pooled {:.4} delta {:+.4}",
            s.slice, s.a_f1, s.b_f1, s.delta
        );
    }
    println!(
        "mean delta {:+.4} p {:?}",
        c.mean_delta,
        c.t_test.map(|t| t.p_value)
    );
    Ok(())
}

fn sweep(a: SweepArgs) -> Result<()> {
    let mut base = ExperimentManifest::desk("");
    if a.paper_scale {
        base = ExperimentManifest::paper("");
    }
    if let Some(d) = a.duration {
        base.scenario.duration_s = d;
    }
    let mut cells = Vec::new();
    for &w in &a.windows {
        for &i in &a.intensities {
            for &s in &a.seeds {
                cells.push((w, i, s));
            }
        }
    }
    for &(w, i, _) in &cells {
        base.spec(i, w);
        if !(1..=4).contains(&w) || !(i > 0.0 && i <= 1.0) {
            return Err(Error::Usage(
                "windows must be 1 to 4 s and intensities in (0, 1]".into(),
            ));
        }
    }
    let f1 = par_map(
        &cells,
        a.workers.unwrap_or_else(default_workers),
        |&(w, i, s)| Ok(sweep_cell_seed(&base.spec(i, w), s)?),
    )?;
    let mut out = create(&a.out)?;
    let res = (|| {
        writeln!(out, "window_len_s,intensity,seed,slice,rf_f1")?;
        for (&(w, i, s), f) in cells.iter().zip(&f1) {
            for sl in SliceId::ALL {
                writeln!(out, "{w},{i},{s},{sl},{}", f[sl.index()])?;
            }
        }
        out.flush()
    })();
    res.map_err(|e| Error::io(&a.out, e))
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let registry = Arc::new(ModelRegistry::load(&a.models)?);
    let config = ServeConfig {
        window_len_s: a.window,
        threshold: a.threshold,
        grace_us: a.grace_ms * 1000,
        queue_capacity: a.queue,
        pace: a.pace,
        collect: false,
    };
    let verdicts: Box<dyn Write + Send> = match &a.verdicts {
        Some(p) => Box::new(create(p)?),
        None => Box::new(BufWriter::new(std::io::stdout())),
    };
    let unscored: Box<dyn Write + Send> = match &a.unscored {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::sink()),
    };
    let outcome = match (&a.input, &a.listen) {
        (_, Some(addr)) => {
            let listener = TcpListener::bind(addr).map_err(|e| Error::io(addr, e))?;
            eprintln!(
                "listening on {}",
                listener.local_addr().map_err(|e| Error::io(addr, e))?
            );
            let (conn, peer) = listener.accept().map_err(|e| Error::io(addr, e))?;
            eprintln!("feed from {peer}");
            serve(
                line_source(BufReader::new(conn)),
                registry,
                config,
                verdicts,
                unscored,
            )?
        }
        (Some(p), None) if p.as_os_str() == "-" => serve(
            line_source(std::io::stdin().lock()),
            registry,
            config,
            verdicts,
            unscored,
        )?,
        (Some(p), None) if p.extension().is_some_and(|e| e == "bin") => {
            let packets = formats::stream::read_stream_bin(p)?;
            serve(
                packets.into_iter().map(Ok),
                registry,
                config,
                verdicts,
                unscored,
            )?
        }
        (Some(p), None) => {
            let f = File::open(p).map_err(|e| Error::io(p, e))?;
            serve(
                line_source(BufReader::new(f)),
                registry,
                config,
                verdicts,
                unscored,
            )?
        }
        (None, None) => {
            return Err(Error::Usage(
                "one of --input or --listen is required".into(),
            ))
        }
    };
    let s = &outcome.stats;
    eprintln!(
        "{} windows in {:.2} s ({:.1}/s), latency p50 {} p99 {} us, dropped {}, malformed {}, partial {}, unscored {}",
        s.windows,
        s.elapsed_s,
        s.windows_per_s,
        s.latency_p50_us.map_or("-".into(), |v| v.to_string()),
        s.latency_p99_us.map_or("-".into(), |v| v.to_string()),
        s.dropped,
        s.malformed,
        s.partial,
        s.unscored
    );
    if let Some(p) = &a.stats {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, s).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(p, e))?;
    }
    Ok(())
}

fn default_out(sub: &str) -> PathBuf {
    std::env::var_os(OUT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("out"))
        .join(sub)
}

/// Runs a manifest into `out` and writes the bundle; returns the exit code.
pub fn run_manifest(
    m: &ExperimentManifest,
    out: &Path,
    opts: &RunOptions,
    check: bool,
) -> Result<i32> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let stored = ExperimentManifest {
        output_dir: out.to_path_buf(),
        ..m.clone()
    };
    stored.save(&out.join(MANIFEST_FILE))?;
    let o = run_campaign(&stored, Some(out), opts)?;
    write_bundle(&out.join("report"), &o)?;
    let checks = campaign_checks(&o);
    for c in &checks {
        eprintln!(
            "{:>2} {:<30} {}  {}",
            c.id,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.detail.trim_end_matches("; ")
        );
    }
    eprintln!("report in {}", out.join("report").display());
    Ok(if check && checks.iter().any(|c| !c.pass) {
        EXIT_CHECK_FAILED
    } else {
        0
    })
}

fn report(a: ReportArgs) -> Result<()> {
    let m = ExperimentManifest::load(&a.manifest)?;
    let out = a.out.clone().unwrap_or_else(|| m.output_dir.clone());
    let opts = RunOptions {
        workers: a.workers.unwrap_or_else(default_workers),
        resume: !a.no_resume,
        progress: true,
    };
    exit_on(run_manifest(&m, &out, &opts, a.check)?)
}

fn repro(a: ReproArgs) -> Result<()> {
    let out = a.out.clone().unwrap_or_else(|| default_out("repro"));
    let mut m = if a.paper_scale {
        ExperimentManifest::paper(&out)
    } else {
        ExperimentManifest::desk(&out)
    };
    match a.seeds.as_slice() {
        [] => {}
        [n] => m.seeds = (0..*n).collect(),
        list => m.seeds = list.to_vec(),
    }
    if let Some(d) = a.duration {
        m.scenario.duration_s = d;
        m.temporal.onset_s = d / 3.0;
    }
    if !a.intensities.is_empty() {
        m.intensities = a.intensities.clone();
    }
    if let Some(h) = a.headline_intensity {
        m.headline_intensity = h;
    }
    if let Some(w) = a.window {
        m.window_len_s = w;
    }
    if let Some(f) = a.folds {
        m.folds = f;
    }
    if let Some(t) = a.test_fraction {
        m.test_fraction = t;
    }
    if let Some(t) = a.threshold {
        m.threshold = t;
    }
    if let Some(t) = a.tolerance_ms {
        m.tolerance_ms = t;
    }
    if !a.sweep_windows.is_empty() {
        m.sweep.window_lens = a.sweep_windows.clone();
    }
    if !a.sweep_intensities.is_empty() {
        m.sweep.intensities = a.sweep_intensities.clone();
    }
    m.sweep.seeds = if a.sweep_seeds.is_empty() {
        m.seeds.clone()
    } else {
        a.sweep_seeds.clone()
    };
    if let Some(o) = a.onset {
        m.temporal.onset_s = o;
    }
    if let Some(s) = a.temporal_seed {
        m.temporal.seed = s;
    }
    m.lr_grid = a.grid.lr(m.lr_grid.clone());
    m.rf_grid = a.grid.rf(m.rf_grid.clone());
    m.validate()?;
    let opts = RunOptions {
        workers: a.workers.unwrap_or_else(default_workers),
        resume: !a.no_resume,
        progress: true,
    };
    exit_on(run_manifest(&m, &out, &opts, a.check)?)
}

fn exit_on(code: i32) -> Result<()> {
    if code != 0 {
        std::process::exit(code);
    }
    Ok(())
}

/// Thin summary of a dataset, used by tests and scripts.
pub fn dataset_counts(data: &[FeatureVector]) -> BTreeMap<(SliceId, bool), usize> {
    let mut m = BTreeMap::new();
    for f in data {
        *m.entry((f.slice, f.label.is_spoofed())).or_insert(0) += 1;
    }
    m
}
