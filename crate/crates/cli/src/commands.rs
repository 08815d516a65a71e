use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use comformer_core::fixtures::{generate, standard_fixtures};
use comformer_core::graph::build_graph;
use comformer_core::io::{write_graph_json, StructureDocument};
use comformer_core::symmetry::{fuzz_invariance, FuzzOptions, FuzzReport, TransformKind, TransformSpec};
use comformer_core::GraphKind;
use comformer_model::embed::parse_species_table;
use comformer_model::{load_model, save_model, Model, ModelConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::CliError;
use crate::experiments::{bench_crystal, run_readout_experiment, time_pipeline, ReadoutSettings};
use crate::files::{
    collect_inputs, emit, format_structure, read_graph, read_structure, read_structure_or_graph, stem, FileFormat, Loaded,
    MANIFEST,
};
use crate::verify::{check_graph, check_structure, reconstruct, summarize};

#[derive(Debug, Parser)]
#[command(name = "comformer", version, about = "Crystal graphs, reconstruction checks and frozen transformer features")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Seed for every random choice; commands are deterministic given it.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Nearest neighbors per node when building graphs.
    #[arg(long, global = true, default_value_t = 12, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    /// Pass/fail tolerance; each command documents its default.
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Structure format: forces the input parser and picks the output writer.
    #[arg(long, global = true, value_enum)]
    pub format: Option<FileFormat>,
    /// Output file (or directory for per-input outputs); stdout otherwise.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

impl GlobalArgs {
    fn k(&self) -> usize {
        self.k as usize
    }

    fn tol_or(&self, default: f64) -> Result<f64, CliError> {
        let t = self.tol.unwrap_or(default);
        if !(t.is_finite() && t > 0.0) {
            return Err(CliError::Input(format!("--tol must be positive (got {t})")));
        }
        Ok(t)
    }

    fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Invariant,
    Equivariant,
}

impl From<KindArg> for GraphKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Invariant => GraphKind::Invariant,
            KindArg::Equivariant => GraphKind::Equivariant,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Model config file (JSON or TOML, by extension).
    #[arg(long = "model")]
    pub config: Option<PathBuf>,
    /// Saved model file; overrides --model and --seed.
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "ecomformer")]
    pub variant: Variant,
    /// JSON array of per-species rows replacing the random species table.
    #[arg(long)]
    pub species_table: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build one crystal graph JSON file per input structure.
    Graph {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "invariant")]
        kind: KindArg,
    },
    /// Round-trip structures (or graph files) through reconstruction.
    Verify {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value = "invariant")]
        kind: KindArg,
    },
    /// Fuzz graph invariance under random passive transforms.
    Invariance {
        input: PathBuf,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        /// Also apply mirror images, which must be detected for chiral inputs.
        #[arg(long)]
        include_mirror: bool,
        #[arg(long, value_enum, default_value = "invariant")]
        kind: KindArg,
        /// Also compare model predictions on the transformed copies.
        #[arg(long)]
        with_model: Option<Variant>,
    },
    /// Mean-pooled final node features, one CSV row per input.
    Featurize {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Scalar predictions, one CSV row per input.
    Predict {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Time graph construction plus one forward pass on synthetic cells.
    Bench {
        #[arg(long, value_delimiter = ',', default_value = "64,128,256,512")]
        n_range: Vec<usize>,
        /// Neighbor counts to sweep; defaults to --k.
        #[arg(long, value_delimiter = ',')]
        k_range: Vec<usize>,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
        #[arg(long, default_value = "ecomformer")]
        variant: Variant,
    },
    /// Write the named synthetic fixtures and a manifest into a directory.
    Fixtures,
    /// Rebuild a structure from a graph file.
    Reconstruct { graph: PathBuf },
    /// Write a freshly initialized model file.
    Params {
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Ridge readout on frozen features of synthetic crystals.
    Readout {
        #[arg(long, default_value_t = 2000)]
        n_crystals: usize,
        #[arg(long, default_value_t = 64)]
        hidden: usize,
    },
}

/// Runs one command and returns its exit code. Errors that abort the whole
/// command are returned; per-input failures are reported and folded into
/// the code.
pub fn run(cli: Cli) -> Result<i32, CliError> {
    let g = &cli.global;
    match cli.command {
        Command::Graph { inputs, kind } => cmd_graph(g, &inputs, kind.into()),
        Command::Verify { inputs, kind } => cmd_verify(g, &inputs, kind.into()),
        Command::Invariance { input, trials, include_mirror, kind, with_model } => {
            cmd_invariance(g, &input, trials, include_mirror, kind.into(), with_model)
        }
        Command::Featurize { inputs, model } => cmd_featurize(g, &inputs, &model, false),
        Command::Predict { inputs, model } => cmd_featurize(g, &inputs, &model, true),
        Command::Bench { n_range, k_range, repeats, variant } => cmd_bench(g, &n_range, &k_range, repeats, variant),
        Command::Fixtures => cmd_fixtures(g),
        Command::Reconstruct { graph } => cmd_reconstruct(g, &graph),
        Command::Params { model } => {
            let m = build_model(g, &model)?;
            emit(g.out.as_deref(), &save_model(&m))?;
            eprintln!("{} with {} parameters", m.variant, m.parameter_count());
            Ok(0)
        }
        Command::Readout { n_crystals, hidden } => {
            let mut s = ReadoutSettings { hidden_dim: hidden, ..Default::default() };
            if let Some(seed) = g.seed {
                s.seed = seed;
            }
            if n_crystals != s.n_crystals {
                // keep the split proportions of the default 2000-crystal run
                s.calibration = n_crystals * 3 / 20;
                s.train = n_crystals * 3 / 5;
                s.validation = n_crystals * 3 / 20;
                s.n_crystals = n_crystals;
            }
            let r = run_readout_experiment(&s)?;
            emit(g.out.as_deref(), &to_json(&r))?;
            eprintln!(
                "density R² {:.4} (ablation {:.4}); bond cosine R² {:.4} (ablation {:.4})",
                r.density.full_r2, r.density.ablation_r2, r.bond_angle.full_r2, r.bond_angle.ablation_r2
            );
            Ok(0)
        }
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serializes")
}

fn cmd_graph(g: &GlobalArgs, inputs: &[PathBuf], kind: GraphKind) -> Result<i32, CliError> {
    let files = collect_inputs(inputs)?;
    let k = g.k();
    let built: Vec<Result<String, CliError>> = files
        .par_iter()
        .map(|p| {
            let doc = read_structure(p, g.format)?;
            let graph = build_graph(&doc.crystal, k, kind).map_err(|e| CliError::from(e).at(p))?;
            Ok(write_graph_json(&graph))
        })
        .collect();

    let single = files.len() == 1 && g.out.as_ref().is_none_or(|o| !o.is_dir());
    if !single && g.out.is_none() {
        return Err(CliError::Input("several inputs need --out DIR".into()));
    }
    let mut code = 0;
    for (path, res) in files.iter().zip(built) {
        match res {
            Ok(text) if single => emit(g.out.as_deref(), &text)?,
            Ok(text) => {
                let dir = g.out.as_ref().expect("checked above");
                emit(Some(&dir.join(format!("{}.graph.json", stem(path)))), &text)?;
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    Ok(code)
}

fn cmd_verify(g: &GlobalArgs, inputs: &[PathBuf], kind: GraphKind) -> Result<i32, CliError> {
    let files = collect_inputs(inputs)?;
    let tol = g.tol_or(1e-6)?;
    let k = g.k();
    let checks = files
        .par_iter()
        .map(|p| {
            let source = p.display().to_string();
            match read_structure_or_graph(p, g.format) {
                Ok(Loaded::Structure(doc)) => check_structure(source, &doc.crystal, k, kind, tol),
                Ok(Loaded::Graph(graph)) => check_graph(source, &graph, k, tol),
                Err(e) => crate::verify::StructureCheck {
                    source,
                    n_atoms: 0,
                    kind,
                    rmsd: None,
                    max_pointwise: None,
                    graph_deviation: None,
                    passed: false,
                    error: Some(e.to_string()),
                    exit_code: e.exit_code(),
                },
            }
        })
        .collect();
    let report = summarize(checks, tol);
    emit(g.out.as_deref(), &to_json(&report))?;
    let s = &report.summary;
    eprintln!(
        "{}/{} passed at tol {:e}; mean rmsd {}, max rmsd {}",
        s.passed,
        s.count,
        tol,
        s.mean_rmsd.map_or("n/a".into(), |v| format!("{v:.3e}")),
        s.max_rmsd.map_or("n/a".into(), |v| format!("{v:.3e}")),
    );
    Ok(report.exit_code())
}

#[derive(Debug, Serialize)]
struct PredictionCheck {
    variant: Variant,
    trials: usize,
    worst_relative_deviation: f64,
}

#[derive(Debug, Serialize)]
struct InvarianceOutput {
    source: String,
    k: usize,
    trials: usize,
    seed: u64,
    graph: FuzzReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<PredictionCheck>,
}

/// Largest relative change of the prediction over `trials` random passive
/// transforms of each kind.
pub fn prediction_invariance(
    model: &Model,
    crystal: &comformer_core::Crystal,
    k: usize,
    trials: usize,
    seed: u64,
) -> Result<f64, CliError> {
    let kind = model.variant.graph_kind();
    let base = model.forward(&build_graph(crystal, k, kind)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for t in TransformKind::PASSIVE {
        for _ in 0..trials {
            let moved = TransformSpec::sample(t, &mut rng).apply(crystal).map_err(|e| CliError::Domain(e.to_string()))?;
            let p = model.forward(&build_graph(&moved, k, kind)?)?;
            worst = worst.max((p - base).abs() / base.abs().max(1e-12));
        }
    }
    Ok(worst)
}

fn cmd_invariance(
    g: &GlobalArgs,
    input: &Path,
    trials: usize,
    include_mirror: bool,
    kind: GraphKind,
    with_model: Option<Variant>,
) -> Result<i32, CliError> {
    let doc = read_structure(input, g.format)?;
    let tol = g.tol_or(1e-9)?;
    let mut opts = FuzzOptions { tol, graph_kind: kind, ..Default::default() };
    if include_mirror {
        opts = opts.with_mirror();
    }
    let report = fuzz_invariance(&doc.crystal, g.k(), trials, g.seed(), &opts)?;
    let model = match with_model {
        Some(v) => {
            let m = Model::new(ModelConfig::default().with_seed(g.seed()), v)?;
            let worst = prediction_invariance(&m, &doc.crystal, g.k(), trials, g.seed())?;
            Some(PredictionCheck { variant: v, trials, worst_relative_deviation: worst })
        }
        None => None,
    };
    let passive_failures: usize =
        report.per_kind.iter().filter(|r| r.kind != TransformKind::Mirror).map(|r| r.failed).sum();
    for r in &report.per_kind {
        eprintln!("{:?}: {} passed, {} failed, worst {:.3e}", r.kind, r.passed, r.failed, r.worst_deviation);
    }
    let out = InvarianceOutput { source: input.display().to_string(), k: g.k(), trials, seed: g.seed(), graph: report, model };
    emit(g.out.as_deref(), &to_json(&out))?;
    Ok(if passive_failures > 0 { 2 } else { 0 })
}

/// Loads a saved model or initializes one from a config and seed.
pub fn build_model(g: &GlobalArgs, args: &ModelArgs) -> Result<Model, CliError> {
    let mut model = if let Some(p) = &args.params {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let m = load_model(&text).map_err(|e| CliError::from(e).at(p))?;
        if m.variant != args.variant {
            return Err(CliError::Input(format!("{} holds a {} model, not {}", p.display(), m.variant, args.variant)));
        }
        m
    } else {
        let mut cfg = match &args.config {
            Some(p) => {
                if !p.is_file() {
                    return Err(CliError::Input(format!("{}: no such config file", p.display())));
                }
                ModelConfig::load(p).map_err(|e| CliError::from(e).at(p))?
            }
            None => ModelConfig::default(),
        };
        if let Some(seed) = g.seed {
            cfg.seed = seed;
        }
        Model::new(cfg, args.variant)?
    };
    if let Some(p) = &args.species_table {
        let text = fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
        let table = parse_species_table(&text, model.config.embed_dim_species).map_err(|e| CliError::from(e).at(p))?;
        model.params.species.set_table(table)?;
    }
    Ok(model)
}

fn cmd_featurize(g: &GlobalArgs, inputs: &[PathBuf], args: &ModelArgs, predict: bool) -> Result<i32, CliError> {
    let model = build_model(g, args)?;
    let files = collect_inputs(inputs)?;
    let kind = model.variant.graph_kind();
    let rows: Vec<Result<Vec<f64>, CliError>> = files
        .par_iter()
        .map(|p| {
            let doc = read_structure(p, g.format)?;
            let graph = build_graph(&doc.crystal, g.k(), kind).map_err(|e| CliError::from(e).at(p))?;
            let pooled = model.featurize(&graph).map_err(|e| CliError::from(e).at(p))?;
            Ok(if predict { vec![model.readout(&pooled)] } else { pooled })
        })
        .collect();

    let mut w = csv::Writer::from_writer(Vec::new());
    let width = if predict { 1 } else { model.config.hidden_dim };
    let mut header = vec!["source".to_string()];
    if predict {
        header.push("prediction".into());
    } else {
        header.extend((0..width).map(|i| format!("f{i}")));
    }
    w.write_record(&header)?;
    let mut code = 0;
    for (p, row) in files.iter().zip(rows) {
        match row {
            Ok(values) => {
                let mut rec = vec![p.display().to_string()];
                rec.extend(values.iter().map(|v| format!("{v:e}")));
                w.write_record(&rec)?;
            }
            Err(e) => {
                eprintln!("error: {e}");
                code = code.max(e.exit_code());
            }
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    emit(g.out.as_deref(), &String::from_utf8(bytes).expect("csv is UTF-8"))?;
    Ok(code)
}

fn cmd_bench(g: &GlobalArgs, n_range: &[usize], k_range: &[usize], repeats: usize, variant: Variant) -> Result<i32, CliError> {
    let ks: Vec<usize> = if k_range.is_empty() { vec![g.k()] } else { k_range.to_vec() };
    if n_range.contains(&0) || ks.contains(&0) {
        return Err(CliError::Input("atom counts and k must be positive".into()));
    }
    let model = Model::new(ModelConfig::default().with_seed(g.seed()), variant)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for &n in n_range {
        let crystal = bench_crystal(n, g.seed())?;
        for &k in &ks {
            let row = time_pipeline(&crystal, k, &model, repeats)?;
            eprintln!("n={n} k={k}: {:.4} s", row.total_seconds);
            w.serialize(&row)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| CliError::Input(e.to_string()))?;
    emit(g.out.as_deref(), &String::from_utf8(bytes).expect("csv is UTF-8"))?;
    Ok(0)
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    file: String,
    spec: comformer_core::fixtures::FixtureSpec,
    n_atoms: usize,
}

fn cmd_fixtures(g: &GlobalArgs) -> Result<i32, CliError> {
    let dir = g.out.as_ref().ok_or_else(|| CliError::Input("fixtures needs --out DIR".into()))?;
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let format = g.format.unwrap_or(FileFormat::Poscar);
    let ext = match format {
        FileFormat::Poscar => "vasp",
        FileFormat::Json => "json",
    };
    let mut manifest = Vec::new();
    for spec in standard_fixtures(g.seed()) {
        let crystal = generate(&spec)?;
        let file = format!("{}.{ext}", spec.name());
        let doc = StructureDocument::new(crystal, spec.name());
        let path = dir.join(&file);
        fs::write(&path, format_structure(&doc, format)).map_err(|e| CliError::io(&path, e))?;
        manifest.push(ManifestEntry { file, n_atoms: doc.crystal.len(), spec });
    }
    let path = dir.join(MANIFEST);
    fs::write(&path, to_json(&manifest)).map_err(|e| CliError::io(&path, e))?;
    eprintln!("wrote {} fixtures to {}", manifest.len(), dir.display());
    Ok(0)
}

fn cmd_reconstruct(g: &GlobalArgs, path: &Path) -> Result<i32, CliError> {
    let graph = read_graph(path)?;
    let crystal = reconstruct(&graph).map_err(|e| e.at(path))?;
    let doc = StructureDocument::new(crystal, format!("reconstructed from {}", stem(path)));
    emit(g.out.as_deref(), &format_structure(&doc, g.format.unwrap_or(FileFormat::Poscar)))?;
    Ok(0)
}
