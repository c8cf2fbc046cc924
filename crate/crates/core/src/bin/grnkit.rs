use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};

use grnkit::expression::{
    library_rescale, load_matrix, normalize_log1p, preprocess, read_labels, ExpressionMatrix, MatrixFormat,
    PreprocessConfig, Scale, SplitSpec,
};
use grnkit::grn::{overlap, random_grn, read_grn, write_grn, GeneVocabulary, TfPartition};
use grnkit::inference::{infer_grn_with_importances, GbmConfig};
use grnkit::llm::{build_llm_grn, extract_tf_partition, LlmKb};
use grnkit::metrics::{
    annotate_and_proportions, cosine_distance, euclidean_distance, marker_summary, markers_to_csv, mmd, rf_auroc,
    ForestConfig, MeanStd, MetricReport,
};
use grnkit::pipeline::{
    build_client, load_partition, make_report, plot_projection, read_symbol_list, run_setting, RunConfig,
    RunManifest, RunOptions,
};
use grnkit::seed::derive_seed_indexed;
use grnkit::synth::{fit_scm, sample_synthetic};

const LIBRARY_SCALE: f64 = 10_000.0;

#[derive(Parser)]
#[command(name = "grnkit", version, about = "GRN construction, GRN-conditioned synthesis and fidelity evaluation")]
struct Cli {
    /// Run config (TOML); subcommands other than `run` read its llm, gbm and metrics sections.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Use recorded LLM transcripts only; never touch the network.
    #[arg(long, global = true)]
    offline: bool,
    #[arg(long, global = true)]
    parallel_arms: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MatrixArg {
    /// Expression matrix (`.csv` cells × genes, or 10x `.mtx` with genes.txt/barcodes.txt).
    #[arg(long)]
    matrix: PathBuf,
    #[arg(long)]
    format: Option<MatrixFormat>,
}

#[derive(Subcommand)]
enum Command {
    /// Filter genes, keep the most dispersed and split cells into train/val/test CSVs.
    Ingest {
        #[command(flatten)]
        input: MatrixArg,
        #[arg(long, default_value_t = 500)]
        test_size: usize,
        #[arg(long, default_value_t = 500)]
        val_size: usize,
        #[arg(long, default_value_t = 1000)]
        n_top_genes: usize,
        /// Defaults to the test size.
        #[arg(long)]
        min_cells: Option<usize>,
    },
    /// Ask the LLM which genes are TFs, window by window.
    ExtractTfs {
        #[command(flatten)]
        input: MatrixArg,
        #[arg(long)]
        context: String,
        #[arg(long, default_value_t = 20)]
        window: usize,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        /// Accept proposals from anywhere in the vocabulary, not just the queried window.
        #[arg(long)]
        no_validate_membership: bool,
    },
    /// Infer a GRN with per-target boosted trees.
    InferGrn {
        #[command(flatten)]
        input: MatrixArg,
        /// TF list (one symbol per line) or partition JSON.
        #[arg(long)]
        tfs: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Draw a uniformly random GRN.
    RandomGrn {
        #[command(flatten)]
        input: MatrixArg,
        #[arg(long)]
        tfs: PathBuf,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Ask the LLM for k regulators of every target.
    LlmGrn {
        #[command(flatten)]
        input: MatrixArg,
        #[arg(long)]
        tfs: PathBuf,
        #[arg(long)]
        context: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
    },
    /// Edge overlap |A ∩ B| / |A| of two GRN files.
    Overlap { a: PathBuf, b: PathBuf },
    /// Fit the causal model on training cells and sample synthetic datasets.
    Synthesize {
        #[command(flatten)]
        input: MatrixArg,
        #[arg(long)]
        grn: PathBuf,
        #[arg(long)]
        n_cells: usize,
        #[arg(long, default_value_t = 1)]
        n_datasets: usize,
    },
    /// Fidelity metrics of synthetic matrices against a real one.
    Evaluate {
        #[arg(long)]
        real: PathBuf,
        #[arg(long, required = true, num_args = 1..)]
        synthetic: Vec<PathBuf>,
        /// `barcode,label` CSV for the real cells; enables annotation transfer.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        markers: Vec<String>,
        #[arg(long, default_value_t = 50)]
        n_pcs: usize,
    },
    /// Combine run manifests into report tables.
    Report {
        #[arg(required = true)]
        manifests: Vec<PathBuf>,
    },
    /// PCA projection of real vs synthetic cells.
    Plot {
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        synthetic: PathBuf,
        #[arg(long, default_value_t = 50)]
        n_pcs: usize,
    },
    /// Run every arm of the config end to end.
    Run,
}

/// Exit code 2 for configuration problems, 3 for stage failures.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

trait Classify<T> {
    fn config(self) -> Result<T, Failure>;
    fn stage(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn config(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 2, err: e.into() })
    }
    fn stage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 3, err: e.into() })
    }
}

fn format_of(arg: &MatrixArg) -> MatrixFormat {
    arg.format.unwrap_or_else(|| match arg.matrix.extension().and_then(|e| e.to_str()) {
        Some(e) if e.eq_ignore_ascii_case("mtx") => MatrixFormat::Mtx,
        _ => MatrixFormat::Csv,
    })
}

fn load(arg: &MatrixArg) -> Result<ExpressionMatrix, Failure> {
    load_matrix(&arg.matrix, format_of(arg))
        .with_context(|| format!("loading {}", arg.matrix.display()))
        .stage()
}

fn load_csv(path: &Path) -> Result<ExpressionMatrix, Failure> {
    load_matrix(path, MatrixFormat::Csv)
        .with_context(|| format!("loading {}", path.display()))
        .stage()
}

fn lognorm(m: &ExpressionMatrix) -> Result<ExpressionMatrix, Failure> {
    match m.scale() {
        Scale::Lognorm => Ok(m.clone()),
        Scale::Raw => normalize_log1p(m, LIBRARY_SCALE).stage(),
    }
}

fn partition_for(tfs: &Path, vocab: &GeneVocabulary) -> Result<TfPartition, Failure> {
    if tfs.extension().and_then(|e| e.to_str()) == Some("json") {
        let p = load_partition(tfs).config()?;
        p.check_within(vocab).config()?;
        return Ok(p);
    }
    let listed = read_symbol_list(tfs).config()?;
    let present: Vec<&String> = listed.iter().filter(|s| vocab.contains(s)).collect();
    if present.is_empty() {
        return Err(anyhow!("no TF from {} is in the matrix vocabulary", tfs.display())).config();
    }
    TfPartition::from_vocabulary(vocab, present).config()
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), Failure> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).stage()?;
    }
    std::fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .stage()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", describe(&f.err));
            ExitCode::from(f.code)
        }
    }
}

/// Error chain joined by ": ", skipping causes already quoted by their parent.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in err.chain() {
        let msg = cause.to_string();
        if last.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
        last = msg;
    }
    out
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).config()?,
        None => RunConfig::from_toml_str("").config()?,
    };
    let out = cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."));
    let seed = cli.seed.unwrap_or(0);
    let gbm = GbmConfig { seed, ..cfg.gbm.clone() };

    match cli.command {
        Command::Ingest {
            input,
            test_size,
            val_size,
            n_top_genes,
            min_cells,
        } => {
            let m = load(&input)?;
            let pre = PreprocessConfig {
                min_cells_expressed: min_cells.unwrap_or(test_size),
                n_top_genes,
            };
            let split = SplitSpec { test_size, val_size, seed };
            let (train, val, test) = preprocess(&m, &pre, &split).stage()?;
            for (name, part) in [("train", &train), ("val", &val), ("test", &test)] {
                write(&out.join(format!("{name}.csv")), part.to_csv())?;
            }
            println!(
                "{} genes; train {} / val {} / test {} cells",
                train.n_genes(),
                train.n_cells(),
                val.n_cells(),
                test.n_cells()
            );
        }
        Command::ExtractTfs {
            input,
            context,
            window,
            stride,
            no_validate_membership,
        } => {
            let m = load(&input)?;
            let client = build_client(&cfg, cli.offline).map_err(|e| anyhow!(e)).config()?;
            let kb = LlmKb::new(client.as_ref(), context, cfg.llm.options());
            let p = extract_tf_partition(m.genes(), &kb, window, stride, !no_validate_membership).stage()?;
            write(&out.join("partition.json"), serde_json::to_string_pretty(&p).stage()? + "\n")?;
            let tfs: Vec<&str> = p.tfs().iter().map(String::as_str).collect();
            write(&out.join("tfs.txt"), tfs.join("\n") + "\n")?;
            println!("{} TFs, {} targets", p.tfs().len(), p.targets().len());
        }
        Command::InferGrn { input, tfs, k } => {
            let m = lognorm(&load(&input)?)?;
            let p = partition_for(&tfs, m.genes())?;
            let (grn, imp) = infer_grn_with_importances(&m, &p, k, &gbm).stage()?;
            write_grn(&grn, &out.join("grn.tsv")).stage()?;
            write(&out.join("importances.tsv"), imp.to_tsv())?;
            println!("{} edges", grn.n_edges());
        }
        Command::RandomGrn { input, tfs, k } => {
            let m = load(&input)?;
            let p = partition_for(&tfs, m.genes())?;
            let grn = random_grn(&p, k, seed).stage()?;
            write_grn(&grn, &out.join("grn.tsv")).stage()?;
            println!("{} edges", grn.n_edges());
        }
        Command::LlmGrn { input, tfs, context, k } => {
            let m = load(&input)?;
            let p = partition_for(&tfs, m.genes())?;
            let client = build_client(&cfg, cli.offline).map_err(|e| anyhow!(e)).config()?;
            let kb = LlmKb::new(client.as_ref(), context, cfg.llm.options());
            let grn = build_llm_grn(&p, &kb, k).stage()?;
            write_grn(&grn, &out.join("grn.tsv")).stage()?;
            println!("{} edges", grn.n_edges());
        }
        Command::Overlap { a, b } => {
            let ga = read_grn(&a).config()?;
            let gb = read_grn(&b).config()?;
            println!("{}", overlap(&ga, &gb).stage()?);
        }
        Command::Synthesize {
            input,
            grn,
            n_cells,
            n_datasets,
        } => {
            let train = load(&input)?;
            if train.scale() != Scale::Raw {
                return Err(anyhow!("synthesize needs raw training counts")).config();
            }
            let g = read_grn(&grn).config()?;
            let scaled = library_rescale(&train, cfg.library_scale).stage()?;
            let scm = fit_scm(&scaled, &g, &gbm, cfg.library_scale).stage()?;
            for i in 0..n_datasets {
                let syn = sample_synthetic(&scm, n_cells, derive_seed_indexed(seed, "dataset", i)).stage()?;
                write(&out.join(format!("synthetic_{i}.csv")), syn.to_csv())?;
            }
            println!("{n_datasets} datasets of {n_cells} cells");
        }
        Command::Evaluate {
            real,
            synthetic,
            labels,
            markers,
            n_pcs,
        } => {
            let r_raw = load_csv(&real)?;
            let r = lognorm(&r_raw)?;
            let mut rows = Vec::new();
            for (i, path) in synthetic.iter().enumerate() {
                let s = lognorm(&load_csv(path)?)?;
                let forest = ForestConfig {
                    seed: derive_seed_indexed(seed, "rf", i),
                    ..cfg.metrics.forest.clone()
                };
                rows.push([
                    cosine_distance(&r, &s).stage()?,
                    euclidean_distance(&r, &s).stage()?,
                    mmd(&r, &s, &cfg.metrics.mmd).stage()?,
                    rf_auroc(&r, &s, &forest, 1).stage()?.mean,
                ]);
                if let Some(lp) = &labels {
                    let map = read_labels(lp).config()?;
                    let lab: Vec<String> = r
                        .barcodes()
                        .iter()
                        .map(|b| map.get(b).cloned().ok_or_else(|| anyhow!("cell {b} has no label")))
                        .collect::<Result<_, _>>()
                        .config()?;
                    let (assigned, table) = annotate_and_proportions(&r, &lab, &s, n_pcs).stage()?;
                    write(&out.join(format!("celltypes_{i}.csv")), table.to_csv())?;
                    if !markers.is_empty() {
                        let stats = marker_summary(&s, &assigned, &markers).stage()?;
                        write(&out.join(format!("markers_{i}.csv")), markers_to_csv(&stats))?;
                    }
                }
            }
            let col = |j: usize| MeanStd::from_samples(&rows.iter().map(|v| v[j]).collect::<Vec<_>>());
            let report = MetricReport {
                real: real.display().to_string(),
                synthetic: synthetic
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>()
                    .join(";"),
                cosine: col(0),
                euclidean: col(1),
                mmd: col(2),
                rf_auroc: col(3),
                n_repeats: rows.len(),
                mmd_kernel: cfg.metrics.mmd.describe(),
            };
            let csv = MetricReport::to_csv(std::slice::from_ref(&report));
            write(&out.join("metrics.csv"), &csv)?;
            write(&out.join("metrics.json"), serde_json::to_string_pretty(&report).stage()? + "\n")?;
            print!("{csv}");
        }
        Command::Report { manifests } => {
            let ms = manifests
                .iter()
                .map(|p| RunManifest::load(p))
                .collect::<Result<Vec<_>, _>>()
                .config()?;
            let report = make_report(&ms).stage()?;
            report.write(&out).stage()?;
            print!("{}", report.markdown);
        }
        Command::Plot { real, synthetic, n_pcs } => {
            let r = load_csv(&real)?;
            let s = load_csv(&synthetic)?;
            plot_projection(&r, &s, n_pcs, &out.join("projection.svg"), &out.join("projection.csv")).stage()?;
            println!("wrote {}", out.join("projection.svg").display());
        }
        Command::Run => {
            if cli.config.is_none() {
                return Err(anyhow!("`run` needs --config")).config();
            }
            let mut cfg = cfg;
            if let Some(d) = cli.out_dir {
                cfg.out_dir = d;
            }
            if let Some(s) = cli.seed {
                cfg.seeds = vec![s];
            }
            if let Some(n) = cli.parallel_arms {
                cfg.parallel_arms = n;
            }
            match run_setting(&cfg, &RunOptions { offline: cli.offline, client: None }) {
                Ok(m) => {
                    let report = std::fs::read_to_string(m.out_dir.join("report.md")).unwrap_or_default();
                    print!("{report}");
                    println!("manifest: {}", m.path().display());
                }
                Err(e) if e.is_config() => return Err(e).config(),
                Err(e) => return Err(e).stage(),
            }
        }
    }
    Ok(())
}
