use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ArmConfig, GrnSource, KbSource, RunConfig};
use super::manifest::{ArmRecord, RunManifest, RunStatus, SeedMetrics, StageTiming};
use super::report::make_report;
use super::{read_symbol_list, write_file, BoxError, PipelineError};
use crate::expression::{
    library_rescale, load_matrix, normalize_log1p, preprocess, read_labels, ExpressionMatrix,
    PreprocessConfig, SplitSpec,
};
use crate::grn::{random_grn, read_grn, write_grn, Grn, TfPartition};
use crate::inference::{infer_grn, GbmConfig};
use crate::llm::{
    build_llm_grn, extract_tf_partition, CachedClient, ChatClient, FixtureClient, HttpChatClient,
    LlmKb, ResponseCache,
};
use crate::metrics::{
    annotate_and_proportions, cosine_distance, euclidean_distance, marker_summary, markers_to_csv,
    mmd, rf_auroc, CellTypeTable, ForestConfig, MeanStd, MetricReport,
};
use crate::seed::{derive_seed, derive_seed_indexed, rng, sha256_hex};
use crate::synth::{fit_scm, generate_linear_uniform, sample_structure_free, sample_synthetic};

#[derive(Default)]
pub struct RunOptions<'a> {
    /// Never call the network; LLM answers come from the fixture or cache.
    pub offline: bool,
    /// Replaces the configured chat client.
    pub client: Option<&'a dyn ChatClient>,
}

struct SeedData {
    seed: u64,
    train_raw: ExpressionMatrix,
    train_log: ExpressionMatrix,
    test_eval: ExpressionMatrix,
}

struct Annotation {
    reference: ExpressionMatrix,
    labels: Vec<String>,
}

struct Shared<'a> {
    cfg: &'a RunConfig,
    seeds: Vec<SeedData>,
    partitions: BTreeMap<KbSource, TfPartition>,
    llm_grns: BTreeMap<KbSource, Grn>,
    truth: Option<Grn>,
    annotation: Option<Annotation>,
}

fn timed<T, E: Into<BoxError>>(
    timings: &mut Vec<StageTiming>,
    stage: &str,
    f: impl FnOnce() -> Result<T, E>,
) -> Result<T, PipelineError> {
    let t = Instant::now();
    let out = f().map_err(|e| PipelineError::stage(stage, e));
    timings.push(StageTiming {
        stage: stage.to_string(),
        seconds: t.elapsed().as_secs_f64(),
    });
    out
}

fn eval_view(cfg: &RunConfig, m: &ExpressionMatrix) -> Result<ExpressionMatrix, BoxError> {
    Ok(if cfg.metrics.raw_counts {
        library_rescale(m, cfg.library_scale)?
    } else {
        normalize_log1p(m, cfg.library_scale)?
    })
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root)
        .unwrap_or(p)
        .components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Executes every arm of `cfg` and writes outputs plus `manifest.json` under
/// `cfg.out_dir`. On failure the manifest records the failing stage.
pub fn run_setting(cfg: &RunConfig, opts: &RunOptions) -> Result<RunManifest, PipelineError> {
    cfg.validate(opts.offline)?;
    let mut manifest = RunManifest::new(cfg.clone());
    std::fs::create_dir_all(&cfg.out_dir).map_err(super::io_err(&cfg.out_dir))?;
    if let Err(e) = execute(cfg, opts, &mut manifest) {
        let stage = match &e {
            PipelineError::Stage { stage, .. } => stage.clone(),
            _ => "setup".to_string(),
        };
        manifest.status = RunStatus::Failed {
            stage,
            message: e.to_string(),
        };
        let skip = [cfg.cache_path()];
        let _ = manifest.digest_outputs(&skip);
        manifest.write()?;
        return Err(e);
    }
    manifest.status = RunStatus::Complete;
    let mut skip = vec![cfg.cache_path()];
    skip.extend(cfg.llm.fixture.clone());
    manifest.digest_outputs(&skip)?;
    manifest.write()?;
    Ok(manifest)
}

/// Chat client for `cfg`: the fixture or cache when offline, otherwise the
/// HTTP endpoint behind the response cache.
pub fn build_client(cfg: &RunConfig, offline: bool) -> Result<Box<dyn ChatClient>, BoxError> {
    if offline {
        if let Some(f) = &cfg.llm.fixture {
            return Ok(Box::new(FixtureClient::load(f)?));
        }
        let cache = ResponseCache::open(cfg.cache_path())?;
        return Ok(Box::new(CachedClient::new(cache, None)));
    }
    let cache = ResponseCache::open(cfg.cache_path())?;
    let upstream = HttpChatClient::new(cfg.llm.http());
    Ok(Box::new(CachedClient::new(cache, Some(Box::new(upstream)))))
}

fn execute(cfg: &RunConfig, opts: &RunOptions, m: &mut RunManifest) -> Result<(), PipelineError> {
    let out = &cfg.out_dir;
    let mut timings = Vec::new();

    for p in [&cfg.data.matrix, &cfg.data.labels, &cfg.kb.tf_list]
        .into_iter()
        .flatten()
        .chain(cfg.arms.iter().filter_map(|a| a.grn_file.as_ref()))
    {
        m.record_input(p)?;
    }
    if opts.offline && cfg.uses_llm() {
        if let Some(f) = &cfg.llm.fixture {
            m.record_input(f)?;
        }
    }

    let (full, truth) = timed(&mut timings, "ingest", || -> Result<_, BoxError> {
        match (&cfg.data.matrix, &cfg.data.linear_uniform) {
            (Some(path), _) => {
                let format = cfg.matrix_format().expect("matrix configured");
                Ok((load_matrix(path, format)?, None))
            }
            (None, Some(spec)) => {
                let data = generate_linear_uniform(spec)?;
                Ok((data.matrix, Some(data.grn)))
            }
            (None, None) => Err("no data source".into()),
        }
    })?;
    if let Some(g) = &truth {
        write_grn(g, &out.join("data/truth_grn.tsv")).map_err(|e| PipelineError::stage("ingest", e))?;
    }

    let seeds: Vec<SeedData> = timed(&mut timings, "preprocess", || -> Result<_, BoxError> {
        let pre = PreprocessConfig {
            min_cells_expressed: cfg.split.min_cells_expressed.unwrap_or(cfg.split.test_size),
            n_top_genes: cfg.split.n_top_genes,
        };
        cfg.seeds
            .iter()
            .map(|&seed| {
                let split = SplitSpec {
                    test_size: cfg.split.test_size,
                    val_size: cfg.split.val_size,
                    seed,
                };
                let (train, val, test) = preprocess(&full, &pre, &split)?;
                write_split(out, seed, &train, &val, &test)?;
                Ok(SeedData {
                    seed,
                    train_log: normalize_log1p(&train, cfg.library_scale)?,
                    test_eval: eval_view(cfg, &test)?,
                    train_raw: train,
                })
            })
            .collect()
    })?;
    drop(full);
    let vocab = seeds[0].train_raw.genes().clone();
    m.vocabulary_digest = vocab.digest();
    write_file(&out.join("data/vocabulary.txt"), vocab.symbols().join("\n") + "\n")?;

    let owned_client;
    let client: Option<&dyn ChatClient> = match (cfg.uses_llm(), opts.client) {
        (false, _) => None,
        (true, Some(c)) => Some(c),
        (true, None) => {
            owned_client = build_client(cfg, opts.offline).map_err(|e| PipelineError::stage("llm-client", e))?;
            Some(owned_client.as_ref())
        }
    };
    let kb = client.map(|c| LlmKb::new(c, cfg.context.clone(), cfg.llm.options()));

    let needed: BTreeSet<KbSource> = cfg.arms.iter().filter_map(|a| cfg.kb_source_of(a)).collect();
    let mut partitions = BTreeMap::new();
    for source in needed {
        let stage = format!("partition:{}", source.as_str());
        let p = timed(&mut timings, &stage, || -> Result<TfPartition, BoxError> {
            let p = match source {
                KbSource::HumanFile => {
                    let path = cfg.kb.tf_list.as_ref().expect("validated");
                    let listed = read_symbol_list(path)?;
                    let present: Vec<&String> = listed.iter().filter(|s| vocab.contains(s)).collect();
                    if present.is_empty() {
                        return Err(format!("no TF from {} is in the vocabulary", path.display()).into());
                    }
                    TfPartition::from_vocabulary(&vocab, present)?
                }
                KbSource::Truth => {
                    let g = truth.as_ref().ok_or("truth partition needs a LinearUniform source")?;
                    TfPartition::from_vocabulary(&vocab, g.partition().tfs().iter().filter(|s| vocab.contains(s)))?
                }
                KbSource::Llm => {
                    let kb = kb.as_ref().expect("client built for LLM arms");
                    extract_tf_partition(
                        &vocab,
                        kb,
                        cfg.llm.window.min(vocab.len()),
                        cfg.llm.stride.min(cfg.llm.window.min(vocab.len())),
                        cfg.llm.validate_membership,
                    )?
                }
            };
            let json = serde_json::to_string_pretty(&p)?;
            write_file(&out.join(format!("partitions/{}.json", source.as_str())), json + "\n")?;
            Ok(p)
        })?;
        partitions.insert(source, p);
    }

    let mut llm_grns = BTreeMap::new();
    let llm_sources: BTreeSet<KbSource> = cfg
        .arms
        .iter()
        .filter(|a| a.grn_source == GrnSource::Llm)
        .filter_map(|a| cfg.kb_source_of(a))
        .collect();
    for source in llm_sources {
        let stage = format!("llm-grn:{}", source.as_str());
        let g = timed(&mut timings, &stage, || {
            build_llm_grn(&partitions[&source], kb.as_ref().expect("client built"), cfg.k)
        })?;
        llm_grns.insert(source, g);
    }

    let annotation = match &cfg.data.labels {
        Some(path) => Some(timed(&mut timings, "annotation-reference", || -> Result<_, BoxError> {
            let map = read_labels(path)?;
            let train = &seeds[0].train_log;
            let rows: Vec<usize> = (0..train.n_cells())
                .filter(|&i| map.contains_key(&train.barcodes()[i]))
                .collect();
            if rows.is_empty() {
                return Err("no training cell has a label".into());
            }
            let reference = train.select_cells(&rows);
            let labels: Vec<String> = rows.iter().map(|&i| map[&train.barcodes()[i]].clone()).collect();
            let table = CellTypeTable::tabulate(labels.iter().map(String::as_str), &labels);
            write_file(&out.join("data/celltypes_reference.csv"), table.to_csv())?;
            if !cfg.annotation.markers.is_empty() {
                let stats = marker_summary(&reference, &labels, &cfg.annotation.markers)?;
                write_file(&out.join("data/markers_reference.csv"), markers_to_csv(&stats))?;
            }
            Ok(Annotation { reference, labels })
        })?),
        None => None,
    };

    let shared = Shared {
        cfg,
        seeds,
        partitions,
        llm_grns,
        truth,
        annotation,
    };
    let width = cfg.parallel_arms.max(1);
    for chunk in cfg.arms.chunks(width) {
        let results: Vec<_> = if width == 1 {
            chunk.iter().map(|a| run_arm(&shared, a)).collect()
        } else {
            chunk.par_iter().map(|a| run_arm(&shared, a)).collect()
        };
        for r in results {
            let (record, t) = r?;
            m.arms.push(record);
            timings.extend(t);
        }
    }
    m.timings = timings;

    let t = Instant::now();
    let report = make_report(std::slice::from_ref(m))?;
    report.write(out)?;
    m.timings.push(StageTiming {
        stage: "report".into(),
        seconds: t.elapsed().as_secs_f64(),
    });
    Ok(())
}

#[derive(Serialize)]
struct SplitRecord<'a> {
    seed: u64,
    train: &'a [String],
    val: &'a [String],
    test: &'a [String],
}

fn write_split(
    out: &Path,
    seed: u64,
    train: &ExpressionMatrix,
    val: &ExpressionMatrix,
    test: &ExpressionMatrix,
) -> Result<(), PipelineError> {
    let rec = SplitRecord {
        seed,
        train: train.barcodes(),
        val: val.barcodes(),
        test: test.barcodes(),
    };
    let json = serde_json::to_string(&rec).expect("split serializes");
    write_file(&out.join(format!("data/split_seed{seed}.json")), json + "\n")
}

/// Real training cells drawn without replacement when enough are available.
fn control_sample(train: &ExpressionMatrix, n: usize, seed: u64) -> ExpressionMatrix {
    let mut r = rng(seed);
    let pool = train.n_cells();
    let rows: Vec<usize> = if n <= pool {
        rand::seq::index::sample(&mut r, pool, n).into_vec()
    } else {
        (0..n).map(|_| r.random_range(0..pool)).collect()
    };
    train.select_cells(&rows)
}

fn partition_digest(p: &TfPartition) -> String {
    sha256_hex(serde_json::to_string(p).expect("partition serializes").as_bytes())
}

fn run_arm(sh: &Shared, arm: &ArmConfig) -> Result<(ArmRecord, Vec<StageTiming>), PipelineError> {
    let cfg = sh.cfg;
    let out = &cfg.out_dir;
    let dir = out.join("arms").join(&arm.name);
    let kb = cfg.kb_source_of(arm);
    let partition = kb.and_then(|k| sh.partitions.get(&k));
    let mut timings = Vec::new();
    let mut grn_files = Vec::new();
    let mut per_seed = Vec::new();
    let mut all: Vec<[f64; 4]> = Vec::new();
    let mut file_grn: Option<Grn> = None;
    let stage = |s: &str| format!("arm {}: {s}", arm.name);

    for sd in &sh.seeds {
        let s = sd.seed;
        let sdir = dir.join(format!("seed{s}"));
        let grn: Option<Grn> = timed(&mut timings, &stage("grn"), || -> Result<_, BoxError> {
            Ok(match arm.grn_source {
                GrnSource::Llm => Some(sh.llm_grns[&kb.expect("validated")].clone()),
                GrnSource::Statistical => {
                    let gbm = GbmConfig { seed: s, ..cfg.gbm.clone() };
                    let train = if cfg.infer_on_raw { &sd.train_raw } else { &sd.train_log };
                    Some(infer_grn(train, partition.ok_or("missing partition")?, cfg.k, &gbm)?)
                }
                GrnSource::Random => Some(random_grn(
                    partition.ok_or("missing partition")?,
                    cfg.k,
                    derive_seed(s, "random-grn"),
                )?),
                GrnSource::File => {
                    if file_grn.is_none() {
                        file_grn = Some(read_grn(arm.grn_file.as_ref().expect("validated"))?);
                    }
                    file_grn.clone()
                }
                GrnSource::Truth => sh.truth.clone(),
                GrnSource::Control | GrnSource::Stage1 => None,
            })
        })?;
        if let Some(g) = &grn {
            let path = sdir.join("grn.tsv");
            write_grn(g, &path).map_err(|e| PipelineError::stage(stage("grn"), e))?;
            grn_files.push(relative(out, &path));
        }

        let scm = match &grn {
            Some(g) => Some(timed(&mut timings, &stage("fit-scm"), || {
                let gbm = GbmConfig { seed: s, ..cfg.gbm.clone() };
                fit_scm(&sd.train_raw, g, &gbm, cfg.library_scale)
            })?),
            None => None,
        };

        let n_syn = cfg.n_synthetic.unwrap_or(sd.test_eval.n_cells());
        let mut seed_values = Vec::new();
        for i in 0..cfg.n_datasets {
            let ds_seed = derive_seed_indexed(s, "dataset", i);
            let syn = timed(&mut timings, &stage("synthesize"), || -> Result<_, BoxError> {
                Ok(match arm.grn_source {
                    GrnSource::Control => control_sample(&sd.train_raw, n_syn, ds_seed),
                    GrnSource::Stage1 => sample_structure_free(
                        &sd.train_raw,
                        partition.ok_or("missing partition")?,
                        n_syn,
                        ds_seed,
                        cfg.library_scale,
                    )?,
                    _ => sample_synthetic(scm.as_ref().expect("graph arms fit a model"), n_syn, ds_seed)?,
                })
            })?;
            if cfg.write_synthetic {
                syn.write_csv(&sdir.join(format!("synthetic_{i}.csv")))
                    .map_err(|e| PipelineError::stage(stage("synthesize"), e))?;
            }
            let values = timed(&mut timings, &stage("evaluate"), || -> Result<_, BoxError> {
                let se = eval_view(cfg, &syn)?;
                let forest = ForestConfig {
                    seed: derive_seed_indexed(s, "rf", i),
                    ..cfg.metrics.forest.clone()
                };
                let v = [
                    cosine_distance(&sd.test_eval, &se)?,
                    euclidean_distance(&sd.test_eval, &se)?,
                    mmd(&sd.test_eval, &se, &cfg.metrics.mmd)?,
                    rf_auroc(&sd.test_eval, &se, &forest, 1)?.mean,
                ];
                if let (Some(a), true) = (&sh.annotation, s == sh.seeds[0].seed && i == 0) {
                    annotate(cfg, a, &syn, &dir)?;
                }
                Ok(v)
            })?;
            seed_values.push(values);
        }
        let mean = |j: usize| seed_values.iter().map(|v| v[j]).sum::<f64>() / seed_values.len() as f64;
        per_seed.push(SeedMetrics {
            seed: s,
            cosine: mean(0),
            euclidean: mean(1),
            mmd: mean(2),
            rf_auroc: mean(3),
        });
        all.extend(seed_values);
    }

    let col = |j: usize| MeanStd::from_samples(&all.iter().map(|v| v[j]).collect::<Vec<_>>());
    let report = MetricReport {
        real: "test".into(),
        synthetic: arm.name.clone(),
        cosine: col(0),
        euclidean: col(1),
        mmd: col(2),
        rf_auroc: col(3),
        n_repeats: all.len(),
        mmd_kernel: cfg.metrics.mmd.describe(),
    };
    write_file(&dir.join("metrics.csv"), MetricReport::to_csv(std::slice::from_ref(&report)))?;
    write_file(
        &dir.join("metrics.json"),
        serde_json::to_string_pretty(&report).expect("report serializes") + "\n",
    )?;
    let partition_digest = match arm.grn_source {
        GrnSource::Control | GrnSource::Stage1 => None,
        GrnSource::File | GrnSource::Truth => file_grn
            .as_ref()
            .or(sh.truth.as_ref())
            .map(|g| partition_digest(g.partition())),
        _ => partition.map(partition_digest),
    };
    Ok((
        ArmRecord {
            name: arm.name.clone(),
            kb_source: kb,
            grn_source: arm.grn_source,
            report,
            per_seed,
            grns: grn_files,
            partition_digest,
        },
        timings,
    ))
}

fn annotate(cfg: &RunConfig, a: &Annotation, syn: &ExpressionMatrix, dir: &Path) -> Result<(), BoxError> {
    let syn_log = normalize_log1p(syn, cfg.library_scale)?;
    let (assigned, table) = annotate_and_proportions(&a.reference, &a.labels, &syn_log, cfg.annotation.n_pcs)?;
    write_file(&dir.join("celltypes.csv"), table.to_csv())?;
    if !cfg.annotation.markers.is_empty() {
        let stats = marker_summary(&syn_log, &assigned, &cfg.annotation.markers)?;
        write_file(&dir.join("markers.csv"), markers_to_csv(&stats))?;
    }
    Ok(())
}

/// Partition stored under `partitions/<source>.json` by a previous run.
pub fn load_partition(path: &Path) -> Result<TfPartition, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
}
