//! Experiment orchestration: the command-level operations behind the `wsnet`
//! binary. Every command reads one configuration file, writes its artifacts
//! under the experiment output directory and appends a run-manifest entry
//! recording the configuration hash, seeds and any command-line overrides.

use crate::adaptation::{run_adaptation_suite, summarize, AdaptMethod};
use crate::config::{ExperimentConfig, RecipeKind};
use crate::dataset::{partition, ClusterPartition, Corpus, Split};
use crate::error::{Error, Result};
use crate::recognizer::{
    greedy_decode, image_to_input, load_checkpoint, save_checkpoint, ConditioningMode, CorpusCer,
    Recognizer,
};
use crate::report::{
    save_adaptation_report, save_adaptation_summary, save_line_records, svg_box_plot,
    svg_line_chart, EvalReport, EvalRow,
};
use crate::style_encoder::{
    extract_writer_embedding, train_encoder, ExtractMeta, StyleEncoder,
};
use crate::training::{normal_recipe, pretrained_recipe, train};
use crate::wsb::{EmbeddingInit, EmbeddingTable};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// Well-known artifact locations under one experiment output directory.
pub struct Paths {
    pub root: PathBuf,
}

impl Paths {
    pub fn new(cfg: &ExperimentConfig) -> Paths {
        Paths {
            root: cfg.experiment.output_dir.clone(),
        }
    }

    pub fn data_dir(&self) -> PathBuf {
        self.root.join("data")
    }

    pub fn adapt_data_dir(&self) -> PathBuf {
        self.root.join("adapt_data")
    }

    pub fn partition_file(&self) -> PathBuf {
        self.data_dir().join("partition.tsv")
    }

    pub fn encoder_file(&self) -> PathBuf {
        self.root.join("encoder").join("encoder.wsen")
    }

    pub fn embeddings_file(&self) -> PathBuf {
        self.root.join("embeddings").join("pretrained.wsem")
    }

    pub fn embeddings_meta_file(&self) -> PathBuf {
        self.root.join("embeddings").join("pretrained.meta.toml")
    }

    pub fn train_dir(&self, run_name: &str) -> PathBuf {
        self.root.join("train").join(run_name)
    }

    pub fn final_checkpoint(&self, run_name: &str) -> PathBuf {
        self.train_dir(run_name).join("final.wsck")
    }

    pub fn final_table(&self, run_name: &str) -> PathBuf {
        self.train_dir(run_name).join("final.wsem")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn adapt_dir(&self) -> PathBuf {
        self.root.join("adapt")
    }

    pub fn report_dir(&self) -> PathBuf {
        self.root.join("report")
    }

    pub fn run_manifest(&self) -> PathBuf {
        self.root.join("run_manifest.jsonl")
    }
}

#[derive(Serialize)]
struct ManifestEntry<'a> {
    command: &'a str,
    config_hash: String,
    seed: u64,
    overrides: &'a [String],
    outputs: Vec<String>,
}

fn record_run(
    cfg: &ExperimentConfig,
    command: &str,
    overrides: &[String],
    outputs: &[PathBuf],
) -> Result<()> {
    let paths = Paths::new(cfg);
    fs::create_dir_all(&paths.root).map_err(|e| Error::io(&paths.root, e))?;
    let entry = ManifestEntry {
        command,
        config_hash: format!("{:016x}", cfg.hash()),
        seed: cfg.experiment.seed,
        overrides,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let line = serde_json::to_string(&entry).map_err(|e| Error::Invalid(e.to_string()))?;
    let path = paths.run_manifest();
    let mut f = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(&path)
        .map_err(|e| Error::io(&path, e))?;
    writeln!(f, "{line}").map_err(|e| Error::io(&path, e))
}

/// Generates the training corpus (with partition) and the unseen-writer
/// adaptation corpus. Idempotent for a fixed config.
pub fn cmd_generate(cfg: &ExperimentConfig, overrides: &[String]) -> Result<()> {
    let paths = Paths::new(cfg);
    let data = paths.data_dir();
    fs::create_dir_all(&data).map_err(|e| Error::io(&data, e))?;

    let corpus = Corpus::generate(&cfg.corpus, cfg.stage_seed("corpus"))?;
    corpus.write(&data)?;
    let part = partition(
        &corpus.records,
        cfg.partition.tst_global_fraction,
        cfg.stage_seed("partition"),
    )?;
    part.save_with_records(&paths.partition_file(), &corpus.records)?;

    let adata = paths.adapt_data_dir();
    fs::create_dir_all(&adata).map_err(|e| Error::io(&adata, e))?;
    let adapt_corpus = Corpus::generate(&cfg.adaptation_corpus, cfg.stage_seed("adapt_corpus"))?;
    adapt_corpus.write(&adata)?;

    record_run(
        cfg,
        "generate",
        overrides,
        &[data, paths.partition_file(), adata],
    )
}

fn load_training_corpus(cfg: &ExperimentConfig) -> Result<(Corpus, ClusterPartition)> {
    let paths = Paths::new(cfg);
    let corpus = Corpus::load(&paths.data_dir(), &cfg.corpus)?;
    let loaded = ClusterPartition::load(&paths.partition_file())?;
    // rebuild the split structure from the saved file
    let mut writer_cluster = std::collections::BTreeMap::new();
    let mut splits = std::collections::BTreeMap::new();
    let mut tst_global = std::collections::BTreeSet::new();
    for (&id, &(label, split)) in &loaded {
        writer_cluster.insert(corpus.records[id].wsi, label);
        splits.insert(id, split);
        if split == Split::TestGlobal {
            tst_global.insert(id);
        }
    }
    Ok((
        corpus,
        ClusterPartition {
            writer_cluster,
            splits,
            tst_global,
        },
    ))
}

pub fn cmd_train_encoder(cfg: &ExperimentConfig, overrides: &[String]) -> Result<()> {
    let paths = Paths::new(cfg);
    let (corpus, part) = load_training_corpus(cfg)?;
    let mut encoder = StyleEncoder::build(
        cfg.encoder.architecture.to_config(cfg.net.ed),
        cfg.stage_seed("encoder"),
    )?;
    let mut train_cfg = cfg.encoder.train.clone();
    train_cfg.seed ^= cfg.stage_seed("encoder_train");
    // pre-training sees only training lines
    let train_ids = part.train_ids();
    let sub = corpus_subset(&corpus, &train_ids);
    let report = train_encoder(&mut encoder, &sub, &cfg.augment, &train_cfg)?;

    let dir = paths.encoder_file().parent().unwrap().to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    encoder.save(&paths.encoder_file())?;
    let losses_path = dir.join("losses.tsv");
    let mut text = String::new();
    for (i, l) in report.losses.iter().enumerate() {
        text.push_str(&format!("{i}\t{l:.6}\n"));
    }
    fs::write(&losses_path, text).map_err(|e| Error::io(&losses_path, e))?;
    record_run(
        cfg,
        "train-encoder",
        overrides,
        &[paths.encoder_file(), losses_path],
    )
}

/// A corpus containing only the given line ids (records keep their writers).
fn corpus_subset(corpus: &Corpus, ids: &[usize]) -> Corpus {
    Corpus {
        spec: corpus.spec.clone(),
        seed: corpus.seed,
        charset: corpus.charset.clone(),
        records: ids.iter().map(|&i| corpus.records[i].clone()).collect(),
        styles: corpus.styles.clone(),
        images: ids.iter().map(|&i| corpus.images[i].clone()).collect(),
    }
}

pub fn cmd_extract_embeddings(cfg: &ExperimentConfig, overrides: &[String]) -> Result<()> {
    let paths = Paths::new(cfg);
    let (corpus, part) = load_training_corpus(cfg)?;
    let encoder = StyleEncoder::load(&paths.encoder_file())?;
    if encoder.cfg.ed != cfg.net.ed {
        return Err(Error::ArtifactMismatch(format!(
            "encoder ed {} vs config ed {}",
            encoder.cfg.ed, cfg.net.ed
        )));
    }
    let seed = cfg.stage_seed("extract");
    let table = extract_table(&corpus, Some(&part), &encoder, cfg.encoder.extract_k, seed)?;
    let dir = paths.embeddings_file().parent().unwrap().to_path_buf();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    table.save(&paths.embeddings_file(), corpus.charset.hash())?;
    let meta = ExtractMeta {
        k: cfg.encoder.extract_k,
        seed,
        encoder_hash: encoder.params_hash(),
    };
    let meta_text = toml::to_string_pretty(&meta).map_err(|e| Error::Invalid(e.to_string()))?;
    fs::write(&paths.embeddings_meta_file(), meta_text)
        .map_err(|e| Error::io(&paths.embeddings_meta_file(), e))?;
    record_run(
        cfg,
        "extract-embeddings",
        overrides,
        &[paths.embeddings_file(), paths.embeddings_meta_file()],
    )
}

/// One aggregated embedding per writer, ordered by WSI. Writers draw from
/// their training lines when a partition is given.
pub fn extract_table(
    corpus: &Corpus,
    part: Option<&ClusterPartition>,
    encoder: &StyleEncoder,
    k: usize,
    seed: u64,
) -> Result<EmbeddingTable> {
    let mut rows = ndarray::Array2::<f32>::zeros((corpus.n_writers(), encoder.cfg.ed));
    for wsi in 0..corpus.n_writers() {
        let mut ids: Vec<usize> = corpus
            .lines_of_writer(wsi)
            .into_iter()
            .filter(|id| match part {
                Some(p) => p.splits.get(id) == Some(&Split::Train),
                None => true,
            })
            .collect();
        if ids.is_empty() {
            log::warn!("writer {wsi} has no training lines; extracting from all its lines");
            ids = corpus.lines_of_writer(wsi);
        }
        if ids.is_empty() {
            return Err(Error::Invalid(format!("writer {wsi} has no lines at all")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (wsi as u64).wrapping_mul(0x9e3779b9));
        let e = if ids.len() == 1 {
            encoder.encode_image(&corpus.images[ids[0]])?
        } else {
            extract_writer_embedding(encoder, corpus, &ids, k, &mut rng)?
        };
        rows.row_mut(wsi).assign(&e);
    }
    Ok(EmbeddingTable::from_pretrained(rows))
}

pub fn cmd_train(cfg: &ExperimentConfig, overrides: &[String]) -> Result<()> {
    let paths = Paths::new(cfg);
    let (corpus, part) = load_training_corpus(cfg)?;
    let run_name = cfg.run_name();
    let out_dir = paths.train_dir(&run_name);
    fs::create_dir_all(&out_dir).map_err(|e| Error::io(&out_dir, e))?;

    let mut table = match (cfg.net.mode.is_conditioned(), cfg.net.embedding_init) {
        (false, _) => None,
        (true, EmbeddingInit::Normal) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.stage_seed("table"));
            Some(EmbeddingTable::init_normal(
                corpus.n_writers(),
                cfg.net.ed,
                &mut rng,
            ))
        }
        (true, EmbeddingInit::Pretrained) => {
            let (t, charset_hash) = EmbeddingTable::load(&paths.embeddings_file())?;
            if charset_hash != corpus.charset.hash() {
                return Err(Error::ArtifactMismatch(
                    "embedding table charset hash differs from corpus charset".into(),
                ));
            }
            if t.ed() != cfg.net.ed {
                return Err(Error::ArtifactMismatch(format!(
                    "embedding table ed {} differs from configured ed {}",
                    t.ed(),
                    cfg.net.ed
                )));
            }
            if t.n_writers() != corpus.n_writers() {
                return Err(Error::ArtifactMismatch(format!(
                    "embedding table has {} writers, corpus has {}",
                    t.n_writers(),
                    corpus.n_writers()
                )));
            }
            Some(t)
        }
    };

    let mut net = Recognizer::build(
        cfg.net.architecture.clone(),
        cfg.net.mode,
        if cfg.net.mode.is_conditioned() {
            cfg.net.ed
        } else {
            0
        },
        corpus.charset.clone(),
        cfg.stage_seed("net") ^ cfg.training.settings.seed,
        cfg.init_spec(),
    )?;

    let plan = match cfg.training.recipe {
        RecipeKind::Normal => normal_recipe(),
        RecipeKind::Pretrained => pretrained_recipe(),
    }
    .scaled(cfg.training.scale);

    let train_ids = part.train_ids();
    let eval_ids: Vec<usize> = part.tst_global.iter().copied().collect();
    let mut settings = cfg.training.settings.clone();
    settings.seed ^= cfg.stage_seed("train");
    train(
        &mut net,
        table.as_mut(),
        &corpus,
        &train_ids,
        &plan,
        &cfg.augment,
        &settings,
        Some(&eval_ids),
        Some(&out_dir),
    )?;

    save_checkpoint(&paths.final_checkpoint(&run_name), &net, cfg.hash(), plan.total_iterations() as u64)?;
    if let Some(t) = &table {
        t.save(&paths.final_table(&run_name), corpus.charset.hash())?;
    }
    record_run(
        cfg,
        "train",
        overrides,
        &[paths.final_checkpoint(&run_name), out_dir],
    )
}

/// Loads the trained model pair for this config (checkpoint + table when
/// conditioned), enforcing artifact compatibility.
pub fn load_trained(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
) -> Result<(Recognizer, Option<EmbeddingTable>)> {
    let paths = Paths::new(cfg);
    let run_name = cfg.run_name();
    let ckpt_path = checkpoint
        .map(|p| p.to_path_buf())
        .unwrap_or_else(|| paths.final_checkpoint(&run_name));
    let (net, meta) = load_checkpoint(&ckpt_path)?;
    if meta.config_hash != 0 && meta.config_hash != cfg.hash() {
        return Err(Error::ArtifactMismatch(format!(
            "checkpoint config hash {:016x} differs from current config {:016x}",
            meta.config_hash,
            cfg.hash()
        )));
    }
    let table = if net.mode.is_conditioned() {
        let table_path = ckpt_path.with_file_name(
            ckpt_path
                .file_stem()
                .map(|s| format!("{}.wsem", s.to_string_lossy()))
                .unwrap_or_else(|| "final.wsem".into()),
        );
        let (t, charset_hash) = EmbeddingTable::load(&table_path)?;
        if charset_hash != net.charset.hash() {
            return Err(Error::ArtifactMismatch(
                "table charset hash differs from checkpoint charset".into(),
            ));
        }
        if t.ed() != net.ed {
            return Err(Error::ArtifactMismatch(format!(
                "table ed {} differs from network ed {}",
                t.ed(),
                net.ed
            )));
        }
        Some(t)
    } else {
        None
    };
    Ok((net, table))
}

pub fn cmd_evaluate(
    cfg: &ExperimentConfig,
    checkpoint: Option<&Path>,
    overrides: &[String],
) -> Result<EvalReport> {
    let paths = Paths::new(cfg);
    let (corpus, part) = load_training_corpus(cfg)?;
    let (net, table) = load_trained(cfg, checkpoint)?;
    if net.charset.hash() != corpus.charset.hash() {
        return Err(Error::ArtifactMismatch(
            "checkpoint charset differs from corpus charset".into(),
        ));
    }

    let run_name = cfg.run_name();
    let mut rows = Vec::new();
    let tst: Vec<usize> = part.tst_global.iter().copied().collect();
    let mut line_records = Vec::new();
    let mut eval_split = |name: String, ids: &[usize]| -> Result<()> {
        if ids.is_empty() {
            return Ok(());
        }
        let mut agg = CorpusCer::new();
        for &id in ids {
            let r = &corpus.records[id];
            let input = image_to_input(&corpus.images[id]);
            let e_row = match &table {
                Some(t) if net.mode.is_conditioned() => Some(t.lookup(r.wsi)?.to_owned()),
                _ => None,
            };
            let e_view = e_row.as_ref().map(|v| v.view());
            let logits = net.forward_logits(&input, e_view.as_ref())?;
            let hyp = net.charset.decode(&greedy_decode(&logits, net.charset.blank()));
            let mut one = CorpusCer::new();
            one.add(&hyp, &r.transcript);
            line_records.push((id, hyp, one.cer()));
            agg.merge(&one);
        }
        rows.push(EvalRow {
            split: name,
            lines: agg.lines,
            ref_chars: agg.total_ref_chars,
            edits: agg.total_edits,
            cer: agg.cer(),
        });
        Ok(())
    };

    eval_split("TST".into(), &tst)?;
    for (label, ids) in part.cluster_test_ids(&corpus.records) {
        eval_split(format!("TST_{label}"), &ids)?;
    }

    let report = EvalReport {
        setup: run_name.clone(),
        mode: format!("{:?}", net.mode),
        init: format!("{:?}", cfg.net.embedding_init),
        ed: cfg.net.ed,
        config_hash: cfg.hash(),
        rows,
    };
    let dir = paths.eval_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let summary_path = dir.join(format!("{run_name}.summary.tsv"));
    let lines_path = dir.join(format!("{run_name}.lines.tsv"));
    report.save(&summary_path)?;
    save_line_records(&lines_path, &line_records)?;
    record_run(cfg, "evaluate", overrides, &[summary_path, lines_path])?;
    Ok(report)
}

/// Adaptation experiment. The current config names the conditioned setup;
/// the baseline checkpoint comes from a run of the same experiment with the
/// baseline mode (or an explicit path).
pub fn cmd_adapt(
    cfg: &ExperimentConfig,
    baseline_checkpoint: Option<&Path>,
    methods: Option<Vec<AdaptMethod>>,
    clusters: Option<Vec<usize>>,
    overrides: &[String],
) -> Result<()> {
    let paths = Paths::new(cfg);
    let adapt_corpus = Corpus::load(&paths.adapt_data_dir(), &cfg.adaptation_corpus)?;
    let (conditioned, table) = load_trained(cfg, None)?;
    if !conditioned.mode.is_conditioned() {
        return Err(Error::Config(
            "adaptation requires a conditioned setup in the config".into(),
        ));
    }
    let table = table.expect("conditioned load returns a table");

    let baseline_path = match baseline_checkpoint {
        Some(p) => p.to_path_buf(),
        None => find_baseline_checkpoint(&paths)?,
    };
    let (baseline, _) = load_checkpoint(&baseline_path).map(|(n, m)| {
        (n, m)
    })?;
    if baseline.mode != ConditioningMode::Baseline {
        return Err(Error::ArtifactMismatch(format!(
            "{} is not a baseline checkpoint",
            baseline_path.display()
        )));
    }
    if baseline.charset.hash() != conditioned.charset.hash() {
        return Err(Error::ArtifactMismatch(
            "baseline and conditioned checkpoints use different charsets".into(),
        ));
    }

    let mut suite = cfg.adaptation.clone();
    suite.seed ^= cfg.stage_seed("adapt");
    if let Some(m) = methods {
        suite.methods = m;
    }
    if let Some(c) = clusters {
        let unknown: Vec<usize> = c
            .iter()
            .copied()
            .filter(|x| !suite.cluster_sizes.contains(x))
            .collect();
        if !unknown.is_empty() {
            return Err(Error::Config(format!(
                "requested clusters {unknown:?} not in configured sizes {:?}",
                suite.cluster_sizes
            )));
        }
        suite.cluster_sizes = c;
    }

    let encoder = if suite.methods.contains(&AdaptMethod::Encode) {
        Some(StyleEncoder::load(&paths.encoder_file())?)
    } else {
        None
    };

    let report = run_adaptation_suite(
        &baseline,
        &conditioned,
        &table,
        encoder.as_ref(),
        &adapt_corpus,
        &cfg.augment,
        &suite,
    )?;

    let run_name = cfg.run_name();
    let dir = paths.adapt_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let report_path = dir.join(format!("{run_name}.report.tsv"));
    let summary_path = dir.join(format!("{run_name}.summary.tsv"));
    save_adaptation_report(&report_path, &run_name, &report.rows)?;
    save_adaptation_summary(&summary_path, &summarize(&report.rows))?;
    record_run(cfg, "adapt", overrides, &[report_path, summary_path])
}

fn find_baseline_checkpoint(paths: &Paths) -> Result<PathBuf> {
    let train_root = paths.root.join("train");
    let entries = fs::read_dir(&train_root).map_err(|e| Error::io(&train_root, e))?;
    let mut candidates: Vec<PathBuf> = entries
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().starts_with("baseline"))
                .unwrap_or(false)
        })
        .map(|p| p.join("final.wsck"))
        .filter(|p| p.exists())
        .collect();
    candidates.sort();
    candidates.into_iter().next().ok_or_else(|| {
        Error::ArtifactMismatch(
            "no baseline checkpoint found under train/; train one with --mode baseline".into(),
        )
    })
}

/// Aggregates evaluation and adaptation artifacts of several experiment
/// directories into CSV tables and SVG charts. Missing pieces are skipped
/// with a warning; a partial report is still written.
pub fn cmd_report(run_dirs: &[PathBuf], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let mut eval_reports = Vec::new();
    let mut adapt_rows = Vec::new();
    for dir in run_dirs {
        let eval_dir = dir.join("eval");
        match fs::read_dir(&eval_dir) {
            Ok(entries) => {
                for e in entries.filter_map(|e| e.ok()) {
                    let p = e.path();
                    if p.to_string_lossy().ends_with(".summary.tsv") {
                        eval_reports.push(EvalReport::load(&p)?);
                    }
                }
            }
            Err(_) => log::warn!("{}: no eval artifacts, skipped", dir.display()),
        }
        let adapt_dir = dir.join("adapt");
        if let Ok(entries) = fs::read_dir(&adapt_dir) {
            for e in entries.filter_map(|e| e.ok()) {
                let p = e.path();
                if p.to_string_lossy().ends_with(".report.tsv") {
                    adapt_rows.extend(crate::report::load_adaptation_report(&p)?);
                }
            }
        }
    }

    // ED sweep table
    let sweep_csv = out_dir.join("ed_sweep.csv");
    {
        let mut text = String::from("setup,mode,init,ed,tst_cer\n");
        for r in &eval_reports {
            if let Some(cer) = r.cer_of("TST") {
                text.push_str(&format!(
                    "{},{},{},{},{:.6}\n",
                    r.setup, r.mode, r.init, r.ed, cer
                ));
            }
        }
        fs::write(&sweep_csv, text).map_err(|e| Error::io(&sweep_csv, e))?;
    }

    // per-cluster table
    let clusters_csv = out_dir.join("clusters.csv");
    {
        let mut text = String::from("setup,cluster,cer\n");
        for r in &eval_reports {
            for row in &r.rows {
                if let Some(label) = row.split.strip_prefix("TST_") {
                    text.push_str(&format!("{},{},{:.6}\n", r.setup, label, row.cer));
                }
            }
        }
        fs::write(&clusters_csv, text).map_err(|e| Error::io(&clusters_csv, e))?;
    }

    // adaptation summary table
    let adapt_csv = out_dir.join("adaptation_summary.csv");
    {
        let mut text = String::from("method,cluster_size,writers,mean,q1,median,q3\n");
        for s in summarize(&adapt_rows) {
            text.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6}\n",
                s.method.as_str(),
                s.cluster_size,
                s.writers,
                s.mean,
                s.q1,
                s.median,
                s.q3
            ));
        }
        fs::write(&adapt_csv, text).map_err(|e| Error::io(&adapt_csv, e))?;
    }

    // charts re-read the CSVs so figures are functions of the tables alone
    render_sweep_chart(&sweep_csv, &out_dir.join("ed_sweep.svg"))?;
    render_cluster_chart(&clusters_csv, &out_dir.join("clusters.svg"))?;
    render_adaptation_chart(&adapt_csv, &adapt_rows, &out_dir.join("adaptation_box.svg"))?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .skip(1)
        .filter(|l| !l.is_empty())
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect())
}

fn render_sweep_chart(csv: &Path, out: &Path) -> Result<()> {
    let rows = read_csv(csv)?;
    let mut series: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for r in rows {
        if r.len() != 5 {
            continue;
        }
        let key = format!("{} / {}", r[1], r[2]);
        let ed: f64 = r[3].parse().unwrap_or(f64::NAN);
        let cer: f64 = r[4].parse().unwrap_or(f64::NAN);
        series.entry(key).or_default().push((ed, cer));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = series.into_iter().collect();
    let svg = svg_line_chart("test CER by embedding dimension", &series);
    fs::write(out, svg).map_err(|e| Error::io(out, e))
}

fn render_cluster_chart(csv: &Path, out: &Path) -> Result<()> {
    let rows = read_csv(csv)?;
    let mut series: std::collections::BTreeMap<String, Vec<(f64, f64)>> =
        std::collections::BTreeMap::new();
    for r in rows {
        if r.len() != 3 {
            continue;
        }
        let cluster: f64 = r[1].parse().unwrap_or(f64::NAN);
        let cer: f64 = r[2].parse().unwrap_or(f64::NAN);
        series.entry(r[0].clone()).or_default().push((cluster, cer));
    }
    let series: Vec<(String, Vec<(f64, f64)>)> = series.into_iter().collect();
    let svg = svg_line_chart("test CER by writer cluster", &series);
    fs::write(out, svg).map_err(|e| Error::io(out, e))
}

fn render_adaptation_chart(
    csv: &Path,
    rows: &[crate::adaptation::AdaptationResult],
    out: &Path,
) -> Result<()> {
    // whiskers need the full per-writer spread, which the summary CSV does
    // not carry; min/max come from the report rows, quartiles from the CSV
    let summary = read_csv(csv)?;
    let mut groups = Vec::new();
    for s in summary {
        if s.len() != 7 {
            continue;
        }
        let method = s[0].clone();
        let cluster: usize = s[1].parse().unwrap_or(0);
        let (q1, med, q3): (f64, f64, f64) = (
            s[4].parse().unwrap_or(f64::NAN),
            s[5].parse().unwrap_or(f64::NAN),
            s[6].parse().unwrap_or(f64::NAN),
        );
        let mut per_writer: std::collections::BTreeMap<usize, Vec<f64>> =
            std::collections::BTreeMap::new();
        for r in rows {
            if r.method.as_str() == method && r.cluster_size == cluster {
                per_writer.entry(r.writer).or_default().push(r.reduction);
            }
        }
        let means: Vec<f64> = per_writer
            .values()
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
            .collect();
        let lo = means.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        groups.push((format!("{method}/{cluster}"), [lo, q1, med, q3, hi]));
    }
    let svg = svg_box_plot("adaptation CER reduction by method and lines", &groups);
    fs::write(out, svg).map_err(|e| Error::io(out, e))
}
