//! Adapting to unseen writers: embedding selection from the learned space,
//! LBFGS embedding optimization against frozen network parameters, the
//! finetuning baseline with cross-validated iteration counts, nested
//! adaptation runs and the identity-shuffle sensitivity check.

pub mod kmeans;
pub mod lbfgs;

pub use kmeans::{kmeans, KMeansResult};
pub use lbfgs::{lbfgs, LbfgsOptions, LbfgsOutcome};

use crate::charset::fnv1a64;
use crate::dataset::{augment, AugmentationConfig, Corpus};
use crate::error::{Error, Result};
use crate::recognizer::{
    ctc_loss_grad, greedy_decode, image_to_input, ConditioningMode, CorpusCer, Recognizer,
};
use crate::style_encoder::{extract_writer_embedding, StyleEncoder};
use crate::training::{evaluate_cer, train, Phase, PhasePlan, Trainable, TrainSettings, WarmupEvent};
use crate::wsb::EmbeddingTable;
use ndarray::{Array1, Array2, Array3};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdaptMethod {
    /// Pick the best existing embedding, searched through k-means medoids.
    Select,
    /// LBFGS on a fresh embedding from the table mean.
    Optimize,
    /// Finetune the unconditioned baseline on the adaptation lines.
    Finetune,
    /// Unsupervised: encode the adaptation lines with the style encoder.
    Encode,
}

impl AdaptMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            AdaptMethod::Select => "select",
            AdaptMethod::Optimize => "optimize",
            AdaptMethod::Finetune => "finetune",
            AdaptMethod::Encode => "encode",
        }
    }
}

/// Relative CER change of the adapted system against the baseline:
/// (A - B) / B. Negative means improvement.
pub fn cer_reduction(adapted: f64, baseline: f64) -> Result<f64> {
    if baseline == 0.0 {
        return Err(Error::ZeroBaselineCer);
    }
    Ok((adapted - baseline) / baseline)
}

/// One adaptation run: nested adaptation-line clusters plus disjoint
/// held-out test lines for one unseen writer.
#[derive(Debug, Clone)]
pub struct AdaptationRun {
    pub writer: usize,
    pub run: usize,
    /// Nested prefixes: clusters[i] is a strict subset of clusters[i+1].
    pub clusters: Vec<Vec<usize>>,
    pub test_lines: Vec<usize>,
}

pub fn make_adaptation_run(
    corpus: &Corpus,
    writer: usize,
    run: usize,
    cluster_sizes: &[usize],
    test_lines: usize,
    seed: u64,
) -> Result<AdaptationRun> {
    let max_cluster = cluster_sizes.iter().copied().max().unwrap_or(0);
    let mut lines = corpus.lines_of_writer(writer);
    if lines.len() < max_cluster + test_lines {
        return Err(Error::Invalid(format!(
            "writer {writer} has {} lines, needs {}",
            lines.len(),
            max_cluster + test_lines
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(
        &[
            seed.to_le_bytes(),
            (writer as u64).to_le_bytes(),
            (run as u64 ^ 0x52).to_le_bytes(),
        ]
        .concat(),
    ));
    lines.shuffle(&mut rng);
    let test: Vec<usize> = lines[..test_lines].to_vec();
    let pool: Vec<usize> = lines[test_lines..test_lines + max_cluster].to_vec();
    let clusters = cluster_sizes.iter().map(|&s| pool[..s].to_vec()).collect();
    Ok(AdaptationRun {
        writer,
        run,
        clusters,
        test_lines: test,
    })
}

/// Line images prepared for repeated embedding evaluations. When the network
/// keeps its conv trunk unconditioned (everything but the all-conditioned
/// mode), trunk activations are computed once and reused across embeddings.
pub struct PreparedLines {
    inputs: Vec<Array2<f32>>,
    labels: Vec<Vec<usize>>,
    transcripts: Vec<String>,
    trunks: Option<Vec<Array3<f32>>>,
}

impl PreparedLines {
    pub fn new(net: &Recognizer, corpus: &Corpus, ids: &[usize]) -> Result<Self> {
        let images: Vec<image::GrayImage> = ids.iter().map(|&id| corpus.images[id].clone()).collect();
        Self::from_images(net, corpus, ids, images)
    }

    /// Fixed pre-augmented variant (deterministic objective for LBFGS).
    pub fn new_augmented(
        net: &Recognizer,
        corpus: &Corpus,
        ids: &[usize],
        cfg: &AugmentationConfig,
        seed: u64,
    ) -> Result<Self> {
        let images: Vec<image::GrayImage> = ids
            .iter()
            .enumerate()
            .map(|(i, &id)| {
                let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(
                    &[seed.to_le_bytes(), (i as u64).to_le_bytes()].concat(),
                ));
                augment(&corpus.images[id], cfg, &mut rng)
            })
            .collect();
        Self::from_images(net, corpus, ids, images)
    }

    fn from_images(
        net: &Recognizer,
        corpus: &Corpus,
        ids: &[usize],
        images: Vec<image::GrayImage>,
    ) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyAdaptationSet);
        }
        let inputs: Vec<Array2<f32>> = images.iter().map(image_to_input).collect();
        let labels: Result<Vec<Vec<usize>>> = ids
            .iter()
            .map(|&id| net.charset.encode(&corpus.records[id].transcript))
            .collect();
        let transcripts: Vec<String> = ids
            .iter()
            .map(|&id| corpus.records[id].transcript.clone())
            .collect();
        let trunks = if net.mode != ConditioningMode::AllAdain {
            let t: Result<Vec<Array3<f32>>> = inputs
                .par_iter()
                .map(|x| net.trunk_forward(x, None).map(|(f, _)| f))
                .collect();
            Some(t?)
        } else {
            None
        };
        Ok(PreparedLines {
            inputs,
            labels: labels?,
            transcripts,
            trunks,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Corpus CER of a conditioned net over prepared lines with one embedding.
pub fn cer_with_embedding(net: &Recognizer, lines: &PreparedLines, e: &Array1<f32>) -> Result<f64> {
    let blank = net.charset.blank();
    let parts: Result<Vec<CorpusCer>> = (0..lines.len())
        .into_par_iter()
        .map(|i| {
            let logits = match &lines.trunks {
                Some(t) => net.upper_forward(&t[i], Some(&e.view()))?.0,
                None => net.forward_logits(&lines.inputs[i], Some(&e.view()))?,
            };
            let hyp = net.charset.decode(&greedy_decode(&logits, blank));
            let mut c = CorpusCer::new();
            c.add(&hyp, &lines.transcripts[i]);
            Ok(c)
        })
        .collect();
    let mut total = CorpusCer::new();
    for p in parts? {
        total.merge(&p);
    }
    Ok(total.cer())
}

/// Mean CTC loss over prepared lines plus its gradient w.r.t. the embedding.
pub fn loss_grad_with_embedding(
    net: &Recognizer,
    lines: &PreparedLines,
    e: &Array1<f32>,
) -> Result<(f64, Array1<f32>)> {
    let blank = net.charset.blank();
    let n = lines.len();
    let parts: Result<Vec<(f64, Array1<f32>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut scratch = net.store.zero_grads();
            match &lines.trunks {
                Some(t) => {
                    let (logits, tape) = net.upper_forward(&t[i], Some(&e.view()))?;
                    let (loss, dlogits) = ctc_loss_grad(&logits, &lines.labels[i], blank)?;
                    let (_, de) = net.upper_backward(&tape, &dlogits, &mut scratch);
                    Ok((loss, de.expect("conditioned upper yields de")))
                }
                None => {
                    let (logits, tape) = net.forward(&lines.inputs[i], Some(&e.view()))?;
                    let (loss, dlogits) = ctc_loss_grad(&logits, &lines.labels[i], blank)?;
                    let de = net.backward(&tape, &dlogits, &mut scratch);
                    Ok((loss, de.expect("conditioned net yields de")))
                }
            }
        })
        .collect();
    let mut loss = 0.0f64;
    let mut grad = Array1::<f32>::zeros(e.len());
    for (l, de) in parts? {
        loss += l / n as f64;
        grad.zip_mut_with(&de, |a, &b| *a += b / n as f32);
    }
    Ok((loss, grad))
}

pub struct SelectOutcome {
    pub embedding: Array1<f32>,
    pub cer: f64,
    /// Row index of the chosen candidate in the table.
    pub candidate_row: usize,
    /// All evaluated (row, cer) pairs in candidate order.
    pub evaluated: Vec<(usize, f64)>,
}

/// k-means the table rows, evaluate one random member per cluster on the
/// adaptation lines by CER (no augmentation), return the argmin candidate.
pub fn select_embedding(
    net: &Recognizer,
    table: &EmbeddingTable,
    corpus: &Corpus,
    adaptation_ids: &[usize],
    k_clusters: usize,
    seed: u64,
) -> Result<SelectOutcome> {
    if adaptation_ids.is_empty() {
        return Err(Error::EmptyAdaptationSet);
    }
    let lines = PreparedLines::new(net, corpus, adaptation_ids)?;
    let k = k_clusters.clamp(1, table.n_writers());
    let km = kmeans(table.rows(), k, 10, 100, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5e1ec7);
    let mut candidates = Vec::new();
    for c in 0..km.centroids.nrows() {
        let members: Vec<usize> = km
            .assignment
            .iter()
            .enumerate()
            .filter(|(_, &a)| a == c)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            continue;
        }
        candidates.push(members[rng.random_range(0..members.len())]);
    }
    let mut evaluated = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    for &row in &candidates {
        let e = table.lookup(row)?.to_owned();
        let cer = cer_with_embedding(net, &lines, &e)?;
        evaluated.push((row, cer));
        if best.map(|(_, b)| cer < b).unwrap_or(true) {
            best = Some((row, cer));
        }
    }
    let (row, cer) = best.expect("at least one candidate");
    Ok(SelectOutcome {
        embedding: table.lookup(row)?.to_owned(),
        cer,
        candidate_row: row,
        evaluated,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeOptions {
    pub lbfgs: LbfgsOptions,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        OptimizeOptions {
            lbfgs: LbfgsOptions::default(),
            seed: 0,
        }
    }
}

pub struct OptimizeOutcome {
    pub embedding: Array1<f32>,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub line_search_failed: bool,
}

/// LBFGS over the embedding only, all network parameters frozen. The
/// adaptation images are augmented once up front so the objective stays
/// deterministic. Starts from the table mean.
pub fn optimize_embedding(
    net: &Recognizer,
    table: &EmbeddingTable,
    corpus: &Corpus,
    adaptation_ids: &[usize],
    augmentation: &AugmentationConfig,
    opts: &OptimizeOptions,
) -> Result<OptimizeOutcome> {
    if adaptation_ids.is_empty() {
        return Err(Error::EmptyAdaptationSet);
    }
    let lines = PreparedLines::new_augmented(net, corpus, adaptation_ids, augmentation, opts.seed)?;
    let init = table.mean_row();
    let x0: Vec<f64> = init.iter().map(|&v| v as f64).collect();

    let mut eval_error: Option<Error> = None;
    let outcome = lbfgs(&x0, &opts.lbfgs, |x, g| {
        let e: Array1<f32> = x.iter().map(|&v| v as f32).collect();
        match loss_grad_with_embedding(net, &lines, &e) {
            Ok((loss, grad)) => {
                for (dst, &src) in g.iter_mut().zip(grad.iter()) {
                    *dst = src as f64;
                }
                loss
            }
            Err(err) => {
                eval_error = Some(err);
                for v in g.iter_mut() {
                    *v = 0.0;
                }
                f64::INFINITY
            }
        }
    });
    if let Some(err) = eval_error {
        return Err(err);
    }
    Ok(OptimizeOutcome {
        embedding: outcome.x.iter().map(|&v| v as f32).collect(),
        initial_loss: outcome.initial_f,
        final_loss: outcome.f,
        line_search_failed: outcome.line_search_failed,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneOptions {
    /// Candidate iteration counts; 0 (the identity option) is always added.
    pub grid: Vec<usize>,
    pub folds: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FinetuneOptions {
    fn default() -> Self {
        FinetuneOptions {
            grid: vec![0, 50, 100, 200, 400, 800],
            folds: 4,
            lr: 1e-4,
            batch_size: 16,
            seed: 0,
        }
    }
}

pub struct FinetuneOutcome {
    pub net: Recognizer,
    pub chosen_iterations: usize,
    /// (candidate, mean validation CER) in grid order.
    pub validation: Vec<(usize, f64)>,
}

fn finetune_plan(iterations: usize, lr: f32) -> PhasePlan {
    PhasePlan {
        phases: vec![Phase {
            iterations,
            trainable: Trainable::All,
            events: vec![WarmupEvent {
                start: 0,
                peak_lr: lr,
                warmup_len: (iterations / 10).max(1),
            }],
        }],
    }
}

/// Estimates the best finetuning iteration count by k-fold cross-validation
/// over the grid (0 included, so the unadapted baseline is always a
/// candidate), then finetunes on all adaptation lines for that count.
pub fn finetune_baseline(
    baseline: &Recognizer,
    corpus: &Corpus,
    adaptation_ids: &[usize],
    augmentation: &AugmentationConfig,
    opts: &FinetuneOptions,
) -> Result<FinetuneOutcome> {
    if opts.folds < 2 {
        return Err(Error::Config("need at least 2 folds".into()));
    }
    if adaptation_ids.len() < opts.folds {
        return Err(Error::Invalid(format!(
            "{} adaptation lines for {} folds",
            adaptation_ids.len(),
            opts.folds
        )));
    }
    let mut grid = opts.grid.clone();
    if !grid.contains(&0) {
        grid.push(0);
    }
    grid.sort_unstable();
    grid.dedup();

    let mut ids = adaptation_ids.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xf01d);
    ids.shuffle(&mut rng);
    let fold_of = |i: usize| i * opts.folds / ids.len();

    let mut validation = Vec::new();
    for &count in &grid {
        let mut cer_sum = 0.0f64;
        for fold in 0..opts.folds {
            let train_ids: Vec<usize> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of(*i) != fold)
                .map(|(_, &id)| id)
                .collect();
            let val_ids: Vec<usize> = ids
                .iter()
                .enumerate()
                .filter(|(i, _)| fold_of(*i) == fold)
                .map(|(_, &id)| id)
                .collect();
            let mut net = baseline.clone();
            if count > 0 {
                train(
                    &mut net,
                    None,
                    corpus,
                    &train_ids,
                    &finetune_plan(count, opts.lr),
                    augmentation,
                    &TrainSettings {
                        batch_size: opts.batch_size.min(train_ids.len()),
                        seed: opts.seed ^ (fold as u64) << 8,
                        ..Default::default()
                    },
                    None,
                    None,
                )?;
            }
            cer_sum += evaluate_cer(&net, None, corpus, &val_ids, None)?.cer();
        }
        validation.push((count, cer_sum / opts.folds as f64));
    }

    let chosen = validation
        .iter()
        .fold(None::<(usize, f64)>, |best, &(c, cer)| match best {
            Some((_, b)) if b <= cer => best,
            _ => Some((c, cer)),
        })
        .expect("grid non-empty")
        .0;

    let mut net = baseline.clone();
    if chosen > 0 {
        train(
            &mut net,
            None,
            corpus,
            adaptation_ids,
            &finetune_plan(chosen, opts.lr),
            augmentation,
            &TrainSettings {
                batch_size: opts.batch_size.min(adaptation_ids.len()),
                seed: opts.seed ^ 0xffff,
                ..Default::default()
            },
            None,
            None,
        )?;
    }
    Ok(FinetuneOutcome {
        net,
        chosen_iterations: chosen,
        validation,
    })
}

#[derive(Debug, Clone)]
pub struct AdaptationResult {
    pub writer: usize,
    pub run: usize,
    pub method: AdaptMethod,
    pub cluster_size: usize,
    pub adapted_cer: f64,
    pub baseline_cer: f64,
    pub reduction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub runs_per_writer: usize,
    pub cluster_sizes: Vec<usize>,
    pub test_lines: usize,
    pub methods: Vec<AdaptMethod>,
    pub k_clusters: usize,
    pub extract_k: usize,
    pub optimize: OptimizeOptions,
    pub finetune: FinetuneOptions,
    pub seed: u64,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        SuiteConfig {
            runs_per_writer: 23,
            cluster_sizes: vec![16, 32, 64, 128, 256],
            test_lines: 256,
            methods: vec![AdaptMethod::Select, AdaptMethod::Optimize, AdaptMethod::Finetune],
            k_clusters: 50,
            extract_k: 32,
            optimize: OptimizeOptions::default(),
            finetune: FinetuneOptions::default(),
            seed: 0,
        }
    }
}

pub struct SuiteReport {
    pub rows: Vec<AdaptationResult>,
    pub skipped_writers: Vec<usize>,
}

/// Full adaptation experiment over every writer of an unseen-writer corpus.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptation_suite(
    baseline: &Recognizer,
    conditioned: &Recognizer,
    table: &EmbeddingTable,
    encoder: Option<&StyleEncoder>,
    corpus: &Corpus,
    augmentation: &AugmentationConfig,
    cfg: &SuiteConfig,
) -> Result<SuiteReport> {
    let max_cluster = cfg.cluster_sizes.iter().copied().max().unwrap_or(0);
    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for writer in 0..corpus.n_writers() {
        let available = corpus.lines_of_writer(writer).len();
        if available < max_cluster + cfg.test_lines {
            log::warn!(
                "writer {writer}: {available} lines < {} needed; skipped",
                max_cluster + cfg.test_lines
            );
            skipped.push(writer);
            continue;
        }
        for run in 0..cfg.runs_per_writer {
            let ar = make_adaptation_run(
                corpus,
                writer,
                run,
                &cfg.cluster_sizes,
                cfg.test_lines,
                cfg.seed,
            )?;
            let baseline_cer = evaluate_cer(baseline, None, corpus, &ar.test_lines, None)?.cer();
            let test_prepared = PreparedLines::new(conditioned, corpus, &ar.test_lines)?;
            for (ci, cluster) in ar.clusters.iter().enumerate() {
                for &method in &cfg.methods {
                    let adapted_cer = match method {
                        AdaptMethod::Select => {
                            let sel = select_embedding(
                                conditioned,
                                table,
                                corpus,
                                cluster,
                                cfg.k_clusters,
                                cfg.seed ^ (writer as u64) << 16 ^ (run as u64),
                            )?;
                            cer_with_embedding(conditioned, &test_prepared, &sel.embedding)?
                        }
                        AdaptMethod::Optimize => {
                            let opts = OptimizeOptions {
                                lbfgs: cfg.optimize.lbfgs,
                                seed: cfg.optimize.seed
                                    ^ fnv1a64(
                                        &[(writer as u64).to_le_bytes(), (run as u64).to_le_bytes()]
                                            .concat(),
                                    ),
                            };
                            let opt = optimize_embedding(
                                conditioned,
                                table,
                                corpus,
                                cluster,
                                augmentation,
                                &opts,
                            )?;
                            cer_with_embedding(conditioned, &test_prepared, &opt.embedding)?
                        }
                        AdaptMethod::Finetune => {
                            let mut fopts = cfg.finetune.clone();
                            fopts.seed ^= fnv1a64(
                                &[(writer as u64).to_le_bytes(), (run as u64).to_le_bytes()]
                                    .concat(),
                            );
                            let ft =
                                finetune_baseline(baseline, corpus, cluster, augmentation, &fopts)?;
                            evaluate_cer(&ft.net, None, corpus, &ar.test_lines, None)?.cer()
                        }
                        AdaptMethod::Encode => {
                            let enc = encoder.ok_or_else(|| {
                                Error::Config("encode method needs a style encoder".into())
                            })?;
                            let mut rng = ChaCha8Rng::seed_from_u64(
                                cfg.seed ^ 0xec0de ^ (writer as u64) << 20 ^ (run as u64),
                            );
                            let e = extract_writer_embedding(
                                enc,
                                corpus,
                                cluster,
                                cfg.extract_k,
                                &mut rng,
                            )?;
                            cer_with_embedding(conditioned, &test_prepared, &e)?
                        }
                    };
                    rows.push(AdaptationResult {
                        writer,
                        run,
                        method,
                        cluster_size: cfg.cluster_sizes[ci],
                        adapted_cer,
                        baseline_cer,
                        reduction: cer_reduction(adapted_cer, baseline_cer)?,
                    });
                }
            }
        }
    }
    Ok(SuiteReport {
        rows,
        skipped_writers: skipped,
    })
}

/// Per-writer mean reduction (over runs), then distribution summaries per
/// method and cluster size.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub method: AdaptMethod,
    pub cluster_size: usize,
    pub writers: usize,
    pub mean: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    }
}

pub fn summarize(rows: &[AdaptationResult]) -> Vec<SummaryRow> {
    use std::collections::BTreeMap;
    // (method, cluster) -> writer -> reductions
    let mut by_key: BTreeMap<(&'static str, usize), BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        by_key
            .entry((r.method.as_str(), r.cluster_size))
            .or_default()
            .entry(r.writer)
            .or_default()
            .push(r.reduction);
    }
    let method_of = |s: &str| match s {
        "select" => AdaptMethod::Select,
        "optimize" => AdaptMethod::Optimize,
        "finetune" => AdaptMethod::Finetune,
        _ => AdaptMethod::Encode,
    };
    by_key
        .into_iter()
        .map(|((m, cluster), writers)| {
            let mut per_writer: Vec<f64> = writers
                .values()
                .map(|rs| rs.iter().sum::<f64>() / rs.len() as f64)
                .collect();
            per_writer.sort_by(|a, b| a.partial_cmp(b).unwrap());
            SummaryRow {
                method: method_of(m),
                cluster_size: cluster,
                writers: per_writer.len(),
                mean: per_writer.iter().sum::<f64>() / per_writer.len() as f64,
                q1: quantile(&per_writer, 0.25),
                median: quantile(&per_writer, 0.5),
                q3: quantile(&per_writer, 0.75),
            }
        })
        .collect()
}

pub struct ShuffleOutcome {
    pub cer_true: f64,
    pub cer_shuffled: f64,
    pub ratio: f64,
}

/// CER with true identities vs a uniform random permutation of the test
/// set's identities.
pub fn shuffle_sensitivity(
    net: &Recognizer,
    table: Option<&EmbeddingTable>,
    corpus: &Corpus,
    test_ids: &[usize],
    rng: &mut impl Rng,
) -> Result<ShuffleOutcome> {
    let mut perm: Vec<usize> = (0..test_ids.len()).collect();
    perm.shuffle(rng);
    shuffle_sensitivity_with_permutation(net, table, corpus, test_ids, &perm)
}

/// As above with an explicit permutation of positions (identity permutation
/// reproduces the true CER exactly).
pub fn shuffle_sensitivity_with_permutation(
    net: &Recognizer,
    table: Option<&EmbeddingTable>,
    corpus: &Corpus,
    test_ids: &[usize],
    perm: &[usize],
) -> Result<ShuffleOutcome> {
    let cer_true = evaluate_cer(net, table, corpus, test_ids, None)?.cer();
    let wsi: Vec<usize> = perm
        .iter()
        .map(|&p| corpus.records[test_ids[p]].wsi)
        .collect();
    let cer_shuffled = evaluate_cer(net, table, corpus, test_ids, Some(&wsi))?.cer();
    Ok(ShuffleOutcome {
        cer_true,
        cer_shuffled,
        ratio: cer_shuffled / cer_true,
    })
}
