//! The training loop: schedule-driven Adam over the recognizer parameters
//! with per-writer mean gradients for the embedding table.

pub mod schedule;

pub use schedule::{
    normal_recipe, pretrained_recipe, Phase, PhasePlan, Trainable, WarmupEvent, PAPER_WARMUP_LEN,
};

use crate::charset::fnv1a64;
use crate::dataset::{augment, AugmentationConfig, Corpus};
use crate::error::{Error, Result};
use crate::nn::optim::{Adam, AdamParams};
use crate::recognizer::{
    ctc_loss_grad, greedy_decode, image_to_input, save_checkpoint, CorpusCer, Recognizer,
};
use crate::wsb::{normalize_embedding_gradients, EmbeddingAdam, EmbeddingTable};
use ndarray::Array1;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::PathBuf;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub adam: AdamParams,
    pub seed: u64,
    /// Evaluate CER on the eval split every this many iterations (0 = never).
    pub eval_every: usize,
    /// Checkpoint every this fraction of the plan; phase boundaries always
    /// checkpoint as well.
    pub checkpoint_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            batch_size: 32,
            adam: AdamParams::default(),
            seed: 0,
            eval_every: 0,
            checkpoint_fraction: 0.1,
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone)]
pub struct LogEntry {
    pub iter: usize,
    pub lr: f32,
    pub loss: f64,
    pub eval_cer: Option<f64>,
}

pub struct TrainReport {
    pub iterations: usize,
    pub entries: Vec<LogEntry>,
    pub final_loss: f64,
}

struct SampleResult {
    loss: f64,
    grads: crate::nn::GradStore,
    de: Option<Array1<f32>>,
    wsi: usize,
}

/// Runs a phase plan to completion. Conditioned networks require `table`;
/// embedding rows receive the per-writer mean of their samples' gradients
/// each step, so rows absent from a batch are untouched. Deterministic for a
/// fixed seed.
#[allow(clippy::too_many_arguments)]
pub fn train(
    net: &mut Recognizer,
    mut table: Option<&mut EmbeddingTable>,
    corpus: &Corpus,
    train_ids: &[usize],
    plan: &PhasePlan,
    augmentation: &AugmentationConfig,
    settings: &TrainSettings,
    eval_ids: Option<&[usize]>,
    out_dir: Option<&PathBuf>,
) -> Result<TrainReport> {
    plan.validate()?;
    augmentation.validate()?;
    if train_ids.is_empty() {
        return Err(Error::Invalid("empty training set".into()));
    }
    if net.mode.is_conditioned() {
        match &table {
            None => return Err(Error::Config("conditioned training needs a table".into())),
            Some(t) => {
                if t.ed() != net.ed {
                    return Err(Error::ArtifactMismatch(format!(
                        "table ed {} vs network ed {}",
                        t.ed(),
                        net.ed
                    )));
                }
            }
        }
    }

    let total = plan.total_iterations();
    let mut adam = Adam::new(&net.store, settings.adam);
    let mut emb_adam = table.as_ref().map(|t| EmbeddingAdam::new(t, settings.adam));
    let blank = net.charset.blank();

    let ckpt_every = ((total as f64 * settings.checkpoint_fraction).ceil() as usize).max(1);
    let mut phase_boundaries = Vec::new();
    {
        let mut acc = 0;
        for p in &plan.phases {
            acc += p.iterations;
            phase_boundaries.push(acc);
        }
    }

    let mut entries = Vec::new();
    let mut recent: Vec<f64> = Vec::new();
    let mut final_loss = f64::NAN;

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut log_file = match out_dir {
        Some(dir) => {
            let p = dir.join("train_log.tsv");
            Some(fs::File::create(&p).map_err(|e| Error::io(&p, e))?)
        }
        None => None,
    };

    for iter in 0..total {
        let phase = plan.phase_at(iter).expect("iteration within plan");
        let lr = plan.lr_at(iter);

        let mut batch_rng =
            ChaCha8Rng::seed_from_u64(fnv1a64(&[settings.seed.to_le_bytes(), (iter as u64).to_le_bytes()].concat()));
        let batch: Vec<usize> = (0..settings.batch_size)
            .map(|_| train_ids[batch_rng.random_range(0..train_ids.len())])
            .collect();

        // Per-sample forward/backward, data-parallel, order-stable reduce.
        let table_ref: Option<&EmbeddingTable> = table.as_deref();
        let results: Result<Vec<SampleResult>> = batch
            .par_iter()
            .enumerate()
            .map(|(slot, &id)| {
                let r = &corpus.records[id];
                let mut aug_rng = ChaCha8Rng::seed_from_u64(fnv1a64(
                    &[
                        settings.seed.to_le_bytes(),
                        (iter as u64).to_le_bytes(),
                        (slot as u64 ^ 0xa0a0).to_le_bytes(),
                    ]
                    .concat(),
                ));
                let img = augment(&corpus.images[id], augmentation, &mut aug_rng);
                let input = image_to_input(&img);
                let e_row = match table_ref {
                    Some(t) if net.mode.is_conditioned() => Some(t.lookup(r.wsi)?.to_owned()),
                    _ => None,
                };
                let e_view = e_row.as_ref().map(|v| v.view());
                let (logits, tape) = net.forward(&input, e_view.as_ref())?;
                let labels = net.charset.encode(&r.transcript)?;
                let (loss, dlogits) = ctc_loss_grad(&logits, &labels, blank)?;
                let mut grads = net.store.zero_grads();
                let de = net.backward(&tape, &dlogits, &mut grads);
                Ok(SampleResult {
                    loss,
                    grads,
                    de,
                    wsi: r.wsi,
                })
            })
            .collect();
        let results = results?;

        let batch_loss: f64 =
            results.iter().map(|r| r.loss).sum::<f64>() / settings.batch_size as f64;
        if !batch_loss.is_finite() {
            if let Some(dir) = out_dir {
                let dump = dir.join("divergence_dump.txt");
                let mut text = format!("iter\t{iter}\nlr\t{lr}\nloss\t{batch_loss}\n");
                text.push_str("recent_losses\t");
                for l in recent.iter().rev().take(50) {
                    text.push_str(&format!("{l:.5} "));
                }
                text.push('\n');
                let _ = fs::write(&dump, text);
            }
            return Err(Error::Diverged {
                iter,
                detail: format!("batch loss {batch_loss}"),
            });
        }

        // Order-stable gradient reduction, then batch mean.
        let mut grads = net.store.zero_grads();
        for r in &results {
            grads.add_assign(&r.grads);
        }
        grads.scale(1.0 / settings.batch_size as f32);

        if phase.trainable.updates_network() {
            adam.step(&mut net.store, &grads, lr, |_| true);
        }
        if net.mode.is_conditioned() && phase.trainable.updates_embeddings() {
            let wsi_list: Vec<usize> = results.iter().map(|r| r.wsi).collect();
            let de_list: Vec<Array1<f32>> = results
                .iter()
                .map(|r| r.de.clone().expect("conditioned net yields de"))
                .collect();
            let writer_grads = normalize_embedding_gradients(&wsi_list, &de_list);
            if let (Some(t), Some(opt)) = (table.as_deref_mut(), emb_adam.as_mut()) {
                opt.step(t, &writer_grads, lr);
            }
        }

        recent.push(batch_loss);
        if recent.len() > 64 {
            recent.remove(0);
        }
        final_loss = batch_loss;

        let eval_cer = if settings.eval_every > 0
            && eval_ids.is_some()
            && (iter + 1) % settings.eval_every == 0
        {
            let ids = eval_ids.unwrap();
            Some(evaluate_cer(net, table.as_deref(), corpus, ids, None)?.cer())
        } else {
            None
        };

        let entry = LogEntry {
            iter,
            lr,
            loss: batch_loss,
            eval_cer,
        };
        if let Some(f) = log_file.as_mut() {
            let cer_s = entry
                .eval_cer
                .map(|c| format!("{c:.6}"))
                .unwrap_or_default();
            writeln!(f, "{}\t{:.8}\t{:.6}\t{}", entry.iter, entry.lr, entry.loss, cer_s)
                .map_err(|e| Error::io("train_log.tsv", e))?;
        }
        entries.push(entry);

        if let Some(dir) = out_dir {
            let at_boundary = phase_boundaries.contains(&(iter + 1));
            if (iter + 1) % ckpt_every == 0 || at_boundary || iter + 1 == total {
                save_checkpoint(&dir.join(format!("ckpt_{:07}.wsck", iter + 1)), net, 0, (iter + 1) as u64)?;
                if let Some(t) = table.as_deref() {
                    t.save(&dir.join(format!("emb_{:07}.wsem", iter + 1)), net.charset.hash())?;
                }
            }
        }
    }

    Ok(TrainReport {
        iterations: total,
        entries,
        final_loss,
    })
}

/// Corpus CER of a model over the given sample ids. `wsi_override` substitutes
/// the writer identity per position (used by the shuffle sensitivity check).
pub fn evaluate_cer(
    net: &Recognizer,
    table: Option<&EmbeddingTable>,
    corpus: &Corpus,
    ids: &[usize],
    wsi_override: Option<&[usize]>,
) -> Result<CorpusCer> {
    if let Some(o) = wsi_override {
        assert_eq!(o.len(), ids.len());
    }
    let parts: Result<Vec<CorpusCer>> = ids
        .par_iter()
        .enumerate()
        .map(|(i, &id)| {
            let r = &corpus.records[id];
            let wsi = wsi_override.map(|o| o[i]).unwrap_or(r.wsi);
            let input = image_to_input(&corpus.images[id]);
            let e_row = match table {
                Some(t) if net.mode.is_conditioned() => Some(t.lookup(wsi)?.to_owned()),
                _ => None,
            };
            let e_view = e_row.as_ref().map(|v| v.view());
            let logits = net.forward_logits(&input, e_view.as_ref())?;
            let hyp = net.charset.decode(&greedy_decode(&logits, net.charset.blank()));
            let mut c = CorpusCer::new();
            c.add(&hyp, &r.transcript);
            Ok(c)
        })
        .collect();
    let mut total = CorpusCer::new();
    for p in parts? {
        total.merge(&p);
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::charset::Charset;
    use crate::dataset::{CorpusSpec, LinesDist, TextSpec};
    use crate::recognizer::{ConditioningMode, NetConfig};
    use crate::wsb::InitSpec;

    fn micro_corpus(seed: u64) -> Corpus {
        let spec = CorpusSpec {
            n_writers: 2,
            lines_per_writer: LinesDist::Fixed { lines: 12 },
            text: TextSpec {
                len_min: 2,
                len_max: 3,
                pair_char_weight: 1.0,
                space_prob: 0.0,
            },
            height: 16,
            charset: "abc".into(),
        };
        Corpus::generate(&spec, seed).unwrap()
    }

    fn micro_cfg() -> NetConfig {
        NetConfig {
            conv_channels: vec![2, 3, 3, 4],
            conv_layers_per_block: 1,
            height: 16,
            rnn_hidden: 4,
            rnn_layers_per_branch: 1,
            final_rnn_layers: 1,
            head_kernel: 3,
        }
    }

    fn micro_plan(iters: usize) -> PhasePlan {
        PhasePlan {
            phases: vec![Phase {
                iterations: iters,
                trainable: Trainable::All,
                events: vec![WarmupEvent {
                    start: 0,
                    peak_lr: 2e-3,
                    warmup_len: 5,
                }],
            }],
        }
    }

    #[test]
    fn same_seed_identical_loss_curves() {
        let corpus = micro_corpus(1);
        let ids: Vec<usize> = (0..corpus.len()).collect();
        let settings = TrainSettings {
            batch_size: 4,
            seed: 7,
            ..Default::default()
        };
        let run = || {
            let mut net = Recognizer::build(
                micro_cfg(),
                ConditioningMode::Baseline,
                0,
                Charset::from_str_chars("abc").unwrap(),
                3,
                InitSpec::default(),
            )
            .unwrap();
            train(
                &mut net,
                None,
                &corpus,
                &ids,
                &micro_plan(8),
                &AugmentationConfig::none(),
                &settings,
                None,
                None,
            )
            .unwrap()
            .entries
            .iter()
            .map(|e| e.loss)
            .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn loss_decreases_on_tiny_overfit() {
        let corpus = micro_corpus(2);
        let ids: Vec<usize> = (0..corpus.len()).collect();
        let mut net = Recognizer::build(
            micro_cfg(),
            ConditioningMode::Baseline,
            0,
            Charset::from_str_chars("abc").unwrap(),
            3,
            InitSpec::default(),
        )
        .unwrap();
        let report = train(
            &mut net,
            None,
            &corpus,
            &ids,
            &micro_plan(60),
            &AugmentationConfig::none(),
            &TrainSettings {
                batch_size: 6,
                seed: 1,
                ..Default::default()
            },
            None,
            None,
        )
        .unwrap();
        let first: f64 = report.entries[..5].iter().map(|e| e.loss).sum::<f64>() / 5.0;
        let last: f64 = report.entries[report.entries.len() - 5..]
            .iter()
            .map(|e| e.loss)
            .sum::<f64>()
            / 5.0;
        assert!(
            last < first * 0.8,
            "loss did not decrease: first {first}, last {last}"
        );
    }

    #[test]
    fn absent_writer_row_is_bit_identical_after_steps() {
        let corpus = micro_corpus(3);
        // train only on writer 0's lines
        let ids: Vec<usize> = corpus.lines_of_writer(0);
        let mut net = Recognizer::build(
            micro_cfg(),
            ConditioningMode::SingleAdain,
            4,
            Charset::from_str_chars("abc").unwrap(),
            3,
            InitSpec::default(),
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut table = EmbeddingTable::init_normal(2, 4, &mut rng);
        let row1_before: Vec<f32> = table.lookup(1).unwrap().to_vec();
        train(
            &mut net,
            Some(&mut table),
            &corpus,
            &ids,
            &micro_plan(6),
            &AugmentationConfig::none(),
            &TrainSettings {
                batch_size: 3,
                seed: 2,
                ..Default::default()
            },
            None,
            None,
        )
        .unwrap();
        let row1_after: Vec<f32> = table.lookup(1).unwrap().to_vec();
        assert_eq!(row1_before, row1_after);
        let row0: Vec<f32> = table.lookup(0).unwrap().to_vec();
        assert_ne!(row0, row1_after);
    }

    #[test]
    fn phase_masks_freeze_the_right_parameters() {
        let corpus = micro_corpus(4);
        let ids: Vec<usize> = (0..corpus.len()).collect();
        let mk_net = || {
            Recognizer::build(
                micro_cfg(),
                ConditioningMode::SingleAdain,
                4,
                Charset::from_str_chars("abc").unwrap(),
                3,
                InitSpec::default(),
            )
            .unwrap()
        };
        let mk_table = || {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            EmbeddingTable::init_normal(2, 4, &mut rng)
        };
        let plan_frozen_emb = PhasePlan {
            phases: vec![Phase {
                iterations: 4,
                trainable: Trainable::AllExceptEmbeddings,
                events: vec![WarmupEvent {
                    start: 0,
                    peak_lr: 1e-3,
                    warmup_len: 2,
                }],
            }],
        };
        let mut net = mk_net();
        let mut table = mk_table();
        let rows_before = table.rows().clone();
        let params_before: Vec<f32> = net.store.get(crate::nn::ParamId(0)).iter().copied().collect();
        train(
            &mut net,
            Some(&mut table),
            &corpus,
            &ids,
            &plan_frozen_emb,
            &AugmentationConfig::none(),
            &TrainSettings {
                batch_size: 4,
                seed: 3,
                ..Default::default()
            },
            None,
            None,
        )
        .unwrap();
        assert_eq!(table.rows(), &rows_before, "embeddings must be frozen");
        let params_after: Vec<f32> = net.store.get(crate::nn::ParamId(0)).iter().copied().collect();
        assert_ne!(params_before, params_after, "network params must move");

        let plan_emb_only = PhasePlan {
            phases: vec![Phase {
                iterations: 4,
                trainable: Trainable::EmbeddingsOnly,
                events: vec![WarmupEvent {
                    start: 0,
                    peak_lr: 1e-2,
                    warmup_len: 2,
                }],
            }],
        };
        let mut net2 = mk_net();
        let mut table2 = mk_table();
        let rows_before2 = table2.rows().clone();
        let net_params_before: Vec<Vec<f32>> = net2
            .store
            .iter()
            .map(|(_, _, p)| p.iter().copied().collect())
            .collect();
        train(
            &mut net2,
            Some(&mut table2),
            &corpus,
            &ids,
            &plan_emb_only,
            &AugmentationConfig::none(),
            &TrainSettings {
                batch_size: 4,
                seed: 3,
                ..Default::default()
            },
            None,
            None,
        )
        .unwrap();
        let net_params_after: Vec<Vec<f32>> = net2
            .store
            .iter()
            .map(|(_, _, p)| p.iter().copied().collect())
            .collect();
        assert_eq!(
            net_params_before, net_params_after,
            "network params must be bit-identical in embeddings-only phase"
        );
        assert_ne!(table2.rows(), &rows_before2, "embeddings must move");
    }
}
