//! End-to-end pipeline at micro scale: generate, pre-train, extract, train,
//! evaluate, adapt and report, all through the command layer and the on-disk
//! artifact formats.

use std::fs;
use std::path::PathBuf;
use wsnet::adaptation::{AdaptMethod, FinetuneOptions, LbfgsOptions, OptimizeOptions, SuiteConfig};
use wsnet::charset::fnv1a64;
use wsnet::config::{
    EncoderArch, EncoderSection, ExperimentConfig, ExperimentMeta, NetSection, PartitionConfig,
    RecipeKind, TrainSection,
};
use wsnet::dataset::{AugmentationConfig, CorpusSpec, LinesDist, TextSpec};
use wsnet::error::Error;
use wsnet::experiment::{self, Paths};
use wsnet::recognizer::{ConditioningMode, NetConfig};
use wsnet::style_encoder::EncoderTrainConfig;
use wsnet::training::TrainSettings;
use wsnet::wsb::{EmbeddingInit, EmbeddingTable, InitBound};

fn micro_config(out: PathBuf) -> ExperimentConfig {
    let charset = "abdelnoz 012".to_string();
    ExperimentConfig {
        experiment: ExperimentMeta {
            name: "micro".into(),
            output_dir: out,
            seed: 7,
        },
        corpus: CorpusSpec {
            n_writers: 6,
            lines_per_writer: LinesDist::Fixed { lines: 40 },
            text: TextSpec {
                len_min: 2,
                len_max: 4,
                pair_char_weight: 2.0,
                space_prob: 0.0,
            },
            height: 16,
            charset: charset.clone(),
        },
        partition: PartitionConfig {
            tst_global_fraction: 0.05,
        },
        augment: AugmentationConfig {
            patch_mask: wsnet::dataset::PatchMask {
                enabled: true,
                max_patches: 1,
            },
            ..AugmentationConfig::none()
        },
        net: NetSection {
            mode: ConditioningMode::SingleAdain,
            ed: 16,
            embedding_init: EmbeddingInit::Pretrained,
            tau: 0.174,
            init_bound: InitBound::InvSqrtEd,
            architecture: NetConfig {
                conv_channels: vec![3, 4, 6, 8],
                conv_layers_per_block: 1,
                height: 16,
                rnn_hidden: 6,
                rnn_layers_per_branch: 1,
                final_rnn_layers: 1,
                head_kernel: 3,
            },
        },
        encoder: EncoderSection {
            extract_k: 8,
            architecture: EncoderArch {
                conv_channels: vec![4, 8, 8, 16],
                attention_blocks: 1,
                attention_heads: 4,
                ff_mult: 2,
            },
            train: EncoderTrainConfig {
                iterations: 20,
                batch_size: 12,
                writers_per_batch: 4,
                lr: 1e-3,
                weight_decay: 0.0,
                tau: 0.15,
                aug_strength: 0.5,
                seed: 0,
            },
        },
        training: TrainSection {
            recipe: RecipeKind::Pretrained,
            scale: 8e-5, // ~54 iterations over the three phases
            settings: TrainSettings {
                batch_size: 6,
                eval_every: 0,
                ..Default::default()
            },
        },
        adaptation: SuiteConfig {
            runs_per_writer: 1,
            cluster_sizes: vec![4, 8],
            test_lines: 10,
            methods: vec![AdaptMethod::Select, AdaptMethod::Optimize],
            k_clusters: 3,
            extract_k: 4,
            optimize: OptimizeOptions {
                lbfgs: LbfgsOptions {
                    iterations: 2,
                    ..Default::default()
                },
                seed: 0,
            },
            finetune: FinetuneOptions {
                grid: vec![0, 3],
                folds: 2,
                lr: 1e-3,
                batch_size: 4,
                seed: 0,
            },
            seed: 0,
        },
        adaptation_corpus: CorpusSpec {
            n_writers: 2,
            lines_per_writer: LinesDist::Fixed { lines: 30 },
            text: TextSpec {
                len_min: 2,
                len_max: 4,
                pair_char_weight: 2.0,
                space_prob: 0.0,
            },
            height: 16,
            charset,
        },
    }
}

#[test]
fn full_pipeline_micro() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path().join("run"));
    cfg.validate().unwrap();
    let paths = Paths::new(&cfg);

    // generate is idempotent: byte-identical manifests on re-run
    experiment::cmd_generate(&cfg, &[]).unwrap();
    let manifest1 = fs::read(paths.data_dir().join("manifest.tsv")).unwrap();
    assert!(paths.partition_file().exists());
    assert!(paths.adapt_data_dir().join("manifest.tsv").exists());
    experiment::cmd_generate(&cfg, &[]).unwrap();
    let manifest2 = fs::read(paths.data_dir().join("manifest.tsv")).unwrap();
    assert_eq!(fnv1a64(&manifest1), fnv1a64(&manifest2));

    experiment::cmd_train_encoder(&cfg, &[]).unwrap();
    assert!(paths.encoder_file().exists());

    experiment::cmd_extract_embeddings(&cfg, &[]).unwrap();
    let (table, hash) = EmbeddingTable::load(&paths.embeddings_file()).unwrap();
    assert_eq!(table.n_writers(), 6);
    assert_eq!(table.ed(), 16);
    assert_eq!(
        hash,
        wsnet::charset::Charset::from_str_chars(&cfg.corpus.charset)
            .unwrap()
            .hash()
    );
    // extracted rows are unit norm (encoder output property)
    for row in table.rows().rows() {
        let n: f64 = row.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
        assert!((n - 1.0).abs() < 1e-5, "row norm {n}");
    }
    assert!(paths.embeddings_meta_file().exists());

    // train the conditioned setup, then a baseline variant of the same config
    experiment::cmd_train(&cfg, &[]).unwrap();
    assert!(paths.final_checkpoint(&cfg.run_name()).exists());
    assert!(paths.final_table(&cfg.run_name()).exists());

    let mut base_cfg = cfg.clone();
    base_cfg.net.mode = ConditioningMode::Baseline;
    base_cfg.training.recipe = RecipeKind::Normal;
    experiment::cmd_train(&base_cfg, &[]).unwrap();
    assert!(paths.final_checkpoint(&base_cfg.run_name()).exists());

    // evaluate both; reports land under eval/
    let report = experiment::cmd_evaluate(&cfg, None, &[]).unwrap();
    assert!(report.cer_of("TST").is_some());
    let base_report = experiment::cmd_evaluate(&base_cfg, None, &[]).unwrap();
    assert!(base_report.cer_of("TST").is_some());
    assert!(paths
        .eval_dir()
        .join(format!("{}.summary.tsv", cfg.run_name()))
        .exists());

    // adaptation with a methods/clusters subset
    experiment::cmd_adapt(
        &cfg,
        None,
        Some(vec![AdaptMethod::Select]),
        Some(vec![4]),
        &[],
    )
    .unwrap();
    let report_path = paths
        .adapt_dir()
        .join(format!("{}.report.tsv", cfg.run_name()));
    let rows = wsnet::report::load_adaptation_report(&report_path).unwrap();
    // 2 writers x 1 run x 1 method x 1 cluster
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.cluster_size == 4));

    // aggregate report: csv + svg, and figures are functions of the CSVs
    let report_out = dir.path().join("report");
    experiment::cmd_report(&[paths.root.clone()], &report_out).unwrap();
    for f in [
        "ed_sweep.csv",
        "clusters.csv",
        "adaptation_summary.csv",
        "ed_sweep.svg",
        "clusters.svg",
        "adaptation_box.svg",
    ] {
        assert!(report_out.join(f).exists(), "missing {f}");
    }
    let svg1 = fs::read(report_out.join("ed_sweep.svg")).unwrap();
    experiment::cmd_report(&[paths.root.clone()], &report_out).unwrap();
    let svg2 = fs::read(report_out.join("ed_sweep.svg")).unwrap();
    assert_eq!(svg1, svg2, "figure regeneration must be identical");

    // run manifest recorded every command with the config hash
    let manifest = fs::read_to_string(paths.run_manifest()).unwrap();
    for cmd in ["generate", "train-encoder", "extract-embeddings", "train", "evaluate", "adapt"] {
        assert!(
            manifest.contains(&format!("\"command\":\"{cmd}\"")),
            "run manifest missing {cmd}"
        );
    }
    assert!(manifest.contains(&format!("{:016x}", cfg.hash())));
}

#[test]
fn artifact_mismatch_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = micro_config(dir.path().join("run"));
    experiment::cmd_generate(&cfg, &[]).unwrap();
    experiment::cmd_train_encoder(&cfg, &[]).unwrap();
    experiment::cmd_extract_embeddings(&cfg, &[]).unwrap();
    experiment::cmd_train(&cfg, &[]).unwrap();

    // a different ed changes the table contract: training must refuse
    let mut other = cfg.clone();
    other.net.ed = 32;
    let err = experiment::cmd_train(&other, &[]).unwrap_err();
    assert!(
        matches!(err, Error::ArtifactMismatch(_)),
        "expected artifact mismatch, got {err:?}"
    );

    // a modified config hash makes evaluation refuse the old checkpoint
    let mut tweaked = cfg.clone();
    tweaked.experiment.seed = 8;
    let err = experiment::cmd_evaluate(&tweaked, None, &[]).unwrap_err();
    assert!(
        matches!(err, Error::ArtifactMismatch(_) | Error::Io { .. }),
        "expected mismatch or missing artifact, got {err:?}"
    );
}

#[test]
fn training_is_deterministic_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_a = micro_config(dir.path().join("a"));
    let cfg_b = {
        let mut c = micro_config(dir.path().join("b"));
        c.experiment.output_dir = dir.path().join("b");
        c
    };
    for cfg in [&cfg_a, &cfg_b] {
        experiment::cmd_generate(cfg, &[]).unwrap();
        experiment::cmd_train_encoder(cfg, &[]).unwrap();
        experiment::cmd_extract_embeddings(cfg, &[]).unwrap();
    }
    // identical seeds and configs give byte-identical embedding tables
    let pa = Paths::new(&cfg_a).embeddings_file();
    let pb = Paths::new(&cfg_b).embeddings_file();
    assert_eq!(fs::read(pa).unwrap(), fs::read(pb).unwrap());
}
