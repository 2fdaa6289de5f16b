//! Desk-scale pipeline dry run with timings, used to size the default
//! experiment configuration. Run with:
//! `cargo run --release -p wsnet --example calibrate [stage]`

use std::time::Instant;
use wsnet::adaptation::{
    cer_with_embedding, optimize_embedding, LbfgsOptions, OptimizeOptions, PreparedLines,
};
use wsnet::config::{ExperimentConfig, RecipeKind};
use wsnet::dataset::{partition, Corpus};
use wsnet::recognizer::{ConditioningMode, Recognizer};
use wsnet::style_encoder::{cosine_separation, train_encoder, StyleEncoder};
use wsnet::training::{evaluate_cer, normal_recipe, pretrained_recipe, train};
use wsnet::wsb::{EmbeddingInit, EmbeddingTable};

fn main() {
    let stage = std::env::args().nth(1).unwrap_or_else(|| "all".into());
    let cfg = ExperimentConfig::desk_default();

    let t0 = Instant::now();
    let corpus = Corpus::generate(&cfg.corpus, cfg.stage_seed("corpus")).unwrap();
    let part = partition(
        &corpus.records,
        cfg.partition.tst_global_fraction,
        cfg.stage_seed("partition"),
    )
    .unwrap();
    let adapt_corpus =
        Corpus::generate(&cfg.adaptation_corpus, cfg.stage_seed("adapt_corpus")).unwrap();
    println!(
        "[gen] {} lines ({} writers) + {} adapt lines in {:.1}s; widths {}..{}",
        corpus.len(),
        corpus.n_writers(),
        adapt_corpus.len(),
        t0.elapsed().as_secs_f64(),
        corpus.images.iter().map(|i| i.width()).min().unwrap(),
        corpus.images.iter().map(|i| i.width()).max().unwrap(),
    );
    let train_ids = part.train_ids();
    let tst: Vec<usize> = part.tst_global.iter().copied().collect();
    println!("[gen] train {} / tst {}", train_ids.len(), tst.len());

    // encoder
    let mut encoder = StyleEncoder::build(
        cfg.encoder.architecture.to_config(cfg.net.ed),
        cfg.stage_seed("encoder"),
    )
    .unwrap();
    if stage == "all" || stage == "encoder" {
        let t = Instant::now();
        let report = train_encoder(&mut encoder, &corpus, &cfg.augment, &cfg.encoder.train).unwrap();
        let n = report.losses.len();
        println!(
            "[encoder] {} iters in {:.1}s ({:.2} s/iter); loss {:.3} -> {:.3}",
            n,
            t.elapsed().as_secs_f64(),
            t.elapsed().as_secs_f64() / n as f64,
            report.losses[..20.min(n)].iter().sum::<f64>() / 20f64.min(n as f64),
            report.losses[n.saturating_sub(20)..].iter().sum::<f64>() / 20f64.min(n as f64),
        );
        // separation on unseen writers
        let ids: Vec<usize> = (0..adapt_corpus.len()).step_by(7).collect();
        let (same, cross) = cosine_separation(&encoder, &adapt_corpus, &ids).unwrap();
        println!(
            "[encoder] held-out separation: same {same:.3} cross {cross:.3} gap {:.3}",
            same - cross
        );
        encoder.save(std::path::Path::new("/tmp/calib_encoder.wsen")).unwrap();
    } else {
        encoder = StyleEncoder::load(std::path::Path::new("/tmp/calib_encoder.wsen")).unwrap();
    }

    if stage == "encoder" {
        return;
    }

    // extraction
    let t = Instant::now();
    let table = wsnet::experiment::extract_table(
        &corpus,
        Some(&part),
        &encoder,
        cfg.encoder.extract_k,
        cfg.stage_seed("extract"),
    )
    .unwrap();
    println!("[extract] {} rows in {:.1}s", table.n_writers(), t.elapsed().as_secs_f64());

    // baseline
    let train_one = |mode: ConditioningMode,
                     recipe: RecipeKind,
                     table: Option<EmbeddingTable>|
     -> (Recognizer, Option<EmbeddingTable>) {
        let mut net = Recognizer::build(
            cfg.net.architecture.clone(),
            mode,
            if mode.is_conditioned() { cfg.net.ed } else { 0 },
            corpus.charset.clone(),
            cfg.stage_seed("net"),
            cfg.init_spec(),
        )
        .unwrap();
        let plan = match recipe {
            RecipeKind::Normal => normal_recipe(),
            RecipeKind::Pretrained => pretrained_recipe(),
        }
        .scaled(cfg.training.scale);
        let mut tbl = table;
        let t = Instant::now();
        let report = train(
            &mut net,
            tbl.as_mut(),
            &corpus,
            &train_ids,
            &plan,
            &cfg.augment,
            &cfg.training.settings,
            None,
            None,
        )
        .unwrap();
        let dt = t.elapsed().as_secs_f64();
        println!(
            "[train {mode:?}] {} iters in {:.0}s ({:.3} s/iter), loss {:.3} -> {:.3}",
            report.iterations,
            dt,
            dt / report.iterations as f64,
            report.entries[..25].iter().map(|e| e.loss).sum::<f64>() / 25.0,
            report.entries[report.entries.len() - 25..]
                .iter()
                .map(|e| e.loss)
                .sum::<f64>()
                / 25.0
        );
        (net, tbl)
    };

    let (baseline, _) = train_one(ConditioningMode::Baseline, RecipeKind::Normal, None);
    let b_cer = evaluate_cer(&baseline, None, &corpus, &tst, None).unwrap().cer();
    println!("[eval] baseline TST CER = {b_cer:.4}");

    let (conditioned, cond_table) = train_one(
        ConditioningMode::SingleAdain,
        RecipeKind::Pretrained,
        Some(table.clone()),
    );
    let cond_table = cond_table.unwrap();
    let c_cer = evaluate_cer(&conditioned, Some(&cond_table), &corpus, &tst, None)
        .unwrap()
        .cer();
    println!(
        "[eval] single_adain TST CER = {c_cer:.4}  (relative improvement {:.1}%)",
        (b_cer - c_cer) / b_cer * 100.0
    );

    // shuffle sensitivity
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let sh = wsnet::adaptation::shuffle_sensitivity(&conditioned, Some(&cond_table), &corpus, &tst, &mut rng)
        .unwrap();
    println!(
        "[shuffle] true {:.4} shuffled {:.4} ratio {:.2}",
        sh.cer_true, sh.cer_shuffled, sh.ratio
    );

    if stage == "train" {
        return;
    }

    // adaptation on one unseen writer
    let writer = 0usize;
    let run = wsnet::adaptation::make_adaptation_run(
        &adapt_corpus,
        writer,
        0,
        &cfg.adaptation.cluster_sizes,
        cfg.adaptation.test_lines,
        11,
    )
    .unwrap();
    let t = Instant::now();
    let opt = optimize_embedding(
        &conditioned,
        &cond_table,
        &adapt_corpus,
        run.clusters.last().unwrap(),
        &cfg.augment,
        &OptimizeOptions {
            lbfgs: LbfgsOptions {
                iterations: cfg.adaptation.optimize.lbfgs.iterations,
                ..Default::default()
            },
            seed: 5,
        },
    )
    .unwrap();
    let test_prep = PreparedLines::new(&conditioned, &adapt_corpus, &run.test_lines).unwrap();
    let mean_cer = cer_with_embedding(&conditioned, &test_prep, &cond_table.mean_row()).unwrap();
    let opt_cer = cer_with_embedding(&conditioned, &test_prep, &opt.embedding).unwrap();
    let b_test = evaluate_cer(&baseline, None, &adapt_corpus, &run.test_lines, None)
        .unwrap()
        .cer();
    println!(
        "[adapt w{writer}] optimize in {:.0}s: loss {:.3}->{:.3}; test CER mean-init {mean_cer:.4} optimized {opt_cer:.4} (baseline {b_test:.4})",
        t.elapsed().as_secs_f64(),
        opt.initial_loss,
        opt.final_loss
    );

    let t = Instant::now();
    let ft = wsnet::adaptation::finetune_baseline(
        &baseline,
        &adapt_corpus,
        run.clusters.last().unwrap(),
        &cfg.augment,
        &cfg.adaptation.finetune,
    )
    .unwrap();
    let ft_cer = evaluate_cer(&ft.net, None, &adapt_corpus, &run.test_lines, None)
        .unwrap()
        .cer();
    println!(
        "[adapt w{writer}] finetune({} iters chosen) in {:.0}s: test CER {ft_cer:.4}",
        ft.chosen_iterations,
        t.elapsed().as_secs_f64()
    );
}
