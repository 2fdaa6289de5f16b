//! Convergence probe: train one baseline under the normal recipe with a CER
//! trace. Environment variables override the sizing knobs so the desk-scale
//! defaults can be tuned without recompiling.
//!
//! `SCALE=0.01 LEN_MAX=6 cargo run --release -p wsnet --example probe_train`

use std::time::Instant;
use wsnet::config::ExperimentConfig;
use wsnet::dataset::{partition, Corpus};
use wsnet::recognizer::{ConditioningMode, Recognizer};
use wsnet::training::{evaluate_cer, normal_recipe, train};

fn env_f64(key: &str, default: f64) -> f64 {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn env_usize(key: &str, default: usize) -> usize {
    std::env::var(key).ok().and_then(|v| v.parse().ok()).unwrap_or(default)
}

fn main() {
    let mut cfg = ExperimentConfig::desk_default();
    cfg.corpus.text.len_min = env_usize("LEN_MIN", 3);
    cfg.corpus.text.len_max = env_usize("LEN_MAX", 6);
    cfg.training.scale = env_f64("SCALE", 0.01);
    cfg.training.settings.batch_size = env_usize("BATCH", 32);
    cfg.training.settings.eval_every = env_usize("EVAL_EVERY", 400);
    let ch = env_usize("CH", 6);
    cfg.net.architecture.conv_channels = vec![ch, ch * 2, ch * 4, ch * 5];
    cfg.net.architecture.rnn_hidden = env_usize("HIDDEN", 24);

    let corpus = Corpus::generate(&cfg.corpus, cfg.stage_seed("corpus")).unwrap();
    let part = partition(&corpus.records, 0.0125, cfg.stage_seed("partition")).unwrap();
    let train_ids = part.train_ids();
    let tst: Vec<usize> = part.tst_global.iter().copied().collect();
    println!(
        "corpus {} lines, widths {}..{}, train {}, tst {}",
        corpus.len(),
        corpus.images.iter().map(|i| i.width()).min().unwrap(),
        corpus.images.iter().map(|i| i.width()).max().unwrap(),
        train_ids.len(),
        tst.len()
    );

    let mut net = Recognizer::build(
        cfg.net.architecture.clone(),
        ConditioningMode::Baseline,
        0,
        corpus.charset.clone(),
        1,
        cfg.init_spec(),
    )
    .unwrap();
    println!("params: {}", net.store.total_len());
    let plan = normal_recipe().scaled(cfg.training.scale);
    println!("plan: {} iterations", plan.total_iterations());
    let t = Instant::now();
    let report = train(
        &mut net,
        None,
        &corpus,
        &train_ids,
        &plan,
        &cfg.augment,
        &cfg.training.settings,
        Some(&tst),
        None,
    )
    .unwrap();
    let dt = t.elapsed().as_secs_f64();
    for e in &report.entries {
        if let Some(cer) = e.eval_cer {
            println!("iter {:>6}  lr {:.2e}  loss {:>7.3}  TST CER {:.4}", e.iter, e.lr, e.loss, cer);
        }
    }
    let final_cer = evaluate_cer(&net, None, &corpus, &tst, None).unwrap().cer();
    println!(
        "total {:.0}s ({:.3} s/iter); final TST CER {final_cer:.4}",
        dt,
        dt / report.iterations as f64
    );
}
