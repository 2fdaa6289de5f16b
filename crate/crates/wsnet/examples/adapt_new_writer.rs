//! Adapt a conditioned recognizer to an unseen writer by optimizing a fresh
//! embedding with LBFGS, starting from the mean of the learned table, and
//! compare against selecting an existing embedding.
//!
//! Uses tiny networks so it runs in seconds; accuracy numbers are not
//! meaningful at this size — the point is the mechanics.
//!
//! `cargo run --release -p wsnet --example adapt_new_writer`

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wsnet::adaptation::{
    cer_with_embedding, make_adaptation_run, optimize_embedding, select_embedding, LbfgsOptions,
    OptimizeOptions, PreparedLines,
};
use wsnet::charset::Charset;
use wsnet::dataset::{AugmentationConfig, Corpus, CorpusSpec, LinesDist};
use wsnet::recognizer::{ConditioningMode, NetConfig, Recognizer};
use wsnet::wsb::{EmbeddingTable, InitSpec};

fn main() {
    let spec = CorpusSpec {
        n_writers: 4,
        lines_per_writer: LinesDist::Fixed { lines: 60 },
        ..CorpusSpec::desk_default()
    };
    let unseen = Corpus::generate(&spec, 77).unwrap();

    let net = Recognizer::build(
        NetConfig {
            conv_channels: vec![4, 8, 12, 16],
            rnn_hidden: 12,
            conv_layers_per_block: 1,
            ..NetConfig::desk()
        },
        ConditioningMode::SingleAdain,
        16,
        Charset::from_str_chars(&spec.charset).unwrap(),
        3,
        InitSpec::default(),
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let table = EmbeddingTable::init_normal(12, 16, &mut rng);

    let run = make_adaptation_run(&unseen, 0, 0, &[16, 32], 20, 9).unwrap();
    let adaptation_lines = run.clusters.last().unwrap();
    println!(
        "writer 0: {} adaptation lines, {} test lines",
        adaptation_lines.len(),
        run.test_lines.len()
    );

    let sel = select_embedding(&net, &table, &unseen, adaptation_lines, 8, 4).unwrap();
    println!(
        "select: candidate row {} with adaptation CER {:.3} ({} candidates tried)",
        sel.candidate_row,
        sel.cer,
        sel.evaluated.len()
    );

    let opt = optimize_embedding(
        &net,
        &table,
        &unseen,
        adaptation_lines,
        &AugmentationConfig::none(),
        &OptimizeOptions {
            lbfgs: LbfgsOptions {
                iterations: 25,
                ..Default::default()
            },
            seed: 2,
        },
    )
    .unwrap();
    println!(
        "optimize: adaptation loss {:.3} -> {:.3} (line search failed: {})",
        opt.initial_loss, opt.final_loss, opt.line_search_failed
    );

    let test = PreparedLines::new(&net, &unseen, &run.test_lines).unwrap();
    let mean_cer = cer_with_embedding(&net, &test, &table.mean_row()).unwrap();
    let sel_cer = cer_with_embedding(&net, &test, &sel.embedding).unwrap();
    let opt_cer = cer_with_embedding(&net, &test, &opt.embedding).unwrap();
    println!("test CER: mean-embedding {mean_cer:.3}, selected {sel_cer:.3}, optimized {opt_cer:.3}");
}
