//! Train a small baseline recognizer on a synthetic corpus and decode a few
//! test lines.
//!
//! `cargo run --release -p wsnet --example train_recognizer`

use wsnet::charset::Charset;
use wsnet::dataset::{partition, AugmentationConfig, Corpus, CorpusSpec, LinesDist, TextSpec};
use wsnet::recognizer::{
    greedy_decode, image_to_input, ConditioningMode, NetConfig, Recognizer,
};
use wsnet::training::{evaluate_cer, train, Phase, PhasePlan, Trainable, TrainSettings, WarmupEvent};
use wsnet::wsb::InitSpec;

fn main() {
    let spec = CorpusSpec {
        n_writers: 8,
        lines_per_writer: LinesDist::Fixed { lines: 120 },
        text: TextSpec {
            len_min: 3,
            len_max: 5,
            pair_char_weight: 1.0,
            space_prob: 0.0,
        },
        ..CorpusSpec::desk_default()
    };
    let corpus = Corpus::generate(&spec, 5).unwrap();
    let part = partition(&corpus.records, 0.05, 5).unwrap();
    let train_ids = part.train_ids();
    let tst: Vec<usize> = part.tst_global.iter().copied().collect();

    let mut net = Recognizer::build(
        NetConfig {
            conv_channels: vec![6, 12, 24, 30],
            rnn_hidden: 24,
            ..NetConfig::desk()
        },
        ConditioningMode::Baseline,
        0,
        Charset::from_str_chars(&spec.charset).unwrap(),
        1,
        InitSpec::default(),
    )
    .unwrap();

    // a single warmup phase stands in for the full recipe in this demo
    let plan = PhasePlan {
        phases: vec![Phase {
            iterations: 1500,
            trainable: Trainable::All,
            events: vec![WarmupEvent {
                start: 0,
                peak_lr: 3e-4,
                warmup_len: 60,
            }],
        }],
    };
    println!("training {} iterations on {} lines...", plan.total_iterations(), train_ids.len());
    let report = train(
        &mut net,
        None,
        &corpus,
        &train_ids,
        &plan,
        &AugmentationConfig::desk_default(),
        &TrainSettings {
            batch_size: 32,
            ..Default::default()
        },
        None,
        None,
    )
    .unwrap();
    println!(
        "loss {:.2} -> {:.2}",
        report.entries[..20].iter().map(|e| e.loss).sum::<f64>() / 20.0,
        report.entries[report.entries.len() - 20..]
            .iter()
            .map(|e| e.loss)
            .sum::<f64>()
            / 20.0
    );

    let cer = evaluate_cer(&net, None, &corpus, &tst, None).unwrap();
    println!("test CER: {:.4} over {} lines", cer.cer(), cer.lines);

    for &id in tst.iter().take(5) {
        let input = image_to_input(&corpus.images[id]);
        let logits = net.forward_logits(&input, None).unwrap();
        let hyp = net
            .charset
            .decode(&greedy_decode(&logits, net.charset.blank()));
        println!("  ref {::<12}  hyp {}", corpus.records[id].transcript, hyp);
    }
}
