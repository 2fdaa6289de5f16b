//! Contrastively pre-train a small style encoder and check that lines of
//! the same writer embed closer than lines of different writers — on writers
//! the encoder never saw.
//!
//! `cargo run --release -p wsnet --example pretrain_encoder`

use wsnet::dataset::{AugmentationConfig, Corpus, CorpusSpec, LinesDist};
use wsnet::style_encoder::{
    cosine_separation, extract_writer_embedding, train_encoder, EncoderConfig, EncoderTrainConfig,
    StyleEncoder,
};

fn main() {
    let spec = CorpusSpec {
        n_writers: 16,
        lines_per_writer: LinesDist::Fixed { lines: 60 },
        ..CorpusSpec::desk_default()
    };
    let corpus = Corpus::generate(&spec, 1).unwrap();
    let unseen = Corpus::generate(
        &CorpusSpec {
            n_writers: 5,
            lines_per_writer: LinesDist::Fixed { lines: 40 },
            ..spec.clone()
        },
        99,
    )
    .unwrap();

    let mut encoder = StyleEncoder::build(EncoderConfig::desk(32), 7).unwrap();
    let cfg = EncoderTrainConfig {
        iterations: 300,
        batch_size: 48,
        writers_per_batch: 12,
        ..Default::default()
    };
    println!("training encoder for {} iterations...", cfg.iterations);
    let report = train_encoder(&mut encoder, &corpus, &AugmentationConfig::desk_default(), &cfg)
        .unwrap();
    println!(
        "contrastive loss: {:.3} -> {:.3}",
        report.losses[0],
        report.losses.last().unwrap()
    );

    let ids: Vec<usize> = (0..unseen.len()).step_by(3).collect();
    let (same, cross) = cosine_separation(&encoder, &unseen, &ids).unwrap();
    println!("unseen writers: same-writer cos {same:.3}, cross-writer cos {cross:.3}");

    // one aggregated embedding per unseen writer
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    for w in 0..unseen.n_writers() {
        let lines = unseen.lines_of_writer(w);
        let e = extract_writer_embedding(&encoder, &unseen, &lines, 32, &mut rng).unwrap();
        println!("writer {w}: embedding norm {:.4}, first dims {:?}",
            e.iter().map(|v| v * v).sum::<f32>().sqrt(),
            &e.to_vec()[..4.min(e.len())]);
    }
}
