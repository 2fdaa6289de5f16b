//! Generate a small multi-writer corpus, partition it into writer clusters,
//! and print the cluster census.
//!
//! `cargo run --release -p wsnet --example generate_corpus [out_dir]`

use wsnet::dataset::{partition, Corpus, CorpusSpec, LinesDist, Split};

fn main() {
    let out = std::env::args().nth(1).unwrap_or_else(|| "corpus_demo".into());
    let spec = CorpusSpec {
        n_writers: 24,
        lines_per_writer: LinesDist::LogUniform { min: 8, max: 300 },
        ..CorpusSpec::desk_default()
    };
    let corpus = Corpus::generate(&spec, 42).unwrap();
    println!("{} lines across {} writers", corpus.len(), corpus.n_writers());

    let part = partition(&corpus.records, 0.0125, 42).unwrap();
    let mut census: std::collections::BTreeMap<usize, (usize, usize, usize)> = Default::default();
    for (&wsi, &label) in &part.writer_cluster {
        let e = census.entry(label).or_default();
        e.0 += 1;
        for id in corpus.lines_of_writer(wsi) {
            match part.splits[&id] {
                Split::Train => e.1 += 1,
                Split::TestCluster => e.2 += 1,
                Split::TestGlobal => {}
            }
        }
    }
    println!("cluster  writers  train  test");
    for (label, (w, trn, tst)) in census {
        println!("{label:>7}  {w:>7}  {trn:>5}  {tst:>4}");
    }
    println!("global test lines: {}", part.tst_global.len());

    let dir = std::path::Path::new(&out);
    std::fs::create_dir_all(dir).unwrap();
    corpus.write(dir).unwrap();
    part.save_with_records(&dir.join("partition.tsv"), &corpus.records)
        .unwrap();
    println!("wrote images + manifest + partition under {out}/");
}
