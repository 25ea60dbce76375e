//! Synthetic inputs shared by the benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordpull::corpus::{Document, WordVectorTable};
use wordpull::pipeline::{PipelineConfig, Prepared};
use wordpull::projector::ProjectorKind;

/// `n` documents of `words` tokens drawn from a `vocab`-word table of width `dim`.
pub fn synthetic(n: usize, words: usize, vocab: usize, dim: usize, seed: u64) -> (Vec<Document>, WordVectorTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = WordVectorTable::new(dim);
    for w in 0..vocab {
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        table.insert(&format!("w{w}"), &v);
    }
    let docs = (0..n)
        .map(|i| {
            let text: Vec<String> = (0..words).map(|_| format!("w{}", rng.gen_range(0..vocab))).collect();
            Document { id: format!("d{i}"), text: text.join(" "), label: Some(format!("c{}", i % 2)) }
        })
        .collect();
    (docs, table)
}

pub fn prepared(n: usize, kind: ProjectorKind, iterations: usize) -> Prepared {
    let (docs, table) = synthetic(n, 8, 200, 16, 1);
    let mut cfg = PipelineConfig::new("bench.jsonl", "bench.txt");
    cfg.projector.kind = kind;
    cfg.projector.mds.iterations = iterations;
    cfg.projector.mds.tol = None;
    cfg.projector.tsne.iterations = iterations;
    Prepared::from_parts(cfg, docs, None, table).expect("synthetic corpus is valid")
}
