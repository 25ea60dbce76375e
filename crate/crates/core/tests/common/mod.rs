//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wordpull::attribution::{tangent_map, Reduction};
use wordpull::cloud::{CloudEntry, Palette};
use wordpull::corpus::{Document, WordVectorTable};
use wordpull::encoder::{encode, EncoderConfig};
use wordpull::engine::{EngineError, Graph, LeafSpec, Shape, ValueRef};
use wordpull::projector::{project, ProjectorConfig};

pub type Builder = Box<dyn Fn(&mut Graph, &[ValueRef]) -> Result<ValueRef, EngineError>>;

fn uniform(rng: &mut ChaCha8Rng, len: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(lo..hi)).collect()
}

/// Weighted sum of all entries with fixed pseudo-random weights in [0.5, 1.5].
pub fn readout(g: &mut Graph, v: ValueRef, seed: u64) -> Result<ValueRef, EngineError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let w = g.constant(uniform(&mut rng, v.shape().len(), 0.5, 1.5), v.shape())?;
    let prod = g.mul(v, w)?;
    g.sum(prod)
}

/// One gradient-check case per primitive, on inputs away from kinks and poles.
pub fn primitive_cases() -> Vec<(&'static str, Vec<LeafSpec>, Builder)> {
    let m32 = LeafSpec::new(vec![0.3, -1.1, 0.8, 1.7, -0.4, 0.9], Shape::Matrix(3, 2));
    let m23 = LeafSpec::new(vec![1.2, -0.7, 0.5, 0.25, 1.4, -1.6], Shape::Matrix(2, 3));
    let pos = LeafSpec::new(vec![0.6, 1.3, 0.9, 1.8, 0.45, 1.1], Shape::Matrix(3, 2));
    let s = LeafSpec::scalar(-0.8);
    let v3 = LeafSpec::new(vec![0.5, -1.5, 1.0], Shape::Vector(3));
    vec![
        ("add", vec![m32.clone(), pos.clone()], Box::new(|g, l| g.add(l[0], l[1]))),
        ("sub", vec![m32.clone(), pos.clone()], Box::new(|g, l| g.sub(l[0], l[1]))),
        ("mul", vec![m32.clone(), pos.clone()], Box::new(|g, l| g.mul(l[0], l[1]))),
        ("div", vec![m32.clone(), pos.clone()], Box::new(|g, l| g.div(l[0], l[1]))),
        ("scalar_mul", vec![s.clone(), m32.clone()], Box::new(|g, l| g.scalar_mul(l[0], l[1]))),
        ("matmul", vec![m32.clone(), m23.clone()], Box::new(|g, l| g.matmul(l[0], l[1]))),
        ("transpose", vec![m32.clone()], Box::new(|g, l| g.transpose(l[0]))),
        ("row_sum", vec![m32.clone()], Box::new(|g, l| g.row_sum(l[0]))),
        ("mean_rows", vec![m32.clone()], Box::new(|g, l| g.mean_rows(l[0]))),
        ("exp", vec![m32.clone()], Box::new(|g, l| g.exp(l[0]))),
        ("log", vec![pos.clone()], Box::new(|g, l| g.log(l[0]))),
        ("pow", vec![pos.clone()], Box::new(|g, l| g.pow(l[0], 1.5))),
        ("sqrt", vec![pos.clone()], Box::new(|g, l| g.sqrt(l[0]))),
        ("sqrt_safe", vec![pos.clone()], Box::new(|g, l| g.sqrt_safe(l[0]))),
        ("neg", vec![m32.clone()], Box::new(|g, l| g.neg(l[0]))),
        ("reciprocal_safe", vec![m32.clone()], Box::new(|g, l| g.reciprocal_safe(l[0]))),
        ("softmax_rows", vec![m32.clone()], Box::new(|g, l| g.softmax_rows(l[0]))),
        ("pairwise_sq_dist", vec![m32.clone()], Box::new(|g, l| g.pairwise_sq_dist(l[0]))),
        ("select_entry", vec![m32.clone()], Box::new(|g, l| g.select(l[0], 2, 1))),
        ("stack", vec![v3.clone(), v3.clone()], Box::new(|g, l| g.stack(&[l[0], l[1], l[0]]))),
        ("clamp_min", vec![m32.clone()], Box::new(|g, l| g.clamp_min(l[0], 0.1))),
    ]
}

/// Number of distinct operations a composite may draw from.
pub const COMPOSITE_OPS: usize = 20;

/// A random chain of 2-6 operations over a 3×3 matrix state, mixing in two
/// more leaves (matrix `b`, vector `v`) and a scalar `s`.
pub fn random_composite(seed: u64) -> (Vec<LeafSpec>, Builder, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let leaves = vec![
        LeafSpec::new(uniform(&mut rng, 9, -1.0, 1.0), Shape::Matrix(3, 3)),
        LeafSpec::new(uniform(&mut rng, 9, -1.0, 1.0), Shape::Matrix(3, 3)),
        LeafSpec::new(uniform(&mut rng, 3, -1.0, 1.0), Shape::Vector(3)),
        LeafSpec::scalar(rng.gen_range(-1.0..1.0)),
    ];
    let len = rng.gen_range(2..=6);
    let ops: Vec<usize> = (0..len).map(|_| rng.gen_range(0..COMPOSITE_OPS)).collect();
    let plan = ops.clone();
    let build: Builder = Box::new(move |g: &mut Graph, l: &[ValueRef]| {
        let (b, v, s) = (l[1], l[2], l[3]);
        let ones = g.constant(vec![1.0; 9], Shape::Matrix(3, 3))?;
        let mut cur = l[0];
        for &op in &plan {
            cur = match op {
                0 => g.add(cur, b)?,
                1 => g.sub(cur, b)?,
                2 => g.mul(cur, b)?,
                3 => {
                    let b2 = g.mul(b, b)?;
                    let den = g.add(b2, ones)?;
                    g.div(cur, den)?
                }
                4 => {
                    let m = g.matmul(cur, b)?;
                    g.scale(m, 0.5)?
                }
                5 => g.transpose(cur)?,
                6 => {
                    let x = g.scale(cur, 0.3)?;
                    g.exp(x)?
                }
                7 => {
                    let sq = g.mul(cur, cur)?;
                    let x = g.add(sq, ones)?;
                    g.log(x)?
                }
                8 => {
                    let sq = g.mul(cur, cur)?;
                    let x = g.add(sq, ones)?;
                    g.pow(x, 0.75)?
                }
                9 => {
                    let sq = g.mul(cur, cur)?;
                    let x = g.add(sq, ones)?;
                    g.sqrt(x)?
                }
                10 => {
                    let sq = g.mul(cur, cur)?;
                    let x = g.add(sq, ones)?;
                    g.sqrt_safe(x)?
                }
                11 => g.neg(cur)?,
                12 => {
                    let sq = g.mul(cur, cur)?;
                    let x = g.add(sq, ones)?;
                    g.reciprocal_safe(x)?
                }
                13 => g.softmax_rows(cur)?,
                14 => {
                    let d = g.pairwise_sq_dist(cur)?;
                    g.scale(d, 0.3)?
                }
                15 => g.scalar_mul(s, cur)?,
                16 => g.clamp_min(cur, -50.0)?,
                17 => {
                    let vm = g.matmul(v, cur)?;
                    let rs = g.row_sum(cur)?;
                    g.stack(&[vm, v, rs])?
                }
                18 => {
                    let mr = g.mean_rows(cur)?;
                    g.stack(&[mr, v, mr])?
                }
                _ => {
                    let e = g.select(cur, 1, 2)?;
                    g.scalar_mul(e, cur)?
                }
            };
        }
        Ok(cur)
    });
    (leaves, build, ops)
}

/// Word matrices for one forward run, one `d × e` row-major block per document.
#[derive(Debug, Clone)]
pub struct DocInputs {
    pub rows: Vec<Vec<f64>>,
    pub words: Vec<usize>,
    pub e: usize,
}

pub fn forward_points(docs: &DocInputs, enc: &EncoderConfig, proj: &ProjectorConfig) -> Vec<[f64; 2]> {
    let mut g = Graph::untracked();
    let mut embs = Vec::new();
    for (rows, d) in docs.rows.iter().zip(&docs.words) {
        let x = g.leaf(rows.clone(), Shape::Matrix(*d, docs.e)).unwrap();
        embs.push(encode(&mut g, x, enc).unwrap().embedding);
    }
    let stacked = g.stack(&embs).unwrap();
    let p = project(&mut g, stacked, proj).unwrap();
    p.points(&g)
}

/// Analytic grad-times-input impact vectors per document and word.
pub fn analytic_impacts(docs: &DocInputs, enc: &EncoderConfig, proj: &ProjectorConfig) -> Vec<Vec<[f64; 2]>> {
    let mut g = Graph::new();
    let mut leaves = Vec::new();
    let mut embs = Vec::new();
    for (rows, d) in docs.rows.iter().zip(&docs.words) {
        let x = g.leaf(rows.clone(), Shape::Matrix(*d, docs.e)).unwrap();
        leaves.push(x);
        embs.push(encode(&mut g, x, enc).unwrap().embedding);
    }
    let stacked = g.stack(&embs).unwrap();
    let p = project(&mut g, stacked, proj).unwrap();
    let outputs: Vec<[ValueRef; 2]> = (0..leaves.len()).map(|i| [g.select(p.coords, i, 0).unwrap(), g.select(p.coords, i, 1).unwrap()]).collect();
    leaves
        .iter()
        .zip(&outputs)
        .enumerate()
        .map(|(i, (l, o))| tangent_map(&g, &format!("d{i}"), l, *o, Reduction::GradTimesInput).unwrap().impact_vectors)
        .collect()
}

/// Central difference of document `i`'s point along word `j`'s own vector.
pub fn directional_fd(docs: &DocInputs, enc: &EncoderConfig, proj: &ProjectorConfig, i: usize, j: usize, h: f64) -> [f64; 2] {
    let e = docs.e;
    let shifted = |sign: f64| {
        let mut d = docs.clone();
        for k in 0..e {
            d.rows[i][j * e + k] += sign * h * docs.rows[i][j * e + k];
        }
        forward_points(&d, enc, proj)[i]
    };
    let (p, m) = (shifted(1.0), shifted(-1.0));
    [(p[0] - m[0]) / (2.0 * h), (p[1] - m[1]) / (2.0 * h)]
}

/// Vector relative error `|a - b| / (|b| + floor)`.
pub fn vector_rel_err(a: [f64; 2], b: [f64; 2], floor: f64) -> f64 {
    let diff = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    diff / ((b[0] * b[0] + b[1] * b[1]).sqrt() + floor)
}

/// `n` documents of 3..=max_words random words with entries in [-1, 1].
pub fn random_docs(n: usize, max_words: usize, e: usize, seed: u64) -> DocInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<usize> = (0..n).map(|_| rng.gen_range(3..=max_words)).collect();
    let rows = words.iter().map(|d| uniform(&mut rng, d * e, -1.0, 1.0)).collect();
    DocInputs { rows, words, e }
}

/// Worst relative error between analytic and finite-difference impacts.
pub fn e2e_max_rel_err(docs: &DocInputs, enc: &EncoderConfig, proj: &ProjectorConfig, h: f64, floor: f64) -> (f64, usize) {
    let analytic = analytic_impacts(docs, enc, proj);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (i, doc) in analytic.iter().enumerate() {
        for (j, a) in doc.iter().enumerate() {
            let fd = directional_fd(docs, enc, proj, i, j, h);
            worst = worst.max(vector_rel_err(*a, fd, floor));
            checked += 1;
        }
    }
    (worst, checked)
}

/// Per-document inputs for the brute-force cloud oracle.
#[derive(Debug, Clone)]
pub struct OracleDoc {
    pub id: String,
    pub point: [f64; 2],
    pub label: String,
    /// (word, score) per token position.
    pub scores: Vec<(String, f64)>,
}

/// Straightforward nested-loop version of the cloud construction.
pub fn brute_force_cloud(docs: &[OracleDoc], k: usize, palette: &Palette) -> Vec<CloudEntry> {
    // Top-k by repeated scans: highest score, earliest position on ties.
    let mut tops: Vec<Vec<(String, f64)>> = Vec::new();
    for doc in docs {
        let mut taken = vec![false; doc.scores.len()];
        let mut top = Vec::new();
        while top.len() < k && top.len() < doc.scores.len() {
            let mut best: Option<usize> = None;
            for p in 0..doc.scores.len() {
                if taken[p] {
                    continue;
                }
                match best {
                    None => best = Some(p),
                    Some(b) if doc.scores[p].1 > doc.scores[b].1 => best = Some(p),
                    _ => {}
                }
            }
            let b = best.unwrap();
            taken[b] = true;
            top.push(doc.scores[b].clone());
        }
        tops.push(top);
    }

    let mut words: Vec<String> = Vec::new();
    for top in &tops {
        for (w, _) in top {
            if !words.contains(w) {
                words.push(w.clone());
            }
        }
    }

    struct Cand {
        word: String,
        members: Vec<(usize, usize)>,
        total: f64,
    }
    let mut cands = Vec::new();
    for w in &words {
        let mut members = Vec::new();
        let mut total = 0.0;
        for (di, top) in tops.iter().enumerate() {
            let mut count = 0;
            for (tw, s) in top {
                if tw == w {
                    count += 1;
                    total += s;
                }
            }
            if count > 0 {
                members.push((di, count));
            }
        }
        let occurrences: usize = members.iter().map(|m| m.1).sum();
        if occurrences > 1 && total > 0.0 {
            cands.push(Cand { word: w.clone(), members, total });
        }
    }

    let same_members = |a: &[(usize, usize)], b: &[(usize, usize)]| a.len() == b.len() && a.iter().all(|m| b.contains(m));
    let mut out = Vec::new();
    for c in &cands {
        let beaten = cands.iter().any(|o| {
            o.word != c.word && same_members(&o.members, &c.members) && (o.total > c.total || (o.total == c.total && o.word < c.word))
        });
        if beaten {
            continue;
        }
        let (mut sx, mut sy, mut sc) = (0.0, 0.0, 0.0);
        for &(di, count) in &c.members {
            sx += count as f64 * docs[di].point[0];
            sy += count as f64 * docs[di].point[1];
            sc += count as f64;
        }
        let first = &docs[c.members[0].0].label;
        let uniform = c.members.iter().all(|&(di, _)| &docs[di].label == first);
        out.push(CloudEntry {
            word: c.word.clone(),
            x: sx / sc,
            y: sy / sc,
            size: c.total,
            color: if uniform { palette.colors[first].clone() } else { palette.mixed.clone() },
            members: c.members.iter().map(|&(di, _)| docs[di].id.clone()).collect(),
        });
    }
    out
}

/// Random corpus for the cloud oracle: few words so repeats and collisions occur.
pub fn random_oracle_docs(seed: u64) -> Vec<OracleDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = ["ace", "ball", "chip", "code", "data", "game", "net", "run"];
    let labels = ["sport", "tech", "health"];
    let n = rng.gen_range(2..=10);
    (0..n)
        .map(|i| {
            let len = rng.gen_range(1..=8);
            OracleDoc {
                id: format!("doc{i}"),
                point: [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)],
                label: labels[rng.gen_range(0..labels.len())].to_string(),
                scores: (0..len)
                    .map(|_| {
                        // Quantised scores make exact ties common.
                        let score = if rng.gen_bool(0.1) { 0.0 } else { (rng.gen_range(1..=8) as f64) * 0.25 };
                        (vocab[rng.gen_range(0..vocab.len())].to_string(), score)
                    })
                    .collect(),
            }
        })
        .collect()
}

/// Mean silhouette coefficient of `points` under `labels`.
pub fn silhouette(points: &[[f64; 2]], labels: &[usize]) -> f64 {
    let dist = |a: [f64; 2], b: [f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let classes: HashSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..points.len() {
        let mean_to = |c: usize| {
            let ds: Vec<f64> = (0..points.len()).filter(|&j| j != i && labels[j] == c).map(|j| dist(points[i], points[j])).collect();
            if ds.is_empty() { None } else { Some(ds.iter().sum::<f64>() / ds.len() as f64) }
        };
        let Some(a) = mean_to(labels[i]) else { continue };
        let b = classes.iter().filter(|&&c| c != labels[i]).filter_map(|&c| mean_to(c)).fold(f64::INFINITY, f64::min);
        total += (b - a) / a.max(b);
    }
    total / points.len() as f64
}

pub const TOPIC_A: [&str; 5] = ["tennis", "match", "serve", "racket", "court"];
pub const TOPIC_B: [&str; 5] = ["chip", "cpu", "code", "kernel", "cache"];

/// Two-topic corpus of `n` documents: topic words load on orthogonal axes
/// 0 and 1, filler words on the remaining axes with small weights.
pub fn two_topic_corpus(n: usize, seed: u64) -> (Vec<Document>, WordVectorTable) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = 6;
    let mut table = WordVectorTable::new(dim);
    for (axis, words) in [(0, TOPIC_A), (1, TOPIC_B)] {
        for w in words {
            let mut v = uniform(&mut rng, dim, -0.05, 0.05);
            v[axis] = rng.gen_range(0.9..1.1);
            table.insert(w, &v);
        }
    }
    let filler: Vec<String> = (0..12).map(|i| format!("filler{i}")).collect();
    for w in &filler {
        let mut v = uniform(&mut rng, dim, -0.25, 0.25);
        v[0] = rng.gen_range(0.0..0.2);
        v[1] = rng.gen_range(0.0..0.2);
        table.insert(w, &v);
    }
    let docs = (0..n)
        .map(|i| {
            let (topic, label) = if i % 2 == 0 { (TOPIC_A, "sport") } else { (TOPIC_B, "tech") };
            let mut words: Vec<String> = (0..rng.gen_range(2..=3)).map(|_| topic[rng.gen_range(0..5)].to_string()).collect();
            words.extend((0..rng.gen_range(3..=4)).map(|_| filler[rng.gen_range(0..filler.len())].clone()));
            // Shuffle so topic words are not always first.
            for a in (1..words.len()).rev() {
                let b = rng.gen_range(0..=a);
                words.swap(a, b);
            }
            Document { id: format!("doc{i:02}"), text: words.join(" "), label: Some(label.to_string()) }
        })
        .collect();
    (docs, table)
}

/// Label → color map covering the oracle labels.
pub fn oracle_palette() -> Palette {
    let colors: BTreeMap<String, String> =
        [("sport", "#1f77b4"), ("tech", "#2ca02c"), ("health", "#ff7f0e")].iter().map(|(a, b)| (a.to_string(), b.to_string())).collect();
    Palette::new(colors)
}
