//! Spatial word clouds, impact heatmaps and per-document markers.
//!
//! Cloud construction: each document contributes its top-k scored word
//! instances; instances are grouped by surface word; every group is placed at
//! the count-weighted centroid of its documents' projected positions. Words
//! seen only once are dropped, groups whose member documents coincide keep
//! only their strongest word, and a word takes its documents' label color when
//! they all agree (purple otherwise).

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attribution::{TangentMap, WordScore};
use crate::corpus::TokenSequence;

pub const MIXED_KEY: &str = "mixed";
pub const DEFAULT_MIXED_COLOR: &str = "#800080";
pub const DEFAULT_TOP_K: usize = 20;

#[derive(Debug, Error)]
pub enum CloudError {
    #[error("no palette color for label {0:?}")]
    MissingColor(String),
    #[error("document {0:?} has no label")]
    MissingLabel(String),
    #[error("k = {k} but only {n} documents")]
    TooManyClusters { k: usize, n: usize },
    #[error("alignment mismatch for {doc_id:?}: {detail}")]
    Alignment { doc_id: String, detail: String },
    #[error("cannot read palette {path}: {message}")]
    Palette { path: String, message: String },
}

/// Highest-scoring instances first; ties go to the earlier position.
pub fn top_k_words(scores: &[WordScore], k: usize) -> Vec<WordScore> {
    let mut ranked = scores.to_vec();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.position.cmp(&b.position)));
    ranked.truncate(k);
    ranked
}

/// A document's projected point and its top-k instances.
#[derive(Debug, Clone, PartialEq)]
pub struct DocTopWords {
    pub doc_id: String,
    pub point: [f64; 2],
    pub top: Vec<WordScore>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMember {
    pub doc_id: String,
    /// Instances of the word among this document's top-k.
    pub count: usize,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordGroup {
    pub word: String,
    pub members: Vec<GroupMember>,
    pub total_score: f64,
}

impl WordGroup {
    pub fn occurrences(&self) -> usize {
        self.members.iter().map(|m| m.count).sum()
    }
}

/// One group per distinct word, sorted by word; members keep document order.
pub fn group_by_word(docs: &[DocTopWords]) -> Vec<WordGroup> {
    let mut groups: BTreeMap<&str, WordGroup> = BTreeMap::new();
    for doc in docs {
        for inst in &doc.top {
            let group = groups.entry(inst.word.as_str()).or_insert_with(|| WordGroup {
                word: inst.word.clone(),
                members: Vec::new(),
                total_score: 0.0,
            });
            group.total_score += inst.score;
            match group.members.last_mut() {
                Some(m) if m.doc_id == doc.doc_id => m.count += 1,
                _ => group.members.push(GroupMember { doc_id: doc.doc_id.clone(), count: 1, point: doc.point }),
            }
        }
    }
    groups.into_values().collect()
}

/// `sum(count * point) / sum(count)`.
pub fn weighted_centroid(group: &WordGroup) -> [f64; 2] {
    let total = group.occurrences() as f64;
    let mut c = [0.0; 2];
    for m in &group.members {
        c[0] += m.count as f64 * m.point[0];
        c[1] += m.count as f64 * m.point[1];
    }
    [c[0] / total, c[1] / total]
}

/// Split each group into single-linkage clusters of member points closer
/// than `tau`. Subgroups share the word, so a word may then appear more than
/// once in the cloud.
pub fn subdivide(groups: &[WordGroup], tau: f64, scores: &[WordScore]) -> Vec<WordGroup> {
    let mut out = Vec::new();
    for g in groups {
        let n = g.members.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], i: usize) -> usize {
            let mut r = i;
            while p[r] != r {
                r = p[r];
            }
            p[i] = r;
            r
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (g.members[i].point, g.members[j].point);
                if ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt() <= tau {
                    let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
                    parent[ri.max(rj)] = ri.min(rj);
                }
            }
        }
        let mut parts: BTreeMap<usize, Vec<GroupMember>> = BTreeMap::new();
        for i in 0..n {
            let root = find(&mut parent, i);
            parts.entry(root).or_default().push(g.members[i].clone());
        }
        for members in parts.into_values() {
            let ids: HashSet<&str> = members.iter().map(|m| m.doc_id.as_str()).collect();
            let total_score = scores.iter().filter(|s| s.word == g.word && ids.contains(s.doc_id.as_str())).map(|s| s.score).sum();
            out.push(WordGroup { word: g.word.clone(), members, total_score });
        }
    }
    out
}

/// Label colors plus the color for words spanning several labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Palette {
    pub colors: BTreeMap<String, String>,
    pub mixed: String,
}

impl Palette {
    pub fn new(colors: BTreeMap<String, String>) -> Self {
        Self { colors, mixed: DEFAULT_MIXED_COLOR.to_string() }
    }

    /// Parse a JSON object `label -> "#rrggbb"`; the `mixed` key overrides purple.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let mut colors: BTreeMap<String, String> = serde_json::from_str(text)?;
        let mixed = colors.remove(MIXED_KEY).unwrap_or_else(|| DEFAULT_MIXED_COLOR.to_string());
        Ok(Self { colors, mixed })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CloudError> {
        let path = path.as_ref();
        let err = |message: String| CloudError::Palette { path: path.display().to_string(), message };
        let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_json(&text).map_err(|e| err(e.to_string()))
    }

    /// Fixed colors assigned to `labels` in sorted order.
    pub fn default_for<'a>(labels: impl IntoIterator<Item = &'a str>) -> Self {
        const COLORS: [&str; 10] = ["#1f77b4", "#2ca02c", "#ff7f0e", "#e377c2", "#17becf", "#bcbd22", "#8c564b", "#d62728", "#7f7f7f", "#393b79"];
        let mut sorted: Vec<&str> = labels.into_iter().collect();
        sorted.sort_unstable();
        sorted.dedup();
        let colors = sorted.into_iter().enumerate().map(|(i, l)| (l.to_string(), COLORS[i % COLORS.len()].to_string())).collect();
        Self::new(colors)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudEntry {
    pub word: String,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub color: String,
    pub members: Vec<String>,
}

/// Filter groups and turn them into placed, colored cloud entries.
///
/// Output is sorted by size (descending), then word.
pub fn build_cloud(groups: &[WordGroup], labels: &BTreeMap<String, String>, palette: &Palette) -> Result<Vec<CloudEntry>, CloudError> {
    for g in groups {
        for m in &g.members {
            let label = labels.get(&m.doc_id).ok_or_else(|| CloudError::MissingLabel(m.doc_id.clone()))?;
            if !palette.colors.contains_key(label) {
                return Err(CloudError::MissingColor(label.clone()));
            }
        }
    }

    // Groups with identical member multisets share a centroid; keep the strongest.
    let mut by_members: BTreeMap<Vec<(&str, usize)>, &WordGroup> = BTreeMap::new();
    for g in groups.iter().filter(|g| g.occurrences() > 1 && g.total_score > 0.0) {
        let mut key: Vec<(&str, usize)> = g.members.iter().map(|m| (m.doc_id.as_str(), m.count)).collect();
        key.sort_unstable();
        by_members
            .entry(key)
            .and_modify(|best| {
                if g.total_score > best.total_score || (g.total_score == best.total_score && g.word < best.word) {
                    *best = g;
                }
            })
            .or_insert(g);
    }

    let mut entries: Vec<CloudEntry> = by_members
        .into_values()
        .map(|g| {
            let [x, y] = weighted_centroid(g);
            let first = &labels[&g.members[0].doc_id];
            let color = if g.members.iter().all(|m| &labels[&m.doc_id] == first) {
                palette.colors[first].clone()
            } else {
                palette.mixed.clone()
            };
            CloudEntry { word: g.word.clone(), x, y, size: g.total_score, color, members: g.members.iter().map(|m| m.doc_id.clone()).collect() }
        })
        .collect();
    entries.sort_by(|a, b| b.size.total_cmp(&a.size).then_with(|| a.word.cmp(&b.word)));
    Ok(entries)
}

pub const MIN_FONT_PT: f64 = 10.0;
pub const MAX_FONT_PT: f64 = 36.0;

/// Affine map of a cloud size onto `[10, 36]` pt given the cloud's size
/// range. A degenerate range maps to the midpoint.
pub fn font_size(size: f64, min: f64, max: f64) -> f64 {
    if max > min {
        MIN_FONT_PT + (size - min) / (max - min) * (MAX_FONT_PT - MIN_FONT_PT)
    } else {
        (MIN_FONT_PT + MAX_FONT_PT) / 2.0
    }
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Seeded k-means (k-means++ start, at most 100 Lloyd steps) on 2D points.
///
/// Cluster ids are renumbered by first appearance so equal partitions give
/// equal labelings.
pub fn pseudo_labels(points: &[[f64; 2]], k: usize, seed: u64) -> Result<Vec<usize>, CloudError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(CloudError::TooManyClusters { k, n });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = vec![points[rng.gen_range(0..n)]];
    while centers.len() < k {
        let weights: Vec<f64> = points.iter().map(|p| centers.iter().map(|c| sq_dist(*p, *c)).fold(f64::INFINITY, f64::min)).collect();
        let total: f64 = weights.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut chosen = n - 1;
            for (i, w) in weights.iter().enumerate() {
                if *w > 0.0 && r < *w {
                    chosen = i;
                    break;
                }
                r -= w;
            }
            if weights[chosen] == 0.0 {
                chosen = weights.iter().rposition(|w| *w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.gen_range(0..n)
        };
        centers.push(points[pick]);
    }

    let mut assign = vec![usize::MAX; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let best = (0..k).min_by(|&a, &b| sq_dist(*p, centers[a]).total_cmp(&sq_dist(*p, centers[b]))).unwrap();
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![[0.0f64; 3]; k];
        for (p, &c) in points.iter().zip(&assign) {
            sums[c][0] += p[0];
            sums[c][1] += p[1];
            sums[c][2] += 1.0;
        }
        for (c, s) in centers.iter_mut().zip(&sums) {
            if s[2] > 0.0 {
                *c = [s[0] / s[2], s[1] / s[2]];
            }
        }
    }

    let mut renumber = BTreeMap::new();
    Ok(assign
        .into_iter()
        .map(|c| {
            let next = renumber.len();
            *renumber.entry(c).or_insert(next)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub word: String,
    pub position: usize,
    pub magnitude: f64,
    pub intensity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapPayload {
    pub doc_id: String,
    pub entries: Vec<HeatmapEntry>,
}

fn aligned<'a>(tmap: &TangentMap, seq: &'a TokenSequence) -> Result<&'a TokenSequence, CloudError> {
    if tmap.doc_id != seq.doc_id || tmap.magnitudes.len() != seq.tokens.len() {
        return Err(CloudError::Alignment {
            doc_id: tmap.doc_id.clone(),
            detail: format!("{} magnitudes for {} tokens of {:?}", tmap.magnitudes.len(), seq.tokens.len(), seq.doc_id),
        });
    }
    Ok(seq)
}

/// Magnitudes in token order with intensities scaled by the document maximum.
pub fn heatmap_payload(tmap: &TangentMap, seq: &TokenSequence) -> Result<HeatmapPayload, CloudError> {
    let seq = aligned(tmap, seq)?;
    let max = tmap.magnitudes.iter().cloned().fold(0.0, f64::max);
    let entries = seq
        .tokens
        .iter()
        .zip(&tmap.magnitudes)
        .map(|(tok, &magnitude)| HeatmapEntry {
            word: tok.word.clone(),
            position: tok.position,
            magnitude,
            intensity: if max > 0.0 { magnitude / max } else { 0.0 },
        })
        .collect();
    Ok(HeatmapPayload { doc_id: tmap.doc_id.clone(), entries })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub word: String,
    pub magnitude: f64,
}

/// The single most impactful instance of every document.
pub fn marker_payload(tmaps: &[TangentMap], seqs: &[TokenSequence], points: &[[f64; 2]]) -> Result<Vec<Marker>, CloudError> {
    if tmaps.len() != seqs.len() || tmaps.len() != points.len() {
        return Err(CloudError::Alignment {
            doc_id: String::new(),
            detail: format!("{} tangent maps, {} sequences, {} points", tmaps.len(), seqs.len(), points.len()),
        });
    }
    tmaps
        .iter()
        .zip(seqs)
        .zip(points)
        .map(|((tmap, seq), point)| {
            let seq = aligned(tmap, seq)?;
            let mut best = 0;
            for (j, m) in tmap.magnitudes.iter().enumerate() {
                if *m > tmap.magnitudes[best] {
                    best = j;
                }
            }
            Ok(Marker {
                id: tmap.doc_id.clone(),
                x: point[0],
                y: point[1],
                word: seq.tokens[best].word.clone(),
                magnitude: tmap.magnitudes[best],
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attribution::{Reduction, ScoreSource};
    use crate::corpus::Token;

    fn ws(doc: &str, pos: usize, word: &str, score: f64) -> WordScore {
        WordScore { doc_id: doc.into(), position: pos, word: word.into(), score, source: ScoreSource::Gradient }
    }

    fn doc(id: &str, point: [f64; 2], words: &[(&str, f64)]) -> DocTopWords {
        DocTopWords { doc_id: id.into(), point, top: words.iter().enumerate().map(|(i, (w, s))| ws(id, i, w, *s)).collect() }
    }

    fn labels(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn palette() -> Palette {
        Palette::default_for(["sport", "tech"])
    }

    #[test]
    fn top_k_orders_and_breaks_ties() {
        let s = vec![ws("a", 0, "x", 5.0), ws("a", 1, "y", 3.0), ws("a", 2, "z", 9.0)];
        assert_eq!(top_k_words(&s, 2).iter().map(|w| w.position).collect::<Vec<_>>(), vec![2, 0]);

        let s = vec![ws("a", 0, "w", 1.0), ws("a", 1, "x", 4.0), ws("a", 2, "y", 2.0), ws("a", 3, "z", 4.0)];
        assert_eq!(top_k_words(&s, 4).iter().map(|w| w.position).collect::<Vec<_>>(), vec![1, 3, 2, 0]);

        let five: Vec<_> = (0..5).map(|i| ws("a", i, "w", i as f64)).collect();
        assert_eq!(top_k_words(&five, DEFAULT_TOP_K).len(), 5);
    }

    #[test]
    fn grouping_counts_instances_per_doc() {
        let groups = group_by_word(&[
            doc("A", [0.0, 0.0], &[("tennis", 1.0), ("match", 0.5), ("tennis", 0.4)]),
            doc("B", [1.0, 0.0], &[("tennis", 2.0), ("game", 1.0)]),
        ]);
        let tennis = groups.iter().find(|g| g.word == "tennis").unwrap();
        assert_eq!(tennis.members.len(), 2);
        assert_eq!((tennis.members[0].doc_id.as_str(), tennis.members[0].count), ("A", 2));
        assert_eq!(tennis.total_score, 3.4);
        assert_eq!(groups.len(), 3);
        assert!(group_by_word(&[]).is_empty());
    }

    fn group(members: &[(&str, usize, [f64; 2])]) -> WordGroup {
        WordGroup {
            word: "w".into(),
            members: members.iter().map(|(d, c, p)| GroupMember { doc_id: d.to_string(), count: *c, point: *p }).collect(),
            total_score: 1.0,
        }
    }

    #[test]
    fn centroid_examples() {
        assert_eq!(weighted_centroid(&group(&[("a", 1, [0.0, 0.0]), ("b", 3, [4.0, 0.0])])), [3.0, 0.0]);
        assert_eq!(weighted_centroid(&group(&[("a", 2, [1.5, -2.0])])), [1.5, -2.0]);
        assert_eq!(weighted_centroid(&group(&[("a", 1, [0.0, 0.0]), ("b", 1, [2.0, 2.0])])), [1.0, 1.0]);
    }

    #[test]
    fn singletons_are_filtered() {
        let groups = group_by_word(&[doc("A", [0.0, 0.0], &[("solo", 3.0)]), doc("B", [1.0, 1.0], &[("pair", 1.0)]), doc("C", [3.0, 1.0], &[("pair", 1.0)])]);
        let cloud = build_cloud(&groups, &labels(&[("A", "sport"), ("B", "sport"), ("C", "sport")]), &palette()).unwrap();
        assert_eq!(cloud.iter().map(|c| c.word.as_str()).collect::<Vec<_>>(), vec!["pair"]);
        assert_eq!((cloud[0].x, cloud[0].y, cloud[0].size), (2.0, 1.0, 2.0));
    }

    #[test]
    fn coinciding_groups_keep_strongest() {
        let groups = group_by_word(&[doc("A", [0.0, 0.0], &[("alpha", 2.0), ("beta", 3.0), ("alpha", 1.0), ("beta", 2.5)])]);
        let cloud = build_cloud(&groups, &labels(&[("A", "tech")]), &palette()).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud[0].word, "beta");
        assert_eq!(cloud[0].color, palette().colors["tech"]);
    }

    #[test]
    fn mixed_labels_are_purple() {
        let groups = group_by_word(&[doc("A", [0.0, 0.0], &[("data", 1.0)]), doc("B", [2.0, 0.0], &[("data", 1.0)])]);
        let cloud = build_cloud(&groups, &labels(&[("A", "sport"), ("B", "tech")]), &palette()).unwrap();
        assert_eq!(cloud[0].color, "#800080");
    }

    #[test]
    fn missing_palette_entry_is_an_error() {
        let groups = group_by_word(&[doc("A", [0.0, 0.0], &[("data", 1.0), ("data", 1.0)])]);
        let err = build_cloud(&groups, &labels(&[("A", "health")]), &palette()).unwrap_err();
        assert!(matches!(err, CloudError::MissingColor(l) if l == "health"));
        assert!(matches!(build_cloud(&groups, &labels(&[]), &palette()), Err(CloudError::MissingLabel(_))));
    }

    #[test]
    fn palette_json_mixed_override() {
        let p = Palette::from_json(r##"{"sport":"#00ff00","mixed":"#111111"}"##).unwrap();
        assert_eq!(p.mixed, "#111111");
        assert_eq!(p.colors.len(), 1);
        assert_eq!(Palette::from_json(r##"{"a":"#000000"}"##).unwrap().mixed, DEFAULT_MIXED_COLOR);
    }

    #[test]
    fn subdivision_splits_distant_members() {
        let docs = [
            doc("A", [0.0, 0.0], &[("w", 1.0)]),
            doc("B", [0.5, 0.0], &[("w", 1.0)]),
            doc("C", [10.0, 0.0], &[("w", 1.0)]),
            doc("D", [10.5, 0.0], &[("w", 2.0)]),
        ];
        let scores: Vec<WordScore> = docs.iter().flat_map(|d| d.top.clone()).collect();
        let groups = subdivide(&group_by_word(&docs), 1.0, &scores);
        assert_eq!(groups.len(), 2);
        assert_eq!(weighted_centroid(&groups[0]), [0.25, 0.0]);
        assert_eq!(groups[1].total_score, 3.0);
    }

    #[test]
    fn font_mapping_is_affine() {
        assert_eq!(font_size(1.0, 1.0, 3.0), 10.0);
        assert_eq!(font_size(3.0, 1.0, 3.0), 36.0);
        assert_eq!(font_size(2.0, 1.0, 3.0), 23.0);
        assert_eq!(font_size(5.0, 5.0, 5.0), 23.0);
    }

    #[test]
    fn pseudo_labels_separate_blobs() {
        let pts = [[0.05, -0.02], [-0.1, 0.08], [0.0, 0.1], [10.0, 10.1], [9.95, 10.0], [10.08, 9.9]];
        let l = pseudo_labels(&pts, 2, 3).unwrap();
        assert!(l[0] == l[1] && l[1] == l[2]);
        assert!(l[3] == l[4] && l[4] == l[5]);
        assert_ne!(l[0], l[3]);
        assert_eq!(l, pseudo_labels(&pts, 2, 3).unwrap());

        let all = pseudo_labels(&pts, pts.len(), 1).unwrap();
        assert_eq!(all.iter().collect::<HashSet<_>>().len(), pts.len());
        assert!(matches!(pseudo_labels(&pts, 7, 0), Err(CloudError::TooManyClusters { .. })));
    }

    fn tmap(id: &str, mags: &[f64]) -> TangentMap {
        TangentMap {
            doc_id: id.into(),
            d: mags.len(),
            e: 1,
            jacobian: vec![0.0; 2 * mags.len()],
            impact_vectors: mags.iter().map(|m| [*m, 0.0]).collect(),
            magnitudes: mags.to_vec(),
            reduction: Reduction::GradTimesInput,
        }
    }

    fn seq(id: &str, words: &[&str]) -> TokenSequence {
        TokenSequence { doc_id: id.into(), tokens: words.iter().enumerate().map(|(i, w)| Token { word: w.to_string(), position: i }).collect() }
    }

    #[test]
    fn heatmap_examples() {
        let h = heatmap_payload(&tmap("a", &[2.0, 4.0]), &seq("a", &["x", "y"])).unwrap();
        assert_eq!(h.entries.iter().map(|e| e.intensity).collect::<Vec<_>>(), vec![0.5, 1.0]);
        let h = heatmap_payload(&tmap("a", &[0.0, 0.0]), &seq("a", &["x", "y"])).unwrap();
        assert!(h.entries.iter().all(|e| e.intensity == 0.0));
        let h = heatmap_payload(&tmap("a", &[1.0, 3.0, 2.0]), &seq("a", &["go", "go", "go"])).unwrap();
        assert_eq!(h.entries.iter().map(|e| e.position).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(heatmap_payload(&tmap("a", &[1.0]), &seq("a", &["x", "y"])).is_err());
    }

    #[test]
    fn marker_examples() {
        let m = marker_payload(
            &[tmap("a", &[5.0, 9.0]), tmap("b", &[4.0, 4.0])],
            &[seq("a", &["cat", "dog"]), seq("b", &["left", "right"])],
            &[[0.0, 1.0], [2.0, 3.0]],
        )
        .unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!((m[0].word.as_str(), m[0].magnitude), ("dog", 9.0));
        assert_eq!(m[1].word, "left");
        assert_eq!((m[1].x, m[1].y), (2.0, 3.0));
    }
}
