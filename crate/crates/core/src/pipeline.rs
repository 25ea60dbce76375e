//! End-to-end runs: corpus → tokens → encode → project → attribute → cloud,
//! plus the self-contained run artifact and its JSON/SVG exports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{attention_scores, gradient_scores, tangent_map, AttributionError, Reduction, TangentMap, WordScore};
use crate::cloud::{
    build_cloud, font_size, group_by_word, heatmap_payload, marker_payload, pseudo_labels, subdivide, top_k_words, CloudEntry, CloudError,
    DocTopWords, HeatmapEntry, Marker, Palette, DEFAULT_TOP_K,
};
use crate::corpus::{load_corpus, load_stopwords, load_word_vectors, resolve, tokenize, CorpusError, Document, OovPolicy, TokenSequence, WordVectorTable};
use crate::encoder::{encode, init_params, load_params, EncodeResult, EncoderConfig, EncoderError, EncoderKind};
use crate::engine::{EngineError, Graph, ValueRef};
use crate::projector::{project, MdsConfig, ProjectorConfig, ProjectorError, ProjectorKind, TsneConfig};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scoring {
    #[default]
    Gradient,
    Attention,
}

impl Scoring {
    pub fn as_str(self) -> &'static str {
        match self {
            Scoring::Gradient => "gradient",
            Scoring::Attention => "attention",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "gradient" => Some(Scoring::Gradient),
            "attention" => Some(Scoring::Attention),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderSettings {
    pub kind: EncoderKind,
    /// Output width; defaults to the word vector width.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub h: Option<usize>,
    /// JSON attention weights; seeded random weights when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub params_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorSettings {
    pub kind: ProjectorKind,
    pub mds: MdsConfig,
    pub tsne: TsneConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CloudSettings {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub palette_path: Option<PathBuf>,
    /// Cluster count for pseudo-labels when the corpus is not fully labeled.
    pub pseudo_label_k: usize,
    /// Single-linkage split distance for word groups; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subdivide_tau: Option<f64>,
}

impl Default for CloudSettings {
    fn default() -> Self {
        Self { palette_path: None, pseudo_label_k: 2, subdivide_tau: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub corpus_path: PathBuf,
    pub vectors_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopwords_path: Option<PathBuf>,
    #[serde(default)]
    pub encoder: EncoderSettings,
    #[serde(default)]
    pub projector: ProjectorSettings,
    #[serde(default)]
    pub scoring: Scoring,
    #[serde(default)]
    pub reduction: Reduction,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub cloud: CloudSettings,
    #[serde(default)]
    pub oov_policy: OovPolicy,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl PipelineConfig {
    pub fn new(corpus_path: impl Into<PathBuf>, vectors_path: impl Into<PathBuf>) -> Self {
        Self {
            corpus_path: corpus_path.into(),
            vectors_path: vectors_path.into(),
            stopwords_path: None,
            encoder: EncoderSettings::default(),
            projector: ProjectorSettings::default(),
            scoring: Scoring::default(),
            reduction: Reduction::default(),
            top_k: DEFAULT_TOP_K,
            cloud: CloudSettings::default(),
            oov_policy: OovPolicy::default(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }

    /// Parse JSON and resolve relative paths against `base`.
    pub fn from_json(text: &str, base: &Path) -> Result<Self, PipelineError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| PipelineError::config(format!("invalid config: {e}")))?;
        Ok(cfg.resolved(base))
    }

    /// Read a config file; relative paths are taken relative to its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_json(&text, &base)
    }

    pub fn resolved(mut self, base: &Path) -> Self {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.corpus_path);
        fix(&mut self.vectors_path);
        fix(&mut self.output_dir);
        self.stopwords_path.as_mut().map(fix);
        self.encoder.params_path.as_mut().map(fix);
        self.cloud.palette_path.as_mut().map(fix);
        self
    }

    pub fn projector_config(&self) -> ProjectorConfig {
        ProjectorConfig { kind: self.projector.kind, seed: self.seed, mds: self.projector.mds.clone(), tsne: self.projector.tsne.clone() }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let mut required = vec![("corpus_path", &self.corpus_path), ("vectors_path", &self.vectors_path)];
        required.extend(self.stopwords_path.iter().map(|p| ("stopwords_path", p)));
        required.extend(self.encoder.params_path.iter().map(|p| ("encoder.params_path", p)));
        required.extend(self.cloud.palette_path.iter().map(|p| ("cloud.palette_path", p)));
        for (field, path) in required {
            if !path.is_file() {
                return Err(PipelineError::config(format!("{field} {} does not exist", path.display())));
            }
        }
        if self.top_k == 0 {
            return Err(PipelineError::config("top_k must be at least 1"));
        }
        if self.cloud.pseudo_label_k == 0 {
            return Err(PipelineError::config("cloud.pseudo_label_k must be at least 1"));
        }
        if self.scoring == Scoring::Attention && self.encoder.kind != EncoderKind::TinyAttention {
            return Err(PipelineError::config("attention scoring requires the tiny_attention encoder"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Config,
    Corpus,
    Encoder,
    Projector,
    Attribution,
    Cloud,
    Export,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Corpus => "corpus",
            Stage::Encoder => "encoder",
            Stage::Projector => "projector",
            Stage::Attribution => "attribution",
            Stage::Cloud => "cloud",
            Stage::Export => "export",
        };
        f.write_str(name)
    }
}

/// Coarse failure class; decides the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureClass {
    Config,
    Data,
    Numeric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineError {
    pub stage: Stage,
    pub doc_id: Option<String>,
    pub class: FailureClass,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage", self.stage)?;
        if let Some(id) = &self.doc_id {
            write!(f, " (document {id:?})")?;
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn new(stage: Stage, class: FailureClass, message: impl Into<String>) -> Self {
        Self { stage, doc_id: None, class, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Stage::Config, FailureClass::Config, message)
    }

    fn doc(mut self, id: &str) -> Self {
        self.doc_id = Some(id.to_string());
        self
    }

    /// 2 config, 3 data, 4 numeric.
    pub fn exit_code(&self) -> i32 {
        match self.class {
            FailureClass::Config => 2,
            FailureClass::Data => 3,
            FailureClass::Numeric => 4,
        }
    }
}

impl From<(Stage, EngineError)> for PipelineError {
    fn from((stage, e): (Stage, EngineError)) -> Self {
        Self::new(stage, FailureClass::Numeric, e.to_string())
    }
}

impl From<CorpusError> for PipelineError {
    fn from(e: CorpusError) -> Self {
        let class = if matches!(e, CorpusError::Engine(_)) { FailureClass::Numeric } else { FailureClass::Data };
        Self::new(Stage::Corpus, class, e.to_string())
    }
}

impl From<EncoderError> for PipelineError {
    fn from(e: EncoderError) -> Self {
        let class = match e {
            EncoderError::EmptyDocument => FailureClass::Data,
            EncoderError::Engine(_) => FailureClass::Numeric,
            _ => FailureClass::Config,
        };
        Self::new(Stage::Encoder, class, e.to_string())
    }
}

impl From<ProjectorError> for PipelineError {
    fn from(e: ProjectorError) -> Self {
        let class = match e {
            ProjectorError::TooFewPoints { .. } => FailureClass::Data,
            ProjectorError::Perplexity { .. } | ProjectorError::Config(_) => FailureClass::Config,
            ProjectorError::Calibration { .. } | ProjectorError::Engine(_) => FailureClass::Numeric,
        };
        Self::new(Stage::Projector, class, e.to_string())
    }
}

impl From<AttributionError> for PipelineError {
    fn from(e: AttributionError) -> Self {
        let class = if matches!(e, AttributionError::NoAttention) { FailureClass::Config } else { FailureClass::Numeric };
        Self::new(Stage::Attribution, class, e.to_string())
    }
}

impl From<CloudError> for PipelineError {
    fn from(e: CloudError) -> Self {
        let class = match e {
            CloudError::MissingLabel(_) => FailureClass::Data,
            CloudError::Alignment { .. } => FailureClass::Numeric,
            _ => FailureClass::Config,
        };
        Self::new(Stage::Cloud, class, e.to_string())
    }
}

/// Everything loaded from disk and fixed before the differentiable forward pass.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub config: PipelineConfig,
    pub documents: Vec<Document>,
    pub sequences: Vec<TokenSequence>,
    pub table: WordVectorTable,
    pub encoder: EncoderConfig,
    pub projector: ProjectorConfig,
}

/// Output of one forward pass over the whole corpus on a single graph.
#[derive(Debug, Clone)]
pub struct Forward {
    /// Surviving tokens per document, aligned with the leaf rows.
    pub sequences: Vec<TokenSequence>,
    pub leaves: Vec<ValueRef>,
    pub encodings: Vec<EncodeResult>,
    pub projection: crate::projector::Projection,
}

impl Prepared {
    pub fn load(config: &PipelineConfig) -> Result<Self, PipelineError> {
        config.validate()?;
        let documents = load_corpus(&config.corpus_path)?;
        let stopwords = config.stopwords_path.as_ref().map(load_stopwords).transpose()?;
        let table = load_word_vectors(&config.vectors_path)?;
        Self::from_parts(config.clone(), documents, stopwords.as_ref(), table)
    }

    /// Build from in-memory inputs; paths in `config` are not read.
    pub fn from_parts(
        config: PipelineConfig,
        documents: Vec<Document>,
        stopwords: Option<&std::collections::HashSet<String>>,
        table: WordVectorTable,
    ) -> Result<Self, PipelineError> {
        let sequences = documents
            .iter()
            .map(|d| tokenize(d, stopwords).map_err(|e| PipelineError::from(e).doc(&d.id)))
            .collect::<Result<Vec<_>, _>>()?;
        let e = table.dim();
        let h = config.encoder.h.unwrap_or(e);
        let mut encoder = init_params(config.encoder.kind, e, h, config.seed)?;
        if let Some(path) = &config.encoder.params_path {
            encoder.params = Some(load_params(path, &encoder)?);
        }
        let projector = config.projector_config();
        Ok(Self { config, documents, sequences, table, encoder, projector })
    }

    /// Resolve, encode, stack and project every document on `graph`.
    pub fn forward(&self, graph: &mut Graph) -> Result<Forward, PipelineError> {
        self.forward_with(graph, &self.projector)
    }

    pub fn forward_with(&self, graph: &mut Graph, projector: &ProjectorConfig) -> Result<Forward, PipelineError> {
        let n = self.sequences.len();
        let mut sequences = Vec::with_capacity(n);
        let mut leaves = Vec::with_capacity(n);
        let mut encodings = Vec::with_capacity(n);
        for seq in &self.sequences {
            let resolved = resolve(seq, &self.table, self.config.oov_policy, graph).map_err(|e| PipelineError::from(e).doc(&seq.doc_id))?;
            let enc = encode(graph, resolved.leaves, &self.encoder).map_err(|e| PipelineError::from(e).doc(&seq.doc_id))?;
            sequences.push(TokenSequence { doc_id: resolved.doc_id, tokens: resolved.tokens });
            leaves.push(resolved.leaves);
            encodings.push(enc);
        }
        let embeddings: Vec<ValueRef> = encodings.iter().map(|e| e.embedding).collect();
        let stacked = graph.stack(&embeddings).map_err(|e| PipelineError::from((Stage::Encoder, e)))?;
        let projection = project(graph, stacked, projector)?;
        Ok(Forward { sequences, leaves, encodings, projection })
    }

    /// One tangent map per document: 2 backward passes each.
    pub fn tangent_maps(&self, graph: &mut Graph, fwd: &Forward) -> Result<Vec<TangentMap>, PipelineError> {
        let mut outputs = Vec::with_capacity(fwd.leaves.len());
        for i in 0..fwd.leaves.len() {
            let vx = graph.select(fwd.projection.coords, i, 0).map_err(|e| PipelineError::from((Stage::Attribution, e)))?;
            let vy = graph.select(fwd.projection.coords, i, 1).map_err(|e| PipelineError::from((Stage::Attribution, e)))?;
            outputs.push([vx, vy]);
        }
        let graph = &*graph;
        (0..fwd.leaves.len())
            .into_par_iter()
            .map(|i| {
                let id = &fwd.sequences[i].doc_id;
                tangent_map(graph, id, &fwd.leaves[i], outputs[i], self.config.reduction).map_err(|e| PipelineError::from(e).doc(id))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedDoc {
    pub id: String,
    pub x: f64,
    pub y: f64,
    /// Label used for coloring: the corpus label, or `cluster-<k>` when the
    /// corpus is not fully labeled.
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Traces {
    pub projector: ProjectorKind,
    /// Stress per iteration for MDS, KL divergence for t-SNE.
    pub values: Vec<f64>,
    pub executed_iterations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigmas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Timing {
    pub forward_ms: f64,
    pub forward_untracked_ms: f64,
    pub backward_ms: f64,
    /// `forward_ms / forward_untracked_ms`.
    pub overhead_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub documents: usize,
    pub backward_passes: usize,
    pub pseudo_labels: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunArtifact {
    pub schema_version: u32,
    pub config: PipelineConfig,
    pub projection: Vec<ProjectedDoc>,
    pub heatmaps: BTreeMap<String, Vec<HeatmapEntry>>,
    pub markers: Vec<Marker>,
    /// Cloud for the configured scoring.
    pub cloud: Vec<CloudEntry>,
    /// Every scoring the encoder supports.
    pub clouds: BTreeMap<Scoring, Vec<CloudEntry>>,
    pub palette: Palette,
    pub traces: Traces,
    pub stats: RunStats,
    pub timing: Timing,
}

fn millis(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<RunArtifact, PipelineError> {
    run_prepared(&Prepared::load(config)?)
}

pub fn run_prepared(prep: &Prepared) -> Result<RunArtifact, PipelineError> {
    let cfg = &prep.config;
    if cfg.scoring == Scoring::Attention && prep.encoder.kind != EncoderKind::TinyAttention {
        return Err(AttributionError::NoAttention.into());
    }

    let mut graph = Graph::new();
    let start = Instant::now();
    let fwd = prep.forward(&mut graph)?;
    let forward_ms = millis(start);

    let start = Instant::now();
    prep.forward(&mut Graph::untracked())?;
    let forward_untracked_ms = millis(start);

    let start = Instant::now();
    let tmaps = prep.tangent_maps(&mut graph, &fwd)?;
    let backward_ms = millis(start);

    let points = fwd.projection.points(&graph);
    let n = points.len();

    let (labels, pseudo) = if prep.documents.iter().all(|d| d.label.is_some()) {
        (prep.documents.iter().map(|d| d.label.clone().unwrap_or_default()).collect::<Vec<_>>(), false)
    } else {
        let k = cfg.cloud.pseudo_label_k.min(n);
        (pseudo_labels(&points, k, cfg.seed)?.into_iter().map(|c| format!("cluster-{c}")).collect(), true)
    };
    let label_map: BTreeMap<String, String> = prep.documents.iter().map(|d| d.id.clone()).zip(labels.iter().cloned()).collect();
    let palette = match &cfg.cloud.palette_path {
        Some(path) => Palette::load(path)?,
        None => Palette::default_for(labels.iter().map(String::as_str)),
    };

    let mut clouds = BTreeMap::new();
    clouds.insert(Scoring::Gradient, cloud_for(cfg, &gradient_scores(&tmaps, &fwd.sequences)?, &fwd.sequences, &points, &label_map, &palette)?);
    if prep.encoder.kind == EncoderKind::TinyAttention {
        let scores = attention_scores(&fwd.encodings, &fwd.sequences)?;
        clouds.insert(Scoring::Attention, cloud_for(cfg, &scores, &fwd.sequences, &points, &label_map, &palette)?);
    }

    let heatmaps = tmaps
        .iter()
        .zip(&fwd.sequences)
        .map(|(t, s)| Ok((t.doc_id.clone(), heatmap_payload(t, s)?.entries)))
        .collect::<Result<BTreeMap<_, _>, CloudError>>()?;
    let markers = marker_payload(&tmaps, &fwd.sequences, &points)?;
    let projection = fwd
        .sequences
        .iter()
        .zip(&points)
        .zip(&labels)
        .map(|((s, p), label)| ProjectedDoc { id: s.doc_id.clone(), x: p[0], y: p[1], label: label.clone() })
        .collect();

    Ok(RunArtifact {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        projection,
        heatmaps,
        markers,
        cloud: clouds[&cfg.scoring].clone(),
        clouds,
        palette,
        traces: Traces {
            projector: prep.projector.kind,
            values: fwd.projection.trace.clone(),
            executed_iterations: fwd.projection.executed_iterations,
            sigmas: fwd.projection.sigmas.clone(),
        },
        stats: RunStats { documents: n, backward_passes: graph.backward_passes(), pseudo_labels: pseudo },
        timing: Timing {
            forward_ms,
            forward_untracked_ms,
            backward_ms,
            overhead_ratio: if forward_untracked_ms > 0.0 { forward_ms / forward_untracked_ms } else { 1.0 },
        },
    })
}

fn cloud_for(
    cfg: &PipelineConfig,
    scores: &[WordScore],
    seqs: &[TokenSequence],
    points: &[[f64; 2]],
    labels: &BTreeMap<String, String>,
    palette: &Palette,
) -> Result<Vec<CloudEntry>, PipelineError> {
    let docs: Vec<DocTopWords> = seqs
        .iter()
        .zip(points)
        .map(|(s, p)| {
            let own: Vec<WordScore> = scores.iter().filter(|w| w.doc_id == s.doc_id).cloned().collect();
            DocTopWords { doc_id: s.doc_id.clone(), point: *p, top: top_k_words(&own, cfg.top_k) }
        })
        .collect();
    let mut groups = group_by_word(&docs);
    if let Some(tau) = cfg.cloud.subdivide_tau {
        let top: Vec<WordScore> = docs.iter().flat_map(|d| d.top.iter().cloned()).collect();
        groups = subdivide(&groups, tau, &top);
    }
    Ok(build_cloud(&groups, labels, palette)?)
}

impl RunArtifact {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        serde_json::from_str(text).map_err(|e| PipelineError::new(Stage::Export, FailureClass::Data, format!("invalid artifact: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::new(Stage::Export, FailureClass::Data, format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// JSON with the timing block zeroed; equal runs give equal strings.
    pub fn deterministic_json(&self) -> String {
        let mut copy = self.clone();
        copy.timing = Timing::default();
        copy.to_json()
    }

    pub fn cloud_for(&self, scoring: Scoring) -> Option<&[CloudEntry]> {
        self.clouds.get(&scoring).map(Vec::as_slice)
    }
}

fn write_file(path: &Path, content: &str) -> Result<(), PipelineError> {
    fs::write(path, content).map_err(|e| PipelineError::new(Stage::Export, FailureClass::Data, format!("cannot write {}: {e}", path.display())))
}

pub fn export_json(artifact: &RunArtifact, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    write_file(path.as_ref(), &artifact.to_json())
}

pub fn export_svg(artifact: &RunArtifact, path: impl AsRef<Path>) -> Result<(), PipelineError> {
    write_file(path.as_ref(), &render_svg(artifact))
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 600.0;
const SVG_MARGIN: f64 = 40.0;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Static scatter plot: one dot per document, one text element per cloud word.
pub fn render_svg(artifact: &RunArtifact) -> String {
    let xs = artifact.projection.iter().map(|p| p.x);
    let ys = artifact.projection.iter().map(|p| p.y);
    let (x0, x1) = xs.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let (y0, y1) = ys.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let sx = |x: f64| SVG_MARGIN + (x - x0) / span(x0, x1) * (SVG_WIDTH - 2.0 * SVG_MARGIN);
    let sy = |y: f64| SVG_HEIGHT - SVG_MARGIN - (y - y0) / span(y0, y1) * (SVG_HEIGHT - 2.0 * SVG_MARGIN);

    let mut out = format!("<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n");
    out.push_str(&format!("<rect width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" fill=\"white\"/>\n"));
    for p in &artifact.projection {
        let color = artifact.palette.colors.get(&p.label).map(String::as_str).unwrap_or("#444444");
        out.push_str(&format!("<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{}\" fill-opacity=\"0.6\"/>\n", sx(p.x), sy(p.y), xml_escape(color)));
    }
    let (lo, hi) = artifact.cloud.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), c| (a.min(c.size), b.max(c.size)));
    for c in &artifact.cloud {
        out.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{:.2}\" font-size=\"{:.1}pt\" fill=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\">{}</text>\n",
            sx(c.x),
            sy(c.y),
            font_size(c.size, lo, hi),
            xml_escape(&c.color),
            xml_escape(&c.word)
        ));
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scoring_a: Scoring,
    pub scoring_b: Scoring,
    pub sources_match: bool,
    pub jaccard: f64,
    pub shared: Vec<String>,
    pub only_in_a: Vec<String>,
    pub only_in_b: Vec<String>,
    /// `size_b - size_a` for each shared word.
    pub size_deltas: BTreeMap<String, f64>,
}

/// Compare the primary clouds of two runs over the same corpus.
pub fn compare(a: &RunArtifact, b: &RunArtifact) -> Result<Comparison, PipelineError> {
    let ids = |r: &RunArtifact| r.projection.iter().map(|p| p.id.clone()).collect::<BTreeSet<_>>();
    if ids(a) != ids(b) {
        return Err(PipelineError::new(Stage::Export, FailureClass::Data, "artifacts cover different document sets"));
    }
    // A word may occur more than once only with subdivision; sizes are summed then.
    let sizes = |cloud: &[CloudEntry]| {
        let mut m: BTreeMap<String, f64> = BTreeMap::new();
        for c in cloud {
            *m.entry(c.word.clone()).or_default() += c.size;
        }
        m
    };
    let (sa, sb) = (sizes(&a.cloud), sizes(&b.cloud));
    let shared: Vec<String> = sa.keys().filter(|w| sb.contains_key(*w)).cloned().collect();
    let only_in_a: Vec<String> = sa.keys().filter(|w| !sb.contains_key(*w)).cloned().collect();
    let only_in_b: Vec<String> = sb.keys().filter(|w| !sa.contains_key(*w)).cloned().collect();
    let union = shared.len() + only_in_a.len() + only_in_b.len();
    let jaccard = if union == 0 { 1.0 } else { shared.len() as f64 / union as f64 };
    let size_deltas = shared.iter().map(|w| (w.clone(), sb[w] - sa[w])).collect();
    Ok(Comparison {
        scoring_a: a.config.scoring,
        scoring_b: b.config.scoring,
        sources_match: a.config.scoring == b.config.scoring,
        jaccard,
        shared,
        only_in_a,
        only_in_b,
        size_deltas,
    })
}
