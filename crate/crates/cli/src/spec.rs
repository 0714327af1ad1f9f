//! Declarative experiment specifications and their static validation.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use tslab_core::data::{SplitSpec, SynthFamily};
use tslab_core::init::TextProxySpec;
use tslab_core::model::ModelConfig;
use tslab_core::scaling::{FittedLaw, ScalingLawParams};
use tslab_core::train::{TrainConfig, Variant};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ThreeGptComparison,
    EncoderBias,
    ZeroShotSuite,
    FewShotSuite,
    VocabAlignment,
    FinetuneFromPretrained,
    QuantifySamples,
    LinearBaseline,
    ScalingFit,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ThreeGptComparison => "three_gpt_comparison",
            ExperimentKind::EncoderBias => "encoder_bias",
            ExperimentKind::ZeroShotSuite => "zero_shot_suite",
            ExperimentKind::FewShotSuite => "few_shot_suite",
            ExperimentKind::VocabAlignment => "vocab_alignment",
            ExperimentKind::FinetuneFromPretrained => "finetune_from_pretrained",
            ExperimentKind::QuantifySamples => "quantify_samples",
            ExperimentKind::LinearBaseline => "linear_baseline",
            ExperimentKind::ScalingFit => "scaling_fit",
        }
    }

    fn needs_corpus(self) -> bool {
        !matches!(self, ExperimentKind::EncoderBias | ExperimentKind::ScalingFit)
    }

    fn needs_datasets(self) -> bool {
        self != ExperimentKind::ScalingFit
    }

    fn trains_models(self) -> bool {
        self != ExperimentKind::ScalingFit
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    #[default]
    Desk,
    Full,
    Tiny,
}

impl Preset {
    pub fn config(self) -> ModelConfig {
        match self {
            Preset::Desk => ModelConfig::desk(),
            Preset::Full => ModelConfig::full(),
            Preset::Tiny => ModelConfig::tiny(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        family: SynthFamily,
        n_series: usize,
        length: usize,
        #[serde(default)]
        seed: u64,
    },
    Csv {
        path: PathBuf,
        /// Value columns; empty selects every non-date column.
        #[serde(default)]
        columns: Vec<String>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    #[serde(flatten)]
    pub source: DataSource,
    #[serde(default)]
    pub split: SplitSpec,
    /// Window stride; defaults to the horizon.
    #[serde(default)]
    pub stride: Option<usize>,
}

/// Synthetic pre-training corpus of single-window series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSpec {
    pub families: Vec<SynthFamily>,
    pub n_windows: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantedSpec {
    pub law: FittedLaw,
    #[serde(default = "default_planted_n")]
    pub n_observations: usize,
    /// Relative standard deviation of multiplicative loss noise.
    #[serde(default)]
    pub noise: f64,
}

fn default_planted_n() -> usize {
    50
}

fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}

fn default_fraction() -> f64 {
    0.1
}

fn default_true() -> bool {
    true
}

fn default_prototypes() -> usize {
    64
}

fn default_corpus_sizes() -> Vec<usize> {
    vec![1_000, 4_000, 16_000, 64_000]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    #[serde(default)]
    pub preset: Preset,
    /// Replaces the preset architecture entirely.
    #[serde(default)]
    pub model: Option<ModelConfig>,
    /// Look-back length; defaults to seven patches.
    #[serde(default)]
    pub lookback: Option<usize>,
    /// Forecast horizon; defaults to one patch.
    #[serde(default)]
    pub horizon: Option<usize>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Corpus pre-training.
    #[serde(default)]
    pub train: TrainConfig,
    /// Per-dataset training and few-shot tuning.
    #[serde(default)]
    pub finetune: TrainConfig,
    #[serde(default)]
    pub text_proxy: TextProxySpec,
    #[serde(default)]
    pub corpus: Option<CorpusSpec>,
    #[serde(default)]
    pub datasets: Vec<DatasetSpec>,
    /// Variants compared by the zero-shot, few-shot and linear-baseline kinds.
    #[serde(default)]
    pub variants: Option<Vec<Variant>>,
    /// Variant used as the relative-error reference.
    #[serde(default)]
    pub reference: Option<Variant>,
    #[serde(default = "default_fraction")]
    pub few_shot_fraction: f64,
    /// Encoder-bias training sources (dataset names); defaults to all datasets.
    #[serde(default)]
    pub sources: Option<Vec<String>>,
    /// Encoder-bias evaluation dataset.
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default = "default_corpus_sizes")]
    pub corpus_sizes: Vec<usize>,
    #[serde(default = "default_prototypes")]
    pub adapter_prototypes: usize,
    #[serde(default)]
    pub observations: Option<PathBuf>,
    #[serde(default)]
    pub planted: Option<PlantedSpec>,
    /// Parameters for the optimal-horizon analytics of `scaling_fit`.
    #[serde(default)]
    pub horizon_params: Option<ScalingLawParams>,
    #[serde(default = "default_true")]
    pub save_checkpoints: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

/// One violated rule, naming the offending field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

/// Model architecture and window geometry resolved from a spec.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometry {
    pub model: ModelConfig,
    pub lookback: usize,
    pub horizon: usize,
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::SpecParse(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut spec = Self::from_json(&text)?;
        if let Some(dir) = path.parent() {
            spec.resolve_paths(dir);
        }
        Ok(spec)
    }

    /// Makes relative data paths relative to the spec file's directory.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for d in &mut self.datasets {
            if let DataSource::Csv { path, .. } = &mut d.source {
                fix(path);
            }
        }
        if let Some(p) = &mut self.observations {
            fix(p);
        }
    }

    pub fn geometry(&self) -> Geometry {
        let model = self.model.clone().unwrap_or_else(|| self.preset.config());
        let p = model.patch_size;
        Geometry {
            lookback: self.lookback.unwrap_or(7 * p),
            horizon: self.horizon.unwrap_or(p),
            model,
        }
    }

    pub fn variants_or(&self, default: &[Variant]) -> Vec<Variant> {
        self.variants.clone().unwrap_or_else(|| default.to_vec())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetSpec> {
        self.datasets.iter().find(|d| d.name == name)
    }

    /// Every violated rule; empty when the spec can run.
    pub fn validate(&self) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| {
            out.push(Diagnostic {
                field: field.to_string(),
                message,
            })
        };
        let kind = self.kind;
        if self.name.trim().is_empty() {
            bad("name", "must not be empty".into());
        }
        if self.seeds.is_empty() {
            bad("seeds", "at least one seed is required".into());
        }
        let g = self.geometry();
        if let Err(e) = g.model.validate() {
            bad("model", e.to_string());
        }
        let p = g.model.patch_size.max(1);
        if g.horizon == 0 || g.horizon % p != 0 {
            bad(
                "horizon",
                format!("horizon H = {} must be a positive multiple of patch size P = {p} (H % P == 0)", g.horizon),
            );
        }
        if g.lookback == 0 || g.lookback % p != 0 {
            bad(
                "lookback",
                format!("look-back L = {} must be a positive multiple of patch size P = {p}", g.lookback),
            );
        } else if g.horizon % p == 0 && (g.lookback + g.horizon) / p > g.model.max_tokens {
            bad(
                "lookback",
                format!(
                    "(L + H) / P = {} patches exceeds max_tokens = {}",
                    (g.lookback + g.horizon) / p,
                    g.model.max_tokens
                ),
            );
        }
        if kind.trains_models() {
            if let Err(e) = self.train.validate() {
                bad("train", e.to_string());
            }
            if let Err(e) = self.finetune.validate() {
                bad("finetune", e.to_string());
            }
            if let Err(e) = self.text_proxy.validate() {
                bad("text_proxy", e.to_string());
            }
        }

        if kind.needs_corpus() {
            match &self.corpus {
                None => bad("corpus", format!("{} requires a pre-training corpus", kind.name())),
                Some(c) => {
                    if c.families.is_empty() {
                        bad("corpus.families", "at least one family is required".into());
                    }
                    for (i, f) in c.families.iter().enumerate() {
                        if let Err(e) = f.validate() {
                            bad(&format!("corpus.families[{i}]"), e.to_string());
                        }
                    }
                    if c.n_windows < 2 {
                        bad("corpus.n_windows", "at least 2 windows are required".into());
                    }
                }
            }
        }

        if kind.needs_datasets() && self.datasets.is_empty() {
            bad("datasets", format!("{} requires at least one dataset", kind.name()));
        }
        for (i, d) in self.datasets.iter().enumerate() {
            let field = |f: &str| format!("datasets[{i}].{f}");
            if d.name.trim().is_empty() {
                bad(&field("name"), "must not be empty".into());
            }
            if self.datasets[..i].iter().any(|o| o.name == d.name) {
                bad(&field("name"), format!("duplicate dataset name '{}'", d.name));
            }
            if let Err(e) = d.split.validate() {
                bad(&field("split"), e.to_string());
            }
            if d.stride == Some(0) {
                bad(&field("stride"), "must be at least 1".into());
            }
            match &d.source {
                DataSource::Csv { path, .. } => {
                    if !path.is_file() {
                        bad(&field("path"), format!("dataset file '{}' does not exist", path.display()));
                    }
                }
                DataSource::Synthetic {
                    family,
                    n_series,
                    length,
                    ..
                } => {
                    if let Err(e) = family.validate() {
                        bad(&field("family"), e.to_string());
                    }
                    if *n_series == 0 {
                        bad(&field("n_series"), "at least one series is required".into());
                    }
                    let seg = d.split.segments(*length);
                    if seg.train.1 - seg.train.0 < g.lookback + g.horizon {
                        bad(
                            &field("length"),
                            format!("training segment is shorter than one window of L + H = {}", g.lookback + g.horizon),
                        );
                    }
                    if seg.test.1 - seg.test.0 < g.horizon || seg.val.1 - seg.val.0 < g.horizon {
                        bad(
                            &field("length"),
                            format!("validation and test segments must hold at least H = {} points", g.horizon),
                        );
                    }
                }
            }
        }

        match kind {
            ExperimentKind::EncoderBias => {
                match &self.target {
                    None => bad("target", "encoder_bias requires a target dataset".into()),
                    Some(t) if self.dataset(t).is_none() => bad("target", format!("unknown dataset '{t}'")),
                    _ => {}
                }
                if let Some(src) = &self.sources {
                    if src.is_empty() {
                        bad("sources", "at least one source dataset is required".into());
                    }
                    for s in src.iter().filter(|s| self.dataset(s).is_none()) {
                        bad("sources", format!("unknown dataset '{s}'"));
                    }
                }
            }
            ExperimentKind::FewShotSuite => {
                if !(self.few_shot_fraction > 0.0 && self.few_shot_fraction <= 1.0) {
                    bad("few_shot_fraction", format!("must be in (0, 1], got {}", self.few_shot_fraction));
                }
            }
            ExperimentKind::VocabAlignment => {
                if self.adapter_prototypes == 0 {
                    bad("adapter_prototypes", "at least one prototype is required".into());
                }
            }
            ExperimentKind::QuantifySamples => {
                if self.corpus_sizes.len() < 2 {
                    bad("corpus_sizes", "at least two corpus sizes are required".into());
                }
                if self.corpus_sizes.iter().any(|&n| n < 2) {
                    bad("corpus_sizes", "every corpus size must be at least 2".into());
                }
                if self.corpus_sizes.windows(2).any(|w| w[0] >= w[1]) {
                    bad("corpus_sizes", "sizes must be strictly increasing".into());
                }
            }
            ExperimentKind::ScalingFit => match (&self.observations, &self.planted) {
                (None, None) => bad("observations", "scaling_fit requires observations or planted".into()),
                (Some(_), Some(_)) => bad("planted", "give either observations or planted, not both".into()),
                (Some(p), None) if !p.is_file() => {
                    bad("observations", format!("observation file '{}' does not exist", p.display()))
                }
                (None, Some(pl)) => {
                    let l = pl.law;
                    if !(l.k2_sq > 0.0 && l.k1_sq_damped_lambda > 0.0 && l.noise_term > 0.0 && l.alpha_z > 0.0) {
                        bad("planted.law", "coefficients and alpha_z must be positive".into());
                    }
                    if !(pl.noise >= 0.0 && pl.noise < 1.0) {
                        bad("planted.noise", format!("must be in [0, 1), got {}", pl.noise));
                    }
                }
                _ => {}
            },
            _ => {}
        }
        if let Some(hp) = &self.horizon_params {
            if let Err(e) = hp.validate() {
                bad("horizon_params", e.to_string());
            }
        }
        if let Some(vs) = &self.variants {
            if vs.is_empty() {
                bad("variants", "at least one variant is required".into());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base() -> serde_json::Value {
        serde_json::json!({
            "name": "t",
            "kind": "zero_shot_suite",
            "corpus": {"families": [{"kind": "sinusoid_mix"}], "n_windows": 100},
            "datasets": [{"name": "s", "source": "synthetic", "family": {"kind": "random_walk"}, "n_series": 2, "length": 800}]
        })
    }

    fn parse(v: serde_json::Value) -> ExperimentSpec {
        ExperimentSpec::from_json(&v.to_string()).unwrap()
    }

    #[test]
    fn valid_spec_has_no_diagnostics() {
        let s = parse(base());
        assert_eq!(s.validate(), vec![]);
        assert_eq!(s.seeds, vec![0, 1, 2, 3, 4]);
        let g = s.geometry();
        assert_eq!((g.lookback, g.horizon), (112, 16));
    }

    #[test]
    fn missing_dataset_path_names_the_field() {
        let mut v = base();
        v["datasets"] = serde_json::json!([{"name": "etth1", "source": "csv", "path": "/no/such/file.csv"}]);
        let d = parse(v).validate();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "datasets[0].path");
    }

    #[test]
    fn horizon_divisibility() {
        let mut v = base();
        v["horizon"] = 20.into();
        let d = parse(v).validate();
        assert!(d.iter().any(|d| d.field == "horizon" && d.message.contains("H % P == 0")), "{d:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let mut v = base();
        v["seeds"] = serde_json::json!([]);
        v["kind"] = "encoder_bias".into();
        v["train"] = serde_json::json!({"lr": -1.0});
        let d = parse(v).validate();
        let fields: Vec<&str> = d.iter().map(|d| d.field.as_str()).collect();
        assert!(fields.contains(&"seeds") && fields.contains(&"target") && fields.contains(&"train"), "{fields:?}");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = base();
        v["bogus"] = 1.into();
        assert!(ExperimentSpec::from_json(&v.to_string()).is_err());
    }
}
