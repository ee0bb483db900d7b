//! Experiment configuration: parsing (TOML or JSON), default filling,
//! aggregated validation and hashing.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::analysis::{DEFAULT_K_MAX, DEFAULT_REPEATS};
use crate::ei::{EiElementParams, MismatchSpec};
use crate::frontend::{FilterbankConfig, SynthSpec, DEFAULT_FORMANTS};
use crate::network::{EncoderParams, Layer, ThresholdMode};
use crate::readout::FitOptions;
use crate::seed::short_hash;
use crate::tde::TdeParams;
use crate::topology::TopologyConfig;

/// Feature stack fed to the readout. Every stack includes the formant
/// channels through bypass connections.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "formants", alias = "formants-only")]
    Formants,
    #[serde(rename = "tde", alias = "+tde")]
    Tde,
    #[serde(rename = "ei1", alias = "+ei1")]
    Ei1,
    #[serde(rename = "ei2", alias = "+ei1+ei2")]
    Ei2,
    /// Every layer at once; the model used for permutation importance.
    #[serde(rename = "all", alias = "+tde+ei1+ei2")]
    All,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::Formants,
        Architecture::Tde,
        Architecture::Ei1,
        Architecture::Ei2,
        Architecture::All,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Architecture::Formants => "formants",
            Architecture::Tde => "tde",
            Architecture::Ei1 => "ei1",
            Architecture::Ei2 => "ei2",
            Architecture::All => "all",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }

    pub fn layers(self) -> &'static [Layer] {
        match self {
            Architecture::Formants => &[Layer::Formants],
            Architecture::Tde => &[Layer::Formants, Layer::Tde],
            Architecture::Ei1 => &[Layer::Formants, Layer::Ei1],
            Architecture::Ei2 => &[Layer::Formants, Layer::Ei1, Layer::Ei2],
            Architecture::All => &[Layer::Formants, Layer::Tde, Layer::Ei1, Layer::Ei2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    Synthetic,
    /// A `path,label,speaker,split` manifest of WAV or formant CSV files.
    Manifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    #[serde(default)]
    pub manifest: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: SynthSpec,
    /// Test samples per class for synthetic data; the training count is
    /// `synthetic.samples_per_class`.
    #[serde(default = "default_test_samples")]
    pub test_samples_per_class: usize,
}

fn default_test_samples() -> usize {
    SynthSpec::default().samples_per_class
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontendSettings {
    pub n_bands: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub window_ms: f64,
    pub formants: usize,
}

impl Default for FrontendSettings {
    fn default() -> Self {
        let fb = FilterbankConfig::default();
        Self {
            n_bands: fb.n_bands,
            f_min: fb.f_min,
            f_max: fb.f_max,
            window_ms: fb.window_ms,
            formants: DEFAULT_FORMANTS,
        }
    }
}

impl FrontendSettings {
    pub fn filterbank(&self) -> FilterbankConfig {
        FilterbankConfig {
            n_bands: self.n_bands,
            f_min: self.f_min,
            f_max: self.f_max,
            window_ms: self.window_ms,
            ..FilterbankConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TdeSettings {
    pub tau_fac_ms: f64,
    pub tau_trig_ms: f64,
    pub w_fac: f64,
    pub tau_mem_ms: f64,
    pub theta: f64,
    pub v_reset: f64,
    pub refractory_ms: f64,
    /// Spikes produced by a 1 ms facilitatory-to-trigger delay; sets w_trig.
    pub target_spikes: u32,
    /// Explicit trigger weight, skipping calibration.
    pub w_trig: Option<f64>,
}

impl Default for TdeSettings {
    fn default() -> Self {
        let p = TdeParams::default();
        Self {
            tau_fac_ms: p.tau_fac_ms,
            tau_trig_ms: p.tau_trig_ms,
            w_fac: p.w_fac,
            tau_mem_ms: p.tau_mem_ms,
            theta: p.theta,
            v_reset: p.v_reset,
            refractory_ms: p.refractory_ms,
            target_spikes: 10,
            w_trig: None,
        }
    }
}

impl TdeSettings {
    /// Parameters with `w_trig` left at 1 unless given explicitly.
    pub fn params(&self) -> TdeParams {
        TdeParams {
            tau_fac_ms: self.tau_fac_ms,
            tau_trig_ms: self.tau_trig_ms,
            w_fac: self.w_fac,
            w_trig: self.w_trig.unwrap_or(1.0),
            tau_mem_ms: self.tau_mem_ms,
            theta: self.theta,
            v_reset: self.v_reset,
            refractory_ms: self.refractory_ms,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EiSettings {
    pub tau_e_ms: f64,
    pub tau_i_ms: f64,
    pub w_e: f64,
    pub w_i: f64,
    pub tau_mem_ms: f64,
    pub v_reset: f64,
    pub refractory_ms: f64,
    pub threshold: ThresholdMode,
}

impl Default for EiSettings {
    fn default() -> Self {
        let e = EiElementParams::default();
        Self {
            tau_e_ms: e.tau_e_ms,
            tau_i_ms: e.tau_i_ms,
            w_e: e.w_e,
            w_i: e.w_i,
            tau_mem_ms: 10.0,
            v_reset: 0.0,
            refractory_ms: 0.0,
            threshold: ThresholdMode::Nominal,
        }
    }
}

impl EiSettings {
    pub fn element(&self) -> EiElementParams {
        EiElementParams {
            tau_e_ms: self.tau_e_ms,
            tau_i_ms: self.tau_i_ms,
            w_e: self.w_e,
            w_i: self.w_i,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MismatchSettings {
    pub sigma_tau: f64,
    pub sigma_w: f64,
}

impl Default for MismatchSettings {
    fn default() -> Self {
        Self {
            sigma_tau: 0.5,
            sigma_w: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologySettings {
    pub d_max: usize,
    pub window: usize,
    pub duplicates: usize,
}

impl Default for TopologySettings {
    fn default() -> Self {
        let t = TopologyConfig::default();
        Self {
            d_max: t.d_max,
            window: t.window,
            duplicates: t.duplicates,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub repeats: usize,
    pub k_max: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            repeats: DEFAULT_REPEATS,
            k_max: DEFAULT_K_MAX,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
    /// Keyword labels for one-vs-rest models; empty means every label present.
    #[serde(default)]
    pub keywords: Vec<u32>,
    #[serde(default = "default_architectures")]
    pub architectures: Vec<Architecture>,
    #[serde(default)]
    pub frontend: FrontendSettings,
    #[serde(default)]
    pub tde: TdeSettings,
    #[serde(default)]
    pub ei: EiSettings,
    #[serde(default)]
    pub mismatch: MismatchSettings,
    #[serde(default)]
    pub topology: TopologySettings,
    #[serde(default)]
    pub classifier: FitOptions,
    #[serde(default)]
    pub analysis: AnalysisSettings,
    /// Output directory; `--out` overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_architectures() -> Vec<Architecture> {
    Architecture::ALL.to_vec()
}

impl ExperimentConfig {
    /// Defaults everywhere except the two required keys.
    pub fn with_defaults(seed: u64, dataset: DatasetConfig) -> Self {
        Self {
            seed,
            dataset,
            keywords: Vec::new(),
            architectures: default_architectures(),
            frontend: FrontendSettings::default(),
            tde: TdeSettings::default(),
            ei: EiSettings::default(),
            mismatch: MismatchSettings::default(),
            topology: TopologySettings::default(),
            classifier: FitOptions::default(),
            analysis: AnalysisSettings::default(),
            out_dir: None,
            base_dir: PathBuf::from("."),
        }
    }

    pub fn synthetic(seed: u64, spec: SynthSpec, test_samples_per_class: usize) -> Self {
        Self::with_defaults(
            seed,
            DatasetConfig {
                kind: DatasetKind::Synthetic,
                manifest: None,
                synthetic: spec,
                test_samples_per_class,
            },
        )
    }

    pub fn n_inputs(&self) -> usize {
        match self.dataset.kind {
            DatasetKind::Synthetic => self.dataset.synthetic.n_bands,
            DatasetKind::Manifest => self.frontend.n_bands,
        }
    }

    pub fn topology_config(&self) -> TopologyConfig {
        TopologyConfig {
            n_inputs: self.n_inputs(),
            d_max: self.topology.d_max,
            window: self.topology.window,
            duplicates: self.topology.duplicates,
        }
    }

    pub fn encoder_params(&self, w_trig: f64) -> EncoderParams {
        EncoderParams {
            tde: TdeParams {
                w_trig,
                ..self.tde.params()
            },
            ei_element: self.ei.element(),
            ei_tau_mem_ms: self.ei.tau_mem_ms,
            ei_v_reset: self.ei.v_reset,
            ei_refractory_ms: self.ei.refractory_ms,
            ei_threshold: self.ei.threshold,
        }
    }

    /// Mismatch draws are seeded from the master seed.
    pub fn mismatch_spec(&self) -> Result<MismatchSpec, crate::ei::EiError> {
        MismatchSpec::new(
            self.mismatch.sigma_tau,
            self.mismatch.sigma_w,
            crate::seed::derive_seed(self.seed, "mismatch", 0),
        )
    }

    pub fn manifest_path(&self) -> Option<PathBuf> {
        self.dataset.manifest.as_ref().map(|p| self.base_dir.join(p))
    }

    /// Short hash of the normalized config, excluding the output location.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        short_hash(&serde_json::to_vec(&c).expect("config serializes"))
    }

    pub fn to_json(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Range and consistency checks; returns every problem found.
    pub fn check(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                errs.push(msg);
            }
        };
        let m = &self.mismatch;
        for (k, v) in [("mismatch.sigma_tau", m.sigma_tau), ("mismatch.sigma_w", m.sigma_w)] {
            need((0.0..1.0).contains(&v), format!("{k} = {v} must be in [0, 1)"));
        }
        if let Err(e) = self.tde.params().validate() {
            need(false, format!("tde: {e}"));
        }
        need(self.tde.target_spikes >= 1, "tde.target_spikes must be at least 1".into());
        if let Some(w) = self.tde.w_trig {
            need(w.is_finite() && w > 0.0, format!("tde.w_trig = {w} must be positive"));
        }
        if let Err(e) = self.ei.element().validate() {
            need(false, format!("ei: {e}"));
        }
        need(self.ei.tau_mem_ms > 0.0, format!("ei.tau_mem_ms = {} must be positive", self.ei.tau_mem_ms));
        need(self.ei.refractory_ms >= 0.0, "ei.refractory_ms must be non-negative".into());
        if let Err(e) = self.topology_config().validate() {
            need(false, format!("topology: {e}"));
        }
        let c = &self.classifier;
        need(c.lambda >= 0.0 && c.lambda.is_finite(), format!("classifier.lambda = {} must be finite and >= 0", c.lambda));
        need(c.tol > 0.0, format!("classifier.tol = {} must be positive", c.tol));
        need(c.max_iter >= 1, "classifier.max_iter must be at least 1".into());
        need(self.analysis.repeats >= 1, "analysis.repeats must be at least 1".into());
        need(self.analysis.k_max >= 1, "analysis.k_max must be at least 1".into());
        need(!self.architectures.is_empty(), "architectures must not be empty".into());
        let f = &self.frontend;
        need(f.n_bands >= 4, format!("frontend.n_bands = {} must be at least 4", f.n_bands));
        need(0.0 < f.f_min && f.f_min < f.f_max, "frontend.f_min must be positive and below f_max".into());
        need(f.window_ms > 0.0, "frontend.window_ms must be positive".into());
        need((1..=f.n_bands).contains(&f.formants), "frontend.formants must be in 1..=n_bands".into());
        match self.dataset.kind {
            DatasetKind::Synthetic => {
                let s = &self.dataset.synthetic;
                if let Err(e) = s.validate() {
                    need(false, format!("dataset.synthetic: {e}"));
                }
                need(s.n_classes >= 2, "dataset.synthetic.n_classes must be at least 2".into());
                need(s.samples_per_class >= 1, "dataset.synthetic.samples_per_class must be at least 1".into());
                need(self.dataset.test_samples_per_class >= 1, "dataset.test_samples_per_class must be at least 1".into());
                for &k in &self.keywords {
                    need((k as usize) < s.n_classes, format!("keyword {k} is not a synthetic class"));
                }
            }
            DatasetKind::Manifest => match self.manifest_path() {
                None => need(false, "dataset.manifest is required for kind = \"manifest\"".into()),
                Some(p) => need(p.is_file(), format!("dataset.manifest `{}` does not exist", p.display())),
            },
        }
        errs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConfigFormat {
    Json,
    Toml,
}

impl ConfigFormat {
    /// TOML for `.toml`, JSON otherwise.
    pub fn from_path(path: &Path) -> Self {
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("toml")) {
            ConfigFormat::Toml
        } else {
            ConfigFormat::Json
        }
    }
}

/// Parses text into a JSON value tree; empty text is an empty table.
pub fn parse_config_value(text: &str, format: ConfigFormat) -> Result<Value, String> {
    if text.trim().is_empty() {
        return Ok(Value::Object(Map::new()));
    }
    match format {
        ConfigFormat::Json => serde_json::from_str(text).map_err(|e| format!("invalid JSON: {e}")),
        ConfigFormat::Toml => {
            let t: toml::Table = toml::from_str(text).map_err(|e| format!("invalid TOML: {e}"))?;
            serde_json::to_value(t).map_err(|e| e.to_string())
        }
    }
}

/// Reports keys of `given` absent from the `known` tree.
fn unknown_keys(given: &Value, known: &Value, prefix: &str, errs: &mut Vec<String>) {
    let (Value::Object(g), Value::Object(k)) = (given, known) else {
        return;
    };
    for (key, v) in g {
        let path = if prefix.is_empty() { key.clone() } else { format!("{prefix}.{key}") };
        match k.get(key) {
            None => errs.push(format!("unknown key `{path}`")),
            Some(kv) => unknown_keys(v, kv, &path, errs),
        }
    }
}

fn section<T: DeserializeOwned>(root: &Map<String, Value>, key: &str, errs: &mut Vec<String>) -> Option<T> {
    let v = root.get(key).cloned().unwrap_or(Value::Null);
    let v = if v.is_null() { Value::Object(Map::new()) } else { v };
    match serde_json::from_value(v) {
        Ok(t) => Some(t),
        Err(e) => {
            errs.push(format!("{key}: {e}"));
            None
        }
    }
}

/// Builds a normalized config from a parsed tree, collecting every schema,
/// type and range error instead of stopping at the first.
pub fn config_from_value(value: &Value, base_dir: &Path) -> Result<ExperimentConfig, Vec<String>> {
    let Value::Object(root) = value else {
        return Err(vec!["config must be a table of keys".into()]);
    };
    let mut errs = Vec::new();
    let template = ExperimentConfig::synthetic(0, SynthSpec::default(), 1).to_json();
    unknown_keys(value, &template, "", &mut errs);
    for key in ["seed", "dataset"] {
        if !root.contains_key(key) {
            errs.push(format!("missing required key `{key}`"));
        }
    }
    if let Some(Value::Object(d)) = root.get("dataset") {
        if !d.contains_key("kind") {
            errs.push("missing required key `dataset.kind` (\"synthetic\" or \"manifest\")".into());
        }
    }
    let seed = match root.get("seed") {
        Some(v) => match v.as_u64() {
            Some(s) => Some(s),
            None => {
                errs.push(format!("seed must be a non-negative integer, got {v}"));
                None
            }
        },
        None => None,
    };
    let dataset: Option<DatasetConfig> = match root.get("dataset") {
        Some(v) if v.get("kind").is_some() => match serde_json::from_value(v.clone()) {
            Ok(d) => Some(d),
            Err(e) => {
                errs.push(format!("dataset: {e}"));
                None
            }
        },
        _ => None,
    };
    let keywords: Option<Vec<u32>> = match root.get("keywords") {
        None => Some(Vec::new()),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| errs.push(format!("keywords: {e}"))).ok(),
    };
    let architectures: Option<Vec<Architecture>> = match root.get("architectures") {
        None => Some(default_architectures()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| errs.push(format!("architectures: {e}")))
            .ok(),
    };
    let out_dir: Option<Option<PathBuf>> = match root.get("out_dir") {
        None => Some(None),
        Some(v) => serde_json::from_value(v.clone()).map_err(|e| errs.push(format!("out_dir: {e}"))).ok(),
    };
    let frontend = section(root, "frontend", &mut errs);
    let tde = section(root, "tde", &mut errs);
    let ei = section(root, "ei", &mut errs);
    let mismatch = section(root, "mismatch", &mut errs);
    let topology = section(root, "topology", &mut errs);
    let classifier = section(root, "classifier", &mut errs);
    let analysis = section(root, "analysis", &mut errs);

    let (
        Some(seed),
        Some(dataset),
        Some(keywords),
        Some(architectures),
        Some(out_dir),
        Some(frontend),
        Some(tde),
        Some(ei),
        Some(mismatch),
        Some(topology),
        Some(classifier),
        Some(analysis),
    ) = (seed, dataset, keywords, architectures, out_dir, frontend, tde, ei, mismatch, topology, classifier, analysis)
    else {
        return Err(errs);
    };
    if !errs.is_empty() {
        return Err(errs);
    }
    let mut architectures = architectures;
    architectures.sort();
    architectures.dedup();
    let mut keywords = keywords;
    keywords.sort_unstable();
    keywords.dedup();
    let cfg = ExperimentConfig {
        seed,
        dataset,
        keywords,
        architectures,
        frontend,
        tde,
        ei,
        mismatch,
        topology,
        classifier,
        analysis,
        out_dir,
        base_dir: base_dir.to_path_buf(),
    };
    let range = cfg.check();
    if range.is_empty() {
        Ok(cfg)
    } else {
        Err(range)
    }
}

/// Reads, normalizes and validates a config file.
pub fn validate_config(path: &Path) -> Result<ExperimentConfig, Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| vec![format!("cannot read `{}`: {e}", path.display())])?;
    let value = parse_config_value(&text, ConfigFormat::from_path(path)).map_err(|e| vec![e])?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    config_from_value(&value, &base)
}
