//! End-to-end runs: dataset ingestion, network construction, encoding to
//! spike-count features, one-vs-rest readouts and their analysis, with every
//! artifact written under one run directory.
//!
//! Runs split into an encode stage (up to `features.csv`) and an analyze
//! stage that reads only `features.csv`, so either can be rerun alone.

pub mod config;
mod report;

use std::collections::BTreeSet;
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{
    feature_spike_stats, importance_rows, permutation_importance, select_few, single_neuron_rows, single_neuron_scores,
    spike_rows, write_report_rows, ImportanceReport, SelectionResult,
};
use crate::frontend::io::{frames_from_raster, load_entry, read_manifest, write_formant_csv};
use crate::frontend::{balance_labels, synth_keyword_dataset, LabeledSample, SplitRole};
use crate::network::{build_network, Layer, LayerSet, Network};
use crate::readout::{accuracy, fit_logreg, FeatureMatrix, FeatureMeta, LinearModel};
use crate::seed::derive_seed;
use crate::tde::{calibrate_w_trig, TdeCalibration};

pub use config::{validate_config, Architecture, DatasetConfig, DatasetKind, ExperimentConfig};
pub use report::render_plots;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("stage `{stage}`{}: {message}", sample.as_ref().map(|s| format!(" (sample {s})")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        sample: Option<String>,
        message: String,
    },
}

impl ExperimentError {
    fn stage(stage: &'static str, e: impl Display) -> Self {
        ExperimentError::Stage {
            stage,
            sample: None,
            message: e.to_string(),
        }
    }

    fn sample(stage: &'static str, sample: &str, e: impl Display) -> Self {
        ExperimentError::Stage {
            stage,
            sample: Some(sample.to_string()),
            message: e.to_string(),
        }
    }

    /// 1 for configuration errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 1,
            ExperimentError::Stage { .. } => 2,
        }
    }
}

type Result<T> = std::result::Result<T, ExperimentError>;

/// Which part of a run to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    All,
    /// Dataset, network, simulation; writes everything up to `features.csv`.
    Encode,
    /// Readouts and analysis from an existing `features.csv`, then plots.
    Analyze,
    /// Plots from existing report CSVs.
    Plot,
}

pub const FEATURES_FILE: &str = "features.csv";
pub const FAILED_FILE: &str = "FAILED";

#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub samples: Vec<LabeledSample>,
    pub splits: Vec<SplitRole>,
}

/// Loads the configured dataset. Synthetic classes are generated with
/// `train + test` samples each; the first `samples_per_class` of every class
/// form the training split.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    const STAGE: &str = "dataset";
    let ds = match cfg.dataset.kind {
        DatasetKind::Synthetic => {
            let train = cfg.dataset.synthetic.samples_per_class;
            let spec = crate::frontend::SynthSpec {
                samples_per_class: train + cfg.dataset.test_samples_per_class,
                ..cfg.dataset.synthetic.clone()
            };
            let samples = synth_keyword_dataset(&spec, derive_seed(cfg.seed, "synth", 0)).map_err(|e| ExperimentError::stage(STAGE, e))?;
            let mut seen = std::collections::HashMap::<u32, usize>::new();
            let (ids, splits) = samples
                .iter()
                .map(|s| {
                    let i = seen.entry(s.label).or_default();
                    let out = (
                        format!("c{}-{:04}", s.label, *i),
                        if *i < train { SplitRole::Train } else { SplitRole::Test },
                    );
                    *i += 1;
                    out
                })
                .unzip();
            Dataset { ids, samples, splits }
        }
        DatasetKind::Manifest => {
            let path = cfg.manifest_path().ok_or_else(|| ExperimentError::stage(STAGE, "no manifest configured"))?;
            let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
            let entries = read_manifest(&path).map_err(|e| ExperimentError::stage(STAGE, e))?;
            let fb = cfg.frontend.filterbank();
            let ids: Vec<String> = entries
                .iter()
                .map(|e| e.path.strip_prefix(&base).unwrap_or(&e.path).display().to_string())
                .collect();
            let samples = entries
                .par_iter()
                .zip(&ids)
                .map(|(e, id)| load_entry(e, &fb, cfg.frontend.formants).map_err(|err| ExperimentError::sample(STAGE, id, err)))
                .collect::<Result<Vec<_>>>()?;
            Dataset {
                ids,
                splits: entries.iter().map(|e| e.split).collect(),
                samples,
            }
        }
    };
    let n = cfg.n_inputs();
    if let Some((id, s)) = ds.ids.iter().zip(&ds.samples).find(|(_, s)| s.raster.n_channels() != n) {
        return Err(ExperimentError::sample(
            STAGE,
            id,
            format!("raster has {} channels, expected {n}", s.raster.n_channels()),
        ));
    }
    Ok(ds)
}

/// Spike counts of every sample on every simulated unit.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub ids: Vec<String>,
    pub labels: Vec<u32>,
    pub splits: Vec<SplitRole>,
    pub matrix: FeatureMatrix,
}

fn layer_set(archs: &[Architecture]) -> LayerSet {
    let has = |l: Layer| archs.iter().any(|a| a.layers().contains(&l));
    LayerSet {
        tde: has(Layer::Tde),
        ei1: has(Layer::Ei1),
        ei2: has(Layer::Ei2),
    }
}

pub fn encode_features(network: &Network, dataset: &Dataset, archs: &[Architecture]) -> Result<FeatureTable> {
    const STAGE: &str = "encode";
    let layers = layer_set(archs);
    let (n_tde, n_ei1, n_ei2) = network.topology.unit_counts();
    let mut columns: Vec<FeatureMeta> = Vec::new();
    let mut push = |layer: Layer, n: usize| columns.extend((0..n).map(|unit| FeatureMeta { layer, unit }));
    push(Layer::Formants, network.topology.config.n_inputs);
    if layers.tde {
        push(Layer::Tde, n_tde);
    }
    if layers.ei1 {
        push(Layer::Ei1, n_ei1);
    }
    if layers.ei2 {
        push(Layer::Ei2, n_ei2);
    }
    let rows = dataset
        .samples
        .par_iter()
        .zip(&dataset.ids)
        .map(|(s, id)| {
            let act = network.simulate(&s.raster, layers).map_err(|e| ExperimentError::sample(STAGE, id, e))?;
            let mut row: Vec<f64> = s.raster.spike_counts().counts.iter().map(|&c| f64::from(c)).collect();
            for r in [act.tde, act.ei1, act.ei2].into_iter().flatten() {
                row.extend(r.spike_counts().counts.iter().map(|&c| f64::from(c)));
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FeatureTable {
        ids: dataset.ids.clone(),
        labels: dataset.samples.iter().map(|s| s.label).collect(),
        splits: dataset.splits.clone(),
        matrix: FeatureMatrix::from_rows(columns, &rows),
    })
}

impl FeatureTable {
    /// Wide layout: `sample,label,split,<layer>/<unit>...`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        write!(w, "sample,label,split")?;
        for c in self.matrix.columns() {
            write!(w, ",{}/{}", c.layer.name(), c.unit)?;
        }
        writeln!(w)?;
        for r in 0..self.matrix.n_rows() {
            write!(w, "{},{},{}", self.ids[r], self.labels[r], self.splits[r].as_str())?;
            for v in self.matrix.row(r) {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> std::result::Result<Self, String> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rdr.headers().map_err(|e| e.to_string())?.clone();
        if header.len() < 3 || &header[0] != "sample" || &header[1] != "label" || &header[2] != "split" {
            return Err("expected header `sample,label,split,...`".into());
        }
        let columns = header
            .iter()
            .skip(3)
            .map(|h| {
                let (layer, unit) = h.split_once('/').ok_or_else(|| format!("bad feature column `{h}`"))?;
                Ok(FeatureMeta {
                    layer: Layer::from_name(layer).ok_or_else(|| format!("unknown layer `{layer}`"))?,
                    unit: unit.parse().map_err(|_| format!("bad unit in `{h}`"))?,
                })
            })
            .collect::<std::result::Result<Vec<_>, String>>()?;
        let (mut ids, mut labels, mut splits, mut rows) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| e.to_string())?;
            let bad = |m: &str| format!("row {}: {m}", i + 1);
            ids.push(rec[0].to_string());
            labels.push(rec[1].parse().map_err(|_| bad("bad label"))?);
            splits.push(match &rec[2] {
                "train" => SplitRole::Train,
                "test" => SplitRole::Test,
                _ => return Err(bad("bad split")),
            });
            rows.push(
                rec.iter()
                    .skip(3)
                    .map(|v| v.parse::<f64>().map_err(|_| bad("bad count")))
                    .collect::<std::result::Result<Vec<_>, _>>()?,
            );
        }
        Ok(Self {
            ids,
            labels,
            splits,
            matrix: FeatureMatrix::from_rows(columns, &rows),
        })
    }

    fn rows_of(&self, role: SplitRole) -> Vec<usize> {
        (0..self.ids.len()).filter(|&i| self.splits[i] == role).collect()
    }
}

/// Run directory writer stamping every CSV with the config hash and seed.
pub struct RunDir {
    pub dir: PathBuf,
    pub config_hash: String,
    pub seed: u64,
}

impl RunDir {
    pub fn comment(&self) -> String {
        format!("# config_hash={},seed={}", self.config_hash, self.seed)
    }

    fn write(&self, stage: &'static str, name: &str, body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let io = |e: std::io::Error| ExperimentError::stage(stage, format!("{}: {e}", path.display()));
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        let mut w = BufWriter::new(File::create(&path).map_err(io)?);
        writeln!(w, "{}", self.comment()).map_err(io)?;
        body(&mut w).map_err(io)?;
        w.flush().map_err(io)
    }

    fn write_plain(&self, stage: &'static str, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| ExperimentError::stage(stage, format!("{}: {e}", path.display())))
    }
}

/// Stamp line of an existing artifact, if any.
fn read_comment(path: &Path) -> Option<String> {
    let f = File::open(path).ok()?;
    let mut line = String::new();
    BufReader::new(f).read_line(&mut line).ok()?;
    Some(line.trim_end().to_string())
}

#[derive(Debug, Clone, Serialize)]
pub struct AccuracyRow {
    pub keyword: u32,
    pub architecture: Architecture,
    pub n_features: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct ModelReport {
    pub accuracy: AccuracyRow,
    pub model: LinearModel,
    pub importance: ImportanceReport,
    pub selection: SelectionResult,
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub models: Vec<ModelReport>,
}

#[derive(Serialize)]
struct ConfigEcho<'a> {
    config_hash: &'a str,
    config: &'a ExperimentConfig,
    tde_calibration: Option<&'a TdeCalibration>,
    tde_w_trig: f64,
    ei_nominal_theta: f64,
    ei_units_calibrated: usize,
    n_samples: usize,
}

fn encode_stage(cfg: &ExperimentConfig, run: &RunDir) -> Result<FeatureTable> {
    let dataset = load_dataset(cfg)?;
    let tde = cfg.tde.params();
    let calibration = match cfg.tde.w_trig {
        Some(_) => None,
        None => Some(calibrate_w_trig(&tde, cfg.tde.target_spikes).map_err(|e| ExperimentError::stage("network", e))?),
    };
    let w_trig = calibration.as_ref().map_or(tde.w_trig, |c| c.w_trig);
    let mismatch = cfg.mismatch_spec().map_err(|e| ExperimentError::stage("network", e))?;
    let network = build_network(&cfg.topology_config(), &cfg.encoder_params(w_trig), &mismatch)
        .map_err(|e| ExperimentError::stage("network", e))?;
    log::info!(
        "network: {} TDE, {} E-I layer 1, {} E-I layer 2 units",
        network.topology.tde_pairs.len(),
        network.ei1.len(),
        network.ei2.len()
    );
    let echo = ConfigEcho {
        config_hash: &run.config_hash,
        config: cfg,
        tde_calibration: calibration.as_ref(),
        tde_w_trig: w_trig,
        ei_nominal_theta: network.nominal_theta,
        ei_units_calibrated: network.ei1.iter().chain(&network.ei2).filter(|u| u.calibrated).count(),
        n_samples: dataset.samples.len(),
    };
    let text = serde_json::to_string_pretty(&echo).expect("echo serializes") + "\n";
    run.write_plain("network", "config.json", &text)?;
    run.write("network", "topology.csv", |w| network.topology.write_csv(w))?;
    run.write("network", "parameters.csv", |w| network.write_parameter_csv(w))?;
    run.write("dataset", "samples.csv", |w| {
        writeln!(w, "sample,label,speaker,split,n_bins")?;
        for (i, s) in dataset.samples.iter().enumerate() {
            writeln!(
                w,
                "{},{},{},{},{}",
                dataset.ids[i],
                s.label,
                s.speaker,
                dataset.splits[i].as_str(),
                s.raster.n_bins()
            )?;
        }
        Ok(())
    })?;
    let table = encode_features(&network, &dataset, &cfg.architectures)?;
    run.write("encode", FEATURES_FILE, |w| table.write_csv(w))?;
    Ok(table)
}

fn load_features(run: &RunDir) -> Result<FeatureTable> {
    const STAGE: &str = "analyze";
    let path = run.dir.join(FEATURES_FILE);
    let stamp = read_comment(&path).ok_or_else(|| ExperimentError::stage(STAGE, format!("cannot read {}", path.display())))?;
    if stamp != run.comment() {
        return Err(ExperimentError::stage(
            STAGE,
            format!("{} was written by a different config (`{stamp}`, expected `{}`)", path.display(), run.comment()),
        ));
    }
    let f = File::open(&path).map_err(|e| ExperimentError::stage(STAGE, e))?;
    FeatureTable::read_csv(f).map_err(|e| ExperimentError::stage(STAGE, format!("{}: {e}", path.display())))
}

fn keywords_of(cfg: &ExperimentConfig, table: &FeatureTable) -> Result<Vec<u32>> {
    let present: BTreeSet<u32> = table.labels.iter().copied().collect();
    if cfg.keywords.is_empty() {
        return Ok(present.into_iter().collect());
    }
    if let Some(k) = cfg.keywords.iter().find(|k| !present.contains(k)) {
        return Err(ExperimentError::stage("analyze", format!("keyword {k} has no samples")));
    }
    Ok(cfg.keywords.clone())
}

/// Balanced one-vs-rest rows (global indices) and labels for one split.
fn balanced_rows(table: &FeatureTable, role: SplitRole, keyword: u32, n_other: usize, seed: u64) -> Result<(Vec<usize>, Vec<bool>)> {
    let rows = table.rows_of(role);
    let labels: Vec<u32> = rows.iter().map(|&r| table.labels[r]).collect();
    let split = balance_labels(&labels, keyword, n_other, derive_seed(seed, "balance", role as u64), role)
        .map_err(|e| ExperimentError::stage("analyze", format!("{} split: {e}", role.as_str())))?;
    let labeled = split.labeled();
    Ok((labeled.iter().map(|&(i, _)| rows[i]).collect(), labeled.iter().map(|&(_, y)| y).collect()))
}

fn analyze_stage(cfg: &ExperimentConfig, run: &RunDir, table: &FeatureTable) -> Result<Vec<ModelReport>> {
    const STAGE: &str = "analyze";
    let keywords = keywords_of(cfg, table)?;
    let n_classes = table.labels.iter().collect::<BTreeSet<_>>().len();
    let n_other = n_classes.saturating_sub(1);
    let splits = keywords
        .iter()
        .map(|&kw| {
            Ok((
                balanced_rows(table, SplitRole::Train, kw, n_other, cfg.seed)?,
                balanced_rows(table, SplitRole::Test, kw, n_other, cfg.seed)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, Architecture)> = (0..keywords.len())
        .flat_map(|k| cfg.architectures.iter().map(move |&a| (k, a)))
        .collect();
    let opts = cfg.classifier;
    let models = jobs
        .par_iter()
        .map(|&(k, arch)| {
            let kw = keywords[k];
            let ((tr_rows, ytr), (te_rows, yte)) = &splits[k];
            let cols = table.matrix.columns_of(arch.layers());
            let xtr = table.matrix.select_rows(tr_rows).select_columns(&cols);
            let xte = table.matrix.select_rows(te_rows).select_columns(&cols);
            let err = |e: crate::readout::ReadoutError| ExperimentError::stage(STAGE, format!("keyword {kw}, {}: {e}", arch.name()));
            let model = fit_logreg(&xtr, ytr, &opts).map_err(err)?;
            let arch_id = Architecture::ALL.iter().position(|&a| a == arch).unwrap_or(0) as u64;
            let mut importance = permutation_importance(&model, &xte, yte, cfg.analysis.repeats, derive_seed(cfg.seed, "importance", (u64::from(kw) << 8) | arch_id))
                .map_err(err)?;
            importance.split = SplitRole::Test.as_str().into();
            let selection = select_few(&xtr, ytr, Some((&xte, yte)), &importance, cfg.analysis.k_max, &opts).map_err(err)?;
            Ok(ModelReport {
                accuracy: AccuracyRow {
                    keyword: kw,
                    architecture: arch,
                    n_features: cols.len(),
                    n_train: ytr.len(),
                    n_test: yte.len(),
                    train_accuracy: accuracy(&model, &xtr, ytr).map_err(err)?,
                    test_accuracy: accuracy(&model, &xte, yte).map_err(err)?,
                    converged: model.converged,
                },
                model,
                importance,
                selection,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let singles = keywords
        .par_iter()
        .zip(&splits)
        .map(|(&kw, ((tr_rows, ytr), (te_rows, yte)))| {
            single_neuron_scores(&table.matrix.select_rows(tr_rows), ytr, &table.matrix.select_rows(te_rows), yte, &opts)
                .map_err(|e| ExperimentError::stage(STAGE, format!("keyword {kw}, single neurons: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    for m in &models {
        let a = &m.accuracy;
        run.write(STAGE, &format!("models/kw{}_{}.csv", a.keyword, a.architecture.name()), |w| m.model.write_csv(w))?;
    }
    run.write(STAGE, "accuracy.csv", |w| {
        writeln!(w, "keyword,architecture,n_features,n_train,n_test,train_accuracy,test_accuracy,converged")?;
        for m in &models {
            let a = &m.accuracy;
            writeln!(
                w,
                "{},{},{},{},{},{},{},{}",
                a.keyword,
                a.architecture.name(),
                a.n_features,
                a.n_train,
                a.n_test,
                a.train_accuracy,
                a.test_accuracy,
                a.converged
            )?;
        }
        Ok(())
    })?;
    const REPORT_HEADER: &str = "keyword,architecture,layer,unit,metric,value,std";
    run.write(STAGE, "importance.csv", |w| {
        writeln!(w, "{REPORT_HEADER}")?;
        for m in &models {
            let kw = m.accuracy.keyword.to_string();
            write_report_rows(&mut *w, &[&kw, m.accuracy.architecture.name()], &importance_rows(&m.importance))?;
        }
        Ok(())
    })?;
    run.write(STAGE, "few_neuron.csv", |w| {
        writeln!(w, "keyword,architecture,k,layer,unit,train_accuracy,test_accuracy")?;
        for m in &models {
            for s in &m.selection.steps {
                writeln!(
                    w,
                    "{},{},{},{},{},{},{}",
                    m.accuracy.keyword,
                    m.accuracy.architecture.name(),
                    s.k,
                    s.meta.layer.name(),
                    s.meta.unit,
                    s.train_accuracy,
                    s.test_accuracy.map_or("nan".to_string(), |v| v.to_string())
                )?;
            }
        }
        Ok(())
    })?;
    run.write(STAGE, "single_neuron.csv", |w| {
        writeln!(w, "{REPORT_HEADER}")?;
        for (kw, scores) in keywords.iter().zip(&singles) {
            write_report_rows(&mut *w, &[&kw.to_string(), "all"], &single_neuron_rows(scores))?;
        }
        Ok(())
    })?;
    run.write(STAGE, "spikes_per_utterance.csv", |w| {
        writeln!(w, "{REPORT_HEADER}")?;
        for &kw in &keywords {
            let rows: Vec<usize> = (0..table.labels.len()).filter(|&r| table.labels[r] == kw).collect();
            let stats = feature_spike_stats(&table.matrix.select_rows(&rows));
            write_report_rows(&mut *w, &[&kw.to_string(), "all"], &spike_rows(table.matrix.columns(), &stats))?;
        }
        Ok(())
    })?;
    Ok(models)
}

/// Runs `stage` of the experiment into `out`. On failure a `FAILED` marker
/// with the error is left next to whatever was already written.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, stage: Stage) -> Result<RunSummary> {
    let errs = cfg.check();
    if !errs.is_empty() {
        return Err(ExperimentError::Config(errs));
    }
    fs::create_dir_all(out).map_err(|e| ExperimentError::stage("setup", format!("{}: {e}", out.display())))?;
    let run = RunDir {
        dir: out.to_path_buf(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
    };
    let failed = out.join(FAILED_FILE);
    let _ = fs::remove_file(&failed);
    let result = (|| {
        let mut models = Vec::new();
        if matches!(stage, Stage::All | Stage::Encode | Stage::Analyze) {
            let table = match stage {
                Stage::Analyze => load_features(&run)?,
                _ => encode_stage(cfg, &run)?,
            };
            if stage != Stage::Encode {
                models = analyze_stage(cfg, &run, &table)?;
            }
        }
        if stage != Stage::Encode {
            render_plots(out).map_err(|e| ExperimentError::stage("plot", e))?;
        }
        Ok(RunSummary {
            dir: out.to_path_buf(),
            config_hash: run.config_hash.clone(),
            models,
        })
    })();
    if let Err(e) = &result {
        let _ = fs::write(&failed, format!("{e}\n"));
    }
    result
}

/// Writes the synthetic dataset of `cfg` as formant CSVs plus a
/// `manifest.csv`, usable as a `manifest` dataset.
pub fn export_synthetic(cfg: &ExperimentConfig, out: &Path) -> Result<usize> {
    const STAGE: &str = "synth";
    if cfg.dataset.kind != DatasetKind::Synthetic {
        return Err(ExperimentError::Config(vec!["dataset.kind must be \"synthetic\" to export samples".into()]));
    }
    let ds = load_dataset(cfg)?;
    let io = |e: std::io::Error| ExperimentError::stage(STAGE, e);
    fs::create_dir_all(out.join("samples")).map_err(io)?;
    let k = cfg.dataset.synthetic.formants;
    let mut manifest = BufWriter::new(File::create(out.join("manifest.csv")).map_err(io)?);
    writeln!(manifest, "path,label,speaker,split").map_err(io)?;
    for (i, s) in ds.samples.iter().enumerate() {
        let rel = format!("samples/{}.csv", ds.ids[i]);
        let mut w = BufWriter::new(File::create(out.join(&rel)).map_err(io)?);
        write_formant_csv(&frames_from_raster(&s.raster), k, &mut w).map_err(io)?;
        w.flush().map_err(io)?;
        writeln!(manifest, "{rel},{},{},{}", s.label, s.speaker, ds.splits[i].as_str()).map_err(io)?;
    }
    manifest.flush().map_err(io)?;
    Ok(ds.samples.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::{SynthPattern, SynthSpec};

    fn small_config() -> ExperimentConfig {
        let mut c = ExperimentConfig::synthetic(
            5,
            SynthSpec {
                n_classes: 3,
                samples_per_class: 6,
                n_bands: 8,
                duration: crate::frontend::DurationStats {
                    mean_ms: 60.0,
                    std_ms: 5.0,
                    min_ms: 20.0,
                },
                pattern: SynthPattern::Mirrored,
                ..SynthSpec::default()
            },
            4,
        );
        c.topology.duplicates = 2;
        c.analysis.k_max = 3;
        c.analysis.repeats = 3;
        c
    }

    #[test]
    fn feature_table_round_trips() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let summary = run_experiment(&cfg, dir.path(), Stage::Encode).unwrap();
        assert!(summary.models.is_empty());
        let text = fs::read_to_string(dir.path().join(FEATURES_FILE)).unwrap();
        let table = FeatureTable::read_csv(text.as_bytes()).unwrap();
        let mut again = Vec::new();
        table.write_csv(&mut again).unwrap();
        assert_eq!(text.split_once('\n').unwrap().1, String::from_utf8(again).unwrap());
        // 8 formants + 36 TDE + 5x2 + 2x2 E-I units.
        assert_eq!(table.matrix.n_cols(), 8 + 36 + 10 + 4);
        assert_eq!(table.ids.len(), 3 * 10);
    }

    #[test]
    fn stage_rerun_matches_full_run() {
        let cfg = small_config();
        let full = tempfile::tempdir().unwrap();
        run_experiment(&cfg, full.path(), Stage::All).unwrap();
        let staged = tempfile::tempdir().unwrap();
        run_experiment(&cfg, staged.path(), Stage::Encode).unwrap();
        run_experiment(&cfg, staged.path(), Stage::Analyze).unwrap();
        for f in ["accuracy.csv", "importance.csv", "few_neuron.csv", "single_neuron.csv", "spikes_per_utterance.csv", "models/kw1_ei2.csv"] {
            assert_eq!(
                fs::read(full.path().join(f)).unwrap(),
                fs::read(staged.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }

    #[test]
    fn analyze_rejects_foreign_features() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&cfg, dir.path(), Stage::Encode).unwrap();
        let other = ExperimentConfig { seed: 6, ..cfg };
        let err = run_experiment(&other, dir.path(), Stage::Analyze).unwrap_err();
        assert!(matches!(err, ExperimentError::Stage { stage: "analyze", .. }));
        assert!(dir.path().join(FAILED_FILE).is_file());
    }

    #[test]
    fn failure_names_stage_and_sample() {
        let mut cfg = small_config();
        cfg.dataset.kind = DatasetKind::Manifest;
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        fs::write(&manifest, "path,label,speaker,split\nmissing.csv,0,a,train\n").unwrap();
        cfg.dataset.manifest = Some(manifest);
        cfg.frontend.n_bands = 8;
        let err = run_experiment(&cfg, &dir.path().join("run"), Stage::All).unwrap_err();
        match &err {
            ExperimentError::Stage { stage, sample, .. } => {
                assert_eq!(*stage, "dataset");
                assert_eq!(sample.as_deref(), Some("missing.csv"));
            }
            other => panic!("{other}"),
        }
        assert_eq!(err.exit_code(), 2);
        assert!(dir.path().join("run").join(FAILED_FILE).is_file());
    }

    #[test]
    fn exported_synthetic_reloads_identically() {
        let cfg = small_config();
        let dir = tempfile::tempdir().unwrap();
        let n = export_synthetic(&cfg, dir.path()).unwrap();
        assert_eq!(n, 30);
        let mut m = cfg.clone();
        m.dataset.kind = DatasetKind::Manifest;
        m.dataset.manifest = Some(dir.path().join("manifest.csv"));
        m.frontend.n_bands = 8;
        let a = load_dataset(&cfg).unwrap();
        let b = load_dataset(&m).unwrap();
        assert_eq!(a.splits, b.splits);
        for (x, y) in a.samples.iter().zip(&b.samples) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.raster.spike_counts(), y.raster.spike_counts());
        }
    }
}
