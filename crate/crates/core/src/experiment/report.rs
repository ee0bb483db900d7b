//! Chart rendering from the report CSVs of a run directory.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::analysis::mean_std;
use crate::plot::{bar_chart_svg, line_chart_svg, BarChart, BarGroup, LineChart, LineSeries};

#[derive(Debug, Deserialize)]
struct AccuracyRecord {
    architecture: String,
    train_accuracy: f64,
    test_accuracy: f64,
}

#[derive(Debug, Deserialize)]
struct ReportRecord {
    keyword: u32,
    architecture: String,
    layer: String,
    unit: usize,
    metric: String,
    value: f64,
    std: f64,
}

#[derive(Debug, Deserialize)]
struct FewRecord {
    keyword: u32,
    architecture: String,
    k: usize,
    test_accuracy: f64,
}

fn read_rows<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, String> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))?;
    rdr.deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn write(path: &Path, svg: String) -> Result<(), String> {
    fs::write(path, svg).map_err(|e| format!("{}: {e}", path.display()))
}

/// Renders `plots/*.svg` from `accuracy.csv`, `importance.csv`,
/// `few_neuron.csv`, `single_neuron.csv` and `spikes_per_utterance.csv`.
pub fn render_plots(dir: &Path) -> Result<usize, String> {
    let plots = dir.join("plots");
    fs::create_dir_all(&plots).map_err(|e| format!("{}: {e}", plots.display()))?;
    let mut written = 0;

    // Accuracy per architecture, mean and std over keywords.
    let acc: Vec<AccuracyRecord> = read_rows(&dir.join("accuracy.csv"))?;
    let mut by_arch: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let mut arch_order: Vec<String> = Vec::new();
    for r in &acc {
        if !arch_order.contains(&r.architecture) {
            arch_order.push(r.architecture.clone());
        }
        let e = by_arch.entry(r.architecture.clone()).or_default();
        e.0.push(r.train_accuracy);
        e.1.push(r.test_accuracy);
    }
    let groups = arch_order
        .iter()
        .map(|a| {
            let (tr, te) = &by_arch[a];
            let (mtr, str_) = mean_std(tr);
            let (mte, ste) = mean_std(te);
            BarGroup {
                label: a.clone(),
                values: vec![(mtr, Some(str_)), (mte, Some(ste))],
            }
        })
        .collect();
    write(
        &plots.join("accuracy.svg"),
        bar_chart_svg(&BarChart {
            title: "Linear classification accuracy".into(),
            y_label: "accuracy".into(),
            series: vec!["train".into(), "test".into()],
            groups,
            y_range: Some((0.0, 1.0)),
        }),
    )?;
    written += 1;

    // Importance of the widest architecture per keyword.
    let imp: Vec<ReportRecord> = read_rows(&dir.join("importance.csv"))?;
    let mut widest: BTreeMap<u32, String> = BTreeMap::new();
    for r in &imp {
        widest.insert(r.keyword, r.architecture.clone());
    }
    for (kw, arch) in &widest {
        let groups = imp
            .iter()
            .filter(|r| r.keyword == *kw && &r.architecture == arch)
            .map(|r| BarGroup {
                label: format!("{}/{}", r.layer, r.unit),
                values: vec![(r.value, Some(r.std))],
            })
            .collect();
        write(
            &plots.join(format!("importance_kw{kw}.svg")),
            bar_chart_svg(&BarChart {
                title: format!("Permutation importance, keyword {kw} ({arch})"),
                y_label: "accuracy drop".into(),
                series: vec!["importance".into()],
                groups,
                y_range: None,
            }),
        )?;
        written += 1;
    }

    // Few-neuron test accuracy per architecture.
    let few: Vec<FewRecord> = read_rows(&dir.join("few_neuron.csv"))?;
    let keywords: Vec<u32> = few.iter().map(|r| r.keyword).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for kw in keywords {
        let mut series: Vec<LineSeries> = Vec::new();
        for r in few.iter().filter(|r| r.keyword == kw) {
            match series.iter_mut().find(|s| s.name == r.architecture) {
                Some(s) => s.points.push((r.k as f64, r.test_accuracy)),
                None => series.push(LineSeries {
                    name: r.architecture.clone(),
                    points: vec![(r.k as f64, r.test_accuracy)],
                }),
            }
        }
        write(
            &plots.join(format!("few_neuron_kw{kw}.svg")),
            line_chart_svg(&LineChart {
                title: format!("Few-neuron classification, keyword {kw}"),
                x_label: "neurons".into(),
                y_label: "test accuracy".into(),
                series,
                y_range: Some((0.0, 1.0)),
            }),
        )?;
        written += 1;
    }

    // Ten best single neurons by training accuracy.
    let single: Vec<ReportRecord> = read_rows(&dir.join("single_neuron.csv"))?;
    let spikes: Vec<ReportRecord> = read_rows(&dir.join("spikes_per_utterance.csv"))?;
    let keywords: Vec<u32> = single.iter().map(|r| r.keyword).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    for kw in keywords {
        let metric = |layer: &str, unit: usize, m: &str| {
            single
                .iter()
                .find(|r| r.keyword == kw && r.layer == layer && r.unit == unit && r.metric == m)
                .map_or(f64::NAN, |r| r.value)
        };
        let mut units: Vec<&ReportRecord> = single.iter().filter(|r| r.keyword == kw && r.metric == "train_accuracy").collect();
        units.sort_by(|a, b| b.value.total_cmp(&a.value));
        units.truncate(10);
        let groups = units
            .iter()
            .map(|u| BarGroup {
                label: format!("{}/{}", u.layer, u.unit),
                values: vec![
                    (metric(&u.layer, u.unit, "test_accuracy"), None),
                    (metric(&u.layer, u.unit, "tp_share"), None),
                    (metric(&u.layer, u.unit, "tn_share"), None),
                ],
            })
            .collect();
        write(
            &plots.join(format!("single_neuron_kw{kw}.svg")),
            bar_chart_svg(&BarChart {
                title: format!("Single-neuron classification, keyword {kw}"),
                y_label: "fraction".into(),
                series: vec!["test accuracy".into(), "TP share".into(), "TN share".into()],
                groups,
                y_range: Some((0.0, 1.0)),
            }),
        )?;
        let spike_groups = units
            .iter()
            .map(|u| {
                let s = spikes
                    .iter()
                    .find(|r| r.keyword == kw && r.layer == u.layer && r.unit == u.unit && r.metric == "spikes_per_utterance");
                BarGroup {
                    label: format!("{}/{}", u.layer, u.unit),
                    values: vec![s.map_or((f64::NAN, None), |s| (s.value, Some(s.std)))],
                }
            })
            .collect();
        write(
            &plots.join(format!("spikes_kw{kw}.svg")),
            bar_chart_svg(&BarChart {
                title: format!("Spikes per keyword utterance, keyword {kw}"),
                y_label: "spikes".into(),
                series: vec!["mean".into()],
                groups: spike_groups,
                y_range: None,
            }),
        )?;
        written += 2;
    }
    Ok(written)
}
