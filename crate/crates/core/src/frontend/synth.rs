//! Synthetic formant datasets.
//!
//! Every class is a template of formant tracks, each a piecewise-linear
//! path through (time fraction, band position) breakpoints. Samples draw a
//! duration, a constant band offset per track, and optional per-bin
//! position noise around the template.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::seed::stage_rng;

use super::{encode_formant_spikes, FormantFrame, FrontendError, LabeledSample, DEFAULT_FORMANTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationStats {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
}

impl Default for DurationStats {
    fn default() -> Self {
        Self {
            mean_ms: 400.0,
            std_ms: 40.0,
            min_ms: 50.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthPattern {
    /// Independent random templates per class.
    Random,
    /// Odd classes replay the template of the preceding even class backwards
    /// in time, so both classes visit the same bands for the same time and
    /// differ only in temporal order.
    Mirrored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_classes: usize,
    pub samples_per_class: usize,
    pub n_bands: usize,
    pub formants: usize,
    pub duration: DurationStats,
    /// Std of the per-sample constant band offset of every track.
    pub band_jitter: f64,
    /// Std of the per-bin band position noise.
    pub position_noise: f64,
    /// Breakpoints per track (including both ends).
    pub breakpoints: usize,
    /// Largest band excursion between consecutive breakpoints.
    pub max_excursion: f64,
    pub pattern: SynthPattern,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_classes: 2,
            samples_per_class: 50,
            n_bands: 32,
            formants: DEFAULT_FORMANTS,
            duration: DurationStats::default(),
            band_jitter: 0.5,
            position_noise: 0.0,
            breakpoints: 5,
            max_excursion: 3.0,
            pattern: SynthPattern::Random,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), FrontendError> {
        let bad = |m: &str| Err(FrontendError::InvalidSynth(m.to_string()));
        if self.n_classes == 0 {
            return bad("n_classes must be positive");
        }
        if self.formants == 0 || self.formants > self.n_bands {
            return bad("formants must be in 1..=n_bands");
        }
        if self.breakpoints < 2 {
            return bad("breakpoints must be at least 2");
        }
        if self.duration.mean_ms < 1.0 || self.duration.min_ms < 1.0 {
            return bad("durations must be at least 1 ms");
        }
        if self.duration.std_ms < 0.0 || self.band_jitter < 0.0 || self.position_noise < 0.0 {
            return bad("standard deviations must be non-negative");
        }
        if self.max_excursion < 0.0 {
            return bad("max_excursion must be non-negative");
        }
        Ok(())
    }
}

/// Per-track breakpoints `(time fraction in [0,1], band position)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassTemplate {
    pub tracks: Vec<Vec<(f64, f64)>>,
}

impl ClassTemplate {
    fn position(track: &[(f64, f64)], frac: f64) -> f64 {
        match track.iter().position(|&(t, _)| t >= frac) {
            Some(0) => track[0].1,
            Some(i) => {
                let (t0, b0) = track[i - 1];
                let (t1, b1) = track[i];
                if t1 > t0 {
                    b0 + (b1 - b0) * (frac - t0) / (t1 - t0)
                } else {
                    b1
                }
            }
            None => track.last().map_or(0.0, |p| p.1),
        }
    }

    fn reversed(&self) -> Self {
        Self {
            tracks: self
                .tracks
                .iter()
                .map(|t| t.iter().rev().map(|&(f, b)| (1.0 - f, b)).collect())
                .collect(),
        }
    }

    /// Random template: track `j` wanders around the centre of the `j`-th of
    /// `formants` equal slices of the band axis.
    pub fn random(spec: &SynthSpec, seed: u64, class: usize) -> Self {
        let mut rng = stage_rng(seed, "synth-template", class as u64);
        let slice = spec.n_bands as f64 / spec.formants as f64;
        let tracks = (0..spec.formants)
            .map(|j| {
                let lo = j as f64 * slice + 0.5;
                let hi = (j + 1) as f64 * slice - 1.5;
                let clamp = |b: f64| b.clamp(lo, hi.max(lo));
                let mut band = clamp(lo + rng.random::<f64>() * (hi - lo).max(0.0));
                let mut times: Vec<f64> = (1..spec.breakpoints - 1).map(|_| rng.random::<f64>()).collect();
                times.sort_by(f64::total_cmp);
                let mut pts = vec![(0.0, band)];
                for t in times.into_iter().chain(std::iter::once(1.0)) {
                    band = clamp(band + rng.random_range(-1.0..=1.0) * spec.max_excursion);
                    pts.push((t, band));
                }
                pts
            })
            .collect();
        Self { tracks }
    }

    /// Frames of one rendering at `n_bins` bins with per-track offsets.
    fn render<R: Rng>(
        &self,
        n_bins: usize,
        n_bands: usize,
        offsets: &[f64],
        noise: Option<&Normal<f64>>,
        rng: &mut R,
    ) -> Vec<FormantFrame> {
        let mut out = Vec::with_capacity(n_bins);
        let mut taken = vec![false; n_bands];
        for bin in 0..n_bins {
            let frac = if n_bins > 1 {
                bin as f64 / (n_bins - 1) as f64
            } else {
                0.0
            };
            taken.iter_mut().for_each(|t| *t = false);
            let mut bands = Vec::with_capacity(self.tracks.len());
            for (track, off) in self.tracks.iter().zip(offsets) {
                let mut pos = Self::position(track, frac) + off;
                if let Some(n) = noise {
                    pos += n.sample(rng);
                }
                let want = pos.round().clamp(0.0, (n_bands - 1) as f64) as usize;
                let band = nearest_free(&taken, want);
                taken[band] = true;
                bands.push(band);
            }
            out.push(FormantFrame::new(bands).expect("bands are distinct by construction"));
        }
        out
    }
}

/// Closest free band to `want`, preferring the lower one on ties.
fn nearest_free(taken: &[bool], want: usize) -> usize {
    (0..taken.len())
        .flat_map(|d| [want.checked_sub(d), Some(want + d)])
        .flatten()
        .find(|&b| b < taken.len() && !taken[b])
        .expect("more bands than formants")
}

fn templates(spec: &SynthSpec, seed: u64) -> Vec<ClassTemplate> {
    let mut out: Vec<ClassTemplate> = Vec::with_capacity(spec.n_classes);
    for class in 0..spec.n_classes {
        let t = match spec.pattern {
            SynthPattern::Mirrored if class % 2 == 1 => out[class - 1].reversed(),
            _ => ClassTemplate::random(spec, seed, class),
        };
        out.push(t);
    }
    out
}

/// Generates `n_classes × samples_per_class` labeled samples, ordered by
/// class then sample index. Bit-identical for a given `(spec, seed)`.
pub fn synth_keyword_dataset(spec: &SynthSpec, seed: u64) -> Result<Vec<LabeledSample>, FrontendError> {
    spec.validate()?;
    let templates = templates(spec, seed);
    let duration = Normal::new(spec.duration.mean_ms, spec.duration.std_ms)
        .map_err(|e| FrontendError::InvalidSynth(e.to_string()))?;
    let offset = Normal::new(0.0, spec.band_jitter).map_err(|e| FrontendError::InvalidSynth(e.to_string()))?;
    let noise = (spec.position_noise > 0.0)
        .then(|| Normal::new(0.0, spec.position_noise))
        .transpose()
        .map_err(|e| FrontendError::InvalidSynth(e.to_string()))?;

    let jobs: Vec<(usize, usize)> = (0..spec.n_classes)
        .flat_map(|c| (0..spec.samples_per_class).map(move |i| (c, i)))
        .collect();
    jobs.par_iter()
        .map(|&(class, i)| {
            let idx = (class * spec.samples_per_class + i) as u64;
            let mut rng = stage_rng(seed, "synth-sample", idx);
            let ms = duration.sample(&mut rng).max(spec.duration.min_ms);
            let n_bins = ms.round() as usize;
            let offsets: Vec<f64> = (0..spec.formants).map(|_| offset.sample(&mut rng)).collect();
            let frames = templates[class].render(n_bins, spec.n_bands, &offsets, noise.as_ref(), &mut rng);
            let raster = encode_formant_spikes(&frames, spec.n_bands)?;
            LabeledSample::new(raster, class as u32, format!("synth{:02}", i % 10))
        })
        .collect()
}
