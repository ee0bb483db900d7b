use rustfft::{num_complex::Complex, FftPlanner};

use super::FrontendError;

/// PCM samples scaled to [-1, 1], interleaved when `channels > 1`.
#[derive(Debug, Clone)]
pub struct PcmAudio {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
    pub channels: u16,
}

impl PcmAudio {
    pub fn mono(samples: Vec<f32>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
            channels: 1,
        }
    }

    pub fn duration_ms(&self) -> f64 {
        let frames = self.samples.len() / self.channels.max(1) as usize;
        frames as f64 * 1000.0 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterbankConfig {
    pub n_bands: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub window_ms: f64,
    pub hop_ms: f64,
}

impl Default for FilterbankConfig {
    fn default() -> Self {
        Self {
            n_bands: 32,
            f_min: 100.0,
            f_max: 4000.0,
            window_ms: 16.0,
            hop_ms: 1.0,
        }
    }
}

impl FilterbankConfig {
    /// `n_bands + 2` log-spaced corner frequencies; band `b` is the triangle
    /// `(edges[b], edges[b+1], edges[b+2])` peaking at `edges[b+1]`.
    pub fn band_edges(&self, sample_rate: u32) -> Vec<f64> {
        let f_max = self.f_max.min(sample_rate as f64 / 2.0);
        let n = self.n_bands + 1;
        let ratio = (f_max / self.f_min).ln();
        (0..=n)
            .map(|i| self.f_min * (ratio * i as f64 / n as f64).exp())
            .collect()
    }

    pub fn band_centers(&self, sample_rate: u32) -> Vec<f64> {
        let edges = self.band_edges(sample_rate);
        edges[1..=self.n_bands].to_vec()
    }
}

/// Band energies, bin-major: `values[bin * n_bands + band]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies {
    pub n_bands: usize,
    pub n_bins: usize,
    pub values: Vec<f64>,
}

impl BandEnergies {
    pub fn new(n_bands: usize, n_bins: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), n_bands * n_bins);
        Self {
            n_bands,
            n_bins,
            values,
        }
    }

    pub fn bin(&self, bin: usize) -> &[f64] {
        &self.values[bin * self.n_bands..(bin + 1) * self.n_bands]
    }
}

/// Short-time triangular filterbank energies on a 1 ms hop.
///
/// Each bin's analysis window (Hann, `window_ms` long) is centred on the
/// middle of the bin; samples outside the signal are treated as zero. The
/// FFT is zero-padded to a resolution of about 4 Hz so that the narrow
/// low-frequency triangles cover several spectral lines.
pub fn filterbank_energies(
    audio: &PcmAudio,
    cfg: &FilterbankConfig,
) -> Result<BandEnergies, FrontendError> {
    if audio.channels != 1 {
        return Err(FrontendError::NotMono(audio.channels));
    }
    if audio.samples.is_empty() {
        return Err(FrontendError::EmptyAudio);
    }
    if audio.sample_rate < 8000 {
        return Err(FrontendError::SampleRateTooLow(audio.sample_rate));
    }
    if cfg.n_bands < 4 {
        return Err(FrontendError::TooFewBands(cfg.n_bands));
    }

    let sr = audio.sample_rate as f64;
    let n_bins = (audio.samples.len() as u64 * 1000 / audio.sample_rate as u64) as usize;
    let hop = sr * cfg.hop_ms / 1000.0;
    let win_len = ((sr * cfg.window_ms / 1000.0).round() as usize).max(2);
    let n_fft = ((sr / 4.0).ceil() as usize).max(win_len).next_power_of_two();

    let window: Vec<f64> = (0..win_len)
        .map(|i| {
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / (win_len - 1) as f64).cos()
        })
        .collect();
    let weights = triangle_weights(cfg, audio.sample_rate, n_fft);

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    let mut power = vec![0.0; n_fft / 2 + 1];
    let mut values = Vec::with_capacity(n_bins * cfg.n_bands);

    for bin in 0..n_bins {
        let centre = (bin as f64 + 0.5) * hop;
        let start = centre.round() as i64 - (win_len / 2) as i64;
        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for (i, w) in window.iter().enumerate() {
            let idx = start + i as i64;
            if idx >= 0 && (idx as usize) < audio.samples.len() {
                buf[i] = Complex::new(audio.samples[idx as usize] as f64 * w, 0.0);
            }
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (p, c) in power.iter_mut().zip(&buf) {
            *p = c.norm_sqr();
        }
        for band in &weights {
            let e: f64 = band.iter().map(|&(k, w)| w * power[k]).sum();
            values.push(e);
        }
    }
    Ok(BandEnergies::new(cfg.n_bands, n_bins, values))
}

/// Sparse unit-sum triangle weights per band over FFT lines.
fn triangle_weights(cfg: &FilterbankConfig, sample_rate: u32, n_fft: usize) -> Vec<Vec<(usize, f64)>> {
    let edges = cfg.band_edges(sample_rate);
    let line_hz = sample_rate as f64 / n_fft as f64;
    (0..cfg.n_bands)
        .map(|b| {
            let (lo, mid, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            let first = (lo / line_hz).ceil() as usize;
            let last = ((hi / line_hz).floor() as usize).min(n_fft / 2);
            let mut w: Vec<(usize, f64)> = (first..=last)
                .filter_map(|k| {
                    let f = k as f64 * line_hz;
                    let v = if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    };
                    (v > 0.0).then_some((k, v))
                })
                .collect();
            let total: f64 = w.iter().map(|&(_, v)| v).sum();
            if total > 0.0 {
                w.iter_mut().for_each(|(_, v)| *v /= total);
            }
            w
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sine(freq: f64, sr: u32, secs: f64) -> PcmAudio {
        let n = (sr as f64 * secs) as usize;
        let samples = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / sr as f64).sin() as f32)
            .collect();
        PcmAudio::mono(samples, sr)
    }

    /// Band whose log-frequency cell (bounded by geometric midpoints between
    /// neighbouring centres) contains `freq`.
    fn band_containing(freq: f64, centers: &[f64]) -> usize {
        let mut best = 0;
        for b in 0..centers.len() {
            let lo = if b == 0 { 0.0 } else { (centers[b - 1] * centers[b]).sqrt() };
            let hi = if b + 1 == centers.len() {
                f64::INFINITY
            } else {
                (centers[b] * centers[b + 1]).sqrt()
            };
            if freq >= lo && freq < hi {
                best = b;
            }
        }
        best
    }

    #[test]
    fn pure_tone_lands_in_its_band() {
        let cfg = FilterbankConfig::default();
        let audio = sine(1000.0, 16000, 0.25);
        let e = filterbank_energies(&audio, &cfg).unwrap();
        let expected = band_containing(1000.0, &cfg.band_centers(16000));
        assert_eq!(expected, 20);
        // Skip the edge bins where the window hangs off the signal.
        for bin in 8..e.n_bins - 8 {
            let row = e.bin(bin);
            let argmax = (0..row.len())
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            assert_eq!(argmax, expected, "bin {bin}");
        }
    }

    #[test]
    fn silence_has_zero_energy() {
        let audio = PcmAudio::mono(vec![0.0; 1600], 16000);
        let e = filterbank_energies(&audio, &FilterbankConfig::default()).unwrap();
        assert!(e.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn one_second_gives_1000_bins() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let samples = (0..16000).map(|_| rng.random_range(-1.0f32..1.0)).collect();
        let e = filterbank_energies(&PcmAudio::mono(samples, 16000), &FilterbankConfig::default()).unwrap();
        assert_eq!(e.n_bins, 1000);
        assert!(e.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn rejects_bad_input() {
        let cfg = FilterbankConfig::default();
        assert!(matches!(
            filterbank_energies(&PcmAudio::mono(vec![], 16000), &cfg),
            Err(FrontendError::EmptyAudio)
        ));
        let stereo = PcmAudio {
            samples: vec![0.0; 64],
            sample_rate: 16000,
            channels: 2,
        };
        assert!(matches!(filterbank_energies(&stereo, &cfg), Err(FrontendError::NotMono(2))));
        assert!(matches!(
            filterbank_energies(&PcmAudio::mono(vec![0.0; 64], 4000), &cfg),
            Err(FrontendError::SampleRateTooLow(4000))
        ));
    }
}
