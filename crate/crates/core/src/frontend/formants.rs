use crate::raster::SpikeRaster;

use super::{BandEnergies, FrontendError};

/// Number of formants tracked per bin.
pub const DEFAULT_FORMANTS: usize = 4;

/// Active bands of one 1 ms bin, strictly increasing. Empty means silence.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct FormantFrame {
    bands: Vec<usize>,
}

impl FormantFrame {
    pub fn silent() -> Self {
        Self::default()
    }

    /// Sorts the indices; rejects duplicates.
    pub fn new(mut bands: Vec<usize>) -> Result<Self, FrontendError> {
        bands.sort_unstable();
        if bands.windows(2).any(|w| w[0] == w[1]) {
            return Err(FrontendError::DuplicateBands(bands));
        }
        Ok(Self { bands })
    }

    pub fn bands(&self) -> &[usize] {
        &self.bands
    }

    pub fn is_silent(&self) -> bool {
        self.bands.is_empty()
    }
}

/// 10⁻⁶ of the loudest bin's total energy.
pub fn default_silence_threshold(energies: &BandEnergies) -> f64 {
    let max = (0..energies.n_bins)
        .map(|b| energies.bin(b).iter().sum::<f64>())
        .fold(0.0, f64::max);
    1e-6 * max
}

/// Picks the `k` highest-energy bands of every bin (ties go to the lower
/// band). Bins with no energy, or total energy below `silence_threshold`,
/// become silent frames.
pub fn extract_formants(
    energies: &BandEnergies,
    k: usize,
    silence_threshold: f64,
) -> Result<Vec<FormantFrame>, FrontendError> {
    if k > energies.n_bands {
        return Err(FrontendError::KTooLarge {
            k,
            n_bands: energies.n_bands,
        });
    }
    let mut order: Vec<usize> = Vec::with_capacity(energies.n_bands);
    let frames = (0..energies.n_bins)
        .map(|bin| {
            let row = energies.bin(bin);
            let total: f64 = row.iter().sum();
            if !(total > 0.0) || total < silence_threshold {
                return FormantFrame::silent();
            }
            order.clear();
            order.extend(0..row.len());
            // Stable sort keeps lower indices first among equal energies.
            order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let mut bands = order[..k].to_vec();
            bands.sort_unstable();
            FormantFrame { bands }
        })
        .collect();
    Ok(frames)
}

/// One spike per formant band per bin.
pub fn encode_formant_spikes(frames: &[FormantFrame], n_bands: usize) -> Result<SpikeRaster, FrontendError> {
    for f in frames {
        if let Some(&band) = f.bands.iter().find(|&&b| b >= n_bands) {
            return Err(FrontendError::BandOutOfRange { band, n_bands });
        }
    }
    let events = frames
        .iter()
        .enumerate()
        .flat_map(|(bin, f)| f.bands.iter().map(move |&c| (bin, c)));
    Ok(SpikeRaster::from_events(n_bands, frames.len(), events.collect::<Vec<_>>())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::spike_counts;
    use proptest::prelude::*;

    fn one_bin(row: &[f64]) -> BandEnergies {
        BandEnergies::new(row.len(), 1, row.to_vec())
    }

    #[test]
    fn top_four_with_tie() {
        let mut row = vec![9.0, 7.0, 7.0, 1.0];
        row.extend(std::iter::repeat_n(0.0, 28));
        let frames = extract_formants(&one_bin(&row), 4, 0.0).unwrap();
        assert_eq!(frames[0].bands(), &[0, 1, 2, 3]);
    }

    #[test]
    fn all_equal_prefers_low_bands() {
        let frames = extract_formants(&one_bin(&[2.0; 32]), 4, 0.0).unwrap();
        assert_eq!(frames[0].bands(), &[0, 1, 2, 3]);
    }

    #[test]
    fn ties_resolve_by_index_not_position() {
        let mut row = vec![0.0; 32];
        row[30] = 5.0;
        row[3] = 5.0;
        row[17] = 5.0;
        row[9] = 5.0;
        row[1] = 5.0;
        let frames = extract_formants(&one_bin(&row), 4, 0.0).unwrap();
        assert_eq!(frames[0].bands(), &[1, 3, 9, 17]);
    }

    #[test]
    fn sub_threshold_bin_is_silent() {
        let e = BandEnergies::new(4, 2, vec![1.0, 2.0, 3.0, 4.0, 1e-9, 0.0, 0.0, 0.0]);
        let frames = extract_formants(&e, 4, default_silence_threshold(&e)).unwrap();
        assert!(!frames[0].is_silent());
        assert!(frames[1].is_silent());
        let raster = encode_formant_spikes(&frames, 4).unwrap();
        assert_eq!(raster.events().filter(|&(b, _)| b == 1).count(), 0);
    }

    #[test]
    fn k_larger_than_bands_rejected() {
        assert!(extract_formants(&one_bin(&[1.0; 3]), 4, 0.0).is_err());
    }

    #[test]
    fn ten_voiced_bins_forty_spikes() {
        let frames: Vec<_> = (0..10)
            .map(|i| FormantFrame::new(vec![i, i + 5, i + 10, i + 15]).unwrap())
            .collect();
        let raster = encode_formant_spikes(&frames, 32).unwrap();
        assert_eq!(raster.total_spikes(), 40);
    }

    #[test]
    fn silent_frames_give_empty_raster() {
        let frames = vec![FormantFrame::silent(); 25];
        let raster = encode_formant_spikes(&frames, 32).unwrap();
        assert_eq!(raster.n_bins(), 25);
        assert_eq!(raster.total_spikes(), 0);
    }

    #[test]
    fn staircase_counts_match_step_lengths() {
        // Four tracks stepping up one band every `len` bins, with step
        // lengths 3, 5, 2, 7.
        let steps = [3usize, 5, 2, 7];
        let mut frames = Vec::new();
        for (s, &len) in steps.iter().enumerate() {
            for _ in 0..len {
                frames.push(FormantFrame::new(vec![s, s + 8, s + 16, s + 24]).unwrap());
            }
        }
        let counts = spike_counts(&encode_formant_spikes(&frames, 32).unwrap()).counts;
        let mut expected = vec![0u32; 32];
        for (s, &len) in steps.iter().enumerate() {
            for offset in [0, 8, 16, 24] {
                expected[s + offset] += len as u32;
            }
        }
        assert_eq!(counts, expected);
    }

    #[test]
    fn duplicate_bands_rejected() {
        assert!(FormantFrame::new(vec![1, 1, 2, 3]).is_err());
    }

    proptest! {
        #[test]
        fn k_spikes_per_voiced_bin(
            rows in proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, 32), 1..30),
            k in 1usize..8,
        ) {
            let n_bins = rows.len();
            let e = BandEnergies::new(32, n_bins, rows.concat());
            let frames = extract_formants(&e, k, 0.0).unwrap();
            let raster = encode_formant_spikes(&frames, 32).unwrap();
            for (bin, f) in frames.iter().enumerate() {
                let spikes = raster.events().filter(|&(b, _)| b == bin).count();
                if f.is_silent() {
                    prop_assert_eq!(spikes, 0);
                } else {
                    prop_assert_eq!(spikes, k);
                }
            }
        }

        #[test]
        fn extraction_is_deterministic(row in proptest::collection::vec(0u8..4, 32)) {
            // Coarse values force many ties.
            let row: Vec<f64> = row.into_iter().map(f64::from).collect();
            let a = extract_formants(&one_bin(&row), 4, 0.0).unwrap();
            let b = extract_formants(&one_bin(&row), 4, 0.0).unwrap();
            prop_assert_eq!(&a, &b);
            // Brute-force oracle: pick bands by (energy desc, index asc).
            if row.iter().sum::<f64>() > 0.0 {
                let mut idx: Vec<usize> = (0..32).collect();
                idx.sort_by(|&x, &y| row[y].partial_cmp(&row[x]).unwrap().then(x.cmp(&y)));
                let mut top = idx[..4].to_vec();
                top.sort();
                prop_assert_eq!(a[0].bands(), top.as_slice());
            }
        }
    }
}
