//! Formant spike front end: audio or synthetic generators to formant
//! rasters, plus balanced one-vs-rest dataset assembly.

mod balance;
mod filterbank;
mod formants;
pub mod io;
mod synth;

use thiserror::Error;

use crate::raster::{RasterError, SpikeRaster};

pub use balance::{balance_dataset, balance_labels, round_half_up_div, BalancedSplit, SplitRole};
pub use filterbank::{filterbank_energies, BandEnergies, FilterbankConfig, PcmAudio};
pub use formants::{
    default_silence_threshold, encode_formant_spikes, extract_formants, FormantFrame,
    DEFAULT_FORMANTS,
};
pub use synth::{synth_keyword_dataset, ClassTemplate, DurationStats, SynthPattern, SynthSpec};

/// Spoken-digit class names indexed by label.
pub const DIGIT_NAMES: [&str; 11] = [
    "oh", "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
];

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("sample has no bins")]
    EmptySample,
    #[error("audio is empty")]
    EmptyAudio,
    #[error("expected mono audio, got {0} channels")]
    NotMono(u16),
    #[error("sample rate {0} Hz is below 8 kHz")]
    SampleRateTooLow(u32),
    #[error("need at least 4 bands, got {0}")]
    TooFewBands(usize),
    #[error("formant frame has band {band} but only {n_bands} bands exist")]
    BandOutOfRange { band: usize, n_bands: usize },
    #[error("formant frame bands are not distinct: {0:?}")]
    DuplicateBands(Vec<usize>),
    #[error("k = {k} exceeds {n_bands} bands")]
    KTooLarge { k: usize, n_bands: usize },
    #[error("keyword {0} has no samples")]
    KeywordAbsent(u32),
    #[error("invalid synthetic spec: {0}")]
    InvalidSynth(String),
    #[error("{path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Wav(#[from] hound::Error),
}

/// One utterance: a formant raster with its class and speaker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSample {
    pub raster: SpikeRaster,
    pub label: u32,
    pub speaker: String,
}

impl LabeledSample {
    pub fn new(raster: SpikeRaster, label: u32, speaker: impl Into<String>) -> Result<Self, FrontendError> {
        if raster.n_bins() == 0 {
            return Err(FrontendError::EmptySample);
        }
        Ok(Self {
            raster,
            label,
            speaker: speaker.into(),
        })
    }
}
