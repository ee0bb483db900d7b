//! Time-binned spike rasters.
//!
//! A [`SpikeRaster`] holds binary events on `n_channels` channels over
//! `n_bins` bins of fixed width (1 ms). At most one spike per channel per
//! bin can be represented. Rasters up to [`DENSE_MAX_BINS`] bins are stored
//! as a dense channel-major boolean matrix, longer ones as a sorted event
//! list.

use std::io::{BufRead, Write};

use thiserror::Error;

/// Longest raster (in bins) stored densely.
pub const DENSE_MAX_BINS: usize = 1_000_000;

/// Bin width shared by every raster in a run.
pub const BIN_WIDTH_MS: f64 = 1.0;

#[derive(Debug, Error)]
pub enum RasterError {
    #[error("channel index {channel} out of range for {n_channels} channels")]
    ChannelOutOfRange { channel: usize, n_channels: usize },
    #[error("bin index {bin} out of range for {n_bins} bins")]
    BinOutOfRange { bin: usize, n_bins: usize },
    #[error("cannot concatenate rasters with {left} and {right} bins")]
    BinCountMismatch { left: usize, right: usize },
    #[error("cannot combine rasters with bin widths {left} us and {right} us")]
    BinWidthMismatch { left: u32, right: u32 },
    #[error("raster file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bin width in microseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinWidth(pub u32);

impl BinWidth {
    pub const ONE_MS: BinWidth = BinWidth(1000);

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

impl Default for BinWidth {
    fn default() -> Self {
        Self::ONE_MS
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Storage {
    /// `bits[channel * n_bins + bin]`
    Dense(Vec<bool>),
    /// Sorted by (bin, channel), no duplicates.
    Sparse(Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub struct SpikeRaster {
    n_channels: usize,
    n_bins: usize,
    bin_width: BinWidth,
    storage: Storage,
}

impl PartialEq for SpikeRaster {
    fn eq(&self, other: &Self) -> bool {
        self.n_channels == other.n_channels
            && self.n_bins == other.n_bins
            && self.bin_width == other.bin_width
            && self.events().eq(other.events())
    }
}

impl Eq for SpikeRaster {}

impl SpikeRaster {
    /// An empty raster (no events).
    pub fn empty(n_channels: usize, n_bins: usize) -> Self {
        let storage = if n_bins <= DENSE_MAX_BINS {
            Storage::Dense(vec![false; n_channels * n_bins])
        } else {
            Storage::Sparse(Vec::new())
        };
        Self {
            n_channels,
            n_bins,
            bin_width: BinWidth::ONE_MS,
            storage,
        }
    }

    /// Builds a raster from `(bin, channel)` events. Duplicate events collapse
    /// into a single spike.
    pub fn from_events<I>(n_channels: usize, n_bins: usize, events: I) -> Result<Self, RasterError>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut raster = Self::empty(n_channels, n_bins);
        match &mut raster.storage {
            Storage::Dense(bits) => {
                for (bin, channel) in events {
                    check_event(bin, channel, n_bins, n_channels)?;
                    bits[channel * n_bins + bin] = true;
                }
            }
            Storage::Sparse(list) => {
                for (bin, channel) in events {
                    check_event(bin, channel, n_bins, n_channels)?;
                    list.push((bin, channel));
                }
                list.sort_unstable();
                list.dedup();
            }
        }
        Ok(raster)
    }

    /// Builds a raster from one boolean train per channel. All trains must
    /// have the same length.
    pub fn from_trains(trains: &[Vec<bool>]) -> Result<Self, RasterError> {
        let n_bins = trains.first().map_or(0, Vec::len);
        for t in trains {
            if t.len() != n_bins {
                return Err(RasterError::BinCountMismatch {
                    left: n_bins,
                    right: t.len(),
                });
            }
        }
        if n_bins <= DENSE_MAX_BINS {
            let bits = trains.iter().flat_map(|t| t.iter().copied()).collect();
            Ok(Self {
                n_channels: trains.len(),
                n_bins,
                bin_width: BinWidth::ONE_MS,
                storage: Storage::Dense(bits),
            })
        } else {
            let events = trains.iter().enumerate().flat_map(|(c, t)| {
                t.iter()
                    .enumerate()
                    .filter(|(_, &s)| s)
                    .map(move |(b, _)| (b, c))
            });
            Self::from_events(trains.len(), n_bins, events)
        }
    }

    pub fn n_channels(&self) -> usize {
        self.n_channels
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn bin_width(&self) -> BinWidth {
        self.bin_width
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.storage, Storage::Dense(_))
    }

    pub fn fires(&self, channel: usize, bin: usize) -> bool {
        if channel >= self.n_channels || bin >= self.n_bins {
            return false;
        }
        match &self.storage {
            Storage::Dense(bits) => bits[channel * self.n_bins + bin],
            Storage::Sparse(list) => list.binary_search(&(bin, channel)).is_ok(),
        }
    }

    /// Boolean spike train of one channel.
    pub fn channel_train(&self, channel: usize) -> Vec<bool> {
        assert!(channel < self.n_channels, "channel {channel} out of range");
        match &self.storage {
            Storage::Dense(bits) => {
                bits[channel * self.n_bins..(channel + 1) * self.n_bins].to_vec()
            }
            Storage::Sparse(list) => {
                let mut train = vec![false; self.n_bins];
                for &(b, c) in list {
                    if c == channel {
                        train[b] = true;
                    }
                }
                train
            }
        }
    }

    /// All events as `(bin, channel)`, sorted by bin then channel.
    pub fn events(&self) -> Box<dyn Iterator<Item = (usize, usize)> + '_> {
        match &self.storage {
            Storage::Dense(bits) => {
                let n_bins = self.n_bins;
                let n_channels = self.n_channels;
                Box::new((0..n_bins).flat_map(move |b| {
                    (0..n_channels)
                        .filter(move |&c| bits[c * n_bins + b])
                        .map(move |c| (b, c))
                }))
            }
            Storage::Sparse(list) => Box::new(list.iter().copied()),
        }
    }

    pub fn total_spikes(&self) -> u64 {
        match &self.storage {
            Storage::Dense(bits) => bits.iter().filter(|&&b| b).count() as u64,
            Storage::Sparse(list) => list.len() as u64,
        }
    }

    pub fn spike_counts(&self) -> CountVector {
        spike_counts(self)
    }
}

fn check_event(bin: usize, channel: usize, n_bins: usize, n_channels: usize) -> Result<(), RasterError> {
    if channel >= n_channels {
        return Err(RasterError::ChannelOutOfRange { channel, n_channels });
    }
    if bin >= n_bins {
        return Err(RasterError::BinOutOfRange { bin, n_bins });
    }
    Ok(())
}

/// Per-channel spike counts of one raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountVector {
    pub counts: Vec<u32>,
}

impl CountVector {
    pub fn n_channels(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }
}

/// Number of bins in which each channel fires.
pub fn spike_counts(raster: &SpikeRaster) -> CountVector {
    let counts = match &raster.storage {
        Storage::Dense(bits) => (0..raster.n_channels)
            .map(|c| {
                bits[c * raster.n_bins..(c + 1) * raster.n_bins]
                    .iter()
                    .filter(|&&b| b)
                    .count() as u32
            })
            .collect(),
        Storage::Sparse(list) => {
            let mut counts = vec![0u32; raster.n_channels];
            for &(_, c) in list {
                counts[c] += 1;
            }
            counts
        }
    };
    CountVector { counts }
}

/// Stacks the channels of `b` after those of `a`.
pub fn concat_channels(a: &SpikeRaster, b: &SpikeRaster) -> Result<SpikeRaster, RasterError> {
    if a.bin_width != b.bin_width {
        return Err(RasterError::BinWidthMismatch {
            left: a.bin_width.0,
            right: b.bin_width.0,
        });
    }
    // A channel-less raster carries no timing information and is the identity.
    if b.n_channels == 0 && a.n_channels > 0 {
        return Ok(a.clone());
    }
    if a.n_channels == 0 && b.n_channels > 0 {
        return Ok(b.clone());
    }
    if a.n_bins != b.n_bins {
        return Err(RasterError::BinCountMismatch {
            left: a.n_bins,
            right: b.n_bins,
        });
    }
    let n_bins = a.n_bins;
    let mut out = match (&a.storage, &b.storage) {
        (Storage::Dense(x), Storage::Dense(y)) => {
            let mut bits = Vec::with_capacity(x.len() + y.len());
            bits.extend_from_slice(x);
            bits.extend_from_slice(y);
            SpikeRaster {
                n_channels: a.n_channels + b.n_channels,
                n_bins,
                bin_width: a.bin_width,
                storage: Storage::Dense(bits),
            }
        }
        _ => {
            let shift = a.n_channels;
            let events = a.events().chain(b.events().map(|(t, c)| (t, c + shift)));
            SpikeRaster::from_events(a.n_channels + b.n_channels, n_bins, events.collect::<Vec<_>>())?
        }
    };
    out.bin_width = a.bin_width;
    Ok(out)
}

/// Writes the `bin,channel` event CSV (LF line endings, sorted events).
pub fn write_raster_csv<W: Write>(raster: &SpikeRaster, mut w: W) -> Result<(), RasterError> {
    w.write_all(b"bin,channel\n")?;
    for (bin, channel) in raster.events() {
        writeln!(w, "{bin},{channel}")?;
    }
    Ok(())
}

/// Reads a `bin,channel` event CSV. Lines starting with `#` are skipped.
/// The file does not carry the raster extent, so it is supplied by the caller.
pub fn read_raster_csv<R: BufRead>(
    r: R,
    n_channels: usize,
    n_bins: usize,
) -> Result<SpikeRaster, RasterError> {
    let mut events = Vec::new();
    let mut saw_header = false;
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !saw_header {
            if line.trim() != "bin,channel" {
                return Err(RasterError::Parse {
                    line: i + 1,
                    msg: format!("expected header `bin,channel`, got `{line}`"),
                });
            }
            saw_header = true;
            continue;
        }
        let (b, c) = line.split_once(',').ok_or_else(|| RasterError::Parse {
            line: i + 1,
            msg: "expected two fields".into(),
        })?;
        let parse = |s: &str| {
            s.trim().parse::<usize>().map_err(|e| RasterError::Parse {
                line: i + 1,
                msg: e.to_string(),
            })
        };
        events.push((parse(b)?, parse(c)?));
    }
    SpikeRaster::from_events(n_channels, n_bins, events)
}
