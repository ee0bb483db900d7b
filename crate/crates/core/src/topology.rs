//! Layer wiring: TDE channel pairs within a lateral distance, E-I windows
//! over adjacent channels with duplicates, and a second E-I layer built per
//! duplicate group.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("need at least 2 input channels, got {0}")]
    TooFewInputs(usize),
    #[error("d_max must be at least 1")]
    ZeroDistance,
    #[error("window width {width} must be in 1..={n_channels}")]
    BadWidth { width: usize, n_channels: usize },
    #[error("duplicates must be at least 1")]
    ZeroDuplicates,
}

/// Ordered TDE pair: the facilitatory input channel precedes the trigger in
/// the encoded direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TdePair {
    pub fac: usize,
    pub trig: usize,
}

/// All ordered pairs `(i, j)` with `1 ≤ |i − j| ≤ d_max`, sorted.
pub fn tde_pairs(n_channels: usize, d_max: usize) -> Vec<TdePair> {
    let mut pairs = Vec::new();
    for fac in 0..n_channels {
        for trig in fac.saturating_sub(d_max)..(fac + d_max + 1).min(n_channels) {
            if trig != fac {
                pairs.push(TdePair { fac, trig });
            }
        }
    }
    pairs
}

/// First-layer E-I neuron reading channels `[start, start + width)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EiWindow {
    pub start: usize,
    pub duplicate: usize,
}

/// Windows ordered duplicate-major: unit id = `duplicate * n_windows + start`.
pub fn ei_windows(n_channels: usize, width: usize, n_duplicates: usize) -> Vec<EiWindow> {
    if width == 0 || width > n_channels {
        return Vec::new();
    }
    let n_windows = n_channels - width + 1;
    (0..n_duplicates)
        .flat_map(|duplicate| (0..n_windows).map(move |start| EiWindow { start, duplicate }))
        .collect()
}

/// Second-layer E-I neuron reading layer-1 units `start..start+width` of
/// duplicate group `group` (indices within the group).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer2Unit {
    pub group: usize,
    pub start: usize,
}

/// Repeats the contiguous-window pattern within each duplicate group of
/// layer 1. Groups smaller than `width` contribute nothing.
pub fn ei_layer2(layer1: &[EiWindow], width: usize) -> Vec<Layer2Unit> {
    let n_groups = layer1.iter().map(|w| w.duplicate + 1).max().unwrap_or(0);
    let mut out = Vec::new();
    for group in 0..n_groups {
        let size = layer1.iter().filter(|w| w.duplicate == group).count();
        if size < width || width == 0 {
            log::warn!("duplicate group {group} has {size} neurons, fewer than window {width}; no layer-2 units");
            continue;
        }
        out.extend((0..size - width + 1).map(|start| Layer2Unit { group, start }));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    pub n_inputs: usize,
    pub d_max: usize,
    pub window: usize,
    pub duplicates: usize,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            n_inputs: 32,
            d_max: 3,
            window: 4,
            duplicates: 6,
        }
    }
}

impl TopologyConfig {
    pub fn validate(&self) -> Result<(), TopologyError> {
        if self.n_inputs < 2 {
            return Err(TopologyError::TooFewInputs(self.n_inputs));
        }
        if self.d_max == 0 {
            return Err(TopologyError::ZeroDistance);
        }
        if self.window == 0 || self.window > self.n_inputs {
            return Err(TopologyError::BadWidth {
                width: self.window,
                n_channels: self.n_inputs,
            });
        }
        if self.duplicates == 0 {
            return Err(TopologyError::ZeroDuplicates);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub config: TopologyConfig,
    pub tde_pairs: Vec<TdePair>,
    pub ei_layer1: Vec<EiWindow>,
    pub ei_layer2: Vec<Layer2Unit>,
}

impl NetworkTopology {
    pub fn new(config: TopologyConfig) -> Result<Self, TopologyError> {
        config.validate()?;
        let ei_layer1 = ei_windows(config.n_inputs, config.window, config.duplicates);
        let ei_layer2 = ei_layer2(&ei_layer1, config.window);
        Ok(Self {
            config,
            tde_pairs: tde_pairs(config.n_inputs, config.d_max),
            ei_layer1,
            ei_layer2,
        })
    }

    pub fn layer1_group_size(&self) -> usize {
        self.config.n_inputs - self.config.window + 1
    }

    /// Input channels of a first-layer E-I unit.
    pub fn layer1_inputs(&self, unit: usize) -> std::ops::Range<usize> {
        let w = self.ei_layer1[unit];
        w.start..w.start + self.config.window
    }

    /// Layer-1 unit ids feeding a layer-2 unit.
    pub fn layer2_inputs(&self, unit: usize) -> std::ops::Range<usize> {
        let u = self.ei_layer2[unit];
        let base = u.group * self.layer1_group_size() + u.start;
        base..base + self.config.window
    }

    /// `(TDE, E-I layer 1, E-I layer 2)` unit counts.
    pub fn unit_counts(&self) -> (usize, usize, usize) {
        (self.tde_pairs.len(), self.ei_layer1.len(), self.ei_layer2.len())
    }

    /// CSV `layer,unit,inputs` (inputs `;`-separated; TDE lists fac then trig).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "layer,unit,inputs")?;
        for c in 0..self.config.n_inputs {
            writeln!(w, "formants,{c},")?;
        }
        for (i, p) in self.tde_pairs.iter().enumerate() {
            writeln!(w, "tde,{i},{};{}", p.fac, p.trig)?;
        }
        let join = |r: std::ops::Range<usize>| r.map(|x| x.to_string()).collect::<Vec<_>>().join(";");
        for i in 0..self.ei_layer1.len() {
            writeln!(w, "ei1,{i},{}", join(self.layer1_inputs(i)))?;
        }
        for i in 0..self.ei_layer2.len() {
            writeln!(w, "ei2,{i},{}", join(self.layer2_inputs(i)))?;
        }
        Ok(())
    }
}
