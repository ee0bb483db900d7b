//! Instantiated networks: topology plus encoder parameters, and the
//! per-utterance simulation of every encoder layer.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ei::{calibrate_threshold, apply_mismatch, EiElementParams, EiError, EiNeuronParams, EiNeuronSim, MismatchSpec};
use crate::raster::SpikeRaster;
use crate::tde::{TdeError, TdeParams, TdeStepper, TdeState};
use crate::topology::{NetworkTopology, TopologyConfig, TopologyError};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Tde(#[from] TdeError),
    #[error(transparent)]
    Ei(#[from] EiError),
    #[error("input raster has {got} channels, network expects {expected}")]
    InputWidth { got: usize, expected: usize },
}

/// Encoder layers in forward order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layer {
    Formants,
    Tde,
    Ei1,
    Ei2,
}

impl Layer {
    pub const ALL: [Layer; 4] = [Layer::Formants, Layer::Tde, Layer::Ei1, Layer::Ei2];

    pub fn name(self) -> &'static str {
        match self {
            Layer::Formants => "formants",
            Layer::Tde => "tde",
            Layer::Ei1 => "ei1",
            Layer::Ei2 => "ei2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|l| l.name() == s)
    }
}

/// Which encoder layers to simulate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LayerSet {
    pub tde: bool,
    pub ei1: bool,
    pub ei2: bool,
}

impl LayerSet {
    pub fn all() -> Self {
        Self {
            tde: true,
            ei1: true,
            ei2: true,
        }
    }
}

/// How E-I thresholds are set once elements carry mismatch.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Every neuron uses the threshold calibrated on nominal elements.
    #[default]
    Nominal,
    /// Each neuron is calibrated on its own elements, falling back to the
    /// nominal threshold when calibration does not bracket.
    PerNeuron,
}

/// One E-I neuron with its threshold provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiUnit {
    pub params: EiNeuronParams,
    /// True when the threshold was calibrated on this neuron's own elements.
    pub calibrated: bool,
}

/// Nominal encoder parameters shared by every unit before mismatch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderParams {
    pub tde: TdeParams,
    pub ei_element: EiElementParams,
    pub ei_tau_mem_ms: f64,
    pub ei_v_reset: f64,
    pub ei_refractory_ms: f64,
    pub ei_threshold: ThresholdMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub topology: NetworkTopology,
    pub tde: TdeParams,
    pub nominal_theta: f64,
    pub ei1: Vec<EiUnit>,
    pub ei2: Vec<EiUnit>,
}

/// Mismatch element ids: layer-2 ids live above bit 32.
const LAYER2_ELEMENT_BASE: u64 = 1 << 32;

fn instantiate_ei(
    n_units: usize,
    width: usize,
    id_base: u64,
    template: &EiNeuronParams,
    mismatch: &MismatchSpec,
    nominal_theta: f64,
    mode: ThresholdMode,
) -> Result<Vec<EiUnit>, EiError> {
    (0..n_units)
        .into_par_iter()
        .map(|unit| {
            let elements = (0..width)
                .map(|k| {
                    let id = id_base + (unit * width + k) as u64;
                    apply_mismatch(&template.elements[0], mismatch, id)
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut params = EiNeuronParams {
                elements,
                ..template.clone()
            };
            let (theta, calibrated) = match mode {
                ThresholdMode::Nominal => (nominal_theta, false),
                ThresholdMode::PerNeuron => match calibrate_threshold(&params) {
                    Ok(t) => (t, true),
                    Err(EiError::NonBracketing { .. }) => (nominal_theta, false),
                    Err(e) => return Err(e),
                },
            };
            params.theta = theta;
            Ok(EiUnit { params, calibrated })
        })
        .collect()
}

/// Builds the wiring and instantiates parameters: every TDE shares
/// `encoders.tde`; every E-I element gets its own mismatch draw and thresholds
/// follow `encoders.ei_threshold`.
pub fn build_network(
    topology: &TopologyConfig,
    encoders: &EncoderParams,
    mismatch: &MismatchSpec,
) -> Result<Network, NetworkError> {
    let topology = NetworkTopology::new(*topology)?;
    encoders.tde.validate()?;
    encoders.ei_element.validate()?;
    let width = topology.config.window;
    let template = EiNeuronParams {
        elements: vec![encoders.ei_element; width],
        tau_mem_ms: encoders.ei_tau_mem_ms,
        theta: 1.0,
        v_reset: encoders.ei_v_reset,
        refractory_ms: encoders.ei_refractory_ms,
    };
    let nominal_theta = calibrate_threshold(&template)?;
    let mode = encoders.ei_threshold;
    let ei1 = instantiate_ei(topology.ei_layer1.len(), width, 0, &template, mismatch, nominal_theta, mode)?;
    let ei2 = instantiate_ei(
        topology.ei_layer2.len(),
        width,
        LAYER2_ELEMENT_BASE,
        &template,
        mismatch,
        nominal_theta,
        mode,
    )?;
    let fallbacks = ei1.iter().chain(&ei2).filter(|u| !u.calibrated).count();
    if mode == ThresholdMode::PerNeuron && fallbacks > 0 {
        log::info!("{fallbacks} E-I neurons use the nominal threshold (mismatched calibration did not bracket)");
    }
    Ok(Network {
        topology,
        tde: encoders.tde,
        nominal_theta,
        ei1,
        ei2,
    })
}

/// Output rasters of the simulated layers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LayerActivity {
    pub tde: Option<SpikeRaster>,
    pub ei1: Option<SpikeRaster>,
    pub ei2: Option<SpikeRaster>,
}

fn run_ei_layer(units: &[EiUnit], trains: &[Vec<bool>], inputs_of: impl Fn(usize) -> std::ops::Range<usize>) -> Vec<Vec<bool>> {
    units
        .iter()
        .enumerate()
        .map(|(u, unit)| {
            let inputs = inputs_of(u);
            let src: Vec<&[bool]> = inputs.map(|c| trains[c].as_slice()).collect();
            let n_bins = src.first().map_or(0, |t| t.len());
            let mut sim = EiNeuronSim::new(&unit.params);
            (0..n_bins).map(|b| sim.step(|k| src[k][b])).collect()
        })
        .collect()
}

impl Network {
    /// Simulates the requested layers on one formant raster. Layer 2 needs
    /// layer 1 and runs it when asked for.
    pub fn simulate(&self, formants: &SpikeRaster, layers: LayerSet) -> Result<LayerActivity, NetworkError> {
        let n_inputs = self.topology.config.n_inputs;
        if formants.n_channels() != n_inputs {
            return Err(NetworkError::InputWidth {
                got: formants.n_channels(),
                expected: n_inputs,
            });
        }
        let input: Vec<Vec<bool>> = (0..n_inputs).map(|c| formants.channel_train(c)).collect();
        let mut out = LayerActivity::default();
        if layers.tde {
            let stepper = TdeStepper::new(&self.tde);
            let trains: Vec<Vec<bool>> = self
                .topology
                .tde_pairs
                .iter()
                .map(|p| {
                    let mut s = TdeState::new(&self.tde);
                    input[p.fac]
                        .iter()
                        .zip(&input[p.trig])
                        .map(|(&f, &t)| stepper.step(&mut s, f, t))
                        .collect()
                })
                .collect();
            out.tde = Some(SpikeRaster::from_trains(&trains).expect("equal-length trains"));
        }
        if layers.ei1 || layers.ei2 {
            let l1 = run_ei_layer(&self.ei1, &input, |u| self.topology.layer1_inputs(u));
            if layers.ei2 {
                let l2 = run_ei_layer(&self.ei2, &l1, |u| self.topology.layer2_inputs(u));
                out.ei2 = Some(raster_or_empty(&l2, formants.n_bins()));
            }
            if layers.ei1 {
                out.ei1 = Some(raster_or_empty(&l1, formants.n_bins()));
            }
        }
        Ok(out)
    }

    /// CSV `neuron_id,element_id,tau_e,tau_i,w_e,w_i,theta`; neuron ids are
    /// `ei1/<unit>` and `ei2/<unit>`.
    pub fn write_parameter_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "neuron_id,element_id,tau_e,tau_i,w_e,w_i,theta")?;
        for (layer, units) in [("ei1", &self.ei1), ("ei2", &self.ei2)] {
            for (u, unit) in units.iter().enumerate() {
                for (k, el) in unit.params.elements.iter().enumerate() {
                    writeln!(
                        w,
                        "{layer}/{u},{k},{},{},{},{},{}",
                        el.tau_e_ms, el.tau_i_ms, el.w_e, el.w_i, unit.params.theta
                    )?;
                }
            }
        }
        Ok(())
    }
}

fn raster_or_empty(trains: &[Vec<bool>], n_bins: usize) -> SpikeRaster {
    if trains.is_empty() {
        SpikeRaster::empty(0, n_bins)
    } else {
        SpikeRaster::from_trains(trains).expect("equal-length trains")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tde::calibrate_w_trig;

    fn encoders() -> EncoderParams {
        let tde = TdeParams::default();
        let w = calibrate_w_trig(&tde, 10).unwrap().w_trig;
        EncoderParams {
            tde: TdeParams { w_trig: w, ..tde },
            ei_element: EiElementParams::default(),
            ei_tau_mem_ms: 10.0,
            ei_v_reset: 0.0,
            ei_refractory_ms: 0.0,
            ei_threshold: ThresholdMode::Nominal,
        }
    }

    #[test]
    fn paper_network_counts_and_determinism() {
        let m = MismatchSpec::paper_default(7);
        let a = build_network(&TopologyConfig::default(), &encoders(), &m).unwrap();
        assert_eq!(a.topology.unit_counts(), (180, 174, 156));
        assert_eq!(a.ei1.len(), 174);
        assert_eq!(a.ei2.len(), 156);
        let b = build_network(&TopologyConfig::default(), &encoders(), &m).unwrap();
        let dump = |n: &Network| {
            let mut v = Vec::new();
            n.write_parameter_csv(&mut v).unwrap();
            v
        };
        assert_eq!(dump(&a), dump(&b));
        assert!(a.ei1.iter().chain(&a.ei2).all(|u| !u.calibrated && u.params.theta == a.nominal_theta));
    }

    #[test]
    fn per_neuron_thresholds_fall_back_to_nominal() {
        let m = MismatchSpec::paper_default(7);
        let enc = EncoderParams {
            ei_threshold: ThresholdMode::PerNeuron,
            ..encoders()
        };
        let net = build_network(&TopologyConfig::default(), &enc, &m).unwrap();
        for u in net.ei1.iter().chain(&net.ei2) {
            match calibrate_threshold(&u.params) {
                Ok(t) => assert!(u.calibrated && (t - u.params.theta).abs() < 1e-9),
                Err(_) => assert!(!u.calibrated && u.params.theta == net.nominal_theta),
            }
        }
        assert!(net.ei1.iter().any(|u| u.calibrated));
    }

    #[test]
    fn simulate_shapes() {
        let net = build_network(
            &TopologyConfig {
                n_inputs: 8,
                d_max: 3,
                window: 4,
                duplicates: 1,
            },
            &encoders(),
            &MismatchSpec::new(0.0, 0.0, 0).unwrap(),
        )
        .unwrap();
        let events: Vec<_> = (0..60).flat_map(|t| [(t, t / 10), (t, 7 - t / 10)]).collect();
        let input = SpikeRaster::from_events(8, 60, events).unwrap();
        let act = net.simulate(&input, LayerSet::all()).unwrap();
        assert_eq!(act.tde.as_ref().unwrap().n_channels(), 36);
        assert_eq!(act.ei1.as_ref().unwrap().n_channels(), 5);
        assert_eq!(act.ei2.as_ref().unwrap().n_channels(), 2);
        assert!(act.tde.unwrap().total_spikes() > 0);
        assert!(act.ei1.unwrap().total_spikes() > 0);
    }

    #[test]
    fn wrong_width_rejected() {
        let net = build_network(&TopologyConfig::default(), &encoders(), &MismatchSpec::paper_default(1)).unwrap();
        assert!(matches!(
            net.simulate(&SpikeRaster::empty(16, 10), LayerSet::all()),
            Err(NetworkError::InputWidth { got: 16, expected: 32 })
        ));
    }
}
