//! Spiking temporal encoders for few-neuron keyword spotting.
//!
//! The pipeline turns utterances into formant spike rasters, runs them
//! through time-difference encoders (TDE) and disynaptic excitatory-inhibitory
//! (E-I) element layers, reduces every unit to a spike count, and fits
//! L2-regularized logistic readouts whose features are then ranked by
//! permutation importance.

pub mod analysis;
pub mod dynamics;
pub mod ei;
pub mod experiment;
pub mod frontend;
pub mod network;
pub mod plot;
pub mod raster;
pub mod readout;
pub mod seed;
pub mod tde;
pub mod topology;
