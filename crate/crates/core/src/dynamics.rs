//! Shared clock-driven building blocks: exponentially decaying traces and
//! the leaky membrane with threshold and reset.

use crate::raster::BIN_WIDTH_MS;

/// `exp(-dt/tau)`.
#[inline]
pub fn decay_factor(tau_ms: f64, dt_ms: f64) -> f64 {
    (-dt_ms / tau_ms).exp()
}

/// Charge delivered over one bin by a current of unit value at the bin
/// start decaying with `tau`: `∫₀^dt e^{-t/τ} dt = τ(1 − e^{−dt/τ})`.
#[inline]
pub fn bin_charge_factor(tau_ms: f64, dt_ms: f64) -> f64 {
    tau_ms * (1.0 - decay_factor(tau_ms, dt_ms))
}

/// A state variable that decays exponentially between bins and jumps on
/// input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpTrace {
    pub value: f64,
    decay: f64,
    charge: f64,
}

impl ExpTrace {
    pub fn new(tau_ms: f64) -> Self {
        Self {
            value: 0.0,
            decay: decay_factor(tau_ms, BIN_WIDTH_MS),
            charge: bin_charge_factor(tau_ms, BIN_WIDTH_MS),
        }
    }

    #[inline]
    pub fn decay(&mut self) {
        self.value *= self.decay;
    }

    /// Integral of the trace over the coming bin.
    #[inline]
    pub fn bin_charge(&self) -> f64 {
        self.value * self.charge
    }
}

/// Leaky integrate-and-fire membrane driven by synaptic charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Membrane {
    pub v: f64,
    pub refractory_remaining_ms: f64,
    decay: f64,
    tau_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MembraneParams {
    pub tau_ms: f64,
    pub theta: f64,
    pub v_reset: f64,
    pub refractory_ms: f64,
}

impl Membrane {
    pub fn new(tau_ms: f64) -> Self {
        Self {
            v: 0.0,
            refractory_remaining_ms: 0.0,
            decay: decay_factor(tau_ms, BIN_WIDTH_MS),
            tau_ms,
        }
    }

    #[inline]
    pub fn decay(&mut self) {
        self.v *= self.decay;
    }

    /// Integrates `charge` and applies threshold, reset and refractoriness.
    /// Returns whether the neuron fired in this bin.
    #[inline]
    pub fn integrate(&mut self, charge: f64, p: &MembraneParams) -> bool {
        if self.refractory_remaining_ms > 0.0 {
            self.refractory_remaining_ms = (self.refractory_remaining_ms - BIN_WIDTH_MS).max(0.0);
            self.v = p.v_reset;
            return false;
        }
        self.v += charge / self.tau_ms;
        if self.v >= p.theta {
            self.v = p.v_reset;
            self.refractory_remaining_ms = p.refractory_ms;
            true
        } else {
            false
        }
    }
}
