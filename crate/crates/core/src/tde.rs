//! Time-difference encoder (TDE).
//!
//! A TDE unit is a current-based LIF neuron with two synapses. Spikes on the
//! facilitatory synapse raise a gain that decays with `tau_fac`. Spikes on
//! the trigger synapse inject a current proportional to the instantaneous
//! gain, decaying with `tau_trig`. The burst length therefore shrinks as the
//! delay from facilitatory to trigger spike grows, and a trigger that
//! arrives with no preceding facilitation does nothing.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{bin_charge_factor, decay_factor, Membrane, MembraneParams};
use crate::raster::BIN_WIDTH_MS;

#[derive(Debug, Error, PartialEq)]
pub enum TdeError {
    #[error("facilitatory train has {fac} bins, trigger train has {trig}")]
    LengthMismatch { fac: usize, trig: usize },
    #[error("invalid TDE parameters: {0}")]
    InvalidParams(String),
    #[error("no trigger weight gives exactly {target} spikes at a 1 ms delay")]
    CalibrationFailed { target: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdeParams {
    pub tau_fac_ms: f64,
    pub tau_trig_ms: f64,
    pub w_fac: f64,
    pub w_trig: f64,
    pub tau_mem_ms: f64,
    pub theta: f64,
    pub v_reset: f64,
    pub refractory_ms: f64,
}

impl Default for TdeParams {
    /// Nominal time constants with `w_trig = 1`; use [`calibrate_w_trig`]
    /// to fix the trigger weight.
    fn default() -> Self {
        Self {
            tau_fac_ms: 8.0,
            tau_trig_ms: 2.0,
            w_fac: 1.0,
            w_trig: 1.0,
            tau_mem_ms: 10.0,
            theta: 1.0,
            v_reset: 0.0,
            refractory_ms: 0.0,
        }
    }
}

impl TdeParams {
    pub fn validate(&self) -> Result<(), TdeError> {
        let bad = |m: &str| Err(TdeError::InvalidParams(m.to_string()));
        for (name, tau) in [
            ("tau_fac", self.tau_fac_ms),
            ("tau_trig", self.tau_trig_ms),
            ("tau_mem", self.tau_mem_ms),
        ] {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(&format!("{name} must be positive"));
            }
        }
        if !(self.theta > self.v_reset) {
            return bad("theta must exceed v_reset");
        }
        if self.w_fac < 0.0 || !self.w_fac.is_finite() || !self.w_trig.is_finite() {
            return bad("w_fac must be non-negative and weights finite");
        }
        if self.refractory_ms < 0.0 {
            return bad("refractory must be non-negative");
        }
        Ok(())
    }

    fn membrane(&self) -> MembraneParams {
        MembraneParams {
            tau_ms: self.tau_mem_ms,
            theta: self.theta,
            v_reset: self.v_reset,
            refractory_ms: self.refractory_ms,
        }
    }
}

/// Dynamic state of one TDE unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdeState {
    pub gain: f64,
    pub current: f64,
    pub membrane: Membrane,
}

impl TdeState {
    pub fn new(params: &TdeParams) -> Self {
        Self {
            gain: 0.0,
            current: 0.0,
            membrane: Membrane::new(params.tau_mem_ms),
        }
    }

    pub fn v(&self) -> f64 {
        self.membrane.v
    }
}

/// Precomputed per-bin constants for a parameter set.
#[derive(Debug, Clone, Copy)]
pub struct TdeStepper {
    params: TdeParams,
    membrane: MembraneParams,
    gain_decay: f64,
    current_decay: f64,
    current_charge: f64,
}

impl TdeStepper {
    pub fn new(params: &TdeParams) -> Self {
        Self {
            params: *params,
            membrane: params.membrane(),
            gain_decay: decay_factor(params.tau_fac_ms, BIN_WIDTH_MS),
            current_decay: decay_factor(params.tau_trig_ms, BIN_WIDTH_MS),
            current_charge: bin_charge_factor(params.tau_trig_ms, BIN_WIDTH_MS),
        }
    }

    /// One bin: decay, facilitate, trigger, integrate, threshold.
    #[inline]
    pub fn step(&self, s: &mut TdeState, fac_spike: bool, trig_spike: bool) -> bool {
        s.gain *= self.gain_decay;
        s.current *= self.current_decay;
        s.membrane.decay();
        if fac_spike {
            s.gain += self.params.w_fac;
        }
        if trig_spike {
            s.current += self.params.w_trig * s.gain;
        }
        s.membrane.integrate(s.current * self.current_charge, &self.membrane)
    }
}

/// Advances `state` by one 1 ms bin and reports whether the unit fired.
pub fn tde_step(state: &mut TdeState, params: &TdeParams, fac_spike: bool, trig_spike: bool) -> bool {
    TdeStepper::new(params).step(state, fac_spike, trig_spike)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TdeOutput {
    pub train: Vec<bool>,
    pub count: u32,
}

pub fn simulate_tde(params: &TdeParams, fac_train: &[bool], trig_train: &[bool]) -> Result<TdeOutput, TdeError> {
    if fac_train.len() != trig_train.len() {
        return Err(TdeError::LengthMismatch {
            fac: fac_train.len(),
            trig: trig_train.len(),
        });
    }
    let stepper = TdeStepper::new(params);
    let mut state = TdeState::new(params);
    let train: Vec<bool> = fac_train
        .iter()
        .zip(trig_train)
        .map(|(&f, &t)| stepper.step(&mut state, f, t))
        .collect();
    let count = train.iter().filter(|&&s| s).count() as u32;
    Ok(TdeOutput { train, count })
}

/// Bins simulated after the later of the two input spikes.
const RESPONSE_TAIL_BINS: usize = 200;

/// Spike count for one isolated facilitatory/trigger pair with the trigger
/// `delta_bins` after the facilitatory spike (negative: trigger first).
pub fn pair_response(params: &TdeParams, delta_bins: i64) -> u32 {
    let lead = delta_bins.unsigned_abs() as usize;
    let n = lead + RESPONSE_TAIL_BINS;
    let mut fac = vec![false; n];
    let mut trig = vec![false; n];
    if delta_bins >= 0 {
        fac[0] = true;
        trig[lead] = true;
    } else {
        trig[0] = true;
        fac[lead] = true;
    }
    simulate_tde(params, &fac, &trig)
        .expect("trains have equal length")
        .count
}

/// Output counts of isolated pairs at each time difference (in bins).
pub fn tde_response_curve(params: &TdeParams, delta_bins: &[i64]) -> Vec<u32> {
    delta_bins.iter().map(|&d| pair_response(params, d)).collect()
}

/// Result of fitting `w_trig` to a target burst length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TdeCalibration {
    pub w_trig: f64,
    /// Smallest weight reaching `target_spikes`.
    pub lower: f64,
    /// Smallest weight reaching `target_spikes + 1`.
    pub upper: f64,
    pub target_spikes: u32,
}

/// Smallest `w_trig` (to relative precision 1e-12) whose 1 ms-delay pair
/// response reaches `target` spikes.
fn min_weight_reaching(params: &TdeParams, target: u32) -> f64 {
    let count = |w: f64| pair_response(&TdeParams { w_trig: w, ..*params }, 1);
    let mut hi = 1.0;
    while count(hi) < target {
        hi *= 2.0;
    }
    let mut lo = hi / 2.0;
    while lo > 1e-300 && count(lo) >= target {
        lo /= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if count(mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
        if (hi - lo) <= 1e-12 * hi {
            break;
        }
    }
    hi
}

/// Bisects `w_trig` so that a facilitatory spike followed 1 ms later by a
/// trigger spike yields exactly `target` output spikes. The returned weight
/// is the geometric midpoint of the interval producing exactly `target`.
pub fn calibrate_w_trig(params: &TdeParams, target: u32) -> Result<TdeCalibration, TdeError> {
    params.validate()?;
    if target == 0 || params.w_fac <= 0.0 {
        return Err(TdeError::CalibrationFailed { target });
    }
    let lower = min_weight_reaching(params, target);
    let upper = min_weight_reaching(params, target + 1);
    let w_trig = (lower * upper).sqrt();
    if pair_response(&TdeParams { w_trig, ..*params }, 1) != target {
        return Err(TdeError::CalibrationFailed { target });
    }
    Ok(TdeCalibration {
        w_trig,
        lower,
        upper,
        target_spikes: target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated() -> TdeParams {
        let p = TdeParams::default();
        let cal = calibrate_w_trig(&p, 10).unwrap();
        TdeParams { w_trig: cal.w_trig, ..p }
    }

    #[test]
    fn quiescent_without_input() {
        let p = calibrated();
        let out = simulate_tde(&p, &[false; 100], &[false; 100]).unwrap();
        assert_eq!(out.count, 0);
    }

    #[test]
    fn trigger_without_gain_is_silent() {
        let p = calibrated();
        let mut s = TdeState::new(&p);
        assert!(!tde_step(&mut s, &p, false, true));
        assert_eq!(s.current, 0.0);
        assert_eq!(s.v(), 0.0);
    }

    #[test]
    fn epsc_jump_follows_gain_decay() {
        let p = TdeParams {
            w_fac: 0.7,
            w_trig: 3.0,
            ..TdeParams::default()
        };
        for delta in 1..15usize {
            let mut s = TdeState::new(&p);
            tde_step(&mut s, &p, true, false);
            for _ in 1..delta {
                tde_step(&mut s, &p, false, false);
            }
            let before = s.current * (-1.0 / p.tau_trig_ms).exp();
            tde_step(&mut s, &p, false, true);
            let expected = p.w_trig * p.w_fac * (-(delta as f64) / p.tau_fac_ms).exp();
            assert!(((s.current - before) - expected).abs() < 1e-12 * expected, "delta {delta}");
        }
    }

    #[test]
    fn fac_only_gives_nothing() {
        let p = calibrated();
        let fac: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        assert_eq!(simulate_tde(&p, &fac, &[false; 200]).unwrap().count, 0);
    }

    #[test]
    fn calibration_hits_ten_and_longer_delay_gives_fewer() {
        let p = calibrated();
        assert_eq!(pair_response(&p, 1), 10);
        assert!(pair_response(&p, 10) < 10);
    }

    #[test]
    fn swapped_order_is_silent() {
        let p = calibrated();
        for d in 1..=10 {
            assert_eq!(pair_response(&p, -d), 0);
        }
    }

    #[test]
    fn zero_delay_is_the_maximum() {
        let p = calibrated();
        let curve = tde_response_curve(&p, &(0..=20).collect::<Vec<_>>());
        assert_eq!(curve[0], *curve.iter().max().unwrap());
        assert!(curve[0] >= curve[1]);
    }

    #[test]
    fn curve_non_increasing() {
        let p = calibrated();
        let curve = tde_response_curve(&p, &(1..=20).collect::<Vec<_>>());
        assert!(curve.windows(2).all(|w| w[0] >= w[1]), "{curve:?}");
    }

    #[test]
    fn doubling_trigger_weight_never_reduces_count() {
        let base = calibrated();
        for k in 0..6 {
            let w = base.w_trig * 0.25 * 2f64.powi(k);
            let p = TdeParams { w_trig: w, ..base };
            let q = TdeParams { w_trig: 2.0 * w, ..base };
            for d in 0..=25 {
                assert!(pair_response(&q, d) >= pair_response(&p, d), "w {w} delta {d}");
            }
        }
    }

    #[test]
    fn state_decays_to_nothing() {
        let p = calibrated();
        let mut s = TdeState::new(&p);
        let (mut g, mut i, mut v) = (0.0f64, 0.0f64, 0.0f64);
        tde_step(&mut s, &p, true, false);
        for t in 0..1000 {
            tde_step(&mut s, &p, false, t == 0);
            g = g.max(s.gain.abs());
            i = i.max(s.current.abs());
            v = v.max(s.v().abs());
        }
        assert!(s.gain < 1e-9 * g);
        assert!(s.current < 1e-9 * i);
        assert!(s.v().abs() < 1e-9 * v.max(1e-300) || s.v() == 0.0);
    }

    #[test]
    fn length_mismatch_rejected() {
        let err = simulate_tde(&TdeParams::default(), &[false; 3], &[false; 4]).unwrap_err();
        assert_eq!(err, TdeError::LengthMismatch { fac: 3, trig: 4 });
    }

    #[test]
    fn invalid_params_rejected() {
        let p = TdeParams {
            tau_fac_ms: 0.0,
            ..TdeParams::default()
        };
        assert!(p.validate().is_err());
        let p = TdeParams {
            theta: 0.0,
            ..TdeParams::default()
        };
        assert!(calibrate_w_trig(&p, 10).is_err());
    }
}
