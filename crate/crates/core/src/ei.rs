//! Disynaptic excitatory-inhibitory (E-I) elements.
//!
//! Every presynaptic connection carries one excitatory and one inhibitory
//! exponential current. With a slower excitatory and a faster, stronger
//! inhibitory component the summed kernel is negative right after the
//! presynaptic spike and turns positive later, which acts as a delayed
//! excitation. A neuron sums the kernels of its elements on a leaky
//! membrane and fires on threshold.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{ExpTrace, Membrane, MembraneParams};

/// Redraws allowed before a mismatch specification is declared pathological.
pub const MAX_MISMATCH_REDRAWS: usize = 1000;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EiError {
    #[error("invalid E-I element: {0}")]
    InvalidElement(String),
    #[error("mismatch sigma {0} outside [0, 1)")]
    InvalidSigma(f64),
    #[error("element {element_id}: no valid mismatch draw in {MAX_MISMATCH_REDRAWS} attempts")]
    MismatchRejected { element_id: u64 },
    #[error("neuron has {elements} elements but {inputs} input trains")]
    InputCount { elements: usize, inputs: usize },
    #[error("input train {index} has {len} bins, expected {expected}")]
    LengthMismatch { index: usize, len: usize, expected: usize },
    #[error("no threshold separates 4 coincident inputs (peak {peak_all}) from 3 (peak {peak_subset})")]
    NonBracketing { peak_all: f64, peak_subset: f64 },
    #[error("calibration needs at least 2 elements, got {0}")]
    TooFewElements(usize),
}

/// Kernel parameters of one E-I element. Times in ms, weights in nA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EiElementParams {
    pub tau_e_ms: f64,
    pub tau_i_ms: f64,
    pub w_e: f64,
    pub w_i: f64,
}

impl Default for EiElementParams {
    fn default() -> Self {
        Self {
            tau_e_ms: 1.5,
            tau_i_ms: 1.0,
            w_e: 105.0,
            w_i: -147.0,
        }
    }
}

impl EiElementParams {
    /// Delayed-excitation regime: `tau_e > tau_i > 0`, `w_e > 0`, `w_i < 0`,
    /// and the inhibitory current falls off faster than the excitatory one
    /// at onset (`-w_i/tau_i > w_e/tau_e`), so the kernel peaks strictly
    /// after the presynaptic spike.
    pub fn is_valid(&self) -> bool {
        self.tau_i_ms > 0.0
            && self.tau_e_ms > self.tau_i_ms
            && self.w_e > 0.0
            && self.w_i < 0.0
            && -self.w_i / self.tau_i_ms > self.w_e / self.tau_e_ms
            && [self.tau_e_ms, self.tau_i_ms, self.w_e, self.w_i]
                .iter()
                .all(|v| v.is_finite())
    }

    pub fn validate(&self) -> Result<(), EiError> {
        if self.is_valid() {
            Ok(())
        } else {
            Err(EiError::InvalidElement(format!(
                "need tau_e > tau_i > 0, w_e > 0, w_i < 0, -w_i/tau_i > w_e/tau_e; got {self:?}"
            )))
        }
    }

    /// Net charge of one kernel, `w_e·tau_e + w_i·tau_i` (nA·ms).
    pub fn net_charge(&self) -> f64 {
        self.w_e * self.tau_e_ms + self.w_i * self.tau_i_ms
    }

    /// Time where the kernel changes sign, if it does.
    pub fn zero_crossing_ms(&self) -> Option<f64> {
        let ratio = -self.w_i / self.w_e;
        let rate = 1.0 / self.tau_i_ms - 1.0 / self.tau_e_ms;
        (ratio > 1.0).then(|| ratio.ln() / rate)
    }

    /// Time of the excitatory peak (`dI/dt = 0`), if the kernel has one.
    pub fn peak_time_ms(&self) -> Option<f64> {
        let ratio = (-self.w_i / self.tau_i_ms) / (self.w_e / self.tau_e_ms);
        let rate = 1.0 / self.tau_i_ms - 1.0 / self.tau_e_ms;
        (ratio > 1.0).then(|| ratio.ln() / rate)
    }
}

/// Summed excitatory and inhibitory current `t` ms after one presynaptic
/// spike.
pub fn ei_kernel(p: &EiElementParams, t_ms: f64) -> f64 {
    p.w_e * (-t_ms / p.tau_e_ms).exp() + p.w_i * (-t_ms / p.tau_i_ms).exp()
}

/// Relative Gaussian mismatch on time constants and weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MismatchSpec {
    sigma_tau: f64,
    sigma_w: f64,
    seed: u64,
}

impl MismatchSpec {
    pub fn new(sigma_tau: f64, sigma_w: f64, seed: u64) -> Result<Self, EiError> {
        for s in [sigma_tau, sigma_w] {
            if !(0.0..1.0).contains(&s) {
                return Err(EiError::InvalidSigma(s));
            }
        }
        Ok(Self {
            sigma_tau,
            sigma_w,
            seed,
        })
    }

    /// The 50 % spread used for all E-I synapses.
    pub fn paper_default(seed: u64) -> Self {
        Self::new(0.5, 0.5, seed).expect("0.5 is in range")
    }

    pub fn sigma_tau(&self) -> f64 {
        self.sigma_tau
    }

    pub fn sigma_w(&self) -> f64 {
        self.sigma_w
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Multiplies each of `tau_e, tau_i, w_e, w_i` by an independent `N(1, σ²)`
/// factor, redrawing all four until the element stays in the
/// delayed-excitation regime.
///
/// Draws come from ChaCha8 seeded with `spec.seed` on stream `element_id`;
/// within an attempt the factors are taken in the order listed above. The
/// result depends only on `(seed, element_id)`.
pub fn apply_mismatch(
    nominal: &EiElementParams,
    spec: &MismatchSpec,
    element_id: u64,
) -> Result<EiElementParams, EiError> {
    nominal.validate()?;
    if spec.sigma_tau == 0.0 && spec.sigma_w == 0.0 {
        return Ok(*nominal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(element_id);
    for _ in 0..MAX_MISMATCH_REDRAWS {
        let mut factor = |sigma: f64| {
            let z: f64 = StandardNormal.sample(&mut rng);
            1.0 + sigma * z
        };
        let drawn = EiElementParams {
            tau_e_ms: nominal.tau_e_ms * factor(spec.sigma_tau),
            tau_i_ms: nominal.tau_i_ms * factor(spec.sigma_tau),
            w_e: nominal.w_e * factor(spec.sigma_w),
            w_i: nominal.w_i * factor(spec.sigma_w),
        };
        if drawn.is_valid() {
            return Ok(drawn);
        }
    }
    Err(EiError::MismatchRejected { element_id })
}

/// A neuron with one E-I element per presynaptic channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EiNeuronParams {
    pub elements: Vec<EiElementParams>,
    pub tau_mem_ms: f64,
    pub theta: f64,
    pub v_reset: f64,
    pub refractory_ms: f64,
}

impl EiNeuronParams {
    /// Nominal elements with threshold not yet calibrated (`theta = 1`).
    pub fn nominal(n_elements: usize) -> Self {
        Self {
            elements: vec![EiElementParams::default(); n_elements],
            tau_mem_ms: 10.0,
            theta: 1.0,
            v_reset: 0.0,
            refractory_ms: 0.0,
        }
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

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EiOutput {
    pub train: Vec<bool>,
    pub count: u32,
}

/// Clock-driven simulation state for one neuron.
pub struct EiNeuronSim<'a> {
    params: &'a EiNeuronParams,
    membrane_params: MembraneParams,
    exc: Vec<ExpTrace>,
    inh: Vec<ExpTrace>,
    pub membrane: Membrane,
}

impl<'a> EiNeuronSim<'a> {
    pub fn new(params: &'a EiNeuronParams) -> Self {
        Self {
            params,
            membrane_params: params.membrane(),
            exc: params.elements.iter().map(|e| ExpTrace::new(e.tau_e_ms)).collect(),
            inh: params.elements.iter().map(|e| ExpTrace::new(e.tau_i_ms)).collect(),
            membrane: Membrane::new(params.tau_mem_ms),
        }
    }

    /// One bin. `spiking(k)` tells whether element `k` receives a spike.
    #[inline]
    pub fn step(&mut self, spiking: impl Fn(usize) -> bool) -> bool {
        self.membrane.decay();
        let mut charge = 0.0;
        for (k, el) in self.params.elements.iter().enumerate() {
            let (e, i) = (&mut self.exc[k], &mut self.inh[k]);
            e.decay();
            i.decay();
            if spiking(k) {
                e.value += el.w_e;
                i.value += el.w_i;
            }
            charge += e.bin_charge() + i.bin_charge();
        }
        self.membrane.integrate(charge, &self.membrane_params)
    }
}

pub fn simulate_ei_neuron(neuron: &EiNeuronParams, inputs: &[&[bool]]) -> Result<EiOutput, EiError> {
    if inputs.len() != neuron.elements.len() {
        return Err(EiError::InputCount {
            elements: neuron.elements.len(),
            inputs: inputs.len(),
        });
    }
    let n_bins = inputs.first().map_or(0, |t| t.len());
    for (index, t) in inputs.iter().enumerate() {
        if t.len() != n_bins {
            return Err(EiError::LengthMismatch {
                index,
                len: t.len(),
                expected: n_bins,
            });
        }
    }
    let mut sim = EiNeuronSim::new(neuron);
    let train: Vec<bool> = (0..n_bins).map(|b| sim.step(|k| inputs[k][b])).collect();
    let count = train.iter().filter(|&&s| s).count() as u32;
    Ok(EiOutput { train, count })
}

/// Bins simulated when probing coincidence responses.
const PROBE_BINS: usize = 100;

/// Whether the neuron fires at least once after one coincident spike on
/// each element in `active`.
pub fn fires_on_coincidence(neuron: &EiNeuronParams, active: &[usize]) -> bool {
    let mut sim = EiNeuronSim::new(neuron);
    (0..PROBE_BINS).any(|b| sim.step(|k| b == 0 && active.contains(&k)))
}

/// Highest membrane value reached (with no threshold) after coincident
/// input on `active`.
pub fn coincidence_peak(neuron: &EiNeuronParams, active: &[usize]) -> f64 {
    let probe = EiNeuronParams {
        theta: f64::INFINITY,
        ..neuron.clone()
    };
    let mut sim = EiNeuronSim::new(&probe);
    let mut peak = f64::NEG_INFINITY;
    for b in 0..PROBE_BINS {
        sim.step(|k| b == 0 && active.contains(&k));
        peak = peak.max(sim.membrane.v);
    }
    peak
}

/// Largest threshold at which coincident input on `active` still fires,
/// found by bisection on the spiking simulation.
fn firing_boundary(neuron: &EiNeuronParams, active: &[usize]) -> Option<f64> {
    let fires = |theta: f64| {
        fires_on_coincidence(
            &EiNeuronParams {
                theta,
                ..neuron.clone()
            },
            active,
        )
    };
    let mut lo = neuron.v_reset.max(0.0);
    if !fires(lo.max(f64::MIN_POSITIVE)) {
        return None;
    }
    lo = lo.max(f64::MIN_POSITIVE);
    let mut hi = 1.0f64.max(2.0 * lo);
    while fires(hi) {
        hi *= 2.0;
        if hi > 1e300 {
            return None;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if fires(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-12 * hi {
            break;
        }
    }
    Some(lo)
}

/// Threshold such that one coincident spike on every element fires the
/// neuron while coincident spikes on any subset missing one element do not.
///
/// Both firing boundaries are located by bisection and the threshold is set
/// halfway between them.
pub fn calibrate_threshold(neuron: &EiNeuronParams) -> Result<f64, EiError> {
    let n = neuron.elements.len();
    if n < 2 {
        return Err(EiError::TooFewElements(n));
    }
    for el in &neuron.elements {
        el.validate()?;
    }
    let all: Vec<usize> = (0..n).collect();
    let subsets: Vec<Vec<usize>> = (0..n)
        .map(|skip| all.iter().copied().filter(|&k| k != skip).collect())
        .collect();
    let peak_all = coincidence_peak(neuron, &all);
    let peak_subset = subsets
        .iter()
        .map(|s| coincidence_peak(neuron, s))
        .fold(f64::NEG_INFINITY, f64::max);
    let non_bracketing = EiError::NonBracketing { peak_all, peak_subset };

    let upper = firing_boundary(neuron, &all).ok_or(non_bracketing.clone())?;
    let lower = subsets
        .iter()
        .filter_map(|s| firing_boundary(neuron, s))
        .fold(neuron.v_reset.max(0.0), f64::max);
    if upper <= lower {
        return Err(non_bracketing);
    }
    let theta = 0.5 * (lower + upper);
    let candidate = EiNeuronParams {
        theta,
        ..neuron.clone()
    };
    if !fires_on_coincidence(&candidate, &all) || subsets.iter().any(|s| fires_on_coincidence(&candidate, s)) {
        return Err(non_bracketing);
    }
    Ok(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated_nominal() -> EiNeuronParams {
        let mut n = EiNeuronParams::nominal(4);
        n.theta = calibrate_threshold(&n).unwrap();
        n
    }

    #[test]
    fn onset_is_net_inhibitory() {
        assert!((ei_kernel(&EiElementParams::default(), 0.0) + 42.0).abs() < 1e-12);
    }

    #[test]
    fn closed_form_landmarks() {
        let p = EiElementParams::default();
        let t0 = p.zero_crossing_ms().unwrap();
        assert!((t0 - 3.0 * 1.4f64.ln()).abs() < 1e-12);
        assert!(ei_kernel(&p, t0).abs() < 1e-9);
        let tp = p.peak_time_ms().unwrap();
        assert!((tp - 3.0 * 2.1f64.ln()).abs() < 1e-12);
        assert!((ei_kernel(&p, tp) - 7.94).abs() < 0.01);
    }

    #[test]
    fn kernel_has_one_sign_change() {
        let p = EiElementParams::default();
        let signs: Vec<bool> = (1..20_000).map(|i| ei_kernel(&p, i as f64 * 1e-3) > 0.0).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert_eq!(changes, 1);
        assert!(!signs[0]);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let spec = MismatchSpec::new(0.0, 0.0, 3).unwrap();
        let p = EiElementParams::default();
        assert_eq!(apply_mismatch(&p, &spec, 12).unwrap(), p);
    }

    #[test]
    fn sigma_out_of_range_rejected() {
        assert_eq!(MismatchSpec::new(1.5, 0.5, 0).unwrap_err(), EiError::InvalidSigma(1.5));
        assert!(MismatchSpec::new(0.5, -0.1, 0).is_err());
    }

    #[test]
    fn mismatch_is_reproducible_and_valid() {
        let spec = MismatchSpec::paper_default(99);
        let p = EiElementParams::default();
        for id in 0..500 {
            let a = apply_mismatch(&p, &spec, id).unwrap();
            assert_eq!(a, apply_mismatch(&p, &spec, id).unwrap());
            assert!(a.tau_e_ms > a.tau_i_ms && a.tau_i_ms > 0.0);
            assert!(a.w_e > 0.0 && a.w_i < 0.0);
        }
        assert_ne!(apply_mismatch(&p, &spec, 0).unwrap(), apply_mismatch(&p, &spec, 1).unwrap());
    }

    #[test]
    fn mismatched_delays_stay_positive() {
        let spec = MismatchSpec::paper_default(5);
        for id in 0..1000 {
            let el = apply_mismatch(&EiElementParams::default(), &spec, id).unwrap();
            let t = el.peak_time_ms().expect("valid elements have a delayed peak");
            assert!(t > 0.0, "{el:?}");
            // Grid argmax agrees with the closed form.
            let step = (3.0 * t + 1.0) / 20_000.0;
            let grid = (0..20_000)
                .map(|i| i as f64 * step)
                .max_by(|a, b| ei_kernel(&el, *a).total_cmp(&ei_kernel(&el, *b)))
                .unwrap();
            assert!(grid > 0.0 && (grid - t).abs() < 2.0 * step, "{el:?}: grid {grid} vs {t}");
        }
    }

    #[test]
    fn four_coincident_fire_three_do_not() {
        let n = calibrated_nominal();
        assert!(fires_on_coincidence(&n, &[0, 1, 2, 3]));
        for skip in 0..4 {
            let subset: Vec<usize> = (0..4).filter(|&k| k != skip).collect();
            assert!(!fires_on_coincidence(&n, &subset));
        }
    }

    #[test]
    fn calibrated_theta_between_three_and_four_single_peaks() {
        let n = calibrated_nominal();
        let single = coincidence_peak(&n, &[0]);
        assert!(n.theta > 3.0 * single && n.theta <= 4.0 * single, "{} vs {single}", n.theta);
    }

    #[test]
    fn single_spike_subthreshold() {
        let n = calibrated_nominal();
        let mut t0 = vec![false; 50];
        t0[3] = true;
        let silent = vec![false; 50];
        let out = simulate_ei_neuron(&n, &[&t0, &silent, &silent, &silent]).unwrap();
        assert_eq!(out.count, 0);
    }

    #[test]
    fn coincident_output_is_delayed() {
        let n = calibrated_nominal();
        let mut t = vec![false; 50];
        t[5] = true;
        let out = simulate_ei_neuron(&n, &[&t, &t, &t, &t]).unwrap();
        let first = out.train.iter().position(|&s| s).unwrap();
        assert!(first >= 6, "first spike at {first}");
    }

    #[test]
    fn no_input_no_output() {
        let n = calibrated_nominal();
        let z = vec![false; 40];
        assert_eq!(simulate_ei_neuron(&n, &[&z, &z, &z, &z]).unwrap().count, 0);
    }

    #[test]
    fn input_shape_errors() {
        let n = calibrated_nominal();
        let a = vec![false; 10];
        let b = vec![false; 9];
        assert!(matches!(
            simulate_ei_neuron(&n, &[&a, &a, &a]),
            Err(EiError::InputCount { .. })
        ));
        assert!(matches!(
            simulate_ei_neuron(&n, &[&a, &a, &b, &a]),
            Err(EiError::LengthMismatch { index: 2, .. })
        ));
    }

    #[test]
    fn inhibitory_element_makes_calibration_fail() {
        let mut n = EiNeuronParams::nominal(4);
        // Net-inhibitory element: removing it raises the peak.
        n.elements[2] = EiElementParams {
            tau_e_ms: 1.1,
            tau_i_ms: 1.0,
            w_e: 20.0,
            w_i: -300.0,
        };
        assert!(matches!(calibrate_threshold(&n), Err(EiError::NonBracketing { .. })));
    }
}
