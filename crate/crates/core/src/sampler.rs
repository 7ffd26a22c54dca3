//! Generation of marked Poisson patterns and (approximate) Gibbs patterns
//! on the extended window, by a birth-death Metropolis-Hastings chain with
//! empty boundary condition.
//!
//! The chain targets the density proportional to `z^n e^{−V_W(φ)}` with
//! respect to the unit-rate marked Poisson process on the extended window
//! `W` (`z` = reference intensity, 1 by default so the target is exactly
//! the model's finite-volume specification). Acceptance ratios use the
//! local energy only; the partition function is never touched.

use crate::error::Error;
use crate::geometry::{Configuration, Cube, ObservationDomain};
use crate::model::{dot, Excluding, Model, ModelError, NeighborSource};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson as PoissonDist};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub seed: u64,
    /// Metropolis-Hastings proposals per expected point.
    pub sweeps: u32,
    /// Probability that a proposal is a birth (vs death).
    pub birth_fraction: f64,
    /// Probability of a relocation proposal, taken off the top; 0 disables.
    pub move_fraction: f64,
    /// Reference Poisson intensity z of the target density.
    pub reference_intensity: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            seed: 0,
            sweeps: 500,
            birth_fraction: 0.5,
            move_fraction: 0.0,
            reference_intensity: 1.0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(seed: u64) -> Self {
        SamplerConfig {
            seed,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), Error> {
        if self.sweeps < 1 {
            return Err(Error::Model(ModelError::InvalidParameter(
                "sweeps must be >= 1".into(),
            )));
        }
        if !(self.birth_fraction > 0.0 && self.birth_fraction < 1.0) {
            return Err(Error::Model(ModelError::InvalidParameter(
                "birth_fraction must lie in (0, 1)".into(),
            )));
        }
        if !(0.0..1.0).contains(&self.move_fraction) {
            return Err(Error::Model(ModelError::InvalidParameter(
                "move_fraction must lie in [0, 1)".into(),
            )));
        }
        if !(self.reference_intensity > 0.0) {
            return Err(Error::Model(ModelError::InvalidParameter(
                "reference_intensity must be positive".into(),
            )));
        }
        Ok(())
    }
}

/// Samples a homogeneous marked Poisson process with intensity `z` on
/// `window`; marks are i.i.d. from `mark_weights`.
pub fn sample_poisson(window: &Cube, z: f64, mark_weights: &[f64], seed: u64) -> Configuration {
    assert!(z > 0.0, "intensity must be positive");
    let weight_sum: f64 = mark_weights.iter().sum();
    assert!(
        (weight_sum - 1.0).abs() < 1e-9,
        "mark weights must sum to 1"
    );
    let dim = window.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mean = z * window.volume();
    let mut config = Configuration::empty(dim);
    if mean == 0.0 {
        return config;
    }
    let count = PoissonDist::new(mean).unwrap().sample(&mut rng) as usize;
    let mut pos = vec![0.0; dim];
    for _ in 0..count {
        for (ax, p) in pos.iter_mut().enumerate() {
            *p = window.lower[ax] + rng.gen::<f64>() * window.side;
        }
        let mark = sample_mark(mark_weights, &mut rng);
        config.push(&pos, mark);
    }
    config
}

fn sample_mark(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (m, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return m;
        }
    }
    weights.len() - 1
}

/// Birth acceptance ratio `(z·|W|/(n+1))·e^{−V(x|φ)}` (times the proposal
/// asymmetry factor when birth_fraction ≠ 1/2).
pub fn birth_ratio(
    birth_fraction: f64,
    z: f64,
    window_volume: f64,
    n_before: usize,
    energy: f64,
) -> f64 {
    let asym = (1.0 - birth_fraction) / birth_fraction;
    asym * z * window_volume / (n_before as f64 + 1.0) * (-energy).exp()
}

/// Death acceptance ratio for removing one of `n_before` points whose local
/// energy in the remaining configuration is `energy`; the exact inverse of
/// the matching birth ratio.
pub fn death_ratio(
    birth_fraction: f64,
    z: f64,
    window_volume: f64,
    n_before: usize,
    energy: f64,
) -> f64 {
    let asym = birth_fraction / (1.0 - birth_fraction);
    asym * n_before as f64 / (z * window_volume) * energy.exp()
}

/// Mutable chain state with linear-scan neighbor queries (point counts stay
/// small enough that a mutable spatial index does not pay for itself).
struct ChainState {
    dim: usize,
    coords: Vec<f64>,
    marks: Vec<usize>,
}

impl ChainState {
    fn new(dim: usize) -> Self {
        ChainState {
            dim,
            coords: Vec::new(),
            marks: Vec::new(),
        }
    }

    fn len(&self) -> usize {
        self.marks.len()
    }

    fn position(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, pos: &[f64], mark: usize) {
        self.coords.extend_from_slice(pos);
        self.marks.push(mark);
    }

    fn swap_remove(&mut self, i: usize) {
        let n = self.len();
        let dim = self.dim;
        for ax in 0..dim {
            self.coords.swap(i * dim + ax, (n - 1) * dim + ax);
        }
        self.coords.truncate((n - 1) * dim);
        self.marks.swap_remove(i);
    }

    fn into_configuration(self) -> Configuration {
        let mut out = Configuration::empty(self.dim);
        for i in 0..self.marks.len() {
            out.push(&self.coords[i * self.dim..(i + 1) * self.dim], self.marks[i]);
        }
        out
    }
}

impl NeighborSource for ChainState {
    fn for_each_near(&self, _x: &[f64], _radius: f64, f: &mut dyn FnMut(usize, &[f64], usize)) {
        for i in 0..self.len() {
            f(i, self.position(i), self.marks[i]);
        }
    }
}

/// Runs the birth-death chain for the Gibbs model on the extended window of
/// `domain`, from an empty initial state, and returns the final state.
///
/// The proposal budget is `sweeps × ⌈z·e^K·|W|⌉` with `K` the model's
/// stability constant, so that `sweeps` counts proposals per expected point
/// even for targets far from unit intensity.
pub fn sample_gibbs(
    model: &dyn Model,
    theta: &[f64],
    domain: &ObservationDomain,
    config: &SamplerConfig,
) -> Result<Configuration, Error> {
    config.validate()?;
    if !model.admissible(theta) {
        return Err(Error::Model(ModelError::InvalidParameter(format!(
            "θ = {theta:?} is not admissible"
        ))));
    }
    let stability = model.stability_constant(theta)?;
    let window = domain.extended();
    let volume = window.volume();
    let z = config.reference_intensity;
    let intensity_cap = z * stability.min(500.0).exp();
    let proposals = config.sweeps as u64 * (intensity_cap * volume).ceil() as u64;
    if proposals > 2_000_000_000 {
        return Err(Error::Model(ModelError::InvalidParameter(format!(
            "chain would need {proposals} proposals; lower sweeps or the stability bound"
        ))));
    }

    let dim = model.dim();
    let p = model.param_len();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = ChainState::new(dim);
    let mut stats = vec![0.0; p];
    let mut pos = vec![0.0; dim];
    let weights = model.mark_weights().to_vec();

    for _ in 0..proposals {
        let u: f64 = rng.gen();
        if u < config.move_fraction {
            if state.len() == 0 {
                continue;
            }
            let i = rng.gen_range(0..state.len());
            for (ax, pv) in pos.iter_mut().enumerate() {
                *pv = window.lower[ax] + rng.gen::<f64>() * window.side;
            }
            let mark = state.marks[i];
            let masked = Excluding::new(&state, i);
            let e_new = energy_of(model, theta, &pos, mark, &masked, &mut stats)?;
            let old_pos = state.position(i).to_vec();
            let e_old = energy_of(model, theta, &old_pos, mark, &masked, &mut stats)?;
            let ratio = (e_old - e_new).exp();
            if rng.gen::<f64>() < ratio {
                state.swap_remove(i);
                state.push(&pos, mark);
            }
        } else if u < config.move_fraction + (1.0 - config.move_fraction) * config.birth_fraction {
            // birth
            for (ax, pv) in pos.iter_mut().enumerate() {
                *pv = window.lower[ax] + rng.gen::<f64>() * window.side;
            }
            let mark = sample_mark(&weights, &mut rng);
            let energy = energy_of(model, theta, &pos, mark, &state, &mut stats)?;
            let ratio = birth_ratio(config.birth_fraction, z, volume, state.len(), energy);
            if rng.gen::<f64>() < ratio {
                state.push(&pos, mark);
            }
        } else {
            // death
            if state.len() == 0 {
                continue;
            }
            let i = rng.gen_range(0..state.len());
            let masked = Excluding::new(&state, i);
            let pos_i = state.position(i).to_vec();
            let energy = energy_of(model, theta, &pos_i, state.marks[i], &masked, &mut stats)?;
            let ratio = death_ratio(config.birth_fraction, z, volume, state.len(), energy);
            if rng.gen::<f64>() < ratio {
                state.swap_remove(i);
            }
        }
    }
    Ok(state.into_configuration())
}

fn energy_of(
    model: &dyn Model,
    theta: &[f64],
    pos: &[f64],
    mark: usize,
    neighbors: &dyn NeighborSource,
    stats: &mut [f64],
) -> Result<f64, Error> {
    if model.hard_violation(pos, mark, neighbors) {
        return Ok(f64::INFINITY);
    }
    model.sufficient_stats(pos, mark, neighbors, stats)?;
    Ok(dot(theta, stats))
}

/// `n_replicates` independent chains seeded `base_seed + i`, run in
/// parallel; output is deterministic given the arguments.
pub fn sample_batch(
    model: &dyn Model,
    theta: &[f64],
    domain: &ObservationDomain,
    n_replicates: usize,
    base_seed: u64,
    config: &SamplerConfig,
) -> Result<Vec<Configuration>, Error> {
    (0..n_replicates)
        .into_par_iter()
        .map(|i| {
            let cfg = SamplerConfig {
                seed: base_seed + i as u64,
                ..config.clone()
            };
            sample_gibbs(model, theta, domain, &cfg)
        })
        .collect()
}
