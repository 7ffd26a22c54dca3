//! Exponential-family local-energy models: `V(x^m | φ; θ) = θᵀ v(x^m | φ)`.
//!
//! A model is defined by its sufficient-statistic map `v`, its interaction
//! range `D`, a finite mark set with reference weights, an admissible
//! parameter set and a local-stability certificate. The three builtins are
//! the homogeneous Poisson process, the 2-type marked Strauss process and
//! the planar area-interaction process.

use crate::geometry::{squared_distance, Configuration, NeighborIndex};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("mark {mark} is not in the model's mark set (size {mark_count})")]
    InvalidMark { mark: usize, mark_count: usize },
    #[error("invalid parameter vector: {0}")]
    InvalidParameter(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
}

/// Supplies candidate neighbors around a query position.
///
/// Implementors must yield every configuration point within `radius` of `x`
/// (yielding extra points is fine; models re-check distances), tagged with a
/// stable point index.
pub trait NeighborSource {
    fn for_each_near(&self, x: &[f64], radius: f64, f: &mut dyn FnMut(usize, &[f64], usize));
}

impl NeighborSource for Configuration {
    fn for_each_near(&self, _x: &[f64], _radius: f64, f: &mut dyn FnMut(usize, &[f64], usize)) {
        for i in 0..self.len() {
            f(i, self.position(i), self.mark(i));
        }
    }
}

impl<'a> NeighborSource for NeighborIndex<'a> {
    fn for_each_near(&self, x: &[f64], radius: f64, f: &mut dyn FnMut(usize, &[f64], usize)) {
        self.for_each_candidate(x, radius, |i, pos, mark| f(i, pos, mark));
    }
}

/// A neighbor source with one point masked out, for `v(x | φ \ x)` queries.
pub struct Excluding<'a, S: NeighborSource + ?Sized> {
    source: &'a S,
    exclude: usize,
}

impl<'a, S: NeighborSource + ?Sized> Excluding<'a, S> {
    pub fn new(source: &'a S, exclude: usize) -> Self {
        Excluding { source, exclude }
    }
}

impl<'a, S: NeighborSource + ?Sized> NeighborSource for Excluding<'a, S> {
    fn for_each_near(&self, x: &[f64], radius: f64, f: &mut dyn FnMut(usize, &[f64], usize)) {
        let exclude = self.exclude;
        self.source.for_each_near(x, radius, &mut |i, pos, mark| {
            if i != exclude {
                f(i, pos, mark);
            }
        });
    }
}

/// An exponential-family marked Gibbs model.
pub trait Model: Send + Sync {
    fn dim(&self) -> usize;

    /// Length `p` of the parameter / sufficient-statistic vectors.
    fn param_len(&self) -> usize;

    fn mark_count(&self) -> usize;

    /// Reference mark distribution λ^m (weights sum to 1).
    fn mark_weights(&self) -> &[f64];

    /// Finite interaction range `D`.
    fn range(&self) -> f64;

    /// Writes `v(x^m | φ)` into `out` (length `p`).
    fn sufficient_stats(
        &self,
        pos: &[f64],
        mark: usize,
        neighbors: &dyn NeighborSource,
        out: &mut [f64],
    ) -> Result<(), ModelError>;

    /// Whether inserting `x^m` into the configuration is forbidden outright
    /// (hard-core exclusion), making the local energy `+∞`.
    fn hard_violation(&self, _pos: &[f64], _mark: usize, _neighbors: &dyn NeighborSource) -> bool {
        false
    }

    fn admissible(&self, theta: &[f64]) -> bool;

    /// Projects `theta` onto the admissible set in place.
    fn project(&self, _theta: &mut [f64]) {}

    /// A constant `K ≥ 0` with `V(x^m | φ; θ) ≥ −K` over all insertions.
    fn stability_constant(&self, theta: &[f64]) -> Result<f64, ModelError>;

    /// Removability of point `i` in `config`; hereditary models keep the
    /// default (always true).
    fn is_removable(&self, _point: usize, _config: &Configuration) -> bool {
        true
    }

    /// A vector `ω` with `ωᵀ v(x^m | φ) ≡ 1`, when one is known. Used to
    /// refuse raw-residual normalizations that Prop-5.4-degenerate.
    fn constant_stat_combination(&self) -> Option<Vec<f64>>;
}

fn check_theta(model: &dyn Model, theta: &[f64]) -> Result<(), ModelError> {
    if theta.len() != model.param_len() {
        return Err(ModelError::InvalidParameter(format!(
            "expected {} components, got {}",
            model.param_len(),
            theta.len()
        )));
    }
    Ok(())
}

/// Local energy `θᵀ v(x^m | φ)`, or `+∞` under a hard-core violation.
pub fn local_energy(
    model: &dyn Model,
    theta: &[f64],
    pos: &[f64],
    mark: usize,
    neighbors: &dyn NeighborSource,
) -> Result<f64, ModelError> {
    check_theta(model, theta)?;
    if model.hard_violation(pos, mark, neighbors) {
        return Ok(f64::INFINITY);
    }
    let mut stats = vec![0.0; model.param_len()];
    model.sufficient_stats(pos, mark, neighbors, &mut stats)?;
    Ok(dot(theta, &stats))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// The subset of `φ_Λ` (as indices into `config`) that is removable.
pub fn removable_points(model: &dyn Model, config: &Configuration, region: &crate::geometry::Cube) -> Vec<usize> {
    config
        .indices_in(region)
        .into_iter()
        .filter(|&i| model.is_removable(i, config))
        .collect()
}

/// Homogeneous (marked) Poisson model: `p = 1`, `v ≡ 1`, range 0.
#[derive(Debug, Clone)]
pub struct Poisson {
    dim: usize,
}

impl Poisson {
    pub fn new(dim: usize) -> Self {
        Poisson { dim }
    }
}

impl Model for Poisson {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_len(&self) -> usize {
        1
    }

    fn mark_count(&self) -> usize {
        1
    }

    fn mark_weights(&self) -> &[f64] {
        &[1.0]
    }

    fn range(&self) -> f64 {
        0.0
    }

    fn sufficient_stats(
        &self,
        _pos: &[f64],
        mark: usize,
        _neighbors: &dyn NeighborSource,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        if mark != 0 {
            return Err(ModelError::InvalidMark { mark, mark_count: 1 });
        }
        out[0] = 1.0;
        Ok(())
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta.len() == 1 && theta[0].is_finite()
    }

    fn stability_constant(&self, theta: &[f64]) -> Result<f64, ModelError> {
        check_theta(self, theta)?;
        Ok((-theta[0]).max(0.0))
    }

    fn constant_stat_combination(&self) -> Option<Vec<f64>> {
        Some(vec![1.0])
    }
}

/// 2-type marked Strauss process.
///
/// `θ = (θ₁¹, θ₁², θ₂¹¹, θ₂¹², θ₂²²)`; the first-order statistics are mark
/// indicators and the pair statistics count neighbors of each mark pair
/// within the pair range. The default is the inhibition case (pair
/// parameters ≥ 0, no hard core); setting `hardcore = Some(δ₀)` forbids
/// pairs closer than δ₀ and lifts the sign restriction.
#[derive(Debug, Clone)]
pub struct TwoTypeStrauss {
    dim: usize,
    /// `[D¹¹, D¹², D²²]`
    ranges: [f64; 3],
    hardcore: Option<f64>,
    mark_weights: [f64; 2],
}

impl TwoTypeStrauss {
    pub fn new(dim: usize, range11: f64, range12: f64, range22: f64) -> Self {
        assert!(range11 >= 0.0 && range12 >= 0.0 && range22 >= 0.0);
        TwoTypeStrauss {
            dim,
            ranges: [range11, range12, range22],
            hardcore: None,
            mark_weights: [0.5, 0.5],
        }
    }

    pub fn with_hardcore(mut self, delta0: f64) -> Self {
        assert!(delta0 > 0.0, "hard-core distance must be positive");
        self.hardcore = Some(delta0);
        self
    }

    pub fn with_mark_weights(mut self, w1: f64, w2: f64) -> Self {
        assert!(w1 > 0.0 && w2 > 0.0 && (w1 + w2 - 1.0).abs() < 1e-12);
        self.mark_weights = [w1, w2];
        self
    }

    /// Index into the pair block for marks `(m, m')`, order-free.
    fn pair_slot(m1: usize, m2: usize) -> usize {
        match (m1.min(m2), m1.max(m2)) {
            (0, 0) => 0,
            (0, 1) => 1,
            (1, 1) => 2,
            _ => unreachable!("marks checked before pair_slot"),
        }
    }
}

impl Model for TwoTypeStrauss {
    fn dim(&self) -> usize {
        self.dim
    }

    fn param_len(&self) -> usize {
        5
    }

    fn mark_count(&self) -> usize {
        2
    }

    fn mark_weights(&self) -> &[f64] {
        &self.mark_weights
    }

    fn range(&self) -> f64 {
        self.ranges[0].max(self.ranges[1]).max(self.ranges[2])
    }

    fn sufficient_stats(
        &self,
        pos: &[f64],
        mark: usize,
        neighbors: &dyn NeighborSource,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        if mark >= 2 {
            return Err(ModelError::InvalidMark { mark, mark_count: 2 });
        }
        out.fill(0.0);
        out[mark] = 1.0;
        let hc = self.hardcore.unwrap_or(0.0);
        neighbors.for_each_near(pos, self.range(), &mut |_i, ypos, ymark| {
            let slot = Self::pair_slot(mark, ymark);
            let range = self.ranges[slot];
            let d2 = squared_distance(pos, ypos);
            if d2 <= range * range && d2 >= hc * hc {
                out[2 + slot] += 1.0;
            }
        });
        Ok(())
    }

    fn hard_violation(&self, pos: &[f64], _mark: usize, neighbors: &dyn NeighborSource) -> bool {
        let Some(hc) = self.hardcore else {
            return false;
        };
        let mut violated = false;
        neighbors.for_each_near(pos, hc, &mut |_i, ypos, _| {
            if squared_distance(pos, ypos) < hc * hc {
                violated = true;
            }
        });
        violated
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta.len() == 5
            && theta.iter().all(|t| t.is_finite())
            && (self.hardcore.is_some() || theta[2..].iter().all(|&t| t >= 0.0))
    }

    fn project(&self, theta: &mut [f64]) {
        if self.hardcore.is_none() {
            for t in &mut theta[2..] {
                if *t < 0.0 {
                    *t = 0.0;
                }
            }
        }
    }

    fn stability_constant(&self, theta: &[f64]) -> Result<f64, ModelError> {
        check_theta(self, theta)?;
        let first_order = (-theta[0]).max(0.0).max((-theta[1]).max(0.0));
        match self.hardcore {
            None => Ok(first_order), // pair parameters are nonnegative
            Some(hc) => {
                // packing bound: δ₀-separated points in B(x, D) number at
                // most (2D/δ₀ + 1)^d
                let n_max = (2.0 * self.range() / hc + 1.0).powi(self.dim as i32);
                let neg_pairs: f64 = theta[2..].iter().map(|&t| (-t).max(0.0)).sum();
                Ok(first_order + neg_pairs * n_max)
            }
        }
    }

    fn constant_stat_combination(&self) -> Option<Vec<f64>> {
        // v₁ + v₂ = 1 for every insertion
        Some(vec![1.0, 1.0, 0.0, 0.0, 0.0])
    }
}

/// Planar area-interaction process: `θ = (θ₁, θ₂)`, `v = (1, a(x|φ))` where
/// `a` is the disc area of radius `R` around `x` not already covered by the
/// neighbors' discs. Range `D = 2R`.
#[derive(Debug, Clone)]
pub struct AreaInteraction {
    radius: f64,
    trig_table: Vec<(f64, f64)>,
}

/// Default angular resolution of the standalone [`added_disc_area`] op.
pub const AREA_OP_ANGULAR_NODES: usize = 65_536;
/// Default angular resolution inside model evaluation (hot path); the
/// relative error ~(2π/N)² stays far below Monte-Carlo noise.
pub const AREA_MODEL_ANGULAR_NODES: usize = 256;

impl AreaInteraction {
    pub fn new(radius: f64) -> Self {
        Self::with_angular_nodes(radius, AREA_MODEL_ANGULAR_NODES)
    }

    pub fn with_angular_nodes(radius: f64, angular_nodes: usize) -> Self {
        assert!(radius > 0.0, "disc radius must be positive");
        assert!(angular_nodes >= 4);
        AreaInteraction {
            radius,
            trig_table: trig_table(angular_nodes),
        }
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

fn trig_table(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|k| {
            let phi = (k as f64 + 0.5) * std::f64::consts::TAU / n as f64;
            (phi.cos(), phi.sin())
        })
        .collect()
}

impl Model for AreaInteraction {
    fn dim(&self) -> usize {
        2
    }

    fn param_len(&self) -> usize {
        2
    }

    fn mark_count(&self) -> usize {
        1
    }

    fn mark_weights(&self) -> &[f64] {
        &[1.0]
    }

    fn range(&self) -> f64 {
        2.0 * self.radius
    }

    fn sufficient_stats(
        &self,
        pos: &[f64],
        mark: usize,
        neighbors: &dyn NeighborSource,
        out: &mut [f64],
    ) -> Result<(), ModelError> {
        if mark != 0 {
            return Err(ModelError::InvalidMark { mark, mark_count: 1 });
        }
        out[0] = 1.0;
        out[1] = added_area_scan(self.radius, pos, neighbors, &self.trig_table);
        Ok(())
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        theta.len() == 2 && theta.iter().all(|t| t.is_finite())
    }

    fn stability_constant(&self, theta: &[f64]) -> Result<f64, ModelError> {
        check_theta(self, theta)?;
        let disc = std::f64::consts::PI * self.radius * self.radius;
        Ok((-theta[0]).max(0.0) + (-theta[1]).max(0.0) * disc)
    }

    fn constant_stat_combination(&self) -> Option<Vec<f64>> {
        Some(vec![1.0, 0.0])
    }
}

/// Area of `B(x, R)` not covered by the discs `B(y, R)` of configuration
/// points `y` (d = 2). Evaluated by a polar scanline rule: the covered
/// radial intervals along each ray from `x` are merged exactly and the
/// uncovered `r dr` mass is integrated over a uniform angular midpoint grid.
pub fn added_disc_area(radius: f64, x: &[f64], config: &Configuration) -> f64 {
    added_disc_area_with_resolution(radius, x, config, AREA_OP_ANGULAR_NODES)
}

pub fn added_disc_area_with_resolution(
    radius: f64,
    x: &[f64],
    config: &Configuration,
    angular_nodes: usize,
) -> f64 {
    let table = trig_table(angular_nodes);
    added_area_scan(radius, x, config, &table)
}

fn added_area_scan(
    radius: f64,
    x: &[f64],
    neighbors: &dyn NeighborSource,
    table: &[(f64, f64)],
) -> f64 {
    let reach = 2.0 * radius;
    // neighbor displacements as (cos α, sin α, c)
    let mut near: Vec<(f64, f64, f64)> = Vec::new();
    let mut covered_at_center = false;
    neighbors.for_each_near(x, reach, &mut |_i, ypos, _| {
        let dx = ypos[0] - x[0];
        let dy = ypos[1] - x[1];
        let c2 = dx * dx + dy * dy;
        if c2 >= reach * reach {
            return;
        }
        let c = c2.sqrt();
        if c == 0.0 {
            covered_at_center = true;
            return;
        }
        near.push((dx / c, dy / c, c));
    });
    if covered_at_center {
        return 0.0;
    }
    let full = std::f64::consts::PI * radius * radius;
    if near.is_empty() {
        return full;
    }

    let r2_half = radius * radius / 2.0;
    let dphi = std::f64::consts::TAU / table.len() as f64;
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(near.len());
    let mut uncovered = 0.0;
    for &(cos_phi, sin_phi) in table {
        intervals.clear();
        for &(ca, sa, c) in &near {
            let cos_psi = cos_phi * ca + sin_phi * sa;
            let t = c * cos_psi;
            let s2 = radius * radius - (c * c - t * t);
            if s2 <= 0.0 {
                continue;
            }
            let s = s2.sqrt();
            let hi = (t + s).min(radius);
            let lo = (t - s).max(0.0);
            if hi > lo {
                intervals.push((lo, hi));
            }
        }
        if intervals.is_empty() {
            uncovered += r2_half;
            continue;
        }
        intervals.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut covered = 0.0;
        let (mut lo, mut hi) = intervals[0];
        for &(l, h) in &intervals[1..] {
            if l <= hi {
                hi = hi.max(h);
            } else {
                covered += hi * hi - lo * lo;
                lo = l;
                hi = h;
            }
        }
        covered += hi * hi - lo * lo;
        uncovered += r2_half - covered / 2.0;
    }
    (uncovered * dphi).clamp(0.0, full)
}
