//! h-innovations and h-residuals: the empirical Campbell-equilibrium defect
//! `∫_Λ h·e^{−V} dμ − Σ_{x ∈ φ_Λ} h(x, φ\x)` for a catalogue of test
//! functions, on the full window, per subdomain and per grid cell.

use crate::error::Error;
use crate::geometry::{CellGrid, Configuration, Cube};
use crate::model::{dot, removable_points};
use crate::quadrature::{scan_config_points, scan_model_nodes, NodeEval, NodeRule, PointEval};
use crate::workspace::Workspace;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

/// Exponent clamp bound; beyond it `exp` would over/underflow anyway.
const ENERGY_CLAMP: f64 = 700.0;

static CLAMP_EVENTS: AtomicU64 = AtomicU64::new(0);

/// Number of energy evaluations clamped at |V| = 700 since the last reset.
pub fn energy_clamp_count() -> u64 {
    CLAMP_EVENTS.load(Ordering::Relaxed)
}

pub fn reset_energy_clamp_count() {
    CLAMP_EVENTS.store(0, Ordering::Relaxed);
}

/// `exp(arg)` with the argument clamped to ±700 and clamps counted.
pub(crate) fn clamped_exp(arg: f64) -> f64 {
    if arg.is_infinite() {
        // hard-core ±∞ is an exact 0 or overflow by construction, not a
        // clamping event
        return if arg < 0.0 { 0.0 } else { f64::INFINITY };
    }
    if arg.abs() > ENERGY_CLAMP {
        CLAMP_EVENTS.fetch_add(1, Ordering::Relaxed);
        arg.clamp(-ENERGY_CLAMP, ENERGY_CLAMP).exp()
    } else {
        arg.exp()
    }
}

/// Custom test function `h(x^m, φ; θ)`.
pub type CustomTestFn =
    Arc<dyn Fn(&[f64], usize, &Configuration, &[f64]) -> f64 + Send + Sync>;

/// The test-function catalogue selecting a residual flavor.
#[derive(Clone)]
pub enum TestFunction {
    /// `h = 1` (raw residuals).
    Raw,
    /// `h = e^{V}` (inverse residuals).
    Inverse,
    /// `h = e^{V/2}` (Pearson residuals).
    Pearson,
    /// `h_r = 1_{[0,r]}(d(x, φ))·e^{V}` (empty-space residuals at radius r).
    EmptySpace(f64),
    /// `h = ωᵀ v(x|φ)`.
    LinearStat(Vec<f64>),
    Custom(CustomTestFn),
}

impl std::fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TestFunction::Raw => write!(f, "Raw"),
            TestFunction::Inverse => write!(f, "Inverse"),
            TestFunction::Pearson => write!(f, "Pearson"),
            TestFunction::EmptySpace(r) => write!(f, "EmptySpace({r})"),
            TestFunction::LinearStat(w) => write!(f, "LinearStat({w:?})"),
            TestFunction::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

impl TestFunction {
    pub fn validate(&self, param_len: usize) -> Result<(), Error> {
        match self {
            TestFunction::EmptySpace(r) if !(*r > 0.0) => Err(Error::InvalidTestFunction(
                format!("empty-space radius must be positive, got {r}"),
            )),
            TestFunction::LinearStat(w) if w.len() != param_len => {
                Err(Error::InvalidTestFunction(format!(
                    "linear-statistic weight has length {}, expected {param_len}",
                    w.len()
                )))
            }
            TestFunction::LinearStat(w) if w.iter().all(|x| *x == 0.0) => Err(
                Error::InvalidTestFunction("linear-statistic weight is zero".into()),
            ),
            _ => Ok(()),
        }
    }

    /// Radius needed for nearest-distance evaluation, if any.
    pub(crate) fn nearest_radius(&self) -> Option<f64> {
        match self {
            TestFunction::EmptySpace(r) => Some(*r),
            _ => None,
        }
    }

    /// The combined integrand `h(x, φ; θ)·e^{−V(x|φ;θ)}` at a node, with
    /// the exponents merged before evaluation for numerical stability.
    pub(crate) fn integrand(
        &self,
        node: &NodeEval,
        theta: &[f64],
        config: &Configuration,
    ) -> f64 {
        let v = node.energy;
        match self {
            TestFunction::Raw => clamped_exp(-v),
            TestFunction::Inverse => {
                if v.is_finite() {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::Pearson => clamped_exp(-v / 2.0),
            TestFunction::EmptySpace(r) => {
                if node.nearest <= *r && v.is_finite() {
                    1.0
                } else {
                    0.0
                }
            }
            TestFunction::LinearStat(w) => dot(w, node.stats) * clamped_exp(-v),
            TestFunction::Custom(h) => {
                h(node.position, node.mark, config, theta) * clamped_exp(-v)
            }
        }
    }

    /// `h(x, φ\x; θ)` at an actual point of the configuration.
    pub(crate) fn point_value(
        &self,
        point: &PointEval,
        theta: &[f64],
        reduced: Option<&Configuration>,
    ) -> f64 {
        let v = point.energy;
        match self {
            TestFunction::Raw => 1.0,
            TestFunction::Inverse => clamped_exp(v),
            TestFunction::Pearson => clamped_exp(v / 2.0),
            TestFunction::EmptySpace(r) => {
                if point.nearest <= *r {
                    clamped_exp(v)
                } else {
                    0.0
                }
            }
            TestFunction::LinearStat(w) => dot(w, point.stats),
            TestFunction::Custom(h) => {
                let reduced = reduced.expect("custom test functions need the reduced configuration");
                h(point.position, point.mark, reduced, theta)
            }
        }
    }

    pub(crate) fn is_custom(&self) -> bool {
        matches!(self, TestFunction::Custom(_))
    }
}

/// Largest nearest-distance cutoff needed by a family of test functions.
pub(crate) fn max_nearest_radius(hs: &[TestFunction]) -> Option<f64> {
    hs.iter()
        .filter_map(|h| h.nearest_radius())
        .fold(None, |acc: Option<f64>, r| Some(acc.map_or(r, |a| a.max(r))))
}

/// One evaluated residual (or innovation): `value = integral − sum`.
#[derive(Debug, Clone)]
pub struct ResidualValue {
    pub integral_term: f64,
    pub sum_term: f64,
    pub value: f64,
    pub region: Cube,
    pub theta_used: Vec<f64>,
}

/// Residuals per subdomain together with their mean.
#[derive(Debug, Clone)]
pub struct SubdomainResiduals {
    pub values: Vec<f64>,
    pub mean: f64,
}

impl Workspace<'_> {
    /// h-innovations `I_Λ(φ; h, θ)` on `region`, at the (true) parameter θ.
    pub fn innovations(
        &self,
        theta: &[f64],
        h: &TestFunction,
        region: &Cube,
    ) -> Result<ResidualValue, Error> {
        self.residual_impl(theta, h, region, false)
    }

    /// h-residuals `R_Λ(φ; h, θ̂)` on `region`; the point sum is restricted
    /// to removable points (all of them for hereditary models).
    pub fn residuals(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        region: &Cube,
    ) -> Result<ResidualValue, Error> {
        self.residual_impl(theta_hat, h, region, true)
    }

    fn residual_impl(
        &self,
        theta: &[f64],
        h: &TestFunction,
        region: &Cube,
        removable_only: bool,
    ) -> Result<ResidualValue, Error> {
        h.validate(self.model().param_len())?;
        self.check_guard(region)?;
        self.warn_nonlocal(std::slice::from_ref(h));
        let rule = NodeRule::for_region(region, self.quadrature());
        let cutoff = h.nearest_radius();

        let mut integral = 0.0;
        scan_model_nodes(
            self.model(),
            theta,
            self.index(),
            &rule,
            cutoff,
            |node: &NodeEval| -> Result<(), Error> {
                let val = h.integrand(node, theta, self.config());
                if !val.is_finite() {
                    return Err(Error::NonFiniteIntegrand {
                        position: node.position.to_vec(),
                        mark: node.mark,
                    });
                }
                integral += node.weight * val;
                Ok(())
            },
        )?;

        let points = if removable_only {
            removable_points(self.model(), self.config(), region)
        } else {
            self.config().indices_in(region)
        };
        let sum_term = self.point_sum(theta, std::slice::from_ref(h), &points, cutoff)?[0];

        Ok(ResidualValue {
            integral_term: integral,
            sum_term,
            value: integral - sum_term,
            region: region.clone(),
            theta_used: theta.to_vec(),
        })
    }

    /// Evaluates `Σ_x h_j(x, φ\x; θ)` for each test function over the given
    /// point indices.
    pub(crate) fn point_sum(
        &self,
        theta: &[f64],
        hs: &[TestFunction],
        points: &[usize],
        cutoff: Option<f64>,
    ) -> Result<Vec<f64>, Error> {
        let mut sums = vec![0.0; hs.len()];
        let need_reduced = hs.iter().any(|h| h.is_custom());
        scan_config_points(
            self.model(),
            theta,
            self.index(),
            points,
            cutoff,
            |pt: &PointEval| -> Result<(), Error> {
                let reduced = need_reduced.then(|| self.config().without(pt.index));
                for (h, sum) in hs.iter().zip(sums.iter_mut()) {
                    let val = h.point_value(pt, theta, reduced.as_ref());
                    if !val.is_finite() {
                        return Err(Error::NonFiniteIntegrand {
                            position: pt.position.to_vec(),
                            mark: pt.mark,
                        });
                    }
                    *sum += val;
                }
                Ok(())
            },
        )?;
        Ok(sums)
    }

    fn warn_nonlocal(&self, hs: &[TestFunction]) {
        let range = self.model().range();
        for h in hs {
            if let TestFunction::EmptySpace(r) = h {
                if *r > range && range > 0.0 {
                    log::warn!(
                        "empty-space radius {r} exceeds the model range {range}; \
                         the test function is not local at range D"
                    );
                }
                if *r > self.domain().guard {
                    log::warn!(
                        "empty-space radius {r} exceeds the guard {}; nearest \
                         distances near the boundary are edge-biased",
                        self.domain().guard
                    );
                }
            }
        }
    }

    /// The vector of h-residuals over the `|J|` subdomains of `grid`, plus
    /// their mean. Quadrature nodes are grid-aligned, so the components sum
    /// exactly to the full-window residual.
    pub fn residual_vector_subdomains(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        grid: &CellGrid,
    ) -> Result<SubdomainResiduals, Error> {
        h.validate(self.model().param_len())?;
        self.check_guard(&self.domain().window())?;
        self.warn_nonlocal(std::slice::from_ref(h));
        let rule = NodeRule::aligned_to_grid(grid, self.quadrature());
        let cutoff = h.nearest_radius();
        let n_sub = grid.subdomain_count();
        let per_axis = grid.cells_per_subdomain_axis();
        let subs_per_axis = grid.subdomains_per_axis();
        let m = rule.nodes_per_cell_axis;

        let mut values = vec![0.0; n_sub];
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            &rule,
            cutoff,
            |node: &NodeEval| -> Result<(), Error> {
                let val = h.integrand(node, theta_hat, self.config());
                if !val.is_finite() {
                    return Err(Error::NonFiniteIntegrand {
                        position: node.position.to_vec(),
                        mark: node.mark,
                    });
                }
                // node lattice → subdomain block
                let mut j = 0usize;
                for &lat in node.lattice {
                    j = j * subs_per_axis + (lat / m) / per_axis;
                }
                values[j] += node.weight * val;
                Ok(())
            },
        )?;

        for (j, value) in values.iter_mut().enumerate() {
            let sub = grid.subdomain_cube(j);
            let points = removable_points(self.model(), self.config(), &sub);
            *value -= self.point_sum(theta_hat, std::slice::from_ref(h), &points, cutoff)?[0];
        }
        let mean = values.iter().sum::<f64>() / n_sub as f64;
        Ok(SubdomainResiduals { values, mean })
    }

    /// The vector `(R_Λ(φ; h_j, θ̂))_{j=1..s}` over a shared quadrature
    /// pass on `region`.
    pub fn residual_vector_functions(
        &self,
        theta_hat: &[f64],
        hs: &[TestFunction],
        region: &Cube,
    ) -> Result<Vec<f64>, Error> {
        for h in hs {
            h.validate(self.model().param_len())?;
        }
        self.check_guard(region)?;
        self.warn_nonlocal(hs);
        let rule = NodeRule::for_region(region, self.quadrature());
        let cutoff = max_nearest_radius(hs);
        let mut integrals = vec![0.0; hs.len()];
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            &rule,
            cutoff,
            |node: &NodeEval| -> Result<(), Error> {
                for (h, acc) in hs.iter().zip(integrals.iter_mut()) {
                    let val = h.integrand(node, theta_hat, self.config());
                    if !val.is_finite() {
                        return Err(Error::NonFiniteIntegrand {
                            position: node.position.to_vec(),
                            mark: node.mark,
                        });
                    }
                    *acc += node.weight * val;
                }
                Ok(())
            },
        )?;
        let points = removable_points(self.model(), self.config(), region);
        let sums = self.point_sum(theta_hat, hs, &points, cutoff)?;
        Ok(integrals
            .iter()
            .zip(sums.iter())
            .map(|(i, s)| i - s)
            .collect())
    }
}
