//! Maximum pseudolikelihood estimation for exponential models, plus the
//! plug-in matrices Ĥ, Ê and the normalization vector Ŵ = Ĥ⁻¹Ê.
//!
//! The log-pseudolikelihood contrast
//! `LPL(θ) = −∫_Λ e^{−θᵀv(x|φ)} dμ − θᵀ Σ_x v(x|φ\x)`
//! is concave (its Hessian `−∫ v vᵀ e^{−θᵀv}` is negative semidefinite), so
//! a damped Newton ascent with projection onto the admissible set finds the
//! maximizer whenever one exists.

use crate::error::Error;
use crate::geometry::Cube;
use crate::quadrature::{scan_config_points, scan_model_nodes, NodeEval, NodeRule, PointEval};
use crate::residual::{clamped_exp, TestFunction};
use crate::workspace::Workspace;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub theta_hat: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub hessian_condition: f64,
    pub converged: bool,
    pub log_pseudolikelihood: f64,
    /// Set when the fit terminated without a valid interior maximum.
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitOptions {
    /// Convergence tolerance on the sup-norm of the projected gradient.
    pub tol: f64,
    pub max_iter: usize,
    /// Box bound |θ_i| ≤ theta_bound standing in for the compact parameter
    /// set; a fit stopping on this box is reported as non-converged.
    pub theta_bound: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            tol: 1e-9,
            max_iter: 100,
            theta_bound: 50.0,
        }
    }
}

pub(crate) struct LplEval {
    pub value: f64,
    pub gradient: Vec<f64>,
    pub hessian: DMatrix<f64>,
}

/// Sufficient statistics and weights at every quadrature node; they do not
/// depend on θ, so the Newton loop evaluates the contrast from this cache
/// instead of re-scanning the configuration.
pub(crate) struct NodeCache {
    p: usize,
    /// `stats[i*p..(i+1)*p]` for node i.
    stats: Vec<f64>,
    /// Mark weight × node volume; zero for hard-core-violating nodes.
    weights: Vec<f64>,
}

impl NodeCache {
    fn eval(&self, theta: &[f64], point_stat_sum: &[f64]) -> LplEval {
        let p = self.p;
        let mut integral = 0.0;
        let mut grad_int = vec![0.0; p];
        let mut hess = DMatrix::<f64>::zeros(p, p);
        for (i, &weight) in self.weights.iter().enumerate() {
            if weight == 0.0 {
                continue;
            }
            let stats = &self.stats[i * p..(i + 1) * p];
            let w = weight * crate::residual::clamped_exp(-crate::model::dot(theta, stats));
            integral += w;
            for a in 0..p {
                grad_int[a] += w * stats[a];
                for b in 0..=a {
                    hess[(a, b)] -= w * stats[a] * stats[b];
                }
            }
        }
        for a in 0..p {
            for b in (a + 1)..p {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        LplEval {
            value: -integral - crate::model::dot(theta, point_stat_sum),
            gradient: grad_int
                .iter()
                .zip(point_stat_sum.iter())
                .map(|(gi, si)| gi - si)
                .collect(),
            hessian: hess,
        }
    }
}

impl Workspace<'_> {
    /// Sufficient statistics `v(x | φ\x)` summed over the window points;
    /// θ-independent, computed once per fit.
    pub(crate) fn point_stat_sum(&self, points: &[usize]) -> Result<Vec<f64>, Error> {
        let p = self.model().param_len();
        let mut sum = vec![0.0; p];
        scan_config_points(
            self.model(),
            &vec![0.0; p],
            self.index(),
            points,
            None,
            |pt: &PointEval| -> Result<(), Error> {
                for (s, v) in sum.iter_mut().zip(pt.stats.iter()) {
                    *s += v;
                }
                Ok(())
            },
        )?;
        Ok(sum)
    }

    pub(crate) fn build_node_cache(&self, rule: &NodeRule) -> Result<NodeCache, Error> {
        let p = self.model().param_len();
        let zeros = vec![0.0; p];
        let mut stats = Vec::new();
        let mut weights = Vec::new();
        scan_model_nodes(
            self.model(),
            &zeros,
            self.index(),
            rule,
            None,
            |node: &NodeEval| -> Result<(), Error> {
                stats.extend_from_slice(node.stats);
                weights.push(if node.energy.is_infinite() {
                    0.0
                } else {
                    node.weight
                });
                Ok(())
            },
        )?;
        Ok(NodeCache { p, stats, weights })
    }

    pub(crate) fn lpl_eval(
        &self,
        theta: &[f64],
        rule: &NodeRule,
        point_stat_sum: &[f64],
    ) -> Result<LplEval, Error> {
        let p = self.model().param_len();
        let mut integral = 0.0;
        let mut grad_int = vec![0.0; p];
        let mut hess = DMatrix::<f64>::zeros(p, p);
        scan_model_nodes(
            self.model(),
            theta,
            self.index(),
            rule,
            None,
            |node: &NodeEval| -> Result<(), Error> {
                let w = node.weight * clamped_exp(-node.energy);
                integral += w;
                for i in 0..p {
                    grad_int[i] += w * node.stats[i];
                    for j in 0..=i {
                        hess[(i, j)] -= w * node.stats[i] * node.stats[j];
                    }
                }
                Ok(())
            },
        )?;
        for i in 0..p {
            for j in (i + 1)..p {
                hess[(i, j)] = hess[(j, i)];
            }
        }
        let value = -integral - crate::model::dot(theta, point_stat_sum);
        let gradient = grad_int
            .iter()
            .zip(point_stat_sum.iter())
            .map(|(gi, si)| gi - si)
            .collect();
        Ok(LplEval {
            value,
            gradient,
            hessian: hess,
        })
    }

    /// Log-pseudolikelihood contrast on `window`.
    pub fn log_pseudolikelihood(&self, theta: &[f64], window: &Cube) -> Result<f64, Error> {
        self.check_theta_admissible(theta)?;
        self.check_guard(window)?;
        let rule = NodeRule::for_region(window, self.quadrature());
        let points = self.config().indices_in(window);
        let sums = self.point_stat_sum(&points)?;
        Ok(self.lpl_eval(theta, &rule, &sums)?.value)
    }

    /// Gradient `∫ v e^{−θᵀv} − Σ v(x|φ\x)`.
    pub fn lpl_gradient(&self, theta: &[f64], window: &Cube) -> Result<Vec<f64>, Error> {
        self.check_theta_admissible(theta)?;
        self.check_guard(window)?;
        let rule = NodeRule::for_region(window, self.quadrature());
        let points = self.config().indices_in(window);
        let sums = self.point_stat_sum(&points)?;
        Ok(self.lpl_eval(theta, &rule, &sums)?.gradient)
    }

    /// Hessian `−∫ v vᵀ e^{−θᵀv}` (symmetric negative semidefinite).
    pub fn lpl_hessian(&self, theta: &[f64], window: &Cube) -> Result<DMatrix<f64>, Error> {
        self.check_theta_admissible(theta)?;
        self.check_guard(window)?;
        let rule = NodeRule::for_region(window, self.quadrature());
        let points = self.config().indices_in(window);
        let sums = self.point_stat_sum(&points)?;
        Ok(self.lpl_eval(theta, &rule, &sums)?.hessian)
    }

    fn check_theta_admissible(&self, theta: &[f64]) -> Result<(), Error> {
        if theta.len() != self.model().param_len() || !self.model().admissible(theta) {
            return Err(Error::Model(crate::model::ModelError::InvalidParameter(
                format!("θ = {theta:?} is not admissible for the model"),
            )));
        }
        Ok(())
    }

    /// Maximum pseudolikelihood fit on the full window, by damped Newton
    /// ascent with step halving and projection onto the admissible set.
    pub fn fit_mple(&self, theta0: &[f64], opts: &FitOptions) -> Result<FitResult, Error> {
        let window = self.domain().window();
        let rule = NodeRule::for_region(&window, self.quadrature());
        self.fit_mple_with_rule(theta0, opts, &rule)
    }

    pub(crate) fn fit_mple_with_rule(
        &self,
        theta0: &[f64],
        opts: &FitOptions,
        rule: &NodeRule,
    ) -> Result<FitResult, Error> {
        let model = self.model();
        let p = model.param_len();
        if theta0.len() != p {
            return Err(Error::Model(crate::model::ModelError::InvalidParameter(
                format!("θ₀ has {} components, expected {p}", theta0.len()),
            )));
        }
        let window = self.domain().window();
        self.check_guard(&window)?;
        let points = self.config().indices_in(&window);
        if points.is_empty() {
            // with an empty point sum the contrast increases along any
            // direction raising θᵀv, so no maximizer exists
            let mut theta = theta0.to_vec();
            model.project(&mut theta);
            let eval = self.lpl_eval(&theta, rule, &vec![0.0; p])?;
            return Ok(FitResult {
                gradient_norm: sup_norm(&eval.gradient),
                theta_hat: theta,
                iterations: 0,
                hessian_condition: symmetric_condition(&eval.hessian),
                converged: false,
                log_pseudolikelihood: eval.value,
                diagnostic: Some(
                    "the pattern is empty on the window; the pseudolikelihood has no \
                     finite maximizer"
                        .into(),
                ),
            });
        }
        let sums = self.point_stat_sum(&points)?;
        let cache = self.build_node_cache(rule)?;

        let project = |theta: &mut [f64]| {
            model.project(theta);
            for t in theta.iter_mut() {
                *t = t.clamp(-opts.theta_bound, opts.theta_bound);
            }
        };
        let mut theta = theta0.to_vec();
        project(&mut theta);

        let mut eval = cache.eval(&theta, &sums);
        let mut iterations = 0usize;
        let mut converged = false;
        let mut diagnostic = None;
        let condition;

        loop {
            let pgrad = self.projected_gradient(&theta, &eval.gradient, opts, &project);
            let pnorm = sup_norm(&pgrad);
            let bound_active = self.bound_active(&theta, &eval.gradient, opts);
            if pnorm <= opts.tol {
                converged = !bound_active;
                if bound_active {
                    diagnostic = Some(format!(
                        "no interior maximizer: iterates stopped on the box |θ| ≤ {}",
                        opts.theta_bound
                    ));
                }
                condition = symmetric_condition(&eval.hessian);
                break;
            }
            if iterations >= opts.max_iter {
                diagnostic = Some(format!("maximum iterations {} exceeded", opts.max_iter));
                condition = symmetric_condition(&eval.hessian);
                break;
            }
            iterations += 1;

            // ascent direction from (−H) Δ = g, solved on the components
            // not pinned by active constraints (the projected gradient
            // already zeroes pinned components)
            let free: Vec<usize> = (0..p).filter(|&i| pgrad[i] != 0.0).collect();
            let nf = free.len();
            let neg_h_ff = DMatrix::<f64>::from_fn(nf, nf, |a, b| -eval.hessian[(free[a], free[b])]);
            let g_f = DVector::<f64>::from_fn(nf, |a, _| pgrad[free[a]]);
            let step_f = match neg_h_ff.clone().cholesky() {
                Some(chol) => chol.solve(&g_f),
                None => {
                    return Err(Error::SingularHessian {
                        condition: symmetric_condition(&eval.hessian),
                    })
                }
            };
            let mut step = vec![0.0; p];
            for (a, &i) in free.iter().enumerate() {
                step[i] = step_f[a];
            }

            // Newton decrement ≈ the achievable value gain; once it drops
            // below the resolution of the quadrature value the line search
            // would only compare rounding noise, so take the raw step
            let decrement: f64 = pgrad.iter().zip(step.iter()).map(|(g, s)| g * s).sum();
            let value_resolution = 1e-8 * (1.0 + eval.value.abs());
            if decrement.abs() <= value_resolution {
                let mut trial: Vec<f64> = theta
                    .iter()
                    .zip(step.iter())
                    .map(|(t, s)| t + s)
                    .collect();
                project(&mut trial);
                eval = cache.eval(&trial, &sums);
                theta = trial;
                continue;
            }

            // step halving on the contrast value
            let float_slack = 8.0 * f64::EPSILON * (1.0 + eval.value.abs());
            let mut lambda = 1.0;
            let mut accepted = false;
            for _ in 0..60 {
                let mut trial: Vec<f64> = theta
                    .iter()
                    .zip(step.iter())
                    .map(|(t, s)| t + lambda * s)
                    .collect();
                project(&mut trial);
                let trial_eval = cache.eval(&trial, &sums);
                if trial_eval.value >= eval.value - float_slack || trial == theta {
                    theta = trial;
                    eval = trial_eval;
                    accepted = true;
                    break;
                }
                lambda /= 2.0;
            }
            if !accepted {
                diagnostic = Some("line search stalled".into());
                condition = symmetric_condition(&eval.hessian);
                break;
            }
        }

        Ok(FitResult {
            gradient_norm: sup_norm(&self.projected_gradient(&theta, &eval.gradient, opts, &project)),
            theta_hat: theta,
            iterations,
            hessian_condition: condition,
            converged,
            log_pseudolikelihood: eval.value,
            diagnostic,
        })
    }

    /// Gradient with components pointing out of active constraints zeroed,
    /// detected by probing the projection map.
    fn projected_gradient(
        &self,
        theta: &[f64],
        gradient: &[f64],
        opts: &FitOptions,
        project: &impl Fn(&mut [f64]),
    ) -> Vec<f64> {
        let mut out = gradient.to_vec();
        let eps = 1e-8 * opts.theta_bound.max(1.0);
        for i in 0..theta.len() {
            if out[i] == 0.0 {
                continue;
            }
            // would a small move along the gradient survive projection?
            let mut probe = theta.to_vec();
            probe[i] += eps * out[i].signum();
            project(&mut probe);
            if (probe[i] - theta[i]).abs() < 0.5 * eps {
                out[i] = 0.0;
            }
        }
        out
    }

    /// Whether any box constraint is active with a gradient still pushing
    /// outward (a diverging fit).
    fn bound_active(&self, theta: &[f64], gradient: &[f64], opts: &FitOptions) -> bool {
        theta.iter().zip(gradient.iter()).any(|(t, g)| {
            (*t >= opts.theta_bound && *g > 0.0) || (*t <= -opts.theta_bound && *g < 0.0)
        })
    }

    /// `Ĥ(θ̂) = |Λ|⁻¹ ∫_Λ v vᵀ e^{−θ̂ᵀv} dμ` (symmetric PSD).
    pub fn estimate_h_hat(&self, theta_hat: &[f64]) -> Result<DMatrix<f64>, Error> {
        let window = self.domain().window();
        let rule = NodeRule::for_region(&window, self.quadrature());
        self.estimate_h_hat_with_rule(theta_hat, &rule)
    }

    pub(crate) fn estimate_h_hat_with_rule(
        &self,
        theta_hat: &[f64],
        rule: &NodeRule,
    ) -> Result<DMatrix<f64>, Error> {
        let p = self.model().param_len();
        let volume = self.domain().window().volume();
        let mut h = DMatrix::<f64>::zeros(p, p);
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            rule,
            None,
            |node: &NodeEval| -> Result<(), Error> {
                let w = node.weight * clamped_exp(-node.energy);
                for i in 0..p {
                    for j in 0..=i {
                        h[(i, j)] += w * node.stats[i] * node.stats[j];
                    }
                }
                Ok(())
            },
        )?;
        for i in 0..p {
            for j in (i + 1)..p {
                h[(i, j)] = h[(j, i)];
            }
        }
        Ok(h / volume)
    }

    /// `Ê(h; θ̂) = |Λ|⁻¹ ∫_Λ h·v·e^{−θ̂ᵀv} dμ`.
    pub fn estimate_e_hat(&self, theta_hat: &[f64], h: &TestFunction) -> Result<Vec<f64>, Error> {
        let window = self.domain().window();
        let rule = NodeRule::for_region(&window, self.quadrature());
        self.estimate_e_hat_with_rule(theta_hat, h, &rule)
    }

    pub(crate) fn estimate_e_hat_with_rule(
        &self,
        theta_hat: &[f64],
        h: &TestFunction,
        rule: &NodeRule,
    ) -> Result<Vec<f64>, Error> {
        h.validate(self.model().param_len())?;
        let p = self.model().param_len();
        let volume = self.domain().window().volume();
        let mut e = vec![0.0; p];
        scan_model_nodes(
            self.model(),
            theta_hat,
            self.index(),
            rule,
            h.nearest_radius(),
            |node: &NodeEval| -> Result<(), Error> {
                // h·e^{−V} is the stabilized integrand; multiply by v
                let w = node.weight * h.integrand(node, theta_hat, self.config());
                for (slot, v) in e.iter_mut().zip(node.stats) {
                    *slot += w * v;
                }
                Ok(())
            },
        )?;
        for x in &mut e {
            *x /= volume;
        }
        Ok(e)
    }
}

/// `Ŵ = Ĥ⁻¹ Ê` by a symmetric positive-definite solve.
pub fn estimate_w_hat(h_hat: &DMatrix<f64>, e_hat: &[f64]) -> Result<Vec<f64>, Error> {
    let eig = h_hat.clone().symmetric_eigen();
    let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition < 1e12) {
        return Err(Error::DegenerateNormalization {
            context: "Ĥ inversion for Ŵ".into(),
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
        });
    }
    let rhs = DVector::from_column_slice(e_hat);
    let sol = h_hat
        .clone()
        .cholesky()
        .ok_or_else(|| Error::DegenerateNormalization {
            context: "Ĥ Cholesky for Ŵ".into(),
            eigenvalues: eig.eigenvalues.iter().cloned().collect(),
        })?
        .solve(&rhs);
    Ok(sol.iter().cloned().collect())
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub(crate) fn symmetric_condition(h: &DMatrix<f64>) -> f64 {
    let eig = h.clone().symmetric_eigen();
    let mut max = 0.0f64;
    let mut min = f64::MAX;
    for &lambda in eig.eigenvalues.iter() {
        let a = lambda.abs();
        max = max.max(a);
        min = min.min(a);
    }
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Configuration, MarkedPoint, ObservationDomain};
    use crate::model::{AreaInteraction, Poisson, TwoTypeStrauss};
    use crate::quadrature::QuadratureSpec;
    use approx::assert_relative_eq;

    fn poisson_ws_fixture(
        n: usize,
        side: f64,
    ) -> (Poisson, Configuration, ObservationDomain) {
        let pts: Vec<MarkedPoint> = (0..n)
            .map(|i| {
                let t = i as f64;
                MarkedPoint::unmarked(vec![
                    ((t * 0.61803).fract() - 0.5) * side,
                    ((t * 0.38197).fract() - 0.5) * side,
                ])
            })
            .collect();
        let config = Configuration::from_points(2, &pts).unwrap();
        let domain = ObservationDomain::centered(2, side, 0.0);
        (Poisson::new(2), config, domain)
    }

    #[test]
    fn poisson_lpl_closed_form() {
        let (model, config, domain) = poisson_ws_fixture(7, 1.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let t = 0.4;
        let lpl = ws.log_pseudolikelihood(&[t], &domain.window()).unwrap();
        assert_relative_eq!(lpl, -(-t).exp() - t * 7.0, epsilon = 1e-12);
        // empty pattern: only the integral term
        let empty = Configuration::empty(2);
        let ws_empty = Workspace::new(&model, &empty, &domain, QuadratureSpec::default()).unwrap();
        let lpl0 = ws_empty.log_pseudolikelihood(&[t], &domain.window()).unwrap();
        assert_relative_eq!(lpl0, -(-t).exp(), epsilon = 1e-12);
    }

    #[test]
    fn poisson_gradient_vanishes_at_closed_form_mple() {
        let (model, config, domain) = poisson_ws_fixture(12, 2.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let volume = domain.window().volume();
        let theta = -(12.0f64 / volume).ln();
        let g = ws.lpl_gradient(&[theta], &domain.window()).unwrap();
        assert!(g[0].abs() < 1e-10, "score at the closed-form root: {}", g[0]);
        // empty pattern, θ = 0: gradient is |Λ|
        let empty = Configuration::empty(2);
        let ws_empty = Workspace::new(&model, &empty, &domain, QuadratureSpec::default()).unwrap();
        let g0 = ws_empty.lpl_gradient(&[0.0], &domain.window()).unwrap();
        assert_relative_eq!(g0[0], volume, epsilon = 1e-12);
    }

    #[test]
    fn poisson_hessian_closed_form_and_symmetry() {
        let (model, config, domain) = poisson_ws_fixture(5, 1.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let t = 0.3;
        let h = ws.lpl_hessian(&[t], &domain.window()).unwrap();
        assert_relative_eq!(h[(0, 0)], -(-t).exp(), epsilon = 1e-12);
        assert_eq!(h[(0, 0)], h.transpose()[(0, 0)]);
    }

    fn strauss_fixture() -> (TwoTypeStrauss, Configuration, ObservationDomain) {
        // a marked Poisson pattern dense enough to carry in-range pairs in
        // every component, so the 5-parameter fit is identifiable
        let domain = ObservationDomain::centered(2, 2.0, 0.15);
        let config = crate::sampler::sample_poisson(&domain.extended(), 40.0, &[0.5, 0.5], 12);
        (TwoTypeStrauss::new(2, 0.12, 0.15, 0.1), config, domain)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (model, config, domain) = strauss_fixture();
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(32)).unwrap();
        let window = domain.window();
        let theta = [0.3, -0.2, 0.5, 0.1, 0.25];
        let grad = ws.lpl_gradient(&theta, &window).unwrap();
        let step = 1e-5;
        for i in 0..5 {
            let mut up = theta;
            let mut dn = theta;
            up[i] += step;
            dn[i] -= step;
            let fd = (ws.log_pseudolikelihood(&up, &window).unwrap()
                - ws.log_pseudolikelihood(&dn, &window).unwrap())
                / (2.0 * step);
            let scale = grad[i].abs().max(1.0);
            assert!(
                (grad[i] - fd).abs() / scale < 1e-6,
                "component {i}: analytic {} vs fd {fd}",
                grad[i]
            );
        }
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let (model, config, domain) = strauss_fixture();
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(32)).unwrap();
        let window = domain.window();
        let theta = [0.3, -0.2, 0.5, 0.1, 0.25];
        let hess = ws.lpl_hessian(&theta, &window).unwrap();
        let step = 1e-5;
        for i in 0..5 {
            let mut up = theta;
            let mut dn = theta;
            up[i] += step;
            dn[i] -= step;
            let gu = ws.lpl_gradient(&up, &window).unwrap();
            let gd = ws.lpl_gradient(&dn, &window).unwrap();
            for j in 0..5 {
                let fd = (gu[j] - gd[j]) / (2.0 * step);
                let scale = hess[(i, j)].abs().max(1.0);
                assert!(
                    (hess[(i, j)] - fd).abs() / scale < 1e-5,
                    "H[{i},{j}] = {} vs fd {fd}",
                    hess[(i, j)]
                );
            }
        }
    }

    #[test]
    fn poisson_mple_closed_form() {
        // N = 50 points in |Λ| = 100 → θ̂ = −log(0.5) = log 2
        let pts: Vec<MarkedPoint> = (0..50)
            .map(|i| {
                let t = i as f64;
                MarkedPoint::unmarked(vec![
                    ((t * 0.61803).fract() - 0.5) * 10.0,
                    ((t * 0.32717).fract() - 0.5) * 10.0,
                ])
            })
            .collect();
        let config = Configuration::from_points(2, &pts).unwrap();
        let domain = ObservationDomain::centered(2, 10.0, 0.0);
        let model = Poisson::new(2);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let fit = ws.fit_mple(&[0.5], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert_relative_eq!(fit.theta_hat[0], 2.0f64.ln(), epsilon = 1e-9);
        // full-window raw residual vanishes at the MPLE
        let res = ws
            .residuals(&fit.theta_hat, &TestFunction::Raw, &domain.window())
            .unwrap();
        assert!(res.value.abs() < 1e-9, "raw residual at MPLE: {}", res.value);
    }

    #[test]
    fn empty_pattern_poisson_fit_flagged_nonconverged() {
        let config = Configuration::empty(2);
        let domain = ObservationDomain::centered(2, 1.0, 0.0);
        let model = Poisson::new(2);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let fit = ws.fit_mple(&[0.0], &FitOptions::default()).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostic.is_some());
    }

    #[test]
    fn fit_invariant_to_starting_point() {
        let (model, config, domain) = strauss_fixture();
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(32)).unwrap();
        let opts = FitOptions::default();
        let a = ws.fit_mple(&[0.0; 5], &opts).unwrap();
        let b = ws.fit_mple(&[1.0, -1.0, 2.0, 0.5, 0.1], &opts).unwrap();
        assert!(a.converged && b.converged);
        for i in 0..5 {
            assert!(
                (a.theta_hat[i] - b.theta_hat[i]).abs() < 1e-6,
                "component {i}: {} vs {}",
                a.theta_hat[i],
                b.theta_hat[i]
            );
        }
    }

    #[test]
    fn score_equals_linear_stat_residual_at_fit() {
        // needs an interior optimum: simulate from a genuinely inhibitory
        // Strauss model so the fitted pair parameters stay off the
        // admissible boundary
        let model = TwoTypeStrauss::new(2, 0.1, 0.1, 0.1);
        let theta_star = [-3.5, -3.5, 0.5, 0.3, 0.4];
        let domain = ObservationDomain::centered(2, 2.0, 0.1);
        let config = crate::sampler::sample_gibbs(
            &model,
            &theta_star,
            &domain,
            &crate::sampler::SamplerConfig::with_seed(5),
        )
        .unwrap();
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(32)).unwrap();
        let fit = ws.fit_mple(&[0.0; 5], &FitOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(
            fit.theta_hat[2..].iter().all(|&t| t > 1e-6),
            "fixture must land interior: {:?}",
            fit.theta_hat
        );
        // residual with h = LinearStat(ω) equals ωᵀ·gradient = 0 at the fit
        let omega = vec![0.7, -0.3, 0.4, 0.2, -0.9];
        let res = ws
            .residuals(
                &fit.theta_hat,
                &TestFunction::LinearStat(omega.clone()),
                &domain.window(),
            )
            .unwrap();
        let grad = ws.lpl_gradient(&fit.theta_hat, &domain.window()).unwrap();
        let score = crate::model::dot(&omega, &grad);
        assert_relative_eq!(res.value, score, epsilon = 1e-9);
        assert!(res.value.abs() < 1e-6, "score residual {}", res.value);
    }

    #[test]
    fn fit_mple_recovers_truth_on_average() {
        // consistency check: the Monte-Carlo mean of θ̂ stays within 3
        // standard errors of θ* componentwise
        use rayon::prelude::*;
        let model = TwoTypeStrauss::new(2, 0.1, 0.1, 0.1);
        let theta_star = [-3.5, -3.5, 0.5, 0.3, 0.4];
        let domain = ObservationDomain::centered(2, 3.0, 0.1);
        let n_reps = 48usize;
        let fits: Vec<Vec<f64>> = (0..n_reps)
            .into_par_iter()
            .map(|i| {
                let cfg = crate::sampler::SamplerConfig::with_seed(20_000 + i as u64);
                let pattern =
                    crate::sampler::sample_gibbs(&model, &theta_star, &domain, &cfg).unwrap();
                let ws =
                    Workspace::new(&model, &pattern, &domain, QuadratureSpec::new(48)).unwrap();
                let fit = ws.fit_mple(&[0.0; 5], &FitOptions::default()).unwrap();
                assert!(fit.converged, "replicate {i}: {:?}", fit.diagnostic);
                fit.theta_hat
            })
            .collect();
        for comp in 0..5 {
            let samples: Vec<f64> = fits.iter().map(|t| t[comp]).collect();
            let mean = samples.iter().sum::<f64>() / n_reps as f64;
            let var = samples
                .iter()
                .map(|x| (x - mean) * (x - mean))
                .sum::<f64>()
                / (n_reps as f64 - 1.0);
            let se = (var / n_reps as f64).sqrt();
            assert!(
                (mean - theta_star[comp]).abs() <= 3.0 * se,
                "component {comp}: mean θ̂ = {mean} vs θ* = {} (SE {se})",
                theta_star[comp]
            );
        }
    }

    #[test]
    fn strauss_two_point_lpl_analytic_decomposition() {
        // the integral of e^{−V} decomposes into plane minus the union of
        // the two interaction discs, weighted by the mark distribution
        let model = TwoTypeStrauss::new(2, 0.1, 0.1, 0.1);
        let pts = vec![
            MarkedPoint::new(vec![0.475, 0.5], 0),
            MarkedPoint::new(vec![0.525, 0.5], 0),
        ];
        let config = Configuration::from_points(2, &pts).unwrap();
        let domain = ObservationDomain::new(vec![0.5, 0.5], 1.0, 0.1);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(256)).unwrap();
        let theta = [0.0, 0.0, 0.5, 0.0, 0.0];
        let lpl = ws.log_pseudolikelihood(&theta, &domain.window()).unwrap();
        // mark-2 insertions: V = 0 everywhere → contributes |Λ|·w₂ = 0.5.
        // mark-1 insertions: V = 0.5·(neighbors within 0.1). With centers
        // 0.05 apart, union area U and lens area L (closed forms below):
        // ∫ = |Λ| − U + (U − L)e^{−0.5} + L·e^{−1}, weighted by w₁ = 0.5.
        let r = 0.1f64;
        let c = 0.05f64;
        let lens = 2.0 * r * r * (c / (2.0 * r)).acos()
            - (c / 2.0) * (4.0 * r * r - c * c).sqrt();
        let union = 2.0 * std::f64::consts::PI * r * r - lens;
        let integral_m1 = 1.0 - union + (union - lens) * (-0.5f64).exp() + lens * (-1.0f64).exp();
        let expected = -(0.5 * 1.0 + 0.5 * integral_m1) - 0.5 * 2.0;
        assert_relative_eq!(lpl, expected, epsilon = 2e-4);
    }

    #[test]
    fn h_hat_poisson_scalar() {
        let (model, config, domain) = poisson_ws_fixture(12, 2.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let fit = ws.fit_mple(&[0.0], &FitOptions::default()).unwrap();
        let h_hat = ws.estimate_h_hat(&fit.theta_hat).unwrap();
        // Ĥ = e^{−θ̂} = N/|Λ| at the MPLE
        assert_relative_eq!(h_hat[(0, 0)], 12.0 / 4.0, epsilon = 1e-9);
        // empty pattern at θ̂ = 0 → Ĥ = 1
        let empty = Configuration::empty(2);
        let ws_empty = Workspace::new(&model, &empty, &domain, QuadratureSpec::default()).unwrap();
        let h0 = ws_empty.estimate_h_hat(&[0.0]).unwrap();
        assert_relative_eq!(h0[(0, 0)], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn e_hat_raw_equals_h_hat_for_poisson() {
        let (model, config, domain) = poisson_ws_fixture(9, 1.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let theta = [0.7];
        let h_hat = ws.estimate_h_hat(&theta).unwrap();
        let e_hat = ws.estimate_e_hat(&theta, &TestFunction::Raw).unwrap();
        assert_relative_eq!(e_hat[0], h_hat[(0, 0)], epsilon = 1e-12);
    }

    #[test]
    fn e_hat_empty_space_vanishes_on_empty_config() {
        let model = AreaInteraction::new(0.1);
        let config = Configuration::empty(2);
        let domain = ObservationDomain::centered(2, 1.0, 0.2);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let e = ws
            .estimate_e_hat(&[0.5, 0.5], &TestFunction::EmptySpace(0.15))
            .unwrap();
        assert_eq!(e, vec![0.0, 0.0]);
    }

    #[test]
    fn w_hat_linear_stat_recovers_omega() {
        let (model, config, domain) = strauss_fixture();
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::new(32)).unwrap();
        let theta = [0.3, 0.1, 0.4, 0.2, 0.3];
        let h_hat = ws.estimate_h_hat(&theta).unwrap();
        let omega = vec![1.0, -0.5, 0.25, 0.0, 2.0];
        let e_hat = ws
            .estimate_e_hat(&theta, &TestFunction::LinearStat(omega.clone()))
            .unwrap();
        let w = estimate_w_hat(&h_hat, &e_hat).unwrap();
        for i in 0..5 {
            assert!(
                (w[i] - omega[i]).abs() < 1e-9,
                "Ŵ[{i}] = {} vs ω[{i}] = {}",
                w[i],
                omega[i]
            );
        }
    }

    #[test]
    fn w_hat_identity_and_raw_cases() {
        let h = DMatrix::<f64>::identity(3, 3);
        let w = estimate_w_hat(&h, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(w, vec![1.0, 0.0, 0.0]);

        let (model, config, domain) = poisson_ws_fixture(10, 2.0);
        let ws = Workspace::new(&model, &config, &domain, QuadratureSpec::default()).unwrap();
        let theta = [0.2];
        let h_hat = ws.estimate_h_hat(&theta).unwrap();
        let e_hat = ws.estimate_e_hat(&theta, &TestFunction::Raw).unwrap();
        let w = estimate_w_hat(&h_hat, &e_hat).unwrap();
        assert_relative_eq!(w[0], 1.0, epsilon = 1e-10);
    }

    #[test]
    fn w_hat_rejects_singular_h() {
        let h = DMatrix::<f64>::zeros(2, 2);
        assert!(matches!(
            estimate_w_hat(&h, &[1.0, 1.0]),
            Err(Error::DegenerateNormalization { .. })
        ));
    }
}
