//! Run configuration: a TOML file validated against a strict schema before
//! anything executes.

use gibbsgof::{
    AreaInteraction, FitOptions, GofParams, Model, ObservationDomain, Poisson, QuadratureSpec,
    SamplerConfig, TestFunction, TestKind, TwoTypeStrauss,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// One of `poisson`, `strauss2`, `area`.
    pub model: String,
    pub range11: Option<f64>,
    pub range12: Option<f64>,
    pub range22: Option<f64>,
    pub hardcore: Option<f64>,
    pub disc_radius: Option<f64>,
    pub mark_weights: Option<[f64; 2]>,
    pub window: WindowBlock,
    #[serde(default)]
    pub quadrature: QuadratureBlock,
    #[serde(default)]
    pub estimation: EstimationBlock,
    #[serde(default)]
    pub residuals: ResidualBlock,
    #[serde(default)]
    pub cov: CovBlock,
    #[serde(default)]
    pub test: TestBlock,
    #[serde(default)]
    pub sampler: SamplerBlock,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowBlock {
    pub side: f64,
    pub guard: f64,
    pub dimension: usize,
    pub center: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuadratureBlock {
    pub resolution: u32,
}

impl Default for QuadratureBlock {
    fn default() -> Self {
        QuadratureBlock { resolution: 64 }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimationBlock {
    pub theta0: Option<Vec<f64>>,
    pub tol: f64,
    pub max_iter: usize,
    pub theta_bound: f64,
}

impl Default for EstimationBlock {
    fn default() -> Self {
        let defaults = FitOptions::default();
        EstimationBlock {
            theta0: None,
            tol: defaults.tol,
            max_iter: defaults.max_iter,
            theta_bound: defaults.theta_bound,
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResidualBlock {
    /// Test functions, e.g. `["raw", "inverse", "pearson", "empty:0.05"]`.
    pub h: Vec<String>,
    /// Evaluate residuals at this θ instead of refitting.
    pub theta: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovBlock {
    pub delta: Option<f64>,
    pub d_vee: Option<f64>,
    pub subdomains: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestBlock {
    pub name: String,
    pub h: Vec<String>,
    pub alpha: f64,
    pub subdomains: Option<usize>,
}

impl Default for TestBlock {
    fn default() -> Self {
        TestBlock {
            name: "t1".into(),
            h: vec!["raw".into()],
            alpha: 0.05,
            subdomains: None,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerBlock {
    pub seed: u64,
    pub sweeps: u32,
    pub replicates: usize,
    pub theta: Option<Vec<f64>>,
    pub birth_fraction: f64,
    pub move_fraction: f64,
    pub reference_intensity: f64,
}

impl Default for SamplerBlock {
    fn default() -> Self {
        let d = SamplerConfig::default();
        SamplerBlock {
            seed: d.seed,
            sweeps: d.sweeps,
            replicates: 1,
            theta: None,
            birth_fraction: d.birth_fraction,
            move_fraction: d.move_fraction,
            reference_intensity: d.reference_intensity,
        }
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading config {}: {e}", path.display())))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(format!("config schema: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.window.side <= 0.0 {
            return Err(CliError::config("window.side must be positive"));
        }
        if self.window.guard < 0.0 {
            return Err(CliError::config("window.guard must be nonnegative"));
        }
        if let Some(center) = &self.window.center {
            if center.len() != self.window.dimension {
                return Err(CliError::config(
                    "window.center length must match window.dimension",
                ));
            }
        }
        let model = self.build_model()?;
        if self.window.guard + 1e-12 < model.range() {
            return Err(CliError::config(format!(
                "window.guard {} is below the model range {}",
                self.window.guard,
                model.range()
            )));
        }
        if let Some(theta) = &self.sampler.theta {
            if theta.len() != model.param_len() {
                return Err(CliError::config(format!(
                    "sampler.theta has {} components, the model needs {}",
                    theta.len(),
                    model.param_len()
                )));
            }
        }
        Ok(())
    }

    pub fn build_model(&self) -> Result<Box<dyn Model>, CliError> {
        match self.model.as_str() {
            "poisson" => Ok(Box::new(Poisson::new(self.window.dimension))),
            "strauss2" => {
                let r11 = self
                    .range11
                    .ok_or_else(|| CliError::config("strauss2 needs range11"))?;
                let r12 = self
                    .range12
                    .ok_or_else(|| CliError::config("strauss2 needs range12"))?;
                let r22 = self
                    .range22
                    .ok_or_else(|| CliError::config("strauss2 needs range22"))?;
                let mut model = TwoTypeStrauss::new(self.window.dimension, r11, r12, r22);
                if let Some(hc) = self.hardcore {
                    if hc <= 0.0 {
                        return Err(CliError::config("hardcore must be positive"));
                    }
                    model = model.with_hardcore(hc);
                }
                if let Some([w1, w2]) = self.mark_weights {
                    if w1 <= 0.0 || w2 <= 0.0 || (w1 + w2 - 1.0).abs() > 1e-9 {
                        return Err(CliError::config("mark_weights must be positive and sum to 1"));
                    }
                    model = model.with_mark_weights(w1, w2);
                }
                Ok(Box::new(model))
            }
            "area" => {
                if self.window.dimension != 2 {
                    return Err(CliError::config("the area-interaction model requires dimension 2"));
                }
                let radius = self
                    .disc_radius
                    .ok_or_else(|| CliError::config("area needs disc_radius"))?;
                if radius <= 0.0 {
                    return Err(CliError::config("disc_radius must be positive"));
                }
                Ok(Box::new(AreaInteraction::new(radius)))
            }
            other => Err(CliError::config(format!(
                "unknown model '{other}' (expected poisson | strauss2 | area)"
            ))),
        }
    }

    pub fn domain(&self) -> ObservationDomain {
        let center = self
            .window
            .center
            .clone()
            .unwrap_or_else(|| vec![0.0; self.window.dimension]);
        ObservationDomain::new(center, self.window.side, self.window.guard)
    }

    pub fn quadrature_spec(&self) -> QuadratureSpec {
        QuadratureSpec::new(self.quadrature.resolution)
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            tol: self.estimation.tol,
            max_iter: self.estimation.max_iter,
            theta_bound: self.estimation.theta_bound,
        }
    }

    pub fn gof_params(&self, alpha: f64) -> GofParams {
        GofParams {
            delta: self.cov.delta,
            d_vee: self.cov.d_vee,
            alpha,
            fit: self.fit_options(),
            theta0: self.estimation.theta0.clone(),
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.sampler.seed,
            sweeps: self.sampler.sweeps,
            birth_fraction: self.sampler.birth_fraction,
            move_fraction: self.sampler.move_fraction,
            reference_intensity: self.sampler.reference_intensity,
        }
    }
}

/// Parses a test-function token: `raw`, `inverse`, `pearson`, `empty:R`
/// (or `empty:r1,r2,...` expanding to several), `linear:w1,w2,...`.
pub fn parse_test_functions(token: &str) -> Result<Vec<TestFunction>, CliError> {
    let token = token.trim();
    match token {
        "raw" => return Ok(vec![TestFunction::Raw]),
        "inverse" => return Ok(vec![TestFunction::Inverse]),
        "pearson" => return Ok(vec![TestFunction::Pearson]),
        _ => {}
    }
    if let Some(radii) = token.strip_prefix("empty:") {
        let rs: Result<Vec<f64>, _> = radii.split(',').map(|r| r.trim().parse::<f64>()).collect();
        let rs = rs.map_err(|e| CliError::config(format!("bad empty-space radius list: {e}")))?;
        if rs.is_empty() {
            return Err(CliError::config("empty-space needs at least one radius"));
        }
        return Ok(rs.into_iter().map(TestFunction::EmptySpace).collect());
    }
    if let Some(weights) = token.strip_prefix("linear:") {
        let ws: Result<Vec<f64>, _> = weights.split(',').map(|w| w.trim().parse::<f64>()).collect();
        let ws = ws.map_err(|e| CliError::config(format!("bad linear-statistic weights: {e}")))?;
        return Ok(vec![TestFunction::LinearStat(ws)]);
    }
    Err(CliError::config(format!(
        "unknown test function '{token}' (raw | inverse | pearson | empty:r1[,r2..] | linear:w1,..)"
    )))
}

pub fn parse_test_function_list(tokens: &[String]) -> Result<Vec<TestFunction>, CliError> {
    let mut out = Vec::new();
    for token in tokens {
        out.extend(parse_test_functions(token)?);
    }
    if out.is_empty() {
        return Err(CliError::config("no test functions given"));
    }
    Ok(out)
}

/// Builds the test kind from a name, the h list and the subdomain count.
pub fn build_test_kind(
    name: &str,
    hs: Vec<TestFunction>,
    subdomains: Option<usize>,
) -> Result<TestKind, CliError> {
    let single = |mut hs: Vec<TestFunction>| -> Result<TestFunction, CliError> {
        if hs.len() != 1 {
            return Err(CliError::config(
                "tests t1 and t1tilde take exactly one test function",
            ));
        }
        Ok(hs.remove(0))
    };
    match name {
        "t1" => Ok(TestKind::T1 {
            h: single(hs)?,
            subdomains: subdomains
                .ok_or_else(|| CliError::config("t1 needs a subdomain count |J|"))?,
        }),
        "t1tilde" => Ok(TestKind::T1Tilde {
            h: single(hs)?,
            subdomains: subdomains
                .ok_or_else(|| CliError::config("t1tilde needs a subdomain count |J|"))?,
        }),
        "t2tilde" => Ok(TestKind::T2Tilde { hs }),
        other => Err(CliError::config(format!(
            "unknown test '{other}' (t1 | t1tilde | t2tilde)"
        ))),
    }
}
