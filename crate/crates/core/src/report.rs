//! Probe reports and log-log exponent fitting.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::GridSpec;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub scale: f64,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub residual: f64,
}

impl Fit {
    pub fn constant(&self) -> f64 {
        self.intercept.exp()
    }
}

/// Ordinary least squares on `(log x, log y)`; residual is the max absolute log deviation.
pub fn fit_exponent(samples: &[(f64, f64)]) -> Result<Fit> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples {
            needed: 3,
            got: samples.len(),
        });
    }
    if let Some(&(x, y)) = samples.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::NonPositive(if x > 0.0 { y } else { x }));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(crate::error::invalid("samples", "all abscissae coincide"));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).abs())
        .fold(0.0, f64::max);
    Ok(Fit {
        slope,
        intercept,
        residual,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    pub grid: Option<GridSpec>,
    pub rho_id: String,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub probe: String,
    pub parameter: String,
    pub params: BTreeMap<String, serde_json::Value>,
    pub samples: Vec<Sample>,
    pub fit: Option<Fit>,
    pub fitted_exponent: Option<f64>,
    pub fitted_constant: Option<f64>,
    pub residual: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
    pub environment: Environment,
}

impl ProbeReport {
    pub fn new(probe: &str, parameter: &str, environment: Environment) -> Self {
        Self {
            probe: probe.into(),
            parameter: parameter.into(),
            params: BTreeMap::new(),
            samples: Vec::new(),
            fit: None,
            fitted_exponent: None,
            fitted_constant: None,
            residual: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
            environment,
        }
    }

    pub fn param(mut self, key: &str, value: impl Serialize) -> Self {
        self.params.insert(
            key.into(),
            serde_json::to_value(value).unwrap_or(serde_json::Value::Null),
        );
        self
    }

    pub fn push(&mut self, scale: f64, value: f64) {
        self.samples.push(Sample { scale, value });
    }

    pub fn diagnostic(&mut self, key: impl Into<String>, value: f64) {
        self.diagnostics.insert(key.into(), value);
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        let msg = msg.into();
        log::warn!("{}: {msg}", self.probe);
        if !self.warnings.contains(&msg) {
            self.warnings.push(msg);
        }
    }

    /// Fits the positive samples; leaves the fit empty when fewer than three remain.
    pub fn fit(&mut self) -> Option<Fit> {
        let pts: Vec<(f64, f64)> = self
            .samples
            .iter()
            .filter(|s| s.scale > 0.0 && s.value > 0.0)
            .map(|s| (s.scale, s.value))
            .collect();
        let fit = fit_exponent(&pts).ok();
        self.fit = fit;
        self.fitted_exponent = fit.map(|f| f.slope);
        self.fitted_constant = fit.map(|f| f.constant());
        self.residual = fit.map(|f| f.residual);
        fit
    }

    pub fn max_value(&self) -> f64 {
        self.samples.iter().map(|s| s.value).fold(0.0, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.samples
            .iter()
            .map(|s| s.value)
            .fold(f64::INFINITY, f64::min)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn exact_power_law() {
        let pts: Vec<_> = [1.0, 2.0, 4.0, 8.0].iter().map(|&x| (x, 4.0 * x * x)).collect();
        let f = fit_exponent(&pts).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12);
        assert!((f.intercept - 4f64.ln()).abs() < 1e-12);
        assert!(f.residual < 1e-12);
        let flat: Vec<_> = [1.0, 3.0, 9.0].iter().map(|&x| (x, 7.0)).collect();
        assert!(fit_exponent(&flat).unwrap().slope.abs() < 1e-12);
    }

    #[test]
    fn noisy_power_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..12)
            .map(|k| {
                let x = 2f64.powi(k);
                (x, x.powf(1.5) * (1.0 + rng.random_range(-1e-3..1e-3)))
            })
            .collect();
        assert!((fit_exponent(&pts).unwrap().slope - 1.5).abs() < 0.01);
    }

    #[test]
    fn rejects_degenerate() {
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_exponent(&[(1.0, 1.0), (-2.0, 1.0), (3.0, 1.0)]).is_err());
    }
}
