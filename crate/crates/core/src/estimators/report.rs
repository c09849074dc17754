use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    OddsRatio,
    Tpf,
    LogContrast,
    CovariateAdjusted,
    DoseResponse,
    SwLogContrast,
}

impl Method {
    /// Whether the estimate lives on the log relative-risk scale (as opposed
    /// to the dose-response slope).
    pub fn is_relative_risk(self) -> bool {
        !matches!(self, Method::DoseResponse)
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::OddsRatio => "odds_ratio",
            Method::Tpf => "tpf",
            Method::LogContrast => "log_contrast",
            Method::CovariateAdjusted => "covariate_adjusted",
            Method::DoseResponse => "dose_response",
            Method::SwLogContrast => "sw_log_contrast",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Normal,
    TestInversion,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

impl Interval {
    pub fn contains(&self, v: f64) -> bool {
        self.low <= v && v <= self.high
    }
}

/// Shared knobs for every estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub alpha: f64,
    pub continuity_correction: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            continuity_correction: false,
        }
    }
}

/// Point estimate with optional standard error, interval and test.
///
/// `log_estimate` is `log(lambda_hat)` for relative-risk methods and the slope
/// `beta_hat` for dose-response. `ci` is on the natural scale: `lambda` for
/// relative-risk methods, `beta` for dose-response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub method: Method,
    pub log_estimate: f64,
    pub se_log: Option<f64>,
    pub ci: Option<Interval>,
    pub ci_method: Option<CiMethod>,
    pub alpha: f64,
    /// Two-sided p-value against `null_value` (on the estimate's scale).
    pub p_value: Option<f64>,
    pub null_value: Option<f64>,
    pub diagnostics: BTreeMap<String, Value>,
}

impl EstimateReport {
    pub fn point(method: Method, log_estimate: f64, alpha: f64) -> Self {
        Self {
            method,
            log_estimate,
            se_log: None,
            ci: None,
            ci_method: None,
            alpha,
            p_value: None,
            null_value: None,
            diagnostics: BTreeMap::new(),
        }
    }

    /// Attaches a Wald test of `null_value` and the Normal interval
    /// `estimate -/+ z_{1-alpha/2} se`, exponentiated for relative-risk
    /// methods.
    pub fn with_normal_inference(mut self, se: f64, null_value: f64, ci_method: CiMethod) -> Self {
        let z = stats::normal_critical(self.alpha);
        let (lo, hi) = (self.log_estimate - z * se, self.log_estimate + z * se);
        self.se_log = Some(se);
        self.ci = Some(self.natural_interval(lo, hi));
        self.ci_method = Some(ci_method);
        self.null_value = Some(null_value);
        let diff = self.log_estimate - null_value;
        self.p_value = Some(if se > 0.0 {
            stats::two_sided_normal_p(diff / se)
        } else {
            self.diagnose("degenerate_variance", true);
            if diff == 0.0 {
                1.0
            } else {
                0.0
            }
        });
        self
    }

    pub fn natural_interval(&self, lo: f64, hi: f64) -> Interval {
        if self.method.is_relative_risk() {
            Interval {
                low: lo.exp(),
                high: hi.exp(),
            }
        } else {
            Interval { low: lo, high: hi }
        }
    }

    /// Estimate on the natural scale.
    pub fn estimate(&self) -> f64 {
        if self.method.is_relative_risk() {
            self.log_estimate.exp()
        } else {
            self.log_estimate
        }
    }

    pub fn diagnose(&mut self, key: &str, value: impl Into<Value>) {
        self.diagnostics.insert(key.to_string(), value.into());
    }

    pub fn warn(&mut self, message: impl Into<String>) {
        let entry = self
            .diagnostics
            .entry("warnings".to_string())
            .or_insert_with(|| Value::Array(Vec::new()));
        if let Value::Array(items) = entry {
            items.push(Value::String(message.into()));
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        match self.diagnostics.get("warnings") {
            Some(Value::Array(items)) => items
                .iter()
                .filter_map(|v| v.as_str().map(str::to_string))
                .collect(),
            _ => Vec::new(),
        }
    }
}
