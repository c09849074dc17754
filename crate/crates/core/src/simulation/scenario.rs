use serde::{Deserialize, Serialize};

use crate::assignment::AssignmentScheme;
use crate::error::{Error, Result};

/// Law of the relative ascertainment `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum AscertainmentLaw {
    Beta { a: f64, b: f64 },
    Constant { value: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawPolicy {
    /// One draw applied to every replicate.
    #[default]
    OncePerStudy,
    PerReplicate,
}

/// How drawn `c` values are matched to clusters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AscertainmentOrder {
    /// Independently of the baselines.
    #[default]
    Independent,
    /// Sorted draws matched to clusters by rank of the baseline ratio
    /// `O^Y / O^Z`, so that `c` increases with it.
    CoupledToContrast,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ascertainment {
    #[serde(flatten)]
    pub law: AscertainmentLaw,
    #[serde(default)]
    pub draw_policy: DrawPolicy,
    #[serde(default)]
    pub order: AscertainmentOrder,
}

impl Default for Ascertainment {
    fn default() -> Self {
        Ascertainment {
            law: AscertainmentLaw::Beta { a: 0.5, b: 0.5 },
            draw_policy: DrawPolicy::OncePerStudy,
            order: AscertainmentOrder::Independent,
        }
    }
}

/// Where the baseline counts come from.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum BaselineSource {
    /// The synthetic tables compiled into the crate.
    #[default]
    Builtin,
    /// CSV file(s); relative paths are resolved by the caller.
    File {
        parallel: String,
        #[serde(default)]
        stepped_wedge: Option<String>,
    },
}

/// Linear dose-response data-generating process: `L = L(0) + beta D` with
/// `D` uniform on an arm-specific range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoseModel {
    pub beta: f64,
    pub treated_range: (f64, f64),
    pub control_range: (f64, f64),
}

impl Default for DoseModel {
    fn default() -> Self {
        DoseModel {
            beta: -3.42,
            treated_range: (0.66, 0.75),
            control_range: (0.22, 0.44),
        }
    }
}

fn default_alpha() -> f64 {
    0.05
}
fn default_permutation_draws() -> usize {
    1000
}
fn default_max_redraws() -> usize {
    100
}
fn default_degenerate_limit() -> f64 {
    0.01
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub id: String,
    pub design: AssignmentScheme,
    #[serde(default)]
    pub baseline: BaselineSource,
    pub lambda: f64,
    #[serde(default)]
    pub ascertainment: Ascertainment,
    /// Multiply `O^Y(0)` and divide `O^Z(0)` by twice the first covariate.
    #[serde(default = "default_true")]
    pub covariate_coupling: bool,
    pub n_replicates: usize,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// Monte Carlo draws for the odds-ratio SE and the TPF tests.
    #[serde(default = "default_permutation_draws")]
    pub permutation_draws: usize,
    #[serde(default)]
    pub dose: Option<DoseModel>,
    #[serde(default = "default_max_redraws")]
    pub max_redraws: usize,
    /// Largest tolerated share of degenerate replicates.
    #[serde(default = "default_degenerate_limit")]
    pub degenerate_limit: f64,
}

impl SimScenario {
    /// 24 clusters, 12 treated, synthetic baselines, `c ~ Beta(0.5, 0.5)`
    /// once per study, covariate coupling on.
    pub fn default_parallel() -> Self {
        SimScenario {
            id: "parallel-default".into(),
            design: AssignmentScheme::Parallel { m: 24, m1: 12 },
            baseline: BaselineSource::Builtin,
            lambda: 1.0,
            ascertainment: Ascertainment::default(),
            covariate_coupling: true,
            n_replicates: 10_000,
            seed: 1,
            alpha: 0.05,
            permutation_draws: default_permutation_draws(),
            dose: None,
            max_redraws: default_max_redraws(),
            degenerate_limit: default_degenerate_limit(),
        }
    }

    /// 24 clusters over 9 periods, three clusters starting at each of
    /// periods 2..=9, `c_it ~ Beta(0.5, 0.5)`.
    pub fn default_stepped_wedge() -> Self {
        let mut q = vec![3; 9];
        q[0] = 0;
        SimScenario {
            id: "stepped-wedge-default".into(),
            design: AssignmentScheme::SteppedWedge { q },
            covariate_coupling: false,
            n_replicates: 5_000,
            ..Self::default_parallel()
        }
    }

    /// The parallel default with a linear dose effect.
    pub fn default_dose_response() -> Self {
        SimScenario {
            id: "dose-response-default".into(),
            dose: Some(DoseModel::default()),
            n_replicates: 1_000,
            ..Self::default_parallel()
        }
    }

    pub fn is_stepped_wedge(&self) -> bool {
        matches!(self.design, AssignmentScheme::SteppedWedge { .. })
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        self.design.validate()?;
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be positive, got {}", self.lambda));
        }
        if self.n_replicates == 0 {
            return bad("n_replicates must be positive".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return bad(format!("alpha must be in (0, 0.5), got {}", self.alpha));
        }
        if self.permutation_draws == 0 {
            return bad("permutation_draws must be positive".into());
        }
        if !(0.0..1.0).contains(&self.degenerate_limit) {
            return bad("degenerate_limit must be in [0, 1)".into());
        }
        match self.ascertainment.law {
            AscertainmentLaw::Beta { a, b } if !(a > 0.0 && b > 0.0) => {
                return bad(format!("Beta shapes must be positive, got ({a}, {b})"))
            }
            AscertainmentLaw::Constant { value } if !(value > 0.0 && value.is_finite()) => {
                return bad(format!("constant ascertainment must be positive, got {value}"))
            }
            _ => {}
        }
        if let Some(d) = &self.dose {
            if self.is_stepped_wedge() {
                return bad("dose models are only defined for parallel designs".into());
            }
            for (lo, hi) in [d.treated_range, d.control_range] {
                if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                    return bad(format!("dose range ({lo}, {hi}) must lie in [0, 1]"));
                }
            }
            if !d.beta.is_finite() {
                return bad("dose slope must be finite".into());
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: SimScenario =
            toml::from_str(text).map_err(|e| Error::InvalidScenario(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidScenario(e.to_string()))
    }
}
