use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParallelData;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NullKind {
    RelativeRisk { lambda0: f64 },
    DoseResponse { beta0: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullAdjustment {
    #[default]
    None,
    Covariates,
}

/// A sharp null hypothesis: `lambda = lambda0` or `beta = beta0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSpec {
    pub kind: NullKind,
    #[serde(default)]
    pub adjustment: NullAdjustment,
}

impl NullSpec {
    pub fn relative_risk(lambda0: f64) -> Result<Self> {
        let s = Self {
            kind: NullKind::RelativeRisk { lambda0 },
            adjustment: NullAdjustment::None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn dose_response(beta0: f64) -> Result<Self> {
        let s = Self {
            kind: NullKind::DoseResponse { beta0 },
            adjustment: NullAdjustment::None,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn with_covariates(mut self) -> Self {
        self.adjustment = NullAdjustment::Covariates;
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            NullKind::RelativeRisk { lambda0 } if !(lambda0 > 0.0 && lambda0.is_finite()) => Err(
                Error::InvalidInput(format!("lambda0 must be positive, got {lambda0}")),
            ),
            NullKind::DoseResponse { beta0 } if !beta0.is_finite() => Err(Error::InvalidInput(
                format!("beta0 must be finite, got {beta0}"),
            )),
            _ => Ok(()),
        }
    }

    /// `log(lambda0)` or `beta0`.
    pub fn null_value(&self) -> f64 {
        match self.kind {
            NullKind::RelativeRisk { lambda0 } => lambda0.ln(),
            NullKind::DoseResponse { beta0 } => beta0,
        }
    }
}

/// Control log-contrasts implied by the null: `L_i - A_i log(lambda0)` or
/// `L_i - beta0 D_i`. Under the null these do not depend on the assignment.
pub fn impute_null_outcomes(
    data: &ParallelData,
    null: &NullSpec,
    correction: bool,
) -> Result<Vec<f64>> {
    null.validate()?;
    let l = data.log_contrasts(correction)?;
    Ok(match null.kind {
        NullKind::RelativeRisk { lambda0 } => {
            let shift = lambda0.ln();
            l.iter()
                .zip(data.records())
                .map(|(v, r)| if r.treated { v - shift } else { *v })
                .collect()
        }
        NullKind::DoseResponse { beta0 } => {
            let d = data.doses()?;
            l.iter().zip(&d).map(|(v, d)| v - beta0 * d).collect()
        }
    })
}

/// Control test-positive counts `y_i / lambda0^{A_i}`; test-negative counts
/// are kept, which amounts to taking `c_i = 1`.
pub fn impute_null_counts(data: &ParallelData, lambda0: f64) -> Result<Vec<f64>> {
    NullSpec::relative_risk(lambda0)?;
    Ok(data
        .records()
        .iter()
        .map(|r| if r.treated { r.y_count / lambda0 } else { r.y_count })
        .collect())
}
