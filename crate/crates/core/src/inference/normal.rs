use super::dose::dose_response_test;
use super::null::{NullKind, NullSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    covariate_adjusted_estimate, log_contrast_estimate, AnalysisOptions, CiMethod, EstimateReport,
    Method,
};
use crate::model::ParallelData;

/// Wald test of `null` for the log-contrast, covariate-adjusted and
/// dose-response methods, with the matching Normal interval.
pub fn normal_test(
    data: &ParallelData,
    null: &NullSpec,
    method: Method,
    opts: &AnalysisOptions,
) -> Result<EstimateReport> {
    null.validate()?;
    match (method, null.kind) {
        (Method::LogContrast | Method::CovariateAdjusted, NullKind::RelativeRisk { lambda0 }) => {
            let report = if method == Method::LogContrast {
                log_contrast_estimate(data, opts)?
            } else {
                covariate_adjusted_estimate(data, None, opts)?.0
            };
            let se = report.se_log.unwrap_or(0.0);
            Ok(report.with_normal_inference(se, lambda0.ln(), CiMethod::Normal))
        }
        (Method::DoseResponse, NullKind::DoseResponse { beta0 }) => {
            dose_response_test(data, beta0, null.adjustment, opts)
        }
        _ => Err(Error::InvalidInput(format!(
            "no Normal test for method {} with this null",
            method.name()
        ))),
    }
}
