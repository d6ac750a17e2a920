//! Monte Carlo oracles and closed-form probes of the estimators' theory.
//!
//! Every oracle runs its replications through [`crate::par`] with one random
//! substream per replication, and reports a value with its standard error.

mod limits;
mod oracle;
mod variance;

pub use limits::{by_inf, cb_inf, ht_divergence_limit, ht_inner_product_exact, ht_inner_product_mc};
pub use oracle::{
    mc_df, mc_optimism_decomposition, mc_risk, mc_structured_risk, risk_alpha_curve, stein_formula_check,
    OptimismDecomposition, SteinCheck,
};
pub use variance::{
    bias_bounds, bias_bounds_curve, bias_variance_report, measured_rvar, rvar_leading_terms, BiasBounds,
    BiasBoundsCurve, BiasVarianceReport, RvarLeadingTerms, VarianceStudy,
};

pub use crate::stats::OracleEstimate;

use crate::error::{Error, Result};

pub(crate) fn check_reps(r: usize, what: &str) -> Result<()> {
    if r < 2 {
        Err(Error::invalid(format!("{what} must be at least 2, got {r}")))
    } else {
        Ok(())
    }
}
