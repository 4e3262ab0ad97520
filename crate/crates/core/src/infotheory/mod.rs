//! Likelihoods, Monte-Carlo information and outage estimators, and the
//! closed-form pairwise outage bounds used as labelling measures.

mod bounds;
mod metrics;
pub(crate) mod mi;

pub use bounds::{
    bhattacharyya, bhattacharyya_tv_avg, cutoff_rate, fit_quality, gamma_moments, histogram_kl_to_lognormal,
    kl_divergence, ln_i0_piecewise, omega_moments, q_from_rate, tvsbc_log_metric,
    tvsbc_moments, ubpop_sbc, ubpop_stbc, ubpop_tvsbc, OmegaMoments, TvsbcMoments,
};
pub use metrics::{log_sum_exp, RxPoints};
pub use mi::{
    level_llr, levelwise_mi, log_likelihood, mi_samples, mutual_information,
    mutual_information_adaptive, outage_capacity, outage_probability, outage_probability_adaptive,
    AdaptiveMc, MiEstimate, MiSamples,
};
