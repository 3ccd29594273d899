//! Figures of merit computed from count records.

mod car;
mod chsh;
pub mod io;
mod tomography;
mod visibility;

use serde::{Deserialize, Serialize};

pub use car::{
    analytic_car, calibrate_noise, compute_car, peak_matched_dark_rates, peak_power, CarModel,
};
pub use chsh::{
    chsh_correlation, chsh_s, chsh_s_from_counts, chsh_settings_list, exact_chsh_counts,
    ChshResult, ChshSettings,
};
pub use tomography::{
    bootstrap_fidelity, exact_tomography_counts, linear_inversion, log_likelihood, mle_reconstruct,
    tomography_settings, FidelityEstimate, MleOptions, TomographyData, TomographyResult,
};
pub use visibility::{
    fit_fringe_frequency, fit_visibility, FringeDataset, FringeFit, VisibilityResult,
};

/// Value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }
}

impl std::fmt::Display for Estimate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:.4} ± {:.4}", self.value, self.sigma)
    }
}

/// Whether accidental coincidences are subtracted before analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    Raw,
    /// Coincidences minus accidentals, clamped at zero.
    Net,
}

impl CountMode {
    pub fn counts(self, rec: &crate::sim::CountRecord) -> f64 {
        match self {
            CountMode::Raw => rec.coincidences as f64,
            CountMode::Net => rec.net_coincidences() as f64,
        }
    }

    /// Poisson variance of [`Self::counts`].
    pub fn variance(self, rec: &crate::sim::CountRecord) -> f64 {
        match self {
            CountMode::Raw => rec.coincidences as f64,
            CountMode::Net => (rec.coincidences + rec.accidentals) as f64,
        }
    }
}
