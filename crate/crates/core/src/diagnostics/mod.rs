//! Model-light dataset diagnostics: task entropy of inter-visit change and
//! posterior concentration of a stochastic predictor.

mod entropy;
mod posterior;

pub use entropy::{
    entropy_report, pair_stats, EntropyReport, GlobalStats, PairStats, PooledHistogram, StratumRow,
    HIST_BINS,
};
pub use posterior::{
    decompose_eye, posterior_report, EyeDecomposition, ModelPosterior, PosteriorEye,
    PosteriorReport, SampleAgreement,
};

use serde::{Deserialize, Serialize};

use crate::stats::{mean, sample_sd};

/// Mean with sample standard deviation (absent for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: Option<f64>,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            mean: mean(values)?,
            sd: sample_sd(values),
        })
    }

    pub fn display(&self, digits: usize) -> String {
        match self.sd {
            Some(sd) => format!("{:.digits$} +/- {:.digits$}", self.mean, sd),
            None => format!("{:.digits$}", self.mean),
        }
    }
}
