//! Solver configuration.

use serde::{Deserialize, Serialize};

use super::SolverError;

/// How many layers share structure and which coupling terms are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMode {
    /// One layer, no cross-layer structure.
    Single,
    /// Several layers solved side by side without coupling.
    Independent,
    /// Group members share the common right-factor block.
    Shared,
    /// Shared block plus the depth-proximity similarity term.
    Micik,
}

/// What the data term fits against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataTermMode {
    /// Sampled activations: fit responses `Y ~ W X`.
    Calibration,
    /// No samples: fit the weights directly (`X = I`, `Y = W`).
    WeightOnly,
}

/// Direction of the similarity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimilaritySign {
    /// Pull individual blocks of nearby layers together.
    Attract,
    /// Push them apart.
    Repel,
}

impl SimilaritySign {
    pub(crate) fn factor(self) -> f64 {
        match self {
            SimilaritySign::Attract => 1.0,
            SimilaritySign::Repel => -1.0,
        }
    }
}

/// How the common block moves from one group member to the next.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommonUpdate {
    /// Each layer's updated common block seeds the next layer (default).
    Carry,
    /// Layers update from the same block; their results are averaged.
    Average,
}

/// Full solver configuration.
///
/// `rank` is the per-layer total rank target. In shared and micik modes the
/// common block takes `round(common_ratio * rank)` of it and the rest is
/// individual. `card` caps stored sparse entries per layer when
/// `enforce_cardinality` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub mode: SolverMode,
    pub data_term: DataTermMode,
    /// Regularizer exponent: the weight-residual strength is `10^eta`
    /// times the largest eigenvalue of the sample second moment
    /// (just `10^eta` in weight-only mode). Open interval (-3, 3).
    pub eta: f64,
    /// Sparse shrinkage strength.
    pub lambda2: f64,
    /// Similarity term strength (micik mode only; forced to zero otherwise).
    pub lambda_theta: f64,
    pub similarity_sign: SimilaritySign,
    /// Per-layer total rank target.
    pub rank: usize,
    /// Fraction of the rank assigned to the common block.
    pub common_ratio: f64,
    /// Per-layer sparse entry budget.
    pub card: usize,
    /// Alternating update epochs.
    pub epochs: usize,
    /// Rank growth per epoch until the target is reached.
    pub delta_m: usize,
    pub enforce_cardinality: bool,
    pub common_update: CommonUpdate,
    /// Recorded with results; the solver itself is deterministic.
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            mode: SolverMode::Micik,
            data_term: DataTermMode::WeightOnly,
            eta: 0.0,
            lambda2: 0.13,
            lambda_theta: 1e-3,
            similarity_sign: SimilaritySign::Attract,
            rank: 1,
            common_ratio: 0.5,
            card: 0,
            epochs: 20,
            delta_m: 1,
            enforce_cardinality: true,
            common_update: CommonUpdate::Carry,
            seed: 0,
        }
    }
}

impl SolverConfig {
    /// Checks the layer-independent parts of the configuration.
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.eta > -3.0 && self.eta < 3.0) {
            return Err(SolverError::InvalidEta(self.eta));
        }
        if !(self.lambda2 >= 0.0 && self.lambda2.is_finite()) {
            return Err(SolverError::NegativeRegularizer {
                name: "lambda2",
                value: self.lambda2,
            });
        }
        if !(self.lambda_theta >= 0.0 && self.lambda_theta.is_finite()) {
            return Err(SolverError::NegativeRegularizer {
                name: "lambda_theta",
                value: self.lambda_theta,
            });
        }
        if !(self.common_ratio >= 0.0 && self.common_ratio <= 1.0) {
            return Err(SolverError::InvalidRatio(self.common_ratio));
        }
        if self.rank == 0 {
            return Err(SolverError::ZeroRank);
        }
        if self.epochs == 0 {
            return Err(SolverError::ZeroEpochs);
        }
        if self.delta_m == 0 {
            return Err(SolverError::ZeroDeltaM);
        }
        Ok(())
    }

    /// Similarity strength actually applied: zero outside micik mode.
    pub fn effective_lambda_theta(&self) -> f64 {
        match self.mode {
            SolverMode::Micik => self.lambda_theta,
            _ => 0.0,
        }
    }

    /// Rows of the common block implied by this configuration.
    pub fn common_rank(&self) -> usize {
        match self.mode {
            SolverMode::Shared | SolverMode::Micik => {
                (self.common_ratio * self.rank as f64).round() as usize
            }
            SolverMode::Single | SolverMode::Independent => 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        SolverConfig::default().validate().unwrap();
    }

    #[test]
    fn eta_bounds_are_open() {
        let mut c = SolverConfig::default();
        c.eta = 3.0;
        assert!(matches!(c.validate(), Err(SolverError::InvalidEta(_))));
        c.eta = -3.0;
        assert!(matches!(c.validate(), Err(SolverError::InvalidEta(_))));
        c.eta = 2.999;
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_degenerate_values() {
        let mut c = SolverConfig::default();
        c.lambda2 = -0.1;
        assert!(c.validate().is_err());
        c = SolverConfig::default();
        c.common_ratio = 1.5;
        assert!(matches!(c.validate(), Err(SolverError::InvalidRatio(_))));
        c = SolverConfig::default();
        c.rank = 0;
        assert!(matches!(c.validate(), Err(SolverError::ZeroRank)));
        c = SolverConfig::default();
        c.epochs = 0;
        assert!(matches!(c.validate(), Err(SolverError::ZeroEpochs)));
        c = SolverConfig::default();
        c.delta_m = 0;
        assert!(matches!(c.validate(), Err(SolverError::ZeroDeltaM)));
    }

    #[test]
    fn common_rank_follows_mode_and_ratio() {
        let mut c = SolverConfig::default();
        c.rank = 12;
        c.common_ratio = 2.0 / 3.0;
        c.mode = SolverMode::Micik;
        assert_eq!(c.common_rank(), 8);
        c.mode = SolverMode::Shared;
        c.common_ratio = 0.5;
        assert_eq!(c.common_rank(), 6);
        c.mode = SolverMode::Independent;
        assert_eq!(c.common_rank(), 0);
        c.mode = SolverMode::Micik;
        c.common_ratio = 0.0;
        assert_eq!(c.common_rank(), 0);
        c.common_ratio = 1.0;
        assert_eq!(c.common_rank(), 12);
    }

    #[test]
    fn lambda_theta_forced_outside_micik() {
        let mut c = SolverConfig::default();
        c.lambda_theta = 0.5;
        c.mode = SolverMode::Shared;
        assert_eq!(c.effective_lambda_theta(), 0.0);
        c.mode = SolverMode::Micik;
        assert_eq!(c.effective_lambda_theta(), 0.5);
    }

    #[test]
    fn config_serializes_round_trip() {
        let c = SolverConfig::default();
        let json = serde_json::to_string(&c).unwrap();
        let back: SolverConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, c);
    }
}
