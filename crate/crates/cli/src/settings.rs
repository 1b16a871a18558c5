//! Run settings assembled from command-line flags and an optional
//! `key = value` configuration file; flags override the file, and
//! anything left unset falls back to the library defaults.

use micik::solver::{CommonUpdate, DataTermMode, SimilaritySign, SolverConfig, SolverMode};

/// How the data term is chosen for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataTermChoice {
    /// Use calibration when every layer ships activations and no group is
    /// depth-chunked; fall back to weights otherwise.
    Auto,
    /// Require calibration data on every layer.
    Calibration,
    /// Fit weights directly, ignoring any calibration entries.
    WeightOnly,
}

/// Settings gathered so far; `None` means "not given here".
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawSettings {
    pub mode: Option<SolverMode>,
    pub data_term: Option<DataTermChoice>,
    pub eta: Option<f64>,
    pub lambda2: Option<f64>,
    pub lambda_theta: Option<f64>,
    pub rank: Option<usize>,
    pub common_ratio: Option<f64>,
    pub card: Option<usize>,
    pub epochs: Option<usize>,
    pub delta_m: Option<usize>,
    pub similarity_sign: Option<SimilaritySign>,
    pub common_update: Option<CommonUpdate>,
    pub enforce_cardinality: Option<bool>,
    pub seed: Option<u64>,
    pub max_group: Option<usize>,
}

/// A fully resolved run: solver configuration plus front-end policy.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub solver: SolverConfig,
    pub data_term: DataTermChoice,
    pub max_group: usize,
}

pub fn parse_mode(value: &str) -> Result<SolverMode, String> {
    match value {
        "single" => Ok(SolverMode::Single),
        "independent" => Ok(SolverMode::Independent),
        "shared" => Ok(SolverMode::Shared),
        "micik" => Ok(SolverMode::Micik),
        other => Err(format!(
            "unknown mode {other:?}, expected single, independent, shared or micik"
        )),
    }
}

pub fn parse_data_term(value: &str) -> Result<DataTermChoice, String> {
    match value {
        "auto" => Ok(DataTermChoice::Auto),
        "calibration" => Ok(DataTermChoice::Calibration),
        "weight-only" | "weight_only" => Ok(DataTermChoice::WeightOnly),
        other => Err(format!(
            "unknown data term {other:?}, expected auto, calibration or weight-only"
        )),
    }
}

pub fn parse_sign(value: &str) -> Result<SimilaritySign, String> {
    match value {
        "attract" => Ok(SimilaritySign::Attract),
        "repel" => Ok(SimilaritySign::Repel),
        other => Err(format!(
            "unknown similarity sign {other:?}, expected attract or repel"
        )),
    }
}

pub fn parse_update(value: &str) -> Result<CommonUpdate, String> {
    match value {
        "carry" => Ok(CommonUpdate::Carry),
        "average" => Ok(CommonUpdate::Average),
        other => Err(format!(
            "unknown common update {other:?}, expected carry or average"
        )),
    }
}

pub fn parse_switch(value: &str) -> Result<bool, String> {
    match value {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        other => Err(format!("expected true or false, got {other:?}")),
    }
}

fn parse_number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| format!("bad value for {key}: {e}"))
}

impl RawSettings {
    /// Parses `key = value` lines; `#` starts a comment and blank lines are
    /// skipped. Keys match the long flag names, with `-` and `_`
    /// interchangeable.
    pub fn from_config_text(text: &str) -> Result<Self, String> {
        let mut settings = Self::default();
        for (number, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", number + 1))?;
            let key = key.trim().replace('-', "_");
            let value = value.trim();
            match key.as_str() {
                "mode" => settings.mode = Some(parse_mode(value)?),
                "data_term" => settings.data_term = Some(parse_data_term(value)?),
                "eta" => settings.eta = Some(parse_number(&key, value)?),
                "lambda2" => settings.lambda2 = Some(parse_number(&key, value)?),
                "lambda_theta" => settings.lambda_theta = Some(parse_number(&key, value)?),
                "rank" => settings.rank = Some(parse_number(&key, value)?),
                "common_ratio" => settings.common_ratio = Some(parse_number(&key, value)?),
                "card" => settings.card = Some(parse_number(&key, value)?),
                "epochs" => settings.epochs = Some(parse_number(&key, value)?),
                "delta_m" => settings.delta_m = Some(parse_number(&key, value)?),
                "similarity_sign" => settings.similarity_sign = Some(parse_sign(value)?),
                "common_update" => settings.common_update = Some(parse_update(value)?),
                "enforce_cardinality" => {
                    settings.enforce_cardinality = Some(parse_switch(value)?)
                }
                "seed" => settings.seed = Some(parse_number(&key, value)?),
                "max_group" => settings.max_group = Some(parse_number(&key, value)?),
                other => return Err(format!("line {}: unknown key {other:?}", number + 1)),
            }
        }
        Ok(settings)
    }

    /// Fills gaps in `self` from `fallback`; `self` wins where both are set.
    pub fn or(self, fallback: Self) -> Self {
        Self {
            mode: self.mode.or(fallback.mode),
            data_term: self.data_term.or(fallback.data_term),
            eta: self.eta.or(fallback.eta),
            lambda2: self.lambda2.or(fallback.lambda2),
            lambda_theta: self.lambda_theta.or(fallback.lambda_theta),
            rank: self.rank.or(fallback.rank),
            common_ratio: self.common_ratio.or(fallback.common_ratio),
            card: self.card.or(fallback.card),
            epochs: self.epochs.or(fallback.epochs),
            delta_m: self.delta_m.or(fallback.delta_m),
            similarity_sign: self.similarity_sign.or(fallback.similarity_sign),
            common_update: self.common_update.or(fallback.common_update),
            enforce_cardinality: self.enforce_cardinality.or(fallback.enforce_cardinality),
            seed: self.seed.or(fallback.seed),
            max_group: self.max_group.or(fallback.max_group),
        }
    }

    /// Applies defaults: library defaults for solver fields, automatic data
    /// term selection, and groups of at most four layers.
    pub fn into_run(self) -> RunSettings {
        let defaults = SolverConfig::default();
        RunSettings {
            solver: SolverConfig {
                mode: self.mode.unwrap_or(defaults.mode),
                data_term: DataTermMode::WeightOnly,
                eta: self.eta.unwrap_or(defaults.eta),
                lambda2: self.lambda2.unwrap_or(defaults.lambda2),
                lambda_theta: self.lambda_theta.unwrap_or(defaults.lambda_theta),
                similarity_sign: self.similarity_sign.unwrap_or(defaults.similarity_sign),
                rank: self.rank.unwrap_or(defaults.rank),
                common_ratio: self.common_ratio.unwrap_or(defaults.common_ratio),
                card: self.card.unwrap_or(defaults.card),
                epochs: self.epochs.unwrap_or(defaults.epochs),
                delta_m: self.delta_m.unwrap_or(defaults.delta_m),
                enforce_cardinality: self
                    .enforce_cardinality
                    .unwrap_or(defaults.enforce_cardinality),
                common_update: self.common_update.unwrap_or(defaults.common_update),
                seed: self.seed.unwrap_or(defaults.seed),
            },
            data_term: self.data_term.unwrap_or(DataTermChoice::Auto),
            max_group: self.max_group.unwrap_or(4),
        }
    }
}
