//! Model families. Each fitted model is an immutable parameter set.

pub mod baseline;
pub mod fm;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod pmlr;
pub mod svd;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelFamily {
    #[serde(rename = "ur")]
    Ur,
    #[serde(rename = "gm")]
    Gm,
    #[serde(rename = "mom")]
    Mom,
    #[serde(rename = "svd")]
    Svd,
    #[serde(rename = "svdknn")]
    SvdKnn,
    #[serde(rename = "fm")]
    Fm,
    #[serde(rename = "fm-ids-only")]
    FmIdsOnly,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "sgd")]
    Sgd,
    #[serde(rename = "rf")]
    Rf,
    #[serde(rename = "pmlr")]
    Pmlr,
    #[serde(rename = "hybrid")]
    Hybrid,
}

impl ModelFamily {
    pub const ALL: [ModelFamily; 12] = [
        Self::Ur,
        Self::Gm,
        Self::Mom,
        Self::Svd,
        Self::SvdKnn,
        Self::Fm,
        Self::FmIdsOnly,
        Self::Knn,
        Self::Sgd,
        Self::Rf,
        Self::Pmlr,
        Self::Hybrid,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Ur => "ur",
            Self::Gm => "gm",
            Self::Mom => "mom",
            Self::Svd => "svd",
            Self::SvdKnn => "svdknn",
            Self::Fm => "fm",
            Self::FmIdsOnly => "fm-ids-only",
            Self::Knn => "knn",
            Self::Sgd => "sgd",
            Self::Rf => "rf",
            Self::Pmlr => "pmlr",
            Self::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| {
                let valid: Vec<&str> = Self::ALL.iter().map(|m| m.name()).collect();
                Error::Unsupported(format!("unknown model `{s}`; valid models: {}", valid.join(", ")))
            })
    }
}

/// Versioned JSON envelope for fitted models. `f64` values round-trip exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDump<T> {
    pub format: String,
    pub version: u32,
    pub model: T,
}

pub const DUMP_FORMAT: &str = "nextgrade-model";
pub const DUMP_VERSION: u32 = 1;

pub fn dump_model<T: Serialize>(model: &T) -> Result<String> {
    Ok(serde_json::to_string(&ModelDump {
        format: DUMP_FORMAT.to_string(),
        version: DUMP_VERSION,
        model,
    })?)
}

pub fn load_model<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T> {
    let dump: ModelDump<T> = serde_json::from_str(text)?;
    if dump.format != DUMP_FORMAT || dump.version != DUMP_VERSION {
        return Err(Error::Unsupported(format!(
            "unsupported model dump {} v{}",
            dump.format, dump.version
        )));
    }
    Ok(dump.model)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn check_finite(value: f64, context: impl FnOnce() -> String) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite(context()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_names_round_trip() {
        for m in ModelFamily::ALL {
            assert_eq!(m.name().parse::<ModelFamily>().unwrap(), m);
        }
        let err = "lasso".parse::<ModelFamily>().unwrap_err().to_string();
        assert!(err.contains("fm-ids-only") && err.contains("lasso"));
    }
}
