use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default candidate count for `hybrid` without an explicit `m`.
pub const DEFAULT_HYBRID_M: usize = 8;

/// Replacement embedding `T′(e)` that the first-order score moves toward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Uninformative {
    /// Componentwise lower median of the coordinates in the current subset,
    /// or of the whole set when `frozen`.
    CoordinateMedian { frozen: bool },
    /// Componentwise minimum of the current pointwise feature rows; scores
    /// are taken in feature space.
    FeatureMin,
    /// A fixed coordinate vector.
    Custom(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreStrategy {
    /// Exact marginal gain for every candidate.
    Exact,
    /// First-order gain estimate from one forward and one backward pass.
    Sfo(Uninformative),
    Saliency,
    Random,
    /// Top-`m` candidates by `inner`, then exact gains on those only.
    Hybrid { m: usize, inner: Box<ScoreStrategy> },
}

impl ScoreStrategy {
    pub fn sfo_median() -> Self {
        ScoreStrategy::Sfo(Uninformative::CoordinateMedian { frozen: false })
    }

    pub fn sfo_feature_min() -> Self {
        ScoreStrategy::Sfo(Uninformative::FeatureMin)
    }

    pub fn hybrid(m: usize, inner: ScoreStrategy) -> Self {
        ScoreStrategy::Hybrid {
            m,
            inner: Box::new(inner),
        }
    }

    /// Whether scoring needs a forward and backward pass.
    pub fn uses_gradient(&self) -> bool {
        match self {
            ScoreStrategy::Sfo(_) | ScoreStrategy::Saliency => true,
            ScoreStrategy::Exact | ScoreStrategy::Random => false,
            ScoreStrategy::Hybrid { inner, .. } => inner.uses_gradient(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if let ScoreStrategy::Hybrid { m, inner } = self {
            if *m == 0 || *m > n {
                return Err(Error::Parameter(format!(
                    "hybrid needs 1 <= m <= n = {n}, got m = {m}"
                )));
            }
            if matches!(**inner, ScoreStrategy::Exact | ScoreStrategy::Hybrid { .. }) {
                return Err(Error::Parameter(format!(
                    "hybrid inner score must be a surrogate, got {inner}"
                )));
            }
        }
        if let ScoreStrategy::Sfo(Uninformative::Custom(v)) = self {
            if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Parameter("custom embedding must be finite and non-empty".into()));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ScoreStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScoreStrategy::Exact => f.write_str("exact"),
            ScoreStrategy::Sfo(Uninformative::CoordinateMedian { frozen: false }) => f.write_str("sfo-median"),
            ScoreStrategy::Sfo(Uninformative::CoordinateMedian { frozen: true }) => {
                f.write_str("sfo-median-frozen")
            }
            ScoreStrategy::Sfo(Uninformative::FeatureMin) => f.write_str("sfo-feature-min"),
            ScoreStrategy::Sfo(Uninformative::Custom(v)) => {
                let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
                write!(f, "sfo-custom[{}]", parts.join(","))
            }
            ScoreStrategy::Saliency => f.write_str("saliency"),
            ScoreStrategy::Random => f.write_str("random"),
            ScoreStrategy::Hybrid { m, inner } => write!(f, "hybrid-{inner}:{m}"),
        }
    }
}

/// Parses the names printed by `Display`, plus `hybrid` and `hybrid:<m>`,
/// which use an `sfo-median` inner score.
impl FromStr for ScoreStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let simple = match s {
            "exact" => Some(ScoreStrategy::Exact),
            "sfo-median" | "sfo" => Some(ScoreStrategy::sfo_median()),
            "sfo-median-frozen" => Some(ScoreStrategy::Sfo(Uninformative::CoordinateMedian { frozen: true })),
            "sfo-feature-min" => Some(ScoreStrategy::sfo_feature_min()),
            "saliency" => Some(ScoreStrategy::Saliency),
            "random" => Some(ScoreStrategy::Random),
            "hybrid" => Some(ScoreStrategy::hybrid(DEFAULT_HYBRID_M, ScoreStrategy::sfo_median())),
            _ => None,
        };
        if let Some(st) = simple {
            return Ok(st);
        }
        if let Some(body) = s.strip_prefix("sfo-custom[").and_then(|b| b.strip_suffix(']')) {
            let v = body
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Parameter(format!("bad custom embedding '{s}': {e}")))?;
            let st = ScoreStrategy::Sfo(Uninformative::Custom(v));
            st.validate(usize::MAX)?;
            return Ok(st);
        }
        if let Some(rest) = s.strip_prefix("hybrid") {
            let (inner, m) = match rest.rsplit_once(':') {
                Some((inner, m)) => (
                    inner,
                    m.parse::<usize>()
                        .map_err(|_| Error::Parameter(format!("bad candidate count in '{s}'")))?,
                ),
                None => (rest, DEFAULT_HYBRID_M),
            };
            let inner = match inner {
                "" => ScoreStrategy::sfo_median(),
                i => i
                    .strip_prefix('-')
                    .ok_or_else(|| Error::Parameter(format!("unknown strategy '{s}'")))?
                    .parse()?,
            };
            let st = ScoreStrategy::hybrid(m, inner);
            st.validate(usize::MAX)?;
            return Ok(st);
        }
        Err(Error::Parameter(format!(
            "unknown strategy '{s}' (expected exact, sfo-median, sfo-median-frozen, \
             sfo-feature-min, saliency, random or hybrid[-<inner>][:<m>])"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_roundtrip() {
        for name in [
            "exact",
            "sfo-median",
            "sfo-median-frozen",
            "sfo-feature-min",
            "saliency",
            "random",
            "hybrid-sfo-median:8",
            "hybrid-random:32",
            "hybrid-sfo-feature-min:2",
            "sfo-custom[0,0.5,-1]",
        ] {
            let s: ScoreStrategy = name.parse().unwrap();
            assert_eq!(s.to_string(), name);
        }
    }

    #[test]
    fn hybrid_shorthands() {
        assert_eq!(
            "hybrid".parse::<ScoreStrategy>().unwrap(),
            ScoreStrategy::hybrid(8, ScoreStrategy::sfo_median())
        );
        assert_eq!(
            "hybrid:3".parse::<ScoreStrategy>().unwrap(),
            ScoreStrategy::hybrid(3, ScoreStrategy::sfo_median())
        );
        assert_eq!(
            "hybrid-saliency".parse::<ScoreStrategy>().unwrap(),
            ScoreStrategy::hybrid(8, ScoreStrategy::Saliency)
        );
    }

    #[test]
    fn invalid_strategies() {
        for bad in ["", "greedy", "hybrid:0", "hybrid-exact:4", "hybrid:x", "hybrid-hybrid:2", "sfo-custom[a]"] {
            assert!(bad.parse::<ScoreStrategy>().is_err(), "{bad}");
        }
        assert!(ScoreStrategy::hybrid(5, ScoreStrategy::Random).validate(4).is_err());
        assert!(ScoreStrategy::hybrid(4, ScoreStrategy::Random).validate(4).is_ok());
    }
}
