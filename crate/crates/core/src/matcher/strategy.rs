//! Topic scoring strategies, registered by name and chosen at runtime.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNWEIGHTED: &str = "unweighted";
pub const WEIGHTED: &str = "weighted";

/// Midpoint of the usual [3, 5] range.
pub const DEFAULT_W: f64 = 4.0;

fn default_w() -> f64 {
    DEFAULT_W
}

/// Where a threshold came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub threshold: f64,
    pub percentile: f64,
    pub source_tag: String,
    pub pair_count: usize,
    pub vector_count: usize,
    pub cap: Option<usize>,
    pub seed: u64,
    pub sampled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    /// Name of a registered [`ScoringStrategy`].
    pub mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default = "default_w")]
    pub w: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Calibration>,
}

impl ScoringConfig {
    pub fn unweighted() -> Self {
        ScoringConfig {
            mode: UNWEIGHTED.to_string(),
            threshold: None,
            w: DEFAULT_W,
            calibration: None,
        }
    }

    pub fn weighted(threshold: f64, w: f64) -> Self {
        ScoringConfig {
            mode: WEIGHTED.to_string(),
            threshold: Some(threshold),
            w,
            calibration: None,
        }
    }

    pub fn with_calibration(mut self, calibration: Calibration) -> Self {
        self.threshold = Some(calibration.threshold);
        self.calibration = Some(calibration);
        self
    }

    /// `"<mode>"`, or `"<mode>(t=..,w=..)"` when a threshold is set.
    pub fn tag(&self) -> String {
        match (self.mode.as_str(), self.threshold) {
            (WEIGHTED, Some(t)) => format!("{}(t={t},w={})", self.mode, self.w),
            _ => self.mode.clone(),
        }
    }
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self::unweighted()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    pub score: f64,
    pub hits: Vec<bool>,
}

/// Turns a query's per-exemplar cosines (exemplar-list order) into a topic score.
pub trait ScoringStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// Checks that `cfg` carries what this strategy needs.
    fn validate(&self, cfg: &ScoringConfig) -> Result<()>;

    /// `cosines` is non-empty; `cfg` has passed [`validate`](Self::validate).
    fn score(&self, cosines: &[f64], cfg: &ScoringConfig) -> ScoreOutcome;
}

/// Mean cosine over all exemplars.
#[derive(Debug, Default, Clone, Copy)]
pub struct Unweighted;

impl ScoringStrategy for Unweighted {
    fn name(&self) -> &'static str {
        UNWEIGHTED
    }

    fn validate(&self, _cfg: &ScoringConfig) -> Result<()> {
        Ok(())
    }

    fn score(&self, cosines: &[f64], _cfg: &ScoringConfig) -> ScoreOutcome {
        let mut sum = 0.0f64;
        for &c in cosines {
            sum += c;
        }
        ScoreOutcome {
            score: sum / cosines.len() as f64,
            hits: vec![false; cosines.len()],
        }
    }
}

/// Mean of per-exemplar terms where a cosine at or above the threshold
/// contributes `w * N` instead of itself.
#[derive(Debug, Default, Clone, Copy)]
pub struct Weighted;

impl ScoringStrategy for Weighted {
    fn name(&self) -> &'static str {
        WEIGHTED
    }

    fn validate(&self, cfg: &ScoringConfig) -> Result<()> {
        let t = cfg
            .threshold
            .ok_or_else(|| Error::InvalidConfig("weighted mode needs a threshold".into()))?;
        if !(-1.0..=1.0).contains(&t) {
            return Err(Error::InvalidConfig(format!(
                "threshold {t} outside [-1, 1]"
            )));
        }
        if !(cfg.w.is_finite() && cfg.w > 0.0) {
            return Err(Error::InvalidConfig(format!("w must be positive, got {}", cfg.w)));
        }
        Ok(())
    }

    fn score(&self, cosines: &[f64], cfg: &ScoringConfig) -> ScoreOutcome {
        let threshold = cfg.threshold.expect("validated");
        let n = cosines.len() as f64;
        let boosted = cfg.w * n;
        let mut sum = 0.0f64;
        let mut hits = Vec::with_capacity(cosines.len());
        for &c in cosines {
            // same accumulation as Unweighted when nothing hits
            if c < threshold {
                sum += c;
                hits.push(false);
            } else {
                sum += boosted;
                hits.push(true);
            }
        }
        ScoreOutcome {
            score: sum / n,
            hits,
        }
    }
}

/// Name → strategy table.
#[derive(Clone)]
pub struct StrategyRegistry {
    strategies: BTreeMap<&'static str, Arc<dyn ScoringStrategy>>,
}

impl StrategyRegistry {
    pub fn empty() -> Self {
        StrategyRegistry {
            strategies: BTreeMap::new(),
        }
    }

    /// Registry holding `unweighted` and `weighted`.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(Unweighted);
        r.register(Weighted);
        r
    }

    /// Adds or replaces a strategy under its own name.
    pub fn register<S: ScoringStrategy + 'static>(&mut self, strategy: S) {
        self.strategies.insert(strategy.name(), Arc::new(strategy));
    }

    pub fn get(&self, name: &str) -> Result<&dyn ScoringStrategy> {
        self.strategies
            .get(name)
            .map(|s| s.as_ref())
            .ok_or_else(|| Error::UnknownMode(name.to_string()))
    }

    /// Looks up `cfg.mode` and validates `cfg` against it.
    pub fn resolve(&self, cfg: &ScoringConfig) -> Result<&dyn ScoringStrategy> {
        let s = self.get(&cfg.mode)?;
        s.validate(cfg)?;
        Ok(s)
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.strategies.keys().copied()
    }
}

impl Default for StrategyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl fmt::Debug for StrategyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.strategies.keys()).finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_hand_example() {
        let cfg = ScoringConfig::weighted(0.8, 4.0);
        let out = Weighted.score(&[0.5, 0.9, 0.7], &cfg);
        // p = {0.5, 12, 0.7}
        assert!((out.score - 13.2 / 3.0).abs() < 1e-12);
        assert!((out.score - 4.4).abs() < 1e-12);
        assert_eq!(out.hits, vec![false, true, false]);
    }

    #[test]
    fn weighted_all_hits_is_w_times_n() {
        let cfg = ScoringConfig::weighted(0.5, 3.0);
        let out = Weighted.score(&[0.5, 0.6, 0.99, 1.0], &cfg);
        assert_eq!(out.score, 12.0);
        assert!(out.hits.iter().all(|&h| h));
    }

    #[test]
    fn threshold_boundary_counts_as_hit() {
        let cfg = ScoringConfig::weighted(0.8, 4.0);
        assert_eq!(Weighted.score(&[0.8], &cfg).hits, vec![true]);
    }

    #[test]
    fn weighted_without_hits_matches_unweighted_bitwise() {
        let cos = [0.1, -0.3, 0.79999, 0.2];
        let w = Weighted.score(&cos, &ScoringConfig::weighted(0.8, 5.0));
        let u = Unweighted.score(&cos, &ScoringConfig::unweighted());
        assert_eq!(w.score.to_bits(), u.score.to_bits());
    }

    #[test]
    fn registry_lookup_and_validation() {
        let r = StrategyRegistry::builtin();
        assert_eq!(r.names().collect::<Vec<_>>(), ["unweighted", "weighted"]);
        assert!(matches!(r.get("cosine-max"), Err(Error::UnknownMode(_))));
        let mut cfg = ScoringConfig::unweighted();
        cfg.mode = WEIGHTED.into();
        assert!(matches!(r.resolve(&cfg), Err(Error::InvalidConfig(_))));
        cfg.threshold = Some(0.7);
        cfg.w = 0.0;
        assert!(matches!(r.resolve(&cfg), Err(Error::InvalidConfig(_))));
        cfg.w = 4.0;
        assert_eq!(r.resolve(&cfg).unwrap().name(), "weighted");
        cfg.threshold = Some(1.5);
        assert!(r.resolve(&cfg).is_err());
    }

    #[test]
    fn custom_strategy_can_be_registered() {
        struct MaxCos;
        impl ScoringStrategy for MaxCos {
            fn name(&self) -> &'static str {
                "max"
            }
            fn validate(&self, _: &ScoringConfig) -> Result<()> {
                Ok(())
            }
            fn score(&self, c: &[f64], _: &ScoringConfig) -> ScoreOutcome {
                ScoreOutcome {
                    score: c.iter().copied().fold(f64::MIN, f64::max),
                    hits: vec![false; c.len()],
                }
            }
        }
        let mut r = StrategyRegistry::builtin();
        r.register(MaxCos);
        let cfg = ScoringConfig {
            mode: "max".into(),
            ..ScoringConfig::unweighted()
        };
        assert_eq!(r.resolve(&cfg).unwrap().score(&[0.1, 0.4], &cfg).score, 0.4);
    }

    #[test]
    fn config_serde_defaults_w() {
        let cfg: ScoringConfig = serde_json::from_str(r#"{"mode":"weighted","threshold":0.7}"#).unwrap();
        assert_eq!(cfg.w, DEFAULT_W);
        assert_eq!(cfg.tag(), "weighted(t=0.7,w=4)");
        assert_eq!(ScoringConfig::unweighted().tag(), "unweighted");
    }
}
