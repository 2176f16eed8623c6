//! Threshold rules that turn per-slice forecasts into scaling actions.
//!
//! For a slice with capacity `C` and predicted peak `p` over the horizon:
//!
//! - `p > α·C` and `p·(1+m) > C`: scale up to `⌈p·(1+m)⌉`;
//! - `p < β·C` for `hysteresis` consecutive horizons: scale down to
//!   `max(⌈p·(1+m)⌉, min_capacity)` when that is below `C`;
//! - otherwise hold.
//!
//! Rounding up to whole traffic units is skipped when it would break the
//! action's direction; the unrounded target is used instead.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math;
use crate::models::ForecastResult;
use crate::slicing::SliceDef;
use crate::Instant;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("forecast for unknown slice `{0}`")]
    UnknownSlice(String),
    #[error("forecast for slice `{0}` contains non-finite values")]
    NonFinite(String),
    #[error("forecast for slice `{0}` is empty")]
    EmptyForecast(String),
    #[error("more than one forecast for slice `{0}`")]
    DuplicateForecast(String),
    #[error("invalid policy rules: {0}")]
    Rules(String),
    #[error("slice `{slice}` has unusable capacity {capacity}")]
    Capacity { slice: String, capacity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyRules {
    /// Upper utilisation threshold α.
    pub upper_util: f64,
    /// Lower utilisation threshold β.
    pub lower_util: f64,
    /// Headroom margin m applied to the peak.
    pub headroom: f64,
    /// Consecutive low horizons required before scaling down.
    pub hysteresis: u32,
    /// Floor for scale-down targets.
    pub min_capacity: f64,
}

impl Default for PolicyRules {
    fn default() -> Self {
        Self {
            upper_util: 0.8,
            lower_util: 0.3,
            headroom: 0.2,
            hysteresis: 2,
            min_capacity: 1.0,
        }
    }
}

impl PolicyRules {
    pub fn validate(&self) -> Result<(), PolicyError> {
        let (a, b) = (self.upper_util, self.lower_util);
        if !(0.0 < b && b < a && a <= 1.0) {
            return Err(PolicyError::Rules(format!(
                "need 0 < lower_util < upper_util <= 1, got {b} and {a}"
            )));
        }
        if !(self.headroom >= 0.0 && self.headroom.is_finite()) {
            return Err(PolicyError::Rules(format!(
                "headroom {} must be >= 0",
                self.headroom
            )));
        }
        if self.hysteresis == 0 {
            return Err(PolicyError::Rules("hysteresis must be at least 1".into()));
        }
        if !(self.min_capacity > 0.0 && self.min_capacity.is_finite()) {
            return Err(PolicyError::Rules(format!(
                "min_capacity {} must be positive",
                self.min_capacity
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActionKind {
    ScaleUp,
    ScaleDown,
    Hold,
}

impl ActionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActionKind::ScaleUp => "scale-up",
            ActionKind::ScaleDown => "scale-down",
            ActionKind::Hold => "hold",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyAction {
    pub slice: String,
    pub action: ActionKind,
    pub current_capacity: f64,
    pub target_capacity: f64,
    /// Predicted peak over the horizon.
    pub trigger: f64,
    pub effective_at: Instant,
    pub rationale: String,
}

/// Consecutive low-utilisation horizons per slice.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyHistory {
    pub low_streak: BTreeMap<String, u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyDecision {
    /// Sorted by slice id.
    pub actions: Vec<PolicyAction>,
    /// History to pass to the next call.
    pub history: PolicyHistory,
}

/// Source of policy decisions; the threshold rules are one implementation.
pub trait PolicyGenerator {
    fn generate(
        &self,
        forecasts: &[ForecastResult],
        slices: &[SliceDef],
        history: &PolicyHistory,
    ) -> Result<PolicyDecision, PolicyError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThresholdPolicy {
    pub rules: PolicyRules,
}

impl PolicyGenerator for ThresholdPolicy {
    fn generate(
        &self,
        forecasts: &[ForecastResult],
        slices: &[SliceDef],
        history: &PolicyHistory,
    ) -> Result<PolicyDecision, PolicyError> {
        generate_policies(forecasts, slices, &self.rules, history)
    }
}

/// `⌈x⌉`, ignoring relative noise below 1e-9 so `20·1.2` rounds to 24.
fn ceil_tolerant(x: f64) -> f64 {
    math::ceil(x - 1e-9 * x.abs())
}

/// Applies the threshold rules to every forecast.
pub fn generate_policies(
    forecasts: &[ForecastResult],
    slices: &[SliceDef],
    rules: &PolicyRules,
    history: &PolicyHistory,
) -> Result<PolicyDecision, PolicyError> {
    rules.validate()?;
    let by_id: BTreeMap<&str, &SliceDef> = slices.iter().map(|s| (s.id.as_str(), s)).collect();
    let mut seen = BTreeSet::new();
    let mut next = history.clone();
    let mut actions = Vec::with_capacity(forecasts.len());
    for f in forecasts {
        let slice = by_id
            .get(f.slice.as_str())
            .ok_or_else(|| PolicyError::UnknownSlice(f.slice.clone()))?;
        if !seen.insert(f.slice.as_str()) {
            return Err(PolicyError::DuplicateForecast(f.slice.clone()));
        }
        if f.predicted.is_empty() {
            return Err(PolicyError::EmptyForecast(f.slice.clone()));
        }
        if f.predicted.iter().any(|v| !v.is_finite()) {
            return Err(PolicyError::NonFinite(f.slice.clone()));
        }
        let cap = slice.capacity;
        if !(cap > 0.0 && cap.is_finite()) {
            return Err(PolicyError::Capacity {
                slice: f.slice.clone(),
                capacity: cap,
            });
        }
        let peak = f
            .predicted
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let wanted = peak * (1.0 + rules.headroom);
        let streak = history.low_streak.get(&f.slice).copied().unwrap_or(0);

        let (action, target, rationale, new_streak) =
            if peak > rules.upper_util * cap && wanted > cap {
                let rounded = ceil_tolerant(wanted);
                let target = if rounded > cap { rounded } else { wanted };
                (
                    ActionKind::ScaleUp,
                    target,
                    format!("peak {peak} exceeds {} of capacity {cap}", rules.upper_util),
                    0,
                )
            } else if peak < rules.lower_util * cap {
                let streak = streak + 1;
                let floor = wanted.max(rules.min_capacity);
                if streak >= rules.hysteresis && floor < cap {
                    let rounded = ceil_tolerant(wanted).max(rules.min_capacity);
                    let target = if rounded < cap { rounded } else { floor };
                    (
                        ActionKind::ScaleDown,
                        target,
                        format!(
                        "peak {peak} below {} of capacity {cap} for {streak} consecutive horizons",
                        rules.lower_util
                    ),
                        0,
                    )
                } else {
                    (
                        ActionKind::Hold,
                        cap,
                        format!(
                            "peak {peak} below {} of capacity {cap}; low horizon {streak} of {}",
                            rules.lower_util, rules.hysteresis
                        ),
                        streak,
                    )
                }
            } else {
                (
                    ActionKind::Hold,
                    cap,
                    format!("peak {peak} within thresholds for capacity {cap}"),
                    0,
                )
            };
        if new_streak == 0 {
            next.low_streak.remove(&f.slice);
        } else {
            next.low_streak.insert(f.slice.clone(), new_streak);
        }
        actions.push(PolicyAction {
            slice: f.slice.clone(),
            action,
            current_capacity: cap,
            target_capacity: target,
            trigger: peak,
            effective_at: f.issued_at,
            rationale,
        });
    }
    actions.sort_by(|a, b| a.slice.cmp(&b.slice));
    Ok(PolicyDecision {
        actions,
        history: next,
    })
}
