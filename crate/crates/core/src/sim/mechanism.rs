use serde::{Deserialize, Serialize};

use crate::topics::TopicalityClass;
use crate::{Error, Result};

/// A function of topical alignment S ∈ [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum AlignmentCurve {
    Flat { value: f64 },
    Logistic { low: f64, high: f64, midpoint: f64, steepness: f64 },
    Linear { at_zero: f64, at_one: f64 },
    /// Piecewise constant over equal-width bins; S = 1 falls in the last bin.
    Binned { values: Vec<f64> },
}

impl AlignmentCurve {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            AlignmentCurve::Flat { value } => *value,
            AlignmentCurve::Logistic { low, high, midpoint, steepness } => {
                low + (high - low) / (1.0 + (-steepness * (s - midpoint)).exp())
            }
            AlignmentCurve::Linear { at_zero, at_one } => at_zero + (at_one - at_zero) * s,
            AlignmentCurve::Binned { values } => {
                let b = values.len();
                values[((s * b as f64) as usize).min(b - 1)]
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if let AlignmentCurve::Binned { values } = self {
            if values.is_empty() {
                return Err(Error::config("binned curve needs at least one value"));
            }
        }
        Ok(())
    }
}

/// Internal hazard q_i(κ, S); zero at κ = 0 by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum InternalHazard {
    /// `by_kappa[κ − 1] · shape(S)`; κ past the end uses the last entry.
    Separable { by_kappa: Vec<f64>, shape: AlignmentCurve },
    /// `rows[κ − 1][bin(S)]`; κ past the end uses the last row.
    Table { rows: Vec<Vec<f64>> },
}

impl InternalHazard {
    pub fn eval(&self, kappa: u32, s: f64) -> f64 {
        if kappa == 0 {
            return 0.0;
        }
        let k = kappa as usize - 1;
        match self {
            InternalHazard::Separable { by_kappa, shape } => {
                if by_kappa.is_empty() {
                    0.0
                } else {
                    by_kappa[k.min(by_kappa.len() - 1)] * shape.eval(s)
                }
            }
            InternalHazard::Table { rows } => {
                if rows.is_empty() {
                    return 0.0;
                }
                let row = &rows[k.min(rows.len() - 1)];
                row[((s * row.len() as f64) as usize).min(row.len() - 1)]
            }
        }
    }

    /// κ levels past which the hazard no longer changes.
    pub fn kappa_extent(&self) -> usize {
        match self {
            InternalHazard::Separable { by_kappa, .. } => by_kappa.len(),
            InternalHazard::Table { rows } => rows.len(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            InternalHazard::Separable { shape, .. } => shape.validate(),
            InternalHazard::Table { rows } => {
                let width = rows.first().map_or(1, Vec::len);
                if width == 0 || rows.iter().any(|r| r.len() != width) {
                    return Err(Error::config("hazard table rows must be non-empty and equally wide"));
                }
                Ok(())
            }
        }
    }
}

/// Planted adoption rule: a user entering exposure level κ with alignment S
/// adopts before the next exposure with probability `q_e(S) + q_i(κ, S)`,
/// both scaled by `topical_user_factor` for topical users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMechanism {
    pub name: String,
    pub external: AlignmentCurve,
    pub internal: InternalHazard,
    #[serde(default = "one")]
    pub topical_user_factor: f64,
}

fn one() -> f64 {
    1.0
}

/// Rising to a maximum at κ = 8, then decaying.
fn peaked(height: f64) -> Vec<f64> {
    (1..=32).map(|k| {
        let x = k as f64 / 8.0;
        height * x * (1.0 - x).exp()
    })
    .collect()
}

fn geometric(first: f64, ratio: f64) -> Vec<f64> {
    (0..32).map(|k| first * ratio.powi(k)).collect()
}

impl PlantedMechanism {
    pub const PRESETS: [&'static str; 6] = [
        "complex-topical",
        "simple-flat",
        "external-only",
        "logistic-topical",
        "flat",
        "external-topical",
    ];

    pub fn preset(name: &str) -> Option<PlantedMechanism> {
        let flat = |v: f64| AlignmentCurve::Flat { value: v };
        let logistic = AlignmentCurve::Logistic { low: 0.1, high: 1.0, midpoint: 0.5, steepness: 8.0 };
        let (external, internal) = match name {
            "complex-topical" => (
                flat(0.005),
                InternalHazard::Separable { by_kappa: peaked(0.08), shape: logistic },
            ),
            "simple-flat" => (
                flat(0.005),
                InternalHazard::Separable { by_kappa: geometric(0.06, 0.6), shape: flat(1.0) },
            ),
            "external-only" => (flat(0.01), InternalHazard::Separable { by_kappa: vec![0.0], shape: flat(1.0) }),
            "logistic-topical" => (
                flat(0.005),
                InternalHazard::Separable { by_kappa: vec![0.05], shape: logistic },
            ),
            "flat" => (flat(0.005), InternalHazard::Separable { by_kappa: vec![0.03], shape: flat(1.0) }),
            "external-topical" => (
                AlignmentCurve::Logistic { low: 0.001, high: 0.02, midpoint: 0.5, steepness: 8.0 },
                InternalHazard::Separable { by_kappa: vec![0.03], shape: flat(1.0) },
            ),
            _ => return None,
        };
        Some(PlantedMechanism {
            name: name.to_owned(),
            external,
            internal,
            topical_user_factor: 1.0,
        })
    }

    pub fn preset_or_err(name: &str) -> Result<PlantedMechanism> {
        Self::preset(name).ok_or_else(|| {
            Error::config(format!(
                "unknown mechanism `{name}`; presets: {}",
                Self::PRESETS.join(", ")
            ))
        })
    }

    fn factor(&self, class: TopicalityClass) -> f64 {
        if class == TopicalityClass::Topical {
            self.topical_user_factor
        } else {
            1.0
        }
    }

    pub fn external_hazard(&self, s: f64) -> f64 {
        self.external.eval(s)
    }

    pub fn internal_hazard(&self, kappa: u32, s: f64) -> f64 {
        self.internal.eval(kappa, s)
    }

    /// Probability of adopting at a freshly entered level.
    pub fn adoption_probability(&self, kappa: u32, s: f64, class: TopicalityClass) -> f64 {
        self.factor(class) * (self.external_hazard(s) + self.internal_hazard(kappa, s))
    }

    /// Every hazard and their scaled sum must lie in [0, 1] on the whole
    /// alignment grid and at every κ level.
    pub fn validate(&self) -> Result<()> {
        self.external.validate()?;
        self.internal.validate()?;
        let f = self.topical_user_factor;
        if !(f.is_finite() && f >= 0.0) {
            return Err(Error::config(format!("topical user factor {f} must be finite and ≥ 0")));
        }
        let scale = f.max(1.0);
        for raw in 0..=10_000u32 {
            let s = raw as f64 / 10_000.0;
            let e = self.external_hazard(s);
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::config(format!("external hazard {e} at S = {s} outside [0, 1]")));
            }
            for k in 1..=self.internal.kappa_extent().max(1) as u32 {
                let i = self.internal_hazard(k, s);
                if !(0.0..=1.0).contains(&i) {
                    return Err(Error::config(format!("internal hazard {i} at κ = {k}, S = {s} outside [0, 1]")));
                }
                if scale * (e + i) > 1.0 {
                    return Err(Error::config(format!(
                        "adoption probability {} at κ = {k}, S = {s} exceeds 1",
                        scale * (e + i)
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PlantedMechanism::PRESETS {
            PlantedMechanism::preset(name).unwrap().validate().unwrap();
        }
        let err = PlantedMechanism::preset_or_err("nope").unwrap_err().to_string();
        assert!(err.contains("complex-topical") && err.contains("external-only"));
    }

    #[test]
    fn complex_preset_peaks_at_eight() {
        let m = PlantedMechanism::preset("complex-topical").unwrap();
        let best = (1..=32).max_by(|&a, &b| m.internal_hazard(a, 0.5).total_cmp(&m.internal_hazard(b, 0.5))).unwrap();
        assert_eq!(best, 8);
    }

    #[test]
    fn internal_hazard_vanishes_without_exposure() {
        for name in PlantedMechanism::PRESETS {
            let m = PlantedMechanism::preset(name).unwrap();
            assert_eq!(m.internal_hazard(0, 0.7), 0.0);
        }
    }

    #[test]
    fn out_of_range_probabilities_rejected() {
        let mut m = PlantedMechanism::preset("flat").unwrap();
        m.external = AlignmentCurve::Flat { value: 1.2 };
        assert!(m.validate().is_err());
        let mut m = PlantedMechanism::preset("flat").unwrap();
        m.internal = InternalHazard::Separable { by_kappa: vec![0.999], shape: AlignmentCurve::Flat { value: 1.0 } };
        assert!(m.validate().is_err());
        let mut m = PlantedMechanism::preset("flat").unwrap();
        m.topical_user_factor = 50.0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn binned_curve_right_closed() {
        let c = AlignmentCurve::Binned { values: vec![0.1, 0.2] };
        assert_eq!(c.eval(0.49), 0.1);
        assert_eq!(c.eval(0.5), 0.2);
        assert_eq!(c.eval(1.0), 0.2);
    }

    #[test]
    fn serde_round_trip() {
        let m = PlantedMechanism::preset("complex-topical").unwrap();
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<PlantedMechanism>(&text).unwrap(), m);
    }
}
