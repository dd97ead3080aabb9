use serde::{Deserialize, Serialize};

use crate::Vector;

/// Pass/fail outcome of a sampled check together with its worst witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub pass: bool,
    pub worst_residual: f64,
    pub worst_point: Option<Vec<f64>>,
    pub threshold: f64,
    pub samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl CheckReport {
    /// Running max of `residual` over samples, passing iff the max is `<= threshold`.
    pub fn max_residual<'a>(
        name: &str,
        threshold: f64,
        items: impl IntoIterator<Item = (f64, &'a Vector)>,
    ) -> Self {
        let mut worst = 0.0f64;
        let mut worst_point = None;
        let mut samples = 0;
        for (residual, point) in items {
            samples += 1;
            // NaN residuals count as failures.
            let r = if residual.is_nan() { f64::INFINITY } else { residual };
            if worst_point.is_none() || r > worst {
                worst = r;
                worst_point = Some(point.iter().copied().collect());
            }
        }
        Self {
            name: name.to_string(),
            pass: samples > 0 && worst <= threshold,
            worst_residual: worst,
            worst_point,
            threshold,
            samples,
            note: None,
        }
    }

    /// Running min of `margin` over samples, passing iff the min is `> threshold`.
    pub fn min_margin<'a>(
        name: &str,
        threshold: f64,
        items: impl IntoIterator<Item = (f64, &'a Vector)>,
    ) -> Self {
        let mut worst = f64::INFINITY;
        let mut worst_point = None;
        let mut samples = 0;
        for (margin, point) in items {
            samples += 1;
            let m = if margin.is_nan() { f64::NEG_INFINITY } else { margin };
            if worst_point.is_none() || m < worst {
                worst = m;
                worst_point = Some(point.iter().copied().collect());
            }
        }
        Self {
            name: name.to_string(),
            pass: samples > 0 && worst > threshold,
            worst_residual: worst,
            worst_point,
            threshold,
            samples,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}
