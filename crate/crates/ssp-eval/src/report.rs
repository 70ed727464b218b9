//! Aggregated metric reports: one row of metrics per evaluated rollout step
//! plus a time-averaged summary, serializable as CSV.

use std::io::Write;
use std::path::Path;

use ssp_core::Result;

/// The seven error metrics at one rollout step (or their time average).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepMetrics {
    pub rel_l2: f64,
    pub e_max: f64,
    pub brms: f64,
    pub f_low: f64,
    pub f_mid: f64,
    pub f_high: f64,
    pub f_mse: f64,
}

impl StepMetrics {
    pub fn to_array(self) -> [f64; 7] {
        [self.rel_l2, self.e_max, self.brms, self.f_low, self.f_mid, self.f_high, self.f_mse]
    }

    pub fn from_array(v: [f64; 7]) -> Self {
        StepMetrics {
            rel_l2: v[0],
            e_max: v[1],
            brms: v[2],
            f_low: v[3],
            f_mid: v[4],
            f_high: v[5],
            f_mse: v[6],
        }
    }
}

/// Component-wise mean; all zeros when the slice is empty.
pub fn mean_metrics(steps: &[StepMetrics]) -> StepMetrics {
    if steps.is_empty() {
        return StepMetrics::default();
    }
    let mut acc = [0.0f64; 7];
    for s in steps {
        for (a, v) in acc.iter_mut().zip(s.to_array()) {
            *a += v;
        }
    }
    let inv = 1.0 / steps.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    StepMetrics::from_array(acc)
}

/// Metrics of one evaluation protocol: a per-step curve over the evaluated
/// step range, its time average, and the protocol descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// First evaluated rollout step, 1-based (step 1 is the first predicted
    /// frame after the conditioning frames).
    pub first_step: usize,
    /// Sample-averaged metrics, one entry per evaluated step.
    pub per_step: Vec<StepMetrics>,
    /// Mean of `per_step` (all zeros when nothing was evaluated).
    pub summary: StepMetrics,
    /// Total predicted frames the rollout was asked for.
    pub horizon: usize,
    pub n_samples: usize,
    /// First predicted step carrying a non-finite value, if the rollout
    /// diverged; evaluation stops just before it.
    pub diverged_at: Option<usize>,
}

pub const CSV_HEADER: &str = "step,rel_l2,e_max,brms,f_low,f_mid,f_high,f_mse";

impl MetricsReport {
    /// Last evaluated step (0 when nothing was evaluated).
    pub fn last_step(&self) -> usize {
        if self.per_step.is_empty() {
            0
        } else {
            self.first_step + self.per_step.len() - 1
        }
    }

    /// One row per evaluated step plus a `mean` summary row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        let row = |label: &str, m: &StepMetrics| {
            format!(
                "{label},{},{},{},{},{},{},{}\n",
                m.rel_l2, m.e_max, m.brms, m.f_low, m.f_mid, m.f_high, m.f_mse
            )
        };
        for (i, m) in self.per_step.iter().enumerate() {
            out.push_str(&row(&(self.first_step + i).to_string(), m));
        }
        out.push_str(&row("mean", &self.summary));
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut file = std::fs::File::create(path)?;
        file.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}
