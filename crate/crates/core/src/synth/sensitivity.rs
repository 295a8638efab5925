use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{perturb_scene, PerturbationSpec};
use crate::error::{Error, Result};
use crate::ingest::SectionScene;
use crate::scalar::Scalar;
use crate::scoring::{score_section, BanffGrade, Indicator, ScoringConfig};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t`: `splitmix64(seed + t * 0x9E3779B97F4A7C15)` with
/// wrapping 64-bit arithmetic, where `splitmix64(x)` is the standard SplitMix64
/// output function applied to `x + 0x9E3779B97F4A7C15`.
pub fn trial_seed(seed: u64, trial: u64) -> u64 {
    splitmix64(seed.wrapping_add(trial.wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct GradeHistogram {
    pub grades: [u64; 4],
    pub unscorable: u64,
}

impl GradeHistogram {
    pub fn add(&mut self, g: Option<BanffGrade>) {
        match g {
            Some(g) => self.grades[g.index()] += 1,
            None => self.unscorable += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.grades.iter().sum::<u64>() + self.unscorable
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndicatorSensitivity {
    /// Grade of the unperturbed scene (`None` = unscorable).
    pub baseline: Option<BanffGrade>,
    pub histogram: GradeHistogram,
    /// Fraction of trials whose grade (or scorability) differs from baseline.
    pub flip_rate: f64,
    /// Mean |perturbed - baseline| over trials where both are scorable.
    pub mean_abs_shift: f64,
    /// Trials contributing to `mean_abs_shift`.
    pub shift_trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialGrades {
    pub trial: u64,
    pub seed: u64,
    pub g: Option<BanffGrade>,
    pub ptc: Option<BanffGrade>,
    pub v: Option<BanffGrade>,
}

impl TrialGrades {
    fn get(&self, i: Indicator) -> Option<BanffGrade> {
        match i {
            Indicator::G => self.g,
            Indicator::Ptc => self.ptc,
            Indicator::V => self.v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    pub section_id: String,
    pub trials: u64,
    pub g: IndicatorSensitivity,
    pub ptc: IndicatorSensitivity,
    pub v: IndicatorSensitivity,
    #[serde(skip)]
    pub per_trial: Vec<TrialGrades>,
}

impl SensitivityReport {
    pub fn indicator(&self, i: Indicator) -> &IndicatorSensitivity {
        match i {
            Indicator::G => &self.g,
            Indicator::Ptc => &self.ptc,
            Indicator::V => &self.v,
        }
    }

    /// One row per trial: `trial,seed,g,ptc,v`; unscorable grades are written as `U`.
    pub fn to_csv(&self) -> String {
        let cell = |g: Option<BanffGrade>| g.map_or_else(|| "U".to_string(), |g| g.to_string());
        let mut out = String::from("trial,seed,g,ptc,v\n");
        for t in &self.per_trial {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                t.trial,
                t.seed,
                cell(t.g),
                cell(t.ptc),
                cell(t.v)
            ));
        }
        out
    }
}

fn run_trial<T: Scalar>(
    scene: &SectionScene<T>,
    pspec: &PerturbationSpec,
    config: &ScoringConfig,
    trial: u64,
) -> Result<TrialGrades> {
    let seed = trial_seed(pspec.seed, trial);
    let spec = PerturbationSpec {
        seed,
        ..pspec.clone()
    };
    let perturbed = perturb_scene(scene, &spec)?;
    let [g, ptc, v] = score_section(&perturbed, config)?.grades();
    Ok(TrialGrades { trial, seed, g, ptc, v })
}

/// Perturbs and rescores `scene` `trials` times and summarizes grade movement.
///
/// Trial `t` uses [`trial_seed`]`(pspec.seed, t)`, so the result is the same
/// for sequential and parallel execution.
pub fn sensitivity_run<T: Scalar>(
    scene: &SectionScene<T>,
    pspec: &PerturbationSpec,
    trials: u64,
    config: &ScoringConfig,
    execution: Execution,
) -> Result<SensitivityReport> {
    if trials == 0 {
        return Err(Error::InvalidSpec("trials must be at least 1".into()));
    }
    pspec.validate()?;
    let baseline = score_section(scene, config)?.grades();

    let per_trial: Vec<TrialGrades> = match execution {
        Execution::Sequential => (0..trials)
            .map(|t| run_trial(scene, pspec, config, t))
            .collect::<Result<_>>()?,
        Execution::Parallel => (0..trials)
            .into_par_iter()
            .map(|t| run_trial(scene, pspec, config, t))
            .collect::<Result<_>>()?,
    };

    let summarize = |i: Indicator, base: Option<BanffGrade>| {
        let mut histogram = GradeHistogram::default();
        let mut flips = 0u64;
        let mut shift_sum = 0u64;
        let mut shift_trials = 0u64;
        for t in &per_trial {
            let g = t.get(i);
            histogram.add(g);
            if g != base {
                flips += 1;
            }
            if let (Some(a), Some(b)) = (g, base) {
                shift_sum += u64::from(a.value().abs_diff(b.value()));
                shift_trials += 1;
            }
        }
        IndicatorSensitivity {
            baseline: base,
            histogram,
            flip_rate: flips as f64 / trials as f64,
            mean_abs_shift: if shift_trials > 0 {
                shift_sum as f64 / shift_trials as f64
            } else {
                0.0
            },
            shift_trials,
        }
    };

    Ok(SensitivityReport {
        section_id: scene.section_id.clone(),
        trials,
        g: summarize(Indicator::G, baseline[0]),
        ptc: summarize(Indicator::Ptc, baseline[1]),
        v: summarize(Indicator::V, baseline[2]),
        per_trial,
    })
}
