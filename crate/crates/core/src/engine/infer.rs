use serde::{Deserialize, Serialize};

use super::{par_map, Task};
use crate::backends::{GenerationRequest, Generator};
use crate::error::Result;
use crate::model::DecodeMode;
use crate::rng::{derive, label};
use crate::seq::{format_corrector_input, TokenSeq};
use crate::types::TaskInstance;

#[derive(Clone, Debug, PartialEq)]
pub struct InferenceSettings {
    /// Corrections after the draft (T).
    pub max_corrections: usize,
    /// Stop as soon as a step reaches this value.
    pub target_value: Option<f64>,
    pub generator_mode: DecodeMode,
    pub corrector_mode: DecodeMode,
    pub max_len: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FixedT,
    TargetValueReached,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub output: TokenSeq,
    pub value: f64,
    pub feedback: Option<String>,
}

/// `steps[0]` is the generator draft; later steps are corrections.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub input_id: String,
    pub steps: Vec<Step>,
    pub stop_reason: StopReason,
}

impl Trajectory {
    pub fn final_value(&self) -> f64 {
        self.steps.last().map_or(0.0, |s| s.value)
    }
}

/// The generator's draft for `inst`, decoded on a stream fixed by the seed
/// and input id so every evaluation mode starts from the same `y_0`.
pub fn draft(settings: &InferenceSettings, inst: &TaskInstance, generator: &dyn Generator) -> Result<TokenSeq> {
    let req = GenerationRequest::new(
        inst.prompt.clone(),
        1,
        settings.generator_mode,
        settings.max_len,
        derive(settings.seed, &[label("draft"), label(&inst.input_id)]),
    );
    Ok(generator.generate(&req)?.sequences.into_iter().next().unwrap_or_default())
}

/// Corrects `y0` up to `max_corrections` times.
pub fn correct_from(
    settings: &InferenceSettings,
    task: &Task<'_>,
    inst: &TaskInstance,
    y0: TokenSeq,
    corrector: &dyn Generator,
) -> Result<Trajectory> {
    let step = |output: TokenSeq| -> Result<Step> {
        let c = task.score(inst, output, crate::types::Origin::CorrectorExploration, 0)?;
        Ok(Step {
            output: c.output,
            value: c.value,
            feedback: c.feedback,
        })
    };
    let reached = |s: &Step| settings.target_value.is_some_and(|t| s.value >= t);
    let mut steps = vec![step(y0)?];
    for t in 0..settings.max_corrections {
        let last = steps.last().expect("non-empty");
        if reached(last) {
            break;
        }
        let ctx = format_corrector_input(&inst.prompt, &last.output, last.feedback.as_deref());
        let req = GenerationRequest::new(
            ctx,
            1,
            settings.corrector_mode,
            settings.max_len,
            derive(settings.seed, &[label("infer"), label(&inst.input_id), t as u64]),
        );
        let y = corrector.generate(&req)?.sequences.into_iter().next().unwrap_or_default();
        steps.push(step(y)?);
    }
    let stop_reason = if reached(steps.last().expect("non-empty")) {
        StopReason::TargetValueReached
    } else {
        StopReason::FixedT
    };
    Ok(Trajectory {
        input_id: inst.input_id.clone(),
        steps,
        stop_reason,
    })
}

/// Draft with the generator, then correct with the corrector.
pub fn infer_trajectory(
    settings: &InferenceSettings,
    task: &Task<'_>,
    inst: &TaskInstance,
    generator: &dyn Generator,
    corrector: &dyn Generator,
) -> Result<Trajectory> {
    let y0 = draft(settings, inst, generator)?;
    correct_from(settings, task, inst, y0, corrector)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeReport {
    pub mean_value: f64,
    /// Fraction of inputs whose final value is 1.
    pub correct_frac: f64,
    /// Mean value after `t` corrections, `t = 0..=T`; stopped trajectories
    /// carry their last value forward.
    pub curve: Vec<f64>,
}

impl ModeReport {
    fn from_trajectories(trajs: &[Trajectory], horizon: usize) -> Self {
        let n = trajs.len().max(1) as f64;
        let at = |tr: &Trajectory, t: usize| tr.steps[t.min(tr.steps.len() - 1)].value;
        let curve = (0..=horizon)
            .map(|t| trajs.iter().map(|tr| at(tr, t)).sum::<f64>() / n)
            .collect();
        ModeReport {
            mean_value: trajs.iter().map(Trajectory::final_value).sum::<f64>() / n,
            correct_frac: trajs.iter().filter(|t| t.final_value() >= 1.0).count() as f64 / n,
            curve,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Generator drafts alone.
    pub baseline: ModeReport,
    /// Exactly T corrections on every input.
    pub always: ModeReport,
    /// Corrections only while below the target value.
    pub oracle: ModeReport,
}

impl EvalReport {
    /// `t,always,oracle` rows.
    pub fn curve_csv(&self) -> String {
        let mut s = String::from("t,always,oracle\n");
        for (t, (a, o)) in self.always.curve.iter().zip(&self.oracle.curve).enumerate() {
            s.push_str(&format!("{t},{a},{o}\n"));
        }
        s
    }
}

/// Both correction modes over a held-out task, sharing generator drafts.
/// The oracle mode stops at `target_value`, defaulting to 1.
pub fn evaluate(
    settings: &InferenceSettings,
    task: &Task<'_>,
    generator: &dyn Generator,
    corrector: &dyn Generator,
) -> Result<EvalReport> {
    let always_cfg = InferenceSettings {
        target_value: None,
        ..settings.clone()
    };
    let oracle_cfg = InferenceSettings {
        target_value: Some(settings.target_value.unwrap_or(1.0)),
        ..settings.clone()
    };
    let runs = par_map(task.instances, settings.workers, |_, inst| -> Result<_> {
        let y0 = draft(settings, inst, generator)?;
        let always = correct_from(&always_cfg, task, inst, y0.clone(), corrector)?;
        let oracle = correct_from(&oracle_cfg, task, inst, y0, corrector)?;
        Ok((always, oracle))
    });
    let mut always = Vec::with_capacity(runs.len());
    let mut oracle = Vec::with_capacity(runs.len());
    for r in runs {
        let (a, o) = r?;
        always.push(a);
        oracle.push(o);
    }
    let baseline: Vec<Trajectory> = always
        .iter()
        .map(|t| Trajectory {
            input_id: t.input_id.clone(),
            steps: t.steps[..1].to_vec(),
            stop_reason: StopReason::FixedT,
        })
        .collect();
    let horizon = settings.max_corrections;
    Ok(EvalReport {
        baseline: ModeReport::from_trajectories(&baseline, 0),
        always: ModeReport::from_trajectories(&always, horizon),
        oracle: ModeReport::from_trajectories(&oracle, horizon),
    })
}
