//! One detection run from stage 0 to the stopping time.
//!
//! Randomness is counter-based. Trial `i` under seed `s` reads the ChaCha8
//! stream `i` keyed by `s`; slot 0 of that stream draws the change time and
//! any per-trial context, and stage `k` reads slot `k` (each slot is `2^20`
//! words long). Adding trials, or stages to one trial, never shifts the draws
//! of another.

use alloc::string::String;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::policies::{Action, Policy};

/// Default runaway guard.
pub const DEFAULT_MAX_HORIZON: u64 = 1_000_000;

const SLOT_WORDS_LOG2: u32 = 20;

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub tau: u64,
    /// Change time; [`crate::model::NEVER`] when the change never happens.
    pub gamma: u64,
    pub delay: u64,
    pub false_alarm: bool,
    /// Expected energy spent per sensor.
    pub energy: Vec<f64>,
}

impl TrialRecord {
    pub fn total_energy(&self) -> f64 {
        self.energy.iter().sum()
    }
}

/// One row of a per-stage trace.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub stage: u64,
    /// Mean `alpha_l^2` of the control used for this stage's sample.
    pub alpha_sq: f64,
    /// Centering of the first sensor.
    pub c: f64,
    /// Belief after the sample.
    pub mu: f64,
    pub policy: String,
    pub gamma: u64,
}

/// Random source of one trial, positioned per slot.
pub struct TrialStream {
    rng: ChaCha8Rng,
}

impl TrialStream {
    pub fn new(seed: u64, trial_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial_index);
        Self { rng }
    }

    /// Generator positioned at the start of `slot`.
    pub fn slot(&mut self, slot: u64) -> &mut ChaCha8Rng {
        self.rng.set_word_pos((slot as u128) << SLOT_WORDS_LOG2);
        &mut self.rng
    }
}

/// Runs `policy` until it stops. With `trace`, one row per sample is appended.
pub fn run_trial(
    policy: &dyn Policy,
    seed: u64,
    trial_index: u64,
    max_horizon: u64,
    mut trace: Option<&mut Vec<TraceRow>>,
) -> Result<TrialRecord> {
    let model = *policy.model();
    let mut stream = TrialStream::new(seed, trial_index);
    let rng = stream.slot(0);
    let gamma = model.sample_change_time(rng);
    let mut state = policy.begin(rng);

    loop {
        let decision = policy.decide(&state)?;
        let control = match decision.action {
            Action::Stop => break,
            Action::Continue(control) => control,
        };
        if state.k >= max_horizon {
            return Err(Error::RunawayTrial { max_horizon });
        }
        let stage = state.k + 1;
        policy.observe(&mut state, &control, model.theta(stage, gamma), stream.slot(stage))?;
        if let Some(rows) = trace.as_deref_mut() {
            rows.push(TraceRow {
                stage: state.k,
                alpha_sq: control.mean_alpha_sq(),
                c: control.c.first().copied().unwrap_or(0.0),
                mu: state.mu.value(),
                policy: policy.name().into(),
                gamma,
            });
        }
    }
    state.stopped = true;

    let tau = state.k;
    Ok(TrialRecord {
        tau,
        gamma,
        delay: tau.saturating_sub(gamma),
        false_alarm: tau < gamma,
        energy: state.energy_spent,
    })
}
