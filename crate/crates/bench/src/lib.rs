//! Shared fixtures for the criterion benchmarks in `benches/`.

use myoprop::{
    generate_session, generate_trials, Frame, GestureLabel, LabeledDataset, SessionScript, SynthConfig, Trial,
    TrialPlan, STUDY_GESTURES,
};

pub fn study_config() -> SynthConfig {
    SynthConfig::default().restricted_to(&STUDY_GESTURES)
}

/// Four gestures, four repetitions of 2 s holds at 50 Hz (3200 frames).
pub fn study_session() -> LabeledDataset {
    generate_session(&SessionScript::study_default(), &study_config()).expect("default session is valid")
}

/// All six gestures plus rest, scaled by `repetitions`.
pub fn pilot_session(repetitions: u32) -> LabeledDataset {
    let script = SessionScript::alternating(&GestureLabel::ACTIVE, repetitions, 2.0);
    generate_session(&script, &SynthConfig::default()).expect("pilot session is valid")
}

pub fn study_trials() -> Vec<Trial> {
    let plan = TrialPlan { repeats: 1, ..TrialPlan::default() };
    generate_trials(&plan, &SynthConfig { seed: 1, ..study_config() }).expect("default trials are valid")
}

pub fn replay_frames(n: usize) -> Vec<Frame> {
    study_trials().into_iter().flat_map(|t| t.stream).take(n).collect()
}
