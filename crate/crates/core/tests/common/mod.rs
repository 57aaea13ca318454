#![allow(dead_code)]

use sta_core::pulse::{
    synthesize_pulses, EvenCoefficients, PulseCoefficients, PulsePair, TaskKind,
};
use sta_core::quantum::{TargetState, ThreeLevelState};

pub const TF: f64 = 4.0;

pub fn target() -> TargetState {
    TargetState::equal_superposition()
}

/// Published `(a₂, a₆, a₈)` for each task.
pub fn published(task: TaskKind) -> EvenCoefficients {
    match task {
        TaskKind::CreateAsqs => EvenCoefficients::new(-1.10, 0.06, 0.02),
        TaskKind::TwoLevelTransfer => EvenCoefficients::new(0.50, 0.14, 0.0),
        TaskKind::ReturnToOne => EvenCoefficients::new(1.06, 0.16, 0.0),
    }
}

pub fn coefficients(task: TaskKind) -> PulseCoefficients {
    published(task).solve(task, TF, target()).unwrap()
}

pub fn pulses(task: TaskKind) -> PulsePair {
    synthesize_pulses(&coefficients(task))
}

pub fn endpoints(task: TaskKind) -> (ThreeLevelState, ThreeLevelState) {
    (task.initial_state(&target()), task.final_state(&target()))
}
