use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterfaceState {
    /// Calibration sweep; `complete` once every joint has found its zero.
    Sweep { complete: bool },
    /// Tracking the initial posture.
    Hold,
    /// Executing the trajectory plan.
    Run,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Event {
    SweepDone,
    UserGo,
    /// Same edge as `UserGo`, issued programmatically.
    AutoGo,
}

impl InterfaceState {
    pub const ALL: [InterfaceState; 4] =
        [InterfaceState::Sweep { complete: false }, InterfaceState::Sweep { complete: true }, InterfaceState::Hold, InterfaceState::Run];

    pub fn name(&self) -> &'static str {
        match self {
            InterfaceState::Sweep { .. } => "Sweep",
            InterfaceState::Hold => "Hold",
            InterfaceState::Run => "Run",
        }
    }
}

impl Event {
    pub const ALL: [Event; 3] = [Event::SweepDone, Event::UserGo, Event::AutoGo];
}

impl fmt::Display for InterfaceState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InterfaceState::Sweep { complete: false } => f.write_str("Sweep (calibrating)"),
            InterfaceState::Sweep { complete: true } => f.write_str("Sweep (complete)"),
            s => f.write_str(s.name()),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("illegal transition: {event:?} in state {state}")]
pub struct TransitionError {
    pub state: InterfaceState,
    pub event: Event,
}

pub fn state_machine_step(state: InterfaceState, event: Event) -> Result<InterfaceState, TransitionError> {
    use Event::*;
    use InterfaceState::*;
    match (state, event) {
        (Sweep { complete: false }, SweepDone) => Ok(Sweep { complete: true }),
        (Sweep { complete: true }, UserGo | AutoGo) => Ok(Hold),
        (Hold, UserGo | AutoGo) => Ok(Run),
        _ => Err(TransitionError { state, event }),
    }
}

/// State plus the simulated time each state was entered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMachine {
    pub state: InterfaceState,
    pub history: Vec<(InterfaceState, f64)>,
}

impl Default for StateMachine {
    fn default() -> Self {
        let start = InterfaceState::Sweep { complete: false };
        Self { state: start, history: vec![(start, 0.0)] }
    }
}

impl StateMachine {
    pub fn fire(&mut self, event: Event, t: f64) -> Result<InterfaceState, TransitionError> {
        let next = state_machine_step(self.state, event)?;
        self.state = next;
        self.history.push((next, t));
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn legal_edges() {
        let s = state_machine_step(InterfaceState::Sweep { complete: false }, Event::SweepDone).unwrap();
        assert_eq!(state_machine_step(s, Event::UserGo), Ok(InterfaceState::Hold));
        assert_eq!(state_machine_step(InterfaceState::Hold, Event::UserGo), Ok(InterfaceState::Run));
        let err = state_machine_step(InterfaceState::Run, Event::UserGo).unwrap_err();
        assert_eq!(err.to_string(), "illegal transition: UserGo in state Run");
        assert!(state_machine_step(InterfaceState::Sweep { complete: false }, Event::UserGo).is_err());
    }

    #[test]
    fn exactly_two_state_changing_edges() {
        let mut edges = BTreeSet::new();
        for s in InterfaceState::ALL {
            for e in Event::ALL {
                if let Ok(n) = state_machine_step(s, e) {
                    if n.name() != s.name() {
                        edges.insert((s.name(), n.name()));
                    }
                }
            }
        }
        assert_eq!(edges, BTreeSet::from([("Sweep", "Hold"), ("Hold", "Run")]));
    }

    #[test]
    fn history_records_entry_times() {
        let mut m = StateMachine::default();
        m.fire(Event::SweepDone, 1.5).unwrap();
        m.fire(Event::AutoGo, 2.0).unwrap();
        m.fire(Event::AutoGo, 3.0).unwrap();
        assert_eq!(m.state, InterfaceState::Run);
        assert_eq!(m.history.last(), Some(&(InterfaceState::Run, 3.0)));
    }
}
