//! Pending-event calendar for a single server with two Poisson sources.

use super::clock::SimTime;
use crate::model::JobClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Arrival(JobClass),
    Completion,
}

/// Next arrival per class plus at most one pending service completion.
///
/// Ties resolve update arrival first, then query arrival, then completion.
#[derive(Debug, Clone)]
pub struct EventCalendar {
    next_arrival: [SimTime; 2],
    completion: Option<SimTime>,
}

fn slot(class: JobClass) -> usize {
    match class {
        JobClass::Update => 0,
        JobClass::Query => 1,
    }
}

impl EventCalendar {
    pub fn new(first_update: SimTime, first_query: SimTime) -> Self {
        Self {
            next_arrival: [first_update, first_query],
            completion: None,
        }
    }

    pub fn schedule_arrival(&mut self, class: JobClass, at: SimTime) {
        self.next_arrival[slot(class)] = at;
    }

    /// Replaces any pending completion.
    pub fn schedule_completion(&mut self, at: Option<SimTime>) {
        self.completion = at;
    }

    pub fn pending_completion(&self) -> Option<SimTime> {
        self.completion
    }

    pub fn peek(&self) -> (SimTime, Event) {
        let mut best = (self.next_arrival[0], Event::Arrival(JobClass::Update));
        if self.next_arrival[1] < best.0 {
            best = (self.next_arrival[1], Event::Arrival(JobClass::Query));
        }
        if let Some(c) = self.completion {
            if c < best.0 {
                best = (c, Event::Completion);
            }
        }
        best
    }
}
