//! Fixed-point simulation clock.
//!
//! Instants and durations are integer multiples of 2^-32 time units. Every
//! tick count below 2^53 converts to `f64` exactly, so differences and sums
//! of converted timestamps are exact as long as results stay below roughly
//! two million time units.

use std::ops::{Add, Sub};

pub const TICKS_PER_UNIT: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ticks(ticks: u64) -> Self {
        SimTime(ticks)
    }

    /// Nearest tick to `units`; negative inputs clamp to zero.
    pub fn from_units(units: f64) -> Self {
        let ticks = (units * TICKS_PER_UNIT as f64).round();
        if ticks <= 0.0 {
            SimTime(0)
        } else if ticks >= u64::MAX as f64 {
            SimTime(u64::MAX)
        } else {
            SimTime(ticks as u64)
        }
    }

    pub fn ticks(self) -> u64 {
        self.0
    }

    pub fn as_units(self) -> f64 {
        self.0 as f64 / TICKS_PER_UNIT as f64
    }
}

impl Add for SimTime {
    type Output = SimTime;

    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_add(rhs.0))
    }
}

impl Sub for SimTime {
    type Output = SimTime;

    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}
