//! Age-of-information bookkeeping for the monitor side of the server.

use super::SimError;

/// Tracks the generation time of the freshest delivered update and
/// integrates the age over a measurement window.
///
/// The age is zero at construction, as if an update generated at the start
/// time had just been delivered. Since updates leave in arrival order, the
/// freshest delivered generation is also the arrival time of the previous
/// update, so each peak-age sample equals the age just before the drop.
#[derive(Debug, Clone)]
pub struct AoiTracker {
    window_start: f64,
    freshest_generation: f64,
    last_event_time: f64,
    age_integral: f64,
    paoi_samples: Vec<f64>,
}

impl AoiTracker {
    /// Tracker starting at time `start` with age zero; only age accrued after
    /// `window_start` and peaks at departures after `window_start` count.
    pub fn new(start: f64, window_start: f64) -> Self {
        Self {
            window_start,
            freshest_generation: start,
            last_event_time: start,
            age_integral: 0.0,
            paoi_samples: Vec::new(),
        }
    }

    pub fn freshest_generation(&self) -> f64 {
        self.freshest_generation
    }

    pub fn age_at(&self, t: f64) -> f64 {
        t - self.freshest_generation
    }

    pub fn age_integral(&self) -> f64 {
        self.age_integral
    }

    pub fn paoi_samples(&self) -> &[f64] {
        &self.paoi_samples
    }

    /// Integrates the linearly growing age up to `now`.
    pub fn advance(&mut self, now: f64) {
        let from = self.last_event_time.max(self.window_start);
        if now > from {
            let a0 = from - self.freshest_generation;
            let a1 = now - self.freshest_generation;
            self.age_integral += 0.5 * (a0 + a1) * (now - from);
        }
        if now > self.last_event_time {
            self.last_event_time = now;
        }
    }

    /// Delivery at `now` of an update generated at `generation_time`.
    /// Returns the peak-age sample for this update.
    pub fn record_update_departure(
        &mut self,
        generation_time: f64,
        now: f64,
    ) -> Result<f64, SimError> {
        if generation_time < self.freshest_generation || generation_time > now {
            return Err(SimError::OutOfOrderDeparture {
                generation_time,
                freshest: self.freshest_generation,
                now,
            });
        }
        self.advance(now);
        let peak = now - self.freshest_generation;
        if now > self.window_start {
            self.paoi_samples.push(peak);
        }
        self.freshest_generation = generation_time;
        Ok(peak)
    }

    /// Time-average age over `(window_start, horizon]`, after integrating up to `horizon`.
    pub fn mean_aoi(&mut self, horizon: f64) -> Option<f64> {
        self.advance(horizon);
        let window = horizon - self.window_start;
        (window > 0.0).then(|| self.age_integral / window)
    }

    pub fn mean_paoi(&self) -> Option<f64> {
        mean(&self.paoi_samples)
    }
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}
