//! Integer-tick simulation clock and per-rate event scheduling.
//!
//! Time is always `tick * dt` with an integer tick, never an accumulated
//! float. Rates that do not divide the tick rate evenly (240 Hz against a
//! 10 kHz base) are scheduled by integer arithmetic on `k * ticks_per_sec /
//! rate`, which lands exactly `rate` events inside every simulated second.

/// Simulation clock: integer ticks scaled by a fixed step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimClock {
    pub tick: u64,
    pub dt: f64,
}

impl SimClock {
    pub fn new(dt: f64) -> Self {
        Self { tick: 0, dt }
    }

    pub fn time(&self) -> f64 {
        self.tick as f64 * self.dt
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}

/// Event schedule firing `rate_hz` times per simulated second on integer
/// ticks. Event `k` fires at tick `floor(k * ticks_per_sec / rate)`; the
/// first event lands on tick 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSchedule {
    rate_hz: u64,
    ticks_per_sec: u64,
    next_event: u64,
}

impl RateSchedule {
    pub fn new(rate_hz: u32, ticks_per_sec: u64) -> Self {
        assert!(rate_hz as u64 <= ticks_per_sec, "rate exceeds tick rate");
        assert!(rate_hz > 0, "rate must be positive");
        Self {
            rate_hz: rate_hz as u64,
            ticks_per_sec,
            next_event: 0,
        }
    }

    fn event_tick(&self, k: u64) -> u64 {
        (k as u128 * self.ticks_per_sec as u128 / self.rate_hz as u128) as u64
    }

    /// True when an event falls on `tick`; advances the schedule.
    pub fn due(&mut self, tick: u64) -> bool {
        if self.event_tick(self.next_event) == tick {
            self.next_event += 1;
            // Guard against rates close to the tick rate scheduling two
            // events on one tick after integer truncation.
            while self.event_tick(self.next_event) == tick {
                self.next_event += 1;
            }
            true
        } else {
            false
        }
    }

    /// Events fired so far.
    pub fn count(&self) -> u64 {
        self.next_event
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn events_in_window(rate: u32, tps: u64, ticks: u64) -> u64 {
        let mut sched = RateSchedule::new(rate, tps);
        let mut n = 0;
        for tick in 0..ticks {
            if sched.due(tick) {
                n += 1;
            }
        }
        n
    }

    #[test]
    fn exact_counts_per_second() {
        // One simulated second at dt = 1e-4.
        assert_eq!(events_in_window(240, 10_000, 10_000), 240);
        assert_eq!(events_in_window(200, 10_000, 10_000), 200);
        assert_eq!(events_in_window(50, 10_000, 10_000), 50);
    }

    #[test]
    fn exact_counts_over_many_seconds() {
        assert_eq!(events_in_window(240, 10_000, 70_000), 7 * 240);
        assert_eq!(events_in_window(200, 10_000, 35_000), 700);
    }

    #[test]
    fn first_event_on_tick_zero() {
        let mut sched = RateSchedule::new(200, 10_000);
        assert!(sched.due(0));
        assert!(!sched.due(1));
    }

    #[test]
    fn clock_time_is_exact_product() {
        let mut clock = SimClock::new(1e-4);
        for _ in 0..12_345 {
            clock.advance();
        }
        assert_eq!(clock.time(), 12_345.0 * 1e-4);
    }
}
