//! Single-axis PID with integral clamping and output saturation.

/// Per-axis gains. `integral_limit` bounds the magnitude of the *integral
/// term* `Ki * integral`; the output is saturated to `[out_min, out_max]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub integral_limit: f64,
    pub out_min: f64,
    pub out_max: f64,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral_limit: f64::INFINITY,
            out_min: f64::NEG_INFINITY,
            out_max: f64::INFINITY,
        }
    }

    pub fn with_limits(mut self, integral_limit: f64, out_min: f64, out_max: f64) -> Self {
        self.integral_limit = integral_limit;
        self.out_min = out_min;
        self.out_max = out_max;
        self
    }

    /// Largest integral state consistent with the term clamp.
    fn integral_clamp(&self) -> f64 {
        if self.ki > 0.0 {
            self.integral_limit / self.ki
        } else {
            f64::INFINITY
        }
    }
}

/// One PID evaluation: the accumulated error integral is clamped to
/// `+/- integral_limit / Ki` before use, and the combined output is saturated.
pub fn pid_step(err: f64, err_integral: f64, err_rate: f64, gains: &PidGains) -> f64 {
    let clamp = gains.integral_clamp();
    let integral = err_integral.clamp(-clamp, clamp);
    let out = gains.kp * err + gains.ki * integral + gains.kd * err_rate;
    out.clamp(gains.out_min, gains.out_max)
}

/// Stateful wrapper owning the integral accumulation and, when no measured
/// rate is available, a finite-difference error derivative.
#[derive(Debug, Clone)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    prev_err: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_err: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_err = None;
    }

    pub fn integral_term(&self) -> f64 {
        self.gains.ki * self.integral
    }

    /// Step with the error derivative taken from consecutive samples.
    pub fn step(&mut self, err: f64, dt: f64) -> f64 {
        let rate = match self.prev_err {
            Some(prev) => (err - prev) / dt,
            None => 0.0,
        };
        self.prev_err = Some(err);
        self.step_with_rate(err, rate, dt)
    }

    /// Step with a measured error rate.
    pub fn step_with_rate(&mut self, err: f64, err_rate: f64, dt: f64) -> f64 {
        self.integral += err * dt;
        let clamp = self.gains.integral_clamp();
        self.integral = self.integral.clamp(-clamp, clamp);
        pid_step(err, self.integral, err_rate, &self.gains)
    }
}
