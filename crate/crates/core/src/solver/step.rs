use super::StepRule;

/// Adaptive pseudo-time step. Keeps `0 < h ≤ h_max` and `h` finite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepController {
    pub rule: StepRule,
    h: f64,
    h_max: f64,
    previous_residual_norm: Option<f64>,
}

impl StepController {
    pub fn new(rule: StepRule, h0: f64, h_max: f64) -> Self {
        assert!(h0 > 0.0 && h0 <= h_max, "need 0 < h0 <= h_max");
        Self { rule, h: h0, h_max, previous_residual_norm: None }
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn h_max(&self) -> f64 {
        self.h_max
    }

    pub fn previous_residual_norm(&self) -> Option<f64> {
        self.previous_residual_norm
    }

    /// Records the residual norm at the starting iterate.
    pub fn record_residual(&mut self, norm: f64) {
        self.previous_residual_norm = Some(norm);
    }

    // Not `f64::clamp`: a NaN step must fall to the floor, not propagate.
    #[allow(clippy::manual_clamp)]
    fn clamp(&mut self, h: f64) -> f64 {
        self.h = h.min(self.h_max).min(f64::MAX).max(f64::MIN_POSITIVE);
        self.h
    }

    /// `h ← min(h · prev / cur, h_max)`. A zero residual leaves `h` alone;
    /// the caller has converged.
    pub fn ser_update(&mut self, current_residual_norm: f64) -> f64 {
        let prev = self.previous_residual_norm.replace(current_residual_norm);
        match prev {
            Some(p) if current_residual_norm > 0.0 => self.clamp(self.h * (p / current_residual_norm)),
            _ => self.h,
        }
    }

    /// `h ← min(h · ‖step‖, h_max)`.
    pub fn step_norm_update(&mut self, step_norm: f64) -> f64 {
        self.clamp(self.h * step_norm)
    }

    /// Applies whichever rule the controller was built with.
    pub fn update(&mut self, current_residual_norm: f64, last_step_norm: f64) -> f64 {
        match self.rule {
            StepRule::Ser => self.ser_update(current_residual_norm),
            StepRule::StepNorm => {
                self.previous_residual_norm = Some(current_residual_norm);
                self.step_norm_update(last_step_norm)
            }
        }
    }
}
