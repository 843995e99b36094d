//! Scenario configuration: the full parameter set of one simulated run,
//! loadable from TOML.
//!
//! The `[run]` and `[observer]` sections are required (`g_bound` has no
//! sensible default; it caps the unknown load dynamics the observer is tuned
//! against). Every other section falls back to the stock vehicle.

use crate::aero::MemoryForcing;
use crate::aerobat::{AerobatParams, ElasticParams, WingGait};
use crate::guard::GuardParams;
use crate::telemetry::LinkModel;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    /// Simulated duration, s.
    pub duration: f64,
    /// Physics step, s.
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    /// Position hold target, m.
    #[serde(default = "default_setpoint")]
    pub setpoint: [f64; 3],
    #[serde(default)]
    pub yaw_setpoint: f64,
    /// Log every Nth tick.
    #[serde(default = "default_decimation")]
    pub log_decimation: u64,
    /// Abort when any state magnitude passes this bound.
    #[serde(default = "default_divergence")]
    pub divergence_bound: f64,
    /// Start the thrusters at hover trim instead of zero.
    #[serde(default = "default_true")]
    pub trim_start: bool,
}

fn default_setpoint() -> [f64; 3] {
    [0.0, 0.0, 0.2]
}

fn default_decimation() -> u64 {
    50
}

fn default_divergence() -> f64 {
    100.0
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GuardSettings {
    pub mass: f64,
    /// Diagonal of the body inertia, kg m^2.
    pub inertia: [f64; 3],
    pub arm_x: f64,
    pub arm_y: f64,
    pub arm_z: f64,
    pub gravity: f64,
    pub f_max: f64,
}

impl Default for GuardSettings {
    fn default() -> Self {
        let p = GuardParams::default();
        Self {
            mass: p.mass,
            inertia: [p.inertia[(0, 0)], p.inertia[(1, 1)], p.inertia[(2, 2)]],
            arm_x: p.arm_x,
            arm_y: p.arm_y,
            arm_z: p.arm_z,
            gravity: p.gravity,
            f_max: p.f_max,
        }
    }
}

impl GuardSettings {
    pub fn params(&self) -> GuardParams {
        GuardParams {
            mass: self.mass,
            inertia: Matrix3::from_diagonal(&Vector3::new(
                self.inertia[0],
                self.inertia[1],
                self.inertia[2],
            )),
            arm_x: self.arm_x,
            arm_y: self.arm_y,
            arm_z: self.arm_z,
            gravity: self.gravity,
            f_max: self.f_max,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AerobatSettings {
    pub total_mass: f64,
    pub wing_mass: f64,
    pub hinge_offset: f64,
    pub proximal_length: f64,
    pub distal_length: f64,
}

impl Default for AerobatSettings {
    fn default() -> Self {
        let p = AerobatParams::default();
        Self {
            total_mass: p.total_mass,
            wing_mass: p.wing_mass,
            hinge_offset: p.hinge_offset,
            proximal_length: p.proximal_length,
            distal_length: p.distal_length,
        }
    }
}

impl AerobatSettings {
    pub fn params(&self) -> AerobatParams {
        AerobatParams {
            total_mass: self.total_mass,
            wing_mass: self.wing_mass,
            hinge_offset: self.hinge_offset,
            proximal_length: self.proximal_length,
            distal_length: self.distal_length,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ElasticSettings {
    /// Net suspension stiffness, N/m.
    pub stiffness: f64,
    /// Anchor corner offsets on the guard, m.
    pub anchor: [f64; 3],
    /// Attachment points as a scale of the anchor pattern.
    pub attachment_scale: f64,
}

impl Default for ElasticSettings {
    fn default() -> Self {
        Self {
            stiffness: 60.0,
            anchor: [0.12, 0.12, 0.0],
            attachment_scale: 0.25,
        }
    }
}

impl ElasticSettings {
    pub fn params(&self, aerobat: &AerobatSettings) -> ElasticParams {
        let [ax, ay, az] = self.anchor;
        let anchors = [
            Vector3::new(ax, ay, az),
            Vector3::new(-ax, ay, az),
            Vector3::new(-ax, -ay, az),
            Vector3::new(ax, -ay, az),
        ];
        ElasticParams {
            stiffness: self.stiffness,
            aerobat_mass: aerobat.total_mass,
            anchors,
            attachments: anchors.map(|a| a * self.attachment_scale),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AeroSettings {
    pub enabled: bool,
    pub strips: usize,
    pub chord: f64,
    pub air_density: f64,
    pub forcing: MemoryForcing,
    pub psi: [f64; 2],
    pub eps: [f64; 2],
}

impl Default for AeroSettings {
    fn default() -> Self {
        let w = crate::aero::WagnerCoefficients::default();
        Self {
            enabled: true,
            strips: 4,
            chord: 0.05,
            air_density: crate::aero::AIR_DENSITY,
            forcing: MemoryForcing::Standard,
            psi: [w.psi1, w.psi2],
            eps: [w.eps1, w.eps2],
        }
    }
}

impl AeroSettings {
    pub fn coefficients(&self) -> crate::aero::WagnerCoefficients {
        crate::aero::WagnerCoefficients {
            psi1: self.psi[0],
            psi2: self.psi[1],
            eps1: self.eps[0],
            eps2: self.eps[1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaitSettings {
    pub frequency: f64,
    pub amplitude: [f64; 2],
    pub phase: [f64; 2],
    pub mean: [f64; 2],
}

impl Default for GaitSettings {
    fn default() -> Self {
        let g = WingGait::default();
        Self {
            frequency: g.frequency,
            amplitude: g.amplitude,
            phase: g.phase,
            mean: g.mean,
        }
    }
}

impl GaitSettings {
    pub fn gait(&self) -> WingGait {
        WingGait {
            frequency: self.frequency,
            amplitude: self.amplitude,
            phase: self.phase,
            mean: self.mean,
        }
    }
}

/// Explicit per-axis position gains `[kp, ki, kd]`, overriding the preset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PositionGainsConfig {
    pub x: [f64; 3],
    pub y: [f64; 3],
    pub z: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSettings {
    /// Named gain preset (`test1` .. `test5`).
    pub preset: String,
    /// Explicit position gains override the preset when present.
    pub position: Option<PositionGainsConfig>,
    pub rate_hz: u32,
    pub max_tilt: f64,
    /// Maps raw PID output units to an acceleration demand in m/s^2.
    pub accel_scale: f64,
    /// Attitude PID triples `[kp, ki, kd]`.
    pub attitude_roll_pitch: [f64; 3],
    pub attitude_yaw: [f64; 3],
}

impl Default for ControlSettings {
    fn default() -> Self {
        Self {
            preset: "test1".into(),
            position: None,
            rate_hz: 200,
            max_tilt: 0.35,
            accel_scale: 0.1,
            attitude_roll_pitch: [0.6, 0.05, 0.06],
            attitude_yaw: [0.9, 0.05, 0.09],
        }
    }
}

/// Observer gain triple. `beta3` is shaped through the inverse of the load
/// map so every axis shares the error polynomial
/// `l^3 + beta1 l^2 + beta2 l + beta3`; the defaults place its roots at
/// -5, -10, -20.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverSettings {
    /// Bound on the unknown load dynamics the observer must tolerate.
    pub g_bound: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_beta3")]
    pub beta3: f64,
}

fn default_beta1() -> f64 {
    35.0
}

fn default_beta2() -> f64 {
    350.0
}

fn default_beta3() -> f64 {
    1000.0
}

impl Default for ObserverSettings {
    fn default() -> Self {
        Self {
            g_bound: 5.0,
            beta1: default_beta1(),
            beta2: default_beta2(),
            beta3: default_beta3(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkSettings {
    pub pose: LinkModel,
    pub command: LinkModel,
    /// Gaussian position noise added at the mocap sampling point, m.
    pub pose_noise_std: f64,
    /// Actuator PWM update rate, Hz.
    pub pwm_rate_hz: u32,
}

impl Default for LinkSettings {
    fn default() -> Self {
        Self {
            pose: LinkModel::pose_default(),
            command: LinkModel::command_default(),
            pose_noise_std: 0.0,
            pwm_rate_hz: 50,
        }
    }
}

/// Deterministic external force/torque script applied to the guard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DisturbanceSettings {
    pub force_amplitude: [f64; 3],
    pub force_frequency: [f64; 3],
    pub force_phase: [f64; 3],
    pub force_bias: [f64; 3],
    pub torque_amplitude: [f64; 3],
    pub torque_frequency: [f64; 3],
    pub start_time: f64,
}

impl Default for DisturbanceSettings {
    fn default() -> Self {
        Self {
            force_amplitude: [0.0; 3],
            force_frequency: [0.0; 3],
            force_phase: [0.0; 3],
            force_bias: [0.0; 3],
            torque_amplitude: [0.0; 3],
            torque_frequency: [0.0; 3],
            start_time: 0.0,
        }
    }
}

impl DisturbanceSettings {
    pub fn evaluate(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        if t < self.start_time {
            return (Vector3::zeros(), Vector3::zeros());
        }
        let tau = t - self.start_time;
        let mut force = Vector3::zeros();
        let mut torque = Vector3::zeros();
        for i in 0..3 {
            force[i] = self.force_bias[i]
                + self.force_amplitude[i]
                    * (std::f64::consts::TAU * self.force_frequency[i] * tau
                        + self.force_phase[i])
                        .sin();
            torque[i] = self.torque_amplitude[i]
                * (std::f64::consts::TAU * self.torque_frequency[i] * tau).sin();
        }
        (force, torque)
    }
}

/// Complete description of one simulated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub run: RunSettings,
    #[serde(default)]
    pub guard: GuardSettings,
    #[serde(default)]
    pub aerobat: AerobatSettings,
    #[serde(default)]
    pub elastic: ElasticSettings,
    #[serde(default)]
    pub aero: AeroSettings,
    #[serde(default)]
    pub gait: GaitSettings,
    #[serde(default)]
    pub control: ControlSettings,
    pub observer: ObserverSettings,
    #[serde(default)]
    pub links: LinkSettings,
    #[serde(default)]
    pub disturbance: DisturbanceSettings,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            run: RunSettings {
                duration: 8.0,
                dt: 1e-4,
                seed: 1,
                setpoint: default_setpoint(),
                yaw_setpoint: 0.0,
                log_decimation: default_decimation(),
                divergence_bound: default_divergence(),
                trim_start: true,
            },
            guard: GuardSettings::default(),
            aerobat: AerobatSettings::default(),
            elastic: ElasticSettings::default(),
            aero: AeroSettings::default(),
            gait: GaitSettings::default(),
            control: ControlSettings::default(),
            observer: ObserverSettings::default(),
            links: LinkSettings::default(),
            disturbance: DisturbanceSettings::default(),
        }
    }
}

impl Scenario {
    /// Stock scenario with one of the named gain presets.
    pub fn preset(name: &str) -> Option<Self> {
        crate::control::position_preset(name)?;
        let mut s = Self::default();
        s.control.preset = name.to_string();
        Some(s)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), ScenarioError> {
        let text = self.to_toml_string()?;
        std::fs::write(path, text).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Integer physics ticks per simulated second.
    pub fn ticks_per_second(&self) -> u64 {
        (1.0 / self.run.dt).round() as u64
    }

    pub fn total_ticks(&self) -> u64 {
        (self.run.duration / self.run.dt).round() as u64
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |msg: String| Err(ScenarioError::Invalid(msg));
        if !(self.run.dt > 0.0) {
            return invalid(format!("run.dt must be positive, got {}", self.run.dt));
        }
        if !(self.run.duration > 0.0) {
            return invalid(format!(
                "run.duration must be positive, got {}",
                self.run.duration
            ));
        }
        let tps = self.ticks_per_second();
        if tps == 0 || ((1.0 / self.run.dt) - tps as f64).abs() > 1e-6 * tps as f64 {
            return invalid(format!(
                "run.dt = {} does not produce an integer tick rate",
                self.run.dt
            ));
        }
        for (name, rate) in [
            ("links.pose.rate_hz", self.links.pose.rate_hz),
            ("links.command.rate_hz", self.links.command.rate_hz),
            ("control.rate_hz", self.control.rate_hz),
            ("links.pwm_rate_hz", self.links.pwm_rate_hz),
        ] {
            if rate == 0 || rate as u64 > tps {
                return invalid(format!(
                    "{name} = {rate} must be in [1, {tps}] for dt = {}",
                    self.run.dt
                ));
            }
        }
        if self.run.log_decimation == 0 || self.total_ticks() % self.run.log_decimation != 0 {
            return invalid(format!(
                "run.log_decimation = {} must divide the {} total ticks",
                self.run.log_decimation,
                self.total_ticks()
            ));
        }
        if self.control.position.is_none()
            && crate::control::position_preset(&self.control.preset).is_none()
        {
            return invalid(format!(
                "control.preset = {:?} is not one of {:?}",
                self.control.preset,
                crate::control::PRESET_NAMES
            ));
        }
        if !(self.guard.mass > 0.0) || !(self.aerobat.total_mass > 0.0) {
            return invalid("masses must be positive".into());
        }
        if self.aerobat.wing_mass * 2.0 >= self.aerobat.total_mass {
            return invalid("wing masses must leave positive body mass".into());
        }
        if self.aero.strips == 0 {
            return invalid("aero.strips must be at least 1".into());
        }
        if !(self.observer.g_bound > 0.0) {
            return invalid("observer.g_bound must be positive".into());
        }
        if !(self.elastic.stiffness > 0.0) {
            return invalid("elastic.stiffness must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_scenario_validates() {
        Scenario::default().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::default();
        let text = s.to_toml_string().unwrap();
        let back = Scenario::from_toml_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn missing_required_key_is_named() {
        // [observer] lacks g_bound.
        let text = r#"
[run]
duration = 1.0
dt = 1e-4

[observer]
beta1 = 60.0
"#;
        let err = Scenario::from_toml_str(text).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("g_bound"), "error should name the key: {msg}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = r#"
[run]
duration = 1.0
dt = 1e-4
warp_factor = 9

[observer]
g_bound = 5.0
"#;
        let err = Scenario::from_toml_str(text).unwrap_err();
        assert!(err.to_string().contains("warp_factor"));
    }

    #[test]
    fn bad_decimation_rejected() {
        let mut s = Scenario::default();
        s.run.duration = 1.0;
        s.run.log_decimation = 7; // 10000 ticks not divisible by 7
        assert!(matches!(s.validate(), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn preset_lookup() {
        assert!(Scenario::preset("test3").is_some());
        assert!(Scenario::preset("warp").is_none());
    }

    #[test]
    fn disturbance_respects_start_time() {
        let d = DisturbanceSettings {
            force_bias: [1.0, 0.0, 0.0],
            start_time: 2.0,
            ..DisturbanceSettings::default()
        };
        assert_eq!(d.evaluate(1.9).0, Vector3::zeros());
        assert_eq!(d.evaluate(2.1).0, Vector3::new(1.0, 0.0, 0.0));
    }
}
