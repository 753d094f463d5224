//! Flat simulation configuration shared by estimator, controller and harness.
//!
//! Values the source model leaves open (time step, gains, barrier rate, Cauchy knee,
//! window length, process noise) are implementation choices, documented per field.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Sampling period (s).
    pub dt: f64,
    /// Episode length in steps.
    pub horizon: usize,
    /// Range noise standard deviation (m).
    pub sigma_r: f64,
    /// Azimuth noise standard deviation (rad).
    pub sigma_az: f64,
    /// Elevation noise standard deviation (rad).
    pub sigma_el: f64,
    /// Probability that a bearing sample is drawn from the outlier distribution.
    pub p_out: f64,
    /// Outlier bearing noise standard deviation (rad).
    pub sigma_out: f64,
    /// Desired standoff distance (m).
    pub d_star: f64,
    /// Physical lower distance bound (m).
    pub d_min: f64,
    /// Physical upper distance bound (m).
    pub d_max: f64,
    /// Per-axis acceleration lower bound (m/s^2).
    pub u_min: f64,
    /// Per-axis acceleration upper bound (m/s^2).
    pub u_max: f64,
    /// Per-axis UAV speed bound (m/s).
    pub v_max: f64,
    /// Bound on the target acceleration norm (m/s^2).
    pub a_max: f64,
    /// Risk level of the confidence radius.
    pub alpha_risk: f64,
    /// Critically damped barrier rate (1/s).
    pub omega: f64,
    pub k_r: f64,
    pub k_vr: f64,
    pub k_z: f64,
    pub k_vz: f64,
    pub k_tau: f64,
    /// Cauchy knee in whitened bearing-residual units.
    pub cauchy_c: f64,
    /// Maximum number of target nodes kept in the smoothing window.
    pub window_size: usize,
    pub seed: u64,
    /// Target process noise standard deviation on position (m per step).
    pub q_pos_std: f64,
    /// Target process noise standard deviation on velocity (m/s per step).
    pub q_vel_std: f64,
    /// Initial velocity standard deviation of the first belief (m/s).
    pub init_vel_std: f64,
    /// Scale of the process noise actually injected into the simulated target,
    /// relative to `q_pos_std` / `q_vel_std`.
    pub truth_noise_scale: f64,
    /// Scale of the measurement noise actually injected; the reported covariance is unaffected.
    pub sensor_noise_scale: f64,
    /// Noise-std multiplier inside the degraded-sensing window of the control scenario.
    pub degrade_factor: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            horizon: 1200,
            sigma_r: 0.05,
            sigma_az: 3f64.to_radians(),
            sigma_el: 3f64.to_radians(),
            p_out: 0.2,
            sigma_out: 25f64.to_radians(),
            d_star: 3.0,
            d_min: 2.0,
            d_max: 5.0,
            u_min: -3.0,
            u_max: 3.0,
            v_max: 4.0,
            a_max: 1.5,
            alpha_risk: 0.05,
            omega: 1.5,
            k_r: 1.0,
            k_vr: 2.0,
            k_z: 1.5,
            k_vz: 2.0,
            k_tau: 0.8,
            cauchy_c: 2.0,
            window_size: 20,
            seed: 1,
            q_pos_std: 0.01,
            q_vel_std: 0.05,
            init_vel_std: 1.0,
            truth_noise_scale: 0.5,
            sensor_noise_scale: 1.0,
            degrade_factor: 4.0,
        }
    }
}

/// Keys of [`SimConfig`] in declaration order.
pub const CONFIG_KEYS: &[&str] = &[
    "dt", "horizon", "sigma_r", "sigma_az", "sigma_el", "p_out", "sigma_out", "d_star", "d_min",
    "d_max", "u_min", "u_max", "v_max", "a_max", "alpha_risk", "omega", "k_r", "k_vr", "k_z",
    "k_vz", "k_tau", "cauchy_c", "window_size", "seed", "q_pos_std", "q_vel_std", "init_vel_std",
    "truth_noise_scale", "sensor_noise_scale", "degrade_factor",
];

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        fn check(ok: bool, msg: &str) -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(msg.to_string()))
            }
        }
        let finite = [
            self.dt, self.sigma_r, self.sigma_az, self.sigma_el, self.p_out, self.sigma_out,
            self.d_star, self.d_min, self.d_max, self.u_min, self.u_max, self.v_max, self.a_max,
            self.alpha_risk, self.omega, self.k_r, self.k_vr, self.k_z, self.k_vz, self.k_tau,
            self.cauchy_c, self.q_pos_std, self.q_vel_std, self.init_vel_std,
            self.truth_noise_scale, self.sensor_noise_scale, self.degrade_factor,
        ];
        check(finite.iter().all(|v| v.is_finite()), "all real-valued keys must be finite")?;
        check(self.dt > 0.0, "dt: must be > 0")?;
        check(self.horizon >= 1, "horizon: must be >= 1")?;
        check(self.sigma_r > 0.0, "sigma_r: must be > 0")?;
        check(self.sigma_az > 0.0 && self.sigma_el > 0.0, "sigma_az/sigma_el: must be > 0")?;
        check((0.0..=1.0).contains(&self.p_out), "p_out: must lie in [0, 1]")?;
        check(self.sigma_out >= 0.0, "sigma_out: must be >= 0")?;
        check(
            self.d_min > 0.0 && self.d_min < self.d_star && self.d_star < self.d_max,
            "d_min/d_star/d_max: require 0 < d_min < d_star < d_max",
        )?;
        check(self.u_min <= 0.0 && self.u_max >= 0.0, "u_min/u_max: box must contain zero")?;
        check(self.v_max > 0.0, "v_max: must be > 0")?;
        check(self.a_max >= 0.0, "a_max: must be >= 0")?;
        check(self.alpha_risk > 0.0 && self.alpha_risk < 1.0, "alpha_risk: must lie in (0, 1)")?;
        check(
            [self.omega, self.k_r, self.k_vr, self.k_z, self.k_vz, self.k_tau].iter().all(|g| *g > 0.0),
            "omega/k_r/k_vr/k_z/k_vz/k_tau: gains must be > 0",
        )?;
        check(self.cauchy_c > 0.0, "cauchy_c: must be > 0")?;
        check(self.window_size >= 2, "window_size: must be >= 2")?;
        check(self.q_pos_std > 0.0 && self.q_vel_std > 0.0, "q_pos_std/q_vel_std: must be > 0")?;
        check(self.init_vel_std > 0.0, "init_vel_std: must be > 0")?;
        check(self.truth_noise_scale >= 0.0, "truth_noise_scale: must be >= 0")?;
        check(self.sensor_noise_scale >= 0.0, "sensor_noise_scale: must be >= 0")?;
        check(self.degrade_factor >= 1.0, "degrade_factor: must be >= 1")?;
        Ok(())
    }

    /// Parses a TOML document; unknown keys are rejected.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SimConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: SimConfig = table.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_roundtrips() {
        let cfg = SimConfig::default();
        cfg.validate().unwrap();
        let back = SimConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn keys_match_serialized_fields() {
        let table: toml::Table = toml::from_str(&SimConfig::default().to_toml_string()).unwrap();
        let keys: Vec<&str> = table.keys().map(|k| k.as_str()).collect();
        let mut expected = CONFIG_KEYS.to_vec();
        expected.sort();
        let mut got = keys.clone();
        got.sort();
        assert_eq!(got, expected);
    }

    #[test]
    fn unknown_key_rejected() {
        let err = SimConfig::from_toml_str("dt = 0.1\nbogus = 3\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn partial_document_uses_defaults() {
        let cfg = SimConfig::from_toml_str("dt = 0.1\nseed = 9\n").unwrap();
        assert_eq!(cfg.dt, 0.1);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.window_size, 20);
    }

    #[test]
    fn invariants_enforced() {
        for doc in [
            "dt = 0.0",
            "p_out = 1.5",
            "d_min = 4.0",
            "k_r = 0.0",
            "alpha_risk = 1.0",
            "window_size = 1",
        ] {
            assert!(SimConfig::from_toml_str(doc).is_err(), "{doc}");
        }
    }
}
