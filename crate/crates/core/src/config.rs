//! Shared pipeline tunables with spec'd defaults, plus the key = value config
//! file format used by the CLI. Precedence: explicit overrides > config file >
//! defaults; the only environment override is TM2FLOW_PRECISION_BITS.

use num_rational::BigRational;
use crate::scalar::{rat, rat_i};
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("config line {line}: {msg}")]
    Bad { line: usize, msg: String },
    #[error("invalid value for {key}: {value}")]
    BadValue { key: String, value: String },
}

/// Every knob the pipeline reads. Constructed via `Defaults`, then overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Working precision in bits (>= 64).
    pub precision_bits: usize,
    /// Tape window radius.
    pub k0: usize,
    /// Targeting gain c.
    pub gain_c: BigRational,
    /// Phase sharpness exponent K.
    pub sharpness: u32,
    /// Error-contraction stages applied to the step-map input.
    pub sigma_in: u32,
    /// Error-contraction stages applied on the write-back phase.
    pub sigma_out: u32,
    /// Tube radius ε for the halting region.
    pub epsilon: BigRational,
    /// Clock-window width δV.
    pub delta_v: BigRational,
    /// Relative tolerance for the integrator.
    pub rel_tol: BigRational,
    /// Absolute tolerance for the integrator.
    pub abs_tol: BigRational,
    /// Maximum step size.
    pub max_step: BigRational,
    /// Step cap applied near candidate clock windows.
    pub near_event_step: BigRational,
    /// Horizon for non-halting verdicts.
    pub horizon_unknown: BigRational,
    /// Reparametrization exponent for the time-δ map path.
    pub repa_exponent: u32,
    /// Sample count for robustness certification.
    pub robust_samples: usize,
    /// RNG seed for all randomized sampling.
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            precision_bits: 256,
            k0: 3,
            gain_c: rat_i(40),
            sharpness: 12,
            sigma_in: 6,
            sigma_out: 3,
            epsilon: rat(1, 8),
            delta_v: rat(1, 4),
            rel_tol: rat(1, 10_000_000_000), // 1e-10
            abs_tol: rat(1, 10_000_000_000),
            max_step: rat(1, 10),
            near_event_step: rat(1, 50),
            horizon_unknown: rat_i(12),
            repa_exponent: 1,
            robust_samples: 1000,
            seed: 7,
        }
    }
}

fn parse_rat_value(v: &str) -> Option<BigRational> {
    let v = v.trim();
    if let Some((n, d)) = v.split_once('/') {
        let n: num_bigint::BigInt = n.trim().parse().ok()?;
        let d: num_bigint::BigInt = d.trim().parse().ok()?;
        return Some(BigRational::new(n, d));
    }
    if let Some((mant, exp)) = v.split_once(['e', 'E']) {
        let exp: i32 = exp.parse().ok()?;
        let base = parse_rat_value(mant)?;
        let ten = rat_i(10);
        let mut scale = rat_i(1);
        for _ in 0..exp.unsigned_abs() {
            scale *= &ten;
        }
        return Some(if exp >= 0 { base * scale } else { base / scale });
    }
    if let Some((int, frac)) = v.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int_part: num_bigint::BigInt = int.parse().ok()?;
        let digits = frac.len() as u32;
        let frac_num: num_bigint::BigInt = frac.parse().ok()?;
        let denom = num_bigint::BigInt::from(10u32).pow(digits);
        let frac_rat = BigRational::new(frac_num, denom);
        let int_rat = BigRational::from_integer(int_part);
        return Some(if neg { int_rat - frac_rat } else { int_rat + frac_rat });
    }
    let n: num_bigint::BigInt = v.parse().ok()?;
    Some(BigRational::from_integer(n))
}

impl PipelineConfig {
    /// Applies one key = value override.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = || ConfigError::BadValue { key: key.to_string(), value: value.to_string() };
        let as_rat = parse_rat_value(value);
        match key {
            "precision_bits" => self.precision_bits = value.trim().parse().map_err(|_| bad())?,
            "k0" => self.k0 = value.trim().parse().map_err(|_| bad())?,
            "gain_c" => self.gain_c = as_rat.ok_or_else(bad)?,
            "sharpness" => self.sharpness = value.trim().parse().map_err(|_| bad())?,
            "sigma_in" => self.sigma_in = value.trim().parse().map_err(|_| bad())?,
            "sigma_out" => self.sigma_out = value.trim().parse().map_err(|_| bad())?,
            "epsilon" => self.epsilon = as_rat.ok_or_else(bad)?,
            "delta_v" => self.delta_v = as_rat.ok_or_else(bad)?,
            "rel_tol" => self.rel_tol = as_rat.ok_or_else(bad)?,
            "abs_tol" => self.abs_tol = as_rat.ok_or_else(bad)?,
            "max_step" => self.max_step = as_rat.ok_or_else(bad)?,
            "near_event_step" => self.near_event_step = as_rat.ok_or_else(bad)?,
            "horizon_unknown" => self.horizon_unknown = as_rat.ok_or_else(bad)?,
            "repa_exponent" => self.repa_exponent = value.trim().parse().map_err(|_| bad())?,
            "robust_samples" => self.robust_samples = value.trim().parse().map_err(|_| bad())?,
            "seed" => self.seed = value.trim().parse().map_err(|_| bad())?,
            _ => {
                return Err(ConfigError::BadValue {
                    key: key.to_string(),
                    value: "unknown key".to_string(),
                })
            }
        }
        Ok(())
    }

    /// Parses a key = value file (# comments, blank lines allowed) on top of
    /// the current values.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Bad {
                line: idx + 1,
                msg: "expected key = value".to_string(),
            })?;
            self.set(k.trim(), v.trim()).map_err(|e| ConfigError::Bad {
                line: idx + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(())
    }

    /// Applies the TM2FLOW_PRECISION_BITS environment override if present.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var("TM2FLOW_PRECISION_BITS") {
            if let Ok(bits) = v.trim().parse::<usize>() {
                if bits >= 64 {
                    self.precision_bits = bits;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_sane() {
        let c = PipelineConfig::default();
        assert_eq!(c.precision_bits, 256);
        assert_eq!(c.epsilon, rat(1, 8));
        assert_eq!(c.delta_v, rat(1, 4));
    }

    #[test]
    fn file_overrides_defaults() {
        let mut c = PipelineConfig::default();
        c.apply_file("# comment\nprecision_bits = 128\nepsilon = 1/16\nrel_tol = 1e-8\n")
            .unwrap();
        assert_eq!(c.precision_bits, 128);
        assert_eq!(c.epsilon, rat(1, 16));
        assert_eq!(c.rel_tol, rat(1, 100_000_000));
    }

    #[test]
    fn decimal_values_parse_exactly() {
        let mut c = PipelineConfig::default();
        c.set("delta_v", "0.25").unwrap();
        assert_eq!(c.delta_v, rat(1, 4));
        c.set("gain_c", "12.5").unwrap();
        assert_eq!(c.gain_c, rat(25, 2));
    }

    #[test]
    fn unknown_key_is_rejected() {
        let mut c = PipelineConfig::default();
        assert!(c.set("not_a_key", "1").is_err());
    }
}
