use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::complexity::ComplexityConstants;
use crate::dd::SystemDims;
use crate::error::{invalid, Result};
use crate::mp::MpConfig;
use crate::pilot::PilotConfig;
use crate::synthesis::ScenarioConstraints;
use crate::wmusic::WMusicConfig;

/// Pilot SNR in dB. `+inf` (noiseless) is written as the string `"inf"` in
/// JSON and CSV.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Snr(pub f64);

impl Snr {
    pub const NOISELESS: Snr = Snr(f64::INFINITY);

    pub fn db(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Snr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == f64::INFINITY {
            f.write_str("inf")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

impl std::str::FromStr for Snr {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Ok(Snr::NOISELESS),
            t => t
                .parse::<f64>()
                .ok()
                .filter(|v| !v.is_nan() && *v != f64::NEG_INFINITY)
                .map(Snr)
                .ok_or_else(|| invalid(format!("SNR must be a number or \"inf\", got {s:?}"))),
        }
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_finite() {
            s.serialize_f64(self.0)
        } else {
            s.serialize_str("inf")
        }
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Snr(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Wmusic,
    Mp,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Wmusic => "wmusic",
            EstimatorKind::Mp => "mp",
        }
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Wmusic, EstimatorKind::Mp]
}

fn default_sep() -> f64 {
    ScenarioConstraints::default().min_doppler_sep
}

fn default_max_paths() -> usize {
    ScenarioConstraints::default().max_paths_per_user
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSettings {
    pub snr_points_db: Vec<Snr>,
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    /// Minimum same-user Doppler separation of drawn scenarios (bins).
    #[serde(default = "default_sep")]
    pub min_doppler_sep: f64,
    #[serde(default = "default_max_paths")]
    pub max_paths_per_user: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
}

/// Everything a sweep, trial or complexity report needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub system: SystemDims,
    pub pilot: PilotConfig,
    pub wmusic: WMusicConfig,
    pub mp: MpConfig,
    pub sweep: SweepSettings,
    #[serde(default)]
    pub complexity: ComplexityConstants,
}

impl SimConfig {
    /// `M=32, N=64, Q=4, M_ZC=8, M_CP=4, ell_max=4, kappa_max=6` with
    /// `M′=16, N′=20, G=51, Q_sample=128` and `M_p=30, N_p=16`.
    pub fn reference() -> Self {
        SimConfig {
            system: SystemDims {
                delay_bins: 32,
                doppler_bins: 64,
                ell_max: 4.0,
                kappa_max: 6.0,
            },
            pilot: PilotConfig {
                zc_len: 8,
                cp_len: 4,
                zc_root: 1,
                users: 4,
            },
            wmusic: WMusicConfig::new(16, 20, 51, 128),
            mp: MpConfig::new(30, 16),
            sweep: SweepSettings {
                snr_points_db: [0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0].map(Snr).to_vec(),
                trials: 200,
                seed: 1,
                min_doppler_sep: default_sep(),
                max_paths_per_user: default_max_paths(),
                estimators: default_estimators(),
            },
            complexity: ComplexityConstants::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn constraints(&self) -> ScenarioConstraints {
        ScenarioConstraints {
            min_doppler_sep: self.sweep.min_doppler_sep,
            max_paths_per_user: self.sweep.max_paths_per_user,
            ..ScenarioConstraints::default()
        }
    }

    /// Largest `P_tot` a drawn scenario can have.
    pub fn max_total_paths(&self) -> usize {
        self.pilot.users * self.sweep.max_paths_per_user
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        self.pilot.validate(&self.system)?;
        let p_max = self.max_total_paths();
        self.wmusic.validate(&self.system, p_max)?;
        self.mp.validate(&self.system, p_max)?;
        let s = &self.sweep;
        if s.trials == 0 {
            return Err(invalid("trials >= 1"));
        }
        if s.snr_points_db.is_empty() {
            return Err(invalid("snr_points_db must be nonempty"));
        }
        if s.snr_points_db.iter().any(|v| v.0.is_nan() || v.0 == f64::NEG_INFINITY) {
            return Err(invalid("SNR points must be finite dB values or \"inf\""));
        }
        if !(s.min_doppler_sep >= 0.0 && s.min_doppler_sep.is_finite()) {
            return Err(invalid("min_doppler_sep >= 0"));
        }
        if s.max_paths_per_user == 0 {
            return Err(invalid("max_paths_per_user >= 1"));
        }
        if (s.max_paths_per_user - 1) as f64 * s.min_doppler_sep > self.system.kappa_max {
            return Err(invalid(
                "(max_paths_per_user - 1) * min_doppler_sep <= kappa_max (paths must fit the Doppler range)",
            ));
        }
        if s.estimators.is_empty() {
            return Err(invalid("at least one estimator"));
        }
        self.complexity.validate()?;
        Ok(())
    }
}
