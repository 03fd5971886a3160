use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dd::SystemDims;
use crate::error::{invalid, Result};
use crate::mp::MpConfig;
use crate::wmusic::WMusicConfig;

/// Leading constants of the cubic decomposition costs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexityConstants {
    /// Hermitian / general eigen-decomposition: `c·n³`.
    #[serde(default = "one")]
    pub evd: f64,
    /// Thin SVD: `c·(m n² + n³)`.
    #[serde(default = "one")]
    pub svd: f64,
    /// Companion-matrix rooting of the degree-`2G` polynomial: `c·G³`.
    /// Use `c = 8` for the `(2G)³` reading.
    #[serde(default = "one")]
    pub root: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for ComplexityConstants {
    fn default() -> Self {
        Self {
            evd: 1.0,
            svd: 1.0,
            root: 1.0,
        }
    }
}

impl ComplexityConstants {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("evd", self.evd), ("svd", self.svd), ("root", self.root)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("complexity constant {name} > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageCost {
    pub stage: &'static str,
    /// Complex multiplications.
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityReport {
    pub total_paths: usize,
    pub wmusic: Vec<StageCost>,
    pub mp: Vec<StageCost>,
}

impl ComplexityReport {
    pub fn wmusic_total(&self) -> f64 {
        self.wmusic.iter().map(|s| s.cost).sum()
    }

    pub fn mp_total(&self) -> f64 {
        self.mp.iter().map(|s| s.cost).sum()
    }

    /// `total(W-MUSIC) / total(MP)`.
    pub fn ratio(&self) -> f64 {
        self.wmusic_total() / self.mp_total()
    }

    pub fn stage(&self, estimator: &str, stage: &str) -> Option<f64> {
        let list = match estimator {
            "wmusic" => &self.wmusic,
            "mp" => &self.mp,
            _ => return None,
        };
        list.iter().find(|s| s.stage == stage).map(|s| s.cost)
    }
}

impl fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "complex multiplications, P_tot = {}", self.total_paths)?;
        writeln!(f, "{:<10} {:<10} {:>12}", "estimator", "stage", "CM")?;
        for (name, list) in [("wmusic", &self.wmusic), ("mp", &self.mp)] {
            for s in list {
                writeln!(f, "{:<10} {:<10} {:>12.3e}", name, s.stage, s.cost)?;
            }
        }
        writeln!(f, "{:<10} {:<10} {:>12.3e}", "wmusic", "total", self.wmusic_total())?;
        writeln!(f, "{:<10} {:<10} {:>12.3e}", "mp", "total", self.mp_total())?;
        write!(f, "ratio wmusic/mp = {:.2}", self.ratio())
    }
}

/// Closed-form per-stage complex-multiplication counts.
///
/// W-MUSIC (`D = M′N′`, `L = N − N′ + 1`): `C_cov = L·D²`, `C_EVD = D³`,
/// `C_spec = Q_sample·M′·D²`, `C_WLS = Q_sample(2G+1)² + (2G+1)³`,
/// `C_root = G³`, `C_delay = P·M′·D²`.
///
/// MP (`m = M_p N_p`, `n = K_M(K_N − 1)`): `C_Hankel = m·K_M K_N`,
/// `C_SVD = m n² + n³`, `C_T = P·m·n + P²·n`, `C_EVD(T) = P³`,
/// `C_proj = MN·P + N·P² + P³`.
pub fn complexity_report(
    dims: &SystemDims,
    wmusic: &WMusicConfig,
    mp: &MpConfig,
    total_paths: usize,
    consts: &ComplexityConstants,
) -> ComplexityReport {
    let p = total_paths as f64;
    let (mp_, np_) = (wmusic.sub_delay as f64, wmusic.sub_doppler as f64);
    let d = mp_ * np_;
    let snaps = (dims.doppler_bins + 1).saturating_sub(wmusic.sub_doppler) as f64;
    let q = wmusic.samples as f64;
    let g = wmusic.order as f64;
    let width = 2.0 * g + 1.0;

    let (km, kn) = mp.block_counts(dims);
    let rows = (mp.pencil_delay * mp.pencil_doppler) as f64;
    let cols = (km * kn.saturating_sub(1)) as f64;
    let (m_len, n_len) = (dims.delay_bins as f64, dims.doppler_bins as f64);

    ComplexityReport {
        total_paths,
        wmusic: vec![
            StageCost { stage: "C_cov", cost: snaps * d * d },
            StageCost { stage: "C_EVD", cost: consts.evd * d.powi(3) },
            StageCost { stage: "C_spec", cost: q * mp_ * d * d },
            StageCost { stage: "C_WLS", cost: q * width * width + width.powi(3) },
            StageCost { stage: "C_root", cost: consts.root * g.powi(3) },
            StageCost { stage: "C_delay", cost: p * mp_ * d * d },
        ],
        mp: vec![
            StageCost { stage: "C_Hankel", cost: rows * (km * kn) as f64 },
            StageCost { stage: "C_SVD", cost: consts.svd * (rows * cols * cols + cols.powi(3)) },
            StageCost { stage: "C_T", cost: p * rows * cols + p * p * cols },
            StageCost { stage: "C_EVD(T)", cost: consts.evd * p.powi(3) },
            StageCost { stage: "C_proj", cost: m_len * n_len * p + n_len * p * p + p.powi(3) },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::SimConfig;

    #[test]
    fn closed_forms() {
        let cfg = SimConfig::reference();
        let r = complexity_report(&cfg.system, &cfg.wmusic, &cfg.mp, 12, &ComplexityConstants::default());
        assert_eq!(r.stage("wmusic", "C_cov"), Some(45.0 * 320.0 * 320.0));
        assert_eq!(r.stage("wmusic", "C_EVD"), Some(320f64.powi(3)));
        assert_eq!(r.stage("wmusic", "C_spec"), Some(128.0 * 16.0 * 320.0 * 320.0));
        assert_eq!(r.stage("wmusic", "C_delay"), Some(12.0 * 16.0 * 320.0 * 320.0));
        assert_eq!(r.stage("wmusic", "C_root"), Some(51f64.powi(3)));
        assert_eq!(r.stage("mp", "C_Hankel"), Some(480.0 * 147.0));
        assert_eq!(r.stage("mp", "C_T"), Some(850_176.0));
        assert_eq!(r.stage("mp", "C_proj"), Some(35_520.0));
        assert_eq!(r.wmusic.len(), 6);
        assert_eq!(r.mp.len(), 5);
        assert!(r.ratio() >= 5.0);

        let eight = ComplexityConstants { root: 8.0, ..Default::default() };
        let r8 = complexity_report(&cfg.system, &cfg.wmusic, &cfg.mp, 12, &eight);
        assert_eq!(r8.stage("wmusic", "C_root"), Some(102f64.powi(3)));
        assert!(r.to_string().contains("C_EVD(T)"));
    }
}
