//! Flat `key = value` run settings shared by the command line and config
//! files. Keys mirror the long flag names with dashes replaced by
//! underscores.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::experiment::CampaignConfig;
use crate::model::{ModelKind, PhysicalParams};
use crate::protocol::ProtocolKind;
use crate::trajectory::DetectorModel;

/// Every key accepted in a config file.
pub const KEYS: &[&str] = &[
    "delta_mhz",
    "omega_mhz",
    "g_mhz",
    "gamma_mhz",
    "kappa_t_mhz",
    "kappa_a_mhz",
    "branching_to_0",
    "eta",
    "eta_p",
    "dark_khz",
    "dark_total",
    "protocol",
    "model",
    "n_traj",
    "seed",
    "m_index",
    "t_big_over_kappa",
    "workers",
    "out",
    "log_trajectories",
];

/// Parses `key = value` lines. `#` starts a comment; blank lines are
/// ignored; keys are normalized (`-` to `_`) and may appear once.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", n + 1)))?;
        let key = normalize_key(k);
        if key.is_empty() {
            return Err(Error::Parse(format!("line {}: empty key", n + 1)));
        }
        if out.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(Error::Parse(format!("line {}: duplicate key '{key}'", n + 1)));
        }
    }
    Ok(out)
}

pub fn normalize_key(k: &str) -> String {
    k.trim().trim_start_matches("--").replace('-', "_")
}

/// Run settings in user units: rates as ν-values in MHz, dark counts in kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub delta_mhz: f64,
    pub omega_mhz: f64,
    pub g_mhz: f64,
    pub gamma_mhz: f64,
    pub kappa_t_mhz: f64,
    pub kappa_a_mhz: f64,
    pub branching_to_0: f64,
    pub eta: f64,
    pub eta_p: f64,
    pub dark_khz: f64,
    /// Treat `dark_khz` as the total over both detectors.
    pub dark_total: bool,
    pub protocol: ProtocolKind,
    pub model: ModelKind,
    pub n_traj: u64,
    pub seed: u64,
    pub m_index: u32,
    pub t_big_over_kappa: f64,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub log_trajectories: Option<PathBuf>,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            delta_mhz: 100.0,
            omega_mhz: 10.0,
            g_mhz: 10.0,
            gamma_mhz: 1.0,
            kappa_t_mhz: 0.265,
            kappa_a_mhz: 0.0,
            branching_to_0: 0.5,
            eta: 1.0,
            eta_p: 1.0,
            dark_khz: 0.0,
            dark_total: false,
            protocol: ProtocolKind::Modified,
            model: ModelKind::Full,
            n_traj: 20_000,
            seed: 1,
            m_index: 0,
            t_big_over_kappa: 10.0,
            workers: None,
            out: None,
            log_trajectories: None,
        }
    }
}

fn parse<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    v.parse::<T>().map_err(|e| Error::Parse(format!("{key} = '{v}': {e}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(Error::Parse(format!("{key} = '{v}': expected a boolean"))),
    }
}

impl Settings {
    /// Sets one field from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = normalize_key(key);
        let k = key.as_str();
        let v = value.trim();
        match k {
            "delta_mhz" => self.delta_mhz = parse(k, v)?,
            "omega_mhz" => self.omega_mhz = parse(k, v)?,
            "g_mhz" => self.g_mhz = parse(k, v)?,
            "gamma_mhz" => self.gamma_mhz = parse(k, v)?,
            "kappa_t_mhz" => self.kappa_t_mhz = parse(k, v)?,
            "kappa_a_mhz" => self.kappa_a_mhz = parse(k, v)?,
            "branching_to_0" => self.branching_to_0 = parse(k, v)?,
            "eta" => self.eta = parse(k, v)?,
            "eta_p" => self.eta_p = parse(k, v)?,
            "dark_khz" => self.dark_khz = parse(k, v)?,
            "dark_total" => self.dark_total = parse_bool(k, v)?,
            "protocol" => self.protocol = parse(k, v)?,
            "model" => self.model = parse(k, v)?,
            "n_traj" => self.n_traj = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "m_index" => self.m_index = parse(k, v)?,
            "t_big_over_kappa" => self.t_big_over_kappa = parse(k, v)?,
            "workers" => self.workers = Some(parse(k, v)?),
            "out" => self.out = Some(PathBuf::from(v)),
            "log_trajectories" => self.log_trajectories = Some(PathBuf::from(v)),
            _ => return Err(Error::Parse(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_pairs(&mut self, pairs: &BTreeMap<String, String>) -> Result<()> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let mut s = Self::default();
        s.apply_pairs(&parse_pairs(&fs::read_to_string(path)?)?)?;
        Ok(s)
    }

    pub fn params(&self) -> Result<PhysicalParams> {
        let mut p = PhysicalParams::from_mhz(
            self.delta_mhz,
            self.omega_mhz,
            self.g_mhz,
            self.gamma_mhz,
            self.kappa_t_mhz,
            self.kappa_a_mhz,
        )?;
        if !(0.0..=1.0).contains(&self.branching_to_0) {
            return Err(Error::InvalidParameter {
                name: "branching_to_0",
                value: self.branching_to_0,
                reason: "must lie in [0, 1]",
            });
        }
        p.branching_to_0 = self.branching_to_0;
        Ok(p)
    }

    /// Dark-count rate per detector in 1/µs.
    pub fn dark_rate_per_detector(&self) -> f64 {
        let per_us = self.dark_khz * 1e-3;
        if self.dark_total {
            per_us / 2.0
        } else {
            per_us
        }
    }

    pub fn detector(&self) -> Result<DetectorModel> {
        DetectorModel::new(self.eta, self.eta_p, self.dark_rate_per_detector())
    }

    pub fn campaign(&self) -> Result<CampaignConfig> {
        let mut c = CampaignConfig::new(self.params()?, self.protocol, self.model, self.n_traj, self.seed);
        c.detector = self.detector()?;
        c.m_index = self.m_index;
        c.t_big_over_kappa = self.t_big_over_kappa;
        c.output = self.out.clone();
        c.trajectory_log = self.log_trajectories.clone();
        c.workers = self.workers;
        Ok(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_dashes() {
        let m = parse_pairs("# header\nkappa-t-mhz = 0.2  # trailing\n\n protocol=original\n").unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m["kappa_t_mhz"], "0.2");
        assert_eq!(m["protocol"], "original");
    }

    #[test]
    fn rejects_malformed_lines() {
        assert!(parse_pairs("eta 0.5").is_err());
        assert!(parse_pairs("eta = 0.5\neta = 0.6").is_err());
        assert!(parse_pairs(" = 3").is_err());
        let mut s = Settings::default();
        assert!(s.set("nonsense", "1").is_err());
        assert!(s.set("eta", "abc").is_err());
        assert!(s.set("dark_total", "maybe").is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let mut s = Settings::default();
        let sample = |k: &str| match k {
            "protocol" => "original",
            "model" => "effective",
            "dark_total" => "true",
            "out" | "log_trajectories" => "x.csv",
            "n_traj" | "seed" | "m_index" | "workers" => "3",
            _ => "0.5",
        };
        for k in KEYS {
            s.set(k, sample(k)).unwrap();
        }
        assert_eq!(s.protocol, ProtocolKind::Original);
        assert_eq!(s.workers, Some(3));
    }

    #[test]
    fn dark_rate_units() {
        let mut s = Settings {
            dark_khz: 20.0,
            ..Settings::default()
        };
        assert!((s.dark_rate_per_detector() - 0.02).abs() < 1e-15);
        s.dark_total = true;
        assert!((s.dark_rate_per_detector() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn builds_campaign() {
        let s = Settings::default();
        let c = s.campaign().unwrap();
        assert_eq!(c.n_traj, 20_000);
        assert!((c.params.kappa_t - std::f64::consts::TAU * 0.265).abs() < 1e-12);
        let bad = Settings {
            branching_to_0: 1.5,
            ..Settings::default()
        };
        assert!(bad.params().is_err());
    }
}
