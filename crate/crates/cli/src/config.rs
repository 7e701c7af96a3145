//! Flat `key = value` experiment files.
//!
//! Rates and times are in units of the thermal excitation rate `γN̄`, so `γ`
//! defaults to `1/N̄`. Blank lines and `#` comments are ignored.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use qjump_core::hilbert::HilbertSpec;
use qjump_core::lindblad::SimParams;
use qjump_core::regimes;
use qjump_core::sme::{Frame, PhononDistribution};
use qjump_core::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Full,
    Adiabatic,
    Lindblad,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Ground,
    Fock(usize),
    Thermal(f64),
}

impl Initial {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "ground" {
            return Ok(Initial::Ground);
        }
        if let Some(n) = s.strip_prefix("fock:") {
            return Ok(Initial::Fock(n.trim().parse().context("fock level")?));
        }
        if let Some(n) = s.strip_prefix("thermal:") {
            return Ok(Initial::Thermal(n.trim().parse().context("thermal occupation")?));
        }
        bail!("initial state {s:?} is not ground, fock:<n> or thermal:<N>")
    }

    /// Phonon populations on `len` levels.
    pub fn populations(&self, len: usize) -> Result<PhononDistribution> {
        let p = match self {
            Initial::Ground => PhononDistribution::fock(0, len - 1)?,
            Initial::Fock(n) => PhononDistribution::fock(*n, len - 1)?,
            Initial::Thermal(nbar) => stats::thermal_distribution(*nbar, len - 1)?,
        };
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: RunMode,
    /// Cavity frame for `mode = full`.
    pub frame: Frame,
    pub params: SimParams,
    pub spec: HilbertSpec,
    pub n_max: usize,
    pub initial: Initial,
    pub window: f64,
    pub trajectories: usize,
    pub sample_every: usize,
    pub output: PathBuf,
}

const KEYS: &[&str] = &[
    "mode",
    "frame",
    "nbar",
    "gamma",
    "kappa",
    "chi",
    "Gamma",
    "eta",
    "dt",
    "t_final",
    "seed",
    "n_max",
    "cavity_dim",
    "mech_dim",
    "initial",
    "window",
    "trajectories",
    "sample_every",
    "output",
];

/// Parses `key = value` lines into a map, rejecting unknown or repeated keys.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", i + 1))?;
        insert(&mut map, k.trim(), v.trim()).with_context(|| format!("line {}", i + 1))?;
    }
    Ok(map)
}

fn insert(map: &mut BTreeMap<String, String>, k: &str, v: &str) -> Result<()> {
    if !KEYS.contains(&k) {
        bail!("unknown key {k:?}");
    }
    if map.insert(k.to_string(), v.to_string()).is_some() {
        bail!("key {k:?} given twice");
    }
    Ok(())
}

/// Applies `key=value` overrides on top of a parsed file.
pub fn apply_overrides(map: &mut BTreeMap<String, String>, overrides: &[String]) -> Result<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| anyhow!("override {o:?} is not key=value"))?;
        map.remove(k.trim());
        insert(map, k.trim(), v.trim())?;
    }
    Ok(())
}

fn get<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<Option<T>>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    map.get(key)
        .map(|v| v.parse::<T>().with_context(|| format!("{key} = {v:?}")))
        .transpose()
}

fn require<T: std::str::FromStr>(map: &BTreeMap<String, String>, key: &str) -> Result<T>
where
    T::Err: std::error::Error + Send + Sync + 'static,
{
    get(map, key)?.ok_or_else(|| anyhow!("missing key {key:?}"))
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut map = parse_pairs(&text)?;
        apply_overrides(&mut map, overrides)?;
        Self::from_map(&map)
    }

    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self> {
        let mode = match map.get("mode").map(String::as_str).unwrap_or("adiabatic") {
            "full" => RunMode::Full,
            "adiabatic" => RunMode::Adiabatic,
            "lindblad" => RunMode::Lindblad,
            other => bail!("mode {other:?} is not full, adiabatic or lindblad"),
        };
        let nbar: f64 = require(map, "nbar")?;
        let gamma = match get::<f64>(map, "gamma")? {
            Some(g) => g,
            None if nbar > 0.0 => 1.0 / nbar,
            None => bail!("nbar = 0 needs an explicit gamma"),
        };
        let kappa: f64 = require(map, "kappa")?;
        let chi = match (get::<f64>(map, "chi")?, get::<f64>(map, "Gamma")?) {
            (Some(c), None) => c,
            (None, Some(g)) if g >= 0.0 && kappa > 0.0 => (g * kappa).sqrt(),
            (None, Some(g)) => bail!("Gamma = {g} needs kappa > 0 and Gamma ≥ 0"),
            (Some(_), Some(_)) => bail!("give chi or Gamma, not both"),
            (None, None) => bail!("missing key \"chi\" (or \"Gamma\")"),
        };
        let frame = match map.get("frame").map(String::as_str).unwrap_or("auto") {
            "auto" => Frame::Auto,
            "lab" => Frame::Lab,
            "moving" => Frame::Moving,
            "pointer" => Frame::Pointer,
            other => bail!("frame {other:?} is not auto, lab, moving or pointer"),
        };
        let n_max: usize = get(map, "n_max")?.unwrap_or(1);
        let auto = HilbertSpec::auto(chi / kappa, n_max);
        let default_mech = if mode == RunMode::Full {
            regimes::FULL_MECH_DIM.max(n_max + 2)
        } else {
            regimes::thermal_cutoff(nbar, 1e-6).max(n_max) + 1
        };
        let cavity_dim = get(map, "cavity_dim")?.unwrap_or(match mode {
            RunMode::Full => regimes::full_cavity_dim(chi / kappa),
            RunMode::Adiabatic => 2,
            RunMode::Lindblad => auto.cavity_dim(),
        });
        let mech_dim = get(map, "mech_dim")?.unwrap_or(default_mech);
        let spec = HilbertSpec::new(cavity_dim, mech_dim)?;
        let dt = match get::<f64>(map, "dt")? {
            Some(dt) => dt,
            None => SimParams::default_dt(kappa, gamma, nbar, chi, mech_dim - 1, mode != RunMode::Adiabatic),
        };
        let params = SimParams {
            kappa,
            gamma,
            nbar,
            chi,
            eta: get(map, "eta")?.unwrap_or(1.0),
            dt,
            t_final: require(map, "t_final")?,
            seed: get(map, "seed")?.unwrap_or(1),
        };
        params.validate(mode != RunMode::Adiabatic)?;
        let initial = match map.get("initial") {
            Some(s) => Initial::parse(s)?,
            None => Initial::Ground,
        };
        let window = get(map, "window")?.unwrap_or(0.1 / regimes::thermalization_rate(1, nbar, gamma));
        let trajectories = get(map, "trajectories")?.unwrap_or(1);
        if trajectories == 0 {
            bail!("trajectories must be at least 1");
        }
        let sample_every = get(map, "sample_every")?
            .unwrap_or(((regimes::SAMPLE_SPACING / dt).round() as usize).max(1));
        let output = map.get("output").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("run.csv"));
        Ok(Self {
            mode,
            frame,
            params,
            spec,
            n_max,
            initial,
            window,
            trajectories,
            sample_every,
            output,
        })
    }
}
