//! TOML experiment configuration.
//!
//! ```toml
//! [system]
//! bandwidth = "180 kHz"
//! noise_psd = "-174 dBm/Hz"
//! mining_confidence = "1-1e-10"
//!
//! [simulation]
//! rounds = 2000
//! policy = "dracs"
//!
//! [[client_type]]
//! count = 3
//! dataset_size = 1000
//! energy_supply = "600 mW"
//! ```
//!
//! Physical quantities are either bare numbers in SI base units or strings
//! with a unit suffix (`dBm`, `mW`, `GHz`, `Mbit`, `dB`, ...), converted at
//! load. Omitted keys take the values of the experimental parameter table.
//! Any key can be overridden from the environment as
//! `DRACS__SECTION__KEY=value`, or `DRACS__CLIENT_TYPE__<i>__KEY=value` for
//! the i-th client type.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;
use toml::{Spanned, Value};

use crate::fl::LearningConfig;
use crate::policies::{BaselineMode, PolicyKind};
use crate::sim::SimConfig;
use crate::sysmodel::{db_to_linear, dbm_to_watts, ClientProfile, ModelError, SystemConfig};

pub const ENV_PREFIX: &str = "DRACS__";

/// Six-client desk configuration used by the tests and acceptance suite.
pub const DESK_TOML: &str = include_str!("../../../configs/desk.toml");
/// Twenty clients with the full experimental parameter table.
pub const REFERENCE_TOML: &str = include_str!("../../../configs/reference.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{source_name}: {error}")]
    Parse { source_name: String, error: Box<toml::de::Error> },
    #[error("{origin}: {section}.{key}: {reason}")]
    Field { origin: Origin, section: String, key: String, reason: String },
    #[error("{section}: missing required key {key:?}")]
    Missing { section: String, key: String },
    #[error("invalid environment override {var}: {reason}")]
    Env { var: String, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("{0}")]
    Sim(String),
}

/// Where a value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Origin {
    File { name: String, line: usize, column: usize },
    Env(String),
    Default,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { name, line, column } => write!(f, "{name}:{line}:{column}"),
            Origin::Env(var) => write!(f, "environment {var}"),
            Origin::Default => f.write_str("default"),
        }
    }
}

#[derive(Debug, Clone)]
struct Entry {
    value: Value,
    origin: Origin,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(default)]
    system: BTreeMap<String, Spanned<Value>>,
    #[serde(default)]
    simulation: BTreeMap<String, Spanned<Value>>,
    #[serde(default)]
    learning: BTreeMap<String, Spanned<Value>>,
    #[serde(default)]
    client_type: Vec<BTreeMap<String, Spanned<Value>>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Unit {
    Frequency,
    Power,
    Psd,
    Gain,
    Bits,
    Distance,
    Energy,
    Probability,
    Plain,
}

impl Unit {
    fn si(self) -> &'static str {
        match self {
            Unit::Frequency => "Hz",
            Unit::Power => "W",
            Unit::Psd => "W/Hz",
            Unit::Bits => "bit",
            Unit::Distance => "m",
            Unit::Energy => "J",
            Unit::Gain | Unit::Probability | Unit::Plain => "",
        }
    }

    fn convert(self, number: f64, suffix: &str) -> Result<f64, String> {
        let scale = |table: &[(&str, f64)]| {
            table
                .iter()
                .find(|(name, _)| *name == suffix)
                .map(|(_, k)| number * k)
                .ok_or_else(|| {
                    let known: Vec<&str> = table.iter().map(|(n, _)| *n).collect();
                    format!("unknown unit {suffix:?} (expected one of {})", known.join(", "))
                })
        };
        match (self, suffix) {
            (_, "") => Ok(number),
            (Unit::Power, "dBm") | (Unit::Psd, "dBm/Hz") => Ok(dbm_to_watts(number)),
            (Unit::Gain, "dB") => Ok(db_to_linear(number)),
            (Unit::Frequency, _) => scale(&[("Hz", 1.0), ("kHz", 1e3), ("KHz", 1e3), ("MHz", 1e6), ("GHz", 1e9)]),
            (Unit::Power, _) => scale(&[("W", 1.0), ("mW", 1e-3), ("dBm", f64::NAN)]),
            (Unit::Psd, _) => scale(&[("W/Hz", 1.0), ("dBm/Hz", f64::NAN)]),
            (Unit::Gain, _) => scale(&[("dB", f64::NAN)]),
            (Unit::Bits, _) => scale(&[("bit", 1.0), ("kbit", 1e3), ("Mbit", 1e6), ("Gbit", 1e9)]),
            (Unit::Distance, _) => scale(&[("m", 1.0), ("km", 1e3)]),
            (Unit::Energy, _) => scale(&[("J", 1.0), ("mJ", 1e-3)]),
            (Unit::Probability | Unit::Plain, _) => Err(format!("unexpected unit {suffix:?}")),
        }
    }
}

/// Splits "12.5 GHz" into (12.5, "GHz"); accepts "1-1e-10" for probabilities.
fn parse_quantity(text: &str, unit: Unit) -> Result<f64, String> {
    let text = text.trim();
    if unit == Unit::Probability {
        if let Some(rest) = text.strip_prefix('1').map(str::trim_start).and_then(|r| r.strip_prefix('-')) {
            let x: f64 = rest.trim().parse().map_err(|_| format!("cannot parse {text:?} as 1-x"))?;
            return Ok(1.0 - x);
        }
    }
    let split = (1..=text.len())
        .rev()
        .filter(|&i| text.is_char_boundary(i))
        .find(|&i| text[..i].trim_end().parse::<f64>().is_ok())
        .ok_or_else(|| format!("cannot parse {text:?} as a number with a unit"))?;
    let number: f64 = text[..split].trim_end().parse().expect("checked above");
    unit.convert(number, text[split..].trim())
}

/// A value given with a unit suffix, with its SI equivalent.
#[derive(Debug, Clone, PartialEq)]
pub struct Conversion {
    pub field: String,
    pub given: String,
    pub si: f64,
    pub unit: &'static str,
}

impl fmt::Display for Conversion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} = {} -> {:e}", self.field, self.given, self.si)?;
        if !self.unit.is_empty() {
            write!(f, " {}", self.unit)?;
        }
        Ok(())
    }
}

struct Section<'a> {
    name: String,
    entries: BTreeMap<String, Entry>,
    conversions: &'a mut Vec<Conversion>,
}

impl Section<'_> {
    fn fail(&self, key: &str, origin: &Origin, reason: impl Into<String>) -> ConfigError {
        ConfigError::Field { origin: origin.clone(), section: self.name.clone(), key: key.into(), reason: reason.into() }
    }

    fn quantity(&mut self, key: &str, unit: Unit) -> Result<Option<f64>, ConfigError> {
        let Some(entry) = self.entries.remove(key) else { return Ok(None) };
        let value = match &entry.value {
            Value::Float(x) => *x,
            Value::Integer(i) => *i as f64,
            Value::String(s) => {
                let si = parse_quantity(s, unit).map_err(|r| self.fail(key, &entry.origin, r))?;
                self.conversions.push(Conversion {
                    field: format!("{}.{key}", self.name),
                    given: s.clone(),
                    si,
                    unit: unit.si(),
                });
                si
            }
            other => return Err(self.fail(key, &entry.origin, format!("expected a number, got {}", other.type_str()))),
        };
        if !value.is_finite() {
            return Err(self.fail(key, &entry.origin, "value is not finite"));
        }
        Ok(Some(value))
    }

    fn number(&mut self, key: &str, unit: Unit, default: f64) -> Result<f64, ConfigError> {
        Ok(self.quantity(key, unit)?.unwrap_or(default))
    }

    fn integer(&mut self, key: &str, default: u64) -> Result<u64, ConfigError> {
        let Some(entry) = self.entries.remove(key) else { return Ok(default) };
        match entry.value {
            Value::Integer(i) if i >= 0 => Ok(i as u64),
            Value::Float(x) if x >= 0.0 && x.fract() == 0.0 && x < 2f64.powi(53) => Ok(x as u64),
            other => Err(self.fail(key, &entry.origin, format!("expected a nonnegative integer, got {other}"))),
        }
    }

    fn boolean(&mut self, key: &str, default: bool) -> Result<bool, ConfigError> {
        let Some(entry) = self.entries.remove(key) else { return Ok(default) };
        match entry.value {
            Value::Boolean(b) => Ok(b),
            other => Err(self.fail(key, &entry.origin, format!("expected true or false, got {other}"))),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        let Some(entry) = self.entries.remove(key) else { return Ok(default) };
        match &entry.value {
            Value::String(s) => s.parse().map_err(|e: T::Err| self.fail(key, &entry.origin, e.to_string())),
            other => Err(self.fail(key, &entry.origin, format!("expected a string, got {}", other.type_str()))),
        }
    }

    fn finish(self) -> Result<(), ConfigError> {
        match self.entries.into_iter().next() {
            Some((key, entry)) => {
                Err(ConfigError::Field { origin: entry.origin, section: self.name, key, reason: "unknown key".into() })
            }
            None => Ok(()),
        }
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// A loaded configuration plus the unit conversions applied.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub sim: SimConfig,
    pub conversions: Vec<Conversion>,
}

pub fn load_file(path: &Path) -> Result<LoadedConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    load_str(&text, &path.display().to_string(), std::env::vars())
}

/// Parses `text`, then applies `DRACS__...` overrides from `env`.
pub fn load_str(
    text: &str,
    source_name: &str,
    env: impl IntoIterator<Item = (String, String)>,
) -> Result<LoadedConfig, ConfigError> {
    let raw: RawDoc = toml::from_str(text)
        .map_err(|error| ConfigError::Parse { source_name: source_name.into(), error: Box::new(error) })?;
    let locate = |map: BTreeMap<String, Spanned<Value>>| -> BTreeMap<String, Entry> {
        map.into_iter()
            .map(|(k, v)| {
                let (line, column) = line_column(text, v.span().start);
                let origin = Origin::File { name: source_name.into(), line, column };
                (k, Entry { value: v.into_inner(), origin })
            })
            .collect()
    };
    let mut system = locate(raw.system);
    let mut simulation = locate(raw.simulation);
    let mut learning = locate(raw.learning);
    let mut clients: Vec<_> = raw.client_type.into_iter().map(locate).collect();

    let mut overrides: Vec<(String, String)> =
        env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    overrides.sort();
    for (var, raw_value) in overrides {
        let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(str::to_ascii_lowercase).collect();
        let value = toml::from_str::<toml::Table>(&format!("v = {raw_value}"))
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(raw_value.clone()));
        let entry = Entry { value, origin: Origin::Env(var.clone()) };
        let target = match path.as_slice() {
            [section, key] => match section.as_str() {
                "system" => Some((&mut system, key)),
                "simulation" => Some((&mut simulation, key)),
                "learning" => Some((&mut learning, key)),
                _ => None,
            },
            [section, index, key] if section == "client_type" => {
                let i: usize = index
                    .parse()
                    .map_err(|_| ConfigError::Env { var: var.clone(), reason: format!("bad index {index:?}") })?;
                let len = clients.len();
                let map = clients.get_mut(i).ok_or_else(|| ConfigError::Env {
                    var: var.clone(),
                    reason: format!("only {len} client types are defined"),
                })?;
                Some((map, key))
            }
            _ => None,
        };
        let (map, key) = target.ok_or_else(|| ConfigError::Env {
            var: var.clone(),
            reason: "expected DRACS__SECTION__KEY or DRACS__CLIENT_TYPE__<i>__KEY".into(),
        })?;
        map.insert(key.clone(), entry);
    }

    let mut conversions = Vec::new();
    let system = read_system(Section { name: "system".into(), entries: system, conversions: &mut conversions })?;
    let mut sim_section = Section { name: "simulation".into(), entries: simulation, conversions: &mut conversions };
    let rounds = sim_section.integer("rounds", 2000)? as usize;
    let policy = sim_section.parsed("policy", PolicyKind::Dracs)?;
    let baseline_mode = sim_section.parsed("baseline_mode", BaselineMode::default())?;
    let metric_every = sim_section.integer("metric_every", 10)? as usize;
    let stochastic_mining = sim_section.boolean("stochastic_mining", false)?;
    let oracle = sim_section.boolean("oracle", false)?;
    sim_section.finish()?;

    let learning = read_learning(Section { name: "learning".into(), entries: learning, conversions: &mut conversions })?;

    if clients.is_empty() {
        return Err(ConfigError::Missing { section: "client_type".into(), key: "[[client_type]]".into() });
    }
    let mut profiles = Vec::new();
    for (i, entries) in clients.into_iter().enumerate() {
        let section = Section { name: format!("client_type[{i}]"), entries, conversions: &mut conversions };
        let (count, template) = read_client(section)?;
        for _ in 0..count {
            profiles.push(ClientProfile { id: profiles.len(), ..template.clone() });
        }
    }

    let sim = SimConfig {
        rounds,
        policy,
        baseline_mode,
        system,
        profiles,
        learning,
        metric_every,
        stochastic_mining,
        oracle,
    };
    sim.validate().map_err(|e| ConfigError::Sim(e.to_string()))?;
    Ok(LoadedConfig { sim, conversions })
}

fn read_system(mut s: Section) -> Result<SystemConfig, ConfigError> {
    let d = SystemConfig::reference();
    let seed = match s.integer("seed", d.rng_seed)? {
        seed if s.entries.contains_key("rng_seed") => {
            let origin = s.entries["rng_seed"].origin.clone();
            return Err(s.fail("rng_seed", &origin, format!("use either seed or rng_seed (seed = {seed})")));
        }
        seed => seed,
    };
    let cfg = SystemConfig {
        bandwidth: s.number("bandwidth", Unit::Frequency, d.bandwidth)?,
        noise_psd: s.number("noise_psd", Unit::Psd, d.noise_psd)?,
        pathloss_const: s.number("pathloss_const", Unit::Gain, d.pathloss_const)?,
        ref_distance: s.number("ref_distance", Unit::Distance, d.ref_distance)?,
        pathloss_exp: s.number("pathloss_exp", Unit::Plain, d.pathloss_exp)?,
        mining_difficulty: s.number("mining_difficulty", Unit::Plain, d.mining_difficulty)?,
        mining_confidence: s.number("mining_confidence", Unit::Probability, d.mining_confidence)?,
        local_epochs: u32::try_from(s.integer("local_epochs", d.local_epochs.into())?)
            .map_err(|_| ConfigError::Sim("local_epochs is too large".into()))?,
        step_size: s.number("step_size", Unit::Plain, d.step_size)?,
        lyapunov_v: s.number("lyapunov_v", Unit::Plain, d.lyapunov_v)?,
        dinkelbach_rel_tol: s.number("dinkelbach_rel_tol", Unit::Plain, d.dinkelbach_rel_tol)?,
        rho_min: s.number("rho_min", Unit::Plain, d.rho_min)?,
        rho_max: s.number("rho_max", Unit::Plain, d.rho_max)?,
        rng_seed: seed,
        energy_unit: s.number("energy_unit", Unit::Energy, d.energy_unit)?,
        additive_slack: s.number("additive_slack", Unit::Plain, d.additive_slack)?,
        bcd_restarts: s.integer("bcd_restarts", d.bcd_restarts as u64)? as usize,
    };
    s.finish()?;
    cfg.validate()?;
    Ok(cfg)
}

fn read_learning(mut s: Section) -> Result<LearningConfig, ConfigError> {
    let d = LearningConfig::default();
    let cfg = LearningConfig {
        dim: s.integer("dim", d.dim as u64)? as usize,
        separation: s.number("separation", Unit::Plain, d.separation)?,
        reg: s.number("reg", Unit::Plain, d.reg)?,
        test_size: s.integer("test_size", d.test_size as u64)? as usize,
    };
    s.finish()?;
    if cfg.dim == 0 || cfg.test_size == 0 {
        return Err(ConfigError::Sim("learning.dim and learning.test_size must be positive".into()));
    }
    Ok(cfg)
}

fn read_client(mut s: Section) -> Result<(usize, ClientProfile), ConfigError> {
    let count = s.integer("count", 1)? as usize;
    let required = |s: &mut Section, key: &str, unit: Unit| {
        s.quantity(key, unit)?.ok_or_else(|| ConfigError::Missing { section: s.name.clone(), key: key.into() })
    };
    let dataset_size = s.integer("dataset_size", 0)?;
    if dataset_size == 0 {
        return Err(ConfigError::Missing { section: s.name.clone(), key: "dataset_size".into() });
    }
    let profile = ClientProfile {
        id: 0,
        dataset_size,
        energy_supply: required(&mut s, "energy_supply", Unit::Power)?,
        cycles_per_sample: s.number("cycles_per_sample", Unit::Plain, 5e4)?,
        switch_cap: s.number("switch_cap", Unit::Plain, 1e-28)?,
        model_bits: s.number("model_bits", Unit::Bits, 1e6)?,
        distance: s.number("distance", Unit::Distance, 200.0)?,
        f_min: s.number("f_min", Unit::Frequency, 1e9)?,
        f_max: s.number("f_max", Unit::Frequency, 4e9)?,
        p_min: s.number("p_min", Unit::Power, dbm_to_watts(23.0))?,
        p_max: s.number("p_max", Unit::Power, dbm_to_watts(30.0))?,
    };
    s.finish()?;
    profile.validate()?;
    Ok((count, profile))
}

pub fn desk() -> SimConfig {
    load_str(DESK_TOML, "desk.toml", std::iter::empty()).expect("bundled desk config is valid").sim
}

pub fn reference() -> LoadedConfig {
    load_str(REFERENCE_TOML, "reference.toml", std::iter::empty()).expect("bundled reference config is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<LoadedConfig, ConfigError> {
        load_str(text, "test.toml", std::iter::empty())
    }

    const MINIMAL: &str = "[[client_type]]\ndataset_size = 1000\nenergy_supply = \"600 mW\"\n";

    #[test]
    fn unit_conversions() {
        assert_eq!(parse_quantity("30 dBm", Unit::Power).unwrap(), 1.0);
        let n0 = parse_quantity("-174 dBm/Hz", Unit::Psd).unwrap();
        assert!((n0 - 3.981e-21).abs() < 1e-24);
        assert_eq!(parse_quantity("180 kHz", Unit::Frequency).unwrap(), 180e3);
        assert_eq!(parse_quantity("180KHz", Unit::Frequency).unwrap(), 180e3);
        assert_eq!(parse_quantity("-30 dB", Unit::Gain).unwrap(), 1e-3);
        assert_eq!(parse_quantity("1 Mbit", Unit::Bits).unwrap(), 1e6);
        assert_eq!(parse_quantity("600 mW", Unit::Power).unwrap(), 0.6);
        assert_eq!(parse_quantity("1 mJ", Unit::Energy).unwrap(), 1e-3);
        assert_eq!(parse_quantity("1-1e-10", Unit::Probability).unwrap(), 1.0 - 1e-10);
        assert_eq!(parse_quantity("0.5", Unit::Probability).unwrap(), 0.5);
        assert!(parse_quantity("3 parsecs", Unit::Distance).is_err());
        assert!(parse_quantity("4 GHz", Unit::Power).is_err());
    }

    #[test]
    fn defaults_are_the_parameter_table() {
        let cfg = load(MINIMAL).unwrap().sim;
        assert_eq!(cfg.system, SystemConfig::reference());
        assert_eq!(cfg.profiles.len(), 1);
        assert_eq!(cfg.profiles[0].p_max, 1.0);
        assert_eq!(cfg.rounds, 2000);
    }

    #[test]
    fn count_expands_client_types() {
        let cfg = desk();
        assert_eq!(cfg.profiles.len(), 6);
        assert_eq!(cfg.profiles.iter().map(|p| p.id).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4, 5]);
        assert_eq!(cfg.profiles.iter().filter(|p| p.dataset_size == 4000).count(), 3);
        assert_eq!(reference().sim.profiles.len(), 20);
    }

    #[test]
    fn errors_point_at_the_line() {
        let text = "[system]\nbandwidth = \"180 kHz\"\nnoise_psd = \"-174 furlongs\"\n";
        match load(text) {
            Err(ConfigError::Field { origin: Origin::File { line, column, .. }, key, .. }) => {
                assert_eq!((line, column, key.as_str()), (3, 13, "noise_psd"));
            }
            other => panic!("unexpected {other:?}"),
        }
        let unknown = format!("{MINIMAL}[simulation]\nroundz = 3\n");
        assert!(matches!(load(&unknown), Err(ConfigError::Field { key, .. }) if key == "roundz"));
        let syntax = load("[system\n");
        assert!(matches!(syntax, Err(ConfigError::Parse { .. })));
        assert!(syntax.unwrap_err().to_string().contains("line 1"));
        assert!(matches!(load("[[client_type]]\ndataset_size = 5\n"), Err(ConfigError::Missing { .. })));
    }

    #[test]
    fn environment_overrides() {
        let env = vec![
            ("DRACS__SYSTEM__LYAPUNOV_V".to_string(), "5e4".to_string()),
            ("DRACS__SIMULATION__POLICY".to_string(), "cs".to_string()),
            ("DRACS__CLIENT_TYPE__0__ENERGY_SUPPLY".to_string(), "200 mW".to_string()),
            ("UNRELATED".to_string(), "x".to_string()),
        ];
        let cfg = load_str(MINIMAL, "t", env).unwrap().sim;
        assert_eq!(cfg.system.lyapunov_v, 5e4);
        assert_eq!(cfg.policy, PolicyKind::Cs);
        assert_eq!(cfg.profiles[0].energy_supply, 0.2);

        let bad = vec![("DRACS__CLIENT_TYPE__3__COUNT".to_string(), "1".to_string())];
        assert!(matches!(load_str(MINIMAL, "t", bad), Err(ConfigError::Env { .. })));
        let bad_value = vec![("DRACS__SYSTEM__BANDWIDTH".to_string(), "wide".to_string())];
        match load_str(MINIMAL, "t", bad_value) {
            Err(ConfigError::Field { origin: Origin::Env(var), .. }) => assert_eq!(var, "DRACS__SYSTEM__BANDWIDTH"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn conversions_are_reported() {
        let conv = reference().conversions;
        let p_max = conv.iter().find(|c| c.field == "client_type[0].p_max").unwrap();
        assert_eq!(p_max.si, 1.0);
        assert_eq!(p_max.to_string(), "client_type[0].p_max = 30 dBm -> 1e0 W");
    }
}
