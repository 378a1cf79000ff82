//! TOML scenario configuration: sections [grid], [evolution], [profiles], [scenario].

use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::EvolutionConfig;
use crate::error::{Error, Result};
use crate::grid::{make_grid, OuterBc, RadialGrid};
use crate::profiles::SourceRoute;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub r_max: f64,
    pub m: usize,
    pub stretch: f64,
    /// outer condition for the linearized operator and the defect correction
    pub bc: OuterBc,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { dim: 3, r_max: 100.0, m: 4000, stretch: 3.0, bc: OuterBc::GroundStateRobin }
    }
}

impl GridConfig {
    pub fn build(&self) -> Result<Arc<RadialGrid>> {
        make_grid(self.dim, self.r_max, self.m, self.stretch)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilesConfig {
    /// sign of the special solution (profiles and special runs)
    pub a: f64,
    /// order of W_k^a
    pub k: usize,
    /// starting time t₀; when absent the start is s₀ = e^{−e₀t₀}
    pub t0: Option<f64>,
    pub s0: f64,
    pub route: SourceRoute,
    /// times at which the profiles report evaluates ‖ε_k(t)‖_{Ḣ¹}
    pub t_list: Vec<f64>,
    /// remove the discrete Y₋ forcing of W from the initial data
    pub correct_defect: bool,
    pub decades: f64,
    pub points: usize,
    /// signs covered by the profiles scenario
    pub signs: Vec<f64>,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        ProfilesConfig {
            a: -1.0,
            k: 3,
            t0: None,
            s0: 0.02,
            route: SourceRoute::Series,
            t_list: Vec::new(),
            correct_defect: true,
            decades: 5.0,
            points: 40,
            signs: vec![-1.0, 1.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioName {
    Ground,
    Spectrum,
    Profiles,
    Evolve,
    ClassifySub,
    ClassifyCrit,
    ClassifySuper,
    SpecialMinus,
    SpecialPlus,
    Rates,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 10] = [
        ScenarioName::Ground,
        ScenarioName::Spectrum,
        ScenarioName::Profiles,
        ScenarioName::Evolve,
        ScenarioName::ClassifySub,
        ScenarioName::ClassifyCrit,
        ScenarioName::ClassifySuper,
        ScenarioName::SpecialMinus,
        ScenarioName::SpecialPlus,
        ScenarioName::Rates,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::Ground => "ground",
            ScenarioName::Spectrum => "spectrum",
            ScenarioName::Profiles => "profiles",
            ScenarioName::Evolve => "evolve",
            ScenarioName::ClassifySub => "classify-sub",
            ScenarioName::ClassifyCrit => "classify-crit",
            ScenarioName::ClassifySuper => "classify-super",
            ScenarioName::SpecialMinus => "special-minus",
            ScenarioName::SpecialPlus => "special-plus",
            ScenarioName::Rates => "rates",
        }
    }

    /// CLI subcommand that runs this scenario.
    pub fn family(self) -> &'static str {
        match self {
            ScenarioName::ClassifySub | ScenarioName::ClassifyCrit | ScenarioName::ClassifySuper => "classify",
            ScenarioName::SpecialMinus | ScenarioName::SpecialPlus => "special",
            other => other.as_str(),
        }
    }
}

impl FromStr for ScenarioName {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }
}

impl std::fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: Option<ScenarioName>,
    pub seed: u64,
    /// initial data of `evolve`: W | scaledW:c | profile:a,k,t0 | file:path
    pub init: String,
    /// classify-sub/super amplitude: u₀ = (1 ∓ δ)W
    pub delta: f64,
    /// classify-crit symmetry element
    pub theta: f64,
    pub mu: f64,
    /// classify horizon
    pub t_end: f64,
    /// grid sizes for the two-resolution blow-up comparison
    pub resolutions: Vec<usize>,
    /// max |t*₁ − t*₂|/t* between resolutions
    pub t_star_agreement: f64,
    pub coercivity_trials: usize,
    /// second grid size for the eigenvalue drift (default 2M)
    pub drift_m: Option<usize>,
    /// special runs: forward and backward horizons in units of 1/e₀
    pub horizon: f64,
    pub backward_horizon: f64,
    /// observer stride of the forward special runs
    pub stride: usize,
    pub virial_radius: f64,
    pub virial_t_end: f64,
    pub virial_stride: usize,
    /// special-minus backward: final potential ratio bound
    pub dispersal_ratio: f64,
    /// rates: seeded modulation samples around W
    pub neighborhood_samples: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            name: None,
            seed: 0,
            init: "W".into(),
            delta: 0.05,
            theta: 1.0,
            mu: 1.3,
            t_end: 10.0,
            resolutions: vec![4000, 8000],
            t_star_agreement: 0.05,
            coercivity_trials: 200,
            drift_m: None,
            horizon: 16.0,
            backward_horizon: 40.0,
            stride: 100,
            virial_radius: 10.0,
            virial_t_end: 8.0,
            virial_stride: 10,
            dispersal_ratio: 0.05,
            neighborhood_samples: 12,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub grid: GridConfig,
    pub evolution: EvolutionConfig,
    pub profiles: ProfilesConfig,
    pub scenario: ScenarioConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Resolve the scenario to run under a CLI subcommand: the configured
    /// name if it belongs to the family, otherwise the family default.
    pub fn resolve(&self, family: &str) -> Result<ScenarioName> {
        if let Some(n) = self.scenario.name {
            if n.family() != family {
                return Err(Error::Config(format!("scenario '{n}' cannot run under '{family}'")));
            }
            return Ok(n);
        }
        match family {
            "classify" => Ok(ScenarioName::ClassifySub),
            "special" => Ok(if self.profiles.a > 0.0 { ScenarioName::SpecialPlus } else { ScenarioName::SpecialMinus }),
            f => f.parse(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(3..=5).contains(&self.grid.dim) {
            return bad(format!("grid.dim = {} must be 3, 4 or 5", self.grid.dim));
        }
        if self.profiles.k == 0 {
            return bad("profiles.k must be at least 1".into());
        }
        if !(self.profiles.s0 > 0.0 && self.profiles.s0 < 1.0) {
            return bad(format!("profiles.s0 = {} must lie in (0, 1)", self.profiles.s0));
        }
        if !(self.scenario.delta > 0.0 && self.scenario.delta < 1.0) {
            return bad(format!("scenario.delta = {} must lie in (0, 1)", self.scenario.delta));
        }
        if !(self.scenario.mu > 0.0) {
            return bad("scenario.mu must be positive".into());
        }
        if self.scenario.resolutions.len() < 2 {
            return bad("scenario.resolutions needs two grid sizes".into());
        }
        if self.scenario.coercivity_trials == 0 || self.scenario.stride == 0 || self.scenario.virial_stride == 0 {
            return bad("trial counts and strides must be positive".into());
        }
        self.evolution.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Initial data of the `evolve` scenario.
#[derive(Clone, Debug, PartialEq)]
pub enum InitSpec {
    W,
    ScaledW(f64),
    Profile { a: f64, k: usize, t0: f64 },
    File(String),
}

impl FromStr for InitSpec {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let err = || Error::Config(format!("bad init '{s}': expected W | scaledW:c | profile:a,k,t0 | file:path"));
        let s = s.trim();
        if s == "W" {
            return Ok(InitSpec::W);
        }
        let (head, rest) = s.split_once(':').ok_or_else(err)?;
        match head {
            "scaledW" => rest.trim().parse().map(InitSpec::ScaledW).map_err(|_| err()),
            "profile" => {
                let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
                if parts.len() != 3 {
                    return Err(err());
                }
                Ok(InitSpec::Profile {
                    a: parts[0].parse().map_err(|_| err())?,
                    k: parts[1].parse().map_err(|_| err())?,
                    t0: parts[2].parse().map_err(|_| err())?,
                })
            }
            "file" if !rest.is_empty() => Ok(InitSpec::File(rest.to_string())),
            _ => Err(err()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = Config::default();
        assert_eq!(Config::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn init_specs() {
        assert_eq!("W".parse::<InitSpec>().unwrap(), InitSpec::W);
        assert_eq!("scaledW:0.9".parse::<InitSpec>().unwrap(), InitSpec::ScaledW(0.9));
        assert_eq!(
            "profile:-1, 3, 2.5".parse::<InitSpec>().unwrap(),
            InitSpec::Profile { a: -1.0, k: 3, t0: 2.5 }
        );
        assert_eq!("file:a/b.csv".parse::<InitSpec>().unwrap(), InitSpec::File("a/b.csv".into()));
        assert!("scaledW:x".parse::<InitSpec>().is_err());
        assert!("gauss".parse::<InitSpec>().is_err());
    }
}
