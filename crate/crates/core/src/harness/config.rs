//! Run configuration: strict JSON parsing, defaults and validation.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinetic::{Coupling, NoiseMode};
use crate::vmf::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Coeffs,
    Gci,
    Kinetic,
    Spherefp,
    Soh,
    Compare,
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Coeffs => "coeffs",
            Scenario::Gci => "gci",
            Scenario::Kinetic => "kinetic",
            Scenario::Spherefp => "spherefp",
            Scenario::Soh => "soh",
            Scenario::Compare => "compare",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::Config(format!("unknown scenario `{s}`")))
    }
}

fn half() -> f64 {
    0.5
}
fn one() -> f64 {
    1.0
}
fn bump_width() -> f64 {
    0.4
}

/// Named initial-condition presets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Uniform positions and isotropic velocities (flat rho, fixed Omega for SOH).
    Uniform,
    /// Von Mises-Fisher velocities; `l` defaults to the fixed point.
    Vmf {
        #[serde(default)]
        l: Option<f64>,
        #[serde(default)]
        omega: Option<Vec<f64>>,
    },
    /// rho = background + amplitude exp(-(x - L/2)^2 / (2 width^2)) along
    /// the first axis, Omega at angle angle_amplitude sin(2 pi x / L).
    GaussianBump {
        #[serde(default = "half")]
        background: f64,
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "bump_width")]
        width: f64,
        #[serde(default = "half")]
        angle_amplitude: f64,
    },
    /// Angular density proportional to 1 + bias cos(theta).
    BiasedAngular {
        #[serde(default = "half")]
        bias: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSection {
    pub d: usize,
    pub r: f64,
    pub beta: f64,
    pub sigma: f64,
    pub epsilons: Vec<f64>,
}

impl ModelSection {
    pub fn params(&self, epsilon: f64) -> Result<ModelParams> {
        ModelParams::new(self.d, self.r, self.beta, self.sigma, epsilon)
    }

    /// Parameters at the first epsilon.
    pub fn primary(&self) -> Result<ModelParams> {
        self.params(self.epsilons[0])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discretization {
    pub particles: usize,
    pub dt: Option<f64>,
    /// Kinetic steps never exceed this multiple of epsilon^2.
    pub dt_over_eps2: f64,
    pub t_final: f64,
    pub cells: usize,
    pub soh_cells: usize,
    /// Galerkin size for chi; 0 refines until k_d settles.
    pub resolution: usize,
    pub modes: usize,
    pub length: f64,
    pub spatial_dim: usize,
    pub output_every: usize,
    pub cfl: f64,
    pub histogram_bins: usize,
    pub noise: NoiseMode,
    pub coupling: Coupling,
    /// Compare runs refine the kinetic cells in proportion to
    /// largest_eps / eps and average back onto `cells` before measuring.
    pub refine_cells_with_eps: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Gates {
    pub order_parameter_tol: Option<f64>,
    pub noise_control: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub model: ModelSection,
    pub discretization: Discretization,
    pub initial: InitialCondition,
    pub sweep: Vec<f64>,
    pub gates: Gates,
    pub output: PathBuf,
    pub seed: u64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModel {
    d: Option<usize>,
    r: Option<f64>,
    beta: Option<f64>,
    sigma: Option<f64>,
    epsilon: Option<f64>,
    epsilons: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDisc {
    particles: Option<usize>,
    dt: Option<f64>,
    dt_over_eps2: Option<f64>,
    t_final: Option<f64>,
    cells: Option<usize>,
    soh_cells: Option<usize>,
    resolution: Option<usize>,
    modes: Option<usize>,
    length: Option<f64>,
    spatial_dim: Option<usize>,
    output_every: Option<usize>,
    cfl: Option<f64>,
    histogram_bins: Option<usize>,
    noise: Option<NoiseMode>,
    coupling: Option<Coupling>,
    refine_cells_with_eps: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweep {
    sigma_over_r2: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGates {
    order_parameter_tol: Option<f64>,
    noise_control: Option<bool>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Option<Scenario>,
    model: Option<RawModel>,
    discretization: Option<RawDisc>,
    initial: Option<InitialCondition>,
    sweep: Option<RawSweep>,
    gates: Option<RawGates>,
    output: Option<PathBuf>,
    seed: Option<u64>,
}

pub fn parse_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    resolve(raw)
}

fn default_sweep() -> Vec<f64> {
    (1..=60).map(|i| i as f64 * 0.01).collect()
}

fn resolve(raw: RawConfig) -> Result<RunConfig> {
    let mut missing: Vec<&str> = Vec::new();
    let scenario = raw.scenario;
    if scenario.is_none() {
        missing.push("scenario");
    }
    let model = raw.model.unwrap_or(RawModel {
        d: None,
        r: None,
        beta: None,
        sigma: None,
        epsilon: None,
        epsilons: None,
    });
    let disc = raw.discretization.unwrap_or_default();
    for (key, present) in [
        ("model.d", model.d.is_some()),
        ("model.r", model.r.is_some()),
        ("model.sigma", model.sigma.is_some()),
    ] {
        if !present {
            missing.push(key);
        }
    }
    let has_eps = model.epsilon.is_some() || model.epsilons.is_some();
    match scenario {
        Some(Scenario::Kinetic) => {
            for (key, present) in [
                ("model.epsilon", has_eps),
                ("discretization.particles", disc.particles.is_some()),
                ("discretization.dt", disc.dt.is_some()),
                ("discretization.t_final", disc.t_final.is_some()),
            ] {
                if !present {
                    missing.push(key);
                }
            }
        }
        Some(Scenario::Spherefp) => {
            for (key, present) in [
                ("discretization.dt", disc.dt.is_some()),
                ("discretization.t_final", disc.t_final.is_some()),
            ] {
                if !present {
                    missing.push(key);
                }
            }
        }
        Some(Scenario::Soh) => {
            if disc.t_final.is_none() {
                missing.push("discretization.t_final");
            }
        }
        Some(Scenario::Compare) => {
            for (key, present) in [
                ("model.epsilons", model.epsilons.is_some()),
                ("discretization.particles", disc.particles.is_some()),
                ("discretization.t_final", disc.t_final.is_some()),
            ] {
                if !present {
                    missing.push(key);
                }
            }
        }
        _ => {}
    }
    if !missing.is_empty() {
        return Err(Error::Config(format!("missing required keys: {}", missing.join(", "))));
    }
    let scenario = scenario.unwrap();

    let epsilons = match (model.epsilon, model.epsilons) {
        (Some(_), Some(_)) => {
            return Err(Error::Config("give either model.epsilon or model.epsilons, not both".into()))
        }
        (Some(e), None) => vec![e],
        (None, Some(list)) => list,
        (None, None) => vec![1.0],
    };
    if scenario == Scenario::Compare && epsilons.len() < 2 {
        return Err(Error::Config(
            "model.epsilons: the compare scenario needs at least 2 values".into(),
        ));
    }
    let mut epsilons = epsilons;
    if scenario == Scenario::Compare {
        epsilons.sort_by(|a, b| b.total_cmp(a));
        if epsilons.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("model.epsilons: values must be distinct".into()));
        }
    }

    let is_compare = scenario == Scenario::Compare;
    let cfg = RunConfig {
        scenario,
        model: ModelSection {
            d: model.d.unwrap(),
            r: model.r.unwrap(),
            beta: model.beta.unwrap_or(1.0),
            sigma: model.sigma.unwrap(),
            epsilons,
        },
        discretization: Discretization {
            particles: disc.particles.unwrap_or(0),
            dt: disc.dt,
            dt_over_eps2: disc.dt_over_eps2.unwrap_or(0.125),
            t_final: disc.t_final.unwrap_or(0.0),
            cells: disc.cells.unwrap_or(32),
            soh_cells: disc.soh_cells.unwrap_or(8192),
            resolution: disc.resolution.unwrap_or(0),
            modes: disc.modes.unwrap_or(64),
            length: disc.length.unwrap_or(if is_compare { 4.0 } else { 1.0 }),
            spatial_dim: disc.spatial_dim.unwrap_or(1),
            output_every: disc.output_every.unwrap_or(100),
            cfl: disc.cfl.unwrap_or(0.4),
            histogram_bins: disc.histogram_bins.unwrap_or(40),
            noise: disc.noise.unwrap_or(if is_compare { NoiseMode::MomentumConserving } else { NoiseMode::Independent }),
            coupling: disc.coupling.unwrap_or_default(),
            refine_cells_with_eps: disc.refine_cells_with_eps.unwrap_or(is_compare),
        },
        initial: raw.initial.unwrap_or(match scenario {
            Scenario::Spherefp => InitialCondition::BiasedAngular { bias: 0.5 },
            Scenario::Soh | Scenario::Compare => InitialCondition::GaussianBump {
                background: 0.5,
                amplitude: 1.0,
                width: 0.4,
                angle_amplitude: 0.5,
            },
            _ => InitialCondition::Uniform,
        }),
        sweep: raw.sweep.and_then(|s| s.sigma_over_r2).unwrap_or_else(default_sweep),
        gates: {
            let g = raw.gates.unwrap_or_default();
            Gates {
                order_parameter_tol: g.order_parameter_tol,
                noise_control: g.noise_control.unwrap_or(true),
            }
        },
        output: raw.output.unwrap_or_else(|| PathBuf::from("out")),
        seed: raw.seed.unwrap_or(1),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let m = &self.model;
        if m.d < 2 {
            return Err(Error::Config(format!("model.d must be at least 2, got {}", m.d)));
        }
        positive("model.r", m.r)?;
        positive("model.beta", m.beta)?;
        positive("model.sigma", m.sigma)?;
        for e in &m.epsilons {
            positive("model.epsilon", *e)?;
        }
        let disc = &self.discretization;
        let s = self.scenario;
        if matches!(s, Scenario::Kinetic | Scenario::Spherefp | Scenario::Soh | Scenario::Compare) {
            positive("discretization.t_final", disc.t_final)?;
        }
        if let Some(dt) = disc.dt {
            positive("discretization.dt", dt)?;
        }
        positive("discretization.dt_over_eps2", disc.dt_over_eps2)?;
        positive("discretization.length", disc.length)?;
        if matches!(s, Scenario::Kinetic | Scenario::Compare) && disc.particles == 0 {
            return Err(Error::Config("discretization.particles must be positive".into()));
        }
        if disc.cells < 3 {
            return Err(Error::Config("discretization.cells must be at least 3".into()));
        }
        if !(disc.cfl > 0.0 && disc.cfl <= crate::soh::CFL_MAX) {
            return Err(Error::Config(format!(
                "discretization.cfl must lie in (0, {}]",
                crate::soh::CFL_MAX
            )));
        }
        if disc.histogram_bins == 0 || disc.modes == 0 || disc.output_every == 0 {
            return Err(Error::Config(
                "discretization.histogram_bins, modes and output_every must be positive".into(),
            ));
        }
        match s {
            Scenario::Kinetic if disc.spatial_dim > 2 || disc.spatial_dim > m.d => {
                return Err(Error::Config("discretization.spatial_dim must be 0, 1 or 2 and at most d".into()))
            }
            Scenario::Soh if !(1..=2).contains(&disc.spatial_dim) || disc.spatial_dim > m.d => {
                return Err(Error::Config("discretization.spatial_dim must be 1 or 2 for soh".into()))
            }
            Scenario::Spherefp if !(2..=3).contains(&m.d) => {
                return Err(Error::Config("spherefp supports d = 2 and d = 3".into()))
            }
            Scenario::Compare => {
                if disc.soh_cells % disc.cells != 0 {
                    return Err(Error::Config(
                        "discretization.soh_cells must be a multiple of discretization.cells".into(),
                    ));
                }
                if m.epsilons.iter().any(|&e| disc.soh_cells % (disc.cells * self.kinetic_refinement(e)) != 0) {
                    return Err(Error::Config(
                        "discretization.soh_cells must be a multiple of the refined kinetic cell counts".into(),
                    ));
                }
                if disc.spatial_dim != 1 {
                    return Err(Error::Config("compare runs in one spatial dimension".into()));
                }
            }
            Scenario::Coeffs => {
                if self.sweep.is_empty() {
                    return Err(Error::Config("sweep.sigma_over_r2 must not be empty".into()));
                }
                for v in &self.sweep {
                    positive("sweep.sigma_over_r2", *v)?;
                }
            }
            _ => {}
        }
        if matches!(s, Scenario::Gci | Scenario::Soh | Scenario::Compare) {
            let p = m.primary()?;
            if !p.is_subcritical() {
                return Err(Error::Config(format!(
                    "sigma/r^2 = {} must be below 1/d for the {} scenario",
                    p.sigma_over_r2(),
                    s.name()
                )));
            }
        }
        match &self.initial {
            InitialCondition::Vmf { l, omega } => {
                if let Some(l) = l {
                    if !(*l >= 0.0 && l.is_finite()) {
                        return Err(Error::Config("initial.l must be nonnegative".into()));
                    }
                }
                if let Some(w) = omega {
                    if w.len() != m.d || w.iter().all(|x| *x == 0.0) {
                        return Err(Error::Config("initial.omega must be a nonzero vector of length d".into()));
                    }
                }
            }
            InitialCondition::GaussianBump { background, amplitude, width, .. } => {
                positive("initial.background", *background)?;
                positive("initial.width", *width)?;
                if !(*amplitude >= 0.0) {
                    return Err(Error::Config("initial.amplitude must be nonnegative".into()));
                }
            }
            InitialCondition::BiasedAngular { bias } => {
                if !(bias.abs() < 1.0) {
                    return Err(Error::Config("initial.bias must lie in (-1, 1)".into()));
                }
            }
            InitialCondition::Uniform => {}
        }
        Ok(())
    }

    /// Factor by which compare runs refine the kinetic cells at `eps`.
    pub fn kinetic_refinement(&self, eps: f64) -> usize {
        if self.discretization.refine_cells_with_eps {
            (self.model.epsilons[0] / eps).round().max(1.0) as usize
        } else {
            1
        }
    }

    /// Kinetic step for a given epsilon: the configured dt capped at
    /// dt_over_eps2 * eps^2, shrunk so that it divides t_final.
    pub fn kinetic_dt(&self, eps: f64) -> (f64, usize) {
        let cap = self.discretization.dt_over_eps2 * eps * eps;
        let dt = self.discretization.dt.map_or(cap, |d| d.min(cap));
        let steps = (self.discretization.t_final / dt).ceil().max(1.0) as usize;
        (self.discretization.t_final / steps as f64, steps)
    }
}
