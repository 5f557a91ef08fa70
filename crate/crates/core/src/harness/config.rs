//! TOML experiment configuration. Unknown keys are rejected.

use crate::bloch::{preset_alpha, OracleSettings, QuasiMomentum};
use crate::duhamel::{DuhamelSettings, Method};
use crate::error::{BoltzError, Result};
use crate::phasespace::WavepacketSpec;
use crate::symbolcalc::{ComplexGaussian, GaussianPotential, SymbolPair};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Zeroth,
    FirstCancel,
    ThetaMean,
    ThetaMeanFamily,
    SecondOrder,
    DuhamelVsOracle,
    AlphaAverage,
    Wavepacket,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Zeroth,
        Experiment::FirstCancel,
        Experiment::ThetaMean,
        Experiment::ThetaMeanFamily,
        Experiment::SecondOrder,
        Experiment::DuhamelVsOracle,
        Experiment::AlphaAverage,
        Experiment::Wavepacket,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Zeroth => "zeroth",
            Experiment::FirstCancel => "first-cancel",
            Experiment::ThetaMean => "theta-mean",
            Experiment::ThetaMeanFamily => "theta-mean-family",
            Experiment::SecondOrder => "second-order",
            Experiment::DuhamelVsOracle => "duhamel-vs-oracle",
            Experiment::AlphaAverage => "alpha-average",
            Experiment::Wavepacket => "wavepacket",
        }
    }

    /// What the experiment compares, for `boltzgrad list`.
    pub fn anchor(self) -> &'static str {
        match self {
            Experiment::Zeroth => "Bloch-projected pairing I00 against <a, b>",
            Experiment::FirstCancel => "first-order coefficient Q1 against zero, relative to Q0",
            Experiment::ThetaMean => "horocycle mean of |theta|^2 against its closed-form limit",
            Experiment::ThetaMeanFamily => "horocycle mean of the (u, eta)-dependent family F_r against its limit",
            Experiment::SecondOrder => "Q2 (theta route) against the collision pairing <L2(t)a, b>",
            Experiment::DuhamelVsOracle => "matrix oracle against Q0 + lambda Q1 + lambda^2 Q2, slope in lambda",
            Experiment::AlphaAverage => "Monte Carlo mean over alpha of the theta-mean deviation against the preset",
            Experiment::Wavepacket => "launched wavepacket overlap against the symbol pairing",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = BoltzError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| BoltzError::Config(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlphaSpec {
    #[default]
    Preset,
    Explicit { value: Vec<f64> },
    MonteCarlo { count: usize, seed: Option<u64> },
}

/// One quasi-momentum with the label written to the `alpha_id` column.
#[derive(Debug, Clone)]
pub struct LabelledAlpha {
    pub id: String,
    pub alpha: QuasiMomentum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SymbolConfig {
    /// Centre of `a` in `(x, y)`; empty means the origin.
    pub a_center: Vec<f64>,
    pub a_width: f64,
    pub b_center: Vec<f64>,
    pub b_width: f64,
    pub envelope_width: f64,
    /// Wavepacket momentum; empty means zero.
    pub momentum: Vec<f64>,
    pub window_width: f64,
    pub potential_amplitude: f64,
    pub potential_width: f64,
}

impl Default for SymbolConfig {
    fn default() -> Self {
        let pot = GaussianPotential::default();
        Self {
            a_center: Vec::new(),
            a_width: 1.0,
            b_center: Vec::new(),
            b_width: 1.0,
            envelope_width: 1.0,
            momentum: Vec::new(),
            window_width: 1.0,
            potential_amplitude: pot.amplitude,
            potential_width: pot.width,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Direct,
    TimeQuadrature,
    Theta,
}

impl From<MethodName> for Method {
    fn from(m: MethodName) -> Method {
        match m {
            MethodName::Direct => Method::Direct,
            MethodName::TimeQuadrature => Method::TimeQuadrature,
            MethodName::Theta => Method::Theta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyName {
    Light,
    Light2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub eps_trunc: f64,
    pub eps_transfer: f64,
    pub eta_order: usize,
    pub time_order: usize,
    pub time_panels_per_cycle: f64,
    pub theta_order: usize,
    pub theta_panel_in_v: f64,
    pub theta_max_panel: f64,
    pub light2_inner_order: usize,
    /// Second-order route used for the main rows.
    pub method: MethodName,
    /// Theta-mean weight support `[−w, w]`.
    pub weight_half_width: f64,
    pub family: FamilyName,
    pub oracle_radius: f64,
    pub oracle_cell_nodes: usize,
    pub oracle_boundary_tol: f64,
    pub diophantine_q_max: u64,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let s = DuhamelSettings::default();
        let o = OracleSettings::default();
        Self {
            eps_trunc: s.eps_trunc,
            eps_transfer: s.eps_transfer,
            eta_order: s.eta_order,
            time_order: s.time_order,
            time_panels_per_cycle: s.time_panels_per_cycle,
            theta_order: s.theta_order,
            theta_panel_in_v: s.theta_panel_in_v,
            theta_max_panel: 0.002,
            light2_inner_order: s.light2_inner_order,
            method: MethodName::Theta,
            weight_half_width: 1.0,
            family: FamilyName::Light,
            oracle_radius: 12.0,
            oracle_cell_nodes: o.cell_nodes,
            oracle_boundary_tol: o.boundary_tol,
            diophantine_q_max: 20_000,
        }
    }
}

/// Verdict thresholds. Every pass/fail decision reads from here.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Per-row bound on the absolute deviation, aligned with `r`.
    pub max_abs_dev: Option<Vec<f64>>,
    /// Per-row bound on the relative deviation, aligned with `r`.
    pub max_rel_dev: Option<Vec<f64>>,
    /// Bound on the relative deviation at the smallest `r`.
    pub final_rel_dev: Option<f64>,
    /// Require deviations to decrease strictly along the sweep.
    pub monotone: bool,
    pub slope_target: Option<f64>,
    pub slope_tol: Option<f64>,
    pub slope_min: Option<f64>,
    /// Radius at which the direct route is checked against the theta route.
    pub cross_check_r: Option<f64>,
    pub cross_check_rel: Option<f64>,
    /// Allowed distance of the α-average from the preset, in standard errors.
    pub max_standard_errors: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub d: usize,
    pub r: Vec<f64>,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default)]
    pub lambda: Vec<f64>,
    #[serde(default)]
    pub alpha: AlphaSpec,
    #[serde(default)]
    pub symbols: SymbolConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default)]
    pub threads: Option<usize>,
    /// Write wall times into the `seconds` column; off gives
    /// byte-reproducible files.
    #[serde(default = "default_true")]
    pub timings: bool,
}

fn default_t() -> f64 {
    0.5
}

fn default_out() -> PathBuf {
    PathBuf::from("results")
}

fn default_true() -> bool {
    true
}

fn cfg_err(msg: impl Into<String>) -> BoltzError {
    BoltzError::Config(msg.into())
}

impl ExperimentConfig {
    /// Defaults for an experiment at dimension `d` and radii `r`.
    pub fn new(experiment: Experiment, d: usize, r: Vec<f64>) -> Self {
        Self {
            experiment,
            d,
            r,
            t: default_t(),
            lambda: Vec::new(),
            alpha: AlphaSpec::Preset,
            symbols: SymbolConfig::default(),
            numerics: NumericsConfig::default(),
            thresholds: Thresholds::default(),
            out: default_out(),
            threads: None,
            timings: true,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| e.at(path.display().to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.d;
        if !(2..=3).contains(&d) {
            return Err(cfg_err(format!("d must be 2 or 3, got {d}")));
        }
        if self.r.is_empty() {
            return Err(cfg_err("r list is empty"));
        }
        if let Some(r) = self.r.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(cfg_err(format!("radii must lie in (0, 1], got {r}")));
        }
        if !(self.t > 0.0 && self.t.is_finite()) {
            return Err(cfg_err(format!("t must be positive, got {}", self.t)));
        }
        if self.experiment == Experiment::DuhamelVsOracle {
            if self.lambda.len() < 2 {
                return Err(cfg_err("duhamel-vs-oracle needs at least two λ values"));
            }
            if let Some(l) = self.lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                return Err(cfg_err(format!("λ values must be positive, got {l}")));
            }
        }
        match &self.alpha {
            AlphaSpec::Preset => {}
            AlphaSpec::Explicit { value } => {
                if value.len() != d {
                    return Err(cfg_err(format!("alpha has {} components, d = {d}", value.len())));
                }
                QuasiMomentum::new(value.clone()).map_err(|e| cfg_err(e.to_string()))?;
            }
            AlphaSpec::MonteCarlo { count, seed } => {
                if *count == 0 {
                    return Err(cfg_err("Monte Carlo count must be positive"));
                }
                if seed.is_none() {
                    return Err(cfg_err("Monte Carlo α needs a fixed seed"));
                }
            }
        }
        if self.experiment == Experiment::AlphaAverage && !matches!(self.alpha, AlphaSpec::MonteCarlo { count, .. } if count >= 2) {
            return Err(cfg_err("alpha-average needs a Monte Carlo α spec with count ≥ 2"));
        }
        let s = &self.symbols;
        for (name, v) in [("a_center", &s.a_center), ("b_center", &s.b_center)] {
            if !v.is_empty() && v.len() != 2 * d {
                return Err(cfg_err(format!("{name} needs {} entries, has {}", 2 * d, v.len())));
            }
        }
        if !s.momentum.is_empty() && s.momentum.len() != d {
            return Err(cfg_err(format!("momentum needs {d} entries, has {}", s.momentum.len())));
        }
        for (name, v) in [
            ("a_width", s.a_width),
            ("b_width", s.b_width),
            ("envelope_width", s.envelope_width),
            ("window_width", s.window_width),
            ("potential_width", s.potential_width),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("{name} must be positive, got {v}")));
            }
        }
        let n = &self.numerics;
        for (name, v) in [
            ("eps_trunc", n.eps_trunc),
            ("eps_transfer", n.eps_transfer),
            ("theta_panel_in_v", n.theta_panel_in_v),
            ("theta_max_panel", n.theta_max_panel),
            ("time_panels_per_cycle", n.time_panels_per_cycle),
            ("weight_half_width", n.weight_half_width),
            ("oracle_boundary_tol", n.oracle_boundary_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(cfg_err(format!("{name} must be positive, got {v}")));
            }
        }
        if !(n.oracle_radius >= 0.0) {
            return Err(cfg_err(format!("oracle_radius must be non-negative, got {}", n.oracle_radius)));
        }
        for (name, v) in [
            ("eta_order", n.eta_order),
            ("time_order", n.time_order),
            ("theta_order", n.theta_order),
            ("light2_inner_order", n.light2_inner_order),
            ("oracle_cell_nodes", n.oracle_cell_nodes),
        ] {
            if v == 0 {
                return Err(cfg_err(format!("{name} must be positive")));
            }
        }
        let th = &self.thresholds;
        for (name, v) in [("max_abs_dev", &th.max_abs_dev), ("max_rel_dev", &th.max_rel_dev)] {
            if let Some(v) = v {
                if v.len() != self.r.len() {
                    return Err(cfg_err(format!("{name} needs one entry per radius ({})", self.r.len())));
                }
            }
        }
        if th.slope_target.is_some() != th.slope_tol.is_some() {
            return Err(cfg_err("slope_target and slope_tol go together"));
        }
        if th.cross_check_r.is_some() != th.cross_check_rel.is_some() {
            return Err(cfg_err("cross_check_r and cross_check_rel go together"));
        }
        if let Some(r) = th.cross_check_r {
            if !(r > 0.0 && r <= 1.0) {
                return Err(cfg_err(format!("cross_check_r must lie in (0, 1], got {r}")));
            }
        }
        if self.threads == Some(0) {
            return Err(cfg_err("threads must be positive"));
        }
        Ok(())
    }

    pub fn potential(&self) -> GaussianPotential {
        GaussianPotential {
            amplitude: self.symbols.potential_amplitude,
            width: self.symbols.potential_width,
        }
    }

    fn gaussian(&self, width: f64, center: &[f64]) -> Result<ComplexGaussian> {
        let n = 2 * self.d;
        let g = ComplexGaussian::diagonal(Complex64::new(1.0, 0.0), &vec![width; n], vec![Complex64::new(0.0, 0.0); n])?;
        Ok(if center.is_empty() { g } else { g.shifted(center) })
    }

    pub fn pair(&self) -> Result<SymbolPair> {
        let s = &self.symbols;
        SymbolPair::new(self.gaussian(s.a_width, &s.a_center)?, self.gaussian(s.b_width, &s.b_center)?)
    }

    pub fn wavepacket(&self) -> Result<WavepacketSpec> {
        let s = &self.symbols;
        let p = if s.momentum.is_empty() { vec![0.0; self.d] } else { s.momentum.clone() };
        WavepacketSpec::gaussian(self.d, s.envelope_width, p, s.window_width)
    }

    pub fn duhamel_settings(&self) -> DuhamelSettings {
        let n = &self.numerics;
        DuhamelSettings {
            eta_order: n.eta_order,
            eps_trunc: n.eps_trunc,
            eps_transfer: n.eps_transfer,
            time_order: n.time_order,
            time_panels_per_cycle: n.time_panels_per_cycle,
            potential: self.potential(),
            theta_panel_in_v: n.theta_panel_in_v,
            theta_order: n.theta_order,
            light2_inner_order: n.light2_inner_order,
        }
    }

    pub fn oracle_settings(&self) -> OracleSettings {
        OracleSettings {
            cell_nodes: self.numerics.oracle_cell_nodes,
            boundary_tol: self.numerics.oracle_boundary_tol,
        }
    }

    /// The quasi-momenta to run, in output order. Monte Carlo draws are
    /// uniform on `[0, 1)^d` from a ChaCha8 stream, so they depend only on
    /// the seed.
    pub fn alphas(&self) -> Result<Vec<LabelledAlpha>> {
        Ok(match &self.alpha {
            AlphaSpec::Preset => vec![LabelledAlpha {
                id: "preset".into(),
                alpha: QuasiMomentum::preset(self.d)?,
            }],
            AlphaSpec::Explicit { value } => vec![LabelledAlpha {
                id: "explicit".into(),
                alpha: QuasiMomentum::new(value.clone())?,
            }],
            AlphaSpec::MonteCarlo { count, seed } => {
                let seed = seed.ok_or_else(|| cfg_err("Monte Carlo α needs a fixed seed"))?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let width = count.to_string().len().max(2);
                (0..*count)
                    .map(|i| {
                        let a: Vec<f64> = (0..self.d).map(|_| rng.random::<f64>()).collect();
                        Ok(LabelledAlpha {
                            id: format!("mc{i:0width$}"),
                            alpha: QuasiMomentum::new(a)?,
                        })
                    })
                    .collect::<Result<_>>()?
            }
        })
    }

    pub fn preset_alpha(&self) -> Result<LabelledAlpha> {
        Ok(LabelledAlpha {
            id: "preset".into(),
            alpha: QuasiMomentum::new(preset_alpha(self.d)?)?,
        })
    }
}
