//! Experiment descriptions: a base scenario, a swept axis, optional series
//! axes, and the rate methods to evaluate at every point.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use uplink_core::scenario::{db_to_linear, ScenarioConfig};

use crate::error::CliError;

/// A scenario parameter that can be swept.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variable {
    #[serde(rename = "N")]
    Antennas,
    #[serde(rename = "kappa")]
    Kappa,
    /// Ricean factor of every user in dB.
    #[serde(rename = "ricean_db")]
    RiceanDb,
    /// Ricean factor of every user, linear, so that Rayleigh fading (0) is reachable.
    #[serde(rename = "ricean")]
    Ricean,
    /// Power-scaling exponent; requires `power_scaling` in the base scenario.
    #[serde(rename = "epsilon")]
    Epsilon,
}

impl Variable {
    pub fn name(self) -> &'static str {
        match self {
            Self::Antennas => "N",
            Self::Kappa => "kappa",
            Self::RiceanDb => "ricean_db",
            Self::Ricean => "ricean",
            Self::Epsilon => "epsilon",
        }
    }

    /// Writes `value` into `cfg`.
    pub fn apply(self, cfg: &mut ScenarioConfig, value: f64) -> Result<(), CliError> {
        match self {
            Self::Antennas => {
                if value < 1.0 || value.fract() != 0.0 || value > u16::MAX as f64 {
                    return Err(CliError::Config(format!("N must be a positive integer, got {value}")));
                }
                cfg.antennas = value as usize;
            }
            Self::Kappa => cfg.kappa = value,
            Self::RiceanDb => cfg.ricean_factors = vec![db_to_linear(value); cfg.users],
            Self::Ricean => cfg.ricean_factors = vec![value; cfg.users],
            Self::Epsilon => match cfg.power_scaling.as_mut() {
                Some(ps) => ps.epsilon = value,
                None => {
                    return Err(CliError::Config(
                        "sweeping epsilon needs power_scaling in the base scenario".into(),
                    ))
                }
            },
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub variable: Variable,
    pub values: Vec<f64>,
}

/// Rate evaluation method. Short aliases are accepted for the closed forms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Monte-Carlo ergodic rate with LMMSE estimates.
    LmmseMc,
    /// Four-term closed-form approximation.
    #[serde(alias = "lmmse_thm1")]
    LmmseClosedForm,
    /// Large-antenna limit of the closed form.
    #[serde(alias = "lmmse_thm2")]
    LmmseAsymptotic,
    /// Power-scaling limit.
    #[serde(alias = "lmmse_thm3")]
    LmmsePowerScaled,
    /// Monte-Carlo assembled LOS-estimate lower bound.
    LosMc,
    /// Closed-form LOS-estimate lower bound.
    #[serde(alias = "los_thm4")]
    LosClosedForm,
    /// Large-antenna limit of the LOS-estimate bound.
    #[serde(alias = "los_thm5")]
    LosAsymptotic,
    /// Power-scaling limit of the LOS-estimate bound.
    #[serde(alias = "los_thm6")]
    LosPowerScaled,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Self::LmmseMc => "lmmse_mc",
            Self::LmmseClosedForm => "lmmse_closed_form",
            Self::LmmseAsymptotic => "lmmse_asymptotic",
            Self::LmmsePowerScaled => "lmmse_power_scaled",
            Self::LosMc => "los_mc",
            Self::LosClosedForm => "los_closed_form",
            Self::LosAsymptotic => "los_asymptotic",
            Self::LosPowerScaled => "los_power_scaled",
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Self::LmmseMc | Self::LosMc)
    }

    pub fn needs_power_scaling(self) -> bool {
        matches!(self, Self::LmmsePowerScaled | Self::LosPowerScaled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// Scenario config as JSON; `_db` keys are accepted.
    #[serde(default = "empty_object")]
    pub base: Value,
    pub sweep: Axis,
    /// Further axes; every combination of their values is a separate curve.
    #[serde(default)]
    pub series: Vec<Axis>,
    pub methods: Vec<Method>,
    /// Adds one row per curve with the first swept `N` at which the LOS
    /// closed-form sum rate exceeds the LMMSE closed-form sum rate.
    #[serde(default)]
    pub report_crossover: bool,
}

fn empty_object() -> Value {
    json!({})
}

/// One evaluation point of an experiment.
#[derive(Clone, Debug)]
pub struct Point {
    /// `sweep_var` column: the swept variable, then `|name=value` per series axis.
    pub label: String,
    /// Index of the curve this point belongs to.
    pub curve: usize,
    pub value: f64,
    pub config: ScenarioConfig,
}

impl Experiment {
    pub fn from_json_str(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("experiment: {e}")))
    }

    /// Resolves the base scenario, applying a seed override if given.
    pub fn base_config(&self, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
        let mut cfg = ScenarioConfig::from_json_value(self.base.clone())?;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    /// Checks structure and expands every point, validating each scenario.
    pub fn points(&self, seed: Option<u64>) -> Result<Vec<Point>, CliError> {
        if self.methods.is_empty() {
            return Err(CliError::Config("methods must not be empty".into()));
        }
        for axis in std::iter::once(&self.sweep).chain(&self.series) {
            if axis.values.is_empty() {
                return Err(CliError::Config(format!("axis {} has no values", axis.variable.name())));
            }
        }
        if self.report_crossover && self.sweep.variable != Variable::Antennas {
            return Err(CliError::Config("report_crossover needs an N sweep".into()));
        }
        let base = self.base_config(seed)?;
        if base.power_scaling.is_none() && self.methods.iter().any(|m| m.needs_power_scaling()) {
            return Err(CliError::Config("power-scaled methods need power_scaling in the base scenario".into()));
        }

        let mut curves: Vec<(String, ScenarioConfig)> = vec![(String::new(), base)];
        for axis in &self.series {
            let mut next = Vec::with_capacity(curves.len() * axis.values.len());
            for (suffix, cfg) in &curves {
                for &v in &axis.values {
                    let mut c = cfg.clone();
                    axis.variable.apply(&mut c, v)?;
                    next.push((format!("{suffix}|{}={v}", axis.variable.name()), c));
                }
            }
            curves = next;
        }
        let mut points = Vec::new();
        for (curve, (suffix, cfg)) in curves.into_iter().enumerate() {
            for &v in &self.sweep.values {
                let mut c = cfg.clone();
                self.sweep.variable.apply(&mut c, v)?;
                c.validate()?;
                points.push(Point {
                    label: format!("{}{suffix}", self.sweep.variable.name()),
                    curve,
                    value: v,
                    config: c,
                });
            }
        }
        Ok(points)
    }
}

/// Recursively overlays `patch` on `base`; objects merge key by key, any
/// other value replaces.
pub fn merge_json(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}

fn db_series(values: &[f64]) -> Vec<f64> {
    values.iter().map(|&db| db_to_linear(db)).collect()
}

fn antenna_grid(from: usize, to: usize, step: usize) -> Vec<f64> {
    (from..=to).step_by(step).map(|n| n as f64).collect()
}

/// Built-in experiments reproducing the published figure protocols.
pub fn presets() -> Vec<Experiment> {
    use Method::*;
    let doubling = vec![32.0, 64.0, 128.0, 256.0, 512.0];
    vec![
        Experiment {
            name: "fig_rate_vs_N_lmmse".into(),
            description: "LMMSE sum rate against N for Rayleigh, 3 dB and 6 dB Ricean factors, kappa = 0.2".into(),
            base: json!({ "kappa": 0.2 }),
            sweep: Axis { variable: Variable::Antennas, values: doubling.clone() },
            series: vec![Axis {
                variable: Variable::Ricean,
                values: [vec![0.0], db_series(&[3.0, 6.0])].concat(),
            }],
            methods: vec![LmmseMc, LmmseClosedForm, LmmseAsymptotic],
            report_crossover: false,
        },
        Experiment {
            name: "fig_rate_vs_N_lmmse_corr".into(),
            description: "LMMSE sum rate and its large-N limit against N for two Ricean factors and two correlation levels".into(),
            base: json!({}),
            sweep: Axis { variable: Variable::Antennas, values: [doubling.clone(), vec![1024.0]].concat() },
            series: vec![
                Axis { variable: Variable::Ricean, values: [vec![0.0], db_series(&[6.0])].concat() },
                Axis { variable: Variable::Kappa, values: vec![0.0, 0.5, 0.9] },
            ],
            methods: vec![LmmseClosedForm, LmmseAsymptotic],
            report_crossover: false,
        },
        Experiment {
            name: "fig_rate_vs_N_los".into(),
            description: "LOS-estimate sum rate against N for 0, 3 and 6 dB Ricean factors, kappa = 0.2".into(),
            base: json!({ "kappa": 0.2 }),
            sweep: Axis { variable: Variable::Antennas, values: doubling.clone() },
            series: vec![Axis { variable: Variable::RiceanDb, values: vec![0.0, 3.0, 6.0] }],
            methods: vec![LosMc, LosClosedForm, LosAsymptotic],
            report_crossover: false,
        },
        Experiment {
            name: "fig_los_position_uniform".into(),
            description: "LOS-estimate sum rate against N, arrival angles spread over the half circle, kappa 0 and 0.5".into(),
            base: json!({ "ricean_factors_db": 3.0, "angle_scheme": "uniform_half_circle" }),
            sweep: Axis { variable: Variable::Antennas, values: doubling.clone() },
            series: vec![Axis { variable: Variable::Kappa, values: vec![0.0, 0.5] }],
            methods: vec![LosClosedForm, LosAsymptotic],
            report_crossover: false,
        },
        Experiment {
            name: "fig_los_position_quarter".into(),
            description: "LOS-estimate sum rate against N, arrival angles clustered around broadside, kappa 0 and 0.5".into(),
            base: json!({ "ricean_factors_db": 3.0, "angle_scheme": "quarter_offset" }),
            sweep: Axis { variable: Variable::Antennas, values: doubling },
            series: vec![Axis { variable: Variable::Kappa, values: vec![0.0, 0.5] }],
            methods: vec![LosClosedForm, LosAsymptotic],
            report_crossover: false,
        },
        Experiment {
            name: "fig_rate_vs_ricean".into(),
            description: "Sum rate of both estimators against the Ricean factor for two antenna counts and two correlation levels".into(),
            base: json!({}),
            sweep: Axis {
                variable: Variable::RiceanDb,
                values: (-10..=20).step_by(2).map(f64::from).collect(),
            },
            series: vec![
                Axis { variable: Variable::Antennas, values: vec![64.0, 256.0] },
                Axis { variable: Variable::Kappa, values: vec![0.0, 0.5] },
            ],
            methods: vec![LmmseClosedForm, LosClosedForm],
            report_crossover: false,
        },
        Experiment {
            name: "fig_power_scaling".into(),
            description: "Power-scaled sum rate of both estimators against N, E_u = 20 dB, 6 dB Ricean factor, epsilon 1 and 1.5".into(),
            base: json!({
                "ricean_factors_db": 6.0,
                "power_scaling": { "epsilon": 1.0, "E_u_db": 20.0 }
            }),
            sweep: Axis { variable: Variable::Antennas, values: vec![64.0, 128.0, 256.0, 512.0, 1024.0] },
            series: vec![Axis { variable: Variable::Epsilon, values: vec![1.0, 1.5] }],
            methods: vec![LmmseMc, LosMc, LmmsePowerScaled, LosPowerScaled],
            report_crossover: false,
        },
        Experiment {
            name: "fig_crossover".into(),
            description: "Closed-form sum rates of both estimators against N for 0 dB and 3 dB Ricean factors, with the first N where the LOS estimate wins".into(),
            base: json!({}),
            sweep: Axis { variable: Variable::Antennas, values: antenna_grid(50, 600, 25) },
            series: vec![Axis { variable: Variable::RiceanDb, values: vec![0.0, 3.0] }],
            methods: vec![LmmseClosedForm, LosClosedForm],
            report_crossover: true,
        },
    ]
}

pub fn preset(name: &str) -> Result<Experiment, CliError> {
    presets()
        .into_iter()
        .find(|p| p.name == name)
        .ok_or_else(|| CliError::Config(format!("unknown preset '{name}'")))
}
