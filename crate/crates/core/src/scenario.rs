//! Cell geometry, user placement and large-scale fading, plus the experiment
//! configuration that drives them.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, Vector2};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::real::Real;
use crate::rng::{self, Domain};

/// How the LOS arrival angles of the reference-cell users are assigned.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AngleScheme {
    /// `theta_k = pi (k-1)/K - pi/2`, equispaced over `[-pi/2, pi/2)`.
    UniformHalfCircle,
    /// `theta_k = (2k-1)/(2K) - pi/4`.
    QuarterOffset,
    /// One angle per user, radians, each in `[-pi/2, pi/2)`.
    Explicit(Vec<f64>),
}

/// Transmit power scaled as `p_u = E_u N^{-epsilon}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerScaling {
    pub epsilon: f64,
    #[serde(rename = "E_u")]
    pub e_u: f64,
}

/// Every physical and protocol parameter of one experiment.
///
/// Powers and Ricean factors are linear. The JSON loader also accepts
/// `p_u_db`, `p_P_db`, `ricean_factors_db` and `E_u_db` keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(rename = "L")]
    pub cells: usize,
    #[serde(rename = "K")]
    pub users: usize,
    #[serde(rename = "N")]
    pub antennas: usize,
    pub p_u: f64,
    #[serde(rename = "p_P")]
    pub p_pilot: f64,
    #[serde(rename = "T")]
    pub coherence: usize,
    pub tau: usize,
    pub ricean_factors: Vec<f64>,
    pub kappa: f64,
    pub d_over_lambda: f64,
    pub alpha: f64,
    pub user_radius: f64,
    pub angle_scheme: AngleScheme,
    pub seed: u64,
    pub mc_trials: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_scaling: Option<PowerScaling>,
}

/// `10^{x/10}`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let users = 10;
        let p_u = db_to_linear(10.0);
        Self {
            cells: 7,
            users,
            antennas: 128,
            p_u,
            p_pilot: 10.0 * p_u,
            coherence: 196,
            tau: users,
            ricean_factors: vec![db_to_linear(3.0); users],
            kappa: 0.2,
            d_over_lambda: 0.5,
            alpha: 3.7,
            user_radius: 2.0 / 3.0,
            angle_scheme: AngleScheme::UniformHalfCircle,
            seed: 1,
            mc_trials: 2000,
            power_scaling: None,
        }
    }
}

impl ScenarioConfig {
    /// Parses a JSON document, converting `_db` keys to linear values.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text)?;
        Self::from_json_value(value)
    }

    pub fn from_json_value(value: Value) -> Result<Self> {
        let Value::Object(mut obj) = value else {
            return Err(Error::InvalidConfig("scenario config must be a JSON object".into()));
        };
        resolve_db_keys(&mut obj)?;
        let cfg: ScenarioConfig = serde_json::from_value(Value::Object(obj))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Sets every user's Ricean factor to the same linear value.
    pub fn with_uniform_ricean(mut self, factor: f64) -> Self {
        self.ricean_factors = vec![factor; self.users];
        self
    }

    /// `(p_u, p_P)` after applying power scaling, if configured.
    ///
    /// Under scaling the pilot energy follows the data power, `p_P = K p_u`.
    pub fn effective_powers(&self) -> (f64, f64) {
        match &self.power_scaling {
            Some(ps) => {
                let p_u = ps.e_u * (self.antennas as f64).powf(-ps.epsilon);
                (p_u, self.users as f64 * p_u)
            }
            None => (self.p_u, self.p_pilot),
        }
    }

    /// Pilot overhead factor `(T - K)/T`.
    pub fn pilot_prefactor(&self) -> f64 {
        (self.coherence - self.users) as f64 / self.coherence as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.cells == 0 || self.users == 0 || self.antennas == 0 {
            return bad("L, K and N must be positive".into());
        }
        if self.tau != self.users {
            return bad(format!("pilot length tau = {} must equal K = {}", self.tau, self.users));
        }
        if self.tau >= self.coherence {
            return bad(format!("need tau < T, got tau = {} and T = {}", self.tau, self.coherence));
        }
        if self.ricean_factors.len() != self.users {
            return bad(format!(
                "expected {} Ricean factors, got {}",
                self.users,
                self.ricean_factors.len()
            ));
        }
        if self.ricean_factors.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("Ricean factors must be finite and nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.kappa) {
            return Err(Error::InvalidKappa(self.kappa));
        }
        if !(self.p_u > 0.0 && self.p_pilot > 0.0) {
            return bad("p_u and p_P must be positive".into());
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return bad("path-loss exponent must be positive".into());
        }
        if !(self.user_radius > 0.0 && self.d_over_lambda > 0.0) {
            return bad("user_radius and d_over_lambda must be positive".into());
        }
        if self.mc_trials < 2 {
            return bad("mc_trials must be at least 2".into());
        }
        if let Some(ps) = &self.power_scaling {
            if !(ps.epsilon > 0.0 && ps.e_u > 0.0) {
                return bad("power scaling needs epsilon > 0 and E_u > 0".into());
            }
        }
        if let AngleScheme::Explicit(angles) = &self.angle_scheme {
            if angles.len() != self.users {
                return bad(format!("expected {} explicit angles, got {}", self.users, angles.len()));
            }
            if angles.iter().any(|t| !(-PI / 2.0..PI / 2.0).contains(t)) {
                return bad("explicit arrival angles must lie in [-pi/2, pi/2)".into());
            }
        }
        Ok(())
    }
}

fn take_db(obj: &mut Map<String, Value>, linear: &str) -> Result<()> {
    let db_key = format!("{linear}_db");
    let Some(v) = obj.remove(&db_key) else {
        return Ok(());
    };
    if obj.contains_key(linear) {
        return Err(Error::InvalidConfig(format!("both `{linear}` and `{db_key}` given")));
    }
    let conv = |v: &Value| -> Result<Value> {
        v.as_f64()
            .map(|x| Value::from(db_to_linear(x)))
            .ok_or_else(|| Error::InvalidConfig(format!("`{db_key}` must be numeric")))
    };
    let lin = match &v {
        Value::Array(items) => Value::Array(items.iter().map(conv).collect::<Result<_>>()?),
        other => conv(other)?,
    };
    obj.insert(linear.to_string(), lin);
    Ok(())
}

fn resolve_db_keys(obj: &mut Map<String, Value>) -> Result<()> {
    take_db(obj, "p_u")?;
    take_db(obj, "p_P")?;
    take_db(obj, "ricean_factors")?;
    if let Some(Value::Object(ps)) = obj.get_mut("power_scaling") {
        take_db(ps, "E_u")?;
    }

    let users = match obj.get("K") {
        Some(v) => v
            .as_u64()
            .ok_or_else(|| Error::InvalidConfig("`K` must be a positive integer".into()))?
            as usize,
        None => ScenarioConfig::default().users,
    };
    if !obj.contains_key("tau") {
        obj.insert("tau".into(), Value::from(users));
    }
    match obj.get("ricean_factors") {
        // a scalar applies to every user
        Some(v) if v.is_number() => {
            let v = v.clone();
            obj.insert("ricean_factors".into(), Value::Array(vec![v; users]));
        }
        None => {
            let d = ScenarioConfig::default().ricean_factors[0];
            obj.insert("ricean_factors".into(), Value::Array(vec![Value::from(d); users]));
        }
        _ => {}
    }
    if !obj.contains_key("p_P") {
        let p_u = obj
            .get("p_u")
            .and_then(Value::as_f64)
            .unwrap_or(ScenarioConfig::default().p_u);
        obj.insert("p_P".into(), Value::from(10.0 * p_u));
    }
    Ok(())
}

/// Base-station positions in normalized distance units.
#[derive(Clone, Debug)]
pub struct CellLayout<T: Real> {
    pub bs_positions: Vec<Vector2<T>>,
    pub inner_radius: T,
    pub inter_site_distance: T,
}

/// User coordinates (`positions[l][k]`) and reference-cell arrival angles.
#[derive(Clone, Debug)]
pub struct UserPlacement<T: Real> {
    pub positions: Vec<Vec<Vector2<T>>>,
    pub arrival_angles: Vec<T>,
}

/// `lambda[(l, k)] = dist(BS_0, user (l, k))^{-alpha}`; row 0 is the reference cell.
#[derive(Clone, Debug)]
pub struct LargeScaleFading<T: Real> {
    pub lambda: DMatrix<T>,
}

impl<T: Real> LargeScaleFading<T> {
    pub fn cells(&self) -> usize {
        self.lambda.nrows()
    }

    pub fn users(&self) -> usize {
        self.lambda.ncols()
    }

    /// `lambda_{1,k}` of the reference cell.
    #[inline]
    pub fn own(&self, k: usize) -> T {
        self.lambda[(0, k)]
    }

    /// `sum_{l >= 2} lambda_{l,k}`: the users sharing pilot `k`.
    pub fn pilot_sharers(&self, k: usize) -> T {
        (1..self.cells()).fold(T::zero(), |acc, l| acc + self.lambda[(l, k)])
    }

    /// `sum_{l >= 2} lambda_{l,k}^2`.
    pub fn pilot_sharers_sq(&self, k: usize) -> T {
        (1..self.cells()).fold(T::zero(), |acc, l| {
            let v = self.lambda[(l, k)];
            acc + v * v
        })
    }

    /// `sum_{l >= 2} sum_i lambda_{l,i}`.
    pub fn interfering_total(&self) -> T {
        let mut s = T::zero();
        for l in 1..self.cells() {
            for k in 0..self.users() {
                s += self.lambda[(l, k)];
            }
        }
        s
    }
}

/// Hexagonal 7-cell layout: BS 0 at the origin, six neighbours at distance 2.
pub fn build_layout<T: Real>(config: &ScenarioConfig) -> Result<CellLayout<T>> {
    if config.cells != 7 {
        return Err(Error::UnsupportedLayout(config.cells));
    }
    let isd = T::lit(2.0);
    let mut bs_positions = vec![Vector2::zeros()];
    for m in 0..6 {
        let a = T::two_pi() * T::lit(m as f64) / T::lit(6.0);
        bs_positions.push(Vector2::new(isd * a.cos(), isd * a.sin()));
    }
    Ok(CellLayout {
        bs_positions,
        inner_radius: T::one(),
        inter_site_distance: isd,
    })
}

/// LOS arrival angles of the reference-cell users for `scheme`.
pub fn arrival_angles(scheme: &AngleScheme, users: usize) -> Vec<f64> {
    let kf = users as f64;
    match scheme {
        AngleScheme::UniformHalfCircle => (1..=users)
            .map(|k| PI * (k as f64 - 1.0) / kf - PI / 2.0)
            .collect(),
        AngleScheme::QuarterOffset => (1..=users)
            .map(|k| (2.0 * k as f64 - 1.0) / (2.0 * kf) - PI / 4.0)
            .collect(),
        AngleScheme::Explicit(v) => v.clone(),
    }
}

/// Places `K` users per cell on a circle of radius `user_radius` around their
/// BS. Azimuths are uniform and drawn from a per-cell stream of `seed`, so the
/// placement does not depend on `N` or on any other parameter.
pub fn place_users<T: Real>(config: &ScenarioConfig, layout: &CellLayout<T>) -> UserPlacement<T> {
    let r = T::lit(config.user_radius);
    let positions = layout
        .bs_positions
        .iter()
        .enumerate()
        .map(|(l, bs)| {
            let mut rng = rng::stream(config.seed, Domain::Placement, l as u64);
            (0..config.users)
                .map(|_| {
                    let psi = T::lit(rng.random::<f64>() * 2.0 * PI);
                    bs + Vector2::new(r * psi.cos(), r * psi.sin())
                })
                .collect()
        })
        .collect();
    let arrival_angles = arrival_angles(&config.angle_scheme, config.users)
        .into_iter()
        .map(T::lit)
        .collect();
    UserPlacement {
        positions,
        arrival_angles,
    }
}

/// Distance-based path loss towards the reference BS, no shadowing.
pub fn large_scale_fading<T: Real>(
    config: &ScenarioConfig,
    placement: &UserPlacement<T>,
    layout: &CellLayout<T>,
) -> Result<LargeScaleFading<T>> {
    let cells = placement.positions.len();
    let users = config.users;
    let alpha = T::lit(config.alpha);
    let bs0 = layout.bs_positions[0];
    let mut lambda = DMatrix::zeros(cells, users);
    for (l, row) in placement.positions.iter().enumerate() {
        for (k, pos) in row.iter().enumerate() {
            let d = (pos - bs0).norm();
            if d <= T::zero() {
                return Err(Error::DegenerateGeometry { cell: l, user: k });
            }
            lambda[(l, k)] = d.powf(-alpha);
        }
    }
    Ok(LargeScaleFading { lambda })
}
