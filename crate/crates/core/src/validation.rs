//! Property checks for the numerical building blocks. Moment identities and
//! extremal inequalities are checked on random cases; convergence probes track
//! normalized quantities over an antenna grid.

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma};
use serde::Serialize;

use crate::channel::SpectrumCache;
use crate::error::{Error, Result};
use crate::model::Scenario;
use crate::rate_analysis::rho_kernel;
use crate::real::Real;
use crate::rng::{stream, Domain};
use crate::scenario::ScenarioConfig;

/// Observed and expected value of one moment.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentCheck {
    pub expected: f64,
    pub observed: f64,
    pub z_score: f64,
}

/// First moment, second moment and variance of a sampled sum.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct MomentReport {
    pub mean: MomentCheck,
    pub second: MomentCheck,
    pub variance: MomentCheck,
}

impl MomentReport {
    pub fn max_z(&self) -> f64 {
        self.mean.z_score.max(self.second.z_score).max(self.variance.z_score)
    }
}

/// Compares sample moments of `sampler` against `(mean, variance)`.
/// Standard errors come from the sample itself, the variance's through the
/// fourth central moment.
pub fn check_moments<F>(mean: f64, variance: f64, samples: usize, seed: u64, mut sampler: F) -> MomentReport
where
    F: FnMut(&mut rand_chacha::ChaCha8Rng) -> f64,
{
    let mut rng = stream(seed, Domain::Validation, 0);
    let x: Vec<f64> = (0..samples).map(|_| sampler(&mut rng)).collect();
    let n = samples as f64;
    let m1 = x.iter().sum::<f64>() / n;
    let m2 = x.iter().map(|v| v * v).sum::<f64>() / n;
    let c2 = x.iter().map(|v| (v - m1).powi(2)).sum::<f64>() / (n - 1.0);
    let c4 = x.iter().map(|v| (v - m1).powi(4)).sum::<f64>() / n;
    let sd_sq = (x.iter().map(|v| (v * v - m2).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let z = |obs: f64, exp: f64, se: f64| if se > 0.0 { (obs - exp).abs() / se } else { 0.0 };
    let second = variance + mean * mean;
    MomentReport {
        mean: MomentCheck {
            expected: mean,
            observed: m1,
            z_score: z(m1, mean, (c2 / n).sqrt()),
        },
        second: MomentCheck {
            expected: second,
            observed: m2,
            z_score: z(m2, second, sd_sq / n.sqrt()),
        },
        variance: MomentCheck {
            expected: variance,
            observed: c2,
            z_score: z(c2, variance, ((c4 - c2 * c2).max(0.0) / n).sqrt()),
        },
    }
}

/// Moments of `sum_i X_i` with independent `X_i ~ Gamma(k_i, theta_i)`:
/// mean `sum k theta`, variance `sum k theta^2`.
pub fn check_gamma_moments(shape_scale: &[(f64, f64)], samples: usize, seed: u64) -> Result<MomentReport> {
    if shape_scale.is_empty() || shape_scale.iter().any(|&(k, t)| !(k > 0.0 && t > 0.0)) {
        return Err(Error::InvalidConfig("Gamma shapes and scales must be positive".into()));
    }
    let dists: Vec<Gamma<f64>> = shape_scale
        .iter()
        .map(|&(k, t)| Gamma::new(k, t).expect("validated parameters"))
        .collect();
    let mean = shape_scale.iter().map(|&(k, t)| k * t).sum();
    let var = shape_scale.iter().map(|&(k, t)| k * t * t).sum();
    Ok(check_moments(mean, var, samples, seed, |rng| {
        dists.iter().map(|d| d.sample(rng)).sum()
    }))
}

/// `|X|^2` for standard complex Gaussian `X`, which is `Gamma(1, 1)`.
pub fn check_complex_gaussian_power(samples: usize, seed: u64) -> MomentReport {
    check_moments(1.0, 1.0, samples, seed, |rng| f64::complex_gaussian(rng).norm_sqr())
}

/// Sum of `2k` squared `N(0, 1/2)` variables, a halved chi-squared with `2k`
/// degrees of freedom, which is `Gamma(k, 1)`.
pub fn check_chi_squared_relation(k: usize, samples: usize, seed: u64) -> MomentReport {
    check_moments(k as f64, k as f64, samples, seed, |rng| {
        (0..2 * k).map(|_| 0.5 * f64::standard_normal(rng).powi(2)).sum()
    })
}

/// Arguments of the extremal inequalities: `x` positive with `sum x = M`.
#[derive(Clone, Debug, Serialize)]
pub struct InequalityCase {
    pub m: usize,
    pub a: f64,
    pub b: f64,
    pub x: Vec<f64>,
}

impl InequalityCase {
    pub fn new(a: f64, b: f64, x: Vec<f64>) -> Result<Self> {
        let m = x.len();
        let sum: f64 = x.iter().sum();
        if m == 0 || a.is_nan() || b.is_nan() || a <= 0.0 || b <= 0.0 || x.iter().any(|&v| v.is_nan() || v <= 0.0) || (sum - m as f64).abs() > 1e-9 {
            return Err(Error::InvalidConfig(
                "inequality case needs a, b > 0 and positive x summing to M".into(),
            ));
        }
        Ok(Self { m, a, b, x })
    }

    /// Random case: `M` in `2..=64`, log-uniform `a, b`, and `x = M` times a
    /// flat Dirichlet draw (normalized exponentials).
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let m = rng.random_range(2..=64);
        let a = 10f64.powf(rng.random_range(-3.0..3.0));
        let b = 10f64.powf(rng.random_range(-3.0..3.0));
        let e: Vec<f64> = (0..m).map(|_| Exp1.sample(rng)).collect();
        let s: f64 = e.iter().sum();
        let x = e.iter().map(|v| v * m as f64 / s).collect();
        Self { m, a, b, x }
    }
}

/// One sandwich `upper > value >= lower`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BoundCheck {
    pub value: f64,
    pub upper: f64,
    pub lower: f64,
    /// `upper - value`, must be strictly positive.
    pub upper_slack: f64,
    /// `value - lower`, must be nonnegative up to rounding.
    pub lower_slack: f64,
    pub holds: bool,
}

/// Absolute rounding allowance on the lower bound, relative to its size.
const LOWER_ROUNDING: f64 = 1e-12;

fn bound(value: f64, upper: f64, lower: f64) -> BoundCheck {
    let upper_slack = upper - value;
    let lower_slack = value - lower;
    BoundCheck {
        value,
        upper,
        lower,
        upper_slack,
        lower_slack,
        holds: upper_slack > 0.0 && lower_slack >= -LOWER_ROUNDING * lower.abs().max(1.0),
    }
}

/// Evaluates the four bounds, for `sum x = M`, `a, b > 0`:
///
/// * `M^2/(aM+b) > sum x^2/(ax+b) >= M/(a+b)`
/// * `M^3/(aM+b) > sum x^3/(ax+b) >= M/(a+b)`
/// * `M^4/(aM+b)^2 > sum x^4/(ax+b)^2 >= M/(a+b)^2`
/// * `M^3/(aM+b)^2 > sum x^3/(ax+b)^2 >= M/(a+b)^2`
pub fn check_extremal_inequalities(case: &InequalityCase) -> [BoundCheck; 4] {
    let (a, b) = (case.a, case.b);
    let m = case.m as f64;
    let sum = |p: i32, q: i32| case.x.iter().map(|&x| x.powi(p) / (a * x + b).powi(q)).sum::<f64>();
    let top = a * m + b;
    let bottom = a + b;
    [
        bound(sum(2, 1), m * m / top, m / bottom),
        bound(sum(3, 1), m.powi(3) / top, m / bottom),
        bound(sum(4, 2), m.powi(4) / (top * top), m / (bottom * bottom)),
        bound(sum(3, 2), m.powi(3) / (top * top), m / (bottom * bottom)),
    ]
}

/// Normalized quantities whose large-`N` behaviour the asymptotic results rely on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ProbeQuantity {
    /// `sum_n delta_n^4 / N^2`.
    DeltaQuartic,
    /// `sum_n a_n delta_n^2 / N^2`.
    ADeltaSq,
    /// `g_bar^H U Delta^2 U^H g_bar / N^2`.
    LosDeltaForm,
    /// `g_bar^H U B U^H g_bar / N^2`.
    LosBForm,
    /// `sum_{i != k} |rho_{k,i}|^2 / N^2`.
    RhoSq,
    /// `sum_n delta_n^2 / N`, which stays bounded away from zero.
    DeltaSqMean,
}

impl ProbeQuantity {
    pub const ALL: [ProbeQuantity; 6] = [
        Self::DeltaQuartic,
        Self::ADeltaSq,
        Self::LosDeltaForm,
        Self::LosBForm,
        Self::RhoSq,
        Self::DeltaSqMean,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Self::DeltaQuartic => "delta4_over_n2",
            Self::ADeltaSq => "a_delta2_over_n2",
            Self::LosDeltaForm => "los_delta2_form_over_n2",
            Self::LosBForm => "los_b_form_over_n2",
            Self::RhoSq => "rho2_over_n2",
            Self::DeltaSqMean => "delta2_over_n",
        }
    }

    /// Whether the quantity tends to zero as `N` grows.
    pub fn vanishes(self) -> bool {
        !matches!(self, Self::DeltaSqMean)
    }
}

impl std::str::FromStr for ProbeQuantity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|q| q.id() == s)
            .ok_or_else(|| Error::UnknownQuantity(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ProbeRow {
    pub antennas: usize,
    pub value: f64,
    /// Distance to the limit: the value itself for vanishing quantities,
    /// otherwise the absolute change from the previous grid point.
    pub gap: f64,
}

/// Evaluates `quantity` for user `k` of `base` at every `N` of `grid`.
pub fn convergence_probe(
    quantity: &str,
    grid: &[usize],
    base: &ScenarioConfig,
    k: usize,
    cache: &SpectrumCache<f64>,
) -> Result<Vec<ProbeRow>> {
    let q: ProbeQuantity = quantity.parse()?;
    if grid.is_empty() || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("probe grid must be non-empty and ascending".into()));
    }
    if k >= base.users {
        return Err(Error::InvalidConfig(format!("user {k} out of range")));
    }
    let mut rows: Vec<ProbeRow> = Vec::with_capacity(grid.len());
    for &n in grid {
        let cfg = ScenarioConfig {
            antennas: n,
            ..base.clone()
        };
        let scn = Scenario::<f64>::build_cached(&cfg, cache)?;
        let value = probe_value(q, &scn, k);
        let gap = if q.vanishes() {
            value.abs()
        } else {
            rows.last().map_or(0.0, |r| (value - r.value).abs())
        };
        rows.push(ProbeRow { antennas: n, value, gap });
    }
    Ok(rows)
}

fn probe_value(q: ProbeQuantity, scn: &Scenario<f64>, k: usize) -> f64 {
    let n = scn.antennas() as f64;
    let f = &scn.bank.users[k];
    match q {
        ProbeQuantity::DeltaQuartic => f.delta_quartic_sum() / (n * n),
        ProbeQuantity::ADeltaSq => f.a_delta_sq_sum() / (n * n),
        ProbeQuantity::LosDeltaForm => scn.weighted_los_energy(k, f.delta.iter().map(|d| d * d)) / (n * n),
        ProbeQuantity::LosBForm => scn.weighted_los_energy(k, f.b.iter().copied()) / (n * n),
        ProbeQuantity::RhoSq => {
            let rho = rho_kernel(&scn.placement.arrival_angles, scn.antennas(), scn.config.d_over_lambda);
            (0..scn.users())
                .filter(|&i| i != k)
                .map(|i| rho.rho[(k, i)].norm_sqr())
                .sum::<f64>()
                / (n * n)
        }
        ProbeQuantity::DeltaSqMean => f.delta_sq_sum() / n,
    }
}

/// One line of the machine-readable report.
#[derive(Clone, Debug, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// Observed statistic: a z-score, a slack, or a probe value ratio.
    pub observed: f64,
    /// Threshold the statistic is judged against.
    pub threshold: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub checks: Vec<CheckRecord>,
    pub passed: bool,
}

/// Settings of [`run_suite`].
#[derive(Clone, Debug)]
pub struct SuiteOptions {
    pub moment_samples: usize,
    pub inequality_cases: usize,
    pub probe_grid: Vec<usize>,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            moment_samples: 100_000,
            inequality_cases: 10_000,
            probe_grid: vec![64, 128, 256, 512, 1024],
            seed: 1,
        }
    }
}

/// Maximum accepted moment z-score.
pub const MOMENT_Z_LIMIT: f64 = 5.0;

/// Runs every check against `base` and collects the results.
pub fn run_suite(base: &ScenarioConfig, opts: &SuiteOptions) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let mut moment = |name: &str, r: MomentReport| {
        checks.push(CheckRecord {
            name: name.to_string(),
            observed: r.max_z(),
            threshold: MOMENT_Z_LIMIT,
            passed: r.max_z() < MOMENT_Z_LIMIT,
        });
    };
    let s = opts.moment_samples;
    moment("gamma_unit_exponential", check_gamma_moments(&[(1.0, 1.0)], s, opts.seed)?);
    moment("gamma_scaled_by_two", check_gamma_moments(&[(2.5, 2.0)], s, opts.seed + 1)?);
    moment(
        "gamma_sum_mixed",
        check_gamma_moments(&[(0.5, 1.0), (1.0, 3.0), (4.0, 0.25)], s, opts.seed + 2)?,
    );
    moment("complex_gaussian_power", check_complex_gaussian_power(s, opts.seed + 3));
    moment("chi_squared_relation", check_chi_squared_relation(3, s, opts.seed + 4));

    let mut rng = stream(opts.seed, Domain::Validation, 1);
    let mut worst_upper = f64::INFINITY;
    let mut worst_lower = f64::INFINITY;
    let mut all_hold = true;
    for _ in 0..opts.inequality_cases {
        let case = InequalityCase::random(&mut rng);
        for b in check_extremal_inequalities(&case) {
            worst_upper = worst_upper.min(b.upper_slack / b.upper);
            worst_lower = worst_lower.min(b.lower_slack / b.lower);
            all_hold &= b.holds;
        }
    }
    checks.push(CheckRecord {
        name: "extremal_inequalities_random".into(),
        observed: worst_upper.min(worst_lower),
        threshold: 0.0,
        passed: all_hold,
    });
    let flat = InequalityCase::new(1.0, 1.0, vec![1.0; 16])?;
    let equality = check_extremal_inequalities(&flat)
        .iter()
        .map(|b| b.lower_slack.abs())
        .fold(0.0, f64::max);
    checks.push(CheckRecord {
        name: "extremal_inequalities_equality".into(),
        observed: equality,
        threshold: 1e-12,
        passed: equality < 1e-12,
    });

    let cache = SpectrumCache::new();
    for q in ProbeQuantity::ALL.into_iter().filter(|q| q.vanishes()) {
        let rows = convergence_probe(q.id(), &opts.probe_grid, base, 0, &cache)?;
        let worst = rows.windows(2).map(|w| w[1].value / w[0].value).fold(0.0, f64::max);
        checks.push(CheckRecord {
            name: format!("probe_{}", q.id()),
            observed: worst,
            threshold: 1.0,
            passed: worst < 1.0,
        });
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport { checks, passed })
}
