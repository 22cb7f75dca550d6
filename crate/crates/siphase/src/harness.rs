//! Random signal generation, error metrics and the Monte-Carlo
//! experiment runner.
//!
//! Every run is reproducible: per-trial seeds are derived from the
//! master seed and the cell coordinates with a splitmix chain, so trials
//! are independent of execution order and identical configurations give
//! bitwise identical result files.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorDescriptor};
use crate::meps::{meps_reconstruct, M0Mode, MepsConfig};
use crate::sampling::{
    block_range_for_support, take_phaseless_samples, NoiseModel, SamplingScheme,
};
use crate::scalar::Scalar;
use crate::signal::{CoeffWindow, SisSignal};

/// Coefficient distribution for random test signals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffModel {
    /// Uniform on `[-1, 1]` excluding `(-0.1, 0.1)`, drawn by rejection.
    TwoSided,
    /// Uniform on `[0.1, 1]`, all coefficients positive.
    OnePhase,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    let mut x = z;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Deterministic seed derivation: fold each part into the master seed
/// through splitmix64.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &p in parts {
        s = splitmix64(s ^ p);
    }
    s
}

/// Draw a nonseparable signal with i.i.d. coefficients on the support.
///
/// Coefficients are drawn in ascending index order, one uniform draw per
/// accepted value (rejection for the two-sided model). The whole signal
/// is redrawn if it comes out separable, which cannot happen for these
/// models since every coefficient has magnitude at least 0.1.
pub fn random_signal<S: Scalar>(
    g: &Generator<S>,
    model: CoeffModel,
    support: (i64, i64),
    seed: u64,
) -> Result<SisSignal<S>> {
    let (k_lo, k_hi) = support;
    if k_lo > k_hi {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    let len = (k_hi - k_lo + 1) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let values: Vec<S> = (0..len)
            .map(|_| {
                let v = match model {
                    CoeffModel::TwoSided => loop {
                        let u: f64 = rng.gen_range(-1.0..=1.0);
                        if u.abs() >= 0.1 {
                            break u;
                        }
                    },
                    CoeffModel::OnePhase => rng.gen_range(0.1..=1.0),
                };
                S::from_f64_lossy(v)
            })
            .collect();
        let f = SisSignal::new(g.clone(), k_lo, values);
        if f.is_nonseparable()? {
            return Ok(f);
        }
    }
    Err(Error::Internal(
        "separable draws exhausted the retry budget".into(),
    ))
}

/// Sup-norm distance between coefficient sequences after quotienting the
/// global sign: `min over signs of max_k |a(k) - sign * b(k)|`.
pub fn max_reconstruction_error<S: Scalar>(a: &CoeffWindow<S>, b: &CoeffWindow<S>) -> S {
    if a.is_empty() && b.is_empty() {
        return S::zero();
    }
    let lo = if a.is_empty() {
        b.k_low()
    } else if b.is_empty() {
        a.k_low()
    } else {
        a.k_low().min(b.k_low())
    };
    let hi = if a.is_empty() {
        b.k_high()
    } else if b.is_empty() {
        a.k_high()
    } else {
        a.k_high().max(b.k_high())
    };
    let mut plus = S::zero();
    let mut minus = S::zero();
    for k in lo..=hi {
        let x = a.get(k);
        let y = b.get(k);
        plus = plus.max((x - y).abs());
        minus = minus.max((x + y).abs());
    }
    plus.min(minus)
}

/// Largest gap between squared coefficients, `max_k |a(k)^2 - b(k)^2|`;
/// sign-free by construction.
pub fn max_squared_error<S: Scalar>(a: &CoeffWindow<S>, b: &CoeffWindow<S>) -> S {
    if a.is_empty() && b.is_empty() {
        return S::zero();
    }
    let lo = a.k_low().min(b.k_low());
    let hi = a.k_high().max(b.k_high());
    let mut worst = S::zero();
    for k in lo..=hi {
        let x = a.get(k);
        let y = b.get(k);
        worst = worst.max((x * x - y * y).abs());
    }
    worst
}

/// Threshold mode for the experiment runner.
///
/// The branch threshold is a free parameter of the reconstruction. The
/// analytical choice (`Oracle`, the one entering the stability report)
/// divides the minimum window energy by the worst submatrix conditioning
/// and comes out so small that measurement noise routinely pushes
/// zero-window extension steps into the large branch, where ill
/// conditioned solves amplify it. The default instead tracks the noise
/// floor of the branch statistic itself, scaled by the full node matrix
/// conditioning, which separates noise windows from genuine ones at
/// every noise level and degenerates to the exact noiseless algorithm as
/// the noise vanishes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum M0Setting {
    /// `N * cond(Phi)^2 * eps_eff / 32` where `eps_eff` is the absolute
    /// perturbation scale of the squared samples.
    #[default]
    NoiseFloor,
    /// The stability-report threshold computed from the true signal of
    /// each trial.
    Oracle,
    /// Threshold estimated from the minimization outputs.
    Auto,
}

fn default_threshold() -> f64 {
    0.1
}

fn default_noise() -> NoiseModel {
    NoiseModel::RelativeToPeak
}

fn default_scaling_trials() -> u32 {
    5
}

/// Full description of a success-rate experiment grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub generator: GeneratorDescriptor,
    #[serde(rename = "X")]
    pub x: Vec<f64>,
    pub gamma_idx: Vec<usize>,
    pub gamma_star_idx: Vec<usize>,
    pub model: CoeffModel,
    pub support: (i64, i64),
    pub epsilons: Vec<f64>,
    pub ls: Vec<i64>,
    pub trials: u32,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    pub seed: u64,
    #[serde(default)]
    pub m0: M0Setting,
    #[serde(default = "default_noise")]
    pub noise: NoiseModel,
    /// Noise redraws averaged per point by the scaling runner.
    #[serde(default = "default_scaling_trials")]
    pub scaling_trials: u32,
}

impl ExperimentSpec {
    /// Cubic geometry used throughout the experiments: nodes `m/8`, both
    /// extension sets on the odd nodes, coefficients on `[5, 32]`,
    /// relative noise.
    pub fn cubic_default(model: CoeffModel) -> Self {
        ExperimentSpec {
            generator: GeneratorDescriptor::Bspline { order: 4 },
            x: (1..=7).map(|m| m as f64 / 8.0).collect(),
            gamma_idx: vec![0, 2, 4, 6],
            gamma_star_idx: vec![0, 2, 4, 6],
            model,
            support: (5, 32),
            epsilons: vec![1e-5, 1e-7, 1e-9],
            ls: vec![7, 11, 15],
            trials: 200,
            threshold: 0.1,
            seed: 0x5150_4841_5345,
            m0: M0Setting::NoiseFloor,
            noise: NoiseModel::RelativeToPeak,
            scaling_trials: 5,
        }
    }

    pub fn read_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }

    pub fn write_path(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if self.trials < 1 {
            return Err(Error::InvalidArgument("trials must be at least 1".into()));
        }
        if self.threshold.is_nan() || self.threshold <= 0.0 {
            return Err(Error::InvalidArgument("threshold must be positive".into()));
        }
        if self.ls.iter().any(|&l| l < 1 || l % 2 == 0) {
            return Err(Error::InvalidArgument(
                "every L must be odd and positive".into(),
            ));
        }
        if self.epsilons.iter().any(|&e| e < 0.0) {
            return Err(Error::InvalidArgument(
                "noise levels must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    fn scheme_with_period(&self, period: i64) -> Result<(Generator<f64>, SamplingScheme<f64>)> {
        let g: Generator<f64> = self.generator.build()?;
        let scheme = SamplingScheme::new(
            g.support_len(),
            self.x.clone(),
            self.gamma_idx.clone(),
            self.gamma_star_idx.clone(),
            period,
        )?;
        Ok((g, scheme))
    }
}

/// Aggregated outcome of one `(epsilon, L)` cell.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CellResult {
    pub epsilon: f64,
    pub l: i64,
    pub trials: u32,
    pub success_rate: f64,
    pub mean_e: f64,
    pub max_e: f64,
    pub mean_e2: f64,
    /// Seed this cell's trials were derived from.
    pub seed: u64,
}

/// Squared condition number of the full node matrix, the scale factor of
/// the noise-floor threshold.
fn condition_sq(g: &Generator<f64>, scheme: &SamplingScheme<f64>) -> Result<f64> {
    let phi = crate::generator::PhiMatrix::build(g, scheme.nodes())?;
    let sv = crate::linalg::singular_values(phi.entries());
    let cond = sv[0] / sv[sv.len() - 1];
    Ok(cond * cond)
}

fn threshold_for(
    spec: &ExperimentSpec,
    signal: &SisSignal<f64>,
    cond_sq: f64,
    n: usize,
    eps: f64,
) -> M0Mode<f64> {
    match spec.m0 {
        M0Setting::NoiseFloor => {
            let eps_eff = match spec.noise {
                NoiseModel::Absolute => eps,
                NoiseModel::RelativeToPeak => {
                    let peak = signal.sup_norm_on_grid(64);
                    eps * peak * peak
                }
            };
            M0Mode::Explicit(n as f64 * cond_sq * eps_eff / 32.0)
        }
        M0Setting::Oracle => M0Mode::Oracle(signal.coeffs().clone()),
        M0Setting::Auto => M0Mode::Auto,
    }
}

fn run_trial(
    g: &Generator<f64>,
    scheme: &SamplingScheme<f64>,
    spec: &ExperimentSpec,
    cond_sq: f64,
    eps: f64,
    sig_seed: u64,
    noise_seed: u64,
) -> Result<(f64, f64)> {
    let signal = random_signal(g, spec.model, spec.support, sig_seed)?;
    let range = block_range_for_support(signal.support_bounds()?, scheme.period());
    let samples = take_phaseless_samples(&signal, scheme, range, eps, spec.noise, noise_seed)?;
    let config = MepsConfig {
        m0: threshold_for(spec, &signal, cond_sq, g.support_len(), eps),
        ..MepsConfig::default()
    };
    let rec = meps_reconstruct(&samples, scheme, g, &config)?;
    let e = max_reconstruction_error(rec.coeffs(), signal.coeffs());
    let e2 = max_squared_error(rec.coeffs(), signal.coeffs());
    Ok((e, e2))
}

/// Run the full grid, invoking `on_cell` as soon as each cell finishes so
/// partial results can be flushed.
pub fn run_experiment_with<F>(spec: &ExperimentSpec, mut on_cell: F) -> Result<Vec<CellResult>>
where
    F: FnMut(&CellResult) -> Result<()>,
{
    spec.validate()?;
    let mut results = Vec::new();
    for (li, &l) in spec.ls.iter().enumerate() {
        let (g, scheme) = spec.scheme_with_period(l)?;
        let cond_sq = condition_sq(&g, &scheme)?;
        for (ei, &eps) in spec.epsilons.iter().enumerate() {
            let cell_seed = derive_seed(spec.seed, &[1, ei as u64, li as u64]);
            let mut successes = 0u32;
            let mut sum_e = 0.0;
            let mut max_e = 0.0f64;
            let mut sum_e2 = 0.0;
            for trial in 0..spec.trials {
                let sig_seed = derive_seed(spec.seed, &[1, ei as u64, li as u64, trial as u64, 0]);
                let noise_seed =
                    derive_seed(spec.seed, &[1, ei as u64, li as u64, trial as u64, 1]);
                let (e, e2) = run_trial(&g, &scheme, spec, cond_sq, eps, sig_seed, noise_seed)?;
                if e < spec.threshold {
                    successes += 1;
                }
                sum_e += e;
                max_e = max_e.max(e);
                sum_e2 += e2;
            }
            let cell = CellResult {
                epsilon: eps,
                l,
                trials: spec.trials,
                success_rate: successes as f64 / spec.trials as f64,
                mean_e: sum_e / spec.trials as f64,
                max_e,
                mean_e2: sum_e2 / spec.trials as f64,
                seed: cell_seed,
            };
            on_cell(&cell)?;
            results.push(cell);
        }
    }
    Ok(results)
}

/// Run the full grid and collect the cells.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
    run_experiment_with(spec, |_| Ok(()))
}

pub fn write_results_header<W: Write>(mut w: W) -> Result<()> {
    writeln!(w, "epsilon,L,trials,success_rate,mean_e,max_e,mean_e2")?;
    Ok(())
}

pub fn write_results_row<W: Write>(mut w: W, cell: &CellResult) -> Result<()> {
    writeln!(
        w,
        "{},{},{},{},{},{},{}",
        cell.epsilon, cell.l, cell.trials, cell.success_rate, cell.mean_e, cell.max_e, cell.mean_e2
    )?;
    Ok(())
}

pub fn write_results_csv<W: Write>(mut w: W, cells: &[CellResult]) -> Result<()> {
    write_results_header(&mut w)?;
    for cell in cells {
        write_results_row(&mut w, cell)?;
    }
    Ok(())
}

/// One noise level of the scaling run.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ScalingPoint {
    pub epsilon: f64,
    /// Mean sup-norm error over the noise redraws.
    pub e: f64,
    /// Mean sup-norm error over the coefficient range at distance `N`
    /// inside the support.
    pub e_interior: f64,
    /// Mean squared-coefficient error.
    pub e2: f64,
}

/// Log-log slope report of the error against the noise level.
#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub l: i64,
    pub signal_seed: u64,
    pub points: Vec<ScalingPoint>,
    pub slope_e: f64,
    pub slope_interior: f64,
    pub slope_e2: f64,
}

impl ScalingReport {
    pub fn write_path(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

fn fit_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}

/// Error scaling for one fixed signal over the noise grid, using the
/// first entry of the period grid. Requires the noise grid to span at
/// least three decades. Per noise level the errors are averaged over
/// `scaling_trials` independent noise draws before the log-log fit.
pub fn run_scaling_experiment(spec: &ExperimentSpec) -> Result<ScalingReport> {
    spec.validate()?;
    if spec.epsilons.len() < 3 {
        return Err(Error::InvalidArgument(
            "scaling needs at least 3 noise levels".into(),
        ));
    }
    let max_eps = spec.epsilons.iter().cloned().fold(0.0f64, f64::max);
    let min_eps = spec.epsilons.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_eps.is_nan() || min_eps <= 0.0 || (max_eps / min_eps).log10() < 2.999 {
        return Err(Error::InvalidArgument(
            "noise grid must span at least three decades".into(),
        ));
    }
    let l = spec.ls[0];
    let (g, scheme) = spec.scheme_with_period(l)?;
    let cond_sq = condition_sq(&g, &scheme)?;
    let signal_seed = derive_seed(spec.seed, &[2]);
    let signal = random_signal(&g, spec.model, spec.support, signal_seed)?;
    let (k_minus, k_plus) = signal.support_bounds()?;
    let n = g.support_len() as i64;
    let range = block_range_for_support((k_minus, k_plus), l);

    let mut points = Vec::new();
    for (ei, &eps) in spec.epsilons.iter().enumerate() {
        let config = MepsConfig {
            m0: threshold_for(spec, &signal, cond_sq, g.support_len(), eps),
            ..MepsConfig::default()
        };
        let trials = spec.scaling_trials.max(1);
        let mut sum_e = 0.0;
        let mut sum_int = 0.0;
        let mut sum_e2 = 0.0;
        for trial in 0..trials {
            let noise_seed = derive_seed(spec.seed, &[2, ei as u64, trial as u64, 1]);
            let samples =
                take_phaseless_samples(&signal, &scheme, range, eps, spec.noise, noise_seed)?;
            let rec = meps_reconstruct(&samples, &scheme, &g, &config)?;
            let e = max_reconstruction_error(rec.coeffs(), signal.coeffs());
            let e2 = max_squared_error(rec.coeffs(), signal.coeffs());

            // align the global sign before measuring the interior error
            let mut plus = 0.0f64;
            let mut minus = 0.0f64;
            for k in rec.coeffs().k_low()..=rec.coeffs().k_high() {
                let x = rec.coeffs().get(k);
                let y = signal.coeffs().get(k);
                plus = plus.max((x - y).abs());
                minus = minus.max((x + y).abs());
            }
            let delta = if plus <= minus { 1.0 } else { -1.0 };
            let mut interior = 0.0f64;
            for k in (k_minus + n)..=(k_plus - n) {
                let d = (rec.coeffs().get(k) - delta * signal.coeffs().get(k)).abs();
                interior = interior.max(d);
            }
            sum_e += e;
            sum_int += interior;
            sum_e2 += e2;
        }
        points.push(ScalingPoint {
            epsilon: eps,
            e: sum_e / trials as f64,
            e_interior: sum_int / trials as f64,
            e2: sum_e2 / trials as f64,
        });
    }

    let xs: Vec<f64> = points.iter().map(|p| p.epsilon.ln()).collect();
    let ye: Vec<f64> = points.iter().map(|p| p.e.ln()).collect();
    let yi: Vec<f64> = points.iter().map(|p| p.e_interior.ln()).collect();
    let y2: Vec<f64> = points.iter().map(|p| p.e2.ln()).collect();
    Ok(ScalingReport {
        l,
        signal_seed,
        points,
        slope_e: fit_slope(&xs, &ye),
        slope_interior: fit_slope(&xs, &yi),
        slope_e2: fit_slope(&xs, &y2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sided_draws_avoid_the_gap() {
        let g = Generator::<f64>::bspline(4).unwrap();
        let f = random_signal(&g, CoeffModel::TwoSided, (5, 32), 12).unwrap();
        let (lo, hi) = f.support_bounds().unwrap();
        assert_eq!((lo, hi), (5, 32));
        for (_, c) in f.coeffs().iter() {
            assert!(c.abs() >= 0.1 && c.abs() <= 1.0);
        }
        assert!(f.is_nonseparable().unwrap());
    }

    #[test]
    fn one_phase_draws_are_positive() {
        let g = Generator::<f64>::bspline(4).unwrap();
        let f = random_signal(&g, CoeffModel::OnePhase, (0, 20), 3).unwrap();
        for (_, c) in f.coeffs().iter() {
            assert!((0.1..=1.0).contains(&c));
        }
    }

    #[test]
    fn identical_seed_identical_signal() {
        let g = Generator::<f64>::bspline(2).unwrap();
        let a = random_signal(&g, CoeffModel::TwoSided, (0, 9), 77).unwrap();
        let b = random_signal(&g, CoeffModel::TwoSided, (0, 9), 77).unwrap();
        assert_eq!(a, b);
        let c = random_signal(&g, CoeffModel::TwoSided, (0, 9), 78).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn reconstruction_error_quotient() {
        let a = CoeffWindow::new(0, vec![1.0f64, -2.0, 0.5]);
        assert_eq!(max_reconstruction_error(&a, &a), 0.0);
        let neg = CoeffWindow::new(0, vec![-1.0, 2.0, -0.5]);
        assert_eq!(max_reconstruction_error(&a, &neg), 0.0);
        let mut bumped = a.clone();
        bumped.set(1, -1.95);
        assert!((max_reconstruction_error(&a, &bumped) - 0.05).abs() < 1e-15);
        // symmetric
        assert_eq!(
            max_reconstruction_error(&a, &bumped),
            max_reconstruction_error(&bumped, &a)
        );
    }

    #[test]
    fn squared_error_examples() {
        let a = CoeffWindow::new(0, vec![1.0f64, 0.5]);
        let b = CoeffWindow::new(0, vec![-1.0, -0.5]);
        assert_eq!(max_squared_error(&a, &b), 0.0);
        let c = CoeffWindow::new(0, vec![1.1, 0.5]);
        assert!((max_squared_error(&c, &a) - 0.21).abs() < 1e-12);
    }

    #[test]
    fn squared_error_factorization_bound() {
        let mut state = 5u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..200 {
            let a = CoeffWindow::new(0, (0..6).map(|_| next()).collect());
            let b = CoeffWindow::new(0, (0..6).map(|_| next()).collect());
            let e = max_reconstruction_error(&a, &b);
            let e2 = max_squared_error(&a, &b);
            let sup_a = a.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sup_b = b.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(e2 <= e * (sup_a + sup_b) + 1e-12);
        }
    }

    #[test]
    fn noiseless_cells_always_succeed() {
        let mut spec = ExperimentSpec::cubic_default(CoeffModel::TwoSided);
        spec.support = (0, 12);
        spec.epsilons = vec![0.0];
        spec.ls = vec![3];
        spec.trials = 5;
        let cells = run_experiment(&spec).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!(cells[0].success_rate, 1.0);
        assert!(cells[0].max_e <= 1e-8);
    }

    #[test]
    fn experiment_csv_is_deterministic() {
        let mut spec = ExperimentSpec::cubic_default(CoeffModel::TwoSided);
        spec.support = (0, 10);
        spec.epsilons = vec![1e-7];
        spec.ls = vec![3];
        spec.trials = 4;
        let mut buf_a = Vec::new();
        write_results_csv(&mut buf_a, &run_experiment(&spec).unwrap()).unwrap();
        let mut buf_b = Vec::new();
        write_results_csv(&mut buf_b, &run_experiment(&spec).unwrap()).unwrap();
        assert_eq!(buf_a, buf_b);
        let text = String::from_utf8(buf_a).unwrap();
        assert!(text.starts_with("epsilon,L,trials,success_rate,mean_e,max_e,mean_e2\n"));
    }

    #[test]
    fn scaling_grid_guard() {
        let mut spec = ExperimentSpec::cubic_default(CoeffModel::TwoSided);
        spec.epsilons = vec![1e-6, 1e-7];
        assert!(run_scaling_experiment(&spec).is_err());
    }

    #[test]
    fn seed_derivation_is_stable() {
        let a = derive_seed(42, &[1, 2, 3]);
        let b = derive_seed(42, &[1, 2, 3]);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(42, &[1, 2, 4]));
        assert_ne!(a, derive_seed(43, &[1, 2, 3]));
    }
}
