//! Signals in the shift-invariant space of a generator, plus the
//! structural quantities that control phase retrievability.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::generator::{Generator, PhiMatrix};
use crate::sampling::SamplingScheme;
use crate::scalar::Scalar;

/// Real coefficients stored on an explicit integer window.
///
/// Values outside the window are implicitly zero; explicit zeros inside
/// the window are kept, since reconstructions produce meaningful entries
/// just outside the true support.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffWindow<S> {
    k_low: i64,
    values: Vec<S>,
}

impl<S: Scalar> CoeffWindow<S> {
    pub fn new(k_low: i64, values: Vec<S>) -> Self {
        CoeffWindow { k_low, values }
    }

    pub fn empty() -> Self {
        CoeffWindow {
            k_low: 0,
            values: Vec::new(),
        }
    }

    pub fn k_low(&self) -> i64 {
        self.k_low
    }

    pub fn k_high(&self) -> i64 {
        self.k_low + self.values.len() as i64 - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[S] {
        &self.values
    }

    /// Coefficient at index `k`, zero outside the stored window.
    pub fn get(&self, k: i64) -> S {
        if self.values.is_empty() || k < self.k_low || k > self.k_high() {
            S::zero()
        } else {
            self.values[(k - self.k_low) as usize]
        }
    }

    pub fn set(&mut self, k: i64, v: S) {
        assert!(
            !self.values.is_empty() && k >= self.k_low && k <= self.k_high(),
            "index {k} outside stored window"
        );
        self.values[(k - self.k_low) as usize] = v;
    }

    /// Tight first and last nonzero indices, `None` for the zero window.
    pub fn support_bounds(&self) -> Option<(i64, i64)> {
        let first = self.values.iter().position(|v| *v != S::zero())?;
        let last = self.values.iter().rposition(|v| *v != S::zero())?;
        Some((self.k_low + first as i64, self.k_low + last as i64))
    }

    /// Same window shifted by `k0`.
    pub fn shifted(&self, k0: i64) -> Self {
        CoeffWindow {
            k_low: self.k_low + k0,
            values: self.values.clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, S)> + '_ {
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.k_low + i as i64, v))
    }

    /// Write as CSV with header `k,c`, one row per stored index, sorted.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,c")?;
        for (k, v) in self.iter() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Read a `k,<value>` CSV such as the coefficient or reconstruction
    /// files. Rows may be unsorted; gaps become explicit zeros; a
    /// duplicated index is an error.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut rows: Vec<(i64, S)> = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            let is_header = ln == 0 && line.to_ascii_lowercase().starts_with("k,");
            if line.is_empty() || is_header {
                continue;
            }
            let mut parts = line.split(',');
            let k: i64 = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing k", ln + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let c: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing c", ln + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            rows.push((k, S::from_f64_lossy(c)));
        }
        if rows.is_empty() {
            return Err(Error::Parse("coefficient file has no rows".into()));
        }
        rows.sort_by_key(|r| r.0);
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::Parse(format!("duplicate index {}", w[0].0)));
            }
        }
        let k_low = rows[0].0;
        let k_high = rows.last().unwrap().0;
        let mut values = vec![S::zero(); (k_high - k_low + 1) as usize];
        for (k, v) in rows {
            values[(k - k_low) as usize] = v;
        }
        Ok(CoeffWindow { k_low, values })
    }

    pub fn read_csv_path(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f)
    }
}

/// A signal `f(t) = sum_k c(k) phi(t - k)` with finitely many nonzero
/// coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SisSignal<S> {
    generator: Generator<S>,
    coeffs: CoeffWindow<S>,
}

impl<S: Scalar> SisSignal<S> {
    pub fn new(generator: Generator<S>, k_low: i64, values: Vec<S>) -> Self {
        SisSignal {
            generator,
            coeffs: CoeffWindow::new(k_low, values),
        }
    }

    pub fn from_window(generator: Generator<S>, coeffs: CoeffWindow<S>) -> Self {
        SisSignal { generator, coeffs }
    }

    pub fn generator(&self) -> &Generator<S> {
        &self.generator
    }

    pub fn coeffs(&self) -> &CoeffWindow<S> {
        &self.coeffs
    }

    /// Point evaluation; only the indices with `t - N < k < t` contribute.
    pub fn eval(&self, t: S) -> S {
        if self.coeffs.is_empty() {
            return S::zero();
        }
        let n = self.generator.support_len() as i64;
        let lo = (t - S::from_i64(n).unwrap())
            .ceil()
            .to_i64()
            .unwrap_or(i64::MIN);
        let hi = t.floor().to_i64().unwrap_or(i64::MAX);
        let lo = lo.max(self.coeffs.k_low());
        let hi = hi.min(self.coeffs.k_high());
        let mut acc = S::zero();
        let mut k = lo;
        while k <= hi {
            let c = self.coeffs.get(k);
            if c != S::zero() {
                acc += c * self.generator.eval(t - S::from_i64(k).unwrap());
            }
            k += 1;
        }
        acc
    }

    /// Tight nonzero coefficient bounds; the zero signal is an error.
    pub fn support_bounds(&self) -> Result<(i64, i64)> {
        self.coeffs.support_bounds().ok_or(Error::EmptySignal)
    }

    pub fn shifted(&self, k0: i64) -> Self {
        SisSignal {
            generator: self.generator.clone(),
            coeffs: self.coeffs.shifted(k0),
        }
    }

    /// Energy of the length `N-1` coefficient window starting at `k`,
    /// with entries treated as zero when `|c| <= tol`.
    fn window_energy(&self, k: i64, tol: S) -> S {
        let n = self.generator.support_len() as i64;
        let mut acc = S::zero();
        for l in 0..(n - 1) {
            let c = self.coeffs.get(k + l);
            if c.abs() > tol {
                acc += c * c;
            }
        }
        acc
    }

    /// Structural nonseparability with an explicit zero tolerance on the
    /// coefficients (useful for imported data).
    pub fn is_nonseparable_tol(&self, tol: S) -> Result<bool> {
        let n = self.generator.support_len() as i64;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "separability criterion needs support length at least 2".into(),
            ));
        }
        let (k_minus, k_plus) = self.support_bounds()?;
        let mut k = k_minus - n + 2;
        while k <= k_plus {
            if self.window_energy(k, tol) == S::zero() {
                return Ok(false);
            }
            k += 1;
        }
        Ok(true)
    }

    /// True when every interior coefficient window of length `N-1` is
    /// nonzero, which is exactly the condition for the signal to be
    /// determined up to a sign by its magnitudes.
    pub fn is_nonseparable(&self) -> Result<bool> {
        self.is_nonseparable_tol(S::zero())
    }

    /// Minimum interior window energy; zero exactly for separable signals.
    pub fn window_energy_min(&self) -> Result<S> {
        let n = self.generator.support_len() as i64;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "window energy needs support length at least 2".into(),
            ));
        }
        let (k_minus, k_plus) = self.support_bounds()?;
        let mut best = S::infinity();
        let mut k = k_minus - n + 2;
        while k <= k_plus {
            let e = self.window_energy(k, S::zero());
            if e < best {
                best = e;
            }
            k += 1;
        }
        Ok(best)
    }

    /// Maximum ratio of the length `N+1` window energy to its inner
    /// length `N-1` window energy; infinite for separable signals.
    pub fn window_energy_ratio_max(&self) -> Result<S> {
        let n = self.generator.support_len() as i64;
        if n < 2 {
            return Err(Error::InvalidArgument(
                "window ratio needs support length at least 2".into(),
            ));
        }
        let (k_minus, k_plus) = self.support_bounds()?;
        let mut worst = S::zero();
        let mut k = k_minus - n + 2;
        while k <= k_plus {
            let denom = self.window_energy(k, S::zero());
            let mut num = S::zero();
            for l in -1..n {
                let c = self.coeffs.get(k + l);
                num += c * c;
            }
            let ratio = if denom == S::zero() {
                S::infinity()
            } else {
                num / denom
            };
            if ratio > worst {
                worst = ratio;
            }
            k += 1;
        }
        Ok(worst)
    }

    /// Sup norm of `|f|` estimated on a uniform grid with `pts_per_unit`
    /// points per unit interval over the stored coefficient window.
    pub fn sup_norm_on_grid(&self, pts_per_unit: usize) -> S {
        if self.coeffs.is_empty() {
            return S::zero();
        }
        let n = self.generator.support_len() as i64;
        let lo = self.coeffs.k_low();
        let hi = self.coeffs.k_high() + n;
        let total = ((hi - lo) as usize) * pts_per_unit;
        let step = S::one() / S::from_usize(pts_per_unit).unwrap();
        let mut best = S::zero();
        for i in 0..=total {
            let t = S::from_i64(lo).unwrap() + step * S::from_usize(i).unwrap();
            let v = self.eval(t).abs();
            if v > best {
                best = v;
            }
        }
        best
    }
}

/// Stability constants of a signal under a sampling scheme.
#[derive(Debug, Clone, Copy)]
pub struct StabilityReport<S> {
    /// Minimum interior window energy (distance proxy to the separable set).
    pub s_f: S,
    /// Maximum window energy ratio; infinite for separable signals.
    pub m_f: S,
    /// Error amplification constant of the extension steps.
    pub c_f_phi: S,
    /// Branch threshold `s_f / (4 * inverse_norm^2)`.
    pub m0: S,
    /// Worst submatrix inverse norm of the node matrix.
    pub phi_inverse_norm: S,
    /// Operator norm of the full node matrix.
    pub phi_norm: S,
    /// Largest noise level for which the reconstruction bound is guaranteed.
    pub noise_budget: S,
    /// Set when the signal is separable; the other fields then degrade to
    /// the documented sentinels instead of failing.
    pub separable: bool,
}

impl<S: Scalar> StabilityReport<S> {
    /// Right side of the reconstruction guarantee for noise level `eps`:
    /// `N * inverse_norm * c_f_phi^(N-1+(L-1)/2) * sqrt(8 eps)`.
    pub fn error_bound(&self, support_len: usize, period: i64, eps: S) -> S {
        let n = S::from_usize(support_len).unwrap();
        let expo = (support_len as i64 - 1 + (period - 1) / 2) as i32;
        n * self.phi_inverse_norm * self.c_f_phi.powi(expo) * (S::from_f64_lossy(8.0) * eps).sqrt()
    }
}

/// Compute every stability constant of `f` for the given node matrix and
/// scheme.
pub fn compute_stability_report<S: Scalar>(
    f: &SisSignal<S>,
    phi: &PhiMatrix<S>,
    scheme: &SamplingScheme<S>,
) -> Result<StabilityReport<S>> {
    let n = f.generator().support_len();
    if n != phi.order() || n != scheme.support_len() {
        return Err(Error::InvalidArgument(
            "signal, matrix and scheme disagree on the support length".into(),
        ));
    }
    let s_f = f.window_energy_min()?;
    let m_f = f.window_energy_ratio_max()?;
    let separable = s_f == S::zero();
    let analysis = phi.spark_analysis();
    let inv = analysis.inverse_norm;
    let norm = analysis.spectral_norm;
    let mut min_node = S::infinity();
    for i in 0..n {
        let a = f.generator().eval(scheme.gamma(i)).abs();
        let b = f.generator().eval(scheme.gamma_star_star(i)).abs();
        min_node = min_node.min(a).min(b);
    }
    if min_node == S::zero() {
        return Err(Error::InvalidScheme(
            "generator vanishes at an extension node".into(),
        ));
    }
    let c_f_phi = S::from_f64_lossy(256.0) * norm.powi(4) * inv.powi(3) * m_f / min_node;
    let m0 = if separable {
        S::zero()
    } else {
        s_f / (S::from_f64_lossy(4.0) * inv * inv)
    };
    let l = scheme.period();
    let budget_expo = (4 * n as i64 + l - 5) as i32;
    let n3 = S::from_usize(n * n * n).unwrap();
    let noise_budget =
        s_f / (S::from_f64_lossy(128.0) * n3 * inv * inv * c_f_phi.powi(budget_expo));
    Ok(StabilityReport {
        s_f,
        m_f,
        c_f_phi,
        m0,
        phi_inverse_norm: inv,
        phi_norm: norm,
        noise_budget,
        separable,
    })
}
