//! Closed-form reconstruction for the hat generator.
//!
//! Piecewise linear signals are interpolatory: `f(k+1) = c(k)`. Three
//! squared magnitudes inside one anchor interval determine `|f(k0)|^2`,
//! `2 f(k0) f(k0+1)` and `|f(k0+1)|^2` through explicit 3x3 determinants,
//! and two squared magnitudes per interval propagate the values across
//! the line by a first-order recursion. This gives an independent check
//! of the block pipeline for order 2, exact on noiseless data.
//!
//! Rounding grows geometrically along the recursion, by roughly
//! `(1-x)/x` per forward step and `x/(1-x)` per backward step, so for
//! long signals the first two nodes should sit near `1/2`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signal::{CoeffWindow, SisSignal};

/// Magnitudes below this fraction of the largest sampled magnitude are
/// treated as exact zeros by the recursion.
pub const DEFAULT_ZERO_TOL: f64 = 1e-7;

/// Noiseless squared magnitudes feeding the closed-form recursion:
/// three anchor samples at `k0 + x_i` and a pair `(k + x_1, k + x_2)`
/// for every integer `k` in the covered range.
#[derive(Debug, Clone)]
pub struct HatOracleSamples<S> {
    x: [S; 3],
    k0: i64,
    z_anchor: [S; 3],
    k_low: i64,
    pairs: Vec<[S; 2]>,
}

impl<S: Scalar> HatOracleSamples<S> {
    pub fn new(
        x: [S; 3],
        k0: i64,
        z_anchor: [S; 3],
        k_low: i64,
        pairs: Vec<[S; 2]>,
    ) -> Result<Self> {
        for &xi in &x {
            if !(xi > S::zero() && xi < S::one()) {
                return Err(Error::InvalidArgument(format!(
                    "node {xi} is outside the open unit interval"
                )));
            }
        }
        if x[0] == x[1] || x[0] == x[2] || x[1] == x[2] {
            return Err(Error::InvalidArgument("nodes must be distinct".into()));
        }
        let k_high = k_low + pairs.len() as i64 - 1;
        if pairs.is_empty() || k0 < k_low || k0 > k_high {
            return Err(Error::InvalidArgument(
                "anchor interval must lie inside the sampled range".into(),
            ));
        }
        Ok(HatOracleSamples {
            x,
            k0,
            z_anchor,
            k_low,
            pairs,
        })
    }

    pub fn k_range(&self) -> (i64, i64) {
        (self.k_low, self.k_low + self.pairs.len() as i64 - 1)
    }
}

/// Sample a hat-generator signal noiselessly at the oracle's locations.
pub fn sample_hat_oracle<S: Scalar>(
    f: &SisSignal<S>,
    x: [S; 3],
    k0: i64,
    k_range: (i64, i64),
) -> Result<HatOracleSamples<S>> {
    if f.generator().support_len() != 2 {
        return Err(Error::InvalidArgument(
            "closed form applies to support length 2 only".into(),
        ));
    }
    let sq = |v: S| v * v;
    let z_anchor = [
        sq(f.eval(S::from_i64(k0).unwrap() + x[0])),
        sq(f.eval(S::from_i64(k0).unwrap() + x[1])),
        sq(f.eval(S::from_i64(k0).unwrap() + x[2])),
    ];
    let (lo, hi) = k_range;
    let mut pairs = Vec::new();
    for k in lo..=hi {
        let base = S::from_i64(k).unwrap();
        pairs.push([sq(f.eval(base + x[0])), sq(f.eval(base + x[1]))]);
    }
    HatOracleSamples::new(x, k0, z_anchor, lo, pairs)
}

fn det3<S: Scalar>(m: [[S; 3]; 3]) -> S {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// One recursion step along a unit interval with nodes `(x1, x2)`: given
/// the value `a` at the known end and the two squared magnitudes inside
/// the interval, return the value at the other end.
fn step<S: Scalar>(a: S, prev_known: S, z1: S, z2: S, x1: S, x2: S, tol: S) -> S {
    let two = S::from_f64_lossy(2.0);
    if a.abs() > tol {
        let da =
            (x1 * x1 * (z2 - a * a) - x2 * x2 * (z1 - a * a)) / (two * x1 * x2 * (x1 - x2) * a);
        a + da
    } else if prev_known.abs() > tol {
        // a vanishes right after the support ends, so the next value is zero
        S::zero()
    } else {
        ((z1 + z2) / (x1 * x1 + x2 * x2)).max(S::zero()).sqrt()
    }
}

/// Run the closed-form recovery with the default zero tolerance.
pub fn linear_spline_oracle<S: Scalar>(samples: &HatOracleSamples<S>) -> Result<CoeffWindow<S>> {
    linear_spline_oracle_with_tol(samples, S::from_f64_lossy(DEFAULT_ZERO_TOL))
}

/// Closed-form recovery of the coefficients, up to one global sign.
///
/// `zero_tol` is relative to the largest sampled magnitude; values below
/// it are treated as exact zeros when the recursion decides between its
/// nonzero, zero-after-support and fresh-anchor branches.
pub fn linear_spline_oracle_with_tol<S: Scalar>(
    samples: &HatOracleSamples<S>,
    zero_tol: S,
) -> Result<CoeffWindow<S>> {
    let [x1, x2, x3] = samples.x;
    let (k_low, k_high) = samples.k_range();
    let len = (k_high - k_low + 2) as usize; // values at integers k_low..=k_high+1
    let mut fv = vec![S::zero(); len];
    let at = |k: i64| (k - k_low) as usize;

    let scale = samples
        .pairs
        .iter()
        .flatten()
        .chain(samples.z_anchor.iter())
        .fold(S::zero(), |a, &z| a.max(z))
        .sqrt();
    if scale == S::zero() {
        return Ok(CoeffWindow::new(k_low - 1, vec![S::zero(); len]));
    }
    let tol = zero_tol * scale;

    // anchor: solve the three-sample system on [k0, k0+1]
    let [z1, z2, z3] = samples.z_anchor;
    let one = S::one();
    let denom = (x2 - x1) * (x3 - x1) * (x3 - x2);
    let col_a = [
        (one - x1) * (one - x1),
        (one - x2) * (one - x2),
        (one - x3) * (one - x3),
    ];
    let col_b = [x1 * (one - x1), x2 * (one - x2), x3 * (one - x3)];
    let col_c = [x1 * x1, x2 * x2, x3 * x3];
    let a_sq = det3([
        [z1, col_b[0], col_c[0]],
        [z2, col_b[1], col_c[1]],
        [z3, col_b[2], col_c[2]],
    ]) / denom;
    let cross = det3([
        [col_a[0], z1, col_c[0]],
        [col_a[1], z2, col_c[1]],
        [col_a[2], z3, col_c[2]],
    ]) / denom;
    let b_sq = det3([
        [col_a[0], col_b[0], z1],
        [col_a[1], col_b[1], z2],
        [col_a[2], col_b[2], z3],
    ]) / denom;

    let k0 = samples.k0;
    let fa = a_sq.max(S::zero()).sqrt();
    let fb = if fa > tol {
        cross / (S::from_f64_lossy(2.0) * fa)
    } else {
        b_sq.max(S::zero()).sqrt()
    };
    fv[at(k0)] = fa;
    fv[at(k0 + 1)] = fb;

    // walk right: pairs at p determine f(p+1) from f(p)
    for p in (k0 + 1)..=k_high {
        let [z1p, z2p] = samples.pairs[(p - k_low) as usize];
        let prev = fv[at(p - 1)];
        fv[at(p + 1)] = step(fv[at(p)], prev, z1p, z2p, x1, x2, tol);
    }
    // walk left: pairs at p-1 mirror the interval, nodes become 1 - x
    let y1 = one - x1;
    let y2 = one - x2;
    for p in (k_low + 1..=k0).rev() {
        let [z1p, z2p] = samples.pairs[(p - 1 - k_low) as usize];
        let ahead = fv[at(p + 1)];
        fv[at(p - 1)] = step(fv[at(p)], ahead, z1p, z2p, y1, y2, tol);
    }

    // coefficients: c(k) = f(k+1)
    Ok(CoeffWindow::new(k_low - 1, fv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::Generator;

    fn hat_signal(k_low: i64, values: Vec<f64>) -> SisSignal<f64> {
        SisSignal::new(Generator::bspline(2).unwrap(), k_low, values)
    }

    const NODES: [f64; 3] = [0.2, 0.45, 0.8];

    #[test]
    fn constant_signal_recovers_its_level() {
        let c0 = 0.6;
        let f = hat_signal(-6, vec![c0; 13]);
        let samples = sample_hat_oracle(&f, NODES, 0, (-4, 4)).unwrap();
        let rec = linear_spline_oracle(&samples).unwrap();
        for k in -4..=3i64 {
            assert!((rec.get(k).abs() - c0).abs() < 1e-12, "k {k}");
        }
        // the anchor determinant itself returns the squared level
        let z = samples.z_anchor;
        assert!((z[0].sqrt() - c0).abs() < 1e-12);
    }

    #[test]
    fn random_nonseparable_signal_matches_up_to_sign() {
        let truth = vec![0.8, -0.5, 0.9, 0.3, -0.7, 0.6, -0.4, 0.85];
        let f = hat_signal(2, truth);
        let samples = sample_hat_oracle(&f, NODES, 5, (-1, 12)).unwrap();
        let rec = linear_spline_oracle(&samples).unwrap();
        let err = crate::harness::max_reconstruction_error(&rec, f.coeffs());
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn anchor_on_zero_plateau_uses_fresh_start() {
        // support sits entirely right of the anchor interval
        let f = hat_signal(3, vec![0.7, 0.4, 0.9]);
        let samples = sample_hat_oracle(&f, NODES, 0, (-2, 8)).unwrap();
        let rec = linear_spline_oracle(&samples).unwrap();
        let err = crate::harness::max_reconstruction_error(&rec, f.coeffs());
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn double_zero_start_formula() {
        // f(k0) = f(k0+1) = 0 and the next magnitude follows the
        // two-sample quotient
        let f = hat_signal(1, vec![0.9, -0.6]);
        let samples = sample_hat_oracle(&f, NODES, 0, (0, 4)).unwrap();
        let rec = linear_spline_oracle(&samples).unwrap();
        let z1 = f.eval(1.0 + NODES[0]).powi(2);
        let z2 = f.eval(1.0 + NODES[1]).powi(2);
        let expected = ((z1 + z2) / (NODES[0] * NODES[0] + NODES[1] * NODES[1])).sqrt();
        assert!((rec.get(1).abs() - expected).abs() < 1e-12);
        assert!((expected - 0.9).abs() < 1e-12);
        let err = crate::harness::max_reconstruction_error(&rec, f.coeffs());
        assert!(err < 1e-10, "err {err}");
    }

    #[test]
    fn coincident_nodes_rejected() {
        let f = hat_signal(0, vec![1.0, 1.0]);
        assert!(sample_hat_oracle(&f, [0.2, 0.2, 0.8], 0, (0, 2)).is_err());
        assert!(sample_hat_oracle(&f, [0.2, 0.5, 1.0], 0, (0, 2)).is_err());
    }

    #[test]
    fn wrong_generator_order_rejected() {
        let f = SisSignal::new(Generator::bspline(3).unwrap(), 0, vec![1.0, 1.0]);
        assert!(sample_hat_oracle(&f, NODES, 0, (0, 2)).is_err());
    }
}
