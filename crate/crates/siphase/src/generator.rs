//! Compactly supported generators and the node sample matrix.
//!
//! A generator is a continuous real function vanishing outside `[0, N]`
//! where `N` is its support length. Built in: cardinal B-splines of any
//! order, evaluated by the exact piecewise-polynomial recursion, and
//! tabulated functions with piecewise-linear interpolation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{for_each_combination, min_singular_value, singular_values, Mat};
use crate::scalar::Scalar;

/// Cardinal B-spline of the given order at `t`.
///
/// Order 1 is the indicator of `[0, 1)`; higher orders follow the
/// convolution recursion, so every value is an exact piecewise
/// polynomial evaluation rather than an approximation.
pub fn bspline_eval<S: Scalar>(order: usize, t: S) -> Result<S> {
    if order == 0 {
        return Err(Error::InvalidArgument(
            "b-spline order must be positive".into(),
        ));
    }
    Ok(bspline_rec(order, t))
}

fn bspline_rec<S: Scalar>(order: usize, t: S) -> S {
    // half-open support; keeps the partition of unity exact for order 1
    if t < S::zero() || t >= S::from_usize(order).unwrap() {
        return S::zero();
    }
    if order == 1 {
        return S::one();
    }
    let nm1 = S::from_usize(order - 1).unwrap();
    let n = S::from_usize(order).unwrap();
    (t * bspline_rec(order - 1, t) + (n - t) * bspline_rec(order - 1, t - S::one())) / nm1
}

#[derive(Debug, Clone, PartialEq)]
enum GeneratorKind<S> {
    BSpline,
    /// Uniform samples over `[0, N]`, interpolated linearly. Endpoints are
    /// zero so the interpolant is continuous on the whole line.
    Tabulated {
        values: Vec<S>,
    },
}

/// A compactly supported continuous generator with support `[0, N]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator<S> {
    kind: GeneratorKind<S>,
    support_len: usize,
}

impl<S: Scalar> Generator<S> {
    /// B-spline generator of order `n` (support length `n`).
    pub fn bspline(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidArgument(
                "b-spline order must be positive".into(),
            ));
        }
        Ok(Generator {
            kind: GeneratorKind::BSpline,
            support_len: order,
        })
    }

    /// Tabulated generator from uniform samples over `[0, support_len]`.
    ///
    /// The table must start and end with zero and contain at least two
    /// values. Evaluation interpolates linearly, so the result is only as
    /// accurate as the grid.
    pub fn tabulated(values: Vec<S>, support_len: usize) -> Result<Self> {
        if support_len == 0 {
            return Err(Error::InvalidArgument(
                "support length must be positive".into(),
            ));
        }
        if values.len() < 2 {
            return Err(Error::InvalidArgument(
                "table needs at least two values".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("table values must be finite".into()));
        }
        if values[0] != S::zero() || *values.last().unwrap() != S::zero() {
            return Err(Error::InvalidArgument(
                "table endpoints must be zero for a continuous generator".into(),
            ));
        }
        Ok(Generator {
            kind: GeneratorKind::Tabulated { values },
            support_len,
        })
    }

    /// Support length `N`; the function vanishes outside `[0, N]`.
    pub fn support_len(&self) -> usize {
        self.support_len
    }

    pub fn is_bspline(&self) -> bool {
        matches!(self.kind, GeneratorKind::BSpline)
    }

    /// Evaluate at `t`. Exactly zero whenever `t <= 0` or `t >= N`.
    pub fn eval(&self, t: S) -> S {
        let n = S::from_usize(self.support_len).unwrap();
        if t <= S::zero() || t >= n {
            return S::zero();
        }
        match &self.kind {
            GeneratorKind::BSpline => bspline_rec(self.support_len, t),
            GeneratorKind::Tabulated { values } => {
                let cells = S::from_usize(values.len() - 1).unwrap();
                let pos = t / n * cells;
                let cell = pos.floor();
                let i = cell.to_usize().unwrap().min(values.len() - 2);
                let frac = pos - S::from_usize(i).unwrap();
                values[i] + (values[i + 1] - values[i]) * frac
            }
        }
    }
}

/// Wire form of a generator used inside scheme and experiment JSON files.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GeneratorDescriptor {
    Bspline { order: usize },
    Tabulated { values: Vec<f64>, support: usize },
}

impl GeneratorDescriptor {
    pub fn build<S: Scalar>(&self) -> Result<Generator<S>> {
        match self {
            GeneratorDescriptor::Bspline { order } => Generator::bspline(*order),
            GeneratorDescriptor::Tabulated { values, support } => Generator::tabulated(
                values.iter().map(|&v| S::from_f64_lossy(v)).collect(),
                *support,
            ),
        }
    }

    pub fn from_generator<S: Scalar>(g: &Generator<S>) -> Self {
        match &g.kind {
            GeneratorKind::BSpline => GeneratorDescriptor::Bspline {
                order: g.support_len,
            },
            GeneratorKind::Tabulated { values } => GeneratorDescriptor::Tabulated {
                values: values.iter().map(|v| v.to_f64().unwrap()).collect(),
                support: g.support_len,
            },
        }
    }
}

/// The `(2N-1) x N` matrix of generator values `phi(x_m + n)` over the
/// node set `X`, whose square submatrices decide phase retrievability.
#[derive(Debug, Clone, PartialEq)]
pub struct PhiMatrix<S> {
    entries: Mat<S>,
    nodes: Vec<S>,
}

/// Exhaustive conditioning summary over all square row-submatrices.
#[derive(Debug, Clone, Copy)]
pub struct SparkAnalysis<S> {
    /// Smallest singular value over every `N x N` row submatrix.
    pub min_submatrix_sigma: S,
    /// Largest operator norm of a submatrix inverse; infinite when some
    /// submatrix is exactly singular.
    pub inverse_norm: S,
    /// Operator norm of the full matrix.
    pub spectral_norm: S,
}

fn check_nodes<S: Scalar>(nodes: &[S], expected: usize) -> Result<()> {
    if nodes.len() != expected {
        return Err(Error::InvalidScheme(format!(
            "expected {expected} nodes, got {}",
            nodes.len()
        )));
    }
    for &x in nodes {
        if !(x > S::zero() && x < S::one()) {
            return Err(Error::InvalidScheme(format!(
                "node {x} is outside the open unit interval"
            )));
        }
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(Error::InvalidScheme(format!("duplicate node {}", w[0])));
        }
    }
    Ok(())
}

impl<S: Scalar> PhiMatrix<S> {
    /// Build the matrix from a generator and `2N-1` distinct nodes in `(0,1)`.
    pub fn build(g: &Generator<S>, nodes: &[S]) -> Result<Self> {
        let n = g.support_len();
        check_nodes(nodes, 2 * n - 1)?;
        let mut entries = Mat::zeros(2 * n - 1, n);
        for (m, &x) in nodes.iter().enumerate() {
            for c in 0..n {
                entries.set(m, c, g.eval(x + S::from_usize(c).unwrap()));
            }
        }
        Ok(PhiMatrix {
            entries,
            nodes: nodes.to_vec(),
        })
    }

    /// Wrap explicit entries; the node list must still be `2N-1` distinct
    /// points of `(0,1)` matching the row count.
    pub fn from_rows(rows: &[Vec<S>], nodes: &[S]) -> Result<Self> {
        let entries = Mat::from_rows(rows)?;
        if entries.nrows() != 2 * entries.ncols() - 1 {
            return Err(Error::InvalidScheme(format!(
                "matrix must be (2N-1) x N, got {} x {}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        check_nodes(nodes, entries.nrows())?;
        Ok(PhiMatrix {
            entries,
            nodes: nodes.to_vec(),
        })
    }

    /// Coefficient count `N` (number of columns).
    pub fn order(&self) -> usize {
        self.entries.ncols()
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn entries(&self) -> &Mat<S> {
        &self.entries
    }

    pub fn entry(&self, m: usize, n: usize) -> S {
        self.entries.get(m, n)
    }

    pub fn spectral_norm(&self) -> S {
        singular_values(&self.entries)[0]
    }

    /// Scale-invariant singularity threshold: `1e-10` times the largest
    /// singular value of the full matrix.
    pub fn default_spark_tol(&self) -> S {
        S::from_f64_lossy(1e-10) * self.spectral_norm()
    }

    /// Exhaustively enumerate all `N x N` row submatrices. A submatrix
    /// whose smallest singular value falls below the default spark
    /// tolerance counts as singular and makes the inverse norm infinite.
    pub fn spark_analysis(&self) -> SparkAnalysis<S> {
        let n = self.order();
        let rows = self.entries.nrows();
        let spectral = self.spectral_norm();
        let singular_cutoff = S::from_f64_lossy(1e-10) * spectral;
        let mut min_sigma = S::infinity();
        let mut inv_norm = S::zero();
        for_each_combination(rows, n, |sel| {
            let sub = self.entries.select_rows(sel);
            let smin = min_singular_value(&sub);
            if smin < min_sigma {
                min_sigma = smin;
            }
            let norm = if smin <= singular_cutoff {
                S::infinity()
            } else {
                smin.recip()
            };
            if norm > inv_norm {
                inv_norm = norm;
            }
        });
        SparkAnalysis {
            min_submatrix_sigma: min_sigma,
            inverse_norm: inv_norm,
            spectral_norm: spectral,
        }
    }

    /// True when every `N x N` row submatrix has smallest singular value
    /// above `tol`.
    pub fn is_full_spark(&self, tol: S) -> bool {
        self.spark_analysis().min_submatrix_sigma > tol
    }

    /// Worst operator norm of a submatrix inverse, the conditioning
    /// constant appearing in all stability bounds. Infinite when some
    /// submatrix is exactly singular.
    pub fn inverse_norm(&self) -> S {
        self.spark_analysis().inverse_norm
    }
}
