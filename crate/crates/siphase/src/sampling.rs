//! Sampling schemes, the periodic sample set, and noisy phaseless samples.
//!
//! A scheme fixes `2N-1` nodes `X` inside the unit interval, two size-`N`
//! subsets (forward nodes and backward nodes) and an odd period `L`. The
//! sample set repeats with period `L`: the full node block at the period
//! centers, forward nodes shifted right by `1..=(L-1)/2`, backward nodes
//! shifted left by the same amounts.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator::{Generator, GeneratorDescriptor, PhiMatrix};
use crate::scalar::Scalar;
use crate::signal::SisSignal;

/// Node selections and period of a phaseless sampling scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingScheme<S> {
    support_len: usize,
    nodes: Vec<S>,
    gamma_idx: Vec<usize>,
    gamma_star_idx: Vec<usize>,
    period: i64,
}

impl<S: Scalar> SamplingScheme<S> {
    /// Basic shape checks only; `validate_scheme` performs the full
    /// generator-dependent validation.
    pub fn new(
        support_len: usize,
        nodes: Vec<S>,
        gamma_idx: Vec<usize>,
        gamma_star_idx: Vec<usize>,
        period: i64,
    ) -> Result<Self> {
        if nodes.len() != 2 * support_len - 1 {
            return Err(Error::InvalidScheme(format!(
                "need {} nodes for support length {support_len}, got {}",
                2 * support_len - 1,
                nodes.len()
            )));
        }
        for (name, idx) in [
            ("gamma_idx", &gamma_idx),
            ("gamma_star_idx", &gamma_star_idx),
        ] {
            if idx.len() != support_len {
                return Err(Error::InvalidScheme(format!(
                    "{name} must select {support_len} nodes, got {}",
                    idx.len()
                )));
            }
            if idx.iter().any(|&i| i >= nodes.len()) {
                return Err(Error::InvalidScheme(format!("{name} is out of range")));
            }
            let mut sorted = idx.clone();
            sorted.sort_unstable();
            sorted.dedup();
            if sorted.len() != idx.len() {
                return Err(Error::InvalidScheme(format!("{name} repeats a node")));
            }
        }
        if period < 1 || period % 2 == 0 {
            return Err(Error::InvalidScheme(format!(
                "period must be odd and positive, got {period}"
            )));
        }
        Ok(SamplingScheme {
            support_len,
            nodes,
            gamma_idx,
            gamma_star_idx,
            period,
        })
    }

    /// Scheme with nodes `m/(2N)` and both extension sets on the odd
    /// nodes, the standard B-spline geometry.
    pub fn uniform(support_len: usize, period: i64) -> Result<Self> {
        if support_len < 2 {
            return Err(Error::InvalidScheme(
                "support length must be at least 2".into(),
            ));
        }
        let denom = S::from_usize(2 * support_len).unwrap();
        let nodes: Vec<S> = (1..=(2 * support_len - 1))
            .map(|m| S::from_usize(m).unwrap() / denom)
            .collect();
        let odd: Vec<usize> = (0..2 * support_len - 1).step_by(2).collect();
        SamplingScheme::new(support_len, nodes, odd.clone(), odd, period)
    }

    pub fn support_len(&self) -> usize {
        self.support_len
    }

    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }

    pub fn gamma_idx(&self) -> &[usize] {
        &self.gamma_idx
    }

    pub fn gamma_star_idx(&self) -> &[usize] {
        &self.gamma_star_idx
    }

    pub fn period(&self) -> i64 {
        self.period
    }

    /// Number of extension steps per side, `(L-1)/2`.
    pub fn half_extent(&self) -> i64 {
        (self.period - 1) / 2
    }

    /// Forward node `gamma_n`.
    pub fn gamma(&self, n: usize) -> S {
        self.nodes[self.gamma_idx[n]]
    }

    /// Backward node `gamma*_n`.
    pub fn gamma_star(&self, n: usize) -> S {
        self.nodes[self.gamma_star_idx[n]]
    }

    /// Shifted backward node `gamma*_n + N - 1` where the generator is
    /// evaluated during backward extension.
    pub fn gamma_star_star(&self, n: usize) -> S {
        self.gamma_star(n) + S::from_usize(self.support_len - 1).unwrap()
    }

    /// Same scheme with a different period.
    pub fn with_period(&self, period: i64) -> Result<Self> {
        SamplingScheme::new(
            self.support_len,
            self.nodes.clone(),
            self.gamma_idx.clone(),
            self.gamma_star_idx.clone(),
            period,
        )
    }
}

/// Quantities produced by full scheme validation; exactly the inputs the
/// stability constants need.
#[derive(Debug, Clone, Copy)]
pub struct SchemeCheck<S> {
    pub full_spark: bool,
    /// Smallest singular value over all square row submatrices.
    pub min_submatrix_sigma: S,
    pub spectral_norm: S,
    pub inverse_norm: S,
    /// Smallest `|phi(gamma_n)|` over the forward nodes.
    pub min_phi_gamma: S,
    /// Smallest `|phi(gamma*_n + N - 1)|` over the backward nodes.
    pub min_phi_gamma_ss: S,
}

/// Check every scheme invariant against the generator and return the
/// conditioning quantities. Any violation is reported as an invalid
/// scheme naming the failed condition.
pub fn validate_scheme<S: Scalar>(
    scheme: &SamplingScheme<S>,
    g: &Generator<S>,
) -> Result<SchemeCheck<S>> {
    let n = scheme.support_len();
    if g.support_len() != n {
        return Err(Error::InvalidScheme(format!(
            "generator support length {} does not match scheme support length {n}",
            g.support_len()
        )));
    }
    if n < 2 {
        return Err(Error::InvalidScheme(
            "support length 1 admits no phase retrieval scheme".into(),
        ));
    }
    let mut min_phi_gamma = S::infinity();
    for i in 0..n {
        let v = g.eval(scheme.gamma(i)).abs();
        if v == S::zero() {
            return Err(Error::InvalidScheme(format!(
                "generator vanishes at forward node {}",
                scheme.gamma(i)
            )));
        }
        min_phi_gamma = min_phi_gamma.min(v);
    }
    let mut min_phi_gamma_ss = S::infinity();
    for i in 0..n {
        let v = g.eval(scheme.gamma_star_star(i)).abs();
        if v == S::zero() {
            return Err(Error::InvalidScheme(format!(
                "generator vanishes at shifted backward node {}",
                scheme.gamma_star_star(i)
            )));
        }
        min_phi_gamma_ss = min_phi_gamma_ss.min(v);
    }
    let phi = PhiMatrix::build(g, scheme.nodes())?;
    let analysis = phi.spark_analysis();
    let tol = phi.default_spark_tol();
    if analysis.min_submatrix_sigma <= tol {
        return Err(Error::InvalidScheme(format!(
            "node matrix is not full spark (min submatrix sigma {} <= tol {tol})",
            analysis.min_submatrix_sigma
        )));
    }
    Ok(SchemeCheck {
        full_spark: true,
        min_submatrix_sigma: analysis.min_submatrix_sigma,
        spectral_norm: analysis.spectral_norm,
        inverse_norm: analysis.inverse_norm,
        min_phi_gamma,
        min_phi_gamma_ss,
    })
}

/// Which part of the periodic pattern a sample location belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SampleRole {
    /// Full node block at the period center (shift 0).
    Center,
    /// Forward node, shifted right by `1..=(L-1)/2`.
    Forward,
    /// Backward node, shifted left by `1..=(L-1)/2`.
    Backward,
}

impl SampleRole {
    pub fn csv_name(&self) -> &'static str {
        match self {
            SampleRole::Center => "X",
            SampleRole::Forward => "FWD",
            SampleRole::Backward => "BWD",
        }
    }

    pub fn from_csv_name(s: &str) -> Result<Self> {
        match s {
            "X" => Ok(SampleRole::Center),
            "FWD" => Ok(SampleRole::Forward),
            "BWD" => Ok(SampleRole::Backward),
            other => Err(Error::Parse(format!("unknown sample role {other}"))),
        }
    }
}

/// One sampling location, stored as exact block and offset data so sample
/// lookup never compares floating point positions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleLocation<S> {
    pub kprime: i64,
    pub role: SampleRole,
    /// Ordinal into `X` for center samples, into the forward or backward
    /// node selection otherwise.
    pub node_idx: usize,
    /// Signed integer shift from the block center, zero for center
    /// samples, positive forward, negative backward.
    pub shift: i64,
    /// Materialized real position.
    pub position: S,
}

fn materialize<S: Scalar>(
    scheme: &SamplingScheme<S>,
    role: SampleRole,
    idx: usize,
    kprime: i64,
    shift: i64,
) -> S {
    let node = match role {
        SampleRole::Center => scheme.nodes()[idx],
        SampleRole::Forward => scheme.gamma(idx),
        SampleRole::Backward => scheme.gamma_star(idx),
    };
    node + S::from_i64(kprime * scheme.period() + shift).unwrap()
}

/// Enumerate the sample set over an inclusive block range, in canonical
/// order: per block the center nodes, then forward shifts ascending, then
/// backward shifts ascending. Locations that materialize to the same
/// position are emitted once.
pub fn sample_locations<S: Scalar>(
    scheme: &SamplingScheme<S>,
    kprime_range: (i64, i64),
) -> Vec<SampleLocation<S>> {
    let (lo, hi) = kprime_range;
    let mut out = Vec::new();
    if lo > hi {
        return out;
    }
    let n = scheme.support_len();
    for kprime in lo..=hi {
        for m in 0..scheme.nodes().len() {
            out.push(SampleLocation {
                kprime,
                role: SampleRole::Center,
                node_idx: m,
                shift: 0,
                position: materialize(scheme, SampleRole::Center, m, kprime, 0),
            });
        }
        for l in 1..=scheme.half_extent() {
            for i in 0..n {
                out.push(SampleLocation {
                    kprime,
                    role: SampleRole::Forward,
                    node_idx: i,
                    shift: l,
                    position: materialize(scheme, SampleRole::Forward, i, kprime, l),
                });
            }
        }
        for l in 1..=scheme.half_extent() {
            for i in 0..n {
                out.push(SampleLocation {
                    kprime,
                    role: SampleRole::Backward,
                    node_idx: i,
                    shift: -l,
                    position: materialize(scheme, SampleRole::Backward, i, kprime, -l),
                });
            }
        }
    }
    // distinct schemes never produce coincident positions, but tolerate
    // them by keeping the first occurrence
    let mut seen = std::collections::HashSet::new();
    out.retain(|loc| seen.insert(loc.position.to_f64().unwrap().to_bits()));
    out
}

/// Inclusive block range whose sample set covers the coefficient support,
/// padded by one block on each side.
pub fn block_range_for_support(support: (i64, i64), period: i64) -> (i64, i64) {
    let block_of = |k: i64| (2 * k + period - 1).div_euclid(2 * period);
    (block_of(support.0) - 1, block_of(support.1) + 1)
}

/// Samples per unit length of a sorted location list inside `[a, b]`.
pub fn sampling_rate<S: Scalar>(sorted_positions: &[S], window: (S, S)) -> S {
    let (a, b) = window;
    assert!(b > a, "window must have positive length");
    let lo = sorted_positions.partition_point(|&p| p < a);
    let hi = sorted_positions.partition_point(|&p| p <= b);
    S::from_usize(hi - lo).unwrap() / (b - a)
}

/// Additive noise model for the squared magnitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Perturbation uniform in `[-eps, eps]`.
    Absolute,
    /// Perturbation uniform in `[-eps, eps]` scaled by the squared sup
    /// norm of the signal (estimated on a 64 points per unit grid).
    RelativeToPeak,
}

/// One noisy squared-magnitude sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoisySample<S> {
    pub location: SampleLocation<S>,
    pub value: S,
}

/// Noisy phaseless samples over a contiguous block range.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisySamples<S> {
    entries: Vec<NoisySample<S>>,
    noise_level: S,
    model: NoiseModel,
    block_range: (i64, i64),
}

impl<S: Scalar> NoisySamples<S> {
    pub fn entries(&self) -> &[NoisySample<S>] {
        &self.entries
    }

    pub fn noise_level(&self) -> S {
        self.noise_level
    }

    pub fn model(&self) -> NoiseModel {
        self.model
    }

    pub fn block_range(&self) -> (i64, i64) {
        self.block_range
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Write as CSV with header `y,z,kprime,role,idx`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "y,z,kprime,role,idx")?;
        for e in &self.entries {
            writeln!(
                w,
                "{},{},{},{},{}",
                e.location.position,
                e.value,
                e.location.kprime,
                e.location.role.csv_name(),
                e.location.node_idx
            )?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Read the samples CSV back. The scheme recovers each row's shift
    /// from its position; every position must match the scheme's own
    /// materialization bit for bit.
    pub fn read_csv<R: std::io::Read>(r: R, scheme: &SamplingScheme<S>) -> Result<Self> {
        let reader = BufReader::new(r);
        let mut entries = Vec::new();
        for (ln, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (ln == 0 && line.starts_with("y,")) {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(|p| p.trim()).collect();
            if parts.len() != 5 {
                return Err(Error::Parse(format!(
                    "line {}: expected 5 columns, got {}",
                    ln + 1,
                    parts.len()
                )));
            }
            let y: f64 = parts[0]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let z: f64 = parts[1]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let kprime: i64 = parts[2]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let role = SampleRole::from_csv_name(parts[3])?;
            let node_idx: usize = parts[4]
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: {e}", ln + 1)))?;
            let node = match role {
                SampleRole::Center => *scheme.nodes().get(node_idx).ok_or_else(|| {
                    Error::Parse(format!("line {}: node index out of range", ln + 1))
                })?,
                SampleRole::Forward => {
                    if node_idx >= scheme.support_len() {
                        return Err(Error::Parse(format!(
                            "line {}: node index out of range",
                            ln + 1
                        )));
                    }
                    scheme.gamma(node_idx)
                }
                SampleRole::Backward => {
                    if node_idx >= scheme.support_len() {
                        return Err(Error::Parse(format!(
                            "line {}: node index out of range",
                            ln + 1
                        )));
                    }
                    scheme.gamma_star(node_idx)
                }
            };
            let shift_f = y - node.to_f64().unwrap() - (kprime * scheme.period()) as f64;
            let shift = shift_f.round() as i64;
            let expected = materialize(scheme, role, node_idx, kprime, shift);
            if expected.to_f64().unwrap() != y {
                return Err(Error::Parse(format!(
                    "line {}: position {y} does not belong to the scheme",
                    ln + 1
                )));
            }
            entries.push(NoisySample {
                location: SampleLocation {
                    kprime,
                    role,
                    node_idx,
                    shift,
                    position: S::from_f64_lossy(y),
                },
                value: S::from_f64_lossy(z),
            });
        }
        if entries.is_empty() {
            return Err(Error::Parse("sample file has no rows".into()));
        }
        let lo = entries.iter().map(|e| e.location.kprime).min().unwrap();
        let hi = entries.iter().map(|e| e.location.kprime).max().unwrap();
        Ok(NoisySamples {
            entries,
            noise_level: S::zero(),
            model: NoiseModel::Absolute,
            block_range: (lo, hi),
        })
    }

    pub fn read_csv_path(path: &Path, scheme: &SamplingScheme<S>) -> Result<Self> {
        let f = std::fs::File::open(path)?;
        Self::read_csv(f, scheme)
    }
}

/// Squared-magnitude samples of `f` over the block range, corrupted by
/// seeded uniform noise and clamped at zero.
///
/// The noise stream is reproducible: a ChaCha8 generator seeded with
/// `seed` yields exactly one uniform draw in `[-1, 1]` per location, in
/// the canonical order of `sample_locations`, scaled by the noise level.
pub fn take_phaseless_samples<S: Scalar>(
    f: &SisSignal<S>,
    scheme: &SamplingScheme<S>,
    kprime_range: (i64, i64),
    noise_level: S,
    model: NoiseModel,
    seed: u64,
) -> Result<NoisySamples<S>> {
    if noise_level < S::zero() {
        return Err(Error::InvalidArgument(
            "noise level must be nonnegative".into(),
        ));
    }
    validate_scheme(scheme, f.generator())?;
    let scale = match model {
        NoiseModel::Absolute => noise_level,
        NoiseModel::RelativeToPeak => {
            let peak = f.sup_norm_on_grid(64);
            noise_level * peak * peak
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for location in sample_locations(scheme, kprime_range) {
        let u: f64 = rng.gen_range(-1.0..=1.0);
        let fy = f.eval(location.position);
        let z = (fy * fy + S::from_f64_lossy(u) * scale).max(S::zero());
        entries.push(NoisySample { location, value: z });
    }
    Ok(NoisySamples {
        entries,
        noise_level,
        model,
        block_range: kprime_range,
    })
}

/// Scheme file: generator descriptor plus node selections and period.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchemeFile {
    pub generator: GeneratorDescriptor,
    #[serde(rename = "X")]
    pub x: Vec<f64>,
    pub gamma_idx: Vec<usize>,
    pub gamma_star_idx: Vec<usize>,
    #[serde(rename = "L")]
    pub l: i64,
}

impl SchemeFile {
    pub fn build<S: Scalar>(&self) -> Result<(Generator<S>, SamplingScheme<S>)> {
        let g = self.generator.build()?;
        let scheme = SamplingScheme::new(
            g.support_len(),
            self.x.iter().map(|&v| S::from_f64_lossy(v)).collect(),
            self.gamma_idx.clone(),
            self.gamma_star_idx.clone(),
            self.l,
        )?;
        Ok((g, scheme))
    }

    pub fn from_parts<S: Scalar>(g: &Generator<S>, scheme: &SamplingScheme<S>) -> Self {
        SchemeFile {
            generator: GeneratorDescriptor::from_generator(g),
            x: scheme.nodes().iter().map(|v| v.to_f64().unwrap()).collect(),
            gamma_idx: scheme.gamma_idx().to_vec(),
            gamma_star_idx: scheme.gamma_star_idx().to_vec(),
            l: scheme.period(),
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
}
