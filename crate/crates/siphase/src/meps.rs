//! Block reconstruction from noisy phaseless samples.
//!
//! The pipeline has four stages. Minimization recovers each block of `N`
//! coefficients, up to a block sign, from the squared magnitudes at the
//! period centers. Extension grows each block one coefficient at a time,
//! forward over the forward nodes and backward over the backward nodes,
//! branching on the auxiliary function `h1` against a threshold `m0`.
//! Phase adjustment aligns the block signs through the overlaps, and
//! sewing assembles the global coefficient sequence.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::generator::{Generator, PhiMatrix};
use crate::linalg::{min_singular_value, solve_least_squares, solve_square, Mat};
use crate::sampling::{validate_scheme, NoisySamples, SampleRole, SamplingScheme, SchemeCheck};
use crate::scalar::{sgn, Scalar};
use crate::signal::{CoeffWindow, SisSignal};

/// Gap between `e` and its projection onto the node value vector; zero
/// exactly when `e` is proportional to the node values.
///
/// Algebraically this is the 2x2 determinant
/// `[sum v^2, sum v e; sum v e, sum e^2] / sum v^2`; the projection form
/// keeps it nonnegative in floating point.
pub fn h1<S: Scalar>(e: &[S], node_values: &[S]) -> Result<S> {
    let vv: S = node_values.iter().map(|&v| v * v).sum();
    if vv == S::zero() {
        return Err(Error::InvalidArgument("all node values are zero".into()));
    }
    let ve: S = node_values.iter().zip(e).map(|(&v, &x)| v * x).sum();
    let coef = ve / vv;
    Ok(e.iter()
        .zip(node_values)
        .map(|(&x, &v)| {
            let d = x - coef * v;
            d * d
        })
        .sum())
}

/// `h1` evaluated on the shifted backward node values.
pub fn h1_star<S: Scalar>(e: &[S], gamma_ss_values: &[S]) -> Result<S> {
    h1(e, gamma_ss_values)
}

/// Mixed determinant `[sum v^2 * sum(e1 e2 / v) - sum e2 * sum(v e1)] / sum v^2`.
pub fn h2<S: Scalar>(e1: &[S], e2: &[S], node_values: &[S]) -> Result<S> {
    if node_values.iter().any(|&v| v == S::zero()) {
        return Err(Error::InvalidArgument("node value is zero".into()));
    }
    let vv: S = node_values.iter().map(|&v| v * v).sum();
    let mixed: S = e1
        .iter()
        .zip(e2)
        .zip(node_values)
        .map(|((&a, &b), &v)| a * b / v)
        .sum();
    let se2: S = e2.iter().copied().sum();
    let ve1: S = node_values.iter().zip(e1).map(|(&v, &a)| v * a).sum();
    Ok((vv * mixed - se2 * ve1) / vv)
}

/// `h2` evaluated on the shifted backward node values.
pub fn h2_star<S: Scalar>(e1: &[S], e2: &[S], gamma_ss_values: &[S]) -> Result<S> {
    h2(e1, e2, gamma_ss_values)
}

/// How far a block estimate has progressed through the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Minimization output on `[k'L-N+1, k'L]`.
    C0,
    /// Forward extension in progress or finished, window grows to
    /// `k'L+(L-1)/2`.
    CHalf,
    /// Backward extension in progress or finished, window grows to
    /// `[k'L-N+1-(L-1)/2, k'L+(L-1)/2]`.
    C1,
}

/// Per-block coefficient estimate with its current window.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockEstimate<S> {
    kprime: i64,
    period: i64,
    k_low: i64,
    values: Vec<S>,
    stage: Stage,
}

impl<S: Scalar> BlockEstimate<S> {
    pub fn kprime(&self) -> i64 {
        self.kprime
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn window(&self) -> (i64, i64) {
        (self.k_low, self.k_low + self.values.len() as i64 - 1)
    }

    pub fn coeff(&self, k: i64) -> S {
        if k < self.k_low || k >= self.k_low + self.values.len() as i64 {
            S::zero()
        } else {
            self.values[(k - self.k_low) as usize]
        }
    }

    fn anchor(&self) -> i64 {
        self.kprime * self.period
    }

    fn set(&mut self, k: i64, v: S) {
        self.values[(k - self.k_low) as usize] = v;
    }

    fn push_high(&mut self, v: S) {
        self.values.push(v);
    }

    fn push_low(&mut self, v: S) {
        self.values.insert(0, v);
        self.k_low -= 1;
    }
}

/// How the extension threshold is chosen.
#[derive(Debug, Clone)]
pub enum M0Mode<S> {
    /// User supplied nonnegative threshold.
    Explicit(S),
    /// Threshold computed from the true coefficients, for controlled runs:
    /// minimum interior window energy over `4 * inverse_norm^2`.
    Oracle(CoeffWindow<S>),
    /// Threshold estimated from the minimization outputs themselves; see
    /// `meps_reconstruct` for the heuristic.
    Auto,
}

/// Reconstruction options.
#[derive(Debug, Clone)]
pub struct MepsConfig<S> {
    pub m0: M0Mode<S>,
    /// Conditioning floor for the square extension solves; defaults to the
    /// node matrix spark tolerance.
    pub spark_tol: Option<S>,
    /// Overlap inner products at or below this keep the previous block
    /// sign during phase adjustment.
    pub overlap_tol: S,
    /// Polish each minimization output with a few Gauss-Newton steps.
    pub refine: bool,
}

impl<S: Scalar> Default for MepsConfig<S> {
    fn default() -> Self {
        MepsConfig {
            m0: M0Mode::Auto,
            spark_tol: None,
            overlap_tol: S::zero(),
            refine: false,
        }
    }
}

/// Extension branch taken at one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Branch {
    #[serde(rename = "SMALL")]
    Small,
    #[serde(rename = "LARGE")]
    Large,
}

/// Per-block record of what the pipeline did.
#[derive(Debug, Clone)]
pub struct BlockDiagnostics<S> {
    pub kprime: i64,
    /// Final objective of the minimization stage.
    pub objective: S,
    /// Branch per extension step, forward steps then backward steps.
    pub branch_taken: Vec<Branch>,
    /// `h1` value per extension step, same order as `branch_taken`.
    pub h1_values: Vec<S>,
    /// Sign chosen during phase adjustment.
    pub sign: i8,
}

/// Final coefficients plus per-block bookkeeping.
#[derive(Debug, Clone)]
pub struct Reconstruction<S> {
    coeffs: CoeffWindow<S>,
    block_signs: Vec<(i64, i8)>,
    diagnostics: Vec<BlockDiagnostics<S>>,
    m0_used: S,
}

impl<S: Scalar> Reconstruction<S> {
    pub fn coeffs(&self) -> &CoeffWindow<S> {
        &self.coeffs
    }

    pub fn block_signs(&self) -> &[(i64, i8)] {
        &self.block_signs
    }

    pub fn diagnostics(&self) -> &[BlockDiagnostics<S>] {
        &self.diagnostics
    }

    pub fn m0_used(&self) -> S {
        self.m0_used
    }

    /// Write coefficients as CSV with header `k,c_epsilon`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "k,c_epsilon")?;
        for (k, v) in self.coeffs.iter() {
            writeln!(w, "{k},{v}")?;
        }
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// Write the per-block diagnostics as JSON.
    pub fn write_diagnostics_json<W: Write>(&self, mut w: W) -> Result<()> {
        #[derive(Serialize)]
        struct BlockDto {
            kprime: i64,
            objective: f64,
            branch_taken: Vec<Branch>,
            h1_values: Vec<f64>,
            sign: i8,
        }
        #[derive(Serialize)]
        struct DiagDto {
            m0: f64,
            blocks: Vec<BlockDto>,
        }
        let dto = DiagDto {
            m0: self.m0_used.to_f64().unwrap(),
            blocks: self
                .diagnostics
                .iter()
                .map(|b| BlockDto {
                    kprime: b.kprime,
                    objective: b.objective.to_f64().unwrap(),
                    branch_taken: b.branch_taken.clone(),
                    h1_values: b.h1_values.iter().map(|v| v.to_f64().unwrap()).collect(),
                    sign: b.sign,
                })
                .collect(),
        };
        let text = serde_json::to_string_pretty(&dto).map_err(|e| Error::Parse(e.to_string()))?;
        w.write_all(text.as_bytes())?;
        Ok(())
    }

    pub fn write_diagnostics_path(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_diagnostics_json(std::io::BufWriter::new(f))
    }

    pub fn to_signal(&self, g: &Generator<S>) -> SisSignal<S> {
        SisSignal::from_window(g.clone(), self.coeffs.clone())
    }
}

/// Precomputed scheme data shared by all pipeline stages.
pub struct MepsContext<S> {
    scheme: SamplingScheme<S>,
    phi: PhiMatrix<S>,
    check: SchemeCheck<S>,
    /// Generator values at the forward nodes.
    phi_gamma: Vec<S>,
    /// Generator values at the shifted backward nodes.
    phi_gamma_ss: Vec<S>,
    /// `phi(gamma_n + m)`: the forward-node row submatrix.
    fwd_mat: Mat<S>,
    /// `phi(gamma*_n + m)`: the backward-node row submatrix.
    bwd_mat: Mat<S>,
}

impl<S: Scalar> MepsContext<S> {
    pub fn new(g: &Generator<S>, scheme: &SamplingScheme<S>, spark_tol: Option<S>) -> Result<Self> {
        let check = validate_scheme(scheme, g)?;
        let phi = PhiMatrix::build(g, scheme.nodes())?;
        let tol = spark_tol.unwrap_or_else(|| phi.default_spark_tol());
        let n = scheme.support_len();
        let phi_gamma: Vec<S> = (0..n).map(|i| g.eval(scheme.gamma(i))).collect();
        let phi_gamma_ss: Vec<S> = (0..n).map(|i| g.eval(scheme.gamma_star_star(i))).collect();
        let fwd_mat = phi.entries().select_rows(scheme.gamma_idx());
        let bwd_mat = phi.entries().select_rows(scheme.gamma_star_idx());
        for (name, m) in [("forward", &fwd_mat), ("backward", &bwd_mat)] {
            let smin = min_singular_value(m);
            if smin <= tol {
                return Err(Error::SchemeDegenerate(format!(
                    "{name} node system is too ill conditioned (sigma {smin} <= tol {tol})"
                )));
            }
        }
        Ok(MepsContext {
            scheme: scheme.clone(),
            phi,
            check,
            phi_gamma,
            phi_gamma_ss,
            fwd_mat,
            bwd_mat,
        })
    }

    pub fn scheme(&self) -> &SamplingScheme<S> {
        &self.scheme
    }

    pub fn phi(&self) -> &PhiMatrix<S> {
        &self.phi
    }

    pub fn check(&self) -> &SchemeCheck<S> {
        &self.check
    }
}

fn objective<S: Scalar>(phi: &PhiMatrix<S>, u: &[S], sqrt_z: &[S]) -> S {
    let pred = phi.entries().matvec(u);
    pred.iter()
        .zip(sqrt_z)
        .map(|(&p, &r)| {
            let d = p.abs() - r;
            d * d
        })
        .sum()
}

fn gauss_newton_polish<S: Scalar>(phi: &PhiMatrix<S>, u: &mut Vec<S>, sqrt_z: &[S]) {
    let rows = phi.entries().nrows();
    let cols = phi.entries().ncols();
    let mut best = objective(phi, u, sqrt_z);
    for _ in 0..20 {
        let pred = phi.entries().matvec(u);
        let mut jac = Mat::zeros(rows, cols);
        let mut rhs = vec![S::zero(); rows];
        for m in 0..rows {
            let s = sgn(pred[m]);
            for c in 0..cols {
                jac.set(m, c, s * phi.entry(m, c));
            }
            rhs[m] = -(pred[m].abs() - sqrt_z[m]);
        }
        let step = solve_least_squares(&jac, &rhs);
        let mut improved = false;
        let mut scale = S::one();
        for _ in 0..5 {
            let cand: Vec<S> = u.iter().zip(&step).map(|(&a, &d)| a + scale * d).collect();
            let obj = objective(phi, &cand, sqrt_z);
            if obj < best {
                best = obj;
                *u = cand;
                improved = true;
                break;
            }
            scale /= S::from_f64_lossy(2.0);
        }
        if !improved {
            break;
        }
    }
}

/// Global minimizer of the per-block phaseless least squares.
///
/// The objective sums, over the `2N-1` center nodes, the squared gap
/// between the predicted magnitude and the observed root sample. Because
/// each magnitude can carry either sign, the exact global minimum is
/// found by enumerating the `2^(2N-2)` sign patterns (the first sign is
/// pinned, negating all of them negates the solution) and solving one
/// linear least squares per pattern.
pub fn local_minimize<S: Scalar>(
    ctx: &MepsContext<S>,
    kprime: i64,
    z_center: &[S],
    refine: bool,
) -> Result<(BlockEstimate<S>, S)> {
    let n = ctx.scheme.support_len();
    let rows = 2 * n - 1;
    if z_center.len() != rows {
        return Err(Error::InvalidArgument(format!(
            "expected {rows} center samples, got {}",
            z_center.len()
        )));
    }
    let sqrt_z: Vec<S> = z_center.iter().map(|&z| z.max(S::zero()).sqrt()).collect();

    let mut best_u: Option<Vec<S>> = None;
    let mut best_obj = S::infinity();
    let patterns = 1usize << (rows - 1);
    let mut rhs = vec![S::zero(); rows];
    for bits in 0..patterns {
        rhs[0] = sqrt_z[0];
        for m in 1..rows {
            let sign = if bits >> (m - 1) & 1 == 0 {
                S::one()
            } else {
                -S::one()
            };
            rhs[m] = sign * sqrt_z[m];
        }
        let u = solve_least_squares(ctx.phi.entries(), &rhs);
        let obj = objective(&ctx.phi, &u, &sqrt_z);
        if obj < best_obj {
            best_obj = obj;
            best_u = Some(u);
        }
    }
    let mut u = best_u.expect("at least one sign pattern");
    if refine {
        gauss_newton_polish(&ctx.phi, &mut u, &sqrt_z);
        best_obj = objective(&ctx.phi, &u, &sqrt_z);
    }

    // u[j] estimates c(k'L - j); store on the block window
    let period = ctx.scheme.period();
    let anchor = kprime * period;
    let mut values = vec![S::zero(); n];
    for (j, &v) in u.iter().enumerate() {
        values[n - 1 - j] = v;
    }
    Ok((
        BlockEstimate {
            kprime,
            period,
            k_low: anchor - n as i64 + 1,
            values,
            stage: Stage::C0,
        },
        best_obj,
    ))
}

/// One forward extension step: decide the branch from `h1` of the partial
/// predictions at the forward nodes, then either append the magnitude
/// estimate for the new coefficient or re-solve the trailing block of `N`
/// coefficients with recovered signs.
pub fn extend_forward_step<S: Scalar>(
    ctx: &MepsContext<S>,
    block: &mut BlockEstimate<S>,
    l: i64,
    z_fwd: &[S],
    m0: S,
) -> Result<(Branch, S)> {
    let n = ctx.scheme.support_len();
    debug_assert_eq!(z_fwd.len(), n);
    let anchor = block.anchor();
    debug_assert_eq!(
        block.window().1,
        anchor + l - 1,
        "forward steps must be sequential"
    );
    let alpha: Vec<S> = (0..n)
        .map(|node| {
            let mut acc = S::zero();
            for np in 1..n as i64 {
                acc += block.coeff(anchor + l - np) * ctx.fwd_mat.get(node, np as usize);
            }
            acc
        })
        .collect();
    let h1v = h1(&alpha, &ctx.phi_gamma)?;
    let sqrt_z: Vec<S> = z_fwd.iter().map(|&z| z.max(S::zero()).sqrt()).collect();

    if h1v.abs() <= m0 {
        let num: S = ctx
            .phi_gamma
            .iter()
            .zip(&sqrt_z)
            .map(|(&v, &r)| v.abs() * r)
            .sum();
        let den: S = ctx.phi_gamma.iter().map(|&v| v * v).sum();
        block.push_high(num / den);
        block.stage = Stage::CHalf;
        return Ok((Branch::Small, h1v));
    }

    let eta: Vec<S> = z_fwd.iter().zip(&alpha).map(|(&z, &a)| z - a * a).collect();
    let d = h2(&alpha, &eta, &ctx.phi_gamma)? / (S::from_f64_lossy(2.0) * h1v);
    let ztilde: Vec<S> = (0..n)
        .map(|node| sgn(alpha[node] + d * ctx.phi_gamma[node]) * sqrt_z[node])
        .collect();
    let sol = solve_square(&ctx.fwd_mat, &ztilde)
        .ok_or_else(|| Error::SchemeDegenerate("forward node system is singular".into()))?;
    block.push_high(S::zero());
    for (m, &v) in sol.iter().enumerate() {
        block.set(anchor + l - m as i64, v);
    }
    block.stage = Stage::CHalf;
    Ok((Branch::Large, h1v))
}

/// One backward extension step, the mirror of the forward step over the
/// backward nodes: the new coefficient appears at `k'L+1-N-l'` and the
/// large branch re-solves the leading block of `N` coefficients.
pub fn extend_backward_step<S: Scalar>(
    ctx: &MepsContext<S>,
    block: &mut BlockEstimate<S>,
    lp: i64,
    z_bwd: &[S],
    m0: S,
) -> Result<(Branch, S)> {
    let n = ctx.scheme.support_len();
    debug_assert_eq!(z_bwd.len(), n);
    let anchor = block.anchor();
    debug_assert_eq!(
        block.window().0,
        anchor - n as i64 + 2 - lp,
        "backward steps must be sequential"
    );
    let alpha: Vec<S> = (0..n)
        .map(|node| {
            let mut acc = S::zero();
            for np in 0..(n as i64 - 1) {
                acc += block.coeff(anchor - lp - np) * ctx.bwd_mat.get(node, np as usize);
            }
            acc
        })
        .collect();
    let h1v = h1_star(&alpha, &ctx.phi_gamma_ss)?;
    let sqrt_z: Vec<S> = z_bwd.iter().map(|&z| z.max(S::zero()).sqrt()).collect();
    let new_pos = anchor + 1 - n as i64 - lp;

    if h1v.abs() <= m0 {
        let num: S = ctx
            .phi_gamma_ss
            .iter()
            .zip(&sqrt_z)
            .map(|(&v, &r)| v.abs() * r)
            .sum();
        let den: S = ctx.phi_gamma_ss.iter().map(|&v| v * v).sum();
        block.push_low(num / den);
        debug_assert_eq!(block.window().0, new_pos);
        block.stage = Stage::C1;
        return Ok((Branch::Small, h1v));
    }

    let eta: Vec<S> = z_bwd.iter().zip(&alpha).map(|(&z, &a)| z - a * a).collect();
    let d = h2_star(&alpha, &eta, &ctx.phi_gamma_ss)? / (S::from_f64_lossy(2.0) * h1v);
    let ztilde: Vec<S> = (0..n)
        .map(|node| sgn(alpha[node] + d * ctx.phi_gamma_ss[node]) * sqrt_z[node])
        .collect();
    let sol = solve_square(&ctx.bwd_mat, &ztilde)
        .ok_or_else(|| Error::SchemeDegenerate("backward node system is singular".into()))?;
    block.push_low(S::zero());
    debug_assert_eq!(block.window().0, new_pos);
    for (m, &v) in sol.iter().enumerate() {
        block.set(anchor - lp - m as i64, v);
    }
    block.stage = Stage::C1;
    Ok((Branch::Large, h1v))
}

/// Choose a sign per block, first block positive, so every consecutive
/// overlap inner product is nonnegative. Inner products within
/// `overlap_tol` of zero keep the previous sign.
pub fn adjust_phases<S: Scalar>(blocks: &[BlockEstimate<S>], overlap_tol: S) -> Vec<i8> {
    let mut signs = Vec::with_capacity(blocks.len());
    if blocks.is_empty() {
        return signs;
    }
    signs.push(1i8);
    for i in 1..blocks.len() {
        let (lo_a, hi_a) = blocks[i - 1].window();
        let (lo_b, hi_b) = blocks[i].window();
        let lo = lo_a.max(lo_b);
        let hi = hi_a.min(hi_b);
        let mut ip = S::zero();
        let mut k = lo;
        while k <= hi {
            ip += blocks[i - 1].coeff(k) * blocks[i].coeff(k);
            k += 1;
        }
        let prev = signs[i - 1];
        // overlaps within the tolerance keep the previous sign
        let sign = if ip < -overlap_tol { -prev } else { prev };
        signs.push(sign);
    }
    signs
}

/// Block index owning coefficient `k`: `floor((2k + L - 1) / (2L))`. The
/// preimage of `k'` is exactly `[k'L-(L-1)/2, k'L+(L-1)/2]`.
pub fn owning_block(k: i64, period: i64) -> i64 {
    (2 * k + period - 1).div_euclid(2 * period)
}

/// Assemble the global coefficients, reading each index from its owning
/// block with that block's sign.
pub fn sew<S: Scalar>(blocks: &[BlockEstimate<S>], signs: &[i8]) -> Result<CoeffWindow<S>> {
    if blocks.is_empty() {
        return Ok(CoeffWindow::empty());
    }
    let period = blocks[0].period;
    let k_lo = blocks[0].kprime * period - (period - 1) / 2;
    let k_hi = blocks.last().unwrap().kprime * period + (period - 1) / 2;
    let first = blocks[0].kprime;
    let mut values = Vec::with_capacity((k_hi - k_lo + 1) as usize);
    for k in k_lo..=k_hi {
        let owner = owning_block(k, period);
        let idx = (owner - first) as usize;
        let block = blocks
            .get(idx)
            .ok_or_else(|| Error::Internal(format!("no block covers coefficient {k}")))?;
        debug_assert_eq!(block.kprime, owner);
        let sign = if signs[idx] >= 0 { S::one() } else { -S::one() };
        values.push(sign * block.coeff(k));
    }
    Ok(CoeffWindow::new(k_lo, values))
}

fn sample_key(role: SampleRole, kprime: i64, node_idx: usize, shift: i64) -> (i64, u8, usize, i64) {
    let r = match role {
        SampleRole::Center => 0u8,
        SampleRole::Forward => 1,
        SampleRole::Backward => 2,
    };
    (kprime, r, node_idx, shift)
}

/// Run the full pipeline over every block covered by the samples.
///
/// Deterministic: identical inputs give identical output regardless of
/// how the independent per-block stages would be scheduled.
pub fn meps_reconstruct<S: Scalar>(
    samples: &NoisySamples<S>,
    scheme: &SamplingScheme<S>,
    g: &Generator<S>,
    config: &MepsConfig<S>,
) -> Result<Reconstruction<S>> {
    if samples.is_empty() {
        return Ok(Reconstruction {
            coeffs: CoeffWindow::empty(),
            block_signs: Vec::new(),
            diagnostics: Vec::new(),
            m0_used: S::zero(),
        });
    }
    let ctx = MepsContext::new(g, scheme, config.spark_tol)?;
    let n = scheme.support_len();
    let half = scheme.half_extent();

    let mut by_key: HashMap<(i64, u8, usize, i64), S> = HashMap::new();
    for e in samples.entries() {
        let loc = e.location;
        by_key.insert(
            sample_key(loc.role, loc.kprime, loc.node_idx, loc.shift),
            e.value,
        );
    }
    let lookup = |role: SampleRole, kprime: i64, node_idx: usize, shift: i64| -> Result<S> {
        by_key
            .get(&sample_key(role, kprime, node_idx, shift))
            .copied()
            .ok_or_else(|| {
                Error::MissingSample(format!(
                    "block {kprime}, role {:?}, node {node_idx}, shift {shift}",
                    role
                ))
            })
    };

    let (blk_lo, blk_hi) = samples.block_range();
    let mut blocks = Vec::new();
    let mut diags = Vec::new();
    for kprime in blk_lo..=blk_hi {
        let z_center: Vec<S> = (0..2 * n - 1)
            .map(|m| lookup(SampleRole::Center, kprime, m, 0))
            .collect::<Result<_>>()?;
        let (block, obj) = local_minimize(&ctx, kprime, &z_center, config.refine)?;
        blocks.push(block);
        diags.push(BlockDiagnostics {
            kprime,
            objective: obj,
            branch_taken: Vec::new(),
            h1_values: Vec::new(),
            sign: 1,
        });
    }

    let m0 = match &config.m0 {
        M0Mode::Explicit(v) => {
            if *v < S::zero() {
                return Err(Error::InvalidArgument(
                    "threshold must be nonnegative".into(),
                ));
            }
            *v
        }
        M0Mode::Oracle(coeffs) => {
            let f = SisSignal::from_window(g.clone(), coeffs.clone());
            let s_f = f.window_energy_min()?;
            let inv = ctx.check.inverse_norm;
            s_f / (S::from_f64_lossy(4.0) * inv * inv)
        }
        M0Mode::Auto => estimate_m0(&ctx, &blocks),
    };

    for (block, diag) in blocks.iter_mut().zip(diags.iter_mut()) {
        let kprime = block.kprime;
        for l in 1..=half {
            let z: Vec<S> = (0..n)
                .map(|i| lookup(SampleRole::Forward, kprime, i, l))
                .collect::<Result<_>>()?;
            let (branch, h1v) = extend_forward_step(&ctx, block, l, &z, m0)?;
            diag.branch_taken.push(branch);
            diag.h1_values.push(h1v);
        }
        block.stage = Stage::CHalf;
        for lp in 1..=half {
            let z: Vec<S> = (0..n)
                .map(|i| lookup(SampleRole::Backward, kprime, i, -lp))
                .collect::<Result<_>>()?;
            let (branch, h1v) = extend_backward_step(&ctx, block, lp, &z, m0)?;
            diag.branch_taken.push(branch);
            diag.h1_values.push(h1v);
        }
        block.stage = Stage::C1;
    }

    let signs = adjust_phases(&blocks, config.overlap_tol);
    for (diag, &s) in diags.iter_mut().zip(&signs) {
        diag.sign = s;
    }
    let coeffs = sew(&blocks, &signs)?;
    let block_signs = blocks
        .iter()
        .zip(&signs)
        .map(|(b, &s)| (b.kprime, s))
        .collect();
    Ok(Reconstruction {
        coeffs,
        block_signs,
        diagnostics: diags,
        m0_used: m0,
    })
}

/// Threshold estimate used by `M0Mode::Auto`: collect the interior window
/// energies of all minimization outputs, drop those below `1e-3` of the
/// largest (they are dominated by noise outside the support), and treat
/// the smallest survivor as the window energy floor.
fn estimate_m0<S: Scalar>(ctx: &MepsContext<S>, blocks: &[BlockEstimate<S>]) -> S {
    let n = ctx.scheme.support_len() as i64;
    let mut sums = Vec::new();
    for block in blocks {
        let (lo, _) = block.window();
        for k in lo..=lo + 1 {
            let mut acc = S::zero();
            for l in 0..(n - 1) {
                let c = block.coeff(k + l);
                acc += c * c;
            }
            sums.push(acc);
        }
    }
    let max = sums.iter().cloned().fold(S::zero(), |a, b| a.max(b));
    if max == S::zero() {
        return S::zero();
    }
    let floor = S::from_f64_lossy(1e-3) * max;
    let s_est = sums
        .iter()
        .cloned()
        .filter(|&s| s >= floor)
        .fold(S::infinity(), |a, b| a.min(b));
    let inv = ctx.check.inverse_norm;
    s_est / (S::from_f64_lossy(4.0) * inv * inv)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{take_phaseless_samples, NoiseModel};

    fn hat_ctx(period: i64) -> MepsContext<f64> {
        let g = Generator::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, period).unwrap();
        MepsContext::new(&g, &scheme, None).unwrap()
    }

    #[test]
    fn h1_examples() {
        let phi = [0.3f64, 0.7];
        let e = [0.6f64, 1.4]; // 2 * phi
        assert!(h1(&e, &phi).unwrap().abs() < 1e-28);
        assert!((h1(&[1.0f64, -1.0], &[1.0, 1.0]).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn h1_projection_matches_determinant_form() {
        let mut state = 0x12345u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..200 {
            let phi: Vec<f64> = (0..4).map(|_| next() + 1.5).collect();
            let e: Vec<f64> = (0..4).map(|_| 3.0 * next()).collect();
            let got = h1(&e, &phi).unwrap();
            let vv: f64 = phi.iter().map(|v| v * v).sum();
            let ee: f64 = e.iter().map(|v| v * v).sum();
            let ve: f64 = phi.iter().zip(&e).map(|(v, x)| v * x).sum();
            let det_form = (vv * ee - ve * ve) / vv;
            assert!(got >= 0.0);
            assert!((got - det_form).abs() < 1e-12 * (1.0 + ee));
            assert!(got <= ee + 1e-12);
        }
    }

    #[test]
    fn h2_examples_and_bound() {
        assert_eq!(h2(&[1.0, 2.0], &[0.0, 0.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert!((h2(&[1.0f64, 2.0], &[3.0, 4.0], &[1.0, 1.0]).unwrap() - 0.5).abs() < 1e-15);
        assert!(h2(&[1.0], &[1.0], &[0.0]).is_err());
        assert!(h1(&[1.0], &[0.0]).is_err());

        let mut state = 42u64;
        let mut next = move || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        };
        for _ in 0..1000 {
            let phi: Vec<f64> = (0..3).map(|_| next() * 0.8 + 1.0).collect();
            let e1: Vec<f64> = (0..3).map(|_| 2.0 * next()).collect();
            let e2: Vec<f64> = (0..3).map(|_| 2.0 * next()).collect();
            let v = h2(&e1, &e2, &phi).unwrap();
            let n1: f64 = e1.iter().map(|x| x * x).sum::<f64>().sqrt();
            let n2: f64 = e2.iter().map(|x| x * x).sum::<f64>().sqrt();
            let minphi = phi.iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            assert!(v.abs() <= n1 * n2 / minphi + 1e-12);
        }
    }

    #[test]
    fn local_minimize_zero_samples() {
        let ctx = hat_ctx(1);
        let (block, obj) = local_minimize(&ctx, 0, &[0.0, 0.0, 0.0], false).unwrap();
        assert_eq!(obj, 0.0);
        assert_eq!(block.window(), (-1, 0));
        assert_eq!(block.coeff(-1), 0.0);
        assert_eq!(block.coeff(0), 0.0);
    }

    #[test]
    fn local_minimize_recovers_planted_block() {
        let ctx = hat_ctx(1);
        let g = Generator::<f64>::bspline(2).unwrap();
        let f = SisSignal::new(g, -1, vec![0.8, -0.6]);
        let z: Vec<f64> = ctx
            .scheme()
            .nodes()
            .iter()
            .map(|&x| {
                let v = f.eval(x);
                v * v
            })
            .collect();
        let (block, obj) = local_minimize(&ctx, 0, &z, false).unwrap();
        assert!(obj <= 1e-18, "objective {obj}");
        let d_plus = (block.coeff(-1) - 0.8)
            .abs()
            .max((block.coeff(0) + 0.6).abs());
        let d_minus = (block.coeff(-1) + 0.8)
            .abs()
            .max((block.coeff(0) - 0.6).abs());
        assert!(d_plus.min(d_minus) < 1e-12);
    }

    #[test]
    fn local_minimize_objective_beats_planted_solution_under_noise() {
        let ctx = hat_ctx(1);
        let g = Generator::<f64>::bspline(2).unwrap();
        let truth = [0.5, 0.9];
        let f = SisSignal::new(g, -1, truth.to_vec());
        // perturb the squared samples
        let z: Vec<f64> = ctx
            .scheme()
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let v = f.eval(x);
                (v * v + 0.01 * ((i as f64) - 1.0)).max(0.0)
            })
            .collect();
        let (_, obj) = local_minimize(&ctx, 0, &z, false).unwrap();
        let sqrt_z: Vec<f64> = z.iter().map(|v| v.sqrt()).collect();
        for sign in [1.0, -1.0] {
            let planted = vec![sign * truth[1], sign * truth[0]];
            let ref_obj = super::objective(ctx.phi(), &planted, &sqrt_z);
            assert!(obj <= ref_obj + 1e-15);
        }
    }

    #[test]
    fn local_minimize_scale_covariance_power_of_two() {
        let ctx = hat_ctx(1);
        let z = [0.17, 0.45, 0.08];
        let (a, _) = local_minimize(&ctx, 0, &z, false).unwrap();
        let z4: Vec<f64> = z.iter().map(|v| 4.0 * v).collect();
        let (b, _) = local_minimize(&ctx, 0, &z4, false).unwrap();
        for k in [-1i64, 0] {
            assert_eq!(b.coeff(k), 2.0 * a.coeff(k));
        }
    }

    #[test]
    fn refinement_does_not_hurt() {
        let ctx = hat_ctx(1);
        let z = [0.3, 0.02, 0.6];
        let (_, obj_plain) = local_minimize(&ctx, 0, &z, false).unwrap();
        let (_, obj_refined) = local_minimize(&ctx, 0, &z, true).unwrap();
        assert!(obj_refined <= obj_plain + 1e-18);
    }

    fn simulate_block_samples(
        f: &SisSignal<f64>,
        scheme: &SamplingScheme<f64>,
        kprime: i64,
    ) -> NoisySamples<f64> {
        take_phaseless_samples(f, scheme, (kprime, kprime), 0.0, NoiseModel::Absolute, 0).unwrap()
    }

    #[test]
    fn forward_extension_recovers_noiseless_coefficients() {
        let g = Generator::<f64>::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, 5).unwrap();
        let ctx = MepsContext::new(&g, &scheme, None).unwrap();
        let truth = vec![0.7, -0.4, 0.9, 0.5, -0.8];
        let f = SisSignal::new(g.clone(), -1, truth.clone());
        let samples = simulate_block_samples(&f, &scheme, 0);
        let z_center: Vec<f64> = (0..3)
            .map(|m| {
                samples
                    .entries()
                    .iter()
                    .find(|e| e.location.role == SampleRole::Center && e.location.node_idx == m)
                    .unwrap()
                    .value
            })
            .collect();
        let (mut block, _) = local_minimize(&ctx, 0, &z_center, false).unwrap();
        let delta = if (block.coeff(0) - f.coeffs().get(0)).abs() < 1e-9 {
            1.0
        } else {
            -1.0
        };
        for l in 1..=2i64 {
            let z: Vec<f64> = (0..2)
                .map(|i| {
                    samples
                        .entries()
                        .iter()
                        .find(|e| {
                            e.location.role == SampleRole::Forward
                                && e.location.node_idx == i
                                && e.location.shift == l
                        })
                        .unwrap()
                        .value
                })
                .collect();
            let (branch, _) = extend_forward_step(&ctx, &mut block, l, &z, 0.0).unwrap();
            assert_eq!(branch, Branch::Large);
        }
        for k in -1..=2i64 {
            assert!(
                (block.coeff(k) - delta * f.coeffs().get(k)).abs() < 1e-12,
                "k {k}"
            );
        }
    }

    #[test]
    fn backward_extension_recovers_noiseless_coefficients() {
        let g = Generator::<f64>::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, 5).unwrap();
        let ctx = MepsContext::new(&g, &scheme, None).unwrap();
        let truth = vec![0.7, -0.4, 0.9, 0.5, -0.8];
        let f = SisSignal::new(g.clone(), -3, truth.clone());
        let samples = simulate_block_samples(&f, &scheme, 0);
        let z_center: Vec<f64> = (0..3)
            .map(|m| {
                samples
                    .entries()
                    .iter()
                    .find(|e| e.location.role == SampleRole::Center && e.location.node_idx == m)
                    .unwrap()
                    .value
            })
            .collect();
        let (mut block, _) = local_minimize(&ctx, 0, &z_center, false).unwrap();
        let delta = if (block.coeff(0) - f.coeffs().get(0)).abs() < 1e-9 {
            1.0
        } else {
            -1.0
        };
        block.stage = Stage::CHalf;
        for lp in 1..=2i64 {
            let z: Vec<f64> = (0..2)
                .map(|i| {
                    samples
                        .entries()
                        .iter()
                        .find(|e| {
                            e.location.role == SampleRole::Backward
                                && e.location.node_idx == i
                                && e.location.shift == -lp
                        })
                        .unwrap()
                        .value
                })
                .collect();
            let (branch, _) = extend_backward_step(&ctx, &mut block, lp, &z, 0.0).unwrap();
            assert_eq!(branch, Branch::Large);
        }
        for k in -3..=0i64 {
            assert!(
                (block.coeff(k) - delta * f.coeffs().get(k)).abs() < 1e-12,
                "k {k}"
            );
        }
    }

    #[test]
    fn zero_window_small_branch_returns_magnitude() {
        // block is all zero, the new coefficient alone drives the samples
        let g = Generator::<f64>::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, 5).unwrap();
        let ctx = MepsContext::new(&g, &scheme, None).unwrap();
        let c_new = -0.75f64;
        let f = SisSignal::new(g.clone(), 1, vec![c_new, 0.3]);
        let (mut block, _) = local_minimize(&ctx, 0, &[0.0, 0.0, 0.0], false).unwrap();
        let z: Vec<f64> = (0..2)
            .map(|i| {
                let y = scheme.gamma(i) + 1.0;
                let v = f.eval(y);
                v * v
            })
            .collect();
        let (branch, h1v) = extend_forward_step(&ctx, &mut block, 1, &z, 1e-12).unwrap();
        assert_eq!(branch, Branch::Small);
        assert_eq!(h1v, 0.0);
        assert!((block.coeff(1) - c_new.abs()).abs() < 1e-12);
    }

    #[test]
    fn zero_block_zero_samples_stay_zero() {
        let ctx = hat_ctx(5);
        let (mut block, _) = local_minimize(&ctx, 0, &[0.0, 0.0, 0.0], false).unwrap();
        let (branch, _) = extend_forward_step(&ctx, &mut block, 1, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(branch, Branch::Small);
        assert_eq!(block.coeff(1), 0.0);
        let (branch, _) = extend_backward_step(&ctx, &mut block, 1, &[0.0, 0.0], 0.0).unwrap();
        assert_eq!(branch, Branch::Small);
        assert_eq!(block.coeff(-2), 0.0);
    }

    fn block_from_values(
        kprime: i64,
        period: i64,
        k_low: i64,
        values: Vec<f64>,
    ) -> BlockEstimate<f64> {
        BlockEstimate {
            kprime,
            period,
            k_low,
            values,
            stage: Stage::C1,
        }
    }

    #[test]
    fn phase_adjustment_aligns_signs() {
        let a = block_from_values(0, 1, -1, vec![0.5, 1.0]);
        let b = block_from_values(1, 1, 0, vec![1.0, 0.7]);
        assert_eq!(adjust_phases(&[a.clone(), b.clone()], 0.0), vec![1, 1]);
        let b_neg = block_from_values(1, 1, 0, vec![-1.0, -0.7]);
        assert_eq!(adjust_phases(&[a, b_neg], 0.0), vec![1, -1]);
    }

    #[test]
    fn phase_adjustment_tie_keeps_previous_sign() {
        let a = block_from_values(0, 1, -1, vec![0.5, 0.0]);
        let b = block_from_values(1, 1, 0, vec![0.0, 0.7]);
        assert_eq!(adjust_phases(&[a, b], 0.0), vec![1, 1]);
    }

    #[test]
    fn owning_block_partitions_integers() {
        for period in [1i64, 3, 7, 15] {
            for k in -100..=100i64 {
                let owner = owning_block(k, period);
                assert!(k >= owner * period - (period - 1) / 2);
                assert!(k <= owner * period + (period - 1) / 2);
            }
        }
        // endpoints for period 7
        assert_eq!(owning_block(7 * 3 - 3, 7), 3);
        assert_eq!(owning_block(7 * 3 + 3, 7), 3);
        assert_eq!(owning_block(7 * 3 + 4, 7), 4);
    }

    #[test]
    fn sew_applies_signs_and_partition() {
        let a = block_from_values(0, 3, -2, vec![0.0, 1.0, 2.0, 3.0]);
        let b = block_from_values(1, 3, 1, vec![-3.5, -4.0, -5.0, -6.0]);
        let out = sew(&[a, b], &[1, -1]).unwrap();
        assert_eq!(out.k_low(), -1);
        assert_eq!(out.k_high(), 4);
        assert_eq!(out.get(0), 2.0); // block 0
        assert_eq!(out.get(1), 3.0); // block 0 upper edge
        assert_eq!(out.get(2), 4.0); // block 1, sign flipped
        assert_eq!(out.get(4), 6.0);
    }

    fn reconstruct_noiseless(
        order: usize,
        period: i64,
        k_low: i64,
        truth: Vec<f64>,
    ) -> (SisSignal<f64>, Reconstruction<f64>) {
        let g = Generator::bspline(order).unwrap();
        let scheme = SamplingScheme::uniform(order, period).unwrap();
        let f = SisSignal::new(g.clone(), k_low, truth);
        let range = crate::sampling::block_range_for_support(f.support_bounds().unwrap(), period);
        let samples =
            take_phaseless_samples(&f, &scheme, range, 0.0, NoiseModel::Absolute, 1).unwrap();
        let config = MepsConfig {
            m0: M0Mode::Oracle(f.coeffs().clone()),
            ..MepsConfig::default()
        };
        let rec = meps_reconstruct(&samples, &scheme, &g, &config).unwrap();
        (f, rec)
    }

    #[test]
    fn noiseless_end_to_end_is_exact() {
        let truth = vec![0.9, -0.3, 0.5, 0.8, -0.6, 0.4, 0.7, -0.9, 0.2, 0.5];
        for (order, period) in [(2usize, 1i64), (2, 3), (2, 7), (3, 3), (4, 7)] {
            let (f, rec) = reconstruct_noiseless(order, period, 0, truth.clone());
            let err = crate::harness::max_reconstruction_error(rec.coeffs(), f.coeffs());
            assert!(err <= 1e-8, "order {order} period {period}: err {err}");
        }
    }

    #[test]
    fn reconstruction_of_negated_signal_is_bitwise_identical() {
        let g = Generator::<f64>::bspline(3).unwrap();
        let scheme = SamplingScheme::uniform(3, 3).unwrap();
        let truth = vec![0.4, 0.9, -0.2, 0.6, 0.8];
        let f = SisSignal::new(g.clone(), 0, truth.clone());
        let neg = SisSignal::new(g.clone(), 0, truth.iter().map(|v| -v).collect());
        let range = crate::sampling::block_range_for_support((0, 4), 3);
        let a = take_phaseless_samples(&f, &scheme, range, 1e-6, NoiseModel::RelativeToPeak, 5)
            .unwrap();
        let b = take_phaseless_samples(&neg, &scheme, range, 1e-6, NoiseModel::RelativeToPeak, 5)
            .unwrap();
        assert_eq!(a, b, "magnitude samples coincide");
        let config = MepsConfig::<f64>::default();
        let ra = meps_reconstruct(&a, &scheme, &g, &config).unwrap();
        let rb = meps_reconstruct(&b, &scheme, &g, &config).unwrap();
        assert_eq!(ra.coeffs(), rb.coeffs());
    }

    #[test]
    fn empty_samples_give_empty_reconstruction() {
        let g = Generator::<f64>::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, 3).unwrap();
        let f = SisSignal::new(g.clone(), 0, vec![1.0]);
        let samples =
            take_phaseless_samples(&f, &scheme, (1, 0), 0.0, NoiseModel::Absolute, 0).unwrap();
        let rec = meps_reconstruct(&samples, &scheme, &g, &MepsConfig::default()).unwrap();
        assert!(rec.coeffs().is_empty());
    }

    #[test]
    fn diagnostics_record_branches_and_signs() {
        let (_, rec) = reconstruct_noiseless(2, 3, 0, vec![0.5, 0.9, -0.7, 0.4]);
        assert!(!rec.diagnostics().is_empty());
        for d in rec.diagnostics() {
            assert_eq!(d.branch_taken.len(), 2); // one forward, one backward step
            assert_eq!(d.h1_values.len(), 2);
            assert!(d.sign == 1 || d.sign == -1);
        }
        let mut buf = Vec::new();
        rec.write_diagnostics_json(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"SMALL\"") || text.contains("\"LARGE\""));
        assert!(text.contains("\"kprime\""));
    }

    #[test]
    fn auto_threshold_recovers_noiseless_signal() {
        let g = Generator::<f64>::bspline(2).unwrap();
        let scheme = SamplingScheme::uniform(2, 3).unwrap();
        let truth = vec![0.9, -0.3, 0.5, 0.8, -0.6, 0.4];
        let f = SisSignal::new(g.clone(), 0, truth);
        let range = crate::sampling::block_range_for_support((0, 5), 3);
        let samples =
            take_phaseless_samples(&f, &scheme, range, 0.0, NoiseModel::Absolute, 2).unwrap();
        let rec = meps_reconstruct(&samples, &scheme, &g, &MepsConfig::default()).unwrap();
        let err = crate::harness::max_reconstruction_error(rec.coeffs(), f.coeffs());
        assert!(err <= 1e-8, "err {err}");
    }
}
