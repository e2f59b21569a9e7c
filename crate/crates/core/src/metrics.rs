//! Sample discrepancies and convergence-order fitting.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sampler::SamplerKind;

/// Points stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    data: Vec<f64>,
    d: usize,
    pub label: String,
}

impl SampleSet {
    pub fn new(points: Vec<Vec<f64>>, label: impl Into<String>) -> Result<Self> {
        let d = points.first().map(|p| p.len()).ok_or_else(|| Error::Invalid("empty sample set".into()))?;
        let mut data = Vec::with_capacity(points.len() * d);
        for p in &points {
            if p.len() != d {
                return Err(Error::Dimension { expected: d, got: p.len() });
            }
            data.extend_from_slice(p);
        }
        Self::from_flat(data, d, label)
    }

    pub fn from_flat(data: Vec<f64>, d: usize, label: impl Into<String>) -> Result<Self> {
        if d == 0 || data.is_empty() || !data.len().is_multiple_of(d) {
            return Err(Error::Invalid("sample buffer must hold a positive number of d-vectors".into()));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("sample set contains non-finite values".into()));
        }
        Ok(Self { data, d, label: label.into() })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    /// Rows selected by `idx`.
    pub fn select(&self, idx: &[usize]) -> SampleSet {
        let mut data = Vec::with_capacity(idx.len() * self.d);
        for &i in idx {
            data.extend_from_slice(self.point(i));
        }
        SampleSet { data, d: self.d, label: self.label.clone() }
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyOptions {
    /// Exact U-statistic when `n_a · n_b` does not exceed this.
    pub max_exact_pairs: usize,
    /// Projections for the sliced estimator used above the exact limit;
    /// zero selects the incomplete U-statistic instead.
    pub directions: usize,
    /// Index tuples drawn by the incomplete U-statistic.
    pub pairs: usize,
    pub seed: u64,
}

impl Default for EnergyOptions {
    fn default() -> Self {
        Self { max_exact_pairs: 25_000_000, directions: 128, pairs: 2_000_000, seed: 0x5eed }
    }
}

pub fn energy_distance(a: &SampleSet, b: &SampleSet) -> Result<f64> {
    energy_distance_with(a, b, &EnergyOptions::default())
}

/// `2 E‖X - Y‖ - E‖X - X'‖ - E‖Y - Y'‖`, floored at zero.
pub fn energy_distance_with(a: &SampleSet, b: &SampleSet, opts: &EnergyOptions) -> Result<f64> {
    check_pair(a, b)?;
    let value = if a.dim() == 1 {
        energy_exact_1d(a, b)
    } else if a.len().saturating_mul(b.len()) <= opts.max_exact_pairs {
        energy_exact(a, b)
    } else if opts.directions > 0 {
        energy_distance_sliced_bootstrap(a, b, opts.directions, 0, opts.seed)?.0
    } else {
        energy_subsampled(a, b, opts.pairs, opts.seed)
    };
    Ok(value.max(0.0))
}

fn check_pair(a: &SampleSet, b: &SampleSet) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), got: b.dim() });
    }
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Invalid("energy distance needs at least two points per set".into()));
    }
    Ok(())
}

/// Full U-statistic by direct pair enumeration.
pub fn energy_exact(a: &SampleSet, b: &SampleSet) -> f64 {
    let within = |s: &SampleSet| {
        let n = s.len();
        let mut acc = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                acc += dist(s.point(i), s.point(j));
            }
        }
        2.0 * acc / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for x in a.iter() {
        for y in b.iter() {
            cross += dist(x, y);
        }
    }
    cross /= (a.len() * b.len()) as f64;
    2.0 * cross - within(a) - within(b)
}

/// Full U-statistic in one dimension through sorted prefix sums.
pub fn energy_exact_1d(a: &SampleSet, b: &SampleSet) -> f64 {
    let sorted = |s: &SampleSet| {
        let mut v: Vec<f64> = s.iter().map(|p| p[0]).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        v
    };
    let (xa, xb) = (sorted(a), sorted(b));
    // Σ_{i<j} (x_j - x_i) for sorted x
    let within = |x: &[f64]| {
        let n = x.len();
        let s: f64 = x.iter().enumerate().map(|(i, v)| (2.0 * i as f64 - (n as f64 - 1.0)) * v).sum();
        2.0 * s / (n * (n - 1)) as f64
    };
    let within_a = within(&xa);
    let within_b = within(&xb);
    // Σ_{i,j} |a_i - b_j| = Σ_{pooled} with sign bookkeeping
    let mut cross = 0.0;
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut sum_a, mut sum_b) = (0.0, 0.0);
    while ia < xa.len() || ib < xb.len() {
        let take_a = ib >= xb.len() || (ia < xa.len() && xa[ia] <= xb[ib]);
        if take_a {
            let v = xa[ia];
            cross += ib as f64 * v - sum_b;
            sum_a += v;
            ia += 1;
        } else {
            let v = xb[ib];
            cross += ia as f64 * v - sum_a;
            sum_b += v;
            ib += 1;
        }
    }
    cross /= (xa.len() * xb.len()) as f64;
    2.0 * cross - within_a - within_b
}

/// Incomplete U-statistic on `pairs` random index tuples with the kernel
/// `‖x_i - y_j‖ + ‖x_i' - y_j'‖ - ‖x_i - x_i'‖ - ‖y_j - y_j'‖`.
pub fn energy_subsampled(a: &SampleSet, b: &SampleSet, pairs: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (na, nb) = (a.len(), b.len());
    let mut acc = 0.0;
    for _ in 0..pairs {
        let i = rng.random_range(0..na);
        let mut i2 = rng.random_range(0..na - 1);
        if i2 >= i {
            i2 += 1;
        }
        let j = rng.random_range(0..nb);
        let mut j2 = rng.random_range(0..nb - 1);
        if j2 >= j {
            j2 += 1;
        }
        let (x, x2, y, y2) = (a.point(i), a.point(i2), b.point(j), b.point(j2));
        acc += dist(x, y) + dist(x2, y2) - dist(x, x2) - dist(y, y2);
    }
    acc / pairs as f64
}

/// Point estimate and bootstrap standard error over `replicates` resamples
/// (with replacement) of both sets.
pub fn energy_distance_bootstrap(
    a: &SampleSet,
    b: &SampleSet,
    opts: &EnergyOptions,
    replicates: usize,
) -> Result<(f64, f64)> {
    let estimate = energy_distance_with(a, b, opts)?;
    if replicates < 2 {
        return Err(Error::Invalid("bootstrap needs at least two replicates".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xb007);
    let mut values = Vec::with_capacity(replicates);
    for r in 0..replicates {
        let ia: Vec<usize> = (0..a.len()).map(|_| rng.random_range(0..a.len())).collect();
        let ib: Vec<usize> = (0..b.len()).map(|_| rng.random_range(0..b.len())).collect();
        let o = EnergyOptions { seed: opts.seed.wrapping_add(r as u64 + 1), ..*opts };
        values.push(energy_distance_with(&a.select(&ia), &b.select(&ib), &o)?);
    }
    let mean = values.iter().sum::<f64>() / replicates as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (replicates - 1) as f64;
    Ok((estimate, var.sqrt()))
}

/// Weighted sums over sorted 1-D values: `Σ_{a<b} w_a w_b (x_b - x_a)`.
fn weighted_within(x: &[f64], w: &[f64]) -> f64 {
    let (mut cw, mut cs, mut acc) = (0.0, 0.0, 0.0);
    for (v, wi) in x.iter().zip(w) {
        acc += wi * (cw * v - cs);
        cw += wi;
        cs += wi * v;
    }
    acc
}

/// `Σ_{a,b} wa_a wb_b |xa_a - xb_b|` over two sorted arrays.
fn weighted_cross(xa: &[f64], wa: &[f64], xb: &[f64], wb: &[f64]) -> f64 {
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut wsum_a, mut sum_a, mut wsum_b, mut sum_b) = (0.0, 0.0, 0.0, 0.0);
    let mut acc = 0.0;
    while ia < xa.len() || ib < xb.len() {
        if ib >= xb.len() || (ia < xa.len() && xa[ia] <= xb[ib]) {
            acc += wa[ia] * (wsum_b * xa[ia] - sum_b);
            wsum_a += wa[ia];
            sum_a += wa[ia] * xa[ia];
            ia += 1;
        } else {
            acc += wb[ib] * (wsum_a * xb[ib] - sum_a);
            wsum_b += wb[ib];
            sum_b += wb[ib] * xb[ib];
            ib += 1;
        }
    }
    acc
}

/// Unit directions whose mean `|⟨θ, v⟩|` times `scale` approximates `‖v‖₂`:
/// equal angles on the half circle for d = 2, seeded Gaussian directions
/// otherwise (d = 1 is exact).
pub fn slicing_directions(d: usize, count: usize, seed: u64) -> (Vec<Vec<f64>>, f64) {
    match d {
        1 => (vec![vec![1.0]], 1.0),
        2 => {
            let dirs = (0..count)
                .map(|k| {
                    let phi = std::f64::consts::PI * (k as f64 + 0.5) / count as f64;
                    vec![phi.cos(), phi.sin()]
                })
                .collect();
            (dirs, std::f64::consts::FRAC_PI_2)
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let dirs = (0..count)
                .map(|_| {
                    let mut v: Vec<f64> = (0..d).map(|_| rng.sample(rand_distr::StandardNormal)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|x| *x /= n);
                    v
                })
                .collect();
            // E|⟨θ, e⟩| over the sphere is Γ(d/2)/(√π Γ((d+1)/2))
            (dirs, sphere_abs_projection_inverse(d))
        }
    }
}

/// `√π Γ((d+1)/2) / Γ(d/2)` by the ratio recurrence.
fn sphere_abs_projection_inverse(d: usize) -> f64 {
    // r(d) = Γ((d+1)/2)/Γ(d/2); r(1) = 1/√π, r(2) = √π/2, r(d+2) = r(d)(d+1)/d
    let sqrt_pi = std::f64::consts::PI.sqrt();
    let mut r = if d % 2 == 1 { 1.0 / sqrt_pi } else { sqrt_pi / 2.0 };
    let mut k = if d % 2 == 1 { 1 } else { 2 };
    while k < d {
        r *= (k as f64 + 1.0) / k as f64;
        k += 2;
    }
    sqrt_pi * r
}

/// Energy distance through 1-D projections, with a bootstrap standard error
/// from `replicates` multinomial resamples of both sets. Every projection is
/// sorted once and each replicate reuses the sort through its counts.
pub fn energy_distance_sliced_bootstrap(
    a: &SampleSet,
    b: &SampleSet,
    directions: usize,
    replicates: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    check_pair(a, b)?;
    if directions == 0 {
        return Err(Error::Invalid("need at least one direction".into()));
    }
    let (na, nb) = (a.len(), b.len());
    let (dirs, scale) = slicing_directions(a.dim(), directions, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb007);
    let mut counts = |n: usize| {
        let mut c = vec![0.0f64; n];
        for _ in 0..n {
            c[rng.random_range(0..n)] += 1.0;
        }
        c
    };
    // weight vectors: index 0 is the original sample
    let weights: Vec<(Vec<f64>, Vec<f64>)> = std::iter::once((vec![1.0; na], vec![1.0; nb]))
        .chain((0..replicates).map(|_| (counts(na), counts(nb))))
        .collect();

    let project = |s: &SampleSet, dir: &[f64]| -> (Vec<f64>, Vec<usize>) {
        let proj: Vec<f64> = s.iter().map(|p| p.iter().zip(dir).map(|(x, u)| x * u).sum()).collect();
        let mut order: Vec<usize> = (0..proj.len()).collect();
        order.sort_by(|&i, &j| proj[i].total_cmp(&proj[j]));
        (order.iter().map(|&i| proj[i]).collect(), order)
    };
    let mut totals = vec![0.0; weights.len()];
    for dir in &dirs {
        let (xa, oa) = project(a, dir);
        let (xb, ob) = project(b, dir);
        for (total, (wa, wb)) in totals.iter_mut().zip(&weights) {
            let wa: Vec<f64> = oa.iter().map(|&i| wa[i]).collect();
            let wb: Vec<f64> = ob.iter().map(|&i| wb[i]).collect();
            let cross = weighted_cross(&xa, &wa, &xb, &wb) / (na * nb) as f64;
            let within_a = 2.0 * weighted_within(&xa, &wa) / (na * (na - 1)) as f64;
            let within_b = 2.0 * weighted_within(&xb, &wb) / (nb * (nb - 1)) as f64;
            *total += 2.0 * cross - within_a - within_b;
        }
    }
    let values: Vec<f64> = totals.iter().map(|t| (scale * t / dirs.len() as f64).max(0.0)).collect();
    let se = if replicates >= 2 {
        let boot = &values[1..];
        let mean = boot.iter().sum::<f64>() / boot.len() as f64;
        (boot.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (boot.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok((values[0], se))
}

/// Unbiased sample mean and covariance.
pub fn empirical_moments(a: &SampleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = a.len();
    if n < 2 {
        return Err(Error::Invalid("moments need at least two points".into()));
    }
    let d = a.dim();
    let mut mean = DVector::zeros(d);
    for p in a.iter() {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for p in a.iter() {
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in i..d {
            cov[(i, j)] /= (n - 1) as f64;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok((mean, cov))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 3 {
        return Err(Error::Invalid("slope fit needs at least three points".into()));
    }
    if points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return Err(Error::Invalid("log-log fit needs positive coordinates".into()));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Invalid("x values are all equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(SlopeFit { slope, intercept, r_squared })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kind: SamplerKind,
    #[serde(rename = "K")]
    pub steps: usize,
    pub d: usize,
    pub metric: String,
    pub value: f64,
    pub nfe: usize,
    pub seed: Option<u64>,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeRow {
    pub kind: SamplerKind,
    /// Variable the metric was regressed on (`K` or `d`).
    pub against: String,
    pub metric: String,
    pub fit: SlopeFit,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub slopes: Vec<SlopeRow>,
}

pub const CSV_HEADER: &str = "kind,K,d,metric,value,nfe,seed,wall_time_s";

fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

impl SweepResult {
    pub fn check(&self) -> Result<()> {
        for r in &self.rows {
            if r.nfe != r.steps {
                return Err(Error::Invalid(format!("row {} K={} has nfe {}", r.kind, r.steps, r.nfe)));
            }
        }
        Ok(())
    }

    pub fn write_row<W: Write>(w: &mut W, r: &SweepRow) -> Result<()> {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.kind,
            r.steps,
            r.d,
            r.metric,
            fmt17(r.value),
            r.nfe,
            r.seed.map(|s| s.to_string()).unwrap_or_default(),
            fmt17(r.wall_time)
        )?;
        Ok(())
    }

    /// Slope rows carry `slope_vs_<var>` in the K column, the fitted slope
    /// in `value` and `r²` in the metric suffix.
    pub fn write_slope<W: Write>(w: &mut W, s: &SlopeRow) -> Result<()> {
        writeln!(
            w,
            "{},slope_vs_{},,{}_loglog_slope,{},,,",
            s.kind,
            s.against,
            s.metric,
            fmt17(s.fit.slope)
        )?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for r in &self.rows {
            Self::write_row(&mut w, r)?;
        }
        for s in &self.slopes {
            Self::write_slope(&mut w, s)?;
        }
        Ok(())
    }
}
