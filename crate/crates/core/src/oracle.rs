//! Exact output laws for Gaussian targets.
//!
//! With an affine score `s(t_k, x) = G x + h` every sampler step maps a
//! Gaussian to a Gaussian, so the output law and `KL(q_δ ‖ p_output)` are
//! available in closed form.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{kernel_scalars, CoefficientSet, CoefficientTable};
use crate::linalg::Operator;
use crate::sampler::SamplerKind;
use crate::schedule::TimeGrid;
use crate::score::{LinearScore, ScoreField, TargetSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    pub mean: DVector<f64>,
    pub cov: Operator,
}

impl GaussianLaw {
    pub fn standard(d: usize) -> Self {
        Self { mean: DVector::zeros(d), cov: Operator::identity(d) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn variances(&self) -> DVector<f64> {
        self.cov.diagonal()
    }
}

#[derive(Serialize, Deserialize)]
struct LawJson {
    mean: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    diag: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    cov: Option<Vec<f64>>,
}

impl Serialize for GaussianLaw {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mean = self.mean.iter().copied().collect();
        let repr = match &self.cov {
            Operator::Diag(v) => LawJson { mean, diag: Some(v.iter().copied().collect()), cov: None },
            Operator::Dense(m) => LawJson {
                mean,
                diag: None,
                // row-major
                cov: Some(m.transpose().iter().copied().collect()),
            },
        };
        repr.serialize(s)
    }
}

impl<'de> Deserialize<'de> for GaussianLaw {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let repr = LawJson::deserialize(d)?;
        let n = repr.mean.len();
        let cov = match (repr.diag, repr.cov) {
            (Some(v), None) if v.len() == n => Operator::Diag(DVector::from_vec(v)),
            (None, Some(c)) if c.len() == n * n => Operator::Dense(DMatrix::from_row_slice(n, n, &c)),
            _ => return Err(D::Error::custom("expected exactly one of 'diag' (len d) or 'cov' (len d*d)")),
        };
        Ok(GaussianLaw { mean: DVector::from_vec(repr.mean), cov })
    }
}

/// `x ↦ A x + b + ξ`, `ξ ~ N(0, noise_cov)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineStep {
    pub drift: Operator,
    pub offset: DVector<f64>,
    pub noise_cov: Operator,
}

impl AffineStep {
    pub fn identity(d: usize) -> Self {
        Self { drift: Operator::identity(d), offset: DVector::zeros(d), noise_cov: Operator::zeros(d) }
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &AffineStep) -> AffineStep {
        AffineStep {
            drift: self.drift.mul(&first.drift),
            offset: self.drift.apply(&first.offset) + &self.offset,
            noise_cov: self.drift.sandwich(&first.noise_cov).add(&self.noise_cov).symmetrized(),
        }
    }
}

/// `q_δ = N(λ_δ μ, λ_δ² Σ₀ + σ_δ² I)`.
pub fn q_delta_law(target: &TargetSpec, delta: f64) -> Result<GaussianLaw> {
    let TargetSpec::Gaussian { mean, cov } = target else {
        return Err(Error::Target("exact laws need a Gaussian target".into()));
    };
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!("delta must be positive, got {delta}")));
    }
    let ks = kernel_scalars(delta);
    let l2 = ks.lambda_sq();
    let s2 = ks.sigma_sq();
    Ok(GaussianLaw {
        mean: DVector::from_iterator(mean.len(), mean.iter().map(|m| ks.lambda * m)),
        cov: Operator::Diag(DVector::from_iterator(cov.len(), cov.iter().map(|c| l2 * c + s2))),
    })
}

fn rk_affine(linear: &LinearScore, inv_sqrt_alpha: f64, one_minus_alpha: f64, zetas: [f64; 3]) -> AffineStep {
    let [z1, z2, z3] = zetas;
    let d = linear.h.len();
    let scaled = one_minus_alpha * inv_sqrt_alpha;
    let drift = linear.g.scale(scaled).add_identity(inv_sqrt_alpha);
    let mix = linear.g.scale(scaled * z1).add_identity(z2);
    let noise_cov = mix.sandwich(&Operator::identity(d)).add_identity(z3 * z3).symmetrized();
    AffineStep { drift, offset: &linear.h * scaled, noise_cov }
}

/// Affine form of one step under `s(t_k, x) = G x + h`.
pub fn affine_of_step(kind: SamplerKind, coeffs: &CoefficientSet, linear: &LinearScore) -> AffineStep {
    let delta = coeffs.delta;
    match kind {
        SamplerKind::Srk => rk_affine(
            linear,
            coeffs.inv_sqrt_alpha(),
            coeffs.one_minus_alpha(),
            [coeffs.zeta1, coeffs.zeta2, coeffs.zeta3],
        ),
        SamplerKind::LimitVariant => {
            let z = delta.sqrt();
            rk_affine(linear, coeffs.inv_sqrt_alpha(), coeffs.one_minus_alpha(), [z, z, z])
        }
        SamplerKind::DdpmEi => {
            let d = linear.h.len();
            let gain = 2.0 * delta.exp_m1();
            AffineStep {
                drift: linear.g.scale(gain).add_identity(delta.exp()),
                offset: &linear.h * gain,
                noise_cov: Operator::scaled_identity(d, (2.0 * delta).exp_m1()),
            }
        }
    }
}

pub fn propagate(law: &GaussianLaw, step: &AffineStep) -> GaussianLaw {
    GaussianLaw {
        mean: step.drift.apply(&law.mean) + &step.offset,
        cov: step.drift.sandwich(&law.cov).add(&step.noise_cov).symmetrized(),
    }
}

/// Law of `Ŷ_{t_K}` from `Ŷ_0 ~ N(0, I)` under a field that is affine at
/// every grid time.
pub fn exact_output_law_for_field(
    grid: &TimeGrid,
    kind: SamplerKind,
    field: &dyn ScoreField,
) -> Result<GaussianLaw> {
    grid.check()?;
    let table = CoefficientTable::from_widths(&grid.widths())?;
    let mut law = GaussianLaw::standard(field.dim());
    for k in 0..grid.steps() {
        let t_k = grid.times[k];
        let linear = field.linearization(t_k).ok_or(Error::NotAffine(t_k))?;
        law = propagate(&law, &affine_of_step(kind, table.get(k), &linear));
    }
    Ok(law)
}

pub fn exact_output_law(grid: &TimeGrid, kind: SamplerKind, target: &TargetSpec) -> Result<GaussianLaw> {
    if !target.is_gaussian() {
        return Err(Error::Target("exact laws need a Gaussian target".into()));
    }
    let field = crate::score::AnalyticScore::new(target.clone(), grid.horizon)?;
    exact_output_law_for_field(grid, kind, &field)
}

/// `KL(p ‖ q)`, floored at zero.
pub fn gaussian_kl(p: &GaussianLaw, q: &GaussianLaw) -> Result<f64> {
    let d = p.dim();
    if q.dim() != d {
        return Err(Error::Dimension { expected: d, got: q.dim() });
    }
    let diff = &q.mean - &p.mean;
    let value = match (&p.cov, &q.cov) {
        (Operator::Diag(sp), Operator::Diag(sq)) => {
            if sq.iter().any(|v| !(*v > 1e-12)) || sp.iter().any(|v| !(*v > 0.0)) {
                return Err(Error::Singular);
            }
            let mut acc = 0.0;
            for i in 0..d {
                let r = sp[i] / sq[i];
                acc += r - 1.0 - r.ln() + diff[i] * diff[i] / sq[i];
            }
            0.5 * acc
        }
        _ => {
            let sq = q.cov.to_dense();
            let sp = p.cov.to_dense();
            let min_eig = sq.clone().symmetric_eigenvalues().min();
            if !(min_eig > 1e-12) {
                return Err(Error::Singular);
            }
            let cq = Cholesky::new(sq).ok_or(Error::Singular)?;
            let cp = Cholesky::new(sp.clone()).ok_or(Error::Singular)?;
            let trace = cq.solve(&sp).trace();
            let maha = diff.dot(&cq.solve(&diff));
            let logdet = |c: &Cholesky<f64, nalgebra::Dyn>| -> f64 {
                2.0 * c.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>()
            };
            0.5 * (trace + maha - d as f64 + logdet(&cq) - logdet(&cp))
        }
    };
    Ok(value.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::coefficients;

    fn diag_law(mean: &[f64], var: &[f64]) -> GaussianLaw {
        GaussianLaw {
            mean: DVector::from_row_slice(mean),
            cov: Operator::Diag(DVector::from_row_slice(var)),
        }
    }

    #[test]
    fn kl_closed_forms() {
        let p = diag_law(&[0.0], &[2.0]);
        let q = diag_law(&[0.0], &[1.0]);
        assert!((gaussian_kl(&p, &q).unwrap() - 0.5 * (1.0 - 2f64.ln())).abs() < 1e-15);
        let p = diag_law(&[1.0], &[1.0]);
        assert!((gaussian_kl(&p, &q).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(gaussian_kl(&q, &q).unwrap(), 0.0);
        assert!(matches!(gaussian_kl(&q, &diag_law(&[0.0], &[0.0])), Err(Error::Singular)));
    }

    #[test]
    fn kl_dense_matches_diag() {
        let p = diag_law(&[0.3, -1.0], &[0.5, 2.0]);
        let q = diag_law(&[0.0, 0.2], &[1.5, 0.7]);
        let dense = |l: &GaussianLaw| GaussianLaw { mean: l.mean.clone(), cov: Operator::Dense(l.cov.to_dense()) };
        let a = gaussian_kl(&p, &q).unwrap();
        let b = gaussian_kl(&dense(&p), &dense(&q)).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    #[test]
    fn q_delta_examples() {
        let std = TargetSpec::isotropic_gaussian(3, 0.0, 1.0).unwrap();
        for &d in &[0.01, 0.5, 3.0] {
            let law = q_delta_law(&std, d).unwrap();
            assert!(law.mean.iter().all(|m| *m == 0.0));
            assert!(law.variances().iter().all(|v| (v - 1.0).abs() < 1e-15));
        }
        let point = TargetSpec::gaussian(vec![2.0, -1.0], vec![0.0, 0.0]).unwrap();
        let law = q_delta_law(&point, 0.3).unwrap();
        let ks = kernel_scalars(0.3);
        assert!((law.mean[0] - 2.0 * ks.lambda).abs() < 1e-15);
        assert!((law.variances()[1] - ks.sigma_sq()).abs() < 1e-15);
        let far = q_delta_law(&point, 40.0).unwrap();
        assert!(far.mean.norm() < 1e-16 && (far.variances()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn affine_stationary_srk() {
        let c = coefficients(0.1).unwrap();
        let lin = LinearScore { g: Operator::scaled_identity(2, -1.0), h: DVector::zeros(2) };
        let step = affine_of_step(SamplerKind::Srk, &c, &lin);
        let sa = c.alpha.sqrt();
        assert!(step.drift.diagonal().iter().all(|a| (a - sa).abs() < 1e-15));
        let expect = (c.zeta2 - c.one_minus_alpha() * c.zeta1 / sa).powi(2) + c.zeta3 * c.zeta3;
        assert!(step.noise_cov.diagonal().iter().all(|n| (n - expect).abs() < 1e-15));
    }

    #[test]
    fn affine_zero_score_noise_matches_ddpm() {
        let c = coefficients(0.2).unwrap();
        let lin = LinearScore { g: Operator::zeros(2), h: DVector::zeros(2) };
        let srk = affine_of_step(SamplerKind::Srk, &c, &lin);
        let ddpm = affine_of_step(SamplerKind::DdpmEi, &c, &lin);
        let e = (0.4f64).exp_m1();
        for i in 0..2 {
            assert!((srk.noise_cov.diagonal()[i] - e).abs() < 1e-14);
            assert!((ddpm.noise_cov.diagonal()[i] - e).abs() < 1e-15);
            assert!((srk.drift.diagonal()[i] - 1.0 / c.alpha.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn propagate_identity_and_zero_drift() {
        let law = diag_law(&[1.0, 2.0], &[0.5, 3.0]);
        assert_eq!(propagate(&law, &AffineStep::identity(2)), law);
        let step = AffineStep {
            drift: Operator::zeros(2),
            offset: DVector::from_vec(vec![4.0, -4.0]),
            noise_cov: Operator::Diag(DVector::from_vec(vec![0.1, 0.2])),
        };
        let out = propagate(&law, &step);
        assert_eq!(out.mean, step.offset);
        assert_eq!(out.cov, step.noise_cov);
    }

    #[test]
    fn propagate_composes() {
        let a1 = AffineStep {
            drift: Operator::Dense(DMatrix::from_row_slice(2, 2, &[0.9, 0.1, -0.2, 1.1])),
            offset: DVector::from_vec(vec![0.3, -0.1]),
            noise_cov: Operator::Dense(DMatrix::from_row_slice(2, 2, &[0.2, 0.05, 0.05, 0.1])),
        };
        let a2 = AffineStep {
            drift: Operator::Dense(DMatrix::from_row_slice(2, 2, &[1.2, -0.3, 0.0, 0.8])),
            offset: DVector::from_vec(vec![-0.5, 0.25]),
            noise_cov: Operator::Diag(DVector::from_vec(vec![0.3, 0.4])),
        };
        let law = GaussianLaw {
            mean: DVector::from_vec(vec![1.0, -2.0]),
            cov: Operator::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0])),
        };
        let two = propagate(&propagate(&law, &a1), &a2);
        let one = propagate(&law, &a2.compose(&a1));
        assert!((two.mean - one.mean).norm() < 1e-12);
        assert!((two.cov.to_dense() - one.cov.to_dense()).norm() < 1e-12);
    }

    #[test]
    fn law_json() {
        let law = diag_law(&[1.0, 2.0], &[0.5, 3.0]);
        let s = serde_json::to_string(&law).unwrap();
        assert_eq!(s, r#"{"mean":[1.0,2.0],"diag":[0.5,3.0]}"#);
        let back: GaussianLaw = serde_json::from_str(&s).unwrap();
        assert_eq!(back, law);
        let dense = GaussianLaw {
            mean: DVector::from_vec(vec![0.0, 1.0]),
            cov: Operator::Dense(DMatrix::from_row_slice(2, 2, &[1.0, 0.2, 0.3, 2.0])),
        };
        let s = serde_json::to_string(&dense).unwrap();
        assert!(s.contains(r#""cov":[1.0,0.2,0.3,2.0]"#));
        let back: GaussianLaw = serde_json::from_str(&s).unwrap();
        assert_eq!(back, dense);
        assert!(serde_json::from_str::<GaussianLaw>(r#"{"mean":[0.0]}"#).is_err());
    }

    #[test]
    fn non_gaussian_rejected() {
        let grid = crate::schedule::build_uniform_grid(2.0, 10, 0.1).unwrap();
        let t = TargetSpec::finite(vec![vec![1.0]], vec![1.0], false).unwrap();
        assert!(exact_output_law(&grid, SamplerKind::Srk, &t).is_err());
        let f = crate::score::AnalyticScore::new(t, 2.0).unwrap();
        assert!(matches!(
            exact_output_law_for_field(&grid, SamplerKind::Srk, &f),
            Err(Error::NotAffine(_))
        ));
    }
}
