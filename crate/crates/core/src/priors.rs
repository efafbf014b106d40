//! Prior densities: penalized-complexity priors for log-precisions and for a
//! lag-one correlation, the irregular-knot RW2 smoothing prior and the
//! bounded uniforms of the DSRB hierarchy.

use std::f64::consts::{LN_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// PC prior on a log-precision `phi = log(tau)`, defined by
/// `P(1/sqrt(tau) > u) = alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcPrecPrior {
    pub u: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl PcPrecPrior {
    pub fn new(u: f64, alpha: f64) -> Result<Self> {
        if !(u > 0.0) || !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::Domain(format!("PC prec prior needs u > 0, alpha in (0,1); got u={u}, alpha={alpha}")));
        }
        Ok(PcPrecPrior {
            u,
            alpha,
            lambda: -alpha.ln() / u,
        })
    }

    /// Draws a log-precision: the standard deviation is exponential with rate lambda.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let e: f64 = rng.sample(rand_distr::Exp1);
        let sd = e / self.lambda;
        -2.0 * sd.ln()
    }
}

pub fn pc_prec_logdensity(phi: f64, prior: &PcPrecPrior) -> f64 {
    let l = prior.lambda;
    (l / 2.0).ln() - l * (-phi / 2.0).exp() - phi / 2.0
}

/// PC prior for a correlation with base model rho = 1. The rate solves
/// `exp(-lambda sqrt(1 - u)) / (1 - exp(-sqrt(2) lambda)) = alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcCor1Prior {
    pub u: f64,
    pub alpha: f64,
    pub lambda: f64,
}

impl PcCor1Prior {
    pub fn new(u: f64, alpha: f64) -> Result<Self> {
        Ok(PcCor1Prior {
            u,
            alpha,
            lambda: pc_cor1_solve_lambda(u, alpha)?,
        })
    }

    /// Inverse-CDF draw: `s = sqrt(1 - rho)` is exponential truncated to (0, sqrt 2).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let l = self.lambda;
        let v: f64 = rng.random();
        let s = -(1.0 - v * (1.0 - (-SQRT_2 * l).exp())).ln() / l;
        (1.0 - s * s).clamp(-1.0 + 1e-12, 1.0 - 1e-12)
    }
}

fn pc_cor1_constraint(lambda: f64, u: f64) -> f64 {
    (-lambda * (1.0 - u).sqrt()).exp() / -(-SQRT_2 * lambda).exp_m1()
}

/// Rate of the PC correlation prior from its tail condition, by bisection.
/// The constraint is decreasing in lambda, from +inf at 0 to 0 at +inf.
pub fn pc_cor1_solve_lambda(u: f64, alpha: f64) -> Result<f64> {
    if !(u > -1.0 && u < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "PC cor1 prior needs u in (-1,1), alpha in (0,1); got u={u}, alpha={alpha}"
        )));
    }
    let resid = |l: f64| pc_cor1_constraint(l, u) - alpha;
    let (mut lo, mut hi) = (1e-6, 100.0);
    let mut widen = 0;
    while !(resid(lo) > 0.0 && resid(hi) < 0.0) {
        widen += 1;
        if widen > 60 {
            return Err(Error::RootFinding(format!(
                "no bracket for PC cor1 rate (u={u}, alpha={alpha})"
            )));
        }
        if resid(lo) <= 0.0 {
            lo /= 10.0;
        }
        if resid(hi) >= 0.0 {
            hi *= 10.0;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let r = resid(lambda).abs();
    if r >= 1e-10 {
        return Err(Error::RootFinding(format!(
            "PC cor1 rate residual {r:e} after 200 bisection steps"
        )));
    }
    Ok(lambda)
}

pub fn pc_cor1_logdensity(rho: f64, prior: &PcCor1Prior) -> Result<f64> {
    if !(rho > -1.0 && rho < 1.0) {
        return Err(Error::Domain(format!("correlation {rho} outside (-1, 1)")));
    }
    let l = prior.lambda;
    let s = (1.0 - rho).sqrt();
    Ok(l.ln() - l * s - (-(-SQRT_2 * l).exp_m1()).ln() - LN_2 - s.ln())
}

/// Log density of U(lo, hi); `-inf` outside the closed interval.
pub fn uniform_logdensity(x: f64, lo: f64, hi: f64) -> f64 {
    if x >= lo && x <= hi {
        -(hi - lo).ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Prior variance of the level and slope of an RW2 function.
pub const RW2_NULL_VARIANCE: f64 = 100.0;

/// Second-order random-walk prior over sorted, distinct knots.
///
/// Row `i` of the difference operator is
/// `[h_{i+1}, -(h_i + h_{i+1}), h_i] * 2 / (h_i + h_{i+1})`, the spacing-aware
/// second difference; on equally spaced knots it is `(1, -2, 1)`. The penalty
/// `Q = D'D` has the constant and linear functions of the knots as null space.
#[derive(Debug, Clone)]
pub struct Rw2Structure {
    knots: Vec<f64>,
    diff: DMatrix<f64>,
    penalty: DMatrix<f64>,
    ginv: DMatrix<f64>,
    scale: f64,
    log_pdet: f64,
    rank: usize,
    degenerate: bool,
    /// Orthonormal basis of the null space (columns).
    null_basis: DMatrix<f64>,
    null_eigen: Vec<f64>,
}

pub fn rw2_build(knots: &[f64]) -> Result<Rw2Structure> {
    if knots.iter().any(|k| !k.is_finite()) {
        return Err(Error::Domain("non-finite RW2 knot".into()));
    }
    if knots.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("RW2 knots must be sorted and distinct".into()));
    }
    let k = knots.len();
    if k == 0 {
        return Err(Error::Domain("RW2 needs at least one knot".into()));
    }
    let mean = knots.iter().sum::<f64>() / k as f64;
    let centered: Vec<f64> = knots.iter().map(|x| x - mean).collect();
    let ss: f64 = centered.iter().map(|c| c * c).sum();

    let mut null_cols = vec![DVector::from_element(k, 1.0 / (k as f64).sqrt())];
    let mut null_eigen = vec![1.0 / (RW2_NULL_VARIANCE * k as f64)];
    if ss > 0.0 {
        null_cols.push(DVector::from_iterator(k, centered.iter().map(|c| c / ss.sqrt())));
        null_eigen.push(1.0 / (RW2_NULL_VARIANCE * ss));
    }
    let null_basis = DMatrix::from_columns(&null_cols);

    if k < 3 {
        return Ok(Rw2Structure {
            knots: knots.to_vec(),
            diff: DMatrix::zeros(0, k),
            penalty: DMatrix::zeros(k, k),
            ginv: DMatrix::zeros(k, k),
            scale: 1.0,
            log_pdet: 0.0,
            rank: 0,
            degenerate: true,
            null_basis,
            null_eigen,
        });
    }

    let mut diff = DMatrix::zeros(k - 2, k);
    for i in 0..k - 2 {
        let h0 = knots[i + 1] - knots[i];
        let h1 = knots[i + 2] - knots[i + 1];
        let w = 2.0 / (h0 + h1);
        diff[(i, i)] = h1 * w;
        diff[(i, i + 1)] = -(h0 + h1) * w;
        diff[(i, i + 2)] = h0 * w;
    }
    let penalty = diff.transpose() * &diff;

    // Q^+ = (Q + U U')^-1 - U U' for an orthonormal null basis U.
    let uut = &null_basis * null_basis.transpose();
    let chol = (&penalty + &uut)
        .cholesky()
        .ok_or_else(|| Error::Domain("RW2 penalty augmentation not positive definite".into()))?;
    let ginv = chol.inverse() - &uut;
    // log pdet(Q) = log det(Q + U U') since U U' fills the null space with unit eigenvalues.
    let log_pdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let scale = (ginv.diagonal().iter().map(|v| v.ln()).sum::<f64>() / k as f64).exp();

    Ok(Rw2Structure {
        knots: knots.to_vec(),
        diff,
        penalty,
        ginv,
        scale,
        log_pdet,
        rank: k - 2,
        degenerate: false,
        null_basis,
        null_eigen,
    })
}

impl Rw2Structure {
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn len(&self) -> usize {
        self.knots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.knots.is_empty()
    }

    /// Unscaled penalty `Q = D'D`.
    pub fn penalty(&self) -> &DMatrix<f64> {
        &self.penalty
    }

    pub fn difference_operator(&self) -> &DMatrix<f64> {
        &self.diff
    }

    /// Moore-Penrose inverse of the unscaled penalty.
    pub fn generalized_inverse(&self) -> &DMatrix<f64> {
        &self.ginv
    }

    /// Geometric mean of the marginal variances of `Q^+`; `eta * Q` has
    /// generalized variance one.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn scaled_penalty(&self) -> DMatrix<f64> {
        &self.penalty * self.scale
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn log_pdet(&self) -> f64 {
        self.log_pdet
    }

    /// Precision of the proper level/slope prior (rank <= 2, lives on the null space).
    pub fn null_precision(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_vec(self.null_eigen.clone()));
        &self.null_basis * d * self.null_basis.transpose()
    }

    /// Covariance of the level/slope part: `100 (1 1' + c c')` with centred knots `c`.
    pub fn null_covariance(&self) -> DMatrix<f64> {
        let d = DMatrix::from_diagonal(&DVector::from_iterator(
            self.null_eigen.len(),
            self.null_eigen.iter().map(|e| 1.0 / e),
        ));
        &self.null_basis * d * self.null_basis.transpose()
    }

    /// Level and slope of `f` (coefficients of `a + b (x - mean x)`).
    pub fn level_slope(&self, f: &[f64]) -> (f64, f64) {
        let k = f.len() as f64;
        let mean_x = self.knots.iter().sum::<f64>() / k;
        let level = f.iter().sum::<f64>() / k;
        let (num, den) = self
            .knots
            .iter()
            .zip(f)
            .fold((0.0, 0.0), |(n, d), (x, v)| (n + (x - mean_x) * v, d + (x - mean_x).powi(2)));
        (level, if den > 0.0 { num / den } else { 0.0 })
    }

    /// Log density of the proper level/slope prior evaluated at `f`.
    pub fn null_logprior(&self, f: &[f64]) -> f64 {
        let fv = DVector::from_column_slice(f);
        let coords = self.null_basis.transpose() * fv;
        coords
            .iter()
            .zip(&self.null_eigen)
            .map(|(c, e)| 0.5 * (e / (2.0 * PI)).ln() - 0.5 * e * c * c)
            .sum()
    }

    /// Full log prior of `f`: RW2 penalty with precision `tau` plus the
    /// proper level/slope prior.
    pub fn log_prior(&self, f: &[f64], tau: f64) -> Result<f64> {
        Ok(rw2_logpenalty(f, tau, self)? + self.null_logprior(f))
    }
}

/// Log density of the (improper) RW2 prior with precision `tau` on the
/// unscaled second differences, normalized over the non-null subspace.
pub fn rw2_logpenalty(f: &[f64], tau: f64, s: &Rw2Structure) -> Result<f64> {
    if f.len() != s.len() {
        return Err(Error::Domain(format!(
            "RW2 values have length {}, structure has {} knots",
            f.len(),
            s.len()
        )));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite RW2 value".into()));
    }
    if !(tau > 0.0) {
        return Err(Error::Domain(format!("RW2 precision {tau} must be positive")));
    }
    if s.rank == 0 {
        return Ok(0.0);
    }
    let fv = DVector::from_column_slice(f);
    let d = &s.diff * fv;
    let quad = d.norm_squared();
    let r = s.rank as f64;
    Ok(0.5 * r * (tau / (2.0 * PI)).ln() + 0.5 * s.log_pdet - 0.5 * tau * quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Composite Gauss-Legendre (5 points per panel).
    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        const X: [f64; 5] = [
            -0.906_179_845_938_664,
            -0.538_469_310_105_683,
            0.0,
            0.538_469_310_105_683,
            0.906_179_845_938_664,
        ];
        const W: [f64; 5] = [
            0.236_926_885_056_189,
            0.478_628_670_499_366,
            0.568_888_888_888_889,
            0.478_628_670_499_366,
            0.236_926_885_056_189,
        ];
        let h = (b - a) / panels as f64;
        (0..panels)
            .map(|p| {
                let mid = a + (p as f64 + 0.5) * h;
                X.iter().zip(W).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum::<f64>() * 0.5 * h
            })
            .sum()
    }

    #[test]
    fn pc_prec_hand_value() {
        let p = PcPrecPrior::new(1.0, 0.01).unwrap();
        assert!((p.lambda - 4.605_170_185_988_091).abs() < 1e-12);
        let dens = pc_prec_logdensity(0.0, &p).exp();
        assert!((dens - 0.023_025_850_9).abs() < 1e-9, "{dens}");
    }

    #[test]
    fn pc_prec_tail() {
        let p = PcPrecPrior::new(1.0, 0.01).unwrap();
        assert!(pc_prec_logdensity(200.0, &p) < -90.0);
        assert!(pc_prec_logdensity(2000.0, &p) < -900.0);
    }

    #[test]
    fn pc_prec_integrates_to_one() {
        for (u, a) in [(1.0, 0.01), (0.042, 0.01), (3.0, 0.5)] {
            let p = PcPrecPrior::new(u, a).unwrap();
            let z = integrate(|x| pc_prec_logdensity(x, &p).exp(), -40.0, 40.0, 4000);
            assert!((z - 1.0).abs() < 1e-3, "u={u}: {z}");
        }
    }

    #[test]
    fn pc_prec_tail_probability_matches_definition() {
        // P(sd > u) = alpha  <=>  P(phi < -2 log u) = alpha
        let p = PcPrecPrior::new(1.0, 0.01).unwrap();
        let mass = integrate(|x| pc_prec_logdensity(x, &p).exp(), -60.0, 0.0, 4000);
        assert!((mass - 0.01).abs() < 1e-6, "{mass}");
    }

    #[test]
    fn pc_cor1_lambda_residual() {
        let l = pc_cor1_solve_lambda(0.8, 0.5).unwrap();
        assert!((pc_cor1_constraint(l, 0.8) - 0.5).abs() < 1e-10);
        // Independent bracket search on [1e-6, 100].
        let (mut lo, mut hi) = (1e-6f64, 100.0f64);
        for _ in 0..300 {
            let mid = (lo + hi) / 2.0;
            let g = (-mid * 0.2f64.sqrt()).exp() / (1.0 - (-2f64.sqrt() * mid).exp());
            if g > 0.5 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((l - lo).abs() < 1e-9);
    }

    #[test]
    fn pc_cor1_lambda_shrinks_as_alpha_grows() {
        let mut prev = f64::INFINITY;
        for a in [0.3, 0.5, 0.7, 0.9, 0.99] {
            let l = pc_cor1_solve_lambda(0.8, a).unwrap();
            assert!(l < prev);
            prev = l;
        }
    }

    #[test]
    fn pc_cor1_normalizes() {
        let p = PcCor1Prior::new(0.8, 0.5).unwrap();
        // rho = 1 - s^2, d rho = 2 s ds
        let z = integrate(
            |s| pc_cor1_logdensity(1.0 - s * s, &p).unwrap().exp() * 2.0 * s,
            0.0,
            SQRT_2,
            2000,
        );
        assert!((z - 1.0).abs() < 1e-6, "{z}");
        // Mass above u agrees with the truncated-exponential CDF in s.
        let tail = integrate(
            |s| pc_cor1_logdensity(1.0 - s * s, &p).unwrap().exp() * 2.0 * s,
            0.0,
            0.2f64.sqrt(),
            2000,
        );
        let l = p.lambda;
        let cdf = (1.0 - (-l * 0.2f64.sqrt()).exp()) / (1.0 - (-SQRT_2 * l).exp());
        assert!((tail - cdf).abs() < 1e-8);
    }

    #[test]
    fn pc_cor1_singular_at_one_and_hand_value() {
        let p = PcCor1Prior::new(0.8, 0.5).unwrap();
        assert!(pc_cor1_logdensity(1.0 - 1e-15, &p).unwrap() > 15.0);
        assert!(pc_cor1_logdensity(1.0, &p).is_err());
        assert!(pc_cor1_logdensity(-1.5, &p).is_err());
        let l = p.lambda;
        let rho = 1.0 - 1.0 / (l * l);
        let expected = l * l * (-1.0f64).exp() / (2.0 * (1.0 - (-SQRT_2 * l).exp()));
        let got = pc_cor1_logdensity(rho, &p).unwrap().exp();
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn pc_samplers_match_tail_conditions() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pr = PcPrecPrior::new(1.0, 0.01).unwrap();
        let pc = PcCor1Prior::new(0.8, 0.5).unwrap();
        let n = 200_000;
        let prec_tail = (0..n).filter(|_| (-pr.sample(&mut rng) / 2.0).exp() > 1.0).count();
        let cor_tail = (0..n).filter(|_| pc.sample(&mut rng) > 0.8).count();
        assert!((prec_tail as f64 / n as f64 - 0.01).abs() < 0.002);
        let l = pc.lambda;
        let expected = (1.0 - (-l * 0.2f64.sqrt()).exp()) / (1.0 - (-SQRT_2 * l).exp());
        assert!((cor_tail as f64 / n as f64 - expected).abs() < 0.005);
    }

    #[test]
    fn rw2_regular_rows() {
        let s = rw2_build(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        let d = s.difference_operator();
        assert_eq!(d.nrows(), 2);
        assert_eq!(d.row(0).iter().copied().collect::<Vec<_>>(), [1.0, -2.0, 1.0, 0.0]);
        assert_eq!(d.row(1).iter().copied().collect::<Vec<_>>(), [0.0, 1.0, -2.0, 1.0]);
    }

    #[test]
    fn rw2_annihilates_linear_irregular() {
        let s = rw2_build(&[0.0, 1.0, 3.0]).unwrap();
        let f = [0.0, 1.0, 3.0];
        let d = s.difference_operator() * DVector::from_column_slice(&f);
        assert!(d.amax() < 1e-12);
        // A curved function is penalized.
        let g = [0.0, 1.0, 9.0];
        assert!((s.difference_operator() * DVector::from_column_slice(&g)).amax() > 1.0);
    }

    #[test]
    fn rw2_generalized_variance_is_one_by_eigen_route() {
        let knots: Vec<f64> = (0..25).map(|i| (1.0 + 0.3 * i as f64 + 0.01 * (i * i) as f64).ln()).collect();
        let s = rw2_build(&knots).unwrap();
        let q = s.scaled_penalty();
        let eig = q.clone().symmetric_eigen();
        let k = knots.len();
        let mut ginv = DMatrix::zeros(k, k);
        for (i, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 1e-9 * eig.eigenvalues.amax() {
                let v = eig.eigenvectors.column(i);
                ginv += (v * v.transpose()) / lam;
            }
        }
        let gm = (ginv.diagonal().iter().map(|v| v.ln()).sum::<f64>() / k as f64).exp();
        assert!((gm - 1.0).abs() < 1e-8, "{gm}");
        assert_eq!(eig.eigenvalues.iter().filter(|&&l| l.abs() < 1e-9).count(), 2);
    }

    #[test]
    fn rw2_doubling_tau_at_linear_f() {
        let s = rw2_build(&[0.1, 0.4, 0.5, 0.9, 1.3]).unwrap();
        let f: Vec<f64> = s.knots().iter().map(|x| 2.0 - 3.0 * x).collect();
        let a = rw2_logpenalty(&f, 3.0, &s).unwrap();
        let b = rw2_logpenalty(&f, 6.0, &s).unwrap();
        assert!((b - a - 1.5 * LN_2).abs() < 1e-12);
    }

    #[test]
    fn rw2_quadratic_on_regular_knots() {
        let h = 0.5;
        let knots: Vec<f64> = (0..6).map(|i| i as f64 * h).collect();
        let s = rw2_build(&knots).unwrap();
        let f: Vec<f64> = knots.iter().map(|x| x * x).collect();
        let tau = 2.0;
        let lin: Vec<f64> = knots.iter().map(|x| 1.0 + x).collect();
        let base = rw2_logpenalty(&lin, tau, &s).unwrap();
        let got = rw2_logpenalty(&f, tau, &s).unwrap() - base;
        let expected = -(tau / 2.0) * 4.0 * (2.0 * h * h).powi(2);
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
    }

    #[test]
    fn rw2_few_knots_degenerate() {
        let s = rw2_build(&[0.0, 1.0]).unwrap();
        assert!(s.is_degenerate());
        assert_eq!(s.rank(), 0);
        assert_eq!(rw2_logpenalty(&[3.0, -1.0], 1.0, &s).unwrap(), 0.0);
        assert!(rw2_build(&[1.0, 0.0, 2.0]).is_err());
        assert!(rw2_logpenalty(&[f64::NAN, 0.0], 1.0, &s).is_err());
    }

    #[test]
    fn rw2_full_prior_matches_dense_gaussian() {
        let s = rw2_build(&[0.0, 0.2, 0.5, 0.6, 1.0]).unwrap();
        let tau = 4.0;
        let prec = s.penalty() * tau + s.null_precision();
        let f = [0.3, -0.1, 0.2, 0.5, 0.1];
        let fv = DVector::from_column_slice(&f);
        let chol = prec.clone().cholesky().unwrap();
        let logdet = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let dense = 0.5 * logdet - 2.5 * (2.0 * PI).ln() - 0.5 * (fv.transpose() * &prec * &fv)[(0, 0)];
        let got = s.log_prior(&f, tau).unwrap();
        assert!((got - dense).abs() < 1e-9, "{got} vs {dense}");
        // Covariance is the inverse of the precision.
        let cov = s.generalized_inverse() / tau + s.null_covariance();
        let eye = &prec * cov;
        assert!((eye - DMatrix::identity(5, 5)).amax() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn rw2_invariant_to_linear_shift(
            f in proptest::collection::vec(-1.0f64..1.0, 6),
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            tau in 0.1f64..100.0,
        ) {
            let s = rw2_build(&[0.0, 0.05, 0.3, 0.31, 0.7, 1.2]).unwrap();
            let g: Vec<f64> = f.iter().zip(s.knots()).map(|(v, x)| v + a + b * x).collect();
            let lf = rw2_logpenalty(&f, tau, &s).unwrap();
            let lg = rw2_logpenalty(&g, tau, &s).unwrap();
            proptest::prop_assert!((lf - lg).abs() < 1e-8 * (1.0 + lf.abs()));
        }
    }
}
