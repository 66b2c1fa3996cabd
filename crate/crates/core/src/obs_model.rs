//! The observation pair `(Q0, Q1)`: unaffected and affected public-state
//! distributions.
//!
//! Besides sampling and the per-observation log-likelihood ratio
//! `log dQ1/dQ0(y)`, the model provides the two constants the bounds need:
//! the symmetrized KL divergence `D̃ = KL(Q1‖Q0) + KL(Q0‖Q1)` and the
//! lower-tail Chernoff exponent `I(x)` of one pairwise increment
//! `S = llr(X) − llr(Y)` with `X ~ Q1`, `Y ~ Q0`:
//!
//! ```text
//! I(x) = sup_{λ ∈ [0,1]} { −λx − log E[exp(−λS)] }
//! ```
//!
//! so that `P(Z ≤ x·f) ≤ exp(−f·I(x))` for a sum of `f` such increments.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{golden_max, integrate};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("Q0 and Q1 must differ and be mutually absolutely continuous: {0}")]
    Degenerate(String),
    #[error("observation {0} is outside the support of a Bernoulli model")]
    OutOfSupport(f64),
    #[error("exponent argument {x} exceeds the symmetrized divergence {sym_kl}")]
    ExponentDomain { x: f64, sym_kl: f64 },
    #[error("epsilon {epsilon} must lie in (0, {sym_kl})")]
    EpsilonRange { epsilon: f64, sym_kl: f64 },
}

/// Pair of distributions for unaffected (`Q0`) and affected (`Q1`) vertices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ObservationModel {
    /// `Q0 = N(mu0, 1)`, `Q1 = N(mu1, 1)`.
    Gaussian { mu0: f64, mu1: f64 },
    /// `Q0 = Bernoulli(p0)`, `Q1 = Bernoulli(p1)`.
    Bernoulli { p0: f64, p1: f64 },
}

/// Integration half-width (in standard deviations) for Gaussian quadrature.
const GAUSS_SPAN: f64 = 40.0;
const QUAD_TOL: f64 = 1e-14;
const LAMBDA_TOL: f64 = 1e-9;

/// Number of interior grid points used to pick ε.
pub const EPSILON_GRID: usize = 1000;

fn std_normal_ln_pdf(z: f64) -> f64 {
    -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln()
}

impl ObservationModel {
    pub fn gaussian(mu0: f64, mu1: f64) -> Result<Self, ModelError> {
        let m = ObservationModel::Gaussian { mu0, mu1 };
        m.validate()?;
        Ok(m)
    }

    pub fn bernoulli(p0: f64, p1: f64) -> Result<Self, ModelError> {
        let m = ObservationModel::Bernoulli { p0, p1 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => {
                if !(mu0.is_finite() && mu1.is_finite()) || mu0 == mu1 {
                    return Err(ModelError::Degenerate(format!("mu0={mu0}, mu1={mu1}")));
                }
            }
            ObservationModel::Bernoulli { p0, p1 } => {
                let open = |p: f64| p > 0.0 && p < 1.0;
                if !(open(p0) && open(p1)) || p0 == p1 {
                    return Err(ModelError::Degenerate(format!("p0={p0}, p1={p1}")));
                }
            }
        }
        Ok(())
    }

    /// The same family with `Q0` and `Q1` exchanged.
    pub fn swapped(&self) -> Self {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => ObservationModel::Gaussian { mu0: mu1, mu1: mu0 },
            ObservationModel::Bernoulli { p0, p1 } => ObservationModel::Bernoulli { p0: p1, p1: p0 },
        }
    }

    pub fn family_name(&self) -> &'static str {
        match self {
            ObservationModel::Gaussian { .. } => "gaussian",
            ObservationModel::Bernoulli { .. } => "bernoulli",
        }
    }

    /// Parameters as `a;b`, for CSV output.
    pub fn params_string(&self) -> String {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => format!("{mu0};{mu1}"),
            ObservationModel::Bernoulli { p0, p1 } => format!("{p0};{p1}"),
        }
    }

    /// Draws from `Q1` if `affected`, else from `Q0`.
    pub fn sample<R: Rng + ?Sized>(&self, affected: bool, rng: &mut R) -> f64 {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => {
                let z: f64 = rng.sample(StandardNormal);
                if affected {
                    mu1 + z
                } else {
                    mu0 + z
                }
            }
            ObservationModel::Bernoulli { p0, p1 } => {
                let p = if affected { p1 } else { p0 };
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// `log dQ1/dQ0 (y)`.
    pub fn llr(&self, y: f64) -> Result<f64, ModelError> {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => Ok((mu1 - mu0) * y - 0.5 * (mu1 * mu1 - mu0 * mu0)),
            ObservationModel::Bernoulli { p0, p1 } => {
                if y == 1.0 {
                    Ok((p1 / p0).ln())
                } else if y == 0.0 {
                    Ok(((1.0 - p1) / (1.0 - p0)).ln())
                } else {
                    Err(ModelError::OutOfSupport(y))
                }
            }
        }
    }

    /// Log density (or mass) of `y` under `Q1` if `affected`, else `Q0`.
    pub fn ln_density(&self, y: f64, affected: bool) -> Result<f64, ModelError> {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => Ok(std_normal_ln_pdf(y - if affected { mu1 } else { mu0 })),
            ObservationModel::Bernoulli { p0, p1 } => {
                let p = if affected { p1 } else { p0 };
                if y == 1.0 {
                    Ok(p.ln())
                } else if y == 0.0 {
                    Ok((1.0 - p).ln())
                } else {
                    Err(ModelError::OutOfSupport(y))
                }
            }
        }
    }

    /// `KL(Q1 ‖ Q0) = E_{Q1}[llr]`.
    pub fn kl_affected(&self) -> f64 {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => 0.5 * (mu1 - mu0).powi(2),
            ObservationModel::Bernoulli { p0, p1 } => p1 * (p1 / p0).ln() + (1.0 - p1) * ((1.0 - p1) / (1.0 - p0)).ln(),
        }
    }

    /// `KL(Q0 ‖ Q1) = −E_{Q0}[llr]`.
    pub fn kl_unaffected(&self) -> f64 {
        self.swapped().kl_affected()
    }

    /// Symmetrized KL divergence `D̃(Q0, Q1)` in nats.
    pub fn sym_kl(&self) -> f64 {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => (mu1 - mu0).powi(2),
            ObservationModel::Bernoulli { p0, p1 } => (p1 - p0) * ((p1 * (1.0 - p0)) / (p0 * (1.0 - p1))).ln(),
        }
    }

    /// `D̃` from its defining integrals, by quadrature (Gaussian) or exact
    /// summation (Bernoulli). Independent of the closed form in [`Self::sym_kl`].
    pub fn sym_kl_numeric(&self) -> f64 {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => {
                let (a, b) = self.quadrature_range();
                let term = |affected: bool| {
                    integrate(
                        |y| {
                            let l1 = std_normal_ln_pdf(y - mu1);
                            let l0 = std_normal_ln_pdf(y - mu0);
                            let (lp, sign) = if affected { (l1, 1.0) } else { (l0, -1.0) };
                            sign * (l1 - l0) * lp.exp()
                        },
                        a,
                        b,
                        QUAD_TOL,
                    )
                };
                term(true) + term(false)
            }
            ObservationModel::Bernoulli { .. } => {
                let support = [0.0, 1.0];
                let mut total = 0.0;
                for y in support {
                    let l1 = self.ln_density(y, true).unwrap();
                    let l0 = self.ln_density(y, false).unwrap();
                    total += (l1 - l0) * (l1.exp() - l0.exp());
                }
                total
            }
        }
    }

    fn quadrature_range(&self) -> (f64, f64) {
        match *self {
            ObservationModel::Gaussian { mu0, mu1 } => (mu0.min(mu1) - GAUSS_SPAN, mu0.max(mu1) + GAUSS_SPAN),
            ObservationModel::Bernoulli { .. } => (0.0, 1.0),
        }
    }

    /// `log E[exp(−λS)]` for the pairwise increment `S`, exact.
    ///
    /// Equals `log ∫ q1^{1−λ} q0^λ + log ∫ q0^{1−λ} q1^λ`.
    pub fn log_mgf_increment(&self, lambda: f64) -> f64 {
        match *self {
            ObservationModel::Gaussian { .. } => {
                let d = self.sym_kl();
                -lambda * d + lambda * lambda * d
            }
            ObservationModel::Bernoulli { .. } => self.log_mgf_increment_numeric(lambda),
        }
    }

    /// `log E[exp(−λS)]` by quadrature (continuous) or summation (discrete).
    pub fn log_mgf_increment_numeric(&self, lambda: f64) -> f64 {
        let half = |a: bool| -> f64 {
            // ∫ q_a^{1−λ} q_b^λ with b = !a
            match *self {
                ObservationModel::Gaussian { .. } => {
                    let (lo, hi) = self.quadrature_range();
                    integrate(
                        |y| {
                            let la = self.ln_density(y, a).unwrap();
                            let lb = self.ln_density(y, !a).unwrap();
                            ((1.0 - lambda) * la + lambda * lb).exp()
                        },
                        lo,
                        hi,
                        QUAD_TOL,
                    )
                }
                ObservationModel::Bernoulli { .. } => [0.0, 1.0]
                    .into_iter()
                    .map(|y| {
                        let la = self.ln_density(y, a).unwrap();
                        let lb = self.ln_density(y, !a).unwrap();
                        ((1.0 - lambda) * la + lambda * lb).exp()
                    })
                    .sum(),
            }
        };
        half(true).ln() + half(false).ln()
    }

    fn check_exponent_arg(&self, x: f64) -> Result<(), ModelError> {
        let sym_kl = self.sym_kl();
        // Accept round-off at the right endpoint.
        if x > sym_kl * (1.0 + 1e-12) || x.is_nan() {
            return Err(ModelError::ExponentDomain { x, sym_kl });
        }
        Ok(())
    }

    /// Chernoff exponent `I(x)` for `x ≤ D̃`. Closed form for Gaussians
    /// (`(D̃ − x)²/(4D̃)` while the optimal λ stays in `[0,1]`), numeric
    /// supremum otherwise.
    pub fn chernoff_exponent(&self, x: f64) -> Result<f64, ModelError> {
        self.check_exponent_arg(x)?;
        match *self {
            ObservationModel::Gaussian { .. } => {
                let d = self.sym_kl();
                let lambda = ((d - x) / (2.0 * d)).clamp(0.0, 1.0);
                Ok((-lambda * x - self.log_mgf_increment(lambda)).max(0.0))
            }
            ObservationModel::Bernoulli { .. } => self.chernoff_exponent_numeric(x),
        }
    }

    /// `I(x)` by golden-section search over `λ ∈ [0, 1]` using the numeric
    /// moment generating function.
    pub fn chernoff_exponent_numeric(&self, x: f64) -> Result<f64, ModelError> {
        self.check_exponent_arg(x)?;
        let (_, value) = golden_max(|l| -l * x - self.log_mgf_increment_numeric(l), 0.0, 1.0, LAMBDA_TOL);
        Ok(value.max(0.0))
    }

    /// `C(Q0,Q1) = min{D̃ − ε, I(D̃ − ε)}` for `ε ∈ (0, D̃)`.
    pub fn c_constant(&self, epsilon: f64) -> Result<DivergenceReport, ModelError> {
        let sym_kl = self.sym_kl();
        if !(epsilon > 0.0 && epsilon < sym_kl) {
            return Err(ModelError::EpsilonRange { epsilon, sym_kl });
        }
        let x = sym_kl - epsilon;
        let c = x.min(self.chernoff_exponent(x)?);
        Ok(DivergenceReport { model: *self, sym_kl, c_constant: c, epsilon_used: epsilon })
    }

    /// The report at the ε maximizing `C` over `EPSILON_GRID` evenly spaced
    /// interior points of `(0, D̃)`.
    pub fn best_c_constant(&self) -> DivergenceReport {
        let sym_kl = self.sym_kl();
        (1..=EPSILON_GRID)
            .map(|i| sym_kl * i as f64 / (EPSILON_GRID + 1) as f64)
            .map(|eps| self.c_constant(eps).expect("grid point lies inside (0, D)"))
            .fold(None::<DivergenceReport>, |best, r| match best {
                Some(b) if b.c_constant >= r.c_constant => Some(b),
                _ => Some(r),
            })
            .expect("grid is nonempty")
    }
}

/// Divergence constants of a model at a chosen ε.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DivergenceReport {
    #[serde(skip)]
    pub model: ObservationModel,
    pub sym_kl: f64,
    pub c_constant: f64,
    pub epsilon_used: f64,
}

impl DivergenceReport {
    /// `I(x)` of the underlying model.
    pub fn exponent(&self, x: f64) -> Result<f64, ModelError> {
        self.model.chernoff_exponent(x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256PlusPlus;

    fn g(mu0: f64, mu1: f64) -> ObservationModel {
        ObservationModel::gaussian(mu0, mu1).unwrap()
    }

    #[test]
    fn rejects_degenerate_pairs() {
        assert!(ObservationModel::gaussian(1.0, 1.0).is_err());
        assert!(ObservationModel::bernoulli(0.0, 0.5).is_err());
        assert!(ObservationModel::bernoulli(0.3, 0.3).is_err());
    }

    #[test]
    fn sample_means() {
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(3);
        let m = g(0.0, 2.0);
        let n = 100_000;
        let mean = |affected: bool, rng: &mut Xoshiro256PlusPlus| {
            (0..n).map(|_| m.sample(affected, rng)).sum::<f64>() / n as f64
        };
        assert!(mean(false, &mut rng).abs() < 0.02);
        assert!((mean(true, &mut rng) - 2.0).abs() < 0.02);
        let b = ObservationModel::bernoulli(0.1, 0.6).unwrap();
        let freq = (0..n).map(|_| b.sample(true, &mut rng)).sum::<f64>() / n as f64;
        assert!((freq - 0.6).abs() < 0.01, "{freq}");
    }

    #[test]
    fn llr_values() {
        let m = g(0.0, 2.0);
        assert_eq!(m.llr(1.0).unwrap(), 0.0);
        assert_eq!(m.llr(0.0).unwrap(), -2.0);
        for y in [-1.3, 0.0, 0.7, 2.0, 5.5] {
            let direct = m.ln_density(y, true).unwrap() - m.ln_density(y, false).unwrap();
            assert!((m.llr(y).unwrap() - direct).abs() < 1e-12);
        }
        let b = ObservationModel::bernoulli(0.1, 0.6).unwrap();
        assert!((b.llr(1.0).unwrap() - 1.791_759_469_228_055).abs() < 1e-12);
        assert!(matches!(b.llr(0.5), Err(ModelError::OutOfSupport(_))));
    }

    #[test]
    fn sym_kl_closed_form_vs_quadrature() {
        assert_eq!(g(0.0, 2.0).sym_kl(), 4.0);
        assert_eq!(g(0.0, 0.5).sym_kl(), 0.25);
        for m in [g(0.0, 2.0), g(0.0, 0.5), g(-1.0, 0.3)] {
            assert!((m.sym_kl() - m.sym_kl_numeric()).abs() < 1e-9, "{m:?}");
        }
        let b = ObservationModel::bernoulli(0.1, 0.6).unwrap();
        assert!((b.sym_kl() - b.sym_kl_numeric()).abs() < 1e-12);
        assert!((b.sym_kl() - (b.kl_affected() + b.kl_unaffected())).abs() < 1e-12);
        // Near-identical pair: divergence tends to zero.
        assert!(g(0.0, 1e-6).sym_kl() < 1e-11);
    }

    #[test]
    fn llr_expectation_difference_is_sym_kl() {
        let m = g(0.0, 2.0);
        let mut rng = Xoshiro256PlusPlus::seed_from_u64(11);
        let n = 1_000_000;
        let draws = |affected: bool, rng: &mut Xoshiro256PlusPlus| -> Vec<f64> {
            (0..n).map(|_| m.llr(m.sample(affected, rng)).unwrap()).collect()
        };
        let (a, b) = (draws(true, &mut rng), draws(false, &mut rng));
        let (ma, sa) = crate::numeric::mean_and_stderr(&a);
        let (mb, sb) = crate::numeric::mean_and_stderr(&b);
        let se = (sa * sa + sb * sb).sqrt();
        assert!(((ma - mb) - m.sym_kl()).abs() < 3.0 * se, "{} vs {}", ma - mb, m.sym_kl());
    }

    #[test]
    fn exponent_values() {
        let m = g(0.0, 2.0);
        assert!((m.chernoff_exponent(0.0).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(m.chernoff_exponent(4.0).unwrap(), 0.0);
        let f2 = g(0.0, 0.5);
        assert!((f2.chernoff_exponent(0.125).unwrap() - 0.015625).abs() < 1e-15);
        assert!(matches!(m.chernoff_exponent(4.5), Err(ModelError::ExponentDomain { .. })));
        for x in [0.0, 1.0, 2.5, 3.9] {
            let a = m.chernoff_exponent(x).unwrap();
            let b = m.chernoff_exponent_numeric(x).unwrap();
            assert!((a - b).abs() < 1e-6, "x={x}: {a} vs {b}");
        }
    }

    #[test]
    fn bernoulli_exponent_positive_below_divergence() {
        let b = ObservationModel::bernoulli(0.1, 0.6).unwrap();
        let d = b.sym_kl();
        assert!(b.chernoff_exponent(0.5 * d).unwrap() > 0.0);
        assert!(b.chernoff_exponent(d).unwrap() < 1e-9);
    }

    #[test]
    fn c_constant_values() {
        let m = g(0.0, 2.0);
        let r = m.c_constant(2.0).unwrap();
        assert!((r.c_constant - 0.25).abs() < 1e-15);
        assert!(m.c_constant(1e-9).unwrap().c_constant < 1e-15);
        assert!(m.c_constant(0.0).is_err());
        assert!(m.c_constant(4.0).is_err());
    }

    #[test]
    fn best_epsilon_matches_dense_grid_oracle() {
        // Oracle: brute-force maximize min(D − ε, ε²/(4D)) on a much finer grid.
        for m in [g(0.0, 2.0), g(0.0, 0.5)] {
            let d = m.sym_kl();
            let fine = (1..200_000)
                .map(|i| d * i as f64 / 200_000.0)
                .map(|e| (d - e).min(e * e / (4.0 * d)))
                .fold(0.0f64, f64::max);
            let best = m.best_c_constant();
            assert!(best.c_constant <= fine + 1e-12);
            assert!(fine - best.c_constant < 1e-3 * d, "{} vs {fine}", best.c_constant);
            assert!(best.c_constant > 0.0 && best.c_constant < d);
            // The maximizer balances the two terms: ε* = 2(√2 − 1)·D.
            let eps_star = 2.0 * (2f64.sqrt() - 1.0) * d;
            assert!((best.epsilon_used - eps_star).abs() < 2.0 * d / 1001.0);
        }
    }

    proptest! {
        #[test]
        fn llr_antisymmetric_under_swap(mu0 in -3.0f64..3.0, delta in 0.05f64..3.0, y in -8.0f64..8.0) {
            let m = g(mu0, mu0 + delta);
            let s = m.swapped();
            prop_assert!((m.llr(y).unwrap() + s.llr(y).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn exponent_convex_nonincreasing(mu1 in 0.2f64..3.0) {
            let m = g(0.0, mu1);
            let d = m.sym_kl();
            let xs: Vec<f64> = (0..=40).map(|i| d * i as f64 / 40.0).collect();
            let vals: Vec<f64> = xs.iter().map(|&x| m.chernoff_exponent(x).unwrap()).collect();
            for w in vals.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
            for w in vals.windows(3) {
                prop_assert!(w[0] + w[2] - 2.0 * w[1] >= -1e-12);
            }
            prop_assert!(vals[40].abs() < 1e-15);
            prop_assert!(vals[..40].iter().all(|&v| v > 0.0));
        }
    }
}
