//! Fourier transforms of self-similar measures via the infinite product
//! `μ̂(ξ) = Π_{n≥0} Φ_n(ξ)`, `Φ_n(ξ) = Σ_j p_j exp(iπ⟨T^n a_j, ξ⟩)`, and
//! power-decay fits over dyadic bands.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ifs::{AmbientDim, HomogeneousIfs, Point, WeightVector};
use crate::scalar::{fmt_real, least_squares, Real};

/// A transform value with a bound on `|value − μ̂(ξ)|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FtValue<S> {
    pub value: Complex<S>,
    pub error: S,
    /// Number of product factors evaluated.
    pub terms: u32,
}

impl<S: Real> FtValue<S> {
    pub fn abs(&self) -> S {
        self.value.norm()
    }
}

/// `Φ_n(ξ)` with `power = λ^n`.
fn factor<S: Real>(ifs: &HomogeneousIfs<S>, p: &[S], power: Complex<S>, xi: Point<S>) -> Complex<S> {
    let w = power.conj() * xi;
    let mut acc = Complex::new(S::zero(), S::zero());
    for (a, &pj) in ifs.translations().iter().zip(p) {
        let phase = S::PI() * (a.re * w.re + a.im * w.im);
        acc = acc + Complex::new(phase.cos(), phase.sin()) * pj;
    }
    acc
}

/// `Φ_0(ξ)`, the first factor of the product.
pub fn first_factor<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, xi: Point<S>) -> Complex<S> {
    factor(ifs, p.as_slice(), Complex::new(S::one(), S::zero()), xi)
}

/// Evaluates `μ̂(ξ)`, truncating the product at the first `N` with
/// `π r^N max|a| |ξ| / (1 − r) ≤ tol`. The reported error adds the tail bound
/// `Σ_{n≥N} |Φ_n − 1|` and a rounding allowance.
pub fn ft_eval<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, xi: Point<S>, tol: S) -> Result<FtValue<S>> {
    if p.len() != ifs.maps() {
        return Err(Error::spec(format!("{} weights for {} maps", p.len(), ifs.maps())));
    }
    if !(tol > S::zero()) {
        return Err(Error::spec("tolerance must be positive"));
    }
    if ifs.dim() == AmbientDim::One && xi.im != S::zero() {
        return Err(Error::spec("frequency must be real for a system on the line"));
    }
    let size = xi.norm();
    if size == S::zero() {
        return Ok(FtValue {
            value: Complex::new(S::one(), S::zero()),
            error: S::zero(),
            terms: 0,
        });
    }
    let r = ifs.ratio();
    let amp = S::PI() * ifs.max_translation_norm() * size / (S::one() - r);
    let mut n_terms = 0u32;
    let mut tail = amp;
    while tail > tol {
        tail = tail * r;
        n_terms += 1;
        if n_terms > 100_000 {
            return Err(Error::Precision("truncation does not converge".into()));
        }
    }
    let eps = S::epsilon();
    let rounding = S::lit(n_terms as f64) * S::from_count(ifs.maps() + 4) * eps + S::lit(4.0) * amp * eps;
    if rounding > tol {
        return Err(Error::Precision(format!(
            "tolerance {tol:e} is below the rounding error {rounding:e} at |ξ| = {size}"
        )));
    }
    let lambda = ifs.map().multiplier();
    let mut power = Complex::new(S::one(), S::zero());
    let mut value = Complex::new(S::one(), S::zero());
    for _ in 0..n_terms {
        value = value * factor(ifs, p.as_slice(), power, xi);
        power = power * lambda;
    }
    Ok(FtValue {
        value,
        error: tail + rounding,
        terms: n_terms,
    })
}

/// `μ̂(ξ)` for a system on the line.
pub fn ft_eval_line<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, xi: S, tol: S) -> Result<FtValue<S>> {
    ft_eval(ifs, p, Complex::new(xi, S::zero()), tol)
}

/// Transform of the projection onto direction `β`: the planar transform
/// restricted to the line `ξ (cos β, sin β)`.
pub fn ft_projected_eval<S: Real>(
    ifs: &HomogeneousIfs<S>,
    p: &WeightVector<S>,
    beta: S,
    xi: S,
    tol: S,
) -> Result<FtValue<S>> {
    if ifs.dim() != AmbientDim::Two {
        return Err(Error::spec("projected transform needs a planar system"));
    }
    ft_eval(ifs, p, Complex::new(xi * beta.cos(), xi * beta.sin()), tol)
}

/// A measure on the line whose transform can be evaluated.
#[derive(Clone, Debug, PartialEq)]
pub enum FourierMeasure<S> {
    SelfSimilar {
        ifs: HomogeneousIfs<S>,
        p: WeightVector<S>,
    },
    /// Projection of a planar measure onto direction `beta`.
    Projected {
        ifs: HomogeneousIfs<S>,
        p: WeightVector<S>,
        beta: S,
    },
    /// `μ_1 * T_u μ_2`.
    Convolved {
        first: Box<FourierMeasure<S>>,
        second: Box<FourierMeasure<S>>,
        u: S,
    },
}

impl<S: Real> FourierMeasure<S> {
    pub fn transform(&self, xi: S, tol: S) -> Result<FtValue<S>> {
        match self {
            FourierMeasure::SelfSimilar { ifs, p } => ft_eval_line(ifs, p, xi, tol),
            FourierMeasure::Projected { ifs, p, beta } => ft_projected_eval(ifs, p, *beta, xi, tol),
            FourierMeasure::Convolved { first, second, u } => {
                let half = tol / S::lit(2.0);
                let a = first.transform(xi, half)?;
                let b = second.transform(*u * xi, half)?;
                Ok(FtValue {
                    value: a.value * b.value,
                    error: a.error * (S::one() + b.error) + b.error,
                    terms: a.terms + b.terms,
                })
            }
        }
    }
}

/// Sampling plan for [`decay_fit`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecayPlan<S> {
    /// Bands `[base^k, base^{k+1})` for `k = 0..bands`.
    pub bands: u32,
    pub samples_per_band: u32,
    pub base: S,
    pub tol: S,
    /// Shifts the golden-ratio sample offsets; 0 includes each band's left end.
    pub seed: u64,
}

impl<S: Real> DecayPlan<S> {
    pub fn new(bands: u32) -> Self {
        DecayPlan {
            bands,
            samples_per_band: 64,
            base: S::lit(2.0),
            tol: S::lit(1e-9),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FourierSample<S> {
    pub xi: S,
    pub abs_value: S,
    pub error: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FourierProfile<S> {
    pub samples: Vec<FourierSample<S>>,
    /// `(k, max |μ̂|)` over band `k`.
    pub band_max: Vec<(u32, S)>,
    /// Decay exponent: `|μ̂(ξ)| ≲ |ξ|^{−σ}` over the upper bands, at least 0.
    pub sigma: S,
    /// `2σ`, the Fourier dimension estimate.
    pub fdim: S,
}

impl<S: Real> FourierProfile<S> {
    /// CSV with columns `xi, abs_value, error_bound`.
    pub fn write_samples_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["xi", "abs_value", "error_bound"])?;
        for s in &self.samples {
            w.write_record([fmt_real(s.xi), fmt_real(s.abs_value), fmt_real(s.error)])?;
        }
        flush(w)
    }

    /// CSV with columns `band_k, band_max, fitted_sigma`.
    pub fn write_bands_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["band_k", "band_max", "fitted_sigma"])?;
        for &(k, m) in &self.band_max {
            w.write_record([k.to_string(), fmt_real(m), fmt_real(self.sigma)])?;
        }
        flush(w)
    }
}

fn flush<W: Write>(mut w: csv::Writer<W>) -> Result<()> {
    w.flush().map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })
}

fn frac(x: f64) -> f64 {
    x - x.floor()
}

/// Samples `|μ̂|` at golden-ratio spaced points of each band, records the band
/// maxima and fits `σ̂ = −slope` of `log_base(band max)` against `k` over the
/// upper half of the bands. Band maxima are sampled lower bounds of the true
/// suprema, so `σ̂` is a heuristic.
pub fn decay_fit<S: Real>(measure: &FourierMeasure<S>, plan: &DecayPlan<S>) -> Result<FourierProfile<S>> {
    if plan.bands < 2 {
        return Err(Error::spec("at least two bands are needed"));
    }
    if plan.samples_per_band == 0 {
        return Err(Error::spec("samples_per_band must be positive"));
    }
    if !(plan.base > S::one()) {
        return Err(Error::spec("band base must exceed 1"));
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    // plastic-number Weyl step keeps seeded offsets away from the golden lattice
    let offset = frac(plan.seed as f64 * 0.754_877_666_246_692_7);
    let base = plan.base.as_f64();
    let points: Vec<(u32, S)> = (0..plan.bands)
        .flat_map(|k| {
            (0..plan.samples_per_band).map(move |i| {
                let t = frac(offset + i as f64 * golden);
                (k, S::lit(base.powf(k as f64 + t)))
            })
        })
        .collect();
    let values = points
        .par_iter()
        .map(|&(_, xi)| measure.transform(xi, plan.tol))
        .collect::<Result<Vec<_>>>()?;
    let mut band_max = vec![S::zero(); plan.bands as usize];
    let mut samples = Vec::with_capacity(points.len());
    for (&(k, xi), v) in points.iter().zip(&values) {
        let a = v.abs();
        band_max[k as usize] = band_max[k as usize].max(a);
        samples.push(FourierSample {
            xi,
            abs_value: a,
            error: v.error,
        });
    }
    let n = band_max.len();
    let start = n - n.div_ceil(2).max(2).min(n);
    let ln_base = plan.base.ln();
    let xs: Vec<S> = (start..n).map(|k| S::lit(k as f64)).collect();
    let ys: Vec<S> = band_max[start..]
        .iter()
        .map(|&m| m.max(S::min_positive_value()).ln() / ln_base)
        .collect();
    let (slope, _, _) = least_squares(&xs, &ys);
    let sigma = (-slope).max(S::zero());
    Ok(FourierProfile {
        samples,
        band_max: band_max.into_iter().enumerate().map(|(k, m)| (k as u32, m)).collect(),
        sigma,
        fdim: S::lit(2.0) * sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::Sign;
    use proptest::prelude::*;

    fn bernoulli_half() -> HomogeneousIfs<f64> {
        HomogeneousIfs::line(0.5, Sign::Plus, &[-1.0, 1.0], "bc").unwrap()
    }

    fn cantor() -> HomogeneousIfs<f64> {
        HomogeneousIfs::line(1.0 / 3.0, Sign::Plus, &[0.0, 2.0 / 3.0], "c").unwrap()
    }

    #[test]
    fn sinc_examples() {
        let u = WeightVector::uniform(2);
        let tol = 1e-10;
        let v = ft_eval_line(&bernoulli_half(), &u, 0.5, tol).unwrap();
        assert!(v.abs() <= 1e-6 + v.error);
        let z = ft_eval_line(&cantor(), &u, 0.0, tol).unwrap();
        assert_eq!(z.value, Complex::new(1.0, 0.0));
        for xi in [0.1, 0.37, 2.5, 13.0] {
            let v = ft_eval_line(&bernoulli_half(), &u, xi, tol).unwrap();
            let exact = (2.0 * std::f64::consts::PI * xi).sin() / (2.0 * std::f64::consts::PI * xi);
            assert!((v.value.re - exact).abs() <= 1e-6 + v.error, "xi={xi}");
            assert!(v.value.im.abs() < 1e-12);
        }
    }

    #[test]
    fn cantor_refinement() {
        let ifs = cantor();
        let p = WeightVector::new(vec![0.3, 0.7]).unwrap();
        let tol = 1e-10;
        let xi = 7.3;
        let whole = ft_eval_line(&ifs, &p, xi, tol).unwrap();
        let inner = ft_eval_line(&ifs, &p, xi / 3.0, tol).unwrap();
        let rhs = first_factor(&ifs, &p, Complex::new(xi, 0.0)) * inner.value;
        assert!((whole.value - rhs).norm() <= 2.0 * tol);
    }

    #[test]
    fn projected_four_corner_matches_merged_system() {
        let t = 2.0 / 3.0;
        let four = HomogeneousIfs::plane(1.0 / 3.0, 0.0, &[[0.0, 0.0], [t, 0.0], [0.0, t], [t, t]], "four").unwrap();
        let s = t / 2f64.sqrt();
        let merged = HomogeneousIfs::line(1.0 / 3.0, Sign::Plus, &[0.0, s, 2.0 * s], "m").unwrap();
        let mp = WeightVector::new(vec![0.25, 0.5, 0.25]).unwrap();
        let tol = 1e-10;
        let beta = std::f64::consts::FRAC_PI_4;
        let a = ft_projected_eval(&four, &WeightVector::uniform(4), beta, 3.0, tol).unwrap();
        let b = ft_eval_line(&merged, &mp, 3.0, tol).unwrap();
        assert!((a.value - b.value).norm() <= a.error + b.error);
        let zero = ft_projected_eval(&four, &WeightVector::uniform(4), beta, 0.0, tol).unwrap();
        assert_eq!(zero.value.re, 1.0);

        // β = 0 on a product reduces to the first factor
        let product = HomogeneousIfs::plane(1.0 / 3.0, 0.0, &[[0.0, 0.0], [0.0, 0.5], [t, 0.0], [t, 0.5]], "p").unwrap();
        let c = ft_projected_eval(&product, &WeightVector::uniform(4), 0.0, 5.5, tol).unwrap();
        let d = ft_eval_line(&cantor(), &WeightVector::uniform(2), 5.5, tol).unwrap();
        assert!((c.value - d.value).norm() <= c.error + d.error);
    }

    #[test]
    fn precision_and_domain_errors() {
        let u = WeightVector::uniform(2);
        assert!(matches!(
            ft_eval_line(&cantor(), &u, 1e6, 1e-15),
            Err(Error::Precision(_))
        ));
        assert!(ft_eval_line(&cantor(), &u, 1.0, 0.0).is_err());
        assert!(ft_eval(&cantor(), &u, Complex::new(1.0, 1.0), 1e-6).is_err());
        assert!(ft_projected_eval(&cantor(), &u, 0.3, 1.0, 1e-6).is_err());
    }

    #[test]
    fn decay_examples() {
        let uniform = FourierMeasure::SelfSimilar {
            ifs: bernoulli_half(),
            p: WeightVector::uniform(2),
        };
        let prof = decay_fit(&uniform, &DecayPlan::new(12)).unwrap();
        assert!((prof.sigma - 1.0).abs() < 0.1, "{}", prof.sigma);
        assert_eq!(prof.samples.len(), 12 * 64);

        let c = FourierMeasure::SelfSimilar {
            ifs: cantor(),
            p: WeightVector::uniform(2),
        };
        let plan = DecayPlan {
            base: 3.0,
            ..DecayPlan::new(10)
        };
        let prof = decay_fit(&c, &plan).unwrap();
        assert!(prof.sigma < 0.05, "{}", prof.sigma);
        assert!(prof.band_max.iter().all(|&(_, m)| m > 0.1));
    }

    #[test]
    fn convolution_identity() {
        let a = FourierMeasure::SelfSimilar {
            ifs: cantor(),
            p: WeightVector::uniform(2),
        };
        let c4 = HomogeneousIfs::line(0.25, Sign::Plus, &[0.0, 0.75], "c4").unwrap();
        let b = FourierMeasure::SelfSimilar {
            ifs: c4,
            p: WeightVector::uniform(2),
        };
        let conv = FourierMeasure::Convolved {
            first: Box::new(a.clone()),
            second: Box::new(b.clone()),
            u: 0.7,
        };
        let tol = 1e-9;
        for xi in [0.3, 4.0, 17.5] {
            let v = conv.transform(xi, tol).unwrap();
            let x = a.transform(xi, tol).unwrap().value * b.transform(0.7 * xi, tol).unwrap().value;
            assert!((v.value - x).norm() <= 2.0 * tol);
        }
    }

    fn random_ifs() -> impl Strategy<Value = (HomogeneousIfs<f64>, WeightVector<f64>)> {
        (
            0.1f64..0.8,
            any::<bool>(),
            prop::collection::vec(-1.0f64..1.0, 2..4),
            prop::collection::vec(0.1f64..1.0, 4),
        )
            .prop_filter_map("valid", |(r, neg, ts, raw)| {
                let sign = if neg { Sign::Minus } else { Sign::Plus };
                let ifs = HomogeneousIfs::line(r, sign, &ts, "r").ok()?;
                let raw = &raw[..ifs.maps()];
                let t: f64 = raw.iter().sum();
                let p = WeightVector::new(raw.iter().map(|x| x / t).collect()).ok()?;
                Some((ifs, p))
            })
    }

    proptest! {
        #[test]
        fn modulus_bounded_and_conjugate_symmetric((ifs, p) in random_ifs(), xi in -50.0f64..50.0) {
            let tol = 1e-9;
            let a = ft_eval_line(&ifs, &p, xi, tol).unwrap();
            let b = ft_eval_line(&ifs, &p, -xi, tol).unwrap();
            prop_assert!(a.abs() <= 1.0 + a.error);
            prop_assert!((a.abs() - b.abs()).abs() <= a.error + b.error);
            prop_assert!((a.value - b.value.conj()).norm() <= a.error + b.error);
        }

        #[test]
        fn refinement_identity((ifs, p) in random_ifs(), xi in -50.0f64..50.0) {
            let tol = 1e-9;
            let lambda = ifs.map().signed_ratio().unwrap();
            let whole = ft_eval_line(&ifs, &p, xi, tol).unwrap();
            let inner = ft_eval_line(&ifs, &p, lambda * xi, tol).unwrap();
            let rhs = first_factor(&ifs, &p, Complex::new(xi, 0.0)) * inner.value;
            prop_assert!((whole.value - rhs).norm() <= 2.0 * tol);
        }
    }
}
