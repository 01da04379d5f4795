//! Derived measures: projections, scaled convolutions, products, and the
//! skip/keep digit decomposition `μ = ν_k * T^{k−1} η_k`.
//!
//! Histogram transforms read a lower bound as the mass of the open cell and
//! an upper bound as the mass of the closed cell, so a pushed cell feeds lower
//! bounds only where its image is contained in one output cell and upper
//! bounds everywhere its closed image touches.

use std::collections::BTreeMap;

use num_complex::Complex;
use rayon::prelude::*;

use crate::discretize::{self, Cell, DyadicHistogram, HistogramOptions};
use crate::error::{Error, Result};
use crate::fourier::FourierMeasure;
use crate::ifs::{AmbientDim, HomogeneousIfs, Orientation, Point, Sign, Similarity, WeightVector, DEFAULT_WORD_BUDGET};
use crate::scalar::Real;
use crate::spec::{Derivation, Measure, MeasureSpec, Part};

/// Translations closer than this are merged by [`project_ifs`].
pub const MERGE_TOLERANCE: f64 = 1e-12;

/// Extra levels used for convolution inputs so that sums of cells fit
/// inside output cells.
pub const CONVOLUTION_EXTRA_LEVELS: u32 = 3;

fn rotation_turns<S: Real>(ifs: &HomogeneousIfs<S>) -> Option<S> {
    match ifs.map().orientation() {
        Orientation::Plane { alpha } => Some(alpha),
        Orientation::Line(_) => None,
    }
}

/// Projects a planar system without rotation (or with a half turn) onto the
/// direction `(cos β, sin β)`. Translations that agree to
/// [`MERGE_TOLERANCE`] are merged and their weights summed.
pub fn project_ifs<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, beta: S) -> Result<Measure<S>> {
    let Some(alpha) = rotation_turns(ifs) else {
        return Err(Error::spec("projection needs a planar system"));
    };
    let sign = if alpha == S::zero() {
        Sign::Plus
    } else if alpha == S::lit(0.5) {
        Sign::Minus
    } else {
        return Err(Error::Unsupported(format!(
            "rotation {alpha} turns: the projection is not self-similar; use the Fourier restriction or the histogram pushforward"
        )));
    };
    if p.len() != ifs.maps() {
        return Err(Error::spec("weights and maps differ in number"));
    }
    let (c, s) = (beta.cos(), beta.sin());
    let mut pairs: Vec<(S, S)> = ifs
        .translations()
        .iter()
        .zip(p.as_slice())
        .map(|(a, &w)| (a.re * c + a.im * s, w))
        .collect();
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).expect("finite translations"));
    let tol = S::lit(MERGE_TOLERANCE);
    let mut merged: Vec<(S, S)> = Vec::with_capacity(pairs.len());
    for (x, w) in pairs {
        match merged.last_mut() {
            Some(last) if (x - last.0).abs() <= tol => last.1 = last.1 + w,
            _ => merged.push((x, w)),
        }
    }
    let (xs, ws): (Vec<S>, Vec<S>) = merged.into_iter().unzip();
    if xs.len() < 2 {
        return Err(Error::spec("the projection collapses onto a single point"));
    }
    let label = format!("{}|proj", ifs.label());
    let line = HomogeneousIfs::line(ifs.ratio(), sign, &xs, label)?;
    Measure::new(line, WeightVector::new(ws)?)
}

fn cell_range(lo: f64, hi: f64, width: f64) -> (i64, i64) {
    // closed cells [k w, (k+1) w] meeting [lo, hi]
    ((lo / width).ceil() as i64 - 1, (hi / width).floor() as i64)
}

fn containing_cell(lo: f64, hi: f64, width: f64) -> Option<i64> {
    let k = (lo / width).floor();
    (k * width <= lo && hi <= (k + 1.0) * width).then_some(k as i64)
}

/// Running interval sums with per-cell term counts.
#[derive(Default)]
struct Accumulator {
    cells: BTreeMap<i64, (f64, f64, u32)>,
}

impl Accumulator {
    fn add_lower(&mut self, k: i64, x: f64) {
        let e = self.cells.entry(k).or_default();
        e.0 += x;
        e.2 += 1;
    }

    fn add_upper(&mut self, k: i64, x: f64) {
        let e = self.cells.entry(k).or_default();
        e.1 += x;
        e.2 += 1;
    }

    fn merge(&mut self, other: Accumulator) {
        for (k, (lo, hi, n)) in other.cells {
            let e = self.cells.entry(k).or_default();
            e.0 += lo;
            e.1 += hi;
            e.2 += n;
        }
    }

    fn finish<S: Real>(self, level: u32, depth: u32, extra_rel: f64) -> Result<DyadicHistogram<S>> {
        let eps64 = f64::EPSILON;
        let eps = S::epsilon().as_f64();
        let cells = self
            .cells
            .into_iter()
            .filter(|(_, (_, hi, _))| *hi > 0.0)
            .map(|(k, (lo, hi, n))| {
                let rel = (n as f64 + 2.0) * eps64 + extra_rel;
                let lo = (lo * (1.0 - rel) * (1.0 - 2.0 * eps)).max(0.0);
                let hi = (hi * (1.0 + rel) * (1.0 + 2.0 * eps)).min(1.0);
                Cell {
                    index: [k, 0],
                    lower: S::lit(lo),
                    upper: S::lit(hi),
                }
            })
            .collect();
        DyadicHistogram::from_cells(level, AmbientDim::One, depth, cells)
    }
}

fn widened(x: f64, y: f64, exact: bool) -> f64 {
    if exact {
        0.0
    } else {
        4.0 * f64::EPSILON * (x.abs() + y.abs())
    }
}

/// Pushes a planar histogram to the line `⟨x, (cos β, sin β)⟩` at level
/// `n_out`. The image of a cell of width `w` has length `w(|cos β|+|sin β|)`.
pub fn histogram_project<S: Real>(hist: &DyadicHistogram<S>, beta: S, n_out: u32) -> Result<DyadicHistogram<S>> {
    if hist.dim() != AmbientDim::Two {
        return Err(Error::spec("histogram_project needs a planar histogram"));
    }
    let (c, s) = (beta.cos().as_f64(), beta.sin().as_f64());
    let exact = [c, s].iter().all(|v| *v == 0.0 || v.abs() == 1.0);
    let w_in = hist.cell_width().as_f64();
    let w_out = 0.5f64.powi(n_out as i32);
    let parts: Vec<Accumulator> = hist
        .cells()
        .par_chunks(1024)
        .map(|chunk| {
            let mut acc = Accumulator::default();
            for cell in chunk {
                let x0 = cell.index[0] as f64 * w_in;
                let y0 = cell.index[1] as f64 * w_in;
                let corners = [(x0, y0), (x0 + w_in, y0), (x0, y0 + w_in), (x0 + w_in, y0 + w_in)];
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for (x, y) in corners {
                    let v = x * c + y * s;
                    let pad = widened(x * c, y * s, exact);
                    lo = lo.min(v - pad);
                    hi = hi.max(v + pad);
                }
                if let Some(k) = containing_cell(lo, hi, w_out) {
                    acc.add_lower(k, cell.lower.as_f64());
                }
                let (a, b) = cell_range(lo, hi, w_out);
                for k in a..=b {
                    acc.add_upper(k, cell.upper.as_f64());
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::default();
    for part in parts {
        total.merge(part);
    }
    total.finish(n_out, hist.depth(), 0.0)
}

/// Histogram of `μ_1 * T_u μ_2` at level `n_out` from histograms of the two
/// factors: products of lower bounds go to the output cell containing the
/// summed cell, products of upper bounds to every touched cell.
pub fn convolve_hist<S: Real>(
    h1: &DyadicHistogram<S>,
    h2: &DyadicHistogram<S>,
    u: S,
    n_out: u32,
) -> Result<DyadicHistogram<S>> {
    if h1.dim() != AmbientDim::One || h2.dim() != AmbientDim::One {
        return Err(Error::spec("convolve_hist needs one-dimensional histograms"));
    }
    if u == S::zero() || !u.is_finite() {
        return Err(Error::spec("u must be finite and nonzero"));
    }
    let u = u.as_f64();
    let w1 = h1.cell_width().as_f64();
    let w2 = h2.cell_width().as_f64();
    let w_out = 0.5f64.powi(n_out as i32);
    let exact = u.abs() == 1.0;
    let second: Vec<(f64, f64, f64, f64)> = h2
        .cells()
        .iter()
        .map(|c| {
            let a = c.index[0] as f64 * w2 * u;
            let b = (c.index[0] + 1) as f64 * w2 * u;
            let pad = widened(a, b, exact);
            (a.min(b) - pad, a.max(b) + pad, c.lower.as_f64(), c.upper.as_f64())
        })
        .collect();
    let parts: Vec<Accumulator> = h1
        .cells()
        .par_chunks(64)
        .map(|chunk| {
            let mut acc = Accumulator::default();
            for c1 in chunk {
                let x0 = c1.index[0] as f64 * w1;
                let x1 = x0 + w1;
                let (l1, u1) = (c1.lower.as_f64(), c1.upper.as_f64());
                for &(y0, y1, l2, u2) in &second {
                    let lo = x0 + y0;
                    let hi = x1 + y1;
                    let pad = 2.0 * f64::EPSILON * (lo.abs() + hi.abs());
                    let (lo, hi) = (lo - pad, hi + pad);
                    if l1 > 0.0 && l2 > 0.0 {
                        if let Some(k) = containing_cell(lo, hi, w_out) {
                            acc.add_lower(k, l1 * l2);
                        }
                    }
                    let (a, b) = cell_range(lo, hi, w_out);
                    for k in a..=b {
                        acc.add_upper(k, u1 * u2);
                    }
                }
            }
            acc
        })
        .collect();
    let mut total = Accumulator::default();
    for part in parts {
        total.merge(part);
    }
    // each product carries one extra rounding
    total.finish(n_out, h1.depth().max(h2.depth()), f64::EPSILON)
}

/// Input levels for a convolution histogram at `n_out`: the second factor is
/// refined by `log2 |u|` when `|u| > 1`.
pub fn convolution_input_levels<S: Real>(u: S, n_out: u32) -> (u32, u32) {
    let n1 = n_out + CONVOLUTION_EXTRA_LEVELS;
    let extra = u.abs().as_f64().log2().ceil().max(0.0) as u32;
    (n1, n1 + extra)
}

/// Histograms of `μ_1 * T_u μ_2` at each level.
pub fn convolution_histograms<S: Real>(
    first: &Measure<S>,
    second: &Measure<S>,
    u: S,
    levels: &[u32],
    opts: &HistogramOptions,
) -> Result<Vec<DyadicHistogram<S>>> {
    let ins: Vec<(u32, u32)> = levels.iter().map(|&n| convolution_input_levels(u, n)).collect();
    let l1: Vec<u32> = ins.iter().map(|x| x.0).collect();
    let l2: Vec<u32> = ins.iter().map(|x| x.1).collect();
    let h1 = discretize::histograms(&first.ifs, &first.weights, &l1, opts)?;
    let h2 = discretize::histograms(&second.ifs, &second.weights, &l2, opts)?;
    levels
        .iter()
        .zip(h1.iter().zip(&h2))
        .map(|(&n, (a, b))| convolve_hist(a, b, u, n))
        .collect()
}

/// The two halves of the skip/keep decomposition.
#[derive(Clone, Debug, PartialEq)]
pub struct SkipKeep<S> {
    pub k: u32,
    /// Digits at indices not divisible by `k`.
    pub nu: Measure<S>,
    /// `μ(T^k, a, p)`.
    pub eta: Measure<S>,
    /// `T^{k−1}`: `μ = ν_k * factor(η_k)`.
    pub factor: Similarity<S>,
}

impl<S: Real> SkipKeep<S> {
    /// `T^{k−1} η_k` as a self-similar measure, `μ(T^k, T^{k−1} a, p)`.
    pub fn scaled_eta(&self) -> Result<Measure<S>> {
        let a: Vec<Point<S>> = self.eta.ifs.translations().iter().map(|&x| self.factor.apply(x)).collect();
        let ifs = HomogeneousIfs::new(*self.eta.ifs.map(), a, format!("{}|scaled", self.eta.ifs.label()))?;
        Measure::new(ifs, self.eta.weights.clone())
    }

    pub fn part(&self, part: Part) -> Result<Measure<S>> {
        match part {
            Part::Skip => Ok(self.nu.clone()),
            Part::Keep => self.scaled_eta(),
        }
    }
}

/// Words of length `h` over `m` letters, in lexicographic order.
fn words(m: usize, h: u32) -> impl Iterator<Item = Vec<usize>> {
    let total = m.pow(h);
    (0..total).map(move |mut x| {
        let mut w = vec![0; h as usize];
        for slot in w.iter_mut().rev() {
            *slot = x % m;
            x /= m;
        }
        w
    })
}

/// The system of `h`-fold compositions: ratio `T^h`, translations
/// `Σ_{j=1}^{h} T^{j−1} a_{w_j}` and product weights, over `w ∈ [m]^h`.
pub fn pre_iterate<S: Real>(m: &Measure<S>, h: u32, budget: u64) -> Result<Measure<S>> {
    if h == 0 {
        return Err(Error::spec("the iteration count must be positive"));
    }
    let maps = m.ifs.maps();
    let needed = (maps as f64).powi(h as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let t = m.ifs.map();
    let powers: Vec<Similarity<S>> = (0..h).map(|j| t.pow(j)).collect();
    let a = m.ifs.translations();
    let p = m.weights.as_slice();
    let mut trans = Vec::with_capacity(needed as usize);
    let mut weights = Vec::with_capacity(needed as usize);
    for w in words(maps, h) {
        let mut b = Point::new(S::zero(), S::zero());
        let mut q = S::one();
        for (j, &i) in w.iter().enumerate() {
            b = b + powers[j].apply(a[i]);
            q = q * p[i];
        }
        trans.push(b);
        weights.push(q);
    }
    let ifs = HomogeneousIfs::new(t.pow(h), trans, format!("{}^{h}", m.ifs.label()))?;
    Measure::new(ifs, WeightVector::new(weights)?)
}

/// Splits `μ` by digit position modulo `k`.
pub fn skip_keep<S: Real>(m: &Measure<S>, k: u32, budget: u64) -> Result<SkipKeep<S>> {
    if k < 2 {
        return Err(Error::spec("k must be at least 2"));
    }
    let t = m.ifs.map();
    let inner = pre_iterate(m, k - 1, budget)?;
    let nu_ifs = HomogeneousIfs::new(t.pow(k), inner.ifs.translations().to_vec(), format!("{}|skip{k}", m.ifs.label()))?;
    let nu = Measure::new(nu_ifs, inner.weights)?;
    let eta_ifs = HomogeneousIfs::new(t.pow(k), m.ifs.translations().to_vec(), format!("{}|keep{k}", m.ifs.label()))?;
    let eta = Measure::new(eta_ifs, m.weights.clone())?;
    Ok(SkipKeep {
        k,
        nu,
        eta,
        factor: t.pow(k - 1),
    })
}

/// `μ_1 × μ_2` for two line systems with the same signed ratio.
pub fn product_ifs<S: Real>(first: &Measure<S>, second: &Measure<S>) -> Result<Measure<S>> {
    let (Some(r1), Some(r2)) = (first.ifs.map().signed_ratio(), second.ifs.map().signed_ratio()) else {
        return Err(Error::spec("products need two one-dimensional systems"));
    };
    if r1 != r2 {
        return Err(Error::spec(format!(
            "signed ratios {r1} and {r2} differ; equalise them with pre_iterate (see equalizing_iterates)"
        )));
    }
    let alpha = if r1 > S::zero() { S::zero() } else { S::lit(0.5) };
    let map = Similarity::plane(r1.abs(), alpha)?;
    let mut trans = Vec::new();
    let mut weights = Vec::new();
    for (a, &p) in first.ifs.translations().iter().zip(first.weights.as_slice()) {
        for (b, &q) in second.ifs.translations().iter().zip(second.weights.as_slice()) {
            trans.push(Complex::new(a.re, b.re));
            weights.push(p * q);
        }
    }
    let ifs = HomogeneousIfs::new(map, trans, format!("{}x{}", first.ifs.label(), second.ifs.label()))?;
    Measure::new(ifs, WeightVector::new(weights)?)
}

/// Smallest `(h1, h2)` with `h1, h2 ≤ max_h` and `ρ_1^{h1} = ρ_2^{h2}` for the
/// signed ratios, up to a relative `1e-12`.
pub fn equalizing_iterates<S: Real>(first: &Measure<S>, second: &Measure<S>, max_h: u32) -> Option<(u32, u32)> {
    let r1 = first.ifs.map().signed_ratio()?.as_f64();
    let r2 = second.ifs.map().signed_ratio()?.as_f64();
    (1..=max_h)
        .flat_map(|h1| (1..=max_h).map(move |h2| (h1, h2)))
        .filter(|&(h1, h2)| {
            let a = r1.powi(h1 as i32);
            let b = r2.powi(h2 as i32);
            (a - b).abs() <= 1e-12 * a.abs()
        })
        .min_by_key(|&(h1, h2)| (h1.max(h2), h1, h2))
}

/// A measure after resolving a document's `derive` clause.
#[derive(Clone, Debug, PartialEq)]
pub enum DerivedMeasure<S> {
    SelfSimilar(Measure<S>),
    /// Projection of a rotating planar measure, which is not self-similar.
    Projected { base: Measure<S>, beta: S },
    /// `μ_1 * T_u μ_2`.
    Convolved { first: Measure<S>, second: Measure<S>, u: S },
}

impl<S: Real> DerivedMeasure<S> {
    pub fn resolve(spec: &MeasureSpec<S>) -> Result<Self> {
        let base = &spec.base;
        let Some(derive) = &spec.derive else {
            return Ok(DerivedMeasure::SelfSimilar(base.clone()));
        };
        match derive {
            Derivation::Projection { beta } => match project_ifs(&base.ifs, &base.weights, *beta) {
                Ok(m) => Ok(DerivedMeasure::SelfSimilar(m)),
                Err(Error::Unsupported(_)) => Ok(DerivedMeasure::Projected {
                    base: base.clone(),
                    beta: *beta,
                }),
                Err(e) => Err(e),
            },
            Derivation::Convolution { other, u } => {
                if base.ifs.dim() != AmbientDim::One || other.ifs.dim() != AmbientDim::One {
                    return Err(Error::spec("convolutions need one-dimensional operands"));
                }
                if *u == S::zero() {
                    return Err(Error::spec("u must be nonzero"));
                }
                Ok(DerivedMeasure::Convolved {
                    first: base.clone(),
                    second: (**other).clone(),
                    u: *u,
                })
            }
            Derivation::Product { other } => Ok(DerivedMeasure::SelfSimilar(product_ifs(base, other)?)),
            Derivation::SkipKeep { k, part } => {
                Ok(DerivedMeasure::SelfSimilar(skip_keep(base, *k, DEFAULT_WORD_BUDGET)?.part(*part)?))
            }
        }
    }

    pub fn dim(&self) -> AmbientDim {
        match self {
            DerivedMeasure::SelfSimilar(m) => m.ifs.dim(),
            _ => AmbientDim::One,
        }
    }

    /// Certified histograms at each level.
    pub fn histograms(&self, levels: &[u32], opts: &HistogramOptions) -> Result<Vec<DyadicHistogram<S>>> {
        match self {
            DerivedMeasure::SelfSimilar(m) => discretize::histograms(&m.ifs, &m.weights, levels, opts),
            DerivedMeasure::Projected { base, beta } => {
                discretize::histogram_pushforward(&base.ifs, &base.weights, *beta, levels, opts)
            }
            DerivedMeasure::Convolved { first, second, u } => convolution_histograms(first, second, *u, levels, opts),
        }
    }

    /// The transform on the line (planar measures need a direction).
    pub fn fourier(&self) -> FourierMeasure<S> {
        match self {
            DerivedMeasure::SelfSimilar(m) => FourierMeasure::SelfSimilar {
                ifs: m.ifs.clone(),
                p: m.weights.clone(),
            },
            DerivedMeasure::Projected { base, beta } => FourierMeasure::Projected {
                ifs: base.ifs.clone(),
                p: base.weights.clone(),
                beta: *beta,
            },
            DerivedMeasure::Convolved { first, second, u } => FourierMeasure::Convolved {
                first: Box::new(FourierMeasure::SelfSimilar {
                    ifs: first.ifs.clone(),
                    p: first.weights.clone(),
                }),
                second: Box::new(FourierMeasure::SelfSimilar {
                    ifs: second.ifs.clone(),
                    p: second.weights.clone(),
                }),
                u: *u,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dims::{estimate_d1, estimate_dq, MomentTable};
    use crate::ifs::similarity_dimension;
    use proptest::prelude::*;

    fn cantor(r: f64) -> Measure<f64> {
        Measure::uniform(HomogeneousIfs::line(r, Sign::Plus, &[0.0, 1.0 - r], "cantor").unwrap())
    }

    fn four_corner() -> Measure<f64> {
        let t = 2.0 / 3.0;
        let ifs = HomogeneousIfs::plane(1.0 / 3.0, 0.0, &[[0.0, 0.0], [t, 0.0], [0.0, t], [t, t]], "4c").unwrap();
        Measure::uniform(ifs)
    }

    #[test]
    fn four_corner_diagonal_merges() {
        let fc = four_corner();
        let m = project_ifs(&fc.ifs, &fc.weights, std::f64::consts::FRAC_PI_4).unwrap();
        assert_eq!(m.ifs.maps(), 3);
        let w = m.weights.as_slice();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.5).abs() < 1e-15 && (w[2] - 0.25).abs() < 1e-15);
        let s = similarity_dimension(&m.ifs, &m.weights).unwrap();
        assert!((s - 1.5 / 3f64.log2()).abs() < 1e-12);
        assert!((s - 0.9464).abs() < 1e-4);

        let generic = project_ifs(&fc.ifs, &fc.weights, 1.0).unwrap();
        assert_eq!(generic.ifs.maps(), 4);
        let s = similarity_dimension(&generic.ifs, &generic.weights).unwrap();
        assert!((s - 4f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn axis_projection_is_marginal() {
        let a = cantor(1.0 / 3.0);
        let b = Measure::new(
            HomogeneousIfs::line(1.0 / 3.0, Sign::Plus, &[0.0, 0.5, 0.9], "b").unwrap(),
            WeightVector::new(vec![0.2, 0.3, 0.5]).unwrap(),
        )
        .unwrap();
        let prod = product_ifs(&a, &b).unwrap();
        assert_eq!(prod.ifs.maps(), 6);
        let m = project_ifs(&prod.ifs, &prod.weights, 0.0).unwrap();
        assert_eq!(m.ifs.translations(), a.ifs.translations());
        for (x, y) in m.weights.as_slice().iter().zip(a.weights.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn rotations_are_unsupported() {
        let ifs = HomogeneousIfs::plane(0.4, 0.1, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "rot").unwrap();
        let p = WeightVector::uniform(3);
        assert!(matches!(project_ifs(&ifs, &p, 0.3), Err(Error::Unsupported(_))));
        let half = HomogeneousIfs::plane(0.4, 0.5, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "half").unwrap();
        let m = project_ifs(&half, &p, 0.3).unwrap();
        assert_eq!(m.ifs.map().signed_ratio(), Some(-0.4));
    }

    #[test]
    fn three_letter_skip_keep() {
        let m = Measure::uniform(HomogeneousIfs::line(0.25, Sign::Minus, &[0.0, 0.4, 1.0], "t").unwrap());
        let sk = skip_keep(&m, 2, 1 << 10).unwrap();
        assert_eq!(sk.nu.ifs.maps(), 3);
        assert_eq!(sk.factor, *m.ifs.map());
        assert_eq!(sk.nu.ifs.map().signed_ratio(), Some(0.0625));
        assert!(matches!(skip_keep(&m, 1, 1 << 10), Err(Error::Spec(_))));
        assert!(matches!(skip_keep(&m, 12, 1 << 10), Err(Error::BudgetExceeded { .. })));
    }

    #[test]
    fn cantor_skip_two() {
        let c = cantor(1.0 / 3.0);
        let sk = skip_keep(&c, 2, 1 << 10).unwrap();
        assert!((sk.nu.ifs.ratio() - 1.0 / 9.0).abs() < 1e-16);
        let xs: Vec<f64> = sk.nu.ifs.translations().iter().map(|z| z.re).collect();
        assert_eq!(xs.len(), 2);
        assert!(xs[0] == 0.0 && (xs[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!(sk.nu.weights.is_uniform());
        let s = similarity_dimension(&sk.nu.ifs, &sk.nu.weights).unwrap();
        assert!((s - 0.5 * 2f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn pre_iteration_aligns_products() {
        let c3 = cantor(1.0 / 3.0);
        let c9 = cantor(1.0 / 9.0);
        assert!(product_ifs(&c3, &c9).is_err());
        let (h1, h2) = equalizing_iterates(&c3, &c9, 8).unwrap();
        assert_eq!((h1, h2), (2, 1));
        let p = product_ifs(&pre_iterate(&c3, h1, 1 << 10).unwrap(), &pre_iterate(&c9, h2, 1 << 10).unwrap()).unwrap();
        assert_eq!(p.ifs.maps(), 8);
        assert!((p.ifs.ratio() - 1.0 / 9.0).abs() < 1e-16);

        let fc = product_ifs(&c3, &c3).unwrap();
        assert_eq!(fc.ifs.maps(), 4);
        assert!(fc.weights.is_uniform());
    }

    #[test]
    fn projected_histogram_marginal() {
        let c = cantor(1.0 / 3.0);
        let fc = product_ifs(&c, &c).unwrap();
        let opts = HistogramOptions::default();
        let h2 = discretize::histograms(&fc.ifs, &fc.weights, &[8], &opts).unwrap().pop().unwrap();
        let h1 = discretize::histograms(&c.ifs, &c.weights, &[8], &opts).unwrap().pop().unwrap();
        let proj = histogram_project(&h2, 0.0, 8).unwrap();
        assert!(proj.total_lower() <= 1.0 && proj.total_upper() >= 1.0);
        // the pushed sandwich must meet the direct one on every cell
        for cell in h1.cells() {
            let other = proj.get(cell.index).map(|c| (c.lower, c.upper)).unwrap_or((0.0, 0.0));
            assert!(other.0 <= cell.upper + 1e-12 && cell.lower <= other.1 + 1e-12, "{cell:?} vs {other:?}");
        }
        for cell in proj.cells() {
            let direct = h1.get(cell.index).map(|c| c.upper).unwrap_or(0.0);
            assert!(cell.lower <= direct + 1e-12);
        }
    }

    #[test]
    fn point_mass_projection() {
        let cells = vec![Cell {
            index: [3, 5],
            lower: 1.0,
            upper: 1.0,
        }];
        let h = DyadicHistogram::from_cells(4, AmbientDim::Two, 0, cells).unwrap();
        let p = histogram_project(&h, 0.0, 4).unwrap();
        let hit = p.get([3, 0]).unwrap();
        assert!(hit.lower > 1.0 - 1e-12 && hit.upper <= 1.0);
        assert!(p.cells().len() <= 3);
        let coarse = histogram_project(&h, 0.3, 1).unwrap();
        assert!(coarse.cells().len() <= 2);
        assert!(coarse.total_lower() > 0.99);
    }

    #[test]
    fn convolution_identity_element() {
        let c = cantor(1.0 / 3.0);
        let h1 = discretize::histograms(&c.ifs, &c.weights, &[8], &HistogramOptions::default()).unwrap().pop().unwrap();
        let delta = DyadicHistogram::from_cells(
            10,
            AmbientDim::One,
            0,
            vec![Cell {
                index: [0, 0],
                lower: 1.0,
                upper: 1.0,
            }],
        )
        .unwrap();
        let out = convolve_hist(&h1, &delta, 1.0, 8).unwrap();
        for cell in h1.cells() {
            let o = out.get(cell.index).unwrap();
            assert!(o.upper >= cell.upper * (1.0 - 1e-12));
            assert!(o.lower <= cell.upper + 1e-12);
        }
        assert!(matches!(convolve_hist(&h1, &delta, 0.0, 8), Err(Error::Spec(_))));
    }

    #[test]
    fn convolution_mass_brackets_one() {
        let c = cantor(1.0 / 3.0);
        let hs = convolution_histograms(&c, &c, 1.0, &[3, 6], &HistogramOptions::default()).unwrap();
        for h in &hs {
            assert!(h.total_lower() <= 1.0 + 1e-12 && h.total_upper() >= 1.0 - 1e-12);
            assert!(h.total_lower() > 0.2);
        }
    }

    #[test]
    fn skip_keep_reconstruction() {
        let m = Measure::new(
            HomogeneousIfs::line(0.3, Sign::Minus, &[0.0, 0.45, 1.0], "r").unwrap(),
            WeightVector::new(vec![0.5, 0.2, 0.3]).unwrap(),
        )
        .unwrap();
        let opts = HistogramOptions::default();
        for k in [2, 3] {
            let sk = skip_keep(&m, k, 1 << 12).unwrap();
            let direct = discretize::histograms(&m.ifs, &m.weights, &[8], &opts).unwrap().pop().unwrap();
            let conv = convolution_histograms(&sk.nu, &sk.scaled_eta().unwrap(), 1.0, &[8], &opts).unwrap().pop().unwrap();
            for cell in direct.cells().iter().chain(conv.cells()) {
                let a = direct.get(cell.index).map(|c| (c.lower, c.upper)).unwrap_or((0.0, 0.0));
                let b = conv.get(cell.index).map(|c| (c.lower, c.upper)).unwrap_or((0.0, 0.0));
                assert!(a.0 <= b.1 && b.0 <= a.1, "k={k} {:?}: {a:?} vs {b:?}", cell.index);
            }
        }
    }

    #[test]
    fn convolution_dimension_small() {
        let a = cantor(1.0 / 3.0);
        let b = cantor(0.25);
        let levels: Vec<u32> = (2..=11).collect();
        let hs = convolution_histograms(&a, &b, 1.0, &levels, &HistogramOptions::default()).unwrap();
        let table = MomentTable::from_histograms(&hs, &[2.0f64]).unwrap();
        let d2 = estimate_dq(&table, 2.0).unwrap();
        assert!((d2.point - 1.0).abs() < 0.1, "{d2:?}");
    }

    #[test]
    fn resolve_derivations() {
        let c = cantor(1.0 / 3.0);
        let spec = MeasureSpec {
            base: c.clone(),
            derive: Some(Derivation::Convolution {
                other: Box::new(cantor(0.25)),
                u: 0.7,
            }),
        };
        let d = DerivedMeasure::resolve(&spec).unwrap();
        assert!(matches!(d, DerivedMeasure::Convolved { .. }));
        let spec = MeasureSpec {
            base: c.clone(),
            derive: Some(Derivation::SkipKeep { k: 2, part: Part::Keep }),
        };
        let DerivedMeasure::SelfSimilar(keep) = DerivedMeasure::resolve(&spec).unwrap() else {
            panic!("expected a self-similar measure")
        };
        assert!((keep.ifs.translations()[1].re - 2.0 / 9.0).abs() < 1e-15);
        let rot = Measure::uniform(HomogeneousIfs::plane(0.4, 0.1, &[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]], "rot").unwrap());
        let spec = MeasureSpec {
            base: rot,
            derive: Some(Derivation::Projection { beta: 0.2 }),
        };
        let d = DerivedMeasure::resolve(&spec).unwrap();
        assert!(matches!(d, DerivedMeasure::Projected { .. }));
        let hs = d.histograms(&[4], &HistogramOptions::default()).unwrap();
        assert_eq!(hs[0].dim(), AmbientDim::One);
        // D_1 of the projected measure is finite and below the ambient bound
        let table = MomentTable::from_histograms(
            &d.histograms(&(2..=8).collect::<Vec<_>>(), &HistogramOptions::default()).unwrap(),
            &[2.0],
        )
        .unwrap();
        assert!(estimate_d1(&table).unwrap().point <= 1.05);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn skip_keep_dimension_identity(r in 0.05f64..0.45, k in 2u32..5, w in 0.1f64..0.9, neg: bool) {
            let sign = if neg { Sign::Minus } else { Sign::Plus };
            let m = Measure::new(
                HomogeneousIfs::line(r, sign, &[0.0, 1.0 - r], "f").unwrap(),
                WeightVector::new(vec![w, 1.0 - w]).unwrap(),
            ).unwrap();
            let s = similarity_dimension(&m.ifs, &m.weights).unwrap();
            let sk = skip_keep(&m, k, 1 << 12).unwrap();
            let sn = similarity_dimension(&sk.nu.ifs, &sk.nu.weights).unwrap();
            prop_assert!((sn - (1.0 - 1.0 / k as f64) * s).abs() < 1e-12);
        }

        #[test]
        fn projection_preserves_weight(beta in 0.0f64..std::f64::consts::TAU, w in proptest::collection::vec(0.05f64..1.0, 4)) {
            let total: f64 = w.iter().sum();
            let p = WeightVector::new(w.iter().map(|x| x / total).collect()).unwrap();
            let fc = four_corner();
            if let Ok(m) = project_ifs(&fc.ifs, &p, beta) {
                let s: f64 = m.weights.as_slice().iter().sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                prop_assert!(m.ifs.maps() <= 4);
            }
        }
    }
}
