//! Homogeneous iterated function systems, weights, coding maps and
//! closed-form dimensions.
//!
//! Points of the plane are stored as complex numbers, so the common linear
//! part of a homogeneous system is multiplication by a single complex number
//! `λ = r e^{2πiα}` (or the real number `±r` on the line). The imaginary
//! part of every point of a one-dimensional system stays exactly zero.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{xlog_inv, Real};

/// A point of the ambient space; `im` is zero on the line.
pub type Point<S> = Complex<S>;

/// Default number of enumerated words allowed per call.
pub const DEFAULT_WORD_BUDGET: u64 = 1 << 24;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AmbientDim {
    One,
    Two,
}

impl AmbientDim {
    pub fn as_usize(self) -> usize {
        match self {
            AmbientDim::One => 1,
            AmbientDim::Two => 2,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn from_i32(s: i32) -> Option<Sign> {
        match s {
            1 => Some(Sign::Plus),
            -1 => Some(Sign::Minus),
            _ => None,
        }
    }

    pub fn as_i32(self) -> i32 {
        match self {
            Sign::Plus => 1,
            Sign::Minus => -1,
        }
    }

    fn pow(self, k: u32) -> Sign {
        if self == Sign::Minus && k % 2 == 1 {
            Sign::Minus
        } else {
            Sign::Plus
        }
    }
}

/// Orientation-carrying part of a contracting similarity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Orientation<S> {
    /// On the line: `x ↦ ±r x`.
    Line(Sign),
    /// In the plane: rotation by `2πα`, `α ∈ [0, 1)`.
    Plane { alpha: S },
}

/// A contracting similarity without translation part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Similarity<S> {
    ratio: S,
    orientation: Orientation<S>,
}

impl<S: Real> Similarity<S> {
    pub fn line(ratio: S, sign: Sign) -> Result<Self> {
        Self::check_ratio(ratio)?;
        Ok(Similarity {
            ratio,
            orientation: Orientation::Line(sign),
        })
    }

    pub fn plane(ratio: S, alpha: S) -> Result<Self> {
        Self::check_ratio(ratio)?;
        if !alpha.is_finite() {
            return Err(Error::spec("rotation must be finite"));
        }
        let alpha = alpha - alpha.floor();
        Ok(Similarity {
            ratio,
            orientation: Orientation::Plane { alpha },
        })
    }

    fn check_ratio(ratio: S) -> Result<()> {
        if !(ratio > S::zero() && ratio < S::one()) {
            return Err(Error::spec(format!("contraction ratio {ratio} is not in (0,1)")));
        }
        Ok(())
    }

    pub fn ratio(&self) -> S {
        self.ratio
    }

    pub fn orientation(&self) -> Orientation<S> {
        self.orientation
    }

    pub fn dim(&self) -> AmbientDim {
        match self.orientation {
            Orientation::Line(_) => AmbientDim::One,
            Orientation::Plane { .. } => AmbientDim::Two,
        }
    }

    /// The complex multiplier `λ` with `T x = λ x`.
    pub fn multiplier(&self) -> Complex<S> {
        match self.orientation {
            Orientation::Line(Sign::Plus) => Complex::new(self.ratio, S::zero()),
            Orientation::Line(Sign::Minus) => Complex::new(-self.ratio, S::zero()),
            Orientation::Plane { alpha } => {
                let angle = S::TAU() * alpha;
                Complex::new(self.ratio * angle.cos(), self.ratio * angle.sin())
            }
        }
    }

    /// Signed ratio on the line; `None` in the plane.
    pub fn signed_ratio(&self) -> Option<S> {
        match self.orientation {
            Orientation::Line(s) => Some(if s == Sign::Plus { self.ratio } else { -self.ratio }),
            Orientation::Plane { .. } => None,
        }
    }

    /// `T^k`, for `k ≥ 1`.
    pub fn pow(&self, k: u32) -> Self {
        let ratio = self.ratio.powi(k as i32);
        let orientation = match self.orientation {
            Orientation::Line(s) => Orientation::Line(s.pow(k)),
            Orientation::Plane { alpha } => {
                let a = alpha * S::lit(k as f64);
                Orientation::Plane { alpha: a - a.floor() }
            }
        };
        Similarity { ratio, orientation }
    }

    pub fn apply(&self, p: Point<S>) -> Point<S> {
        self.multiplier() * p
    }

    /// The adjoint `Tᵀ`, used to pull frequencies back through the map.
    pub fn apply_adjoint(&self, p: Point<S>) -> Point<S> {
        self.multiplier().conj() * p
    }
}

/// A homogeneous IFS `{T x + a_1, …, T x + a_m}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HomogeneousIfs<S> {
    map: Similarity<S>,
    translations: Vec<Point<S>>,
    label: String,
}

impl<S: Real> HomogeneousIfs<S> {
    pub fn new(map: Similarity<S>, translations: Vec<Point<S>>, label: impl Into<String>) -> Result<Self> {
        if translations.len() < 2 {
            return Err(Error::spec("an IFS needs at least two maps"));
        }
        if translations.iter().any(|a| !a.re.is_finite() || !a.im.is_finite()) {
            return Err(Error::spec("translations must be finite"));
        }
        if map.dim() == AmbientDim::One && translations.iter().any(|a| a.im != S::zero()) {
            return Err(Error::spec("one-dimensional translations must be real"));
        }
        if translations.iter().all(|a| *a == translations[0]) {
            return Err(Error::spec("translations are all equal"));
        }
        Ok(HomogeneousIfs {
            map,
            translations,
            label: label.into(),
        })
    }

    /// System on the line with signed or unsigned ratio.
    pub fn line(ratio: S, sign: Sign, translations: &[S], label: impl Into<String>) -> Result<Self> {
        let map = Similarity::line(ratio, sign)?;
        let ts = translations.iter().map(|&a| Complex::new(a, S::zero())).collect();
        Self::new(map, ts, label)
    }

    pub fn plane(ratio: S, alpha: S, translations: &[[S; 2]], label: impl Into<String>) -> Result<Self> {
        let map = Similarity::plane(ratio, alpha)?;
        let ts = translations.iter().map(|&[x, y]| Complex::new(x, y)).collect();
        Self::new(map, ts, label)
    }

    pub fn map(&self) -> &Similarity<S> {
        &self.map
    }

    pub fn ratio(&self) -> S {
        self.map.ratio
    }

    pub fn dim(&self) -> AmbientDim {
        self.map.dim()
    }

    pub fn maps(&self) -> usize {
        self.translations.len()
    }

    pub fn translations(&self) -> &[Point<S>] {
        &self.translations
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn max_translation_norm(&self) -> S {
        self.translations
            .iter()
            .map(|a| a.norm())
            .fold(S::zero(), S::max)
    }

    fn mean_translation(&self) -> Point<S> {
        let sum = self
            .translations
            .iter()
            .fold(Complex::new(S::zero(), S::zero()), |acc, a| acc + a);
        sum / S::from_count(self.maps())
    }

    /// Ball containing the attractor: centred at the fixed point of the
    /// mean map, radius `max_j |a_j − ā| / (1 − r)`.
    pub fn bounding_ball(&self) -> Ball<S> {
        let mean = self.mean_translation();
        let one = Complex::new(S::one(), S::zero());
        let center = mean / (one - self.map.multiplier());
        let spread = self
            .translations
            .iter()
            .map(|a| (a - mean).norm())
            .fold(S::zero(), S::max);
        Ball {
            center,
            radius: spread / (S::one() - self.ratio()),
        }
    }

    fn check_word(&self, w: &Word) -> Result<()> {
        for (position, &symbol) in w.symbols().iter().enumerate() {
            if symbol == 0 || symbol > self.maps() {
                return Err(Error::InvalidWord {
                    position,
                    symbol,
                    maps: self.maps(),
                });
            }
        }
        Ok(())
    }

    fn partial_sum(&self, w: &Word) -> Point<S> {
        let lambda = self.map.multiplier();
        let mut power = Complex::new(S::one(), S::zero());
        let mut c = Complex::new(S::zero(), S::zero());
        for &s in w.symbols() {
            c = c + power * self.translations[s - 1];
            power = power * lambda;
        }
        c
    }

    /// Enclosure of the cylinder of `w` built from the bounding ball.
    /// Tighter than [`coding_map_partial`](Self::coding_map_partial), whose
    /// radius ignores where the attractor actually sits.
    pub fn cylinder_enclosure(&self, w: &Word) -> Result<Ball<S>> {
        self.check_word(w)?;
        let ball = self.bounding_ball();
        let k = w.len() as i32;
        let shift = self.map.multiplier().powi(k) * ball.center;
        Ok(Ball {
            center: self.partial_sum(w) + shift,
            radius: self.ratio().powi(k) * ball.radius,
        })
    }
}

/// Closed ball `B(center, radius)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ball<S> {
    pub center: Point<S>,
    pub radius: S,
}

impl<S: Real> Ball<S> {
    pub fn contains_ball(&self, other: &Ball<S>) -> bool {
        (other.center - self.center).norm() + other.radius <= self.radius
    }

    pub fn is_disjoint(&self, other: &Ball<S>) -> bool {
        (other.center - self.center).norm() > self.radius + other.radius
    }
}

/// Probability vector with strictly positive entries.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector<S> {
    p: Vec<S>,
}

impl<S: Real> WeightVector<S> {
    pub fn new(p: Vec<S>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::spec("empty weight vector"));
        }
        if p.iter().any(|&x| !(x > S::zero()) || !x.is_finite()) {
            return Err(Error::spec("weights must be positive and finite"));
        }
        let sum: S = p.iter().copied().sum();
        let tol = S::lit(1e-12).max(S::lit(8.0) * S::from_count(p.len()) * S::epsilon());
        if (sum - S::one()).abs() > tol {
            return Err(Error::spec(format!("weights sum to {sum}, not 1")));
        }
        Ok(WeightVector { p })
    }

    pub fn uniform(m: usize) -> Self {
        let w = S::one() / S::from_count(m);
        WeightVector { p: vec![w; m] }
    }

    pub fn as_slice(&self) -> &[S] {
        &self.p
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> S {
        self.p.iter().map(|&x| xlog_inv(x)).sum()
    }

    /// `Σ p_i^q`.
    pub fn power_sum(&self, q: S) -> S {
        self.p.iter().map(|&x| x.powf(q)).sum()
    }

    pub fn is_uniform(&self) -> bool {
        let u = S::one() / S::from_count(self.len());
        self.p.iter().all(|&x| (x - u).abs() <= S::lit(1e-12))
    }
}

/// Shannon entropy in bits of a weight vector.
pub fn entropy<S: Real>(p: &WeightVector<S>) -> S {
    p.entropy()
}

/// A finite word over `[m]`; symbols are 1-based.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Word {
    symbols: Vec<usize>,
}

impl Word {
    pub fn new(symbols: Vec<usize>) -> Self {
        Word { symbols }
    }

    pub fn symbols(&self) -> &[usize] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn extended(&self, symbol: usize) -> Word {
        let mut symbols = self.symbols.clone();
        symbols.push(symbol);
        Word { symbols }
    }
}

/// Partial coding map: `c = Σ_{n ≤ |w|} T^{n−1} a_{w_n}` together with the tail
/// radius `r^{|w|} max_j |a_j| / (1 − r)`.
pub fn coding_map_partial<S: Real>(ifs: &HomogeneousIfs<S>, w: &Word) -> Result<(Point<S>, S)> {
    if w.is_empty() {
        return Err(Error::spec("coding map needs a nonempty word"));
    }
    ifs.check_word(w)?;
    let r = ifs.ratio();
    let tail = r.powi(w.len() as i32) * ifs.max_translation_norm() / (S::one() - r);
    Ok((ifs.partial_sum(w), tail))
}

/// `h(p) / log2(1/r)`.
pub fn similarity_dimension<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>) -> Result<S> {
    if p.len() != ifs.maps() {
        return Err(Error::spec(format!(
            "{} weights for {} maps",
            p.len(),
            ifs.maps()
        )));
    }
    Ok(p.entropy() / (S::one() / ifs.ratio()).log2())
}

/// Similarity dimension with uniform weights, `log m / log(1/r)`.
pub fn similarity_dimension_uniform<S: Real>(ifs: &HomogeneousIfs<S>) -> S {
    S::from_count(ifs.maps()).log2() / (S::one() / ifs.ratio()).log2()
}

/// Outcome of a finite-depth strong separation check.
#[derive(Clone, Debug, PartialEq)]
pub enum SeparationCertificate {
    /// First-level pieces are pairwise disjoint: strong separation holds.
    Separated,
    /// Enclosures of two first-level pieces met at this depth. Not a
    /// refutation.
    Inconclusive { first: usize, second: usize },
}

impl SeparationCertificate {
    pub fn is_separated(&self) -> bool {
        matches!(self, SeparationCertificate::Separated)
    }
}

/// Certifies the strong separation condition by covering every first-level
/// piece with the enclosures of its depth-`depth` cylinders.
pub fn check_strong_separation<S: Real>(
    ifs: &HomogeneousIfs<S>,
    depth: u32,
    budget: u64,
) -> Result<SeparationCertificate> {
    if depth == 0 {
        return Err(Error::spec("separation depth must be at least 1"));
    }
    let m = ifs.maps();
    let needed = (m as f64).powi(depth as i32);
    if needed > budget as f64 {
        return Err(Error::BudgetExceeded { needed, budget });
    }
    let lambda = ifs.map().multiplier();
    let ball = ifs.bounding_ball();

    // (first symbol, partial sum) for every word of length `depth`.
    let mut nodes: Vec<(usize, Point<S>)> = ifs.translations().iter().copied().enumerate().collect();
    let mut power = lambda;
    for _ in 1..depth {
        let mut next = Vec::with_capacity(nodes.len() * m);
        for &(first, c) in &nodes {
            for a in ifs.translations() {
                next.push((first, c + power * a));
            }
        }
        nodes = next;
        power = power * lambda;
    }
    let shift = power * ball.center;
    let radius = ifs.ratio().powi(depth as i32) * ball.radius;
    let slack = S::lit(64.0) * S::epsilon() * (ball.center.norm() + ball.radius + S::one()) * S::lit(depth as f64);
    let reach = S::lit(2.0) * (radius + slack);

    let mut centers: Vec<(usize, Point<S>)> = nodes.into_iter().map(|(f, c)| (f, c + shift)).collect();
    centers.sort_by(|a, b| a.1.re.partial_cmp(&b.1.re).unwrap_or(std::cmp::Ordering::Equal));
    for i in 0..centers.len() {
        let (fi, ci) = centers[i];
        for &(fj, cj) in &centers[i + 1..] {
            if cj.re - ci.re > reach {
                break;
            }
            if fi != fj && (cj - ci).norm() <= reach {
                let (first, second) = if fi < fj { (fi, fj) } else { (fj, fi) };
                return Ok(SeparationCertificate::Inconclusive {
                    first: first + 1,
                    second: second + 1,
                });
            }
        }
    }
    Ok(SeparationCertificate::Separated)
}
