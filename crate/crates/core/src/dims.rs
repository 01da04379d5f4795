//! `L^q` and entropy dimension estimates, closed forms, and the checks that
//! relate them.

use std::io::Write;

use crate::discretize::{histograms, DyadicHistogram, HistogramOptions};
use crate::error::{Error, Result};
use crate::ifs::{check_strong_separation, AmbientDim, HomogeneousIfs, WeightVector};
use crate::scalar::{fmt_real, least_squares, slope_stderr, Real};

/// Moment sums `S_{n,q}` and entropies `H_n` with their bounds, one row per
/// level.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable<S> {
    dim: AmbientDim,
    qs: Vec<S>,
    levels: Vec<u32>,
    /// `moments[i][j]` belongs to `levels[i]` and `qs[j]`.
    moments: Vec<Vec<(S, S)>>,
    entropy: Vec<(S, S)>,
}

impl<S: Real> MomentTable<S> {
    /// Tabulates histograms given in increasing level order.
    pub fn from_histograms(hists: &[DyadicHistogram<S>], qs: &[S]) -> Result<Self> {
        let first = hists.first().ok_or_else(|| Error::spec("no histograms"))?;
        let dim = first.dim();
        for pair in hists.windows(2) {
            if pair[1].level() <= pair[0].level() {
                return Err(Error::spec("levels must increase"));
            }
        }
        if hists.iter().any(|h| h.dim() != dim) {
            return Err(Error::spec("histograms of mixed dimension"));
        }
        let qs: Vec<S> = qs.iter().copied().filter(|&q| q != S::one()).collect();
        let moments = hists
            .iter()
            .map(|h| qs.iter().map(|&q| h.moment_sums(q)).collect::<Result<Vec<_>>>())
            .collect::<Result<Vec<_>>>()?;
        Ok(MomentTable {
            dim,
            qs,
            levels: hists.iter().map(|h| h.level()).collect(),
            moments,
            entropy: hists.iter().map(|h| h.entropy_sum()).collect(),
        })
    }

    pub fn from_ifs(
        ifs: &HomogeneousIfs<S>,
        p: &WeightVector<S>,
        levels: &[u32],
        qs: &[S],
        opts: &HistogramOptions,
    ) -> Result<Self> {
        let mut levels = levels.to_vec();
        levels.sort_unstable();
        levels.dedup();
        let hists = histograms(ifs, p, &levels, opts)?;
        Self::from_histograms(&hists, qs)
    }

    pub fn dim(&self) -> AmbientDim {
        self.dim
    }

    pub fn levels(&self) -> &[u32] {
        &self.levels
    }

    pub fn qs(&self) -> &[S] {
        &self.qs
    }

    fn q_index(&self, q: S) -> Option<usize> {
        self.qs.iter().position(|&x| (x - q).abs() <= S::lit(1e-12))
    }

    fn level_index(&self, n: u32) -> Option<usize> {
        self.levels.binary_search(&n).ok()
    }

    pub fn moment(&self, n: u32, q: S) -> Option<(S, S)> {
        Some(self.moments[self.level_index(n)?][self.q_index(q)?])
    }

    pub fn entropy(&self, n: u32) -> Option<(S, S)> {
        Some(self.entropy[self.level_index(n)?])
    }

    /// The table restricted to levels `≤ n_max`.
    pub fn truncated(&self, n_max: u32) -> Self {
        let keep = self.levels.iter().take_while(|&&n| n <= n_max).count();
        MomentTable {
            dim: self.dim,
            qs: self.qs.clone(),
            levels: self.levels[..keep].to_vec(),
            moments: self.moments[..keep].to_vec(),
            entropy: self.entropy[..keep].to_vec(),
        }
    }

    /// CSV with columns `q, n, S_lower, S_upper, slope_fit, D_lo, D_hi`.
    /// Each row carries the estimate from the levels up to `n`; the estimate
    /// columns stay empty until four levels are available. Rows with `q = 1`
    /// hold `H_n` bounds.
    pub fn write_csv<W: Write>(&self, out: W, include_entropy: bool) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "n", "S_lower", "S_upper", "slope_fit", "D_lo", "D_hi"])?;
        let mut qs: Vec<Option<S>> = self.qs.iter().map(|&q| Some(q)).collect();
        if include_entropy {
            qs.push(None);
        }
        for q in qs {
            for (i, &n) in self.levels.iter().enumerate() {
                let (lo, hi) = match q {
                    Some(q) => self.moments[i][self.q_index(q).expect("q in table")],
                    None => self.entropy[i],
                };
                let est = if i + 1 >= 4 {
                    let sub = self.truncated(n);
                    Some(match q {
                        Some(q) => estimate_dq(&sub, q)?,
                        None => estimate_d1(&sub)?,
                    })
                } else {
                    None
                };
                let opt = |x: Option<S>| x.map(fmt_real).unwrap_or_default();
                w.write_record([
                    fmt_real(q.unwrap_or(S::one())),
                    n.to_string(),
                    fmt_real(lo),
                    fmt_real(hi),
                    opt(est.as_ref().map(|e| e.point)),
                    opt(est.as_ref().map(|e| e.lo)),
                    opt(est.as_ref().map(|e| e.hi)),
                ])?;
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitDiagnostics<S> {
    pub levels_used: Vec<u32>,
    pub max_residual: S,
    pub slope_stderr: S,
    /// Finite-level quotients `log S_{n,q}/((1−q)n)` (or `H_n/n`) at the two
    /// largest levels, as `(n, lower, upper)`.
    pub quotients: Vec<(u32, S, S)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DimEstimate<S> {
    pub q: S,
    pub point: S,
    pub lo: S,
    pub hi: S,
    pub diagnostics: FitDiagnostics<S>,
}

impl<S: Real> DimEstimate<S> {
    /// A known value with a degenerate interval.
    pub fn exact(q: S, value: S) -> Self {
        DimEstimate {
            q,
            point: value,
            lo: value,
            hi: value,
            diagnostics: FitDiagnostics {
                levels_used: Vec::new(),
                max_residual: S::zero(),
                slope_stderr: S::zero(),
                quotients: Vec::new(),
            },
        }
    }

    pub fn contains(&self, x: S) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn width(&self) -> S {
        self.hi - self.lo
    }
}

fn top_half(levels: &[u32]) -> std::ops::Range<usize> {
    let n = levels.len();
    let k = n.div_ceil(2).max(3).min(n);
    n - k..n
}

/// Slope estimate with a band: the point is the fit through the midpoint of
/// the log bounds; the interval spans the fits through the lower and upper
/// bounds, widened by two standard errors.
fn fit_band<S: Real>(
    q: S,
    ambient: AmbientDim,
    xs: &[S],
    lo: &[S],
    hi: &[S],
    levels: Vec<u32>,
    quotients: Vec<(u32, S, S)>,
) -> DimEstimate<S> {
    let mid: Vec<S> = lo.iter().zip(hi).map(|(&a, &b)| (a + b) / S::lit(2.0)).collect();
    let (point, _, res_mid) = least_squares(xs, &mid);
    let (s_lo, _, res_lo) = least_squares(xs, lo);
    let (s_hi, _, res_hi) = least_squares(xs, hi);
    let se = slope_stderr(xs, &res_mid)
        .max(slope_stderr(xs, &res_lo))
        .max(slope_stderr(xs, &res_hi));
    let two = S::lit(2.0);
    let ceiling = S::from_count(ambient.as_usize()) + S::lit(0.05);
    let clamp = |x: S| x.max(S::zero()).min(ceiling);
    let point = clamp(point);
    let lo_end = clamp(s_lo.min(s_hi) - two * se).min(point);
    let hi_end = clamp(s_lo.max(s_hi) + two * se).max(point);
    DimEstimate {
        q,
        point,
        lo: lo_end,
        hi: hi_end,
        diagnostics: FitDiagnostics {
            levels_used: levels,
            max_residual: res_mid.iter().map(|r| r.abs()).fold(S::zero(), S::max),
            slope_stderr: se,
            quotients,
        },
    }
}

/// Estimates `D_q` from the slope of `log S_{n,q}` against `(1−q) n` over the
/// upper half of the table's levels.
pub fn estimate_dq<S: Real>(table: &MomentTable<S>, q: S) -> Result<DimEstimate<S>> {
    if q == S::one() {
        return Err(Error::spec("q = 1: use estimate_d1"));
    }
    let j = table
        .q_index(q)
        .ok_or_else(|| Error::spec(format!("q = {q} is not in the table")))?;
    if table.levels.len() < 4 {
        return Err(Error::spec("at least four levels are needed"));
    }
    let range = top_half(&table.levels);
    let one_minus_q = S::one() - q;
    let mut xs = Vec::new();
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for i in range.clone() {
        let (a, b) = table.moments[i][j];
        if !(a > S::zero()) {
            return Err(Error::Precision(format!(
                "lower moment sum vanishes at level {}; increase the extra depth",
                table.levels[i]
            )));
        }
        xs.push(one_minus_q * S::lit(table.levels[i] as f64));
        lo.push(a.log2());
        hi.push(b.log2());
    }
    let quotients = range
        .clone()
        .rev()
        .take(2)
        .map(|i| {
            let x = one_minus_q * S::lit(table.levels[i] as f64);
            let (a, b) = table.moments[i][j];
            let (u, v) = (a.log2() / x, b.log2() / x);
            (table.levels[i], u.min(v), u.max(v))
        })
        .collect();
    let levels = table.levels[range].to_vec();
    Ok(fit_band(q, table.dim, &xs, &lo, &hi, levels, quotients))
}

/// Estimates the entropy dimension from the slope of `H_n` against `n`.
pub fn estimate_d1<S: Real>(table: &MomentTable<S>) -> Result<DimEstimate<S>> {
    if table.levels.len() < 4 {
        return Err(Error::spec("at least four levels are needed"));
    }
    let range = top_half(&table.levels);
    let xs: Vec<S> = range.clone().map(|i| S::lit(table.levels[i] as f64)).collect();
    let lo: Vec<S> = range.clone().map(|i| table.entropy[i].0).collect();
    let hi: Vec<S> = range.clone().map(|i| table.entropy[i].1).collect();
    let quotients = range
        .clone()
        .rev()
        .take(2)
        .map(|i| {
            let n = S::lit(table.levels[i] as f64);
            (table.levels[i], table.entropy[i].0 / n, table.entropy[i].1 / n)
        })
        .collect();
    let levels = table.levels[range].to_vec();
    Ok(fit_band(S::one(), table.dim, &xs, &lo, &hi, levels, quotients))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClosedFormDq<S> {
    pub value: S,
    /// `q = 1` was requested and the entropy formula `h(p)/log(1/r)` used.
    pub entropy_limit: bool,
    /// A finite-depth strong separation certificate was found; the formula
    /// is only known to hold under separation.
    pub separated: bool,
}

/// `log Σ p_i^q / ((q−1) log r)`.
pub fn closed_form_dq<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, q: S) -> Result<ClosedFormDq<S>> {
    if p.len() != ifs.maps() {
        return Err(Error::spec(format!("{} weights for {} maps", p.len(), ifs.maps())));
    }
    let log_r = ifs.ratio().log2();
    let (value, entropy_limit) = if q == S::one() {
        (p.entropy() / -log_r, true)
    } else {
        (p.power_sum(q).log2() / ((q - S::one()) * log_r), false)
    };
    let depth = ((16.0 / (ifs.maps() as f64).log2()).floor() as u32).clamp(1, 12);
    let separated = check_strong_separation(ifs, depth, 1 << 17)
        .map(|c| c.is_separated())
        .unwrap_or(false);
    Ok(ClosedFormDq {
        value,
        entropy_limit,
        separated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubmultiplicativityReport<S> {
    pub q: S,
    pub triples: usize,
    /// Smallest `M ≥ 1` satisfying every checked triple.
    pub empirical_m: S,
    /// Triple `(n, m)` attaining the empirical `M`.
    pub worst: Option<(u32, u32)>,
    /// Every triple holds with the candidate `M`.
    pub holds: bool,
}

/// Checks `S_{n+m,q} ≤ M^{q−1} S_{n,q} S_{m,q}` with upper bounds on the left
/// and lower bounds on the right, over every `n, m ≥ 1` with `n`, `m` and
/// `n + m` in the table and `n, m ≤ max_nm`.
pub fn check_submultiplicativity<S: Real>(
    table: &MomentTable<S>,
    q: S,
    m_candidate: S,
    max_nm: u32,
) -> Result<SubmultiplicativityReport<S>> {
    if !(q > S::one()) {
        return Err(Error::spec("submultiplicativity is checked for q > 1"));
    }
    if table.q_index(q).is_none() {
        return Err(Error::spec(format!("q = {q} is not in the table")));
    }
    let mut empirical = S::one();
    let mut worst = None;
    let mut triples = 0;
    let exponent = S::one() / (q - S::one());
    for &n in table.levels.iter().filter(|&&n| n >= 1 && n <= max_nm) {
        for &m in table.levels.iter().filter(|&&m| m >= n && m <= max_nm) {
            let Some((big, _)) = table.moment(n + m, q).map(|(_, hi)| (hi, ())) else {
                continue;
            };
            let (sn, _) = table.moment(n, q).expect("level present");
            let (sm, _) = table.moment(m, q).expect("level present");
            triples += 1;
            let needed = if sn > S::zero() && sm > S::zero() {
                (big / (sn * sm)).powf(exponent)
            } else {
                S::infinity()
            };
            if needed > empirical {
                empirical = needed;
                worst = Some((n, m));
            }
        }
    }
    Ok(SubmultiplicativityReport {
        q,
        triples,
        empirical_m: empirical,
        worst,
        holds: empirical <= m_candidate,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuityReport<S> {
    pub d1: DimEstimate<S>,
    pub estimates: Vec<DimEstimate<S>>,
    /// `D̂_q ≤ D̂_1 + tol` for every `q`.
    pub below_d1: bool,
    /// `D̂_q` does not decrease (beyond `tol`) as `q` decreases to 1.
    pub increasing: bool,
}

impl<S> ContinuityReport<S> {
    pub fn passed(&self) -> bool {
        self.below_d1 && self.increasing
    }
}

/// Estimates `D_q` along a decreasing list `q ⊂ (1, 2]` and compares with `D_1`.
pub fn continuity_check_at_1<S: Real>(
    ifs: &HomogeneousIfs<S>,
    p: &WeightVector<S>,
    qs: &[S],
    levels: &[u32],
    opts: &HistogramOptions,
    tol: S,
) -> Result<ContinuityReport<S>> {
    if qs.is_empty() {
        return Err(Error::spec("empty q list"));
    }
    if qs.iter().any(|&q| !(q > S::one() && q <= S::lit(2.0))) {
        return Err(Error::spec("q list must lie in (1, 2]"));
    }
    if qs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::spec("q list must be strictly decreasing"));
    }
    let table = MomentTable::from_ifs(ifs, p, levels, qs, opts)?;
    let d1 = estimate_d1(&table)?;
    let estimates = qs.iter().map(|&q| estimate_dq(&table, q)).collect::<Result<Vec<_>>>()?;
    let below_d1 = estimates.iter().all(|e| e.point <= d1.point + tol);
    let increasing = estimates.windows(2).all(|w| w[1].point + tol >= w[0].point);
    Ok(ContinuityReport {
        d1,
        estimates,
        below_d1,
        increasing,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AcVerdict {
    /// The convolution has an `L^p` density.
    PredictsLq,
    /// The hypothesis fails; this is not a singularity claim.
    NoPrediction,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AcPrediction<S> {
    pub verdict: AcVerdict,
    /// `fdim(ν)` minus the left-hand side of the hypothesis.
    pub margin: S,
}

/// Tests `d − D_p μ < fdim ν` (for `p ≤ 2`) or `(p−1)(d − D_p μ) < fdim ν`
/// (for `p > 2`) on the lower end of the `D_p` estimate.
pub fn ac_predicate<S: Real>(d: usize, dp: &DimEstimate<S>, fdim: S, p: S) -> Result<AcPrediction<S>> {
    if !(p > S::one()) {
        return Err(Error::spec("p must exceed 1"));
    }
    if !(fdim >= S::zero()) {
        return Err(Error::spec("fdim must be nonnegative"));
    }
    let gap = S::from_count(d) - dp.lo;
    let lhs = if p <= S::lit(2.0) { gap } else { (p - S::one()) * gap };
    let margin = fdim - lhs;
    let verdict = if margin > S::zero() {
        AcVerdict::PredictsLq
    } else {
        AcVerdict::NoPrediction
    };
    Ok(AcPrediction { verdict, margin })
}
