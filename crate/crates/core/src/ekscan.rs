//! Erdős–Kahane scanners: the fraction of indices `n ∈ [N]` at which the
//! near-integer condition holds, maximised over a grid of `t`, and brute-force
//! counts of the integer sequences that the covering arguments enumerate.
//!
//! `‖x‖` is the distance to the nearest integer. Because `‖−x‖ = ‖x‖`, the
//! two-signed ranges `|t| ∈ [1, θ]` reduce to `t ∈ [1, θ]`.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::{fmt_real, Real};

pub const DEFAULT_T_GRID: u32 = 4096;
pub const DEFAULT_C: f64 = 0.1;
pub const MAX_COUNT_N: u32 = 22;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum EkKind<S> {
    /// `max(‖tλ^{−n}‖, ‖tuλ^{−n}‖) ≤ c`, `t ∈ [1, λ^{−1}]`.
    Translations { lambda: S, u: S },
    /// `‖tθ^n cos(β + nα)‖ ≤ c`, `|t| ∈ [1, θ]`.
    Projections { theta: S, alpha: S, beta: S },
    /// `max(‖tθ_1^n‖, ‖t u s θ_2^{k(n)}‖) ≤ c`, `|t| ∈ [1, θ_1]`, where
    /// `k(n)` is the least `k` with `θ_2^k ≥ θ_1^n` and `s = r_N =
    /// θ_1^N/θ_2^{k(N)}` when `rescale` is set (otherwise `s = 1`).
    Convolutions { theta1: S, theta2: S, u: S, rescale: bool },
}

impl<S: Real> EkKind<S> {
    pub fn name(&self) -> &'static str {
        match self {
            EkKind::Translations { .. } => "translations",
            EkKind::Projections { .. } => "projections",
            EkKind::Convolutions { .. } => "convolutions",
        }
    }

    /// Right end of the `t` interval.
    pub fn t_max(&self) -> S {
        match *self {
            EkKind::Translations { lambda, .. } => S::one() / lambda,
            EkKind::Projections { theta, .. } => theta,
            EkKind::Convolutions { theta1, .. } => theta1,
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |x: S, name: &str| {
            if x.is_finite() {
                Ok(())
            } else {
                Err(Error::spec(format!("{name} must be finite")))
            }
        };
        match *self {
            EkKind::Translations { lambda, u } => {
                finite(u, "u")?;
                if !(lambda > S::zero() && lambda < S::one()) {
                    return Err(Error::spec("lambda must lie in (0, 1)"));
                }
            }
            EkKind::Projections { theta, alpha, beta } => {
                finite(beta, "beta")?;
                if !(theta > S::one()) || !theta.is_finite() {
                    return Err(Error::spec("theta must exceed 1"));
                }
                if !(alpha > S::zero() && alpha < S::TAU()) || alpha == S::PI() {
                    return Err(Error::spec("alpha must lie in (0, 2π) and differ from π"));
                }
            }
            EkKind::Convolutions { theta1, theta2, u, .. } => {
                finite(u, "u")?;
                if !(theta1 > S::one() && theta2 > theta1) || !theta2.is_finite() {
                    return Err(Error::spec("need θ2 > θ1 > 1"));
                }
                if u == S::zero() {
                    return Err(Error::spec("u must be nonzero"));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkSpec<S> {
    pub kind: EkKind<S>,
    pub n: u32,
    pub c: S,
    pub t_grid: u32,
}

impl<S: Real> EkSpec<S> {
    pub fn new(kind: EkKind<S>, n: u32, c: S) -> Self {
        EkSpec {
            kind,
            n,
            c,
            t_grid: DEFAULT_T_GRID,
        }
    }

    fn validate(&self) -> Result<()> {
        self.kind.validate()?;
        if self.n < 3 {
            return Err(Error::spec("N must be at least 3"));
        }
        if !(self.c > S::zero() && self.c < S::lit(0.5)) {
            return Err(Error::spec("c must lie in (0, 1/2)"));
        }
        if self.t_grid < 2 {
            return Err(Error::spec("the t grid needs at least two points"));
        }
        Ok(())
    }
}

/// Least `k ≥ 0` with `θ_2^k ≥ θ_1^n`.
pub fn k_of<S: Real>(theta1: S, theta2: S, n: u32) -> u32 {
    let target = S::lit(n as f64) * theta1.ln();
    let l2 = theta2.ln();
    let mut k = (target / l2).ceil().to_u32().unwrap_or(0);
    while k > 0 && S::lit((k - 1) as f64) * l2 >= target {
        k -= 1;
    }
    while S::lit(k as f64) * l2 < target {
        k += 1;
    }
    k
}

/// Signed residual `x − round(x)` in `[−1/2, 1/2)`.
fn residual<S: Real>(x: S) -> S {
    x - (x + S::lit(0.5)).floor()
}

/// Precomputed multipliers: the condition at index `n` reads
/// `‖t a_n‖ ≤ c` and, when present, `‖t b_n‖ ≤ c`.
struct Multipliers<S> {
    a: Vec<S>,
    b: Option<Vec<S>>,
}

fn multipliers<S: Real>(kind: &EkKind<S>, n_max: u32) -> Multipliers<S> {
    let ns = 1..=n_max;
    match *kind {
        EkKind::Translations { lambda, u } => {
            let theta = S::one() / lambda;
            let a: Vec<S> = ns.map(|n| theta.powi(n as i32)).collect();
            let b = a.iter().map(|&x| u * x).collect();
            Multipliers { a, b: Some(b) }
        }
        EkKind::Projections { theta, alpha, beta } => Multipliers {
            a: ns
                .map(|n| theta.powi(n as i32) * (beta + S::lit(n as f64) * alpha).cos())
                .collect(),
            b: None,
        },
        EkKind::Convolutions {
            theta1,
            theta2,
            u,
            rescale,
        } => {
            let scale = if rescale {
                theta1.powi(n_max as i32) / theta2.powi(k_of(theta1, theta2, n_max) as i32)
            } else {
                S::one()
            };
            let a = ns.clone().map(|n| theta1.powi(n as i32)).collect();
            let b = ns
                .map(|n| u * scale * theta2.powi(k_of(theta1, theta2, n) as i32))
                .collect();
            Multipliers { a, b: Some(b) }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EkResidual<S> {
    pub n: u32,
    pub eps: S,
    pub delta: Option<S>,
    pub good: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EkReport<S> {
    /// Largest fraction of good indices over the grid.
    pub badness: S,
    pub witness_t: S,
    pub good_count: u32,
    pub residuals: Vec<EkResidual<S>>,
}

fn good_count<S: Real>(m: &Multipliers<S>, t: S, c: S) -> u32 {
    let mut count = 0;
    for (i, &a) in m.a.iter().enumerate() {
        let ok = residual(t * a).abs() <= c && m.b.as_ref().is_none_or(|b| residual(t * b[i]).abs() <= c);
        count += ok as u32;
    }
    count
}

/// Grid maximum of the fraction of good indices; ties go to the smallest `t`.
/// The grid maximum is a lower bound for the supremum over the interval.
pub fn ek_badness<S: Real>(spec: &EkSpec<S>) -> Result<EkReport<S>> {
    spec.validate()?;
    let m = multipliers(&spec.kind, spec.n);
    let t_max = spec.kind.t_max();
    let steps = S::lit((spec.t_grid - 1) as f64);
    let t_at = |i: u32| {
        if i == spec.t_grid - 1 {
            t_max
        } else {
            S::one() + (t_max - S::one()) * S::lit(i as f64) / steps
        }
    };
    let counts: Vec<u32> = (0..spec.t_grid)
        .into_par_iter()
        .map(|i| good_count(&m, t_at(i), spec.c))
        .collect();
    let (best_i, best) = counts
        .iter()
        .enumerate()
        .fold((0usize, 0u32), |acc, (i, &c)| if c > acc.1 { (i, c) } else { acc });
    let t = t_at(best_i as u32);
    let residuals = m
        .a
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let eps = residual(t * a);
            let delta = m.b.as_ref().map(|b| residual(t * b[i]));
            EkResidual {
                n: i as u32 + 1,
                eps,
                delta,
                good: eps.abs() <= spec.c && delta.is_none_or(|d| d.abs() <= spec.c),
            }
        })
        .collect();
    Ok(EkReport {
        badness: S::lit(best as f64) / S::lit(spec.n as f64),
        witness_t: t,
        good_count: best,
        residuals,
    })
}

/// Parameter varied by [`ek_sweep`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepParam {
    Lambda,
    U,
    Theta,
    Alpha,
    Beta,
    Theta1,
    Theta2,
}

impl SweepParam {
    fn set<S: Real>(self, kind: &EkKind<S>, v: S) -> Result<EkKind<S>> {
        let mut k = *kind;
        let ok = match (&mut k, self) {
            (EkKind::Translations { lambda, .. }, SweepParam::Lambda) => {
                *lambda = v;
                true
            }
            (EkKind::Translations { u, .. }, SweepParam::U) | (EkKind::Convolutions { u, .. }, SweepParam::U) => {
                *u = v;
                true
            }
            (EkKind::Projections { theta, .. }, SweepParam::Theta) => {
                *theta = v;
                true
            }
            (EkKind::Projections { alpha, .. }, SweepParam::Alpha) => {
                *alpha = v;
                true
            }
            (EkKind::Projections { beta, .. }, SweepParam::Beta) => {
                *beta = v;
                true
            }
            (EkKind::Convolutions { theta1, .. }, SweepParam::Theta1) => {
                *theta1 = v;
                true
            }
            (EkKind::Convolutions { theta2, .. }, SweepParam::Theta2) => {
                *theta2 = v;
                true
            }
            _ => false,
        };
        if ok {
            Ok(k)
        } else {
            Err(Error::spec(format!("{self:?} is not a parameter of {}", kind.name())))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepRow<S> {
    pub parameter: S,
    pub badness: S,
    pub witness_t: S,
}

/// `steps` equally spaced values over `[lo, hi]` inclusive; a single value
/// when `steps == 1` or `lo == hi`.
pub fn linspace<S: Real>(lo: S, hi: S, steps: u32) -> Vec<S> {
    if steps <= 1 || lo == hi {
        return vec![lo];
    }
    let d = S::lit((steps - 1) as f64);
    (0..steps)
        .map(|i| if i == steps - 1 { hi } else { lo + (hi - lo) * S::lit(i as f64) / d })
        .collect()
}

/// Runs [`ek_badness`] over a parameter grid, in parallel; rows are sorted by
/// parameter.
pub fn ek_sweep<S: Real>(base: &EkSpec<S>, param: SweepParam, lo: S, hi: S, steps: u32) -> Result<Vec<SweepRow<S>>> {
    if steps == 0 {
        return Err(Error::spec("steps must be positive"));
    }
    let values = linspace(lo, hi, steps);
    let mut rows = values
        .par_iter()
        .map(|&v| {
            let spec = EkSpec {
                kind: param.set(&base.kind, v)?,
                ..*base
            };
            let r = ek_badness(&spec)?;
            Ok(SweepRow {
                parameter: v,
                badness: r.badness,
                witness_t: r.witness_t,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.parameter.partial_cmp(&b.parameter).unwrap_or(std::cmp::Ordering::Equal));
    Ok(rows)
}

/// CSV with columns `parameter, badness, witness_t`.
pub fn write_sweep_csv<S: Real, W: Write>(rows: &[SweepRow<S>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["parameter", "badness", "witness_t"])?;
    for r in rows {
        w.write_record([fmt_real(r.parameter), fmt_real(r.badness), fmt_real(r.witness_t)])?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<csv>".into(),
        source,
    })
}

// --- sequence counting ---

/// Integer recursion satisfied, up to `C · max|ε|`, by `K_n = tθ^n − ε_n`
/// and its relatives.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Recursion {
    /// `K_{n+1} ≈ θ K_n`.
    Geometric { theta: f64 },
    /// `K_{n+2} ≈ a1 K_{n+1} + a0 K_n`.
    Linear2 { a1: f64, a0: f64 },
    /// `K_{n+2} ≈ K_{n+1}² / K_n`.
    Quadratic,
}

impl Recursion {
    fn order(self) -> usize {
        match self {
            Recursion::Geometric { .. } => 1,
            _ => 2,
        }
    }

    fn center(self, prev: i64, cur: i64) -> Option<f64> {
        match self {
            Recursion::Geometric { theta } => Some(theta * cur as f64),
            Recursion::Linear2 { a1, a0 } => Some(a1 * cur as f64 + a0 * prev as f64),
            Recursion::Quadratic => (prev != 0).then(|| (cur as f64) * (cur as f64) / prev as f64),
        }
    }
}

/// One integer chain to count.
#[derive(Clone, Debug, PartialEq)]
struct Chain {
    recursion: Recursion,
    /// Error constant `C` of the recursion.
    constant: f64,
    /// Candidate values of the first `order` elements.
    seeds: Vec<std::ops::RangeInclusive<i64>>,
    /// Cost (number of indices `n`) of labelling each element bad.
    costs: Vec<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountSpec<S> {
    pub kind: EkKind<S>,
    pub c: S,
    pub delta: S,
    /// Multiplies both recursion windows.
    pub slack: S,
    /// Largest number of distinct DP states allowed.
    pub state_budget: usize,
}

impl<S: Real> CountSpec<S> {
    pub fn new(kind: EkKind<S>, c: S, delta: S) -> Self {
        CountSpec {
            kind,
            c,
            delta,
            slack: S::one(),
            state_budget: 1 << 22,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CountRow {
    pub n: u32,
    pub count: u128,
    /// `log2(count) / N`.
    pub log_count_over_n: f64,
    /// Largest number of admissible successors of any state.
    pub max_branching: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CountReport {
    pub rows: Vec<CountRow>,
    /// Below this `c` every fully good transition has at most one successor.
    pub uniqueness_threshold: f64,
}

impl CountReport {
    /// CSV with columns `N, count, log_count_over_N`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["N", "count", "log_count_over_N"])?;
        for r in &self.rows {
            w.write_record([r.n.to_string(), r.count.to_string(), fmt_real(r.log_count_over_n)])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv>".into(),
            source,
        })
    }
}

fn int_range(lo: f64, hi: f64) -> std::ops::RangeInclusive<i64> {
    let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    (lo.ceil() as i64)..=(hi.floor() as i64)
}

/// Integers within `1/2` of `x [lo, hi]`, i.e. possible `K = tx − ε`.
fn seed_range(x_lo: f64, x_hi: f64) -> std::ops::RangeInclusive<i64> {
    let (lo, hi) = if x_lo <= x_hi { (x_lo, x_hi) } else { (x_hi, x_lo) };
    int_range(lo - 0.5, hi + 0.5)
}

fn chains<S: Real>(kind: &EkKind<S>, n: u32) -> Vec<Chain> {
    match *kind {
        EkKind::Translations { lambda, u } => {
            let th = 1.0 / lambda.as_f64();
            let u = u.as_f64();
            let chain = |s: f64| Chain {
                recursion: Recursion::Quadratic,
                constant: (1.0 + th) * (1.0 + th),
                seeds: vec![seed_range(s * th, s * th * th), seed_range(s * th * th, s * th * th * th)],
                costs: vec![1; n as usize],
            };
            vec![chain(1.0), chain(u)]
        }
        EkKind::Projections { theta, alpha, .. } => {
            let th = theta.as_f64();
            let a = alpha.as_f64();
            let b1 = th * th;
            let b2 = th * th * th;
            vec![Chain {
                recursion: Recursion::Linear2 {
                    a1: 2.0 * th * a.cos(),
                    a0: -th * th,
                },
                constant: 1.0 + 2.0 * th * a.cos().abs() + th * th,
                seeds: vec![seed_range(-b1, b1), seed_range(-b2, b2)],
                costs: vec![1; n as usize],
            }]
        }
        EkKind::Convolutions { theta1, theta2, u, .. } => {
            let t1 = theta1.as_f64();
            let t2 = theta2.as_f64();
            let u = u.as_f64();
            let k = chain_k(theta1, theta2, n);
            // L_n only changes when k(n) increments; each distinct value
            // covers a block of indices.
            let mut costs = Vec::new();
            let mut last = None;
            for &kn in &k {
                if last == Some(kn) {
                    *costs.last_mut().expect("nonempty") += 1;
                } else {
                    costs.push(1);
                    last = Some(kn);
                }
            }
            let l1 = u * t2.powi(k[0] as i32);
            vec![
                Chain {
                    recursion: Recursion::Geometric { theta: t1 },
                    constant: 1.0 + t1,
                    seeds: vec![seed_range(t1, t1 * t1)],
                    costs: vec![1; n as usize],
                },
                Chain {
                    recursion: Recursion::Geometric { theta: t2 },
                    constant: 1.0 + t2,
                    seeds: vec![seed_range(l1, l1 * t1)],
                    costs,
                },
            ]
        }
    }
}

fn chain_k<S: Real>(theta1: S, theta2: S, n: u32) -> Vec<u32> {
    (1..=n).map(|i| k_of(theta1, theta2, i)).collect()
}

const INF: u8 = u8::MAX;

/// Minimal bad cost per label assignment of the trailing `order` elements;
/// index bit 0 is the last element, bit 1 the one before (1 = bad).
type Mins = [u8; 4];

/// Number of distinct integer sequences admitting a good/bad labelling with
/// total bad cost at most `budget`, where a transition whose elements are all
/// good stays within `tight` of the recursion and every other transition
/// within `loose`.
fn count_chain(chain: &Chain, tight: f64, loose: f64, budget: u32, state_budget: usize) -> Result<(u128, usize)> {
    let order = chain.recursion.order();
    let len = chain.costs.len();
    let clip = |x: u32| if x > budget { INF } else { x as u8 };
    let cost = |i: usize| chain.costs[i];
    let mut states: BTreeMap<(i64, i64, Mins), u128> = BTreeMap::new();
    if len < order {
        let count = chain.seeds[..len].iter().map(|r| r.clone().count() as u128).product();
        return Ok((count, 0));
    }
    match order {
        1 => {
            for k in chain.seeds[0].clone() {
                let mins = [0, clip(cost(0)), INF, INF];
                if mins[0] != INF {
                    *states.entry((0, k, mins)).or_default() += 1;
                }
            }
        }
        _ => {
            for k1 in chain.seeds[0].clone() {
                for k2 in chain.seeds[1].clone() {
                    let mut mins = [INF; 4];
                    for (labels, slot) in mins.iter_mut().enumerate() {
                        let c = (labels >> 1 & 1) as u32 * cost(0) + (labels & 1) as u32 * cost(1);
                        *slot = clip(c);
                    }
                    *states.entry((k1, k2, mins)).or_default() += 1;
                }
            }
        }
    }
    let mut max_branching = 0usize;
    for i in order..len {
        let mut next: BTreeMap<(i64, i64, Mins), u128> = BTreeMap::new();
        for (&(prev, cur, mins), &count) in &states {
            let Some(center) = chain.recursion.center(prev, cur) else {
                continue;
            };
            let mut branches = 0;
            for cand in int_range(center - loose, center + loose) {
                if chain.recursion == Recursion::Quadratic && cand == 0 {
                    continue;
                }
                let tight_ok = (cand as f64 - center).abs() <= tight;
                let mut out = [INF; 4];
                for l_cur in 0..2usize {
                    for l_next in 0..2usize {
                        let mut best = INF as u32;
                        let prev_labels: &[usize] = if order == 1 { &[0] } else { &[0, 1] };
                        for &l_prev in prev_labels {
                            let old = if order == 1 { mins[l_cur] } else { mins[l_prev << 1 | l_cur] };
                            if old == INF {
                                continue;
                            }
                            let all_good = l_cur == 0 && l_next == 0 && (order == 1 || l_prev == 0);
                            if all_good && !tight_ok {
                                continue;
                            }
                            best = best.min(old as u32 + l_next as u32 * cost(i));
                        }
                        let slot = if order == 1 { l_next } else { l_cur << 1 | l_next };
                        if order == 1 {
                            out[slot] = out[slot].min(clip(best));
                        } else {
                            out[slot] = clip(best);
                        }
                    }
                }
                if out.iter().all(|&x| x == INF) {
                    continue;
                }
                branches += 1;
                *next.entry((cur, cand, out)).or_default() += count;
            }
            max_branching = max_branching.max(branches);
        }
        if next.len() > state_budget {
            return Err(Error::BudgetExceeded {
                needed: next.len() as f64,
                budget: state_budget as u64,
            });
        }
        states = next;
    }
    // distinct sequences: merge states that share the same trailing values
    let total = states.values().copied().fold(0u128, |a, b| a.saturating_add(b));
    Ok((total, max_branching))
}

/// Counts the integer sequences `(K_n)` (and `(L_n)` where the argument uses
/// pairs) compatible with the near-integer condition at all but `δN` indices,
/// for each `N` in `ns`. Pairs are counted as the product of the two counts.
pub fn ek_count_sequences<S: Real>(spec: &CountSpec<S>, ns: &[u32]) -> Result<CountReport> {
    spec.kind.validate()?;
    if !(spec.c > S::zero() && spec.c < S::lit(0.5)) {
        return Err(Error::spec("c must lie in (0, 1/2)"));
    }
    if !(spec.delta >= S::zero() && spec.delta <= S::one()) {
        return Err(Error::spec("delta must lie in [0, 1]"));
    }
    if !(spec.slack > S::zero()) {
        return Err(Error::spec("slack must be positive"));
    }
    if let Some(&n) = ns.iter().find(|&&n| !(3..=MAX_COUNT_N).contains(&n)) {
        return Err(Error::spec(format!("N = {n} is outside 3..={MAX_COUNT_N}")));
    }
    let c = spec.c.as_f64();
    let s = spec.slack.as_f64();
    let mut rows = Vec::with_capacity(ns.len());
    let mut threshold = f64::INFINITY;
    for &n in ns {
        let budget = (spec.delta.as_f64() * n as f64 + 1e-9).floor() as u32;
        let mut count = 1u128;
        let mut branching = 0;
        for chain in chains(&spec.kind, n) {
            threshold = threshold.min(1.0 / (2.0 * chain.constant * s));
            let tight = chain.constant * c * s;
            let loose = chain.constant * 0.5 * s;
            let (k, b) = count_chain(&chain, tight, loose, budget, spec.state_budget)?;
            count = count.saturating_mul(k);
            branching = branching.max(b);
        }
        let log = if count > 0 { (count as f64).log2() / n as f64 } else { f64::NEG_INFINITY };
        rows.push(CountRow {
            n,
            count,
            log_count_over_n: log,
            max_branching: branching,
        });
    }
    Ok(CountReport {
        rows,
        uniqueness_threshold: threshold,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden() -> f64 {
        (1.0 + 5f64.sqrt()) / 2.0
    }

    #[test]
    fn golden_translations() {
        let theta = golden();
        // Lucas numbers: θ^n + (−1/θ)^n is an integer
        let (mut a, mut b) = (2i64, 1i64);
        for n in 1..=20 {
            let dist = (theta.powi(n) - b as f64).abs();
            assert!((dist - theta.powi(-n)).abs() < 1e-9);
            let c = a + b;
            a = b;
            b = c;
        }
        assert!((theta.powi(-4) - 0.1459).abs() < 1e-4);

        let spec = EkSpec::new(EkKind::Translations { lambda: 1.0 / theta, u: 1.0 }, 20, 0.15);
        let r = ek_badness(&spec).unwrap();
        assert!(r.badness >= 0.9, "{r:?}");
        assert_eq!(r.residuals.len(), 20);
        assert_eq!(r.residuals.iter().filter(|x| x.good).count() as u32, r.good_count);
    }

    #[test]
    fn generic_translations() {
        let spec = EkSpec::new(
            EkKind::Translations {
                lambda: 0.7,
                u: 2f64.sqrt(),
            },
            40,
            0.05,
        );
        assert!(ek_badness(&spec).unwrap().badness < 0.5);
    }

    #[test]
    fn projections_vanishing_cosine() {
        let spec = EkSpec::new(
            EkKind::Projections {
                theta: 2.0,
                alpha: std::f64::consts::FRAC_PI_2,
                beta: 0.0,
            },
            20,
            0.1,
        );
        let r = ek_badness(&spec).unwrap();
        assert!(r.badness >= 0.5);
        // at t = 1 the odd indices vanish and the even ones are integers
        assert_eq!(r.witness_t, 1.0);
    }

    #[test]
    fn convolution_k_convention() {
        assert_eq!(k_of(2.0f64, 3.0, 0), 0);
        for n in 1..30 {
            let k = k_of(2.0f64, 3.0, n);
            assert!(3f64.powi(k as i32) >= 2f64.powi(n as i32));
            assert!(3f64.powi(k as i32 - 1) < 2f64.powi(n as i32));
            let r = 2f64.powi(n as i32) / 3f64.powi(k as i32);
            assert!(r > 1.0 / 3.0 && r <= 1.0);
        }
        assert_eq!(k_of(2.0f64, 4.0, 6), 3);
        let spec = EkSpec::new(
            EkKind::Convolutions {
                theta1: 3.0,
                theta2: 4.0,
                u: 1.0,
                rescale: true,
            },
            12,
            0.1,
        );
        let r = ek_badness(&spec).unwrap();
        assert!(r.badness > 0.0 && r.badness <= 1.0);
    }

    #[test]
    fn invalid_specs() {
        let bad = [
            EkSpec::new(EkKind::Translations { lambda: 1.2, u: 1.0 }, 10, 0.1),
            EkSpec::new(EkKind::Translations { lambda: 0.5, u: 1.0 }, 2, 0.1),
            EkSpec::new(EkKind::Translations { lambda: 0.5, u: 1.0 }, 10, 0.6),
            EkSpec::new(
                EkKind::Projections {
                    theta: 2.0,
                    alpha: std::f64::consts::PI,
                    beta: 0.0,
                },
                10,
                0.1,
            ),
            EkSpec::new(
                EkKind::Convolutions {
                    theta1: 3.0,
                    theta2: 2.0,
                    u: 1.0,
                    rescale: false,
                },
                10,
                0.1,
            ),
            EkSpec::new(
                EkKind::Convolutions {
                    theta1: 2.0,
                    theta2: 3.0,
                    u: 0.0,
                    rescale: false,
                },
                10,
                0.1,
            ),
        ];
        for s in bad {
            assert!(matches!(ek_badness(&s), Err(Error::Spec(_))), "{s:?}");
        }
    }

    #[test]
    fn sweep_examples() {
        let base = EkSpec {
            t_grid: 512,
            ..EkSpec::new(EkKind::Translations { lambda: 0.6, u: 1.0 }, 30, 0.1)
        };
        let rows = ek_sweep(&base, SweepParam::Lambda, 0.5, 0.9, 81).unwrap();
        assert_eq!(rows.len(), 81);
        assert!(rows.windows(2).all(|w| w[0].parameter < w[1].parameter));
        let g = 1.0 / golden();
        let spike = rows
            .iter()
            .min_by(|a, b| (a.parameter - g).abs().partial_cmp(&(b.parameter - g).abs()).unwrap())
            .unwrap();
        let exact = ek_badness(&EkSpec {
            kind: EkKind::Translations { lambda: g, u: 1.0 },
            ..base
        })
        .unwrap();
        let median = {
            let mut b: Vec<f64> = rows.iter().map(|r| r.badness).collect();
            b.sort_by(|x, y| x.partial_cmp(y).unwrap());
            b[b.len() / 2]
        };
        assert!(exact.badness > median + 0.3, "{} vs {median} near {}", exact.badness, spike.parameter);

        let single = ek_sweep(&base, SweepParam::Lambda, 0.6, 0.6, 5).unwrap();
        assert_eq!(single.len(), 1);
        assert!(ek_sweep(&base, SweepParam::Theta1, 1.5, 2.0, 3).is_err());
    }

    /// Enumerates sequences by the loose windows and checks each against every
    /// labelling.
    fn brute_force(chain: &Chain, tight: f64, loose: f64, budget: u32) -> u128 {
        let order = chain.recursion.order();
        let len = chain.costs.len();
        let mut seqs: Vec<Vec<i64>> = match order {
            1 => chain.seeds[0].clone().map(|k| vec![k]).collect(),
            _ => chain.seeds[0]
                .clone()
                .flat_map(|a| chain.seeds[1].clone().map(move |b| vec![a, b]))
                .collect(),
        };
        let mut windows: Vec<Vec<(usize, bool)>> = vec![Vec::new(); seqs.len()];
        for i in order..len {
            let mut next = Vec::new();
            let mut next_w = Vec::new();
            for (s, w) in seqs.iter().zip(&windows) {
                let prev = if order == 1 { 0 } else { s[i - 2] };
                let Some(center) = chain.recursion.center(prev, s[i - 1]) else { continue };
                for cand in int_range(center - loose, center + loose) {
                    if chain.recursion == Recursion::Quadratic && cand == 0 {
                        continue;
                    }
                    let mut s2 = s.clone();
                    s2.push(cand);
                    let mut w2 = w.clone();
                    w2.push((i, (cand as f64 - center).abs() <= tight));
                    next.push(s2);
                    next_w.push(w2);
                }
            }
            seqs = next;
            windows = next_w;
        }
        let mut count = 0u128;
        for w in &windows {
            let ok = (0u32..1 << len).any(|mask| {
                let bad = |j: usize| mask >> j & 1 == 1;
                let cost: u32 = (0..len).filter(|&j| bad(j)).map(|j| chain.costs[j]).sum();
                cost <= budget
                    && w.iter().all(|&(i, tight_ok)| {
                        let all_good = (i - order..=i).all(|j| !bad(j));
                        !all_good || tight_ok
                    })
            });
            count += ok as u128;
        }
        count
    }

    #[test]
    fn dp_matches_brute_force() {
        let kinds = [
            EkKind::Convolutions {
                theta1: 2.0,
                theta2: 3.0,
                u: 1.0,
                rescale: true,
            },
            EkKind::Translations {
                lambda: 1.0 / golden(),
                u: 1.3,
            },
            EkKind::Projections {
                theta: 1.5,
                alpha: 1.0,
                beta: 0.0,
            },
        ];
        for kind in kinds {
            for n in [4u32, 6, 7] {
                for (c, budget) in [(0.1, 0u32), (0.1, 2), (0.2, 1), (0.3, 7)] {
                    for chain in chains(&kind, n) {
                        let tight = chain.constant * c;
                        let loose = chain.constant * 0.5;
                        let (dp, _) = count_chain(&chain, tight, loose, budget, 1 << 20).unwrap();
                        let bf = brute_force(&chain, tight, loose, budget);
                        assert_eq!(dp, bf, "{kind:?} n={n} c={c} budget={budget}");
                    }
                }
            }
        }
    }

    #[test]
    fn vacuous_budget_counts_all_branches() {
        let kind = EkKind::Convolutions {
            theta1: 2.0,
            theta2: 3.0,
            u: 1.0,
            rescale: true,
        };
        let spec = CountSpec::new(kind, 0.1, 1.0);
        let r = ek_count_sequences(&spec, &[5, 6, 7]).unwrap();
        for row in &r.rows {
            let mut expected = 1u128;
            for chain in chains(&kind, row.n) {
                expected *= brute_force(&chain, -1.0, chain.constant * 0.5, u32::MAX >> 1);
            }
            assert_eq!(row.count, expected);
        }
        assert!(r.rows[2].count > r.rows[1].count && r.rows[1].count > r.rows[0].count);
    }

    #[test]
    fn subthreshold_counts_stay_small() {
        let kind = EkKind::Convolutions {
            theta1: 2.0,
            theta2: 3.0,
            u: 1.0,
            rescale: true,
        };
        let spec = CountSpec::new(kind, 0.1, 0.0);
        let ns: Vec<u32> = (8..=15).collect();
        let r = ek_count_sequences(&spec, &ns).unwrap();
        assert!(0.1 < r.uniqueness_threshold);
        let first = r.rows[0].count;
        assert!(first > 0);
        assert!(r.rows.iter().all(|row| row.count <= first));

        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("N,count,log_count_over_N\n"));
        assert!(ek_count_sequences(&spec, &[30]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn grid_refinement_never_decreases(lambda in 0.5f64..0.9, u in 0.5f64..2.0, g in 8u32..64) {
            // every point of a grid with g−1 gaps lies on the grid with 2(g−1) gaps
            let coarse = EkSpec { t_grid: g, ..EkSpec::new(EkKind::Translations { lambda, u }, 15, 0.1) };
            let fine = EkSpec { t_grid: 2 * g - 1, ..coarse };
            let a = ek_badness(&coarse).unwrap();
            let b = ek_badness(&fine).unwrap();
            prop_assert!(b.badness >= a.badness);
        }

        #[test]
        fn residuals_in_range(x in -1e6f64..1e6) {
            let r = residual(x);
            prop_assert!((-0.5..0.5).contains(&r));
            prop_assert!(((x - r) - (x - r).round()).abs() < 1e-6);
        }
    }
}
