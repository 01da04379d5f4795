//! Certified dyadic discretization of self-similar measures.
//!
//! Every word `w` of length `h` carries mass `p_w` and an enclosure ball for
//! its cylinder. A cell's lower mass sums the words whose ball lies inside
//! the cell; its upper mass sums the words whose ball meets it. Cells are
//! half-open, `[k 2^{-n}, (k+1) 2^{-n})`, indexed by `k = ⌊x 2^n⌋`.

use std::io::Write;

use num_complex::Complex;
use rayon::prelude::*;
use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::ifs::{AmbientDim, HomogeneousIfs, Point, WeightVector, DEFAULT_WORD_BUDGET};
use crate::scalar::{fmt_real, xlog_inv, Real};

pub const DEFAULT_EXTRA_DEPTH: u32 = 4;

/// Deepest enumeration supported; also fixes the rounding slack so that
/// runs at different depths stay comparable.
pub const MAX_DEPTH: u32 = 64;

const BFS_SMALL_FRONTIER: usize = 1 << 16;
const BFS_MERGING_FRONTIER: usize = 1 << 21;
const DFS_CHUNK: usize = 256;
const DFS_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct HistogramOptions {
    pub extra_depth: u32,
    pub budget: u64,
}

impl Default for HistogramOptions {
    fn default() -> Self {
        HistogramOptions {
            extra_depth: DEFAULT_EXTRA_DEPTH,
            budget: DEFAULT_WORD_BUDGET,
        }
    }
}

/// One dyadic cell with its mass bounds. `index[1]` is zero on the line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell<S> {
    pub index: [i64; 2],
    pub lower: S,
    pub upper: S,
}

/// Sparse per-cell mass bounds at one dyadic level.
#[derive(Clone, Debug, PartialEq)]
pub struct DyadicHistogram<S> {
    level: u32,
    dim: AmbientDim,
    depth: u32,
    box_lo: [i64; 2],
    box_hi: [i64; 2],
    cells: Vec<Cell<S>>,
}

impl<S: Real> DyadicHistogram<S> {
    /// Builds a histogram from explicit cells. Cells are sorted by index;
    /// duplicate indices are rejected.
    pub fn from_cells(level: u32, dim: AmbientDim, depth: u32, mut cells: Vec<Cell<S>>) -> Result<Self> {
        cells.sort_by_key(|c| c.index);
        for pair in cells.windows(2) {
            if pair[0].index == pair[1].index {
                return Err(Error::spec(format!("duplicate cell {:?}", pair[0].index)));
            }
        }
        for c in &cells {
            if !(c.lower >= S::zero() && c.lower <= c.upper && c.upper <= S::one()) {
                return Err(Error::spec(format!(
                    "cell {:?} has bounds [{}, {}]",
                    c.index, c.lower, c.upper
                )));
            }
            if dim == AmbientDim::One && c.index[1] != 0 {
                return Err(Error::spec("one-dimensional cells must have index[1] = 0"));
            }
        }
        let mut box_lo = [i64::MAX, i64::MAX];
        let mut box_hi = [i64::MIN, i64::MIN];
        for c in &cells {
            for k in 0..2 {
                box_lo[k] = box_lo[k].min(c.index[k]);
                box_hi[k] = box_hi[k].max(c.index[k]);
            }
        }
        if cells.is_empty() {
            box_lo = [0, 0];
            box_hi = [0, 0];
        }
        Ok(DyadicHistogram {
            level,
            dim,
            depth,
            box_lo,
            box_hi,
            cells,
        })
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn dim(&self) -> AmbientDim {
        self.dim
    }

    /// Word length used for the enumeration.
    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Inclusive cell index range of the dyadic bounding box.
    pub fn bounding_box(&self) -> ([i64; 2], [i64; 2]) {
        (self.box_lo, self.box_hi)
    }

    pub fn cells(&self) -> &[Cell<S>] {
        &self.cells
    }

    pub fn cell_width(&self) -> S {
        S::lit(0.5).powi(self.level as i32)
    }

    /// Left (lower-left in the plane) corner of a cell.
    pub fn cell_left(&self, index: [i64; 2]) -> [S; 2] {
        let w = self.cell_width();
        [S::lit(index[0] as f64) * w, S::lit(index[1] as f64) * w]
    }

    pub fn get(&self, index: [i64; 2]) -> Option<&Cell<S>> {
        self.cells
            .binary_search_by_key(&index, |c| c.index)
            .ok()
            .map(|i| &self.cells[i])
    }

    pub fn total_lower(&self) -> S {
        self.cells.iter().map(|c| c.lower).sum()
    }

    pub fn total_upper(&self) -> S {
        self.cells.iter().map(|c| c.upper).sum()
    }

    /// `Σ (upper − lower)`.
    pub fn gap(&self) -> S {
        self.cells.iter().map(|c| c.upper - c.lower).sum()
    }

    fn sum_slack(&self) -> S {
        S::from_count(self.cells.len() + 4) * S::epsilon()
    }

    /// Enclosure `[Σ lower^q, Σ upper^q]` of the moment sum `S_{n,q}` for
    /// `q > 0`, `q ≠ 1`.
    pub fn moment_sums(&self, q: S) -> Result<(S, S)> {
        if q == S::one() {
            return Err(Error::spec("q = 1 has no moment sum; use entropy_sum"));
        }
        if !(q > S::zero()) || !q.is_finite() {
            return Err(Error::spec(format!("q = {q} must be positive")));
        }
        let lo: S = self.cells.iter().map(|c| c.lower.powf(q)).sum();
        let hi: S = self.cells.iter().map(|c| c.upper.powf(q)).sum();
        let rel = self.sum_slack();
        Ok((lo * (S::one() - rel), hi * (S::one() + rel)))
    }

    /// Enclosure of `H_n = Σ μ(I) log2(1/μ(I))` from the interval hull of
    /// `x log2(1/x)` on each cell's bounds.
    pub fn entropy_sum(&self) -> (S, S) {
        let peak = S::one() / S::E();
        let fpeak = xlog_inv(peak);
        let mut lo = S::zero();
        let mut hi = S::zero();
        for c in &self.cells {
            let a = xlog_inv(c.lower);
            let b = xlog_inv(c.upper);
            lo = lo + a.min(b);
            hi = hi + if c.lower <= peak && peak <= c.upper { fpeak } else { a.max(b) };
        }
        let rel = self.sum_slack();
        (lo * (S::one() - rel), hi * (S::one() + rel))
    }

    /// CSV with columns `cell_index, cell_left_coordinate, lower_mass,
    /// upper_mass` (both coordinates in the plane).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match self.dim {
            AmbientDim::One => {
                w.write_record(["cell_index", "cell_left_coordinate", "lower_mass", "upper_mass"])?;
                for c in &self.cells {
                    let left = self.cell_left(c.index);
                    w.write_record([
                        c.index[0].to_string(),
                        fmt_real(left[0]),
                        fmt_real(c.lower),
                        fmt_real(c.upper),
                    ])?;
                }
            }
            AmbientDim::Two => {
                w.write_record([
                    "cell_index_x",
                    "cell_index_y",
                    "cell_left_x",
                    "cell_left_y",
                    "lower_mass",
                    "upper_mass",
                ])?;
                for c in &self.cells {
                    let left = self.cell_left(c.index);
                    w.write_record([
                        c.index[0].to_string(),
                        c.index[1].to_string(),
                        fmt_real(left[0]),
                        fmt_real(left[1]),
                        fmt_real(c.lower),
                        fmt_real(c.upper),
                    ])?;
                }
            }
        }
        w.flush().map_err(|source| Error::Io {
            path: "<csv>".into(),
            source,
        })?;
        Ok(())
    }
}

/// Smallest `h ≥ 0` with `r^{h+1} ≤ 2^{-n} < r^h`.
pub fn depth_for_level<S: Real>(ratio: S, n: u32) -> u32 {
    let l = (1.0 / ratio.as_f64()).log2();
    let n = n as f64;
    let mut h = ((n / l).ceil() - 1.0).max(0.0) as u32;
    while (h as f64 + 1.0) * l < n {
        h += 1;
    }
    while h > 0 && h as f64 * l >= n {
        h -= 1;
    }
    h
}

/// Histogram of `μ(T, a, p)` at level `n` using depth `h(n) + extra_depth`.
pub fn histogram<S: Real>(ifs: &HomogeneousIfs<S>, p: &WeightVector<S>, n: u32, extra_depth: u32) -> Result<DyadicHistogram<S>> {
    let opts = HistogramOptions {
        extra_depth,
        ..HistogramOptions::default()
    };
    Ok(histograms(ifs, p, &[n], &opts)?.pop().expect("one level"))
}

/// Histograms at several levels from one enumeration; each level is binned
/// at its own depth `h(n) + extra_depth`.
pub fn histograms<S: Real>(
    ifs: &HomogeneousIfs<S>,
    p: &WeightVector<S>,
    levels: &[u32],
    opts: &HistogramOptions,
) -> Result<Vec<DyadicHistogram<S>>> {
    let targets = levels
        .iter()
        .map(|&n| Target {
            level: n,
            depth: depth_for_level(ifs.ratio(), n) + opts.extra_depth,
        })
        .collect::<Vec<_>>();
    Engine::new(ifs, p, targets, Coordinate::Native, opts.budget)?.run()
}

/// Histogram at level `n` with a caller-chosen depth, at least `h(n)`.
pub fn histogram_with_depth<S: Real>(
    ifs: &HomogeneousIfs<S>,
    p: &WeightVector<S>,
    n: u32,
    depth: u32,
    budget: u64,
) -> Result<DyadicHistogram<S>> {
    let min = depth_for_level(ifs.ratio(), n);
    if depth < min {
        return Err(Error::spec(format!("depth {depth} is below the minimal depth {min} for level {n}")));
    }
    let targets = vec![Target { level: n, depth }];
    Ok(Engine::new(ifs, p, targets, Coordinate::Native, budget)?.run()?.pop().expect("one level"))
}

/// Histograms of the projection `x ↦ ⟨x, (cos β, sin β)⟩` of a planar
/// measure, binned straight from the word enclosures. Works for every
/// rotation, including those whose projection is not self-similar.
pub fn histogram_pushforward<S: Real>(
    ifs: &HomogeneousIfs<S>,
    p: &WeightVector<S>,
    beta: S,
    levels: &[u32],
    opts: &HistogramOptions,
) -> Result<Vec<DyadicHistogram<S>>> {
    if ifs.dim() != AmbientDim::Two {
        return Err(Error::spec("pushforward needs a planar system"));
    }
    let targets = levels
        .iter()
        .map(|&n| Target {
            level: n,
            depth: depth_for_level(ifs.ratio(), n) + opts.extra_depth,
        })
        .collect::<Vec<_>>();
    let omega = Complex::new(beta.cos(), beta.sin());
    Engine::new(ifs, p, targets, Coordinate::Line(omega), opts.budget)?.run()
}

#[derive(Clone, Copy, Debug)]
struct Target {
    level: u32,
    depth: u32,
}

#[derive(Clone, Copy, Debug)]
enum Coordinate<S> {
    Native,
    /// Project onto the line spanned by this unit vector.
    Line(Point<S>),
}

#[derive(Clone, Copy, Debug, Default)]
struct AccCell {
    lower: f64,
    upper: f64,
    terms: u64,
}

type Acc = FxHashMap<[i64; 2], AccCell>;

#[derive(Clone, Copy, Debug)]
struct Node<S> {
    c: Point<S>,
    mass: f64,
}

struct Engine<'a, S> {
    ifs: &'a HomogeneousIfs<S>,
    weights: Vec<f64>,
    targets: Vec<Target>,
    /// Target indices binned at each depth.
    by_depth: Vec<Vec<usize>>,
    coordinate: Coordinate<S>,
    out_dim: AmbientDim,
    budget: u64,
    max_depth: u32,
    powers: Vec<Point<S>>,
    shifts: Vec<Point<S>>,
    radii: Vec<S>,
    quantum: f64,
    ball_center: Point<S>,
    ball_radius: S,
}

impl<'a, S: Real> Engine<'a, S> {
    fn new(
        ifs: &'a HomogeneousIfs<S>,
        p: &WeightVector<S>,
        targets: Vec<Target>,
        coordinate: Coordinate<S>,
        budget: u64,
    ) -> Result<Self> {
        if p.len() != ifs.maps() {
            return Err(Error::spec(format!("{} weights for {} maps", p.len(), ifs.maps())));
        }
        if targets.is_empty() {
            return Err(Error::spec("no levels requested"));
        }
        if targets.iter().any(|t| t.level == 0) {
            return Err(Error::spec("levels start at 1"));
        }
        let max_depth = targets.iter().map(|t| t.depth).max().unwrap_or(0);
        if max_depth > MAX_DEPTH {
            return Err(Error::spec(format!("depth {max_depth} exceeds {MAX_DEPTH}")));
        }
        let ball = ifs.bounding_ball();
        let extent = ball.center.norm() + ball.radius;
        let max_level = targets.iter().map(|t| t.level).max().unwrap_or(1);
        let limit = 2f64.powi(S::mantissa_bits() as i32 - 3);
        if extent.as_f64() * 2f64.powi(max_level as i32) >= limit {
            return Err(Error::Precision(format!(
                "level {max_level} is too fine for an attractor of extent {extent:e}"
            )));
        }

        let lambda = ifs.map().multiplier();
        let mut powers = Vec::with_capacity(max_depth as usize + 1);
        let mut pw = Complex::new(S::one(), S::zero());
        for _ in 0..=max_depth {
            powers.push(pw);
            pw = pw * lambda;
        }
        let shifts = powers.iter().map(|&l| l * ball.center).collect::<Vec<_>>();

        let r = ifs.ratio();
        let scale = extent + ifs.max_translation_norm() / (S::one() - r);
        let quantum = 2f64.powi(-(max_level as i32 + 40));
        let slack = S::lit(64.0 * (MAX_DEPTH as f64 + 1.0)) * S::epsilon() * scale
            + S::lit(quantum * (MAX_DEPTH as f64 + 1.0));
        let radii = (0..=max_depth)
            .map(|d| r.powi(d as i32) * ball.radius + slack)
            .collect();

        let mut by_depth = vec![Vec::new(); max_depth as usize + 1];
        for (i, t) in targets.iter().enumerate() {
            by_depth[t.depth as usize].push(i);
        }
        let out_dim = match coordinate {
            Coordinate::Native => ifs.dim(),
            Coordinate::Line(_) => AmbientDim::One,
        };
        Ok(Engine {
            ifs,
            weights: p.as_slice().iter().map(|w| w.as_f64()).collect(),
            targets,
            by_depth,
            coordinate,
            out_dim,
            budget,
            max_depth,
            powers,
            shifts,
            radii,
            quantum,
            ball_center: ball.center,
            ball_radius: ball.radius,
        })
    }

    fn key(&self, c: Point<S>) -> (i128, i128) {
        let q = self.quantum;
        ((c.re.as_f64() / q).round() as i128, (c.im.as_f64() / q).round() as i128)
    }

    /// Children of `nodes` at depth `d + 1`, with exact duplicates merged.
    fn expand_merge(&self, nodes: &[Node<S>], d: u32) -> Vec<Node<S>> {
        let pw = self.powers[d as usize];
        let mut keyed: Vec<((i128, i128), Node<S>)> = Vec::with_capacity(nodes.len() * self.ifs.maps());
        for node in nodes {
            for (a, &w) in self.ifs.translations().iter().zip(&self.weights) {
                let c = node.c + pw * a;
                keyed.push((self.key(c), Node { c, mass: node.mass * w }));
            }
        }
        keyed.sort_by_key(|(k, _)| *k);
        let mut out: Vec<Node<S>> = Vec::with_capacity(keyed.len());
        let mut last = None;
        for (k, node) in keyed {
            if last == Some(k) {
                out.last_mut().expect("nonempty").mass += node.mass;
            } else {
                out.push(node);
                last = Some(k);
            }
        }
        out
    }

    fn bin(&self, acc: &mut Acc, target: &Target, d: u32, node: &Node<S>) {
        let center = node.c + self.shifts[d as usize];
        let rho = self.radii[d as usize];
        let scale = S::lit(2f64.powi(target.level as i32));
        let floor = |x: S| (x * scale).floor().to_i64().unwrap_or(0);
        let mut add = |index: [i64; 2], inside: bool| {
            let cell = acc.entry(index).or_default();
            cell.upper += node.mass;
            if inside {
                cell.lower += node.mass;
            }
            cell.terms += 1;
        };
        let (x, y) = match (self.coordinate, self.out_dim) {
            (Coordinate::Line(omega), _) => (center.re * omega.re + center.im * omega.im, S::zero()),
            (Coordinate::Native, _) => (center.re, center.im),
        };
        let (x0, x1) = (floor(x - rho), floor(x + rho));
        match self.out_dim {
            AmbientDim::One => {
                for k in x0..=x1 {
                    add([k, 0], x0 == x1);
                }
            }
            AmbientDim::Two => {
                let (y0, y1) = (floor(y - rho), floor(y + rho));
                let single = x0 == x1 && y0 == y1;
                let w = S::one() / scale;
                let rho2 = rho * rho * S::lit(1.0 + 1e-6);
                for i in x0..=x1 {
                    let xl = S::lit(i as f64) * w;
                    let dx = (xl - x).max(x - (xl + w)).max(S::zero());
                    for j in y0..=y1 {
                        let yl = S::lit(j as f64) * w;
                        let dy = (yl - y).max(y - (yl + w)).max(S::zero());
                        if single || dx * dx + dy * dy <= rho2 {
                            add([i, j], single);
                        }
                    }
                }
            }
        }
    }

    fn bin_all(&self, accs: &mut [Acc], nodes: &[Node<S>], d: u32) {
        for &ti in &self.by_depth[d as usize] {
            let target = self.targets[ti];
            for node in nodes {
                self.bin(&mut accs[ti], &target, d, node);
            }
        }
    }

    fn dfs(&self, accs: &mut [Acc], node: Node<S>, d: u32) {
        let pw = self.powers[d as usize];
        for (a, &w) in self.ifs.translations().iter().zip(&self.weights) {
            let child = Node {
                c: node.c + pw * a,
                mass: node.mass * w,
            };
            for &ti in &self.by_depth[d as usize + 1] {
                let target = self.targets[ti];
                self.bin(&mut accs[ti], &target, d + 1, &child);
            }
            if d + 1 < self.max_depth {
                self.dfs(accs, child, d + 1);
            }
        }
    }

    fn run(self) -> Result<Vec<DyadicHistogram<S>>> {
        let m = self.ifs.maps();
        let mut accs: Vec<Acc> = vec![Acc::default(); self.targets.len()];
        let mut frontier = vec![Node {
            c: Complex::new(S::zero(), S::zero()),
            mass: 1.0,
        }];
        let mut d = 0u32;
        self.bin_all(&mut accs, &frontier, 0);
        let mut merging = true;
        while d < self.max_depth {
            let keep_bfs = frontier.len() <= BFS_SMALL_FRONTIER || (merging && frontier.len() <= BFS_MERGING_FRONTIER);
            if !keep_bfs {
                break;
            }
            let raw = frontier.len() as f64 * m as f64;
            if raw > self.budget as f64 {
                return Err(Error::BudgetExceeded {
                    needed: raw,
                    budget: self.budget,
                });
            }
            let next = self.expand_merge(&frontier, d);
            merging = (next.len() as f64) <= 0.75 * raw;
            frontier = next;
            d += 1;
            self.bin_all(&mut accs, &frontier, d);
        }

        if d < self.max_depth {
            let needed = frontier.len() as f64 * (m as f64).powi((self.max_depth - d) as i32);
            if needed > self.budget as f64 {
                return Err(Error::BudgetExceeded {
                    needed,
                    budget: self.budget,
                });
            }
            let chunks: Vec<&[Node<S>]> = frontier.chunks(DFS_CHUNK).collect();
            for batch in chunks.chunks(DFS_BATCH) {
                let partial: Vec<Vec<Acc>> = batch
                    .par_iter()
                    .map(|chunk| {
                        let mut local = vec![Acc::default(); self.targets.len()];
                        for &node in chunk.iter() {
                            self.dfs(&mut local, node, d);
                        }
                        local
                    })
                    .collect();
                for local in partial {
                    for (global, part) in accs.iter_mut().zip(local) {
                        let mut entries: Vec<_> = part.into_iter().collect();
                        entries.sort_by_key(|(k, _)| *k);
                        for (k, v) in entries {
                            let cell = global.entry(k).or_default();
                            cell.lower += v.lower;
                            cell.upper += v.upper;
                            cell.terms += v.terms;
                        }
                    }
                }
            }
        }

        let eps64 = f64::EPSILON;
        let eps = S::epsilon();
        let mut out = Vec::with_capacity(self.targets.len());
        for (target, acc) in self.targets.iter().zip(accs) {
            let mut entries: Vec<_> = acc.into_iter().collect();
            entries.sort_by_key(|(k, _)| *k);
            let cells = entries
                .into_iter()
                .map(|(index, v)| {
                    let rel = (target.depth as f64 + 2.0 + v.terms as f64) * eps64;
                    let lower = S::lit((v.lower * (1.0 - rel)).max(0.0)) * (S::one() - eps);
                    let upper = (S::lit(v.upper * (1.0 + rel)) * (S::one() + eps)).min(S::one());
                    Cell {
                        index,
                        lower: lower.min(upper),
                        upper,
                    }
                })
                .collect::<Vec<_>>();
            let scale = S::lit(2f64.powi(target.level as i32));
            let (cx, cy, rad) = match self.coordinate {
                Coordinate::Native => (self.ball_center.re, self.ball_center.im, self.ball_radius),
                Coordinate::Line(o) => (
                    self.ball_center.re * o.re + self.ball_center.im * o.im,
                    S::zero(),
                    self.ball_radius,
                ),
            };
            let fl = |x: S| (x * scale).floor().to_i64().unwrap_or(0);
            let (box_lo, box_hi) = match self.out_dim {
                AmbientDim::One => ([fl(cx - rad), 0], [fl(cx + rad), 0]),
                AmbientDim::Two => ([fl(cx - rad), fl(cy - rad)], [fl(cx + rad), fl(cy + rad)]),
            };
            out.push(DyadicHistogram {
                level: target.level,
                dim: self.out_dim,
                depth: target.depth,
                box_lo,
                box_hi,
                cells,
            });
        }
        Ok(out)
    }
}
