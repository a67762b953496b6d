//! Nonparametric summary statistics and global envelope tests.
//!
//! The estimators operate on a single rectangular observation window. Edge
//! effects are handled by translation correction for the pair statistics
//! (pair correlation, K and L) and by border correction for the
//! nearest-neighbour and empty-space distributions that make up J.
//!
//! Envelope testing follows the global rank construction: curves are ranked
//! pointwise among the joint set of observed and simulated curves, the
//! minimum pointwise rank is the curve's extreme rank, and ties between
//! extreme ranks are broken by comparing the full sorted rank vectors
//! (extreme rank lengths). Grid positions where any curve is undefined are
//! excluded from the comparison.

use crate::error::{Error, Result};
use crate::geometry::{PointPattern, Window};
use crate::theory::ln_gamma;

/// A summary statistic evaluated on a fixed grid of distances.
///
/// Undefined values (too few points, empty denominators) are stored as NaN
/// and skipped by the envelope machinery.
#[derive(Debug, Clone)]
pub struct SummaryCurve {
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
}

impl SummaryCurve {
    /// All-undefined curve on the given grid.
    pub fn new(radii: &[f64]) -> Self {
        SummaryCurve {
            radii: radii.to_vec(),
            values: vec![f64::NAN; radii.len()],
        }
    }
}

/// Volume of the unit ball in `dim` dimensions.
pub fn unit_ball_volume(dim: usize) -> f64 {
    let d = dim as f64;
    (d / 2.0 * std::f64::consts::PI.ln() - ln_gamma(d / 2.0 + 1.0)).exp()
}

/// Surface area of the unit sphere in `dim` dimensions.
pub fn unit_sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

/// Epanechnikov kernel with bandwidth `h`, integrating to one.
pub fn epanechnikov(u: f64, h: f64) -> f64 {
    let t = u / h;
    if t.abs() >= 1.0 {
        0.0
    } else {
        0.75 * (1.0 - t * t) / h
    }
}

fn validate_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidParameter("empty distance grid".into()));
    }
    if radii.iter().any(|r| !r.is_finite() || *r < 0.0) {
        return Err(Error::InvalidParameter(
            "distance grid must be finite and nonnegative".into(),
        ));
    }
    Ok(())
}

fn check_pattern(pattern: &PointPattern, window: &Window) -> Result<()> {
    if pattern.dim() != window.dim() {
        return Err(Error::Incompatible(format!(
            "pattern dimension {} vs window dimension {}",
            pattern.dim(),
            window.dim()
        )));
    }
    Ok(())
}

/// Grid of cells over the window used for range and nearest-neighbour
/// queries; cell edge lengths are at least the build scale.
struct CellGrid<'a> {
    pattern: &'a PointPattern,
    window: &'a Window,
    counts: Vec<usize>,
    cells: Vec<Vec<u32>>,
    min_cell: f64,
}

impl<'a> CellGrid<'a> {
    fn build(pattern: &'a PointPattern, window: &'a Window, scale: f64) -> Self {
        let dim = window.dim();
        let mut counts = Vec::with_capacity(dim);
        let mut min_cell = f64::INFINITY;
        for a in 0..dim {
            let side = window.side(a);
            let n = if scale > 0.0 {
                ((side / scale).floor() as usize).clamp(1, 64)
            } else {
                1
            };
            counts.push(n);
            min_cell = min_cell.min(side / n as f64);
        }
        let total: usize = counts.iter().product();
        let mut cells = vec![Vec::new(); total];
        for (i, p) in pattern.iter().enumerate() {
            let c = Self::cell_of(window, &counts, p);
            cells[c].push(i as u32);
        }
        CellGrid {
            pattern,
            window,
            counts,
            cells,
            min_cell,
        }
    }

    fn cell_of(window: &Window, counts: &[usize], p: &[f64]) -> usize {
        let mut idx = 0;
        for a in 0..counts.len() {
            let side = window.side(a);
            let rel = ((p[a] - window.lower()[a]) / side * counts[a] as f64) as isize;
            let rel = rel.clamp(0, counts[a] as isize - 1) as usize;
            idx = idx * counts[a] + rel;
        }
        idx
    }

    fn cell_coords(&self, p: &[f64]) -> Vec<isize> {
        (0..self.counts.len())
            .map(|a| {
                let side = self.window.side(a);
                let rel = ((p[a] - self.window.lower()[a]) / side * self.counts[a] as f64) as isize;
                rel.clamp(0, self.counts[a] as isize - 1)
            })
            .collect()
    }

    fn flat(&self, coords: &[isize]) -> Option<usize> {
        let mut idx = 0usize;
        for (a, &c) in coords.iter().enumerate() {
            if c < 0 || c >= self.counts[a] as isize {
                return None;
            }
            idx = idx * self.counts[a] + c as usize;
        }
        Some(idx)
    }

    /// Visits each unordered pair with separation at most `rmax` once.
    fn for_each_pair(&self, rmax: f64, mut f: impl FnMut(usize, usize, f64)) {
        let dim = self.counts.len();
        let reach: Vec<isize> = (0..dim)
            .map(|a| {
                let cell = self.window.side(a) / self.counts[a] as f64;
                (rmax / cell).ceil() as isize
            })
            .collect();
        let n = self.pattern.len();
        for i in 0..n {
            let pi = self.pattern.point(i);
            let home = self.cell_coords(pi);
            let mut offset = vec![-reach[0]; dim];
            for a in 1..dim {
                offset[a] = -reach[a];
            }
            'cells: loop {
                let coords: Vec<isize> =
                    (0..dim).map(|a| home[a] + offset[a]).collect();
                if let Some(flat) = self.flat(&coords) {
                    for &ju in &self.cells[flat] {
                        let j = ju as usize;
                        if j >= i {
                            continue;
                        }
                        let d = crate::geometry::distance(pi, self.pattern.point(j));
                        if d <= rmax {
                            f(i, j, d);
                        }
                    }
                }
                // Advance the mixed-radix offset counter.
                for a in (0..dim).rev() {
                    offset[a] += 1;
                    if offset[a] <= reach[a] {
                        continue 'cells;
                    }
                    offset[a] = -reach[a];
                }
                break;
            }
        }
    }

    /// Distance from `p` to the nearest pattern point, skipping index
    /// `skip` if given. Infinity when no eligible point exists.
    fn nearest_distance(&self, p: &[f64], skip: Option<usize>) -> f64 {
        let dim = self.counts.len();
        let home = self.cell_coords(p);
        let max_ring = *self.counts.iter().max().unwrap() as isize;
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            if best <= (ring as f64 - 1.0) * self.min_cell {
                break;
            }
            let mut offset = vec![-ring; dim];
            'cells: loop {
                if offset.iter().any(|o| o.abs() == ring) || ring == 0 {
                    let coords: Vec<isize> =
                        (0..dim).map(|a| home[a] + offset[a]).collect();
                    if let Some(flat) = self.flat(&coords) {
                        for &ju in &self.cells[flat] {
                            let j = ju as usize;
                            if skip == Some(j) {
                                continue;
                            }
                            let d = crate::geometry::distance(p, self.pattern.point(j));
                            best = best.min(d);
                        }
                    }
                }
                for a in (0..dim).rev() {
                    offset[a] += 1;
                    if offset[a] <= ring {
                        continue 'cells;
                    }
                    offset[a] = -ring;
                }
                break;
            }
        }
        best
    }
}

/// Translation-correction weight for a pair with separation vector `u`.
fn translation_weight(window: &Window, a: &[f64], b: &[f64]) -> f64 {
    let mut w = 1.0;
    for m in 0..window.dim() {
        w *= window.side(m) - (a[m] - b[m]).abs();
    }
    w
}

/// Raw kernel-smoothed pair sums for the pair correlation estimator:
/// `sum_{i != j} k_h(r - d_ij) / (sigma_d r^(d-1) W_t(x_i - x_j))`,
/// together with the pair count `n (n - 1)`.
fn pcf_pair_sums(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
    bandwidth: f64,
) -> (Vec<f64>, f64) {
    let dim = window.dim();
    let sphere = unit_sphere_area(dim);
    let rmax = radii.iter().cloned().fold(0.0, f64::max) + bandwidth;
    let grid = CellGrid::build(pattern, window, rmax);
    let mut sums = vec![0.0; radii.len()];
    // On a sorted grid each pair touches only the radii inside its kernel
    // support; an unsorted grid falls back to the full scan.
    let sorted = radii.windows(2).all(|w| w[0] <= w[1]);
    grid.for_each_pair(rmax, |i, j, d| {
        let w = translation_weight(window, pattern.point(i), pattern.point(j));
        if w <= 0.0 {
            return;
        }
        let (lo, hi) = if sorted {
            (
                radii.partition_point(|r| *r <= d - bandwidth),
                radii.partition_point(|r| *r < d + bandwidth),
            )
        } else {
            (0, radii.len())
        };
        for gi in lo..hi {
            let r = radii[gi];
            if r <= 0.0 {
                continue;
            }
            let k = epanechnikov(r - d, bandwidth);
            if k > 0.0 {
                // Factor 2: each unordered pair stands for both ordered ones.
                sums[gi] += 2.0 * k / (sphere * r.powi(dim as i32 - 1) * w);
            }
        }
    });
    let n = pattern.len() as f64;
    (sums, n * (n - 1.0))
}

/// Kernel estimate of the pair correlation function with translation edge
/// correction. The squared intensity is estimated by `n(n-1)/|W|^2`. Values
/// at `r = 0` and for patterns with fewer than two points are NaN.
pub fn empirical_pcf(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
    bandwidth: f64,
) -> Result<SummaryCurve> {
    pooled_pcf(std::slice::from_ref(pattern), window, radii, bandwidth)
}

/// Pair correlation pooled over replicate patterns observed in the same
/// window: the ratio of summed pair statistics to the summed pair counts,
/// which weights each replicate by its number of ordered pairs.
pub fn pooled_pcf(
    patterns: &[PointPattern],
    window: &Window,
    radii: &[f64],
    bandwidth: f64,
) -> Result<SummaryCurve> {
    validate_radii(radii)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if patterns.is_empty() {
        return Err(Error::InvalidParameter("no patterns to pool".into()));
    }
    for p in patterns {
        check_pattern(p, window)?;
    }
    let mut num = vec![0.0; radii.len()];
    let mut pairs = 0.0;
    for p in patterns {
        let (sums, np) = pcf_pair_sums(p, window, radii, bandwidth);
        for (a, b) in num.iter_mut().zip(sums) {
            *a += b;
        }
        pairs += np;
    }
    let mut curve = SummaryCurve::new(radii);
    if pairs > 0.0 {
        let vol = window.volume();
        for (gi, &r) in radii.iter().enumerate() {
            if r > 0.0 {
                curve.values[gi] = vol * vol * num[gi] / pairs;
            }
        }
    }
    Ok(curve)
}

/// Expected value of the kernel pair correlation estimate when the true
/// pair correlation is `g`: the estimator smooths `g` with the kernel and
/// tilts it by `(t/r)^(d-1)`, so envelopes of empirical curves should be
/// compared against this rather than against `g` itself.
pub fn smoothed_pcf_expectation(
    g: impl Fn(f64) -> f64,
    radii: &[f64],
    bandwidth: f64,
    dim: usize,
) -> SummaryCurve {
    let mut curve = SummaryCurve::new(radii);
    for (gi, &r) in radii.iter().enumerate() {
        if r <= 0.0 {
            continue;
        }
        let lo = (r - bandwidth).max(0.0);
        let hi = r + bandwidth;
        let n = 400;
        let step = (hi - lo) / n as f64;
        // Simpson's rule.
        let f = |t: f64| {
            if t <= 0.0 {
                0.0
            } else {
                epanechnikov(r - t, bandwidth) * (t / r).powi(dim as i32 - 1) * g(t)
            }
        };
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let t = lo + k as f64 * step;
            acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(t);
        }
        curve.values[gi] = acc * step / 3.0;
    }
    curve
}

/// Translation-corrected empirical K function transformed to the L scale,
/// `L(r) = (K(r) / omega_d)^(1/d)`; for a Poisson process `L(r) = r`.
pub fn l_function(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
) -> Result<SummaryCurve> {
    validate_radii(radii)?;
    check_pattern(pattern, window)?;
    let mut curve = SummaryCurve::new(radii);
    let n = pattern.len() as f64;
    if n < 2.0 {
        return Ok(curve);
    }
    let dim = window.dim();
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    let grid = CellGrid::build(pattern, window, rmax);
    // Sorted pair contributions let every K value come from one sweep.
    let mut pairs: Vec<(f64, f64)> = Vec::new();
    grid.for_each_pair(rmax, |i, j, d| {
        let w = translation_weight(window, pattern.point(i), pattern.point(j));
        if w > 0.0 {
            pairs.push((d, 2.0 / w));
        }
    });
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut order: Vec<usize> = (0..radii.len()).collect();
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let vol = window.volume();
    let ball = unit_ball_volume(dim);
    let mut acc = 0.0;
    let mut next = 0usize;
    for gi in order {
        let r = radii[gi];
        while next < pairs.len() && pairs[next].0 <= r {
            acc += pairs[next].1;
            next += 1;
        }
        let k_est = vol * vol * acc / (n * (n - 1.0));
        curve.values[gi] = (k_est / ball).powf(1.0 / dim as f64);
    }
    Ok(curve)
}

/// Border-corrected nearest-neighbour distance distribution: among points
/// farther than `r` from the boundary, the fraction whose nearest neighbour
/// lies within `r`. NaN when no point qualifies.
pub fn nearest_neighbour_cdf(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
) -> Result<SummaryCurve> {
    validate_radii(radii)?;
    check_pattern(pattern, window)?;
    let mut curve = SummaryCurve::new(radii);
    if pattern.len() < 2 {
        return Ok(curve);
    }
    let scale = window.side(0).min(window.side(1.min(window.dim() - 1))) / 16.0;
    let grid = CellGrid::build(pattern, window, scale);
    let info: Vec<(f64, f64)> = (0..pattern.len())
        .map(|i| {
            let p = pattern.point(i);
            (
                grid.nearest_distance(p, Some(i)),
                window.boundary_distance(p),
            )
        })
        .collect();
    for (gi, &r) in radii.iter().enumerate() {
        let mut hit = 0usize;
        let mut eligible = 0usize;
        for &(d, b) in &info {
            if b > r {
                eligible += 1;
                if d <= r {
                    hit += 1;
                }
            }
        }
        if eligible > 0 {
            curve.values[gi] = hit as f64 / eligible as f64;
        }
    }
    Ok(curve)
}

/// Border-corrected empty-space distribution estimated on a regular grid of
/// probe locations: among probes farther than `r` from the boundary, the
/// fraction within distance `r` of the pattern.
pub fn empty_space_cdf(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
) -> Result<SummaryCurve> {
    validate_radii(radii)?;
    check_pattern(pattern, window)?;
    let dim = window.dim();
    if dim > 3 {
        return Err(Error::InvalidParameter(
            "empty-space estimation supports dimension <= 3".into(),
        ));
    }
    let mut curve = SummaryCurve::new(radii);
    let min_side = (0..dim).map(|a| window.side(a)).fold(f64::INFINITY, f64::min);
    let spacing = min_side / 64.0;
    let counts: Vec<usize> = (0..dim)
        .map(|a| ((window.side(a) / spacing).round() as usize).max(1))
        .collect();
    let scale = min_side / 16.0;
    let grid = CellGrid::build(pattern, window, scale);
    let total: usize = counts.iter().product();
    let mut info = Vec::with_capacity(total);
    let mut probe = vec![0.0; dim];
    for flat in 0..total {
        let mut rest = flat;
        for a in (0..dim).rev() {
            let idx = rest % counts[a];
            rest /= counts[a];
            probe[a] = window.lower()[a] + (idx as f64 + 0.5) * window.side(a) / counts[a] as f64;
        }
        info.push((
            grid.nearest_distance(&probe, None),
            window.boundary_distance(&probe),
        ));
    }
    for (gi, &r) in radii.iter().enumerate() {
        let mut hit = 0usize;
        let mut eligible = 0usize;
        for &(d, b) in &info {
            if b > r {
                eligible += 1;
                if d <= r {
                    hit += 1;
                }
            }
        }
        if eligible > 0 {
            curve.values[gi] = hit as f64 / eligible as f64;
        }
    }
    Ok(curve)
}

/// `J(r) = (1 - G(r)) / (1 - F(r))` from the border-corrected estimates;
/// `J = 1` for Poisson, above one indicates regularity, below one
/// clustering. NaN once `F` reaches one.
pub fn j_function(
    pattern: &PointPattern,
    window: &Window,
    radii: &[f64],
) -> Result<SummaryCurve> {
    let g = nearest_neighbour_cdf(pattern, window, radii)?;
    let f = empty_space_cdf(pattern, window, radii)?;
    let mut curve = SummaryCurve::new(radii);
    for gi in 0..radii.len() {
        let gf = g.values[gi];
        let ff = f.values[gi];
        if gf.is_finite() && ff.is_finite() && ff < 1.0 {
            curve.values[gi] = (1.0 - gf) / (1.0 - ff);
        }
    }
    Ok(curve)
}

/// Outcome of a global rank envelope test at level `alpha`.
///
/// `lo` and `hi` are the envelope bounds (NaN where the grid was excluded);
/// the test rejects when the extreme-rank-length p-value is at most `alpha`.
/// Observed values lying exactly on a bound count as inside.
#[derive(Debug, Clone)]
pub struct RankEnvelope {
    pub radii: Vec<f64>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub observed: Vec<f64>,
    pub p_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

impl RankEnvelope {
    /// True if the observed curve dips strictly below the lower bound
    /// anywhere (the regular-pattern direction for L or the pair
    /// correlation).
    pub fn breaches_below(&self) -> bool {
        self.observed
            .iter()
            .zip(&self.lo)
            .any(|(o, l)| o.is_finite() && l.is_finite() && o < l)
    }

    /// True if the observed curve exceeds the upper bound anywhere.
    pub fn breaches_above(&self) -> bool {
        self.observed
            .iter()
            .zip(&self.hi)
            .any(|(o, h)| o.is_finite() && h.is_finite() && o > h)
    }
}

/// Global rank envelope test of the observed curve against simulated null
/// curves, all on the same distance grid.
///
/// The p-value is the fraction of curves (observed included) whose extreme
/// rank length is at most that of the observed curve; the envelope is the
/// `k`-th order statistic band with `k` the largest value whose exceedance
/// fraction stays within `alpha`.
pub fn global_rank_envelope(
    observed: &SummaryCurve,
    simulated: &[SummaryCurve],
    alpha: f64,
) -> Result<RankEnvelope> {
    if simulated.len() < 2 {
        return Err(Error::InvalidParameter(
            "envelope needs at least two simulated curves".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "envelope level must be in (0, 1), got {alpha}"
        )));
    }
    for s in simulated {
        if s.radii != observed.radii {
            return Err(Error::Incompatible(
                "envelope curves must share one distance grid".into(),
            ));
        }
    }
    let m = simulated.len() + 1;
    let grid_len = observed.radii.len();
    let value_at = |j: usize, g: usize| -> f64 {
        if j == 0 {
            observed.values[g]
        } else {
            simulated[j - 1].values[g]
        }
    };
    let usable: Vec<bool> = (0..grid_len)
        .map(|g| (0..m).all(|j| value_at(j, g).is_finite()))
        .collect();
    if !usable.iter().any(|&u| u) {
        return Err(Error::InvalidParameter(
            "no grid position has all curves defined".into(),
        ));
    }

    // Pointwise two-sided ranks: depth = min(#{<= v}, #{>= v}).
    let mut depths = vec![Vec::with_capacity(grid_len); m];
    let mut lo = vec![f64::NAN; grid_len];
    let mut hi = vec![f64::NAN; grid_len];
    for g in 0..grid_len {
        if !usable[g] {
            continue;
        }
        let mut sorted: Vec<f64> = (0..m).map(|j| value_at(j, g)).collect();
        sorted.sort_by(f64::total_cmp);
        for (j, depth_row) in depths.iter_mut().enumerate() {
            let v = value_at(j, g);
            let below = sorted.partition_point(|x| *x <= v);
            let above = m - sorted.partition_point(|x| *x < v);
            depth_row.push(below.min(above) as u32);
        }
    }

    // Extreme rank lengths: sorted depth vectors compared lexicographically.
    let erl: Vec<Vec<u32>> = depths
        .iter()
        .map(|row| {
            let mut v = row.clone();
            v.sort_unstable();
            v
        })
        .collect();
    let obs_erl = erl[0].clone();
    let more_extreme = erl.iter().filter(|e| **e <= obs_erl).count();
    let p_value = more_extreme as f64 / m as f64;

    // Band order: largest k whose breach fraction over the joint set stays
    // within alpha; the band itself is drawn from the simulations so the
    // observed curve can visibly cross it.
    let extreme_ranks: Vec<u32> = erl.iter().map(|e| e[0]).collect();
    let mut k_env = 1usize;
    loop {
        let k = k_env + 1;
        let breaches = extreme_ranks.iter().filter(|&&r| (r as usize) < k).count();
        if breaches as f64 / m as f64 <= alpha && k <= simulated.len() / 2 {
            k_env = k;
        } else {
            break;
        }
    }
    for g in 0..grid_len {
        if !usable[g] {
            continue;
        }
        let mut sims_sorted: Vec<f64> = simulated.iter().map(|s| s.values[g]).collect();
        sims_sorted.sort_by(f64::total_cmp);
        lo[g] = sims_sorted[k_env - 1];
        hi[g] = sims_sorted[sims_sorted.len() - k_env];
    }

    Ok(RankEnvelope {
        radii: observed.radii.clone(),
        lo,
        hi,
        observed: observed.values.clone(),
        p_value,
        alpha,
        reject: p_value <= alpha,
    })
}
