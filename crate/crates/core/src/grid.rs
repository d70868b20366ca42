//! Discrete PHD and PDD maps over the positional marginal.

use ndarray::Array2;

use crate::association::hungarian;
use crate::error::{Error, Result};
use crate::gm::{TargetSet, TargetTuple, UNLABELLED};
use crate::scalar::{Mat2, Mat4, Real, Vec2, Vec4};

/// Regular grid of square cells of side `sampling_period` pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec<T: Real> {
    pub origin: Vec2<T>,
    pub extent: Vec2<T>,
    pub sampling_period: T,
    pub rows: usize,
    pub cols: usize,
}

impl<T: Real> GridSpec<T> {
    /// `extent` is `(width, height)` in pixels; rows follow the y axis.
    pub fn new(origin: Vec2<T>, extent: Vec2<T>, sampling_period: T) -> Result<Self> {
        if !(sampling_period > T::zero()) {
            return Err(Error::InvalidGrid(format!("sampling period {sampling_period}")));
        }
        let cols = (extent[0] / sampling_period).ceil().as_f64();
        let rows = (extent[1] / sampling_period).ceil().as_f64();
        if !(rows >= 4.0 && cols >= 4.0) {
            return Err(Error::InvalidGrid(format!("{rows} x {cols} cells, need at least 4 x 4")));
        }
        Ok(Self { origin, extent, sampling_period, rows: rows as usize, cols: cols as usize })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn cell_area(&self) -> T {
        self.sampling_period * self.sampling_period
    }

    pub fn cell_center(&self, row: usize, col: usize) -> Vec2<T> {
        let half = T::lit(0.5);
        Vec2::new(
            self.origin[0] + (T::from_count(col) + half) * self.sampling_period,
            self.origin[1] + (T::from_count(row) + half) * self.sampling_period,
        )
    }

    pub fn zeros(&self) -> Array2<T> {
        Array2::zeros(self.shape())
    }

    fn check_shape(&self, a: &Array2<T>, what: &str) -> Result<()> {
        if a.dim() != self.shape() {
            return Err(Error::ShapeMismatch(format!("{what} is {:?}, grid is {:?}", a.dim(), self.shape())));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhdMap<T: Real> {
    pub grid: GridSpec<T>,
    pub values: Array2<T>,
    pub frame: u32,
}

impl<T: Real> PhdMap<T> {
    pub fn zeros(grid: GridSpec<T>, frame: u32) -> Self {
        let values = grid.zeros();
        Self { grid, values, frame }
    }

    /// Cell sum times cell area.
    pub fn mass(&self) -> T {
        self.values.sum() * self.grid.cell_area()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PddMap<T: Real> {
    pub grid: GridSpec<T>,
    pub values: Array2<T>,
    pub frame_pair: (u32, u32),
}

impl<T: Real> PddMap<T> {
    pub fn mass(&self) -> T {
        self.values.sum() * self.grid.cell_area()
    }
}

/// Renders the positional marginal of `set` as per-cell average density.
///
/// Each cell is integrated with an `s x s` midpoint rule, `s` chosen from the
/// narrowest component so a Gaussian much smaller than a cell still keeps its
/// mass. When every standard deviation is at least one cell, `s = 1` and the
/// cell holds the density at its center. Components only touch cells within
/// five marginal standard deviations of their mean.
pub fn render_phd<T: Real>(set: &TargetSet<T>, grid: &GridSpec<T>) -> Result<PhdMap<T>> {
    let mut map = PhdMap::zeros(grid.clone(), set.frame);
    let ts = grid.sampling_period;
    let five = T::lit(5.0);
    for t in set.iter() {
        if t.weight == T::zero() {
            continue;
        }
        let cov = t.position_covariance();
        let det = cov.determinant();
        let inv = match cov.try_inverse() {
            Some(inv) if det > T::zero() => inv,
            _ => return Err(Error::DegenerateCovariance),
        };
        let norm = t.weight / (T::two_pi() * det.sqrt());
        let lambda_min = cov.symmetric_eigenvalues().min();
        if !(lambda_min > T::zero()) {
            return Err(Error::DegenerateCovariance);
        }
        let sub = (ts / lambda_min.sqrt()).ceil().as_f64().clamp(1.0, 16.0) as usize;
        let sub_t = T::from_count(sub);
        let step = ts / sub_t;
        let inv_samples = T::one() / (sub_t * sub_t);

        let m = t.position();
        let (sx, sy) = (cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt());
        let span = |lo: T, hi: T, origin: T, n: usize| -> Option<(usize, usize)> {
            let a = ((lo - origin) / ts).floor().as_f64();
            let b = ((hi - origin) / ts).floor().as_f64();
            if b < 0.0 || a >= n as f64 {
                return None;
            }
            Some((a.max(0.0) as usize, (b as usize).min(n - 1)))
        };
        let Some((c0, c1)) = span(m[0] - five * sx, m[0] + five * sx, grid.origin[0], grid.cols) else {
            continue;
        };
        let Some((r0, r1)) = span(m[1] - five * sy, m[1] + five * sy, grid.origin[1], grid.rows) else {
            continue;
        };
        let half = T::lit(0.5);
        for r in r0..=r1 {
            let y0 = grid.origin[1] + T::from_count(r) * ts;
            for c in c0..=c1 {
                let x0 = grid.origin[0] + T::from_count(c) * ts;
                let mut acc = T::zero();
                for a in 0..sub {
                    let dy = y0 + (T::from_count(a) + half) * step - m[1];
                    for b in 0..sub {
                        let dx = x0 + (T::from_count(b) + half) * step - m[0];
                        let q = inv[(0, 0)] * dx * dx + (inv[(0, 1)] + inv[(1, 0)]) * dx * dy + inv[(1, 1)] * dy * dy;
                        acc += (-q * half).exp();
                    }
                }
                map.values[(r, c)] += norm * acc * inv_samples;
            }
        }
    }
    Ok(map)
}

/// `current - previous` cell by cell.
pub fn pdd<T: Real>(current: &PhdMap<T>, previous: &PhdMap<T>) -> Result<PddMap<T>> {
    if current.grid != previous.grid {
        return Err(Error::GridMismatch(format!(
            "frames {} and {} use different grids",
            previous.frame, current.frame
        )));
    }
    Ok(PddMap {
        grid: current.grid.clone(),
        values: &current.values - &previous.values,
        frame_pair: (previous.frame, current.frame),
    })
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) * T::lit(0.5)
    }
}

/// Turns a predicted PDD into the predicted PHD `v_{k|k-1}`.
///
/// Adds `raw` to `prev_phd`, overwrites the `border`-cell frame with the
/// interior median, clamps negatives and rescales to `target_mass`.
pub fn postprocess_prediction<T: Real>(
    raw: &Array2<T>,
    grid: &GridSpec<T>,
    prev_phd: &PhdMap<T>,
    border: usize,
    target_mass: T,
) -> Result<PhdMap<T>> {
    grid.check_shape(raw, "prediction")?;
    if prev_phd.grid != *grid {
        return Err(Error::GridMismatch("previous PHD map".into()));
    }
    if border < 1 || 2 * border >= grid.rows.min(grid.cols) {
        return Err(Error::InvalidGrid(format!("border {border} for a {} x {} grid", grid.rows, grid.cols)));
    }
    let mut v = raw + &prev_phd.values;
    let (rows, cols) = grid.shape();
    let inside = |r: usize, c: usize| r >= border && r < rows - border && c >= border && c < cols - border;
    let interior: Vec<T> =
        v.indexed_iter().filter(|((r, c), _)| inside(*r, *c)).map(|(_, x)| *x).collect();
    let med = median(interior);
    for ((r, c), x) in v.indexed_iter_mut() {
        if !inside(r, c) {
            *x = med;
        }
        if !(*x > T::zero()) {
            *x = T::zero();
        }
    }
    let mass = v.sum() * grid.cell_area();
    if target_mass > T::zero() {
        if !(mass > T::zero()) {
            return Err(Error::DegeneratePrediction { expected: target_mass.as_f64() });
        }
        let scale = target_mass / mass;
        v.mapv_inplace(|x| x * scale);
    } else {
        v.fill(T::zero());
    }
    Ok(PhdMap { grid: grid.clone(), values: v, frame: prev_phd.frame })
}

#[derive(Clone, Debug, PartialEq)]
pub struct Peak<T: Real> {
    /// Centroid of the 3x3 neighbourhood, in pixels.
    pub position: Vec2<T>,
    /// Map value at the peak cell.
    pub value: T,
    /// Mass of the 3x3 neighbourhood.
    pub window_mass: T,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Peaks<T: Real> {
    pub peaks: Vec<Peak<T>>,
    /// Fewer peaks than requested were found.
    pub underfull: bool,
}

/// Up to `count` local maxima, highest first, at least `min_separation` apart.
///
/// A cell is a maximum when it is positive, strictly above neighbours that
/// precede it in row-major order and not below the ones that follow, so a
/// plateau yields its first cell.
pub fn extract_peaks<T: Real>(map: &PhdMap<T>, count: usize, min_separation: T) -> Peaks<T> {
    if count == 0 {
        return Peaks::default();
    }
    let v = &map.values;
    let (rows, cols) = v.dim();
    let grid = &map.grid;
    let mut maxima = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let x = v[(r, c)];
            if !(x > T::zero()) {
                continue;
            }
            let mut is_max = true;
            'nb: for dr in -1isize..=1 {
                for dc in -1isize..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (rr, cc) = (r as isize + dr, c as isize + dc);
                    if rr < 0 || cc < 0 || rr >= rows as isize || cc >= cols as isize {
                        continue;
                    }
                    let y = v[(rr as usize, cc as usize)];
                    let earlier = (dr, dc) < (0, 0);
                    if y > x || (earlier && y == x) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                maxima.push((r, c, x));
            }
        }
    }
    maxima.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));

    let mut peaks: Vec<Peak<T>> = Vec::new();
    for (r, c, x) in maxima {
        if peaks.len() == count {
            break;
        }
        let mut sum = T::zero();
        let mut centroid = Vec2::zeros();
        for rr in r.saturating_sub(1)..=(r + 1).min(rows - 1) {
            for cc in c.saturating_sub(1)..=(c + 1).min(cols - 1) {
                let w = v[(rr, cc)].max(T::zero());
                sum += w;
                centroid += grid.cell_center(rr, cc) * w;
            }
        }
        let position = centroid / sum;
        if peaks.iter().any(|p| (p.position - position).norm() < min_separation) {
            continue;
        }
        peaks.push(Peak { position, value: x, window_mass: sum * grid.cell_area() });
    }
    let underfull = peaks.len() < count;
    Peaks { peaks, underfull }
}

/// Mixture weight behind a peak.
///
/// Uses the Gaussian amplitude relation `value * 2 pi sqrt(det S)` when the
/// covariance is at least a cell wide (the map then samples the density at
/// cell centers); otherwise the 3x3 window mass.
pub fn peak_weight<T: Real>(peak: &Peak<T>, cov: Option<&Mat2<T>>, sampling_period: T) -> T {
    match cov {
        Some(s) if s.symmetric_eigenvalues().min() >= sampling_period * sampling_period => {
            peak.value * T::two_pi() * s.determinant().sqrt()
        }
        _ => peak.window_mass,
    }
}

/// State given to components that appear without a previous counterpart.
#[derive(Clone, Debug, PartialEq)]
pub struct BirthDefaults<T: Real> {
    pub covariance: Mat4<T>,
    pub weight: T,
    pub age: u32,
    pub motion: Vec2<T>,
    pub width: T,
    pub height: T,
}

impl<T: Real> Default for BirthDefaults<T> {
    fn default() -> Self {
        Self {
            covariance: Mat4::identity() * T::lit(20.0),
            weight: T::lit(0.1),
            age: 5,
            motion: Vec2::zeros(),
            width: T::lit(30.0),
            height: T::lit(60.0),
        }
    }
}

/// Re-attaches covariance, label, age, motion and box size from `prev_set`
/// to peaks by minimum total Euclidean distance.
pub fn assign_covariances<T: Real>(
    peaks: &[Peak<T>],
    prev_set: &TargetSet<T>,
    birth: &BirthDefaults<T>,
    sampling_period: T,
) -> Vec<TargetTuple<T>> {
    let cost: Vec<Vec<T>> =
        peaks.iter().map(|p| prev_set.iter().map(|t| (p.position - t.position()).norm()).collect()).collect();
    let mut partner = vec![None; peaks.len()];
    if !prev_set.is_empty() {
        for (p, t) in hungarian(&cost, false).matches {
            partner[p] = Some(t);
        }
    }
    peaks
        .iter()
        .zip(partner)
        .map(|(p, matched)| match matched {
            Some(i) => {
                let src = &prev_set.targets[i];
                let weight = peak_weight(p, Some(&src.position_covariance()), sampling_period);
                TargetTuple {
                    mean: Vec4::new(p.position[0], p.position[1], src.mean[2], src.mean[3]),
                    covariance: src.covariance,
                    weight,
                    label: src.label,
                    age: src.age,
                    motion: src.motion,
                }
            }
            None => TargetTuple {
                mean: Vec4::new(p.position[0], p.position[1], birth.width, birth.height),
                covariance: birth.covariance,
                weight: peak_weight(p, None, sampling_period),
                label: UNLABELLED,
                age: birth.age,
                motion: birth.motion,
            },
        })
        .collect()
}
