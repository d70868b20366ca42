//! Explicit Gaussian-mixture multi-target state.
//!
//! Every target is a tuple of mean, covariance, mixture weight, track label,
//! age and motion vector. The state is `(cx, cy, w, h)` in pixels; densities
//! and maps only ever look at the `(cx, cy)` marginal.

use rand::Rng;

use crate::error::{Error, Result};
use crate::scalar::{Mat2, Mat4, Real, Vec2, Vec4};

/// Label carried by a birth component before track-to-track association.
pub const UNLABELLED: i64 = -1;

#[derive(Clone, Debug, PartialEq)]
pub struct TargetTuple<T: Real> {
    pub mean: Vec4<T>,
    pub covariance: Mat4<T>,
    pub weight: T,
    pub label: i64,
    pub age: u32,
    pub motion: Vec2<T>,
}

impl<T: Real> TargetTuple<T> {
    pub fn new(mean: Vec4<T>, covariance: Mat4<T>, weight: T) -> Self {
        Self { mean, covariance, weight, label: UNLABELLED, age: 0, motion: Vec2::zeros() }
    }

    pub fn position(&self) -> Vec2<T> {
        Vec2::new(self.mean[0], self.mean[1])
    }

    pub fn position_covariance(&self) -> Mat2<T> {
        self.covariance.fixed_view::<2, 2>(0, 0).into_owned()
    }

    /// Box as `(cx, cy, w, h)`.
    pub fn bbox(&self) -> [T; 4] {
        [self.mean[0], self.mean[1], self.mean[2], self.mean[3]]
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TargetSet<T: Real> {
    pub targets: Vec<TargetTuple<T>>,
    pub frame: u32,
}

impl<T: Real> TargetSet<T> {
    pub fn new(frame: u32) -> Self {
        Self { targets: Vec::new(), frame }
    }

    pub fn from_targets(frame: u32, targets: Vec<TargetTuple<T>>) -> Self {
        Self { targets, frame }
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, TargetTuple<T>> {
        self.targets.iter()
    }

    /// Fails on the first label `>= 0` that appears twice.
    pub fn check_labels(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for t in &self.targets {
            if t.label >= 0 && !seen.insert(t.label) {
                return Err(Error::DuplicateLabel(t.label));
            }
        }
        Ok(())
    }
}

/// Density of a 2D Gaussian at `point`.
pub fn gaussian_2d<T: Real>(point: &Vec2<T>, mean: &Vec2<T>, cov: &Mat2<T>) -> Result<T> {
    let det = cov.determinant();
    if !(det > T::zero()) {
        return Err(Error::DegenerateCovariance);
    }
    let inv = cov.try_inverse().ok_or(Error::DegenerateCovariance)?;
    let d = point - mean;
    let maha = (d.transpose() * inv * d)[(0, 0)];
    Ok((-maha / T::lit(2.0)).exp() / (T::two_pi() * det.sqrt()))
}

/// Mixture density `sum w N(x | m, S)` over the positional marginal.
pub fn gm_eval<T: Real>(set: &TargetSet<T>, point: &Vec2<T>) -> Result<T> {
    set.iter().try_fold(T::zero(), |acc, t| {
        Ok(acc + t.weight * gaussian_2d(point, &t.position(), &t.position_covariance())?)
    })
}

/// Integral of the mixture, i.e. the expected number of targets.
pub fn gm_integral<T: Real>(set: &TargetSet<T>) -> T {
    set.iter().fold(T::zero(), |acc, t| acc + t.weight)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PruneConfig<T> {
    /// Components with weight below this are dropped.
    pub truncate: T,
    /// Threshold on the squared Mahalanobis distance for merging.
    pub merge_dist: T,
}

impl<T: Real> Default for PruneConfig<T> {
    fn default() -> Self {
        Self { truncate: T::lit(1e-5), merge_dist: T::lit(4.0) }
    }
}

fn mahalanobis_sq<T: Real>(x: &Vec4<T>, mean: &Vec4<T>, cov: &Mat4<T>) -> Option<T> {
    let chol = cov.cholesky()?;
    let d = x - mean;
    let y = chol.solve(&d);
    Some(d.dot(&y))
}

/// Truncation, greedy merging and capping of a mixture.
///
/// Merging starts from the heaviest remaining component and absorbs every
/// component whose squared Mahalanobis distance (under its own covariance)
/// is at most `merge_dist`. The merged component is moment matched and keeps
/// label, age and motion of the heaviest member. At most `j_max` components
/// survive, heaviest first.
pub fn prune_merge<T: Real>(
    set: &TargetSet<T>,
    truncate: T,
    merge_dist: T,
    j_max: usize,
) -> TargetSet<T> {
    let mut pool: Vec<&TargetTuple<T>> = set.iter().filter(|t| t.weight >= truncate).collect();
    let mut merged = Vec::new();

    while !pool.is_empty() {
        let lead = pool
            .iter()
            .enumerate()
            .fold(0, |best, (i, t)| if t.weight > pool[best].weight { i } else { best });
        let anchor = pool[lead].mean;
        let (members, rest): (Vec<_>, Vec<_>) = pool.into_iter().enumerate().partition(|(i, t)| {
            *i == lead
                || mahalanobis_sq(&anchor, &t.mean, &t.covariance).is_some_and(|d| d <= merge_dist)
        });
        pool = rest.into_iter().map(|(_, t)| t).collect();

        let weight = members.iter().fold(T::zero(), |acc, (_, t)| acc + t.weight);
        let head = members.iter().find(|(i, _)| *i == lead).map(|(_, t)| *t).unwrap();
        let mut out = head.clone();
        if members.len() > 1 && weight > T::zero() {
            let mean = members
                .iter()
                .fold(Vec4::zeros(), |acc, (_, t)| acc + t.mean * t.weight)
                / weight;
            let cov = members.iter().fold(Mat4::zeros(), |acc, (_, t)| {
                let d = mean - t.mean;
                acc + (t.covariance + d * d.transpose()) * t.weight
            }) / weight;
            out.mean = mean;
            out.covariance = (cov + cov.transpose()) / T::lit(2.0);
        }
        out.weight = weight;
        merged.push(out);
    }

    merged.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap_or(std::cmp::Ordering::Equal));
    merged.truncate(j_max);
    TargetSet::from_targets(set.frame, merged)
}

/// Inverse-CDF Poisson sample driven by a single uniform `u` in `[0, 1)`.
///
/// Terms are accumulated in log space so large means do not underflow.
pub fn poisson_inverse_cdf(lambda: f64, u: f64) -> usize {
    if lambda <= 0.0 {
        return 0;
    }
    let cap = (lambda + 20.0 * lambda.sqrt() + 20.0) as usize;
    let ln_lambda = lambda.ln();
    let mut log_term = -lambda;
    let mut cdf = log_term.exp();
    let mut k = 0usize;
    while u > cdf && k < cap {
        k += 1;
        log_term += ln_lambda - (k as f64).ln();
        cdf += log_term.exp();
    }
    k
}

/// Component cap for pruning: `max(m_prev, Poisson(m_prev))`.
pub fn jmax_draw<R: Rng + ?Sized>(m_prev: usize, rng: &mut R) -> usize {
    let u: f64 = rng.random();
    m_prev.max(poisson_inverse_cdf(m_prev as f64, u))
}
