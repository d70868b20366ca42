//! Track-to-track association and mature target extraction.
//!
//! Previous targets are matched against the weight-selected update output
//! with an age-scaled IoU cost. Matched targets survive and age up, unmatched
//! current targets are births, unmatched previous targets decay.

pub mod hungarian;

pub use hungarian::{hungarian, AssignmentResult};

use crate::error::Result;
use crate::gm::{TargetSet, TargetTuple};
use crate::scalar::{Real, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AssocConfig {
    /// Maturity threshold `a_T`.
    pub a_t: u32,
    /// Age given to births.
    pub a_birth: u32,
    /// Amplification: added on survival.
    pub a_am: u32,
    /// Attenuation: decay removes `age / a_at`.
    pub a_at: u32,
    /// Move decaying targets along their stored motion vector.
    pub coast_decaying: bool,
}

impl Default for AssocConfig {
    fn default() -> Self {
        Self { a_t: 5, a_birth: 5, a_am: 1, a_at: 2, coast_decaying: true }
    }
}

/// Intersection over union of two `(cx, cy, w, h)` boxes.
pub fn iou<T: Real>(a: &[T; 4], b: &[T; 4]) -> T {
    let half = T::lit(0.5);
    let (ax0, ax1) = (a[0] - a[2] * half, a[0] + a[2] * half);
    let (ay0, ay1) = (a[1] - a[3] * half, a[1] + a[3] * half);
    let (bx0, bx1) = (b[0] - b[2] * half, b[0] + b[2] * half);
    let (by0, by1) = (b[1] - b[3] * half, b[1] + b[3] * half);
    let iw = (ax1.min(bx1) - ax0.max(bx0)).max(T::zero());
    let ih = (ay1.min(by1) - ay0.max(by0)).max(T::zero());
    let inter = iw * ih;
    let union = a[2] * a[3] + b[2] * b[3] - inter;
    if union > T::zero() {
        (inter / union).min(T::one()).max(T::zero())
    } else {
        T::zero()
    }
}

/// Rows are previous targets, columns current ones; entry `-age * IoU`.
pub fn distance_matrix<T: Real>(prev: &TargetSet<T>, curr: &TargetSet<T>) -> Vec<Vec<T>> {
    prev.iter()
        .map(|p| {
            let age = T::from_u32(p.age).unwrap();
            curr.iter().map(|c| -(age * iou(&p.bbox(), &c.bbox()))).collect()
        })
        .collect()
}

pub fn age_update(age: u32, survived: bool, cfg: &AssocConfig) -> u32 {
    if survived {
        age.saturating_add(cfg.a_am)
    } else {
        age - age / cfg.a_at.max(1)
    }
}

/// Associates the selected update output with the previous target set.
///
/// Output order: survivors and births in `selected` order, then decaying
/// previous targets in `prev` order. Returns the next free label.
pub fn t2t_associate<T: Real>(
    prev: &TargetSet<T>,
    selected: &TargetSet<T>,
    cfg: &AssocConfig,
    label_counter: i64,
) -> Result<(TargetSet<T>, i64)> {
    prev.check_labels()?;
    let cost = distance_matrix(prev, selected);
    let assignment = if prev.is_empty() {
        AssignmentResult { unmatched_curr: (0..selected.len()).collect(), ..Default::default() }
    } else {
        hungarian(&cost, true)
    };

    let mut partner: Vec<Option<usize>> = vec![None; selected.len()];
    for &(p, c) in &assignment.matches {
        partner[c] = Some(p);
    }

    let mut next_label = label_counter;
    let mut out = Vec::with_capacity(selected.len() + assignment.unmatched_prev.len());
    for (c, cur) in selected.iter().enumerate() {
        let mut t = cur.clone();
        match partner[c] {
            Some(p) => {
                let old = &prev.targets[p];
                t.label = old.label;
                t.age = age_update(old.age, true, cfg);
                t.motion = cur.position() - old.position();
            }
            None => {
                t.label = next_label;
                next_label += 1;
                t.age = cfg.a_birth;
                t.motion = Vec2::zeros();
            }
        }
        out.push(t);
    }
    for &p in &assignment.unmatched_prev {
        let mut t: TargetTuple<T> = prev.targets[p].clone();
        t.age = age_update(t.age, false, cfg);
        if cfg.coast_decaying {
            t.mean[0] += t.motion[0];
            t.mean[1] += t.motion[1];
        }
        out.push(t);
    }
    Ok((TargetSet::from_targets(selected.frame, out), next_label))
}

/// Targets whose age reached the maturity threshold.
pub fn extract_mature<T: Real>(t2t: &TargetSet<T>, a_t: u32) -> TargetSet<T> {
    TargetSet::from_targets(t2t.frame, t2t.iter().filter(|t| t.age >= a_t).cloned().collect())
}
