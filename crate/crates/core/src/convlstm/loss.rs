//! Divergence losses between signed maps.
//!
//! Both arrays are shifted by their minimum plus `EPS` and normalised to sum
//! one before the divergence is taken.

use ndarray::{Array2, ArrayView2, Zip};

use crate::scalar::Real;

pub const EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum LossKind {
    #[default]
    Kl,
    Jsd,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "kl" => Ok(Self::Kl),
            "jsd" => Ok(Self::Jsd),
            other => Err(format!("unknown loss `{other}` (expected kl or jsd)")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Kl => "kl",
            Self::Jsd => "jsd",
        })
    }
}

/// Shift-by-minimum normalisation. Returns the distribution, the index of
/// the minimum (first in row-major order) and the normaliser.
pub fn normalize<T: Real>(a: ArrayView2<T>) -> (Array2<T>, usize, T) {
    let eps = T::lit(EPS);
    let (argmin, min) = a
        .iter()
        .enumerate()
        .fold((0, T::max_value().unwrap()), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
    let shifted = a.mapv(|v| v - min + eps);
    let sum = shifted.sum();
    (shifted / sum, argmin, sum)
}

/// Rounding can leave a tiny negative divergence; NaN passes through.
fn clamp_nonneg<T: Real>(v: T) -> T {
    if v < T::zero() {
        T::zero()
    } else {
        v
    }
}

fn kl_normalized<T: Real>(p: &Array2<T>, q: &Array2<T>) -> T {
    Zip::from(p).and(q).fold(T::zero(), |acc, &a, &b| acc + a * (a / b).ln())
}

/// `KL(target || pred)` on normalised maps.
pub fn kl_loss<T: Real>(pred: ArrayView2<T>, target: ArrayView2<T>) -> T {
    let (p, _, _) = normalize(pred);
    let (t, _, _) = normalize(target);
    clamp_nonneg(kl_normalized(&t, &p))
}

/// `KL(target || pred) + KL(pred || target)` on normalised maps.
pub fn jsd_loss<T: Real>(pred: ArrayView2<T>, target: ArrayView2<T>) -> T {
    let (p, _, _) = normalize(pred);
    let (t, _, _) = normalize(target);
    // summed cellwise in one pass so the value does not depend on argument order
    let value = Zip::from(&p)
        .and(&t)
        .fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a.ln() - b.ln()));
    clamp_nonneg(value)
}

pub fn loss<T: Real>(kind: LossKind, pred: ArrayView2<T>, target: ArrayView2<T>) -> T {
    match kind {
        LossKind::Kl => kl_loss(pred, target),
        LossKind::Jsd => jsd_loss(pred, target),
    }
}

/// Loss value and its gradient with respect to the raw prediction.
pub fn loss_and_grad<T: Real>(kind: LossKind, pred: ArrayView2<T>, target: ArrayView2<T>) -> (T, Array2<T>) {
    let (p, argmin, sum) = normalize(pred);
    let (t, _, _) = normalize(target);
    let (value, dp) = match kind {
        LossKind::Kl => (kl_normalized(&t, &p), Zip::from(&t).and(&p).map_collect(|&a, &b| -a / b)),
        LossKind::Jsd => (
            Zip::from(&p).and(&t).fold(T::zero(), |acc, &a, &b| acc + (a - b) * (a.ln() - b.ln())),
            Zip::from(&t).and(&p).map_collect(|&a, &b| -a / b + (b / a).ln() + T::one()),
        ),
    };
    // through p = a / sum(a)
    let mean = Zip::from(&dp).and(&p).fold(T::zero(), |acc, &g, &q| acc + g * q);
    let mut da = dp.mapv(|g| (g - mean) / sum);
    // through a = pred - pred[argmin] + eps; the minimum cell itself is constant
    let total = da.sum();
    let flat = da.as_slice_mut().expect("standard layout");
    flat[argmin] = flat[argmin] - total;
    (clamp_nonneg(value), da)
}
