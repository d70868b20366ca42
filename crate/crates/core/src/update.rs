//! Measurement update: birth appending, GM-PHD Kalman correction and weight selection.

use crate::error::{Error, Result};
use crate::gm::{prune_merge, PruneConfig, TargetSet, TargetTuple, UNLABELLED};
use crate::grid::BirthDefaults;
use crate::scalar::{Mat4, Real, Vec4};

/// Detections of one frame as `(cx, cy, w, h)` boxes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MeasurementSet<T: Real> {
    pub frame: u32,
    pub boxes: Vec<Vec4<T>>,
    pub confidences: Option<Vec<T>>,
}

impl<T: Real> MeasurementSet<T> {
    pub fn new(frame: u32, boxes: Vec<Vec4<T>>) -> Self {
        Self { frame, boxes, confidences: None }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UpdateConfig<T: Real> {
    pub h: Mat4<T>,
    pub r: Mat4<T>,
    pub p_d: T,
    /// Expected clutter detections per frame.
    pub clutter_rate: T,
    /// Positional surveillance area in pixels².
    pub area: T,
    /// Admissible width and height spans of a clutter box.
    pub w_span: T,
    pub h_span: T,
    pub omega_t: T,
    pub birth: BirthDefaults<T>,
    pub prune: PruneConfig<T>,
}

impl<T: Real> UpdateConfig<T> {
    pub fn with_area(area: T) -> Self {
        Self {
            h: Mat4::identity(),
            r: Mat4::identity() * T::lit(10.0),
            p_d: T::lit(0.9),
            clutter_rate: T::lit(2.0),
            area,
            w_span: T::lit(100.0),
            h_span: T::lit(100.0),
            omega_t: T::lit(0.5),
            birth: BirthDefaults::default(),
            prune: PruneConfig::default(),
        }
    }
}

/// Appends one birth tuple per measurement after the predicted targets.
pub fn append_births<T: Real>(predicted: &TargetSet<T>, z: &MeasurementSet<T>, cfg: &UpdateConfig<T>) -> TargetSet<T> {
    let b = &cfg.birth;
    let mut out = predicted.clone();
    out.targets.extend(z.boxes.iter().map(|m| TargetTuple {
        mean: *m,
        covariance: b.covariance,
        weight: b.weight,
        label: UNLABELLED,
        age: b.age,
        motion: b.motion,
    }));
    out
}

/// Uniform clutter density over position and box size.
pub fn clutter_intensity<T: Real>(_z_box: &Vec4<T>, cfg: &UpdateConfig<T>) -> T {
    cfg.clutter_rate / (cfg.area * cfg.w_span * cfg.h_span)
}

struct Innovation<T: Real> {
    predicted: Vec4<T>,
    s_inv: Mat4<T>,
    norm: T,
    gain: Mat4<T>,
    covariance: Mat4<T>,
}

fn innovation<T: Real>(t: &TargetTuple<T>, cfg: &UpdateConfig<T>, component: usize) -> Result<Innovation<T>> {
    let h = &cfg.h;
    let s = h * t.covariance * h.transpose() + cfg.r;
    let s = (s + s.transpose()) * T::lit(0.5);
    let chol = s.cholesky().ok_or(Error::SingularInnovation { component })?;
    let s_inv = chol.inverse();
    let det = chol.l().diagonal().product().powi(2);
    if !(det > T::zero()) || !det.is_finite() {
        return Err(Error::SingularInnovation { component });
    }
    let gain = t.covariance * h.transpose() * s_inv;
    let cov = (Mat4::identity() - gain * h) * t.covariance;
    Ok(Innovation {
        predicted: h * t.mean,
        s_inv,
        norm: T::one() / (T::two_pi() * T::two_pi() * det.sqrt()),
        gain,
        covariance: (cov + cov.transpose()) * T::lit(0.5),
    })
}

/// GM-PHD correction without pruning.
///
/// Output is component-major: for every input component its missed-detection
/// copy, then one updated copy per measurement in measurement order.
pub fn kalman_correct<T: Real>(
    set_plus_b: &TargetSet<T>,
    z: &MeasurementSet<T>,
    cfg: &UpdateConfig<T>,
) -> Result<TargetSet<T>> {
    let comps: Vec<Innovation<T>> =
        set_plus_b.iter().enumerate().map(|(j, t)| innovation(t, cfg, j)).collect::<Result<_>>()?;
    let half = T::lit(0.5);

    // q[j * nz + i] = N(z_i | H m_j, S_j)
    let nz = z.len();
    let mut q = vec![T::zero(); comps.len() * nz];
    let mut denom: Vec<T> = z.boxes.iter().map(|b| clutter_intensity(b, cfg)).collect();
    for (j, (c, t)) in comps.iter().zip(set_plus_b.iter()).enumerate() {
        for (i, zi) in z.boxes.iter().enumerate() {
            let d = zi - c.predicted;
            let v = c.norm * (-(d.dot(&(c.s_inv * d))) * half).exp();
            q[j * nz + i] = v;
            denom[i] += cfg.p_d * t.weight * v;
        }
    }

    let mut out = Vec::with_capacity(comps.len() * (nz + 1));
    for (j, (c, t)) in comps.iter().zip(set_plus_b.iter()).enumerate() {
        let mut missed = t.clone();
        missed.weight = (T::one() - cfg.p_d) * t.weight;
        out.push(missed);
        for (i, zi) in z.boxes.iter().enumerate() {
            let weight = if denom[i] > T::zero() {
                cfg.p_d * t.weight * q[j * nz + i] / denom[i]
            } else {
                T::zero()
            };
            out.push(TargetTuple {
                mean: t.mean + c.gain * (zi - c.predicted),
                covariance: c.covariance,
                weight,
                ..t.clone()
            });
        }
    }
    Ok(TargetSet::from_targets(z.frame, out))
}

/// Kalman correction followed by pruning and merging with cap `j_max`.
pub fn kalman_update<T: Real>(
    set_plus_b: &TargetSet<T>,
    z: &MeasurementSet<T>,
    cfg: &UpdateConfig<T>,
    j_max: usize,
) -> Result<TargetSet<T>> {
    let corrected = kalman_correct(set_plus_b, z, cfg)?;
    Ok(prune_merge(&corrected, cfg.prune.truncate, cfg.prune.merge_dist, j_max))
}

/// Targets with weight strictly above `omega_t`, order preserved.
pub fn select_by_weight<T: Real>(updated: &TargetSet<T>, omega_t: T) -> TargetSet<T> {
    TargetSet::from_targets(updated.frame, updated.iter().filter(|t| t.weight > omega_t).cloned().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gm::gm_integral;
    use proptest::prelude::*;

    fn comp(x: f64, y: f64, var: f64, w: f64) -> TargetTuple<f64> {
        TargetTuple::new(Vec4::new(x, y, 20.0, 40.0), Mat4::identity() * var, w)
    }

    fn cfg() -> UpdateConfig<f64> {
        UpdateConfig::with_area(100.0 * 100.0)
    }

    #[test]
    fn births_appended_in_order() {
        let c = cfg();
        let z = MeasurementSet::new(1, vec![Vec4::new(1.0, 2.0, 3.0, 4.0); 3]);
        let out = append_births(&TargetSet::new(1), &z, &c);
        assert_eq!(out.len(), 3);
        assert!(out.iter().all(|t| t.covariance == Mat4::identity() * 20.0 && t.age == 5 && t.label == -1));
        let pred = TargetSet::from_targets(1, vec![comp(0.0, 0.0, 1.0, 1.0), comp(5.0, 0.0, 1.0, 1.0)]);
        let out = append_births(&pred, &z, &c);
        assert_eq!(out.len(), 5);
        assert_eq!(out.targets[..2], pred.targets[..]);
        assert_eq!(append_births(&pred, &MeasurementSet::default(), &c), pred);
    }

    #[test]
    fn clutter_cases() {
        let mut c = cfg();
        let z = Vec4::new(1.0, 1.0, 1.0, 1.0);
        c.clutter_rate = 0.0;
        assert_eq!(clutter_intensity(&z, &c), 0.0);
        c.clutter_rate = 10.0;
        c.area = 10.0;
        c.w_span = 10.0;
        c.h_span = 10.0;
        assert!((clutter_intensity(&z, &c) - 0.01).abs() < 1e-15);
        let k = clutter_intensity(&z, &c);
        c.clutter_rate = 20.0;
        assert_eq!(clutter_intensity(&Vec4::new(9.0, 9.0, 9.0, 9.0), &c), 2.0 * k);
    }

    #[test]
    fn zero_noise_limit() {
        let mut c = cfg();
        c.r = Mat4::identity() * 1e-12;
        c.p_d = 1.0;
        c.clutter_rate = 0.0;
        let z = MeasurementSet::new(1, vec![Vec4::new(3.0, 4.0, 21.0, 39.0)]);
        let out = kalman_correct(&TargetSet::from_targets(0, vec![comp(0.0, 0.0, 25.0, 0.7)]), &z, &c).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out.targets[0].weight, 0.0);
        assert!((out.targets[1].weight - 1.0).abs() < 1e-12);
        assert!((out.targets[1].mean - z.boxes[0]).norm() < 1e-9);
    }

    #[test]
    fn empty_measurements_keep_missed_only() {
        let c = cfg();
        let s = TargetSet::from_targets(0, vec![comp(0.0, 0.0, 4.0, 1.0), comp(9.0, 0.0, 4.0, 0.4)]);
        let out = kalman_correct(&s, &MeasurementSet::default(), &c).unwrap();
        assert_eq!(out.len(), 2);
        for (o, t) in out.iter().zip(s.iter()) {
            assert!((o.weight - 0.1 * t.weight).abs() < 1e-15);
            assert_eq!(o.mean, t.mean);
        }
    }

    #[test]
    fn singular_innovation_named() {
        let mut c = cfg();
        c.r = Mat4::zeros();
        let mut bad = comp(0.0, 0.0, 1.0, 1.0);
        bad.covariance = Mat4::zeros();
        let s = TargetSet::from_targets(0, vec![comp(0.0, 0.0, 1.0, 1.0), bad]);
        let z = MeasurementSet::new(0, vec![Vec4::new(0.0, 0.0, 1.0, 1.0)]);
        assert!(matches!(kalman_correct(&s, &z, &c), Err(Error::SingularInnovation { component: 1 })));
    }

    #[test]
    fn selection() {
        let s = TargetSet::from_targets(0, vec![comp(0.0, 0.0, 1.0, 0.9), comp(0.0, 0.0, 1.0, 0.3)]);
        assert_eq!(select_by_weight(&s, 0.5).len(), 1);
        let s0 = TargetSet::from_targets(0, vec![comp(0.0, 0.0, 1.0, 0.2), comp(0.0, 0.0, 1.0, 0.0)]);
        assert_eq!(select_by_weight(&s0, 0.0).len(), 1);
        assert!(select_by_weight(&TargetSet::<f64>::new(0), 0.5).is_empty());
    }

    #[test]
    fn update_then_prune_merges_duplicates() {
        let c = cfg();
        let z = MeasurementSet::new(1, vec![Vec4::new(50.0, 50.0, 20.0, 40.0)]);
        let pred = TargetSet::from_targets(0, vec![comp(51.0, 50.0, 9.0, 1.0)]);
        let out = kalman_update(&append_births(&pred, &z, &c), &z, &c, 10).unwrap();
        assert!(out.len() <= 4);
        let sel = select_by_weight(&out, c.omega_t);
        assert_eq!(sel.len(), 1);
    }

    proptest! {
        #[test]
        fn detection_weights_normalise(
            comps in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 1.0f64..30.0, 0.1f64..2.0), 1..5),
            zs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 1..4),
        ) {
            let mut c = cfg();
            c.p_d = 1.0;
            c.clutter_rate = 0.0;
            let s = TargetSet::from_targets(0, comps.iter().map(|&(x, y, v, w)| comp(x, y, v, w)).collect());
            let z = MeasurementSet::new(1, zs.iter().map(|&(x, y)| Vec4::new(x, y, 20.0, 40.0)).collect());
            let out = kalman_correct(&s, &z, &c).unwrap();
            let nz = z.len();
            for i in 0..nz {
                let total: f64 = (0..s.len()).map(|j| out.targets[j * (nz + 1) + 1 + i].weight).sum();
                prop_assume!(total > 0.0);
                prop_assert!((total - 1.0).abs() < 1e-9);
            }
        }

        #[test]
        fn posterior_covariance_spd_and_mass_bound(
            comps in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0, 0.5f64..30.0, 0.1f64..2.0), 0..5),
            zs in proptest::collection::vec((0.0f64..100.0, 0.0f64..100.0), 0..4),
            p_d in 0.1f64..1.0,
            lambda in 0.0f64..5.0,
        ) {
            let mut c = cfg();
            c.p_d = p_d;
            c.clutter_rate = lambda;
            let s = TargetSet::from_targets(0, comps.iter().map(|&(x, y, v, w)| comp(x, y, v, w)).collect());
            let z = MeasurementSet::new(1, zs.iter().map(|&(x, y)| Vec4::new(x, y, 20.0, 40.0)).collect());
            let out = kalman_correct(&s, &z, &c).unwrap();
            for t in out.iter() {
                prop_assert!(t.covariance.symmetric_eigenvalues().min() > 0.0);
            }
            let bound = z.len() as f64 + (1.0 - p_d) * gm_integral(&s) + 1e-9;
            prop_assert!(gm_integral(&out) <= bound);
        }
    }
}
