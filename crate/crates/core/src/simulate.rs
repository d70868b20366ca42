//! Synthetic scenarios: constant-velocity or turning boxes, missed
//! detections, Gaussian box noise and Poisson clutter.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::io::SequenceData;
use crate::kv;
use crate::metrics::{FrameBoxes, LabelledBox};
use crate::scalar::{Real, Vec2, Vec4};
use crate::update::MeasurementSet;

#[derive(Clone, Debug, PartialEq)]
pub struct TrackSpec {
    /// First and last live frame, both inclusive.
    pub birth_frame: u32,
    pub death_frame: u32,
    /// `(cx, cy, w, h)` at the birth frame.
    pub initial: [f64; 4],
    pub velocity: [f64; 2],
    /// Velocity rotation per frame, radians.
    pub turn_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub extent: [f64; 2],
    pub frame_count: u32,
    pub tracks: Vec<TrackSpec>,
    pub p_d: f64,
    pub clutter_rate: f64,
    pub noise_sigma: f64,
    /// Width and height of clutter boxes.
    pub clutter_size: [f64; 2],
    pub seed: u64,
}

impl ScenarioSpec {
    /// Noise-free, clutter-free scene with no tracks.
    pub fn new(extent: [f64; 2], frame_count: u32) -> Self {
        Self {
            name: "synthetic".into(),
            extent,
            frame_count,
            tracks: Vec::new(),
            p_d: 1.0,
            clutter_rate: 0.0,
            noise_sigma: 0.0,
            clutter_size: [30.0, 60.0],
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.p_d > 0.0 && self.p_d <= 1.0) {
            return bad(format!("p_d must lie in (0, 1], got {}", self.p_d));
        }
        if !(self.clutter_rate >= 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("clutter_rate and noise_sigma must be non-negative".into());
        }
        if !(self.extent[0] > 0.0 && self.extent[1] > 0.0) {
            return bad("extent must be positive".into());
        }
        for (i, t) in self.tracks.iter().enumerate() {
            if t.birth_frame < 1 || t.birth_frame >= t.death_frame || t.death_frame > self.frame_count {
                return bad(format!("track {}: need 1 <= birth < death <= frames", i + 1));
            }
            if !(t.initial[2] > 0.0 && t.initial[3] > 0.0) {
                return bad(format!("track {}: box size must be positive", i + 1));
            }
        }
        Ok(())
    }

    /// Reads a scenario file.
    ///
    /// ```text
    /// extent = 320, 240
    /// frames = 100
    /// p_d = 0.9
    /// clutter_rate = 2
    /// noise_sigma = 2
    /// seed = 7
    /// # birth, death, cx, cy, w, h, vx, vy[, turn]
    /// track = 1, 100, 60, 60, 20, 40, 1.0, 0.5
    /// ```
    pub fn parse(text: &str) -> Result<Self> {
        let mut spec = Self::new([0.0, 0.0], 0);
        let mut have_extent = false;
        for e in kv::parse(text)? {
            match e.key.as_str() {
                "name" => spec.name = e.value.clone(),
                "extent" => {
                    let (w, h) = e.pair()?;
                    spec.extent = [w, h];
                    have_extent = true;
                }
                "frames" => spec.frame_count = e.u32()?,
                "p_d" => spec.p_d = e.f64()?,
                "clutter_rate" => spec.clutter_rate = e.f64()?,
                "noise_sigma" => spec.noise_sigma = e.f64()?,
                "clutter_size" => {
                    let (w, h) = e.pair()?;
                    spec.clutter_size = [w, h];
                }
                "seed" => spec.seed = e.u64()?,
                "track" => {
                    let v = e.list()?;
                    if !(v.len() == 8 || v.len() == 9) || v[0].fract() != 0.0 || v[1].fract() != 0.0 || v[0] < 0.0 {
                        return Err(Error::Config(format!(
                            "line {}: track needs birth, death, cx, cy, w, h, vx, vy[, turn]",
                            e.line
                        )));
                    }
                    spec.tracks.push(TrackSpec {
                        birth_frame: v[0] as u32,
                        death_frame: v[1] as u32,
                        initial: [v[2], v[3], v[4], v[5]],
                        velocity: [v[6], v[7]],
                        turn_rate: v.get(8).copied().unwrap_or(0.0),
                    });
                }
                other => return Err(Error::Config(format!("line {}: unknown key `{other}`", e.line))),
            }
        }
        if !have_extent {
            return Err(Error::Config("missing `extent`".into()));
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario<T: Real> {
    pub ground_truth: FrameBoxes<T>,
    pub detections: BTreeMap<u32, MeasurementSet<T>>,
}

impl<T: Real> Scenario<T> {
    pub fn into_sequence(self, spec: &ScenarioSpec) -> SequenceData<T> {
        SequenceData {
            name: spec.name.clone(),
            frame_count: spec.frame_count,
            image_extent: Vec2::new(T::lit(spec.extent[0]), T::lit(spec.extent[1])),
            detections: self.detections,
            ground_truth: Some(self.ground_truth),
        }
    }
}

/// Track boxes `(cx, cy, w, h)` for every live frame.
pub fn trajectory(t: &TrackSpec) -> Vec<(u32, [f64; 4])> {
    let [mut x, mut y, w, h] = t.initial;
    let [mut vx, mut vy] = t.velocity;
    let (s, c) = (t.turn_rate % (2.0 * PI)).sin_cos();
    let mut out = Vec::with_capacity((t.death_frame - t.birth_frame + 1) as usize);
    for k in t.birth_frame..=t.death_frame {
        out.push((k, [x, y, w, h]));
        x += vx;
        y += vy;
        if t.turn_rate != 0.0 {
            (vx, vy) = (c * vx - s * vy, s * vx + c * vy);
        }
    }
    out
}

/// Generates ground truth and detections for frames `1..=frame_count`.
///
/// Ground-truth labels are track indices plus one. Every frame has a
/// measurement set, possibly empty.
pub fn gen_scenario<T: Real>(spec: &ScenarioSpec) -> Result<Scenario<T>> {
    spec.validate()?;
    let mut truth: BTreeMap<u32, Vec<(i64, [f64; 4])>> = BTreeMap::new();
    for (i, t) in spec.tracks.iter().enumerate() {
        for (k, b) in trajectory(t) {
            truth.entry(k).or_default().push((i as i64 + 1, b));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = Normal::new(0.0, spec.noise_sigma).expect("sigma checked");
    let clutter = (spec.clutter_rate > 0.0).then(|| Poisson::new(spec.clutter_rate).expect("rate checked"));
    let vec4 = |b: [f64; 4]| Vec4::new(T::lit(b[0]), T::lit(b[1]), T::lit(b[2]), T::lit(b[3]));

    let mut ground_truth = FrameBoxes::new();
    let mut detections = BTreeMap::new();
    for k in 1..=spec.frame_count {
        let live = truth.get(&k).map(Vec::as_slice).unwrap_or(&[]);
        let mut boxes = Vec::new();
        for &(_, b) in live {
            if rng.random::<f64>() >= spec.p_d {
                continue;
            }
            let mut d = b;
            if spec.noise_sigma > 0.0 {
                for v in d.iter_mut() {
                    *v += noise.sample(&mut rng);
                }
                d[2] = d[2].max(1.0);
                d[3] = d[3].max(1.0);
            }
            boxes.push(vec4(d));
        }
        let n_clutter = clutter.map_or(0, |p| p.sample(&mut rng) as usize);
        for _ in 0..n_clutter {
            let cx = rng.random::<f64>() * spec.extent[0];
            let cy = rng.random::<f64>() * spec.extent[1];
            boxes.push(vec4([cx, cy, spec.clutter_size[0], spec.clutter_size[1]]));
        }
        let n = boxes.len();
        detections.insert(k, MeasurementSet { frame: k, boxes, confidences: Some(vec![T::one(); n]) });
        if !live.is_empty() {
            ground_truth.insert(k, live.iter().map(|&(id, b)| LabelledBox::new(id, vec4(b))).collect());
        }
    }
    Ok(Scenario { ground_truth, detections })
}
