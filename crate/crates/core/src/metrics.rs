//! OSPA and CLEAR-MOT evaluation.

use std::collections::{BTreeMap, BTreeSet};

use crate::association::{hungarian, iou};
use crate::error::{Error, Result};
use crate::scalar::{Real, Vec2, Vec4};

/// Box `(cx, cy, w, h)` with a track or ground-truth identity.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelledBox<T: Real> {
    pub label: i64,
    pub bbox: Vec4<T>,
}

impl<T: Real> LabelledBox<T> {
    pub fn new(label: i64, bbox: Vec4<T>) -> Self {
        Self { label, bbox }
    }

    pub fn center(&self) -> Vec2<T> {
        Vec2::new(self.bbox[0], self.bbox[1])
    }

    fn as_array(&self) -> [T; 4] {
        [self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3]]
    }
}

/// Labelled boxes per frame.
pub type FrameBoxes<T> = BTreeMap<u32, Vec<LabelledBox<T>>>;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OspaConfig<T> {
    pub p: T,
    pub c: T,
}

impl<T: Real> Default for OspaConfig<T> {
    fn default() -> Self {
        Self { p: T::one(), c: T::lit(100.0) }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Ospa<T> {
    pub overall: T,
    pub loc: T,
    pub card: T,
}

/// OSPA distance `(c^p |a - b| + cost)^(1/p) / max(a, b)` between point sets.
///
/// `card` is the same expression with `cost = 0` and `loc = overall - card`.
pub fn ospa<T: Real>(a: &[Vec2<T>], b: &[Vec2<T>], cfg: &OspaConfig<T>) -> Ospa<T> {
    let n = a.len().max(b.len());
    if n == 0 {
        return Ospa { overall: T::zero(), loc: T::zero(), card: T::zero() };
    }
    let cost_matrix: Vec<Vec<T>> =
        a.iter().map(|x| b.iter().map(|y| (x - y).norm().min(cfg.c).powf(cfg.p)).collect()).collect();
    let cost = if a.is_empty() || b.is_empty() {
        T::zero()
    } else {
        hungarian(&cost_matrix, false).total_cost(&cost_matrix)
    };
    let diff = T::from_count(a.len().abs_diff(b.len()));
    let n = T::from_count(n);
    let penalty = cfg.c.powf(cfg.p) * diff;
    let inv_p = T::one() / cfg.p;
    let overall = (penalty + cost).powf(inv_p) / n;
    let card = penalty.powf(inv_p) / n;
    Ospa { overall, loc: overall - card, card }
}

/// Per-frame CLEAR-MOT counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct MotTally {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub id_switches: usize,
    pub gt: usize,
}

impl std::ops::AddAssign for MotTally {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.id_switches += o.id_switches;
        self.gt += o.gt;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotSummary {
    pub frames: BTreeMap<u32, MotTally>,
    pub total: MotTally,
    /// `TP / (TP + FP)`; zero when nothing was reported.
    pub precision: f64,
    /// `TP / GT`; NaN without ground truth.
    pub recall: f64,
    pub mota: f64,
    /// MOTA with `log10` of the switch count; `log10(0)` counts as zero.
    pub motal: f64,
}

fn check_unique<T: Real>(boxes: &[LabelledBox<T>]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for b in boxes {
        if !seen.insert(b.label) {
            return Err(Error::DuplicateLabel(b.label));
        }
    }
    Ok(())
}

/// CLEAR-MOT tallies with match persistence.
///
/// A ground-truth object keeps last frame's track while their IoU stays at
/// or above `iou_thresh`; the rest are matched by maximum total IoU among
/// pairs at or above the threshold. A switch is counted when an object is
/// matched to a track other than the one it was last matched to.
pub fn clear_mot<T: Real>(tracks: &FrameBoxes<T>, gt: &FrameBoxes<T>, iou_thresh: T) -> Result<MotSummary> {
    let empty = Vec::new();
    let frames: BTreeSet<u32> = tracks.keys().chain(gt.keys()).copied().collect();
    let mut last_match: BTreeMap<i64, i64> = BTreeMap::new();
    let mut per_frame = BTreeMap::new();
    let mut total = MotTally::default();

    for k in frames {
        let trk = tracks.get(&k).unwrap_or(&empty);
        let obj = gt.get(&k).unwrap_or(&empty);
        check_unique(trk)?;
        check_unique(obj)?;

        let overlap: Vec<Vec<T>> =
            obj.iter().map(|g| trk.iter().map(|t| iou(&g.as_array(), &t.as_array())).collect()).collect();
        let mut obj_taken = vec![false; obj.len()];
        let mut trk_taken = vec![false; trk.len()];
        let mut pairs = Vec::new();

        for (gi, g) in obj.iter().enumerate() {
            let Some(prev) = last_match.get(&g.label) else { continue };
            if let Some(ti) = trk.iter().position(|t| t.label == *prev) {
                if !trk_taken[ti] && overlap[gi][ti] >= iou_thresh {
                    obj_taken[gi] = true;
                    trk_taken[ti] = true;
                    pairs.push((gi, ti));
                }
            }
        }

        let free_obj: Vec<usize> = (0..obj.len()).filter(|&i| !obj_taken[i]).collect();
        let free_trk: Vec<usize> = (0..trk.len()).filter(|&i| !trk_taken[i]).collect();
        let mut tally = MotTally { gt: obj.len(), ..Default::default() };
        if !free_obj.is_empty() && !free_trk.is_empty() {
            let cost: Vec<Vec<T>> = free_obj
                .iter()
                .map(|&gi| {
                    free_trk
                        .iter()
                        .map(|&ti| if overlap[gi][ti] >= iou_thresh { -overlap[gi][ti] } else { T::zero() })
                        .collect()
                })
                .collect();
            for (r, c) in hungarian(&cost, true).matches {
                let (gi, ti) = (free_obj[r], free_trk[c]);
                if let Some(prev) = last_match.get(&obj[gi].label) {
                    if *prev != trk[ti].label {
                        tally.id_switches += 1;
                    }
                }
                pairs.push((gi, ti));
            }
        }
        for &(gi, ti) in &pairs {
            last_match.insert(obj[gi].label, trk[ti].label);
        }
        tally.tp = pairs.len();
        tally.fp = trk.len() - pairs.len();
        tally.fn_ = obj.len() - pairs.len();
        total += tally;
        per_frame.insert(k, tally);
    }

    let gt_total = total.gt as f64;
    let reported = (total.tp + total.fp) as f64;
    let precision = if reported > 0.0 { total.tp as f64 / reported } else { 0.0 };
    let recall = total.tp as f64 / gt_total;
    let errors = (total.fn_ + total.fp) as f64;
    let mota = 1.0 - (errors + total.id_switches as f64) / gt_total;
    let log_sw = if total.id_switches > 0 { (total.id_switches as f64).log10() } else { 0.0 };
    let motal = 1.0 - (errors + log_sw) / gt_total;
    Ok(MotSummary { frames: per_frame, total, precision, recall, mota, motal })
}

/// One row of the evaluation report.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub name: String,
    pub ospa: Option<Ospa<f64>>,
    pub recall: f64,
    pub precision: f64,
    pub mota: f64,
    pub motal: f64,
}

impl MetricReport {
    pub const HEADER: &'static str = "name,OSPA,OSPA-Loc,OSPA-Card,Rcll,Prcn,MOTA,MOTAL";

    pub fn row(&self) -> String {
        let o = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.6}"));
        format!(
            "{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
            self.name,
            o(self.ospa.map(|x| x.overall)),
            o(self.ospa.map(|x| x.loc)),
            o(self.ospa.map(|x| x.card)),
            self.recall,
            self.precision,
            self.mota,
            self.motal
        )
    }
}

/// Mean of per-frame OSPA values.
pub fn mean_ospa<T: Real>(per_frame: &[Ospa<T>]) -> Ospa<f64> {
    let n = per_frame.len().max(1) as f64;
    let mut m = per_frame.iter().fold(Ospa::<f64>::default(), |acc, o| Ospa {
        overall: acc.overall + o.overall.as_f64(),
        loc: acc.loc + o.loc.as_f64(),
        card: acc.card + o.card.as_f64(),
    });
    m.overall /= n;
    m.loc /= n;
    m.card /= n;
    m
}
