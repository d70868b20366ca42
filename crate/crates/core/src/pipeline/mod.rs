//! The per-frame filtering and tracking loop.
//!
//! Each frame runs, in order: network prediction of the next PDD map,
//! post-processing into the predicted PHD map, peak extraction with
//! covariance re-assignment, birth union, GM-PHD update with pruning,
//! weight selection, track-to-track association, mature extraction,
//! rendering of the new PHD map, the PDD push and online training.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{PipelineConfig, Precision, Warmup};

use crate::association::{extract_mature, t2t_associate};
use crate::convlstm::{decode_prediction, predict, train_online, AdamState, ConvLstmParams, PddBatch};
use crate::error::{Error, Result};
use crate::gm::{gm_integral, jmax_draw, TargetSet};
use crate::grid::{assign_covariances, extract_peaks, pdd, postprocess_prediction, render_phd, GridSpec, PddMap, PhdMap};
use crate::io::{dump_map, write_results, MapFormat, SequenceData};
use crate::metrics::{clear_mot, mean_ospa, ospa, FrameBoxes, LabelledBox, MetricReport, MotSummary, Ospa};
use crate::scalar::{Mat4, Real, Vec2};
use crate::update::{append_births, kalman_update, select_by_weight, MeasurementSet};

/// Everything carried from one frame to the next.
#[derive(Clone, Debug)]
pub struct PipelineState<T: Real> {
    pub grid: GridSpec<T>,
    /// Association output of the last frame, mature or not.
    pub targets: TargetSet<T>,
    /// Mature subset of `targets`, the reported estimate.
    pub reported: TargetSet<T>,
    pub prev_phd: PhdMap<T>,
    pub batch: PddBatch<T>,
    pub net: ConvLstmParams<T>,
    pub opt: AdamState<T>,
    pub label_counter: i64,
    pub frame: u32,
    rng: ChaCha8Rng,
    /// Consecutive frames each carried label has spent below `a_t`.
    immature: BTreeMap<i64, u32>,
}

/// Per-frame products besides the new state.
#[derive(Clone, Debug)]
pub struct StepOutput<T: Real> {
    pub estimates: TargetSet<T>,
    pub predicted: PhdMap<T>,
    pub phd: PhdMap<T>,
    pub pdd: PddMap<T>,
    /// Objective before each epoch, when training ran this frame.
    pub losses: Option<Vec<T>>,
    /// The network output could not be normalised and persistence was used.
    pub fallback: bool,
}

impl<T: Real> PipelineState<T> {
    /// Fresh state over `[0, extent]` with a newly initialised network.
    pub fn new(cfg: &PipelineConfig, extent: Vec2<T>) -> Result<Self> {
        cfg.validate()?;
        let grid = GridSpec::new(Vec2::zeros(), extent, T::lit(cfg.sampling_period))?;
        if 2 * cfg.border >= grid.rows.min(grid.cols) {
            return Err(Error::InvalidGrid(format!(
                "border of {} cells leaves no interior in a {} x {} grid",
                cfg.border, grid.rows, grid.cols
            )));
        }
        Ok(Self {
            targets: TargetSet::new(0),
            reported: TargetSet::new(0),
            prev_phd: PhdMap::zeros(grid.clone(), 0),
            batch: PddBatch::new(cfg.batch_len),
            net: ConvLstmParams::init(cfg.filters, cfg.seed),
            opt: AdamState::with_hyper(cfg.filters, cfg.adam()),
            label_counter: 1,
            frame: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x9e37_79b9_7f4a_7c15),
            immature: BTreeMap::new(),
            grid,
        })
    }

    fn network_ready(&self, cfg: &PipelineConfig) -> bool {
        match cfg.warmup {
            Warmup::Zero => self.opt.t > 0 && !self.batch.is_empty(),
            Warmup::Network => !self.batch.is_empty(),
        }
    }

    /// Processes frame `z.frame`. On error `self` is left untouched.
    pub fn step(&mut self, z: &MeasurementSet<T>, cfg: &PipelineConfig) -> Result<StepOutput<T>> {
        let k = z.frame;
        if k <= self.frame {
            return Err(Error::Config(format!("frame {k} does not follow frame {}", self.frame)));
        }
        let grid = &self.grid;
        let ucfg = cfg.update_config::<T>(grid.extent[0].as_f64() * grid.extent[1].as_f64());
        let acfg = cfg.assoc_config();
        let m_prev = gm_integral(&self.reported);

        // (1) predicted PDD
        let raw = if self.network_ready(cfg) {
            let out = predict(&self.net, &self.batch, cfg.relu_output).map_err(|e| e.at(k, "predict"))?;
            decode_prediction(out.view(), self.batch.last().expect("non-empty batch"))
        } else {
            grid.zeros()
        };

        // (2) predicted PHD; a degenerate network output falls back to persistence
        let mut fallback = false;
        let predicted = match postprocess_prediction(&raw, grid, &self.prev_phd, cfg.border, m_prev) {
            Ok(p) => p,
            Err(Error::DegeneratePrediction { .. }) => {
                fallback = true;
                match postprocess_prediction(&grid.zeros(), grid, &self.prev_phd, cfg.border, m_prev) {
                    Ok(p) => p,
                    Err(Error::DegeneratePrediction { .. }) => PhdMap::zeros(grid.clone(), self.prev_phd.frame),
                    Err(e) => return Err(e.at(k, "postprocess")),
                }
            }
            Err(e) => return Err(e.at(k, "postprocess")),
        };

        // (3) implicit to explicit
        let count = m_prev.round().to_usize().unwrap_or(0);
        let peaks = extract_peaks(&predicted, count, T::lit(cfg.min_separation));
        let mut tuples = assign_covariances(&peaks.peaks, &self.reported, &ucfg.birth, grid.sampling_period);
        if cfg.process_noise > 0.0 {
            let q = Mat4::identity() * T::lit(cfg.process_noise);
            for t in &mut tuples {
                t.covariance += q;
            }
        }
        let x_pred = TargetSet::from_targets(k, tuples);

        // (4) births, (5) update, (6) selection
        let x_plus_b = append_births(&x_pred, z, &ucfg);
        let mut rng = self.rng.clone();
        let j_max = if self.targets.is_empty() { usize::MAX } else { jmax_draw(self.targets.len(), &mut rng) };
        let updated = kalman_update(&x_plus_b, z, &ucfg, j_max).map_err(|e| e.at(k, "update"))?;
        let selected = select_by_weight(&updated, ucfg.omega_t);

        // (7) association, with removal of targets immature for a_t frames
        let (t2t, label_counter) =
            t2t_associate(&self.targets, &selected, &acfg, self.label_counter).map_err(|e| e.at(k, "associate"))?;
        let mut immature = BTreeMap::new();
        let mut kept = Vec::with_capacity(t2t.len());
        for t in t2t.targets {
            if t.age >= acfg.a_t {
                kept.push(t);
                continue;
            }
            let run = self.immature.get(&t.label).copied().unwrap_or(0) + 1;
            if run < acfg.a_t.max(1) {
                immature.insert(t.label, run);
                kept.push(t);
            }
        }
        let carried = TargetSet::from_targets(k, kept);

        // (8) mature extraction, (9) new PHD map, (10) PDD
        let mature = extract_mature(&carried, acfg.a_t);
        mature.check_labels().map_err(|e| e.at(k, "extract"))?;
        let phd = render_phd(&mature, grid).map_err(|e| e.at(k, "render"))?;
        let diff = pdd(&phd, &self.prev_phd).map_err(|e| e.at(k, "pdd"))?;

        // (11) online training once the batch is full, then the push
        let mut net = self.net.clone();
        let mut opt = self.opt.clone();
        let mut batch = self.batch.clone();
        let losses = if batch.is_full() && cfg.epochs > 0 {
            Some(
                train_online(&mut net, &mut opt, &batch, &diff, cfg.epochs, &cfg.objective())
                    .map_err(|e| e.at(k, "train"))?,
            )
        } else {
            None
        };
        batch.push(diff.clone()).map_err(|e| e.at(k, "pdd"))?;

        self.targets = carried;
        self.reported = mature.clone();
        self.prev_phd = phd.clone();
        self.batch = batch;
        self.net = net;
        self.opt = opt;
        self.label_counter = label_counter;
        self.frame = k;
        self.rng = rng;
        self.immature = immature;
        Ok(StepOutput { estimates: mature, predicted, phd, pdd: diff, losses, fallback })
    }
}

/// Tracks and evaluation of one sequence.
#[derive(Clone, Debug)]
pub struct RunOutput<T: Real> {
    pub tracks: FrameBoxes<T>,
    /// Per-frame OSPA against ground-truth centers, when ground truth exists.
    pub ospa: Option<Vec<(u32, Ospa<T>)>>,
    pub mot: Option<MotSummary>,
    pub report: MetricReport,
    /// Training objective per epoch, keyed by frame.
    pub losses: BTreeMap<u32, Vec<T>>,
    pub fallbacks: usize,
}

pub fn boxes_of<T: Real>(set: &TargetSet<T>) -> Vec<LabelledBox<T>> {
    set.iter().map(|t| LabelledBox::new(t.label, t.mean)).collect()
}

/// Runs every frame of `seq` in order. `observe` sees each frame's output.
pub fn run<T: Real>(
    cfg: &PipelineConfig,
    seq: &SequenceData<T>,
    mut observe: impl FnMut(&StepOutput<T>),
) -> Result<RunOutput<T>> {
    let last = seq.frame_count.max(seq.detections.keys().next_back().copied().unwrap_or(0));
    if last == 0 {
        return Err(Error::Config(format!("sequence `{}` has no frames", seq.name)));
    }
    let mut state = PipelineState::new(cfg, seq.image_extent)?;
    let ocfg = cfg.ospa::<T>();
    let mut tracks = FrameBoxes::new();
    let mut per_frame = seq.ground_truth.as_ref().map(|_| Vec::new());
    let mut losses = BTreeMap::new();
    let mut fallbacks = 0;

    for k in 1..=last {
        let out = state.step(&seq.measurements(k), cfg)?;
        observe(&out);
        fallbacks += out.fallback as usize;
        if let Some(l) = out.losses {
            losses.insert(k, l);
        }
        let boxes = boxes_of(&out.estimates);
        if let (Some(gt), Some(series)) = (&seq.ground_truth, per_frame.as_mut()) {
            let truth: Vec<Vec2<T>> = gt.get(&k).map_or_else(Vec::new, |v| v.iter().map(|b| b.center()).collect());
            let est: Vec<Vec2<T>> = boxes.iter().map(|b| b.center()).collect();
            series.push((k, ospa(&est, &truth, &ocfg)));
        }
        if !boxes.is_empty() {
            tracks.insert(k, boxes);
        }
    }

    let mot = match &seq.ground_truth {
        Some(gt) => Some(clear_mot(&tracks, gt, T::lit(cfg.iou_thresh))?),
        None => None,
    };
    let report = MetricReport {
        name: seq.name.clone(),
        ospa: per_frame.as_ref().map(|s| mean_ospa(&s.iter().map(|(_, o)| *o).collect::<Vec<_>>())),
        recall: mot.as_ref().map_or(f64::NAN, |m| m.recall),
        precision: mot.as_ref().map_or(f64::NAN, |m| m.precision),
        mota: mot.as_ref().map_or(f64::NAN, |m| m.mota),
        motal: mot.as_ref().map_or(f64::NAN, |m| m.motal),
    };
    Ok(RunOutput { tracks, ospa: per_frame, mot, report, losses, fallbacks })
}

/// Writes `<name>.txt`, `config.txt`, and with ground truth `report.csv` and
/// `ospa.csv`, into `out`.
pub fn write_run<T: Real>(out: &Path, cfg: &PipelineConfig, result: &RunOutput<T>) -> Result<()> {
    fs::create_dir_all(out)?;
    write_results(&result.tracks, fs::File::create(out.join(format!("{}.txt", result.report.name)))?)?;
    fs::write(out.join("config.txt"), cfg.echo())?;
    if let Some(series) = &result.ospa {
        let mut text = String::from("frame,OSPA,OSPA-Loc,OSPA-Card\n");
        for (k, o) in series {
            text.push_str(&format!("{k},{:.6},{:.6},{:.6}\n", o.overall, o.loc, o.card));
        }
        fs::write(out.join("ospa.csv"), text)?;
        fs::write(out.join("report.csv"), format!("{}\n{}\n", MetricReport::HEADER, result.report.row()))?;
    }
    Ok(())
}

/// Writes the predicted, updated and difference maps of one frame as PGM.
pub fn dump_maps<T: Real>(dir: &Path, out: &StepOutput<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let k = out.phd.frame;
    let maps: [(&str, &Array2<T>); 3] =
        [("pred", &out.predicted.values), ("phd", &out.phd.values), ("pdd", &out.pdd.values)];
    for (tag, values) in maps {
        dump_map(values.view(), fs::File::create(dir.join(format!("{tag}_{k:06}.pgm")))?, MapFormat::Pgm)?;
    }
    Ok(())
}
