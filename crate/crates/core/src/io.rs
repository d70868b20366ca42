//! MOT-challenge text formats, sequence directories and map dumps.
//!
//! Detections: `frame,id,left,top,width,height,conf,x,y,z`.
//! Ground truth: `frame,id,left,top,width,height,active,class,visibility`;
//! rows with `active == 0` are dropped. Results use the detection layout
//! with the track label in the id column.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::ArrayView2;

use crate::error::{Error, Result};
use crate::metrics::{FrameBoxes, LabelledBox};
use crate::scalar::{Real, Vec2, Vec4};
use crate::update::MeasurementSet;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParsedDetections<T: Real> {
    pub frames: BTreeMap<u32, MeasurementSet<T>>,
    /// Rows dropped for a non-positive width or height.
    pub skipped: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceData<T: Real> {
    pub name: String,
    pub frame_count: u32,
    pub image_extent: Vec2<T>,
    pub detections: BTreeMap<u32, MeasurementSet<T>>,
    pub ground_truth: Option<FrameBoxes<T>>,
}

impl<T: Real> SequenceData<T> {
    /// Detections of frame `k`, empty when none were recorded.
    pub fn measurements(&self, k: u32) -> MeasurementSet<T> {
        self.detections.get(&k).cloned().unwrap_or_else(|| MeasurementSet::new(k, Vec::new()))
    }
}

struct Row {
    frame: u32,
    id: i64,
    bbox: [f64; 4],
    extra: Vec<f64>,
}

fn parse_row(line: &str, lineno: usize, min_fields: usize) -> Result<Option<Row>> {
    let line = line.trim();
    if line.is_empty() || line.starts_with('#') {
        return Ok(None);
    }
    let err = |msg: String| Error::Parse { line: lineno, msg };
    let fields: Vec<f64> = line
        .split(',')
        .map(|f| f.trim().parse::<f64>().map_err(|_| err(format!("`{}` is not a number", f.trim()))))
        .collect::<Result<_>>()?;
    if fields.len() < min_fields {
        return Err(err(format!("{} fields, expected at least {min_fields}", fields.len())));
    }
    if !fields.iter().all(|v| v.is_finite()) {
        return Err(err("non-finite value".into()));
    }
    let frame = fields[0];
    if frame < 1.0 || frame.fract() != 0.0 || frame > u32::MAX as f64 {
        return Err(err(format!("bad frame index {frame}")));
    }
    if fields[1].fract() != 0.0 {
        return Err(err(format!("bad id {}", fields[1])));
    }
    Ok(Some(Row {
        frame: frame as u32,
        id: fields[1] as i64,
        bbox: [fields[2], fields[3], fields[4], fields[5]],
        extra: fields[6..].to_vec(),
    }))
}

fn center_box<T: Real>(b: [f64; 4]) -> Vec4<T> {
    let [l, t, w, h] = b;
    Vec4::new(T::lit(l + w / 2.0), T::lit(t + h / 2.0), T::lit(w), T::lit(h))
}

/// Reads detections with confidence at least `conf_thresh`.
pub fn parse_detections<T: Real, R: BufRead>(source: R, conf_thresh: f64) -> Result<ParsedDetections<T>> {
    let mut out = ParsedDetections::default();
    for (i, line) in source.lines().enumerate() {
        let Some(row) = parse_row(&line?, i + 1, 7)? else { continue };
        let conf = row.extra[0];
        if conf < conf_thresh {
            continue;
        }
        if !(row.bbox[2] > 0.0 && row.bbox[3] > 0.0) {
            out.skipped += 1;
            continue;
        }
        let set = out.frames.entry(row.frame).or_insert_with(|| MeasurementSet {
            frame: row.frame,
            boxes: Vec::new(),
            confidences: Some(Vec::new()),
        });
        set.boxes.push(center_box(row.bbox));
        if let Some(c) = set.confidences.as_mut() {
            c.push(T::lit(conf));
        }
    }
    Ok(out)
}

/// Reads labelled boxes. Also accepts results files.
pub fn parse_ground_truth<T: Real, R: BufRead>(source: R) -> Result<FrameBoxes<T>> {
    let mut out: FrameBoxes<T> = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for (i, line) in source.lines().enumerate() {
        let Some(row) = parse_row(&line?, i + 1, 6)? else { continue };
        if row.extra.first().is_some_and(|&flag| flag == 0.0) {
            continue;
        }
        if !(row.bbox[2] > 0.0 && row.bbox[3] > 0.0) {
            return Err(Error::Parse { line: i + 1, msg: "non-positive box size".into() });
        }
        if !seen.insert((row.frame, row.id)) {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("duplicate id {} in frame {}", row.id, row.frame),
            });
        }
        out.entry(row.frame).or_default().push(LabelledBox::new(row.id, center_box(row.bbox)));
    }
    Ok(out)
}

fn write_row<T: Real, W: Write>(sink: &mut W, frame: u32, id: i64, b: &Vec4<T>, tail: &str) -> Result<()> {
    let half = T::lit(0.5);
    writeln!(sink, "{frame},{id},{},{},{},{},{tail}", b[0] - b[2] * half, b[1] - b[3] * half, b[2], b[3])?;
    Ok(())
}

/// Writes tracks ordered by frame, then label.
pub fn write_results<T: Real, W: Write>(tracks: &FrameBoxes<T>, mut sink: W) -> Result<()> {
    for (&frame, boxes) in tracks {
        let mut sorted: Vec<&LabelledBox<T>> = boxes.iter().collect();
        sorted.sort_by_key(|b| b.label);
        for b in sorted {
            write_row(&mut sink, frame, b.label, &b.bbox, "1,-1,-1,-1")?;
        }
    }
    Ok(())
}

pub fn write_detections<T: Real, W: Write>(dets: &BTreeMap<u32, MeasurementSet<T>>, mut sink: W) -> Result<()> {
    for (&frame, set) in dets {
        for (i, b) in set.boxes.iter().enumerate() {
            let conf = set.confidences.as_ref().and_then(|c| c.get(i)).map_or(1.0, |c| c.as_f64());
            write_row(&mut sink, frame, -1, b, &format!("{conf},-1,-1,-1"))?;
        }
    }
    Ok(())
}

pub fn write_ground_truth<T: Real, W: Write>(gt: &FrameBoxes<T>, mut sink: W) -> Result<()> {
    for (&frame, boxes) in gt {
        let mut sorted: Vec<&LabelledBox<T>> = boxes.iter().collect();
        sorted.sort_by_key(|b| b.label);
        for b in sorted {
            write_row(&mut sink, frame, b.label, &b.bbox, "1,1,1")?;
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MapFormat {
    /// Plain P2 graymap, values min-max scaled to 0..=255.
    Pgm,
    /// Raw values, one row per line.
    Csv,
}

pub fn dump_map<T: Real, W: Write>(values: ArrayView2<T>, mut sink: W, mode: MapFormat) -> Result<()> {
    let (rows, cols) = values.dim();
    match mode {
        MapFormat::Pgm => {
            writeln!(sink, "P2\n{cols} {rows}\n255")?;
            let lo = values.iter().fold(T::max_value().unwrap(), |a, &b| a.min(b));
            let hi = values.iter().fold(T::min_value().unwrap(), |a, &b| a.max(b));
            let range = hi - lo;
            for row in values.rows() {
                let px: Vec<String> = row
                    .iter()
                    .map(|&v| {
                        if range > T::zero() {
                            ((v - lo) / range * T::lit(255.0)).round().as_f64().clamp(0.0, 255.0).to_string()
                        } else {
                            "0".to_string()
                        }
                    })
                    .collect();
                writeln!(sink, "{}", px.join(" "))?;
            }
        }
        MapFormat::Csv => {
            for row in values.rows() {
                let v: Vec<String> = row.iter().map(|x| x.to_string()).collect();
                writeln!(sink, "{}", v.join(","))?;
            }
        }
    }
    Ok(())
}

/// `key=value` pairs from an ini file, section headers ignored.
pub fn parse_seqinfo(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| {
            let l = l.trim();
            if l.starts_with('[') || l.starts_with(';') || l.starts_with('#') {
                return None;
            }
            let (k, v) = l.split_once('=')?;
            Some((k.trim().to_string(), v.trim().to_string()))
        })
        .collect()
}

/// Loads `<dir>/det/det.txt`, and `gt/gt.txt` and `seqinfo.ini` when present.
///
/// Without `imWidth`/`imHeight` the extent is the far corner of all
/// detections padded by 10%.
pub fn load_sequence<T: Real>(dir: &Path, conf_thresh: f64) -> Result<SequenceData<T>> {
    let det = parse_detections::<T, _>(BufReader::new(fs::File::open(dir.join("det").join("det.txt"))?), conf_thresh)?;
    let gt_path = dir.join("gt").join("gt.txt");
    let ground_truth = if gt_path.exists() {
        Some(parse_ground_truth(BufReader::new(fs::File::open(gt_path)?))?)
    } else {
        None
    };
    let info = match fs::read_to_string(dir.join("seqinfo.ini")) {
        Ok(text) => parse_seqinfo(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => BTreeMap::new(),
        Err(e) => return Err(e.into()),
    };
    let num = |k: &str| -> Result<Option<f64>> {
        info.get(k)
            .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("seqinfo.ini: bad {k} `{v}`"))))
            .transpose()
    };

    let image_extent = match (num("imWidth")?, num("imHeight")?) {
        (Some(w), Some(h)) => Vec2::new(T::lit(w), T::lit(h)),
        _ => {
            let far = det.frames.values().flat_map(|s| s.boxes.iter()).fold((0.0f64, 0.0f64), |(x, y), b| {
                let (cx, cy, w, h) = (b[0].as_f64(), b[1].as_f64(), b[2].as_f64(), b[3].as_f64());
                (x.max(cx + w / 2.0), y.max(cy + h / 2.0))
            });
            Vec2::new(T::lit(far.0 * 1.1), T::lit(far.1 * 1.1))
        }
    };
    let last_frame = det
        .frames
        .keys()
        .chain(ground_truth.iter().flat_map(|g| g.keys()))
        .copied()
        .max()
        .unwrap_or(0);
    let frame_count = match num("seqLength")? {
        Some(n) => n as u32,
        None => last_frame,
    };
    let name = info.get("name").cloned().unwrap_or_else(|| {
        dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "sequence".into())
    });
    Ok(SequenceData { name, frame_count, image_extent, detections: det.frames, ground_truth })
}

/// Writes a sequence directory readable by [`load_sequence`].
pub fn write_sequence<T: Real>(dir: &Path, seq: &SequenceData<T>) -> Result<()> {
    fs::create_dir_all(dir.join("det"))?;
    write_detections(&seq.detections, fs::File::create(dir.join("det").join("det.txt"))?)?;
    if let Some(gt) = &seq.ground_truth {
        fs::create_dir_all(dir.join("gt"))?;
        write_ground_truth(gt, fs::File::create(dir.join("gt").join("gt.txt"))?)?;
    }
    fs::write(
        dir.join("seqinfo.ini"),
        format!(
            "[Sequence]\nname={}\nseqLength={}\nimWidth={}\nimHeight={}\n",
            seq.name, seq.frame_count, seq.image_extent[0], seq.image_extent[1]
        ),
    )?;
    Ok(())
}
