use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pddtrack::convlstm::LossKind;
use pddtrack::io::{load_sequence, parse_ground_truth, write_sequence};
use pddtrack::metrics::{clear_mot, mean_ospa, ospa, FrameBoxes, MetricReport, OspaConfig};
use pddtrack::pipeline::{dump_maps, run, write_run, PipelineConfig, Precision};
use pddtrack::scalar::Vec2;
use pddtrack::simulate::{gen_scenario, ScenarioSpec};
use pddtrack::{selftest, Real};

#[derive(Parser)]
#[command(name = "track", version, about = "Multi-target tracking with PHD difference prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track one MOT-format sequence directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seq: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        loss: Option<LossKind>,
        #[arg(long)]
        seed: Option<u64>,
        /// Write predicted, updated and difference maps as PGM files.
        #[arg(long)]
        dump_maps: bool,
    },
    /// Generate a synthetic sequence directory from a scenario file.
    Simulate {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a results file against ground truth.
    Eval {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        iou: f64,
    },
    /// Run the built-in oracle checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn track<T: Real>(cfg: &PipelineConfig, seq_dir: &Path, out: &Path, dump: bool) -> Result<()> {
    let seq = load_sequence::<T>(seq_dir, cfg.conf_thresh)
        .with_context(|| format!("reading sequence {}", seq_dir.display()))?;
    let maps = out.join("maps");
    let mut dump_err = None;
    let result = run(cfg, &seq, |step| {
        if dump && dump_err.is_none() {
            dump_err = dump_maps(&maps, step).err();
        }
    })?;
    if let Some(e) = dump_err {
        return Err(e).context("writing maps");
    }
    write_run(out, cfg, &result)?;
    if result.fallbacks > 0 {
        eprintln!("note: {} frame(s) fell back to persistence prediction", result.fallbacks);
    }
    if seq.ground_truth.is_some() {
        println!("{}\n{}", MetricReport::HEADER, result.report.row());
    } else {
        println!("wrote {} frames of tracks to {}", seq.frame_count, out.display());
    }
    Ok(())
}

fn eval(tracks: &Path, gt: &Path, iou: f64) -> Result<()> {
    let read = |p: &Path| -> Result<FrameBoxes<f64>> {
        let f = fs::File::open(p).with_context(|| format!("opening {}", p.display()))?;
        parse_ground_truth(BufReader::new(f)).with_context(|| format!("parsing {}", p.display()))
    };
    let (trk, truth) = (read(tracks)?, read(gt)?);
    let mot = clear_mot(&trk, &truth, iou)?;
    let last = trk.keys().chain(truth.keys()).copied().max().unwrap_or(0);
    let cfg = OspaConfig::default();
    let centers = |m: &FrameBoxes<f64>, k: u32| -> Vec<Vec2<f64>> {
        m.get(&k).map_or_else(Vec::new, |v| v.iter().map(|b| b.center()).collect())
    };
    let per_frame: Vec<_> = (1..=last).map(|k| ospa(&centers(&trk, k), &centers(&truth, k), &cfg)).collect();
    let report = MetricReport {
        name: tracks.file_stem().map_or_else(|| "tracks".into(), |s| s.to_string_lossy().into_owned()),
        ospa: Some(mean_ospa(&per_frame)),
        recall: mot.recall,
        precision: mot.precision,
        mota: mot.mota,
        motal: mot.motal,
    };
    println!("{}\n{}", MetricReport::HEADER, report.row());
    Ok(())
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, seq, out, loss, seed, dump_maps } => {
            let text = fs::read_to_string(&config).with_context(|| format!("reading {}", config.display()))?;
            let mut cfg = PipelineConfig::parse(&text).with_context(|| format!("in {}", config.display()))?;
            if let Some(l) = loss {
                cfg.loss = l;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            match cfg.precision {
                Precision::F32 => track::<f32>(&cfg, &seq, &out, dump_maps)?,
                Precision::F64 => track::<f64>(&cfg, &seq, &out, dump_maps)?,
            }
        }
        Command::Simulate { spec, out } => {
            let text = fs::read_to_string(&spec).with_context(|| format!("reading {}", spec.display()))?;
            let s = ScenarioSpec::parse(&text).with_context(|| format!("in {}", spec.display()))?;
            let seq = gen_scenario::<f64>(&s)?.into_sequence(&s);
            write_sequence(&out, &seq)?;
            println!("wrote {} frames to {}", s.frame_count, out.display());
        }
        Command::Eval { tracks, gt, iou } => eval(&tracks, &gt, iou)?,
        Command::Selftest { seed } => {
            let checks = selftest::run_all(seed);
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
