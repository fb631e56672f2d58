//! One-pass evaluation on OTB-style sequences: loading, metrics, aggregation
//! and result files.
//!
//! Run files are JSON lines `{"frame":1,"x":..,"y":..,"w":..,"h":..}` with
//! 1-based frame numbers and 1-based pixel coordinates, matching the ground
//! truth convention. Per-frame wall time goes to a `.timing.jsonl` sidecar so
//! the run file itself is reproducible byte for byte.

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::Frame;
use crate::synthetic::SyntheticSequence;
use crate::tracker::{BBox, Tracker, TrackerConfig};

pub const ATTRIBUTES: [&str; 11] = ["IV", "SV", "OCC", "DEF", "MB", "FM", "IPR", "OPR", "OV", "BC", "LR"];

/// Center-error thresholds of the precision curve: 0..=50 px.
pub const PRECISION_THRESHOLDS: usize = 51;
/// Overlap thresholds of the success curve: 0, 0.05, ..., 1.
pub const SUCCESS_THRESHOLDS: usize = 21;
pub const DP_THRESHOLD: f64 = 20.0;

#[derive(Debug, Clone)]
pub enum FrameSource {
    Files(Vec<PathBuf>),
    Memory(Vec<Frame>),
}

#[derive(Debug, Clone)]
pub struct Sequence {
    pub name: String,
    pub frames: FrameSource,
    /// 0-based boxes.
    pub groundtruth: Vec<BBox>,
    pub attributes: Vec<String>,
}

impl Sequence {
    pub fn new(name: impl Into<String>, frames: FrameSource, groundtruth: Vec<BBox>) -> Result<Self> {
        let name = name.into();
        let count = match &frames {
            FrameSource::Files(f) => f.len(),
            FrameSource::Memory(f) => f.len(),
        };
        if count == 0 {
            return Err(Error::Sequence {
                path: PathBuf::from(&name),
                reason: "no frames".into(),
            });
        }
        if count != groundtruth.len() {
            return Err(Error::Sequence {
                path: PathBuf::from(&name),
                reason: format!("{} ground-truth boxes for {count} frames", groundtruth.len()),
            });
        }
        Ok(Self {
            name,
            frames,
            groundtruth,
            attributes: Vec::new(),
        })
    }

    pub fn from_synthetic(name: impl Into<String>, seq: SyntheticSequence) -> Result<Self> {
        Self::new(name, FrameSource::Memory(seq.frames), seq.groundtruth)
    }

    pub fn len(&self) -> usize {
        self.groundtruth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groundtruth.is_empty()
    }

    pub fn frame(&self, i: usize) -> Result<Cow<'_, Frame>> {
        match &self.frames {
            FrameSource::Files(paths) => Ok(Cow::Owned(Frame::open(&paths[i])?)),
            FrameSource::Memory(frames) => Ok(Cow::Borrowed(&frames[i])),
        }
    }
}

fn sequence_error(path: &Path, reason: impl Into<String>) -> Error {
    Error::Sequence {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Parses ground truth lines `x,y,w,h` (comma, tab or space separated,
/// 1-based) into 0-based boxes. Blank lines are skipped.
pub fn parse_groundtruth(text: &str, path: &Path) -> Result<Vec<BBox>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|f| !f.is_empty()).collect();
        let bad = || sequence_error(path, format!("line {}: expected x,y,w,h, found '{line}'", i + 1));
        if fields.len() != 4 {
            return Err(bad());
        }
        let v: Vec<f64> = fields.iter().map(|f| f.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad())?;
        let b = BBox::new(v[0] - 1.0, v[1] - 1.0, v[2], v[3]).map_err(|_| bad())?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// Loads `dir/img/*.{jpg,png}` and `dir/groundtruth_rect.txt`. An optional
/// `attributes.txt` lists attribute tags separated by commas or whitespace.
pub fn load_sequence(dir: &Path) -> Result<Sequence> {
    let img = dir.join("img");
    let entries = fs::read_dir(&img).map_err(|e| sequence_error(&img, e.to_string()))?;
    let mut frames: Vec<(u64, PathBuf)> = Vec::new();
    for entry in entries {
        let path = entry?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        if !matches!(ext.as_deref(), Some("jpg" | "jpeg" | "png")) {
            continue;
        }
        let Some(number) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse::<u64>().ok()) else {
            continue;
        };
        frames.push((number, path));
    }
    frames.sort();
    let gt_path = dir.join("groundtruth_rect.txt");
    let text = fs::read_to_string(&gt_path).map_err(|e| sequence_error(&gt_path, e.to_string()))?;
    let groundtruth = parse_groundtruth(&text, &gt_path)?;
    if frames.is_empty() {
        return Err(sequence_error(&img, "no numbered .jpg or .png frames"));
    }
    if frames.len() != groundtruth.len() {
        return Err(sequence_error(
            dir,
            format!("{} ground-truth boxes for {} frames", groundtruth.len(), frames.len()),
        ));
    }
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("sequence").to_string();
    let mut seq = Sequence::new(name, FrameSource::Files(frames.into_iter().map(|(_, p)| p).collect()), groundtruth)?;
    let attr_path = dir.join("attributes.txt");
    if attr_path.exists() {
        let text = fs::read_to_string(&attr_path)?;
        for tag in text.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let tag = tag.to_ascii_uppercase();
            if !ATTRIBUTES.contains(&tag.as_str()) {
                return Err(sequence_error(&attr_path, format!("unknown attribute '{tag}'")));
            }
            seq.attributes.push(tag);
        }
    }
    Ok(seq)
}

/// Sequence directories under `root`, sorted by name.
pub fn list_sequences(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| sequence_error(root, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("groundtruth_rect.txt").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

pub fn center_error(a: &BBox, b: &BBox) -> f64 {
    let (ay, ax) = a.center();
    let (by, bx) = b.center();
    (ay - by).hypot(ax - bx)
}

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let w = (a.x + a.w).min(b.x + b.w) - a.x.max(b.x);
    let h = (a.y + a.h).min(b.y + b.h) - a.y.max(b.y);
    if w <= 0.0 || h <= 0.0 {
        return 0.0;
    }
    let inter = w * h;
    inter / (a.area() + b.area() - inter)
}

/// `(threshold, fraction of frames with center error <= threshold)`.
pub fn precision_curve(pred: &[BBox], gt: &[BBox]) -> Vec<(f64, f64)> {
    let errors: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| center_error(p, g)).collect();
    (0..PRECISION_THRESHOLDS)
        .map(|t| {
            let t = t as f64;
            (t, fraction(&errors, |e| e <= t))
        })
        .collect()
}

/// `(threshold, fraction of frames with overlap >= threshold)`; threshold 1 included.
pub fn success_curve(pred: &[BBox], gt: &[BBox]) -> Vec<(f64, f64)> {
    let overlaps: Vec<f64> = pred.iter().zip(gt).map(|(p, g)| iou(p, g)).collect();
    (0..SUCCESS_THRESHOLDS)
        .map(|i| {
            let t = i as f64 / (SUCCESS_THRESHOLDS - 1) as f64;
            (t, fraction(&overlaps, |o| o >= t))
        })
        .collect()
}

fn fraction(values: &[f64], pass: impl Fn(f64) -> bool) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().filter(|&&v| pass(v)).count() as f64 / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpeResult {
    pub sequence: String,
    pub attributes: Vec<String>,
    pub boxes: Vec<BBox>,
    pub precision: Vec<(f64, f64)>,
    pub success: Vec<(f64, f64)>,
    pub dp20: f64,
    pub auc: f64,
    pub fps: f64,
    /// Wall time of init (frame 0) and each step, in milliseconds.
    pub frame_ms: Vec<f64>,
    /// `(frame index, message)` for frames whose step failed.
    pub failures: Vec<(usize, String)>,
}

impl OpeResult {
    /// Metrics from stored boxes; timing fields are left empty.
    pub fn from_boxes(sequence: &Sequence, boxes: Vec<BBox>) -> Result<Self> {
        if boxes.len() != sequence.len() {
            return Err(Error::param(format!("{} boxes for a {}-frame sequence", boxes.len(), sequence.len())));
        }
        let precision = precision_curve(&boxes, &sequence.groundtruth);
        let success = success_curve(&boxes, &sequence.groundtruth);
        let dp20 = precision[DP_THRESHOLD as usize].1;
        let auc = success.iter().map(|s| s.1).sum::<f64>() / success.len() as f64;
        Ok(Self {
            sequence: sequence.name.clone(),
            attributes: sequence.attributes.clone(),
            boxes,
            precision,
            success,
            dp20,
            auc,
            fps: 0.0,
            frame_ms: Vec::new(),
            failures: Vec::new(),
        })
    }
}

fn clamp_to_frame(b: BBox, frame: &Frame) -> BBox {
    let (cy, cx) = b.center();
    BBox::from_center((cy.clamp(0.0, frame.height() as f64), cx.clamp(0.0, frame.width() as f64)), b.h, b.w)
}

/// Initializes on the first ground-truth box and steps through every later
/// frame once. A failed step keeps the previous box (pulled onto the frame)
/// and is recorded; only a failed initialization aborts the run.
pub fn run_ope(cfg: &TrackerConfig, seq: &Sequence) -> Result<OpeResult> {
    let first = seq.frame(0)?;
    let start = Instant::now();
    let mut tracker = Tracker::init(&first, seq.groundtruth[0], cfg.clone())?;
    let mut frame_ms = vec![start.elapsed().as_secs_f64() * 1e3];
    let mut boxes = vec![seq.groundtruth[0]];
    let mut failures = Vec::new();
    for i in 1..seq.len() {
        let frame = seq.frame(i)?;
        let start = Instant::now();
        let outcome = tracker.step(&frame);
        frame_ms.push(start.elapsed().as_secs_f64() * 1e3);
        match outcome {
            Ok(report) => boxes.push(report.bbox),
            Err(e) => {
                log::warn!("{}: frame {}: {e}", seq.name, i + 1);
                failures.push((i, e.to_string()));
                boxes.push(clamp_to_frame(*boxes.last().expect("first box is present"), &frame));
            }
        }
    }
    let mut result = OpeResult::from_boxes(seq, boxes)?;
    let total_s: f64 = frame_ms.iter().sum::<f64>() / 1e3;
    result.fps = if total_s > 0.0 { seq.len() as f64 / total_s } else { f64::INFINITY };
    result.frame_ms = frame_ms;
    result.failures = failures;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeSummary {
    pub sequences: usize,
    pub mean_dp: f64,
    pub mean_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub sequences: usize,
    pub mean_dp: f64,
    pub mean_auc: f64,
    pub mean_fps: f64,
    /// Only attributes carried by at least one sequence appear.
    pub attributes: BTreeMap<String, AttributeSummary>,
}

/// Unweighted means over sequences.
pub fn aggregate(results: &[OpeResult]) -> Result<Summary> {
    if results.is_empty() {
        return Err(Error::param("nothing to aggregate"));
    }
    let mean = |f: &dyn Fn(&OpeResult) -> f64, set: &[&OpeResult]| set.iter().map(|r| f(r)).sum::<f64>() / set.len() as f64;
    let all: Vec<&OpeResult> = results.iter().collect();
    let mut attributes = BTreeMap::new();
    for tag in ATTRIBUTES {
        let set: Vec<&OpeResult> = results.iter().filter(|r| r.attributes.iter().any(|a| a == tag)).collect();
        if set.is_empty() {
            continue;
        }
        attributes.insert(
            tag.to_string(),
            AttributeSummary {
                sequences: set.len(),
                mean_dp: mean(&|r| r.dp20, &set),
                mean_auc: mean(&|r| r.auc, &set),
            },
        );
    }
    Ok(Summary {
        sequences: results.len(),
        mean_dp: mean(&|r| r.dp20, &all),
        mean_auc: mean(&|r| r.auc, &all),
        mean_fps: mean(&|r| r.fps, &all),
        attributes,
    })
}

#[derive(Serialize, Deserialize)]
struct RunRecord {
    frame: usize,
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

#[derive(Serialize, Deserialize)]
struct TimingRecord {
    frame: usize,
    ms: f64,
}

fn write_lines<T: Serialize>(path: &Path, records: impl Iterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut out, &r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Sidecar path holding per-frame timing for a run file.
pub fn timing_path(run: &Path) -> PathBuf {
    run.with_extension("timing.jsonl")
}

/// Writes the run file and, when timing is present, its sidecar.
pub fn write_run(path: &Path, result: &OpeResult) -> Result<()> {
    write_lines(
        path,
        result.boxes.iter().enumerate().map(|(i, b)| RunRecord {
            frame: i + 1,
            x: b.x + 1.0,
            y: b.y + 1.0,
            w: b.w,
            h: b.h,
        }),
    )?;
    if !result.frame_ms.is_empty() {
        write_lines(
            &timing_path(path),
            result.frame_ms.iter().enumerate().map(|(i, &ms)| TimingRecord { frame: i + 1, ms }),
        )?;
    }
    Ok(())
}

/// Reads the 0-based boxes back from a run file.
pub fn read_run(path: &Path) -> Result<Vec<BBox>> {
    let file = fs::File::open(path).map_err(|e| sequence_error(path, e.to_string()))?;
    let mut boxes = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let r: RunRecord = serde_json::from_str(&line).map_err(|e| sequence_error(path, format!("line {}: {e}", i + 1)))?;
        if r.frame != boxes.len() + 1 {
            return Err(sequence_error(path, format!("line {}: expected frame {}, found {}", i + 1, boxes.len() + 1, r.frame)));
        }
        boxes.push(BBox::new(r.x - 1.0, r.y - 1.0, r.w, r.h).map_err(|e| sequence_error(path, format!("line {}: {e}", i + 1)))?);
    }
    Ok(boxes)
}

/// One row per tracker: `tracker,sequences,mean_dp,mean_auc,mean_fps`, the
/// means as percentages except FPS.
pub fn write_summary_csv(path: &Path, rows: &[(String, Summary)]) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    writeln!(out, "tracker,sequences,mean_dp,mean_auc,mean_fps")?;
    for (name, s) in rows {
        writeln!(out, "{name},{},{:.1},{:.1},{:.2}", s.sequences, 100.0 * s.mean_dp, 100.0 * s.mean_auc, s.mean_fps)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_summary_json(path: &Path, rows: &[(String, Summary)]) -> Result<()> {
    let map: BTreeMap<&str, &Summary> = rows.iter().map(|(n, s)| (n.as_str(), s)).collect();
    fs::write(path, serde_json::to_string_pretty(&map)? + "\n")?;
    Ok(())
}

#[derive(Serialize)]
struct Curves<'a> {
    sequence: &'a str,
    precision: &'a [(f64, f64)],
    success: &'a [(f64, f64)],
}

/// Curve data as `(threshold, value)` pairs for external plotting.
pub fn write_curves(path: &Path, result: &OpeResult) -> Result<()> {
    let curves = Curves {
        sequence: &result.sequence,
        precision: &result.precision,
        success: &result.success,
    };
    fs::write(path, serde_json::to_string(&curves)? + "\n")?;
    Ok(())
}

/// Plain-text table: tracker, mean DP (%), mean AUC (%), mean FPS.
pub fn format_table(rows: &[(String, Summary)]) -> String {
    let mut s = format!("{:<10} {:>12} {:>13} {:>9}\n", "Tracker", "Mean DP (%)", "Mean AUC (%)", "Mean FPS");
    for (name, r) in rows {
        s += &format!("{:<10} {:>12.1} {:>13.1} {:>9.2}\n", name, 100.0 * r.mean_dp, 100.0 * r.mean_auc, r.mean_fps);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox {
        BBox::new(x, y, w, h).unwrap()
    }

    fn gray_sequence(gt: Vec<BBox>) -> Sequence {
        let frames = gt.iter().map(|_| Frame::from_fn(8, 8, 1, |_, _, _| 0.0).unwrap()).collect();
        Sequence::new("fixture", FrameSource::Memory(frames), gt).unwrap()
    }

    #[test]
    fn center_error_and_iou_basics() {
        let a = b(0.0, 0.0, 1.0, 1.0);
        assert_eq!(center_error(&a, &a), 0.0);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &b(5.0, 5.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou(&a, &b(1.0, 0.0, 1.0, 1.0)), 0.0);
        assert_eq!(iou(&b(0.0, 0.0, 2.0, 1.0), &b(1.0, 0.0, 2.0, 1.0)), 1.0 / 3.0);
        assert_eq!(center_error(&a, &b(3.0, 4.0, 1.0, 1.0)), 5.0);
    }

    #[test]
    fn perfect_prediction_scores_one() {
        let gt = vec![b(1.0, 2.0, 10.0, 12.0), b(3.0, 2.0, 10.0, 12.0), b(5.0, 4.0, 11.0, 12.0)];
        let r = OpeResult::from_boxes(&gray_sequence(gt.clone()), gt).unwrap();
        assert_eq!(r.dp20, 1.0);
        assert_eq!(r.auc, 1.0);
        assert!(r.precision.iter().all(|p| p.1 == 1.0));
    }

    #[test]
    fn shifted_prediction_precision_steps_at_25() {
        let gt = vec![b(0.0, 0.0, 10.0, 10.0); 4];
        let pred = vec![b(25.0, 0.0, 10.0, 10.0); 4];
        let r = OpeResult::from_boxes(&gray_sequence(gt), pred).unwrap();
        assert_eq!(r.dp20, 0.0);
        for (t, v) in &r.precision {
            assert_eq!(*v, if *t >= 25.0 { 1.0 } else { 0.0 });
        }
        assert_eq!(r.auc, 1.0 / 21.0);
    }

    #[test]
    fn curves_are_monotone() {
        let gt: Vec<BBox> = (0..10).map(|i| b(i as f64, 0.0, 10.0, 10.0)).collect();
        let pred: Vec<BBox> = (0..10).map(|i| b(i as f64 * 2.5, 1.0, 9.0 + i as f64 * 0.3, 10.0)).collect();
        let p = precision_curve(&pred, &gt);
        let s = success_curve(&pred, &gt);
        assert!(p.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!(s.windows(2).all(|w| w[0].1 >= w[1].1));
        assert_eq!(s[0], (0.0, 1.0));
        assert_eq!(s[20].0, 1.0);
        assert_eq!(s[1].0, 0.05);
    }

    #[test]
    fn aggregation() {
        let gt = vec![b(0.0, 0.0, 10.0, 10.0); 2];
        let seq = gray_sequence(gt.clone());
        let mut good = OpeResult::from_boxes(&seq, gt.clone()).unwrap();
        good.fps = 10.0;
        good.attributes = vec!["SV".into()];
        let mut bad = OpeResult::from_boxes(&seq, vec![b(100.0, 100.0, 10.0, 10.0); 2]).unwrap();
        bad.fps = 20.0;
        let single = aggregate(std::slice::from_ref(&good)).unwrap();
        assert_eq!((single.mean_dp, single.mean_auc, single.mean_fps), (good.dp20, good.auc, good.fps));
        let both = aggregate(&[good, bad]).unwrap();
        assert_eq!(both.mean_dp, 0.5);
        assert_eq!(both.mean_fps, 15.0);
        assert_eq!(both.attributes.len(), 1);
        assert_eq!(both.attributes["SV"].sequences, 1);
        assert!(!both.attributes.contains_key("OCC"));
        assert!(aggregate(&[]).is_err());
    }

    #[test]
    fn groundtruth_parsing() {
        let p = Path::new("gt.txt");
        let comma = parse_groundtruth("1,2,30,40\n11,12,30,40\n", p).unwrap();
        let tab = parse_groundtruth("1\t2\t30\t40\n\n11\t12\t30\t40", p).unwrap();
        assert_eq!(comma, tab);
        assert_eq!(comma[0], b(0.0, 1.0, 30.0, 40.0));
        let err = parse_groundtruth("1,2,3,4\n1,2,x,4\n", p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_groundtruth("1,2,0,4\n", p).is_err());
    }

    #[test]
    fn sequence_length_checks() {
        let frames = FrameSource::Memory(vec![Frame::from_fn(4, 4, 1, |_, _, _| 0.0).unwrap()]);
        let err = Sequence::new("s", frames, vec![b(0.0, 0.0, 1.0, 1.0); 2]).unwrap_err().to_string();
        assert!(err.contains('2') && err.contains('1'), "{err}");
        assert!(Sequence::new("s", FrameSource::Memory(vec![]), vec![]).is_err());
    }

    #[test]
    fn run_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let gt = vec![b(0.5, 1.25, 10.0, 12.0), b(2.0, 3.0, 10.5, 12.0)];
        let mut r = OpeResult::from_boxes(&gray_sequence(gt.clone()), gt.clone()).unwrap();
        r.frame_ms = vec![1.0, 2.0];
        let path = dir.path().join("run.jsonl");
        write_run(&path, &r).unwrap();
        assert_eq!(read_run(&path).unwrap(), gt);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), r#"{"frame":1,"x":1.5,"y":2.25,"w":10.0,"h":12.0}"#);
        assert!(timing_path(&path).exists());
        fs::write(&path, "{\"frame\":2,\"x\":1,\"y\":1,\"w\":1,\"h\":1}\n").unwrap();
        assert!(read_run(&path).is_err());
    }

    #[test]
    fn summary_files() {
        let dir = tempfile::tempdir().unwrap();
        let gt = vec![b(0.0, 0.0, 4.0, 4.0)];
        let r = OpeResult::from_boxes(&gray_sequence(gt.clone()), gt).unwrap();
        let rows = vec![("kscf".to_string(), aggregate(std::slice::from_ref(&r)).unwrap())];
        write_summary_csv(&dir.path().join("s.csv"), &rows).unwrap();
        let csv = fs::read_to_string(dir.path().join("s.csv")).unwrap();
        assert_eq!(csv, "tracker,sequences,mean_dp,mean_auc,mean_fps\nkscf,1,100.0,100.0,0.00\n");
        write_summary_json(&dir.path().join("s.json"), &rows).unwrap();
        write_curves(&dir.path().join("c.json"), &r).unwrap();
        assert!(format_table(&rows).contains("Mean DP (%)"));
    }
}
