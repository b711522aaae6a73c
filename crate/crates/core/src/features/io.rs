//! JSONL dataset files: one header line, then one clip per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::types::validate_clip;
use crate::features::{BoundingBox, Clip, Dataset, DatasetHeader, Detection, Frame, Label};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDet {
    #[serde(rename = "box")]
    bbox: [f32; 4],
    conf: f32,
    app: Vec<f32>,
    track: Option<u32>,
    gt_player: Option<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFrame {
    feature: Vec<f32>,
    ball: Option<[f32; 2]>,
    dets: Vec<RawDet>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawClip {
    clip_id: String,
    label: i64,
    frames: Vec<RawFrame>,
}

impl From<&Clip> for RawClip {
    fn from(clip: &Clip) -> Self {
        RawClip {
            clip_id: clip.clip_id.clone(),
            label: clip.label.to_raw(),
            frames: clip
                .frames
                .iter()
                .map(|f| RawFrame {
                    feature: f.feature.clone(),
                    ball: f.ball,
                    dets: f
                        .detections
                        .iter()
                        .map(|d| RawDet {
                            bbox: d.bbox.to_array(),
                            conf: d.confidence,
                            app: d.appearance.clone(),
                            track: d.track_id,
                            gt_player: d.gt_player_id,
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn clip_from_raw(raw: RawClip, fps: f64, line: usize) -> Result<Clip> {
    let label = Label::from_raw(raw.label).ok_or_else(|| Error::Parse {
        line,
        message: format!("label {} is neither -1 nor a class index", raw.label),
    })?;
    let mut frames = Vec::with_capacity(raw.frames.len());
    for (index, f) in raw.frames.into_iter().enumerate() {
        let mut detections = Vec::with_capacity(f.dets.len());
        for d in f.dets {
            let bbox = BoundingBox::from_array(d.bbox).map_err(|e| Error::validation(format!("line {line}: {e}")))?;
            detections.push(Detection {
                bbox,
                appearance: d.app,
                confidence: d.conf,
                track_id: d.track,
                gt_player_id: d.gt_player,
            });
        }
        frames.push(Frame {
            index,
            feature: f.feature,
            detections,
            ball: f.ball,
        });
    }
    Ok(Clip {
        clip_id: raw.clip_id,
        label,
        fps,
        frames,
    })
}

/// Parses a dataset from any line source. Line numbers in errors are 1-based.
pub fn parse_dataset<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines().enumerate();
    let header: DatasetHeader = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::Parse {
                line: 1,
                message: e.to_string(),
            })?;
            serde_json::from_str(&line).map_err(|e| Error::Parse {
                line: 1,
                message: format!("header: {e}"),
            })?
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    if header.version != 1 {
        return Err(Error::Parse {
            line: 1,
            message: format!("unsupported dataset version {}", header.version),
        });
    }

    let mut clips = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawClip = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let clip = clip_from_raw(raw, header.fps, lineno)?;
        validate_clip(&header, &clip).map_err(|e| Error::validation(format!("line {lineno}: {e}")))?;
        clips.push(clip);
    }
    Ok(Dataset { header, clips })
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(BufReader::new(file))
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    serde_json::to_writer(&mut out, &dataset.header)?;
    out.write_all(b"\n")?;
    for clip in &dataset.clips {
        serde_json::to_writer(&mut out, &RawClip::from(clip))?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    for clip in &dataset.clips {
        validate_clip(&dataset.header, clip)?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_dataset_to(dataset, BufWriter::new(file)).map_err(|e| Error::io(path, e))
}
