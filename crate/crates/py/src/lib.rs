//! Python bindings: the math primitives, dataset generation and model scoring.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use keyactor::cli::RunConfig;
use keyactor::eval::{self, homography_dlt, score_clips};
use keyactor::features::{self, BoundingBox, Clip};
use keyactor::math::{self, ParamSet, Tensor};
use keyactor::model::{init_params, ModelConfig};
use keyactor::tracker::{self, CostMatrix, TrackerParams, FORBIDDEN};
use keyactor::training::{self, Checkpoint, TrainConfig};
use keyactor::Error;

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn bbox(c: [f32; 4]) -> PyResult<BoundingBox> {
    BoundingBox::from_array(c).map_err(to_py)
}

fn run_config(config: &str) -> PyResult<RunConfig> {
    RunConfig::from_toml(config).map_err(to_py)
}

/// Softmax of `scores / tau`.
#[pyfunction]
fn softmax_temp(scores: Vec<f32>, tau: f32) -> PyResult<Vec<f32>> {
    let t = Tensor::new(vec![scores.len()], scores).map_err(to_py)?;
    Ok(math::softmax_temp(&t, tau).map_err(to_py)?.data().to_vec())
}

/// Minimum-cost assignment. Infinite entries are forbidden pairs.
///
/// Returns the matched `(row, col)` pairs and their total cost.
#[pyfunction]
fn hungarian(costs: Vec<Vec<f64>>) -> PyResult<(Vec<(usize, usize)>, f64)> {
    let m = CostMatrix::from_rows(&costs).map_err(to_py)?;
    let a = tracker::hungarian(&m);
    Ok((a.pairs, a.total_cost))
}

/// Non-interpolated average precision; ties keep input order.
#[pyfunction]
fn average_precision(scores: Vec<f64>, labels: Vec<bool>) -> PyResult<f64> {
    eval::average_precision(&scores, &labels).map_err(to_py)
}

/// Intersection over union of two `[x_min, y_min, x_max, y_max]` boxes.
#[pyfunction]
fn iou(a: [f32; 4], b: [f32; 4]) -> PyResult<f64> {
    Ok(tracker::iou(&bbox(a)?, &bbox(b)?))
}

/// Multi-resolution occupancy of a box.
#[pyfunction]
#[pyo3(signature = (bbox_coords, levels = vec![2, 4, 6, 8]))]
fn spatial_feature(bbox_coords: [f32; 4], levels: Vec<usize>) -> PyResult<Vec<f32>> {
    let t = features::spatial_feature(&bbox(bbox_coords)?, &levels).map_err(to_py)?;
    Ok(t.data().to_vec())
}

/// Homography from point correspondences, with the reprojection RMS.
#[pyfunction]
fn homography(src: Vec<[f64; 2]>, dst: Vec<[f64; 2]>) -> PyResult<([[f64; 3]; 3], f64)> {
    let (h, rms) = homography_dlt(&src, &dst).map_err(to_py)?;
    Ok((h.m, rms))
}

type FrameDetection = ([f32; 4], Option<u32>);

/// A set of clips sharing one feature layout.
#[pyclass(module = "keyactor")]
struct Dataset {
    inner: features::Dataset,
}

#[pymethods]
impl Dataset {
    /// Generates clips from the `[synth]` table of a TOML config.
    #[staticmethod]
    #[pyo3(signature = (config = "", seed = None))]
    fn synth(config: &str, seed: Option<u64>) -> PyResult<Self> {
        let mut cfg = run_config(config)?.synth;
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(Self {
            inner: features::synth_dataset(&cfg).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: features::read_dataset(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        features::write_dataset(&self.inner, path).map_err(to_py)
    }

    /// Links detections into tracks and returns the mean agreement with the
    /// generator's player ids, if any clip carries them.
    fn link_tracks(&mut self) -> Option<f64> {
        let mut agreement = Vec::new();
        for clip in &mut self.inner.clips {
            tracker::link_tracks(clip, &TrackerParams::default());
            agreement.extend(tracker::gt_agreement(clip));
        }
        (!agreement.is_empty()).then(|| agreement.iter().sum::<f64>() / agreement.len() as f64)
    }

    fn __len__(&self) -> usize {
        self.inner.clips.len()
    }

    #[getter]
    fn clip_ids(&self) -> Vec<String> {
        self.inner.clips.iter().map(|c| c.clip_id.clone()).collect()
    }

    /// Raw labels: a class index, or -1 for background clips.
    #[getter]
    fn labels(&self) -> Vec<i64> {
        self.inner.clips.iter().map(|c| c.label.to_raw()).collect()
    }

    /// Detections per frame of one clip, as `(box, track_id)` pairs.
    fn detections(&self, clip: usize) -> PyResult<Vec<Vec<FrameDetection>>> {
        let c = self.clip(clip)?;
        Ok(c.frames
            .iter()
            .map(|f| f.detections.iter().map(|d| (d.bbox.to_array(), d.track_id)).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        let h = &self.inner.header;
        format!(
            "Dataset({} clips, k={}, d_frame={}, d_app={})",
            self.inner.clips.len(),
            h.k,
            h.d_frame,
            h.d_app
        )
    }
}

impl Dataset {
    fn clip(&self, index: usize) -> PyResult<&Clip> {
        self.inner
            .clips
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("clip index {index} out of range")))
    }
}

/// Model parameters with their configuration.
#[pyclass(module = "keyactor")]
struct Model {
    cfg: ModelConfig,
    params: ParamSet,
}

#[pymethods]
impl Model {
    /// Fresh parameters for the `[model]` table of a TOML config.
    #[staticmethod]
    #[pyo3(signature = (config = "", seed = 0))]
    fn init(config: &str, seed: u64) -> PyResult<Self> {
        let cfg = run_config(config)?.model;
        let params = init_params(&cfg, seed).map_err(to_py)?;
        Ok(Self { cfg, params })
    }

    /// Trains with the `[model]` and `[train]` tables and keeps the best checkpoint.
    #[staticmethod]
    #[pyo3(signature = (train, val, config = ""))]
    fn train(py: Python<'_>, train: &Dataset, val: &Dataset, config: &str) -> PyResult<Self> {
        let rc = run_config(config)?;
        let (cfg, tc): (ModelConfig, TrainConfig) = (rc.model, rc.train);
        let out = py
            .detach(|| training::train(&train.inner.clips, &val.inner.clips, &cfg, &tc))
            .map_err(to_py)?;
        Ok(Self {
            cfg,
            params: out.best.params,
        })
    }

    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let ck = training::load_checkpoint(&dir).map_err(to_py)?;
        Ok(Self {
            cfg: ck.model,
            params: ck.params,
        })
    }

    fn save(&self, dir: PathBuf) -> PyResult<()> {
        let ck = Checkpoint {
            model: self.cfg.clone(),
            train: TrainConfig::default(),
            step: 0,
            history: Vec::new(),
            params: self.params.clone(),
        };
        training::save_checkpoint(&ck, &dir).map_err(to_py)
    }

    #[getter]
    fn mode(&self) -> String {
        self.cfg.mode.to_string()
    }

    /// Clip-level class scores for every clip.
    fn scores(&self, py: Python<'_>, data: &Dataset) -> PyResult<Vec<Vec<f32>>> {
        let out = py
            .detach(|| score_clips(&self.params, &self.cfg, &data.inner.clips))
            .map_err(to_py)?;
        Ok(out.into_iter().map(|o| o.clip_scores).collect())
    }

    /// Attention weights per frame of one clip; empty for modes without attention.
    fn attention(&self, data: &Dataset, clip: usize) -> PyResult<Vec<Vec<f32>>> {
        let c = data.clip(clip)?;
        let out = score_clips(&self.params, &self.cfg, std::slice::from_ref(c)).map_err(to_py)?;
        Ok(out.into_iter().next().map(|o| o.attention).unwrap_or_default())
    }

    /// Mean average precision over the clip classes of `data`.
    fn evaluate(&self, py: Python<'_>, data: &Dataset) -> PyResult<f64> {
        py.detach(|| eval::classify_eval(&self.params, &self.cfg, &data.inner.clips))
            .map(|ap| ap.map)
            .map_err(to_py)
    }
}

#[pymodule]
#[pyo3(name = "keyactor")]
fn keyactor_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FORBIDDEN", FORBIDDEN)?;
    m.add_function(wrap_pyfunction!(softmax_temp, m)?)?;
    m.add_function(wrap_pyfunction!(hungarian, m)?)?;
    m.add_function(wrap_pyfunction!(average_precision, m)?)?;
    m.add_function(wrap_pyfunction!(iou, m)?)?;
    m.add_function(wrap_pyfunction!(spatial_feature, m)?)?;
    m.add_function(wrap_pyfunction!(homography, m)?)?;
    m.add_class::<Dataset>()?;
    m.add_class::<Model>()?;
    Ok(())
}
