//! Python bindings: scene and camera types, rendering, the ISP stages and
//! the file-based pipeline.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use serde::Serialize;
use splat::isp::{DenoiseMethod, ToneCurve, ToneParams};
use splat::pipeline::{self, EvalSource, PipelineConfig};
use splat::raw_io::{BayerPlane, Cfa};
use splat::render::{rasterize_forward, RasterConfig, View};
use splat::scene::PlyPrecision;

fn err(e: splat::Error) -> PyErr {
    match e {
        splat::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse<T: std::str::FromStr<Err = splat::Error>>(s: &str) -> PyResult<T> {
    s.parse().map_err(err)
}

fn to_py<T: Serialize>(py: Python<'_>, value: &T) -> PyResult<Py<PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Pinhole camera with focal length and principal point in pixels.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Camera(splat::camera::Camera);

#[pymethods]
impl Camera {
    #[new]
    #[pyo3(signature = (width, height, f, cx=None, cy=None))]
    fn new(width: usize, height: usize, f: f64, cx: Option<f64>, cy: Option<f64>) -> PyResult<Self> {
        let cx = cx.unwrap_or(width as f64 / 2.0);
        let cy = cy.unwrap_or(height as f64 / 2.0);
        splat::camera::Camera::new(1, width, height, f, cx, cy).map(Camera).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    fn __repr__(&self) -> String {
        let c = &self.0;
        format!("Camera({}x{}, f={}, cx={}, cy={})", c.width, c.height, c.f, c.cx, c.cy)
    }
}

/// World-to-camera pose, quaternion `(w, x, y, z)` plus translation.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct Pose(splat::camera::PoseRecord);

#[pymethods]
impl Pose {
    #[staticmethod]
    #[pyo3(signature = (eye, target, up=[0.0, 1.0, 0.0]))]
    fn look_at(eye: [f64; 3], target: [f64; 3], up: [f64; 3]) -> Self {
        Pose(splat::camera::PoseRecord::look_at(1, 1, "look_at", eye, target, up))
    }

    #[getter]
    fn q(&self) -> [f64; 4] {
        self.0.q
    }

    #[getter]
    fn t(&self) -> [f64; 3] {
        self.0.t
    }

    #[getter]
    fn center(&self) -> [f64; 3] {
        self.0.center().into()
    }
}

/// Three-channel `f64` image, row-major and interleaved.
#[pyclass(frozen, skip_from_py_object)]
#[derive(Clone)]
struct LinearImage(splat::isp::LinearImage);

#[pymethods]
impl LinearImage {
    #[new]
    fn new(width: usize, height: usize, data: Vec<f64>) -> PyResult<Self> {
        splat::isp::LinearImage::new(width, height, data).map(LinearImage).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        splat::isp::image::read_linear(&path).map(LinearImage).map_err(err)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        splat::isp::image::write_linear(&self.0, &path).map_err(err)
    }

    #[getter]
    fn width(&self) -> usize {
        self.0.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.0.height
    }

    #[getter]
    fn data(&self) -> Vec<f64> {
        self.0.data.clone()
    }

    /// Little-endian `f64` bytes, for `numpy.frombuffer`.
    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        let bytes: Vec<u8> = self.0.data.iter().flat_map(|v| v.to_le_bytes()).collect();
        PyBytes::new(py, &bytes)
    }

    fn pixel(&self, x: usize, y: usize) -> PyResult<[f64; 3]> {
        if x >= self.0.width || y >= self.0.height {
            return Err(PyIndexError::new_err(format!("pixel ({x}, {y}) out of range")));
        }
        Ok(self.0.pixel(x, y))
    }
}

/// Anisotropic 3D Gaussians with SH color and opacity logits.
#[pyclass(skip_from_py_object)]
#[derive(Clone, Default)]
struct GaussianCloud(splat::scene::GaussianCloud);

#[pymethods]
impl GaussianCloud {
    #[new]
    fn new() -> Self {
        Self::default()
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        splat::scene::load_ply(&path).map(GaussianCloud).map_err(err)
    }

    /// Seeds one Gaussian per point, sized by nearest-neighbour spacing.
    #[staticmethod]
    #[pyo3(signature = (positions, colors, fallback_scale=0.01))]
    fn from_points(positions: Vec<[f64; 3]>, colors: Vec<[f64; 3]>, fallback_scale: f64) -> PyResult<Self> {
        let n = positions.len();
        let seed = splat::colmap::SeedCloud {
            positions,
            colors,
            point_ids: (1..=n as u64).collect(),
        };
        splat::scene::init_from_seed(&seed, fallback_scale).map(GaussianCloud).map_err(err)
    }

    #[pyo3(signature = (path, double=true))]
    fn save(&self, path: PathBuf, double: bool) -> PyResult<()> {
        let precision = if double { PlyPrecision::F64 } else { PlyPrecision::F32 };
        splat::scene::save_ply(&self.0, &path, precision).map_err(err)
    }

    /// Appends one Gaussian with a constant color; `opacity` is in `(0, 1)`.
    fn push(&mut self, position: [f64; 3], scale: [f64; 3], quat: [f64; 4], rgb: [f64; 3], opacity: f64) -> PyResult<()> {
        if !(opacity > 0.0 && opacity < 1.0) || scale.iter().any(|&s| s <= 0.0) {
            return Err(PyValueError::new_err("opacity must be in (0, 1) and scales positive"));
        }
        let mut sh = [[0.0; 3]; splat::scene::sh::SH_COEFFS];
        sh[0] = rgb.map(splat::scene::sh::rgb_to_dc);
        self.0
            .push(position, scale.map(f64::ln), quat, sh, splat::scene::logit(opacity));
        Ok(())
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        self.0.positions.clone()
    }

    #[getter]
    fn opacities(&self) -> Vec<f64> {
        (0..self.0.len()).map(|i| self.0.opacity(i)).collect()
    }
}

/// Renders linear radiance and expected depth from `pose`.
#[pyfunction]
#[pyo3(signature = (cloud, camera, pose, sh_degree=3))]
fn render(py: Python<'_>, cloud: &GaussianCloud, camera: &Camera, pose: &Pose, sh_degree: usize) -> (LinearImage, Vec<f64>) {
    let raster = RasterConfig {
        sh_degree,
        ..RasterConfig::default()
    };
    let out = py.detach(|| rasterize_forward(&cloud.0, &View::new(&camera.0, &pose.0), &raster));
    let depth = out.expected_depth();
    (LinearImage(out.color), depth)
}

/// Tonemaps to 8-bit interleaved RGB bytes.
#[pyfunction]
#[pyo3(signature = (image, exposure_stops=0.0, curve="srgb_gamma"))]
fn tonemap<'py>(py: Python<'py>, image: &LinearImage, exposure_stops: f64, curve: &str) -> PyResult<Bound<'py, PyBytes>> {
    let tp = ToneParams {
        curve: parse::<ToneCurve>(curve)?,
        ..ToneParams::default()
    }
    .with_stops(exposure_stops);
    let ldr = splat::isp::tonemap(&image.0, &tp).map_err(err)?;
    Ok(PyBytes::new(py, &ldr.to_u8()))
}

#[pyfunction]
#[pyo3(signature = (pred, reference, peak=1.0))]
fn psnr(pred: &LinearImage, reference: &LinearImage, peak: f64) -> PyResult<f64> {
    splat::loss::psnr_values(&pred.0.data, &reference.0.data, peak).map_err(err)
}

fn plane(width: usize, height: usize, cfa: &str, data: Vec<f64>) -> PyResult<BayerPlane> {
    BayerPlane::new(width, height, parse::<Cfa>(cfa)?, data).map_err(err)
}

/// Denoises a normalized Bayer mosaic with noise model `var = k*x + sigma2`.
#[pyfunction]
#[pyo3(signature = (width, height, cfa, data, k, sigma2, method="bilateral"))]
fn denoise(width: usize, height: usize, cfa: &str, data: Vec<f64>, k: f64, sigma2: f64, method: &str) -> PyResult<Vec<f64>> {
    let np = splat::isp::NoiseParams::new(k, sigma2).map_err(err)?;
    let out = splat::isp::denoise(&plane(width, height, cfa, data)?, parse::<DenoiseMethod>(method)?, &np).map_err(err)?;
    Ok(out.data)
}

#[pyfunction]
fn demosaic(width: usize, height: usize, cfa: &str, data: Vec<f64>) -> PyResult<LinearImage> {
    Ok(LinearImage(splat::isp::demosaic_bilinear(&plane(width, height, cfa, data)?)))
}

#[pyfunction]
#[pyo3(signature = (seed=0, n=10, size=32, near_clip=false))]
fn gradcheck(py: Python<'_>, seed: u64, n: usize, size: usize, near_clip: bool) -> PyResult<Py<PyAny>> {
    let report = py.detach(|| pipeline::run_gradcheck(seed, n, size, near_clip)).map_err(err)?;
    to_py(py, &report)
}

/// Pairs a COLMAP model with raw frames and writes the scene manifest.
#[pyfunction]
#[pyo3(signature = (colmap, raw, out, test_every=pipeline::DEFAULT_TEST_EVERY))]
fn ingest(py: Python<'_>, colmap: PathBuf, raw: PathBuf, out: PathBuf, test_every: usize) -> PyResult<Py<PyAny>> {
    let m = pipeline::ingest(&colmap, &raw, &out, test_every).map_err(err)?;
    to_py(
        py,
        &serde_json::json!({
            "n_views": m.n_views,
            "extent": m.extent,
            "train_views": m.train_views,
            "test_views": m.test_views,
        }),
    )
}

#[pyfunction]
#[pyo3(signature = (scene, denoiser="bilateral"))]
fn isp(py: Python<'_>, scene: PathBuf, denoiser: &str) -> PyResult<Py<PyAny>> {
    let method = parse::<DenoiseMethod>(denoiser)?;
    let record = py.detach(|| pipeline::run_isp(&scene, method)).map_err(err)?;
    to_py(py, &record)
}

/// Trains from a pipeline config file, optionally resuming a checkpoint.
#[pyfunction]
#[pyo3(signature = (config, resume=None, start_iteration=None))]
fn train(py: Python<'_>, config: PathBuf, resume: Option<PathBuf>, start_iteration: Option<usize>) -> PyResult<Py<PyAny>> {
    let cfg = PipelineConfig::load(&config).map_err(err)?;
    let resume = match &resume {
        Some(p) => {
            let iter = start_iteration
                .or_else(|| pipeline::checkpoint_iteration(p))
                .ok_or_else(|| PyValueError::new_err("cannot tell the checkpoint iteration; pass start_iteration"))?;
            Some((p.as_path(), iter))
        }
        None => None,
    };
    let summary = py.detach(|| pipeline::run_train(&cfg, resume)).map_err(err)?;
    to_py(py, &summary)
}

/// Scores the test split of a pipeline config against a cloud.
#[pyfunction]
fn evaluate(py: Python<'_>, config: PathBuf, cloud: &GaussianCloud) -> PyResult<Py<PyAny>> {
    let cfg = PipelineConfig::load(&config).map_err(err)?;
    let report = py.detach(|| pipeline::run_eval(&cfg, EvalSource::Cloud(&cloud.0))).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn rawsplat(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Camera>()?;
    m.add_class::<Pose>()?;
    m.add_class::<LinearImage>()?;
    m.add_class::<GaussianCloud>()?;
    m.add_function(wrap_pyfunction!(render, m)?)?;
    m.add_function(wrap_pyfunction!(tonemap, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(denoise, m)?)?;
    m.add_function(wrap_pyfunction!(demosaic, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(ingest, m)?)?;
    m.add_function(wrap_pyfunction!(isp, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
