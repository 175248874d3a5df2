//! Python module `pgft`: point clouds, synthetic content, encode/decode and
//! the evaluation metrics of the core crate.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyOSError, PyTypeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

use pgft_core::codec::{color_psnr, decode_sequence, encode_sequence, CodecOptions, FrameStats};
use pgft_core::coding::{read_header, CodingMode, FrameType};
use pgft_core::eval::{self, RdPoint, PEAK_8BIT};
use pgft_core::pointcloud_io::{self as io, PlyFormat, RawPointCloud};
use pgft_core::rdo::{self, LambdaModel, RdSample};
use pgft_core::synthetic::{self, SyntheticSpec};
use pgft_core::{Error, SequenceConfig};

create_exception!(
    pgft,
    CodecError,
    PyException,
    "Bitstream, geometry or numerical failure."
);

fn to_py(e: Error) -> PyErr {
    match e.root() {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        Error::InvalidParameter(_) | Error::DimensionMismatch { .. } | Error::EmptyFrame => {
            PyValueError::new_err(e.to_string())
        }
        _ => CodecError::new_err(e.to_string()),
    }
}

/// Positions (any units) with 8-bit RGB colors.
#[pyclass(name = "PointCloud", module = "pgft", frozen)]
#[derive(Clone)]
struct PyPointCloud {
    inner: RawPointCloud,
}

#[pymethods]
impl PyPointCloud {
    #[new]
    fn new(positions: Vec<[f64; 3]>, colors: Vec<[u8; 3]>) -> PyResult<Self> {
        Ok(PyPointCloud {
            inner: RawPointCloud::new(positions, colors).map_err(to_py)?,
        })
    }

    #[getter]
    fn positions(&self) -> Vec<[f64; 3]> {
        self.inner.positions.clone()
    }

    #[getter]
    fn colors(&self) -> Vec<[u8; 3]> {
        self.inner.colors.clone()
    }

    fn __len__(&self) -> usize {
        self.inner.point_count()
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        format!("PointCloud({} points)", self.inner.point_count())
    }
}

fn clouds(frames: &[PyPointCloud]) -> Vec<RawPointCloud> {
    frames.iter().map(|f| f.inner.clone()).collect()
}

/// Codec parameters. Every field except the λ model travels in the bitstream.
#[pyclass(name = "Config", module = "pgft", get_all, set_all)]
#[derive(Clone)]
struct PyConfig {
    grid_dim: u32,
    qstep: f64,
    target_cluster_size: usize,
    epsilon_sq: f64,
    sigma_sq: f64,
    normal_k: usize,
    box_expand: f64,
    gop_size: usize,
    lambda_alpha: f64,
    lambda_beta: f64,
}

impl From<&SequenceConfig> for PyConfig {
    fn from(c: &SequenceConfig) -> Self {
        PyConfig {
            grid_dim: c.grid_dim,
            qstep: c.qstep,
            target_cluster_size: c.target_cluster_size,
            epsilon_sq: c.epsilon_sq,
            sigma_sq: c.sigma_sq,
            normal_k: c.normal_k,
            box_expand: c.box_expand,
            gop_size: c.gop_size,
            lambda_alpha: c.lambda_alpha,
            lambda_beta: c.lambda_beta,
        }
    }
}

impl From<&PyConfig> for SequenceConfig {
    fn from(c: &PyConfig) -> Self {
        SequenceConfig {
            grid_dim: c.grid_dim,
            qstep: c.qstep,
            target_cluster_size: c.target_cluster_size,
            epsilon_sq: c.epsilon_sq,
            sigma_sq: c.sigma_sq,
            normal_k: c.normal_k,
            box_expand: c.box_expand,
            gop_size: c.gop_size,
            lambda_alpha: c.lambda_alpha,
            lambda_beta: c.lambda_beta,
        }
    }
}

#[pymethods]
impl PyConfig {
    /// Defaults for every field not given as a keyword.
    #[new]
    #[pyo3(signature = (**kwargs))]
    fn new(kwargs: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut c = PyConfig::from(&SequenceConfig::default());
        for (key, value) in kwargs.into_iter().flatten() {
            let key: String = key.extract()?;
            match key.as_str() {
                "grid_dim" => c.grid_dim = value.extract()?,
                "qstep" => c.qstep = value.extract()?,
                "target_cluster_size" => c.target_cluster_size = value.extract()?,
                "epsilon_sq" => c.epsilon_sq = value.extract()?,
                "sigma_sq" => c.sigma_sq = value.extract()?,
                "normal_k" => c.normal_k = value.extract()?,
                "box_expand" => c.box_expand = value.extract()?,
                "gop_size" => c.gop_size = value.extract()?,
                "lambda_alpha" => c.lambda_alpha = value.extract()?,
                "lambda_beta" => c.lambda_beta = value.extract()?,
                other => return Err(PyTypeError::new_err(format!("unknown config field `{other}`"))),
            }
        }
        Ok(c)
    }

    fn validate(&self) -> PyResult<()> {
        SequenceConfig::from(self).validate().map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Config(grid_dim={}, qstep={})", self.grid_dim, self.qstep)
    }
}

fn frame_type(t: FrameType) -> &'static str {
    match t {
        FrameType::Intra => "I",
        FrameType::Predicted => "P",
    }
}

fn mode_name(m: CodingMode) -> &'static str {
    match m {
        CodingMode::Intra => "intra",
        CodingMode::Inter => "inter",
    }
}

fn stats_dict<'py>(py: Python<'py>, s: &FrameStats) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("frame", s.index)?;
    d.set_item("type", frame_type(s.frame_type))?;
    d.set_item("input_points", s.input_points)?;
    d.set_item("voxels", s.voxels)?;
    d.set_item("clusters", s.clusters)?;
    d.set_item("intra", s.intra_clusters)?;
    d.set_item("inter", s.inter_clusters)?;
    d.set_item("fallback", s.fallback_clusters)?;
    d.set_item("bits", s.cluster_bits)?;
    d.set_item("bytes", s.record_bytes)?;
    d.set_item("psnr", (s.psnr.y, s.psnr.u, s.psnr.v))?;
    Ok(d)
}

/// Result of [`encode`]: the bitstream, per-frame statistics, the encoder's
/// reconstruction and the per-cluster modes.
#[pyclass(name = "Encoded", module = "pgft", frozen)]
struct PyEncoded {
    bitstream: Vec<u8>,
    stats: Vec<FrameStats>,
    colors: Vec<Vec<[u8; 3]>>,
    modes: Vec<Vec<CodingMode>>,
    input_points: usize,
}

#[pymethods]
impl PyEncoded {
    #[getter]
    fn bitstream<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.bitstream)
    }

    /// One dict per frame.
    #[getter]
    fn stats<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        self.stats.iter().map(|s| stats_dict(py, s)).collect()
    }

    /// Decoded colors of every input point, per frame.
    #[getter]
    fn colors(&self) -> Vec<Vec<[u8; 3]>> {
        self.colors.clone()
    }

    /// `"intra"`/`"inter"` per cluster; empty for I-frames.
    #[getter]
    fn modes(&self) -> Vec<Vec<&'static str>> {
        self.modes
            .iter()
            .map(|f| f.iter().map(|&m| mode_name(m)).collect())
            .collect()
    }

    /// Bits per input point of the whole file.
    #[getter]
    fn bpip(&self) -> PyResult<f64> {
        eval::bpip(8 * self.bitstream.len() as u64, self.input_points).map_err(to_py)
    }
}

/// Encodes a sequence. `threads = 0` uses all cores.
#[pyfunction]
#[pyo3(signature = (frames, config, threads = 0))]
fn encode(py: Python<'_>, frames: Vec<PyPointCloud>, config: &PyConfig, threads: usize) -> PyResult<PyEncoded> {
    let raw = clouds(&frames);
    let cfg = SequenceConfig::from(config);
    let enc = py
        .allow_threads(|| encode_sequence(&raw, &cfg, &CodecOptions { threads }))
        .map_err(to_py)?;
    Ok(PyEncoded {
        input_points: enc.total_input_points(),
        colors: enc.reconstruction.iter().map(|f| f.colors.clone()).collect(),
        modes: enc.reconstruction.iter().map(|f| f.modes.clone()).collect(),
        bitstream: enc.bitstream,
        stats: enc.stats,
    })
}

/// Decodes a bitstream against the same geometry frames the encoder saw;
/// returns one point cloud per frame.
#[pyfunction]
#[pyo3(signature = (bitstream, geometry, threads = 0))]
fn decode(
    py: Python<'_>,
    bitstream: Vec<u8>,
    geometry: Vec<PyPointCloud>,
    threads: usize,
) -> PyResult<Vec<PyPointCloud>> {
    let raw = clouds(&geometry);
    let dec = py
        .allow_threads(|| decode_sequence(&bitstream, &raw, &CodecOptions { threads }))
        .map_err(to_py)?;
    dec.frames
        .iter()
        .zip(&raw)
        .map(|(f, g)| {
            Ok(PyPointCloud {
                inner: f.to_point_cloud(g).map_err(to_py)?,
            })
        })
        .collect()
}

/// Configuration stored in a bitstream header, and its frame count.
#[pyfunction]
fn header(bitstream: Vec<u8>) -> PyResult<(PyConfig, u32)> {
    let h = read_header(&bitstream).map_err(to_py)?;
    Ok((PyConfig::from(&h.config), h.frame_count))
}

/// Seeded synthetic sequence (`"static"`, `"rigid-motion"` or `"wave"`);
/// returns the frames and the grid resolution that voxelizes them exactly.
#[pyfunction]
#[pyo3(signature = (kind, frames = 2, seed = 1))]
fn synthesize(kind: &str, frames: usize, seed: u64) -> PyResult<(Vec<PyPointCloud>, u32)> {
    let spec = SyntheticSpec {
        seed,
        ..SyntheticSpec::new(kind.parse().map_err(to_py)?, frames)
    };
    let seq = synthetic::generate(&spec).map_err(to_py)?;
    let clouds = seq.frames.into_iter().map(|inner| PyPointCloud { inner }).collect();
    Ok((clouds, seq.grid_dim))
}

#[pyfunction]
fn read_ply(path: std::path::PathBuf) -> PyResult<PyPointCloud> {
    Ok(PyPointCloud {
        inner: io::read_ply(path).map_err(to_py)?,
    })
}

#[pyfunction]
#[pyo3(signature = (path, cloud, ascii = false))]
fn write_ply(path: std::path::PathBuf, cloud: &PyPointCloud, ascii: bool) -> PyResult<()> {
    let format = if ascii {
        PlyFormat::Ascii
    } else {
        PlyFormat::BinaryLittleEndian
    };
    io::write_ply(path, &cloud.inner, format).map_err(to_py)
}

#[pyfunction]
fn rgb_to_yuv(rgb: [u8; 3]) -> [f64; 3] {
    io::rgb_to_yuv(rgb)
}

#[pyfunction]
fn yuv_to_rgb(yuv: [f64; 3]) -> [u8; 3] {
    io::yuv_to_rgb(yuv)
}

/// Per-channel PSNR (Y, U, V) between two attribute lists; infinite when equal.
#[pyfunction]
#[pyo3(signature = (original, reconstructed, peak = PEAK_8BIT))]
fn psnr(original: Vec<[f64; 3]>, reconstructed: Vec<[f64; 3]>, peak: f64) -> PyResult<(f64, f64, f64)> {
    let p = eval::psnr(&original, &reconstructed, peak).map_err(to_py)?;
    Ok((p.y, p.u, p.v))
}

/// PSNR (Y, U, V) of decoded colors against a cloud's original colors.
#[pyfunction]
fn color_quality(original: &PyPointCloud, colors: Vec<[u8; 3]>) -> PyResult<(f64, f64, f64)> {
    let p = color_psnr(&original.inner, &colors).map_err(to_py)?;
    Ok((p.y, p.u, p.v))
}

#[pyfunction]
fn bpip(total_bits: u64, input_points: usize) -> PyResult<f64> {
    eval::bpip(total_bits, input_points).map_err(to_py)
}

/// Bjøntegaard delta rate of curve `b` against `a`, in percent. Each curve is
/// a list of `(bpip, psnr_y)` pairs.
#[pyfunction]
fn bd_br(a: Vec<(f64, f64)>, b: Vec<(f64, f64)>) -> PyResult<f64> {
    let curve = |c: Vec<(f64, f64)>| -> Vec<RdPoint> {
        c.into_iter()
            .map(|(rate, y)| RdPoint {
                rate,
                psnr_y: y,
                psnr_u: y,
                psnr_v: y,
            })
            .collect()
    };
    eval::bd_br(&curve(a), &curve(b)).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (q, alpha = LambdaModel::default().alpha, beta = LambdaModel::default().beta))]
fn lambda_from_q(q: f64, alpha: f64, beta: f64) -> PyResult<f64> {
    rdo::lambda_from_q(q, &LambdaModel { alpha, beta }).map_err(to_py)
}

/// Fits `(alpha, beta)` to `(q, rate, distortion)` triples.
#[pyfunction]
fn fit_lambda(points: Vec<(f64, f64, f64)>) -> PyResult<(f64, f64)> {
    let samples: Vec<RdSample> = points
        .into_iter()
        .map(|(q, rate, distortion)| RdSample { q, rate, distortion })
        .collect();
    let m = rdo::fit_lambda_model(&samples).map_err(to_py)?;
    Ok((m.alpha, m.beta))
}

#[pymodule]
fn pgft(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("CodecError", m.py().get_type::<CodecError>())?;
    m.add_class::<PyPointCloud>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyEncoded>()?;
    m.add_function(wrap_pyfunction!(encode, m)?)?;
    m.add_function(wrap_pyfunction!(decode, m)?)?;
    m.add_function(wrap_pyfunction!(header, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(read_ply, m)?)?;
    m.add_function(wrap_pyfunction!(write_ply, m)?)?;
    m.add_function(wrap_pyfunction!(rgb_to_yuv, m)?)?;
    m.add_function(wrap_pyfunction!(yuv_to_rgb, m)?)?;
    m.add_function(wrap_pyfunction!(psnr, m)?)?;
    m.add_function(wrap_pyfunction!(color_quality, m)?)?;
    m.add_function(wrap_pyfunction!(bpip, m)?)?;
    m.add_function(wrap_pyfunction!(bd_br, m)?)?;
    m.add_function(wrap_pyfunction!(lambda_from_q, m)?)?;
    m.add_function(wrap_pyfunction!(fit_lambda, m)?)?;
    Ok(())
}
