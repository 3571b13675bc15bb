//! Python bindings: images, masks, metrics, statistics, registration fits,
//! the phantom generator and the command-line entry point.

use std::path::PathBuf;

use clap::Parser;
use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use longlens::atrophy::SegParams;
use longlens::cli::{Cli, Outcome, PhantomSpec};
use longlens::diagnostics::{decompose_eye, PosteriorEye, SampleAgreement};
use longlens::geometry::Point2;
use longlens::metrics::{pixel_metrics, SsimConfig};
use longlens::registration::{Correspondence, MixtureReference, ModelKind, RansacConfig};
use longlens::stats::PairedSample;
use longlens::temporal::{EyeSequence, Frame, Laterality};
use longlens::{Error, GrayImage, Rect, Scale, ValidityMask};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_scale(s: &str) -> PyResult<Scale> {
    match s {
        "unit" => Ok(Scale::Unit),
        "byte" => Ok(Scale::Byte),
        _ => Err(PyValueError::new_err(format!(
            "scale must be 'unit' or 'byte', got {s:?}"
        ))),
    }
}

fn parse_kind(s: &str) -> PyResult<ModelKind> {
    ModelKind::ALL
        .into_iter()
        .find(|k| k.to_string() == s)
        .ok_or_else(|| PyValueError::new_err(format!("unknown model kind {s:?}")))
}

/// Grayscale raster on the unit ([0, 1]) or byte ([0, 255]) scale.
#[pyclass(name = "Image", module = "longlens", frozen, from_py_object)]
#[derive(Clone)]
struct PyImage {
    inner: GrayImage,
}

#[pymethods]
impl PyImage {
    #[new]
    #[pyo3(signature = (width, height, pixels, scale = "unit"))]
    fn new(width: usize, height: usize, pixels: Vec<f64>, scale: &str) -> PyResult<Self> {
        let inner = GrayImage::new(width, height, pixels, parse_scale(scale)?).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: longlens::raster::load_image(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        longlens::raster::save_image(path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn scale(&self) -> &'static str {
        match self.inner.scale() {
            Scale::Unit => "unit",
            Scale::Byte => "byte",
        }
    }

    fn pixels(&self) -> Vec<f64> {
        self.inner.pixels().to_vec()
    }

    fn to_unit(&self) -> Self {
        Self {
            inner: self.inner.to_unit(),
        }
    }

    fn to_byte(&self) -> Self {
        Self {
            inner: self.inner.to_byte(),
        }
    }

    fn flip_horizontal(&self) -> Self {
        Self {
            inner: self.inner.flip_horizontal(),
        }
    }

    fn __repr__(&self) -> String {
        format!(
            "Image({}x{}, {})",
            self.inner.width(),
            self.inner.height(),
            self.scale()
        )
    }
}

/// Binary validity mask.
#[pyclass(name = "Mask", module = "longlens", frozen, from_py_object)]
#[derive(Clone)]
struct PyMask {
    inner: ValidityMask,
}

#[pymethods]
impl PyMask {
    #[new]
    fn new(width: usize, height: usize, bits: Vec<bool>) -> PyResult<Self> {
        Ok(Self {
            inner: ValidityMask::new(width, height, bits).map_err(to_py)?,
        })
    }

    #[staticmethod]
    fn full(width: usize, height: usize) -> Self {
        Self {
            inner: ValidityMask::full(width, height),
        }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: longlens::raster::load_mask(path).map_err(to_py)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        longlens::raster::save_mask(path, &self.inner).map_err(to_py)
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    fn bits(&self) -> Vec<bool> {
        self.inner.bits().to_vec()
    }

    fn valid_count(&self) -> usize {
        self.inner.valid_count()
    }

    fn intersection(&self, other: &PyMask) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.intersection(&other.inner).map_err(to_py)?,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Mask({}x{}, {} valid)",
            self.inner.width(),
            self.inner.height(),
            self.inner.valid_count()
        )
    }
}

/// Mean windowed SSIM over the whole raster.
#[pyfunction]
#[pyo3(signature = (a, b, data_range = 1.0, window = 7))]
fn ssim(a: &PyImage, b: &PyImage, data_range: f64, window: usize) -> PyResult<f64> {
    let cfg = SsimConfig {
        window,
        data_range,
        ..SsimConfig::image()
    };
    let (w, h) = a.inner.dims();
    longlens::metrics::ssim(&a.inner, &b.inner, &cfg, Rect::full(w, h)).map_err(to_py)
}

/// SSIM between predicted and true change maps (data range 2).
#[pyfunction]
fn delta_ssim(pred: &PyImage, target: &PyImage, last: &PyImage, mask: &PyMask) -> PyResult<f64> {
    longlens::metrics::delta_ssim(
        &pred.inner,
        &target.inner,
        &last.inner,
        &mask.inner,
        &SsimConfig::change_map(),
    )
    .map_err(to_py)
}

/// `(mae, psnr, ssim, delta_ssim)` on the unit scale.
#[pyfunction]
fn metrics(
    pred: &PyImage,
    target: &PyImage,
    last: &PyImage,
    mask: &PyMask,
) -> PyResult<(f64, f64, f64, f64)> {
    pixel_metrics(
        &pred.inner.to_unit(),
        &target.inner.to_unit(),
        &last.inner.to_unit(),
        &mask.inner,
    )
    .map_err(to_py)
}

#[pyfunction]
fn dice(a: &PyMask, b: &PyMask) -> PyResult<f64> {
    longlens::atrophy::dice(&a.inner, &b.inner).map_err(to_py)
}

#[pyfunction]
fn hd95(a: &PyMask, b: &PyMask) -> PyResult<f64> {
    longlens::atrophy::hd95(&a.inner, &b.inner).map_err(to_py)
}

/// Returns `(mask, threshold)`; the threshold is on the byte scale.
#[pyfunction]
#[pyo3(signature = (image, sigma_coef = 1.5, cap_frac = 0.70, seed_radius_frac = 0.15))]
fn segment_atrophy(
    image: &PyImage,
    sigma_coef: f64,
    cap_frac: f64,
    seed_radius_frac: f64,
) -> PyResult<(PyMask, f64)> {
    let params = SegParams {
        sigma_coef,
        cap_frac,
        seed_radius_frac,
        ..SegParams::default()
    };
    let seg = longlens::atrophy::segment_atrophy(&image.inner, &params).map_err(to_py)?;
    Ok((PyMask { inner: seg.mask }, seg.threshold))
}

/// Two-sided signed-rank test: `(statistic, w_plus, p, degenerate)`.
#[pyfunction]
fn wilcoxon(a: Vec<f64>, b: Vec<f64>) -> PyResult<(f64, f64, f64, bool)> {
    let r = longlens::stats::wilcoxon_signed_rank(&PairedSample::new(a, b).map_err(to_py)?);
    Ok((r.statistic, r.w_plus, r.p, r.degenerate))
}

#[pyfunction]
fn pearson_r(x: Vec<f64>, y: Vec<f64>) -> PyResult<f64> {
    longlens::stats::pearson_r(&x, &y).map_err(to_py)
}

#[pyfunction]
fn embedding_frequency(i: usize) -> f64 {
    longlens::temporal::embedding_frequency(i)
}

/// Interleaved `[sin, cos]` pairs.
#[pyfunction]
fn delta_embedding(delta_t: f64) -> PyResult<Vec<f64>> {
    Ok(longlens::temporal::delta_embedding(delta_t)
        .map_err(to_py)?
        .values
        .to_vec())
}

fn sequence(frames: Vec<PyImage>, times: Vec<f64>) -> PyResult<EyeSequence> {
    if frames.len() != times.len() {
        return Err(PyValueError::new_err("frames and times differ in length"));
    }
    let frames = frames
        .into_iter()
        .zip(times)
        .map(|(f, t)| {
            let (w, h) = f.inner.dims();
            Frame {
                image: f.inner,
                mask: ValidityMask::full(w, h),
                t,
            }
        })
        .collect();
    EyeSequence::new("py", Laterality::Unknown, frames).map_err(to_py)
}

#[pyfunction]
fn copy_last(frames: Vec<PyImage>, times: Vec<f64>, t_star: f64) -> PyResult<PyImage> {
    let seq = sequence(frames, times)?;
    Ok(PyImage {
        inner: longlens::temporal::copy_last(&seq, t_star).map_err(to_py)?,
    })
}

#[pyfunction]
fn linear_spline(frames: Vec<PyImage>, times: Vec<f64>, t_star: f64) -> PyResult<PyImage> {
    let seq = sequence(frames, times)?;
    Ok(PyImage {
        inner: longlens::temporal::linear_spline(&seq, t_star).map_err(to_py)?,
    })
}

/// `(mse, bias2, variance, inter_sample_ssim)` of K samples against a target.
#[pyfunction]
fn decompose(
    samples: Vec<PyImage>,
    target: &PyImage,
    mask: &PyMask,
) -> PyResult<(f64, f64, f64, f64)> {
    let eye = PosteriorEye {
        eye_id: "py".into(),
        samples: samples.into_iter().map(|s| s.inner).collect(),
        target: target.inner.clone(),
        mask: mask.inner.clone(),
    };
    let d = decompose_eye(&eye, SampleAgreement::AllPairs).map_err(to_py)?;
    Ok((d.mse, d.bias2, d.variance, d.inter_sample_ssim))
}

/// CDF of the calibrated three-component intensity reference.
#[pyfunction]
fn reference_cdf(x: f64) -> f64 {
    MixtureReference::calibrated().cdf(x)
}

/// Returns the matched image and its 256-entry lookup table.
#[pyfunction]
fn histogram_match(image: &PyImage, mask: &PyMask) -> PyResult<(PyImage, Vec<u8>)> {
    let m = longlens::registration::histogram_match(
        &image.inner,
        &mask.inner,
        &MixtureReference::calibrated(),
    )
    .map_err(to_py)?;
    Ok((PyImage { inner: m.image }, m.lut.to_vec()))
}

/// RANSAC fit of `kind` ("similarity", "affine" or "homography") mapping
/// `src` onto `dst`. Returns `(row-major matrix, inlier count, composite score)`.
#[pyfunction]
#[pyo3(signature = (src, dst, kind = "similarity", seed = 0))]
fn fit_transform(
    src: Vec<(f64, f64)>,
    dst: Vec<(f64, f64)>,
    kind: &str,
    seed: u64,
) -> PyResult<(Vec<f64>, usize, f64)> {
    if src.len() != dst.len() {
        return Err(PyValueError::new_err("src and dst differ in length"));
    }
    let matches: Vec<Correspondence> = src
        .into_iter()
        .zip(dst)
        .map(|(s, d)| Correspondence {
            src: Point2::new(s.0, s.1),
            dst: Point2::new(d.0, d.1),
        })
        .collect();
    let m = longlens::registration::fit_model_ransac(
        &matches,
        parse_kind(kind)?,
        &RansacConfig::default(),
        seed,
    )
    .map_err(to_py)?;
    Ok((
        m.matrix.to_row_major().to_vec(),
        m.diagnostics.inlier_count,
        m.diagnostics.composite_score,
    ))
}

/// Writes a phantom dataset into `dir`; returns the manifest as JSON text.
#[pyfunction]
#[pyo3(signature = (dir, n_eyes = 8, frames = 4, size = 128, growth = 1.5, noise = 0.05, seed = 0, keypoints = false))]
#[allow(clippy::too_many_arguments)]
fn write_phantom(
    dir: PathBuf,
    n_eyes: usize,
    frames: usize,
    size: usize,
    growth: f64,
    noise: f64,
    seed: u64,
    keypoints: bool,
) -> PyResult<String> {
    let spec = PhantomSpec {
        n_eyes,
        frames_per_eye: frames,
        image_size: size,
        lesion_growth_rate: growth,
        noise_amplitude: noise,
        rng_seed: seed,
        keypoints,
        ..PhantomSpec::default()
    };
    let m = longlens::cli::write_phantom(&spec, &dir).map_err(to_py)?;
    m.to_json().map_err(to_py)
}

/// Runs the command line with `args` (without the program name) and returns
/// its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv = std::iter::once("longlens".to_string()).chain(args);
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    py.detach(|| match longlens::cli::run(&cli) {
        Ok(Outcome::Complete) => 0,
        Ok(Outcome::Partial(msgs)) => {
            for m in msgs {
                eprintln!("warning: {m}");
            }
            2
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    })
}

#[pymodule]
#[pyo3(name = "longlens")]
fn longlens_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyImage>()?;
    m.add_class::<PyMask>()?;
    m.add_function(wrap_pyfunction!(ssim, m)?)?;
    m.add_function(wrap_pyfunction!(delta_ssim, m)?)?;
    m.add_function(wrap_pyfunction!(metrics, m)?)?;
    m.add_function(wrap_pyfunction!(dice, m)?)?;
    m.add_function(wrap_pyfunction!(hd95, m)?)?;
    m.add_function(wrap_pyfunction!(segment_atrophy, m)?)?;
    m.add_function(wrap_pyfunction!(wilcoxon, m)?)?;
    m.add_function(wrap_pyfunction!(pearson_r, m)?)?;
    m.add_function(wrap_pyfunction!(embedding_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(delta_embedding, m)?)?;
    m.add_function(wrap_pyfunction!(copy_last, m)?)?;
    m.add_function(wrap_pyfunction!(linear_spline, m)?)?;
    m.add_function(wrap_pyfunction!(decompose, m)?)?;
    m.add_function(wrap_pyfunction!(reference_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(histogram_match, m)?)?;
    m.add_function(wrap_pyfunction!(fit_transform, m)?)?;
    m.add_function(wrap_pyfunction!(write_phantom, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
