//! Python bindings for the `spanet` crate.

use pyo3::exceptions::{PyOSError, PyValueError};
use pyo3::prelude::*;

use spanet::analysis::log_amplitude_profile;
use spanet::io;
use spanet::mixer::{spf_channels, SpgConfig};
use spanet::model::{self, SpaNetConfig, Variant};
use spanet::spectral::{self, Plane};
use spanet::{Error, Tensor};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io(e) => PyOSError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn variant(name: &str) -> PyResult<Variant> {
    name.parse().map_err(py_err)
}

/// Dense float32 tensor of rank 1 to 4, row-major.
#[pyclass(name = "Tensor", module = "spanet", skip_from_py_object)]
#[derive(Clone)]
struct PyTensor {
    inner: Tensor,
}

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f32>) -> PyResult<Self> {
        Ok(Self {
            inner: Tensor::new(shape, data).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn zeros(shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: Tensor::zeros(&shape).map_err(py_err)?,
        })
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.inner.shape().to_vec()
    }

    /// Flat copy of the values.
    fn tolist(&self) -> Vec<f32> {
        self.inner.data().to_vec()
    }

    fn reshape(&self, shape: Vec<usize>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.clone().reshape(&shape).map_err(py_err)?,
        })
    }

    fn max_abs_diff(&self, other: PyRef<'_, PyTensor>) -> f32 {
        self.inner.max_abs_diff(&other.inner)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.inner.shape())
    }
}

/// Binary low-frequency region, flattened row-major.
#[pyfunction]
fn circular_region(h: usize, w: usize, radius: f64) -> PyResult<Vec<f64>> {
    Ok(spectral::circular_region(h, w, radius).map_err(py_err)?.data)
}

/// Balancing mask: `lambda_b` inside the region, `1 - lambda_b` outside.
#[pyfunction]
fn balance_mask(h: usize, w: usize, lambda_b: f64, radius: f64) -> PyResult<Vec<f64>> {
    Ok(spectral::spf_mask(h, w, lambda_b, radius).map_err(py_err)?.data)
}

/// Spectral pooling filter on every channel plane of an `N×C×H×W` tensor.
#[pyfunction]
fn spf(x: PyRef<'_, PyTensor>, lambda_b: f64, radius: f64) -> PyResult<PyTensor> {
    let cfg = SpgConfig::new(lambda_b, radius).map_err(py_err)?;
    Ok(PyTensor {
        inner: spf_channels(&x.inner, &cfg).map_err(py_err)?,
    })
}

/// Same filter computed as a spatial blend of low- and high-pass outputs.
#[pyfunction]
fn spf_decomposed(h: usize, w: usize, data: Vec<f32>, lambda_b: f64, radius: f64) -> PyResult<Vec<f32>> {
    let plane = Plane::new(h, w, data).map_err(py_err)?;
    Ok(spectral::spf_apply_decomposed(&plane, lambda_b, radius).map_err(py_err)?.data)
}

/// `(frequencies, delta_log_amplitude)` along the spectrum half-diagonal.
#[pyfunction]
fn amplitude_profile(x: PyRef<'_, PyTensor>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let p = log_amplitude_profile(&x.inner).map_err(py_err)?;
    Ok((p.frequencies, p.values))
}

#[pyfunction]
fn count_params(variant_name: &str) -> PyResult<u64> {
    model::count_params(&SpaNetConfig::preset(variant(variant_name)?)).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (variant_name, size = 224))]
fn count_flops(variant_name: &str, size: usize) -> PyResult<u64> {
    model::count_flops(&SpaNetConfig::preset(variant(variant_name)?), size, size).map_err(py_err)
}

#[pyfunction]
fn read_tensor(path: &str) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: io::read_tensor(path).map_err(py_err)?,
    })
}

#[pyfunction]
fn write_tensor(x: PyRef<'_, PyTensor>, path: &str) -> PyResult<()> {
    io::write_tensor(&x.inner, path).map_err(py_err)
}

/// Loads a binary PPM as a `1×3×H×W` tensor in `[0, 1]`.
#[pyfunction]
fn load_image(path: &str) -> PyResult<PyTensor> {
    Ok(PyTensor {
        inner: io::load_image(path).map_err(py_err)?,
    })
}

/// SPANet backbone with a classification head.
#[pyclass(name = "Model", module = "spanet")]
struct PyModel {
    config: SpaNetConfig,
    store: model::WeightStore,
    net: model::SpaNet,
}

impl PyModel {
    fn build(config: SpaNetConfig, store: model::WeightStore) -> PyResult<Self> {
        let net = model::SpaNet::from_store(&config, &store).map_err(py_err)?;
        Ok(Self { config, store, net })
    }
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (variant_name = "S", seed = 0))]
    fn new(variant_name: &str, seed: u64) -> PyResult<Self> {
        let config = SpaNetConfig::preset(variant(variant_name)?);
        let store = model::init_weights(&config, seed).map_err(py_err)?;
        Self::build(config, store)
    }

    #[staticmethod]
    fn load(variant_name: &str, path: &str) -> PyResult<Self> {
        let config = SpaNetConfig::preset(variant(variant_name)?);
        let store = io::read_weights(path).map_err(py_err)?;
        Self::build(config, store)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        io::write_weights(&self.store, path).map_err(py_err)
    }

    fn checksum(&self) -> String {
        self.store.checksum()
    }

    fn param_count(&self) -> usize {
        self.store.total_elements()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.config.dims.to_vec()
    }

    /// Logits for a `1×3×H×W` image; H and W must be multiples of 32.
    fn forward(&self, py: Python<'_>, image: PyRef<'_, PyTensor>) -> PyResult<PyTensor> {
        let x = image.inner.clone();
        let logits = py.detach(|| self.net.forward(&x)).map_err(py_err)?;
        Ok(PyTensor { inner: logits })
    }

    /// `(logits, stage_shapes)`.
    fn forward_with_shapes(
        &self,
        py: Python<'_>,
        image: PyRef<'_, PyTensor>,
    ) -> PyResult<(PyTensor, Vec<Vec<usize>>)> {
        let x = image.inner.clone();
        let out = py.detach(|| self.net.forward_with(&x, None)).map_err(py_err)?;
        let shapes = out.stage_shapes.iter().map(|s| s.to_vec()).collect();
        Ok((PyTensor { inner: out.logits }, shapes))
    }
}

#[pymodule]
#[pyo3(name = "spanet")]
fn spanet_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(circular_region, m)?)?;
    m.add_function(wrap_pyfunction!(balance_mask, m)?)?;
    m.add_function(wrap_pyfunction!(spf, m)?)?;
    m.add_function(wrap_pyfunction!(spf_decomposed, m)?)?;
    m.add_function(wrap_pyfunction!(amplitude_profile, m)?)?;
    m.add_function(wrap_pyfunction!(count_params, m)?)?;
    m.add_function(wrap_pyfunction!(count_flops, m)?)?;
    m.add_function(wrap_pyfunction!(read_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(write_tensor, m)?)?;
    m.add_function(wrap_pyfunction!(load_image, m)?)?;
    Ok(())
}
