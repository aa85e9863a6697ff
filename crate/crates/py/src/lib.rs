//! Python bindings for the rapinn solver: checkpoint-backed field prediction
//! and the analytic reference solution used by the benchmark cases.

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use std::path::PathBuf;

use rapinn::cases::{build_case, ManufacturedSolution};
use rapinn::network::batch::batch_forward;
use rapinn::network::{checkpoint, param_count, Arch, NetworkConfig, ParamVector};

/// Exact reference fields (u, v, p, phi, T) at a point.
#[pyfunction]
fn exact_solution(x: f64, y: f64) -> (f64, f64, f64, f64, f64) {
    let v = ManufacturedSolution.values(x, y);
    (v[0], v[1], v[2], v[3], v[4])
}

/// Source terms (continuity, momentum-x, momentum-y, potential, temperature)
/// that make the reference fields an exact solution of the given case.
#[pyfunction]
fn source_terms(case: u8, x: f64, y: f64) -> PyResult<(f64, f64, f64, f64, f64)> {
    let spec = build_case(case, None).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let s = spec.source_at(x, y);
    Ok((s[0], s[1], s[2], s[3], s[4]))
}

/// A trained network restored from a checkpoint file.
#[pyclass]
struct Predictor {
    cfg: NetworkConfig,
    params: ParamVector,
}

#[pymethods]
impl Predictor {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (cfg, params) =
            checkpoint::load(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Predictor { cfg, params })
    }

    /// Field values at each (x, y) point; rows are [u, v, p, phi, T].
    fn predict(&self, points: Vec<(f64, f64)>) -> Vec<[f64; 5]> {
        let pts: Vec<[f64; 2]> = points.iter().map(|&(x, y)| [x, y]).collect();
        let cache = batch_forward(&self.params, &self.cfg, &pts, 1);
        let out = &cache.out.slots[0];
        (0..pts.len())
            .map(|i| [out[[i, 0]], out[[i, 1]], out[[i, 2]], out[[i, 3]], out[[i, 4]]])
            .collect()
    }

    #[getter]
    fn n_params(&self) -> usize {
        param_count(&self.cfg)
    }

    #[getter]
    fn arch(&self) -> &'static str {
        match self.cfg.arch {
            Arch::RaPinn => "rapinn",
            Arch::Mlp => "mlp",
        }
    }

    #[getter]
    fn width(&self) -> usize {
        self.cfg.width
    }

    #[getter]
    fn n_blocks(&self) -> usize {
        self.cfg.n_blocks
    }
}

#[pymodule]
fn rapinn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(exact_solution, m)?)?;
    m.add_function(wrap_pyfunction!(source_terms, m)?)?;
    m.add_class::<Predictor>()?;
    Ok(())
}
