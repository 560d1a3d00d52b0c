use pyo3::prelude::*;
#[pymodule]
fn tweedie_conformal(_m: &Bound<PyModule>) -> PyResult<()> { Ok(()) }
