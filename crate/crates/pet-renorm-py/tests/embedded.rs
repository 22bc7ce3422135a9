use pyo3::ffi::c_str;
use pyo3::prelude::*;

fn with_module<F: FnOnce(Python<'_>) -> PyResult<()>>(f: F) {
    use pet_renorm_py::pet_renorm_py;
    pyo3::append_to_inittab!(pet_renorm_py);
    Python::initialize();
    Python::attach(|py| f(py).map_err(|e| e.display(py)).expect("python code runs"));
}

#[test]
fn module_round_trips_exact_values() {
    with_module(|py| {
        py.run(
            c_str!(
                r#"
import pet_renorm as pr
fixed = "(2-1*sqrt(2))/2"
v, b = pr.f_step(fixed)
assert pr.Scalar(v) == pr.Scalar(fixed)
assert pr.accumulate("1/5", "2/7", 0)[0]["nu"] == "27/35"
t = pr.Tiling.rotation("1/5", "1/3", "2/7", "1/7")
assert t.tau(0, 0) == 1 and t.tau(1, 0) == -1
site = next((m, n) for m in range(10) for n in range(10) if t.is_kept(m, n))
(m, n), w, r, e = t.return_to_kept(*site, "E")
assert r == 2 * e - 1
try:
    pr.Tiling.explicit([1, -1], [1]).tau(5, 0)
except IndexError:
    pass
else:
    raise AssertionError("window overrun not reported")
"#
            ),
            None,
            None,
        )
    });
}
