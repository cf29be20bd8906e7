use pyo3::prelude::*;
use timerng_py::timerng_py;

const SCRIPT: &str = r#"
import math
import timerng_py as t

s = t.EventStream([0.0, 1.0, 3.0, 6.0, 7.0])
bits, stats = t.extract(s, "exact")
assert str(bits) == "01", str(bits)
assert stats["pairs_formed"] == 2 and stats["ties_discarded"] == 0

o = t.oracle_restartable(1 / 24)
assert abs(o["eta_exact"] - 1 / (1 + math.exp(1 / 24))) < 1e-15

s = t.simulate(1.0, 50_000, seed=5, dead_time=0.05)
bits, stats = t.extract(s, "updown", period=0.2, skew=0.01)
same, _ = t.extract(s, "restart", period=0.2, skew=0.01)
assert bits.to_bytes() == same.to_bytes()
assert stats["bits_emitted"] + stats["ties_discarded"] == (len(s) - 1) // 2

try:
    t.extract(s, "restart")
    raise AssertionError("missing period accepted")
except ValueError:
    pass
try:
    t.EventStream([1.0, 0.5])
    raise AssertionError("decreasing timestamps accepted")
except ValueError:
    pass

r = t.validate("coherence")
assert r["pass"], r
"#;

#[test]
fn module_from_embedded_interpreter() {
    pyo3::append_to_inittab!(timerng_py);
    pyo3::prepare_freethreaded_python();
    Python::with_gil(|py| {
        if let Err(e) = py.run_bound(SCRIPT, None, None) {
            e.print(py);
            panic!("script failed");
        }
    });
}
