"""Smoke test for the timerng_py extension module."""

import math
import os
import tempfile

import timerng_py as t


def main():
    print("timerng_py", t.__version__)

    o = t.oracle_restartable(1 / 24)
    assert abs(o["eta_exact"] - 1 / (1 + math.exp(1 / 24))) < 1e-12
    assert abs(t.eta_asymptotic(0.5) - 0.40625) < 1e-15

    s = t.simulate(500e-9, 200_000, seed=7, dead_time=25e-9)
    assert len(s) > 190_000
    iv = s.intervals()
    assert min(iv) >= 25e-9 * (1 - 1e-9)

    bits, stats = t.extract(s, "restart", period=1 / 48e6)
    assert stats["bits_emitted"] == len(bits)
    eff = len(bits) / stats["events_consumed"]
    assert 0.47 < eff < 0.51, eff

    rep = bits.analyze()
    assert abs(rep["mean"] - 0.5) < 0.01
    print(bits.report())

    hand = t.EventStream([0.0, 1.0, 3.0, 6.0, 7.0])
    b, _ = t.extract(hand, "exact")
    assert str(b) == "01", str(b)

    with tempfile.TemporaryDirectory() as d:
        p = os.path.join(d, "bits.bin")
        bits.save(p)
        back = t.Bits.read(p)
        assert back.to_bytes() == bits.to_bytes() and len(back) == len(bits)

    try:
        t.simulate(-1.0, 10, seed=1)
    except ValueError as e:
        print("rejected:", e)
    else:
        raise AssertionError("negative tau accepted")

    m = t.measure(0.1, "restartable", 200_000, seed=3)
    assert m["n_bits"] == 200_000
    print("smoke test passed")


if __name__ == "__main__":
    main()
