"""Smoke test for the `fesim` Python module.

Build and install first:

    pip install maturin
    maturin develop --release -m crates/py/Cargo.toml

or copy target/release/libfesim.so to fesim.so somewhere on sys.path.
"""

import math
import sys

import fesim


def close(a, b, rel):
    return abs(a - b) <= rel * abs(b)


def main():
    shape = fesim.PulseShape(8.0)
    assert shape.order == 3 and shape.peaking_time == 8.0
    peak = shape.response([8.0])[0]
    assert close(peak, 1.0, 1e-12), peak
    a_p, a_s = shape.shape_factors()
    assert close(a_p, 1.0376255, 1e-6) and close(a_s, 1.8677259, 1e-6)

    p8 = fesim.enc_parallel(3.0, 8.0)
    p4 = fesim.enc_parallel(3.0, 4.0)
    assert p8 < 400 and close(p8 / p4, math.sqrt(2), 1e-9)
    s = fesim.enc_series(5.0, 8.0, fesim.InputTransistor())
    enc_p, enc_s, enc_t = fesim.enc_total(5.0, 3.0, 8.0)
    assert close(enc_t, math.hypot(enc_p, enc_s), 1e-12) and close(enc_s, s, 1e-12)

    i = fesim.leakage(2.5e15, -20.0)
    assert 2.0 / 3 < i < 6.0, i
    assert close(fesim.enc_from_noise(2.9, 60.0), 301.7, 1e-3)

    sim = fesim.Simulator(rc_code=3)
    gain = sim.gain()
    medians = []
    for q in (1.0, 1.5, 2.0):
        thr = [gain * q + 0.8 * k for k in range(-10, 11)]
        curve = sim.threshold_scan(q, thr, 1000, seed=9)
        assert len(curve) == 21 and curve.kind == "threshold_scan"
        fit = fesim.fit_scurve(curve)
        assert abs(fit["sigma"] / 2.9 - 1) < 0.15, fit
        medians.append((q, fit["median"]))
    g, _ = fesim.fit_gain(medians)
    assert abs(g - gain) < 3.0, g

    again = sim.threshold_scan(1.0, [60.0], 500, seed=4)
    assert again.y == sim.threshold_scan(1.0, [60.0], 500, seed=4).y

    rate = sim.noise_scan([-6 + 0.75 * k for k in range(17)], 2.0e5, seed=5)
    rice = fesim.fit_rice(rate, sim.rice_constant())
    assert abs(rice["peaking_time"] / 5.3 - 1) < 0.15, rice

    _, walk = sim.time_walk([1.2, 11.0], 1.0, 50, seed=6)
    assert 0 < walk < 5, walk

    text = curve.to_csv()
    assert fesim.ScanCurve.from_csv(text).x == curve.x

    try:
        fesim.PulseShape(-1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative peaking time accepted")

    print(f"fesim {fesim.__version__}: smoke test passed "
          f"(ENC_p={p8:.1f} e-, gain={g:.2f} mV/fC, Rice tp={rice['peaking_time']:.2f} ns, walk={walk:.2f} ns)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
