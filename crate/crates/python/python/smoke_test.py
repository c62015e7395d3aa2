"""Smoke test for the compiled extension.

Build with `maturin develop`, or copy `target/release/liblattice_transport_py.so`
to `lattice_transport.so` somewhere on PYTHONPATH, then run with pytest or directly.
"""

import math
import os
import tempfile
from pathlib import Path

import lattice_transport as lt

CONFIGS = Path(__file__).resolve().parents[3] / "configs"


def test_free_second_moment():
    lat = lt.Lattice(1, 200)
    psi = lat.evolve(lat.delta([0]), 3.0)
    m2 = sum((i - 200) ** 2 * abs(a) ** 2 for i, a in enumerate(psi))
    assert abs(m2 - 18.0) / 18.0 < 1e-3
    assert abs(sum(abs(a) ** 2 for a in psi) - 1.0) < 1e-11


def test_free_eigenvalues():
    lat = lt.Lattice(1, 10)
    n = 21
    expected = sorted(-2 * math.cos(k * math.pi / (n + 1)) for k in range(1, n + 1))
    got = lat.eigenvalues()
    assert max(abs(a - b) for a, b in zip(got, expected)) < 1e-12


def test_commutator_and_mourre():
    lat = lt.Lattice(1, 100, "power_law", c=1.0, alpha=2.0)
    assert lat.commutator_norm() <= 2 * math.sqrt(5) + 1e-9
    assert lt.Lattice(1, 200).mourre_min(-1.0, 1.0) >= 2.0


def test_moments_and_errors():
    lat = lt.Lattice(1, 300, "anderson", disorder=8.0, seed=1)
    rows = lat.moments(lat.delta([0]), [0.0, 10.0, 100.0], [0.0, 1.0])
    assert len(rows) == 3 and abs(rows[0][1] - 1.0) < 1e-15
    for bad in (lambda: lt.Lattice(1, 10, "nope"), lambda: lt.verify("nope")):
        try:
            bad()
        except ValueError:
            pass
        else:
            raise AssertionError("expected ValueError")


def test_run_bundled_config():
    with tempfile.TemporaryDirectory() as out:
        r = lt.run(str(CONFIGS / "free_1d.cfg"), out)
        assert r["status"] == 0
        assert abs(r["slope"] - 1.0) <= 0.02
        assert os.path.exists(os.path.join(r["dir"], "manifest.json"))


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_"):
            fn()
            print("ok", name)
