"""Build the extension module and exercise it on the linear test case.

Run from the repository root: python3 python/smoke_test.py
"""

import os
import shutil
import subprocess
import sys
import tempfile

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def load():
    subprocess.run(["cargo", "build", "-p", "dirac-floer-py"], cwd=ROOT, check=True)
    built = os.path.join(ROOT, "target", "debug", "libdirac_floer.so")
    tmp = tempfile.mkdtemp()
    shutil.copy(built, os.path.join(tmp, "dirac_floer.so"))
    sys.path.insert(0, tmp)
    import dirac_floer

    return dirac_floer


def main():
    df = load()
    model = df.Spectrum.circle(2, 32)
    assert model.eigenvalues == [-1.5, -0.5, 0.5, 1.5]
    assert model.n_neg == 2
    assert model.orthonormality_error() < 1e-12

    quad = df.Hamiltonian.quadratic()
    pts = df.critical_window(model, quad, 0.0, 2.0)
    assert [p.rel_index for p in pts] == [0, 2], pts
    p = pts[0]
    assert abs(df.energy(model, quad, p.coeffs, p.lam) - p.energy) < 1e-12
    g, gl = df.gradient(model, quad, p.coeffs, p.lam)
    assert max(abs(c) for c in g) < 1e-8 and abs(gl) < 1e-8

    ham = df.Hamiltonian.linear_break(1e-3, quad)
    res = df.plain_homology(model, ham, 0.0, 2.0)
    assert res["d_squared_zero"]
    assert [d for _, d in res["homology"]] == [1, 0, 0, 1], res

    growth = df.Hamiltonian.power(3.0, 1.0).verify_growth(model, 10.0)
    assert growth["conforming"], growth

    tr = df.flow(model, ham, pts[1].coeffs, pts[1].lam, dt=1e-2, t_max=1.0)
    assert all(b <= a + 1e-10 for a, b in zip(tr["energies"], tr["energies"][1:]))

    try:
        df.Spectrum.circle(2, 3)
    except ValueError:
        pass
    else:
        raise AssertionError("undersampled grid accepted")
    print("smoke test ok")


if __name__ == "__main__":
    main()
