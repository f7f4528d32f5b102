"""Smoke test for the Python bindings.

Build and install first:  pip install -e crates/python --no-build-isolation
Then run:                 python python/smoke_test.py
"""

import math
import tempfile
from pathlib import Path

import maxwell_stefan as ms

ROOT = Path(__file__).resolve().parent.parent


def check_friction():
    c = [0.2, 0.3, 0.5]
    d = [[0.0, 1.0, 0.816], [1.0, 0.0, 0.2017], [0.816, 0.2017, 0.0]]
    a = ms.friction_matrix(c, d)
    s = [math.sqrt(v) for v in c]
    kernel = max(abs(sum(a[i][j] * s[j] for j in range(3))) for i in range(3))
    assert kernel < 1e-14, kernel

    b = [0.3, -0.1, 0.0]
    shift = sum(bi * si for bi, si in zip(b, s))
    b = [bi - shift * si for bi, si in zip(b, s)]
    m, defect, cond = ms.bott_duffin_solve(c, d, b)
    mp = ms.moore_penrose_solve(c, d, b)
    assert defect < 1e-15 and cond < 1e3
    assert max(abs(x - y) for x, y in zip(m, mp)) < 1e-12
    q = sum(m[i] * a[i][j] * m[j] for i in range(3) for j in range(3))
    assert abs(q - ms.dissipation_density(c, m, d)) < 1e-12 * q

    try:
        ms.friction_matrix([0.5, 0.5], [[0, -1], [-1, 0]])
    except ms.MaxwellStefanError:
        pass
    else:
        raise AssertionError("negative D accepted")


def check_simulation():
    scenario = ms.Scenario.load(ROOT / "scenarios" / "binary_cosine.txt")
    assert scenario.n_species == 2 and scenario.cells == 64
    traj = ms.simulate(scenario)
    report = traj.entropy_report()
    h0 = report["entropy"][0]
    assert max(abs(r) for r in report["residual"]) <= 5e-3 * abs(h0)
    assert all(b <= a for a, b in zip(report["entropy"], report["entropy"][1:]))

    x = traj.cell_centers
    exact = [0.5 + 0.3 * math.cos(math.pi * xi) * math.exp(-math.pi**2 * 0.1) for xi in x]
    final = traj.state(-1)
    err = math.sqrt(sum((row[0] - e) ** 2 for row, e in zip(final, exact)) / len(x))
    assert err < 2e-3, err

    audit = traj.audit()
    assert all(audit["definition_checks"].values()), audit["definition_checks"]

    stiff = ms.Scenario.from_text(
        (ROOT / "scenarios" / "duncan_toor.txt").read_text() + "cfl = 1.0\n"
    )
    try:
        ms.simulate(stiff)
    except ms.StabilityFailure as e:
        assert "step" in str(e)
    else:
        raise AssertionError("expected a stability failure")


def check_cli_run():
    with tempfile.TemporaryDirectory() as out:
        summary = ms.run(ROOT / "scenarios" / "duncan_toor.txt", out, emit=["entropy_series"])
        assert summary["uphill"] == [False, True, False]
        assert (Path(out) / "entropy_series.csv").is_file()


def check_proof_tools():
    assert ms.eta_sigma(0.1875, 0.125, 1.0) == 0.5
    n = 200
    h = 1.0 / n
    phi = [math.sin(math.pi * k * h) ** 3 for k in range(n + 1)]
    lhs, rhs, gap = ms.mol_commutation_check(phi, phi, h, 0.1)
    assert gap < 1e-12
    fuzz = ms.run_fuzz(seed=1, cases=200)
    assert fuzz["passed"], fuzz["failures"][:3]


if __name__ == "__main__":
    for check in (check_friction, check_simulation, check_cli_run, check_proof_tools):
        check()
        print(f"ok  {check.__name__}")
    print("smoke test passed")
