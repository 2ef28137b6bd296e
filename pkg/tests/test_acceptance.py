"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that is repeated in the terminal summary.
"""

import numpy as np
import pytest

from whode.ode1 import EvalPoint, solve_U
from whode.ode2 import integrate
from whode.problem import build_B
from whode.validate import KhrapkovSpec, jump_residual, khrapkov_reference

pytestmark = pytest.mark.acceptance


def inf_norm(a):
    return np.abs(a).sum(axis=-1).max()


def shore_residuals(traj, heights):
    p = traj.problem
    k1 = p.cuts[0]
    ks = [k1 + 1j * h for h in heights]
    pts = [EvalPoint(k, c) for k in ks for c in ("gamma-plus", "gamma-minus")]
    U = solve_U(pts, traj).U
    return jump_residual(p, 0, ks, U[0::2], U[1::2])


def test_1_antipov_residual(record, antipov_cfg, antipov_B, antipov_traj):
    heights = (0.5, 1.0, 2.0)
    coarse = max(shore_residuals(antipov_traj, heights))
    fine_traj = integrate(antipov_cfg.problem, antipov_B, L=80, steps=8000)
    fine = max(shore_residuals(fine_traj, heights))
    ok = coarse <= 1e-3 and fine <= 1e-4 and fine <= coarse
    record(
        1,
        "Antipov jump residual",
        f"{coarse:.2e} at (L=40, N_b=2000) <= 1e-3; {fine:.2e} at (L=80, N_b=8000) <= 1e-4",
        ok,
    )
    assert ok


def test_2_khrapkov_oracle(record, khrapkov_cfg, khrapkov_traj):
    z = np.linspace(-2.85, 2.85, 20)
    spec = KhrapkovSpec.from_problem(khrapkov_cfg.problem, T=200.0, tail=True)
    ref = khrapkov_reference(spec, 0j, z)
    U = solve_U(z, khrapkov_traj).U
    diff = float(np.abs(U - ref).max())
    ok = diff <= 1e-4
    record(2, "Khrapkov ODE vs closed form", f"max entrywise {diff:.2e} <= 1e-4 at 20 real z", ok)
    assert ok


def test_3_trivial_factorization(record, identity_cfg):
    p = identity_cfg.problem
    B = build_B(p, identity_cfg.poles)
    traj = integrate(p, B, L=40, steps=2000)
    pts = [EvalPoint(z) for z in np.linspace(-3, 3, 7)] + [
        EvalPoint(1 + 1.5j, "gamma-plus"),
        EvalPoint(1 + 1.5j, "gamma-minus"),
    ]
    U = solve_U(pts, traj).U
    ds = float(np.abs(traj.s).max())
    dr = float(np.abs(traj.r - np.array(B.residues)).max())
    du = float(np.abs(U - np.eye(2)).max())
    ok = max(ds, dr, du) <= 1e-12
    record(3, "H = I gives s = 0, r = t, U = I", f"{ds:.1e}, {dr:.1e}, {du:.1e} <= 1e-12", ok)
    assert ok


def test_4_b_invariance(record, khrapkov_cfg, khrapkov_traj, antipov_cfg, antipov_traj):
    out = {}
    for name, cfg, traj, tol in (
        ("Khrapkov", khrapkov_cfg, khrapkov_traj, 1e-6),
        ("Antipov", antipov_cfg, antipov_traj, 1e-5),
    ):
        alt = integrate(cfg.problem, build_B(cfg.problem, cfg.alt_poles), L=40, steps=2000)
        out[name] = (float(np.abs(traj.s - alt.s).sum(axis=-1).max()), tol)
    ok = all(d <= tol for d, tol in out.values())
    text = "; ".join(f"{n} {d:.1e} <= {tol:g}" for n, (d, tol) in out.items())
    record(4, "B-invariance of s_j", text, ok)
    assert ok


def test_5_constraint_preservation(record, khrapkov_traj, antipov_traj, identity_cfg):
    p = identity_cfg.problem
    trivial = integrate(p, build_B(p, identity_cfg.poles), L=40, steps=2000)
    runs = {"Antipov": antipov_traj, "Khrapkov": khrapkov_traj, "identity": trivial}
    worst_c = max(float(t.constraint_residual().max()) for t in runs.values())
    worst_d = max(float(t.spectrum_drift().max()) for t in runs.values())
    ok = worst_c <= 1e-8 and worst_d <= 1e-8
    record(
        5,
        "constraint and isospectrality",
        f"relative constraint residual {worst_c:.1e} <= 1e-8, spectrum drift {worst_d:.1e} <= 1e-8",
        ok,
    )
    assert ok


def test_6_order_of_accuracy(record, antipov_cfg, antipov_B, khrapkov_cfg, khrapkov_B):
    ratios = {}
    for name, cfg, B, z in (
        ("Antipov", antipov_cfg, antipov_B, np.linspace(-0.95, 0.95, 20)),
        ("Khrapkov", khrapkov_cfg, khrapkov_B, np.linspace(-2.85, 2.85, 20)),
    ):
        p = cfg.problem
        ref = solve_U(z, integrate(p, B, L=40, steps=8000)).U
        errs = [
            float(np.abs(solve_U(z, integrate(p, B, L=40, steps=n)).U - ref).max())
            for n in (250, 500, 1000)
        ]
        ratios[name] = [errs[i] / errs[i + 1] for i in range(2)]
    ok = all(r >= 12 for rs in ratios.values() for r in rs)
    text = "; ".join(f"{n} " + ", ".join(f"{r:.1f}" for r in rs) for n, rs in ratios.items())
    record(6, "error reduction per step halving >= 12", text, ok)
    assert ok


def test_7_normalization_at_infinity(record, khrapkov_traj, antipov_traj):
    ks = 1e3 * np.exp(1j * (2 * np.pi * np.arange(16) / 16 + 0.1))
    out = {n: float(max(inf_norm(u - np.eye(2)) for u in solve_U(ks, t).U))
           for n, t in (("Antipov", antipov_traj), ("Khrapkov", khrapkov_traj))}
    ok = all(v <= 1e-3 for v in out.values())
    record(7, "||U - I|| at |k| = 1e3", "; ".join(f"{n} {v:.1e} <= 1e-3" for n, v in out.items()), ok)
    assert ok


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q"]))
