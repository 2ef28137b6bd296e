import json

import numpy as np
import pytest
from scipy.integrate import quad

from whode.errors import QuadratureNotConverged
from whode.ode2 import integrate
from whode.problem import build_B, eval_G, eval_H
from whode.validate import (
    CheckResult,
    KhrapkovSpec,
    b_invariance_check,
    jump_residual,
    khrapkov_reference,
    khrapkov_s,
    report_json,
)

K1 = 1 + 0.5j


def h0_scalar(t):
    k = K1 + 1j * np.asarray(t)
    return 1 + 0.8 / (k + 2j) ** 2


def scalar_spec(**kw):
    return KhrapkovSpec(lambda t: (h0_scalar(t), np.zeros(np.shape(t), complex)), K1, **kw)


@pytest.fixture(scope="module")
def khrapkov_spec(khrapkov_cfg):
    return KhrapkovSpec.from_problem(khrapkov_cfg.problem, T=40.0)


def test_tail_matches_long_truncation():
    k = 0.7
    tail = khrapkov_reference(scalar_spec(T=30.0, tail=True), 0j, k)
    long = khrapkov_reference(scalar_spec(T=3000.0, panels=2000), 0j, k)
    # the long run still misses about 0.13 / (2 * 3000**2) beyond its own T
    assert np.abs(tail - long).max() < 1e-7
    with pytest.raises(Exception):
        khrapkov_reference(scalar_spec(T=30.0, tail=True), 0j, K1 + 40j, shore="plus")


def test_empty_range_gives_identity(khrapkov_spec):
    np.testing.assert_array_equal(khrapkov_reference(khrapkov_spec, 40j, 0.3), np.eye(2))
    np.testing.assert_array_equal(khrapkov_s(khrapkov_spec, 40j), khrapkov_s(khrapkov_spec, 40j).T)


def test_scalar_case_matches_cauchy_quadrature():
    spec = scalar_spec(T=60.0)
    tb = 0.4
    for k in [0.0, 2.5 - 1j, 1.3 + 2j]:
        U = khrapkov_reference(spec, 1j * tb, k)

        def integrand(t):
            tau = K1 + 1j * t
            return np.log(h0_scalar(t)) / (k - tau) * 1j / (2j * np.pi)

        re = quad(lambda t: integrand(t).real, tb, 60.0, epsabs=1e-13, limit=200)[0]
        im = quad(lambda t: integrand(t).imag, tb, 60.0, epsabs=1e-13, limit=200)[0]
        expected = np.exp(re + 1j * im)
        np.testing.assert_allclose(U, expected * np.eye(2), atol=1e-9)


def test_panel_doubling_failure_raises():
    def step(t):
        t = np.asarray(t)
        return 1 + 0.1 * (t > np.e) / (1 + t) ** 4, np.zeros(t.shape, complex)

    with pytest.raises(QuadratureNotConverged):
        khrapkov_reference(KhrapkovSpec(step, K1, panels=2, T=20.0, tol=1e-12), 0j, 0.5)


def test_spec_validation():
    with pytest.raises(ValueError):
        KhrapkovSpec(lambda t: (t, t), K1, lam0=np.eye(2))
    with pytest.raises(ValueError):
        KhrapkovSpec(lambda t: (t, t), K1, lam1=np.diag([1.0, 0.0]))


@pytest.fixture(scope="module")
def full_reference(khrapkov_cfg):
    p = khrapkov_cfg.problem
    z = np.linspace(-3, 3, 5)
    a = khrapkov_reference(KhrapkovSpec.from_problem(p, T=200.0, panels=200, tail=True), 0j, z)
    b = khrapkov_reference(KhrapkovSpec.from_problem(p, T=400.0, panels=400, tail=True), 0j, z)
    return z, a, b


def test_quadrature_self_consistency(full_reference):
    _, a, b = full_reference
    assert np.abs(a - b).max() <= 1e-8


def test_truncation_error_is_small(khrapkov_cfg, full_reference):
    z, a, _ = full_reference
    cut = khrapkov_reference(KhrapkovSpec.from_problem(khrapkov_cfg.problem, T=200.0), 0j, z)
    # the fixture decays like k**-4, so the neglected tail is of order 1e-8
    assert 1e-10 < np.abs(cut - a).max() < 1e-7


def test_sokhotski_jump_of_scalar_factor(khrapkov_cfg, khrapkov_spec):
    p = khrapkov_cfg.problem
    for h in [0.2, 0.7, 1.5, 3.0, 8.0]:
        k = K1 + 1j * h
        up = khrapkov_reference(khrapkov_spec, 0j, k, shore="plus")
        um = khrapkov_reference(khrapkov_spec, 0j, k, shore="minus")
        ratio = np.linalg.det(up) / np.linalg.det(um)
        dm = np.linalg.det(eval_G(p, k, p.shore(0, "minus")))
        dp = np.linalg.det(eval_G(p, k, p.shore(0, "plus")))
        assert ratio == pytest.approx(dm / dp, rel=1e-7)


def test_oracle_satisfies_jump(khrapkov_cfg, khrapkov_spec):
    p = khrapkov_cfg.problem
    pts = [K1 + 1j * h for h in (0.5, 1.0, 2.0)]
    up = [khrapkov_reference(khrapkov_spec, 0j, k, shore="plus") for k in pts]
    um = [khrapkov_reference(khrapkov_spec, 0j, k, shore="minus") for k in pts]
    assert max(jump_residual(p, 0, pts, up, um)) <= 1e-7


def test_trivial_jump_residual(identity_cfg):
    M = np.array([[2.0, 1.0], [0.0, 1.0]])
    res = jump_residual(identity_cfg.problem, 0, [1 + 1j, 1 + 3j], [M, M], [M, M])
    assert max(res) <= 1e-15


def test_oracle_s_is_residue_of_dU(khrapkov_spec):
    # for a single cut dU/db U^{-1} = s_1(b) / (k - k1 - b) exactly
    b, delta = 3j, 1e-4
    s1 = khrapkov_s(khrapkov_spec, b)
    for k in [K1 + b + 0.5, -2.0, 3 - 1j]:
        S = (
            khrapkov_reference(khrapkov_spec, b + 1j * delta, k)
            - khrapkov_reference(khrapkov_spec, b - 1j * delta, k)
        ) / (2j * delta) @ np.linalg.inv(khrapkov_reference(khrapkov_spec, b, k))
        np.testing.assert_allclose((k - K1 - b) * S, s1, atol=1e-5)


def test_b_invariance_same_commutant_is_zero(identity_cfg):
    p = identity_cfg.problem
    B = build_B(p, identity_cfg.poles)
    assert b_invariance_check(p, B, B, L=10, N_b=20) == 0.0


def test_b_invariance_khrapkov(khrapkov_cfg, khrapkov_B, khrapkov_traj):
    p = khrapkov_cfg.problem
    alt = integrate(p, build_B(p, [2j, -2j]), L=40, steps=2000)
    assert np.abs(khrapkov_traj.s - alt.s).sum(axis=-1).max() <= 1e-6
    # the residues themselves depend on the commutant
    assert np.abs(khrapkov_traj.r[-1] - alt.r[-1]).max() > 1e-2


def test_report_json():
    checks = [CheckResult("a", 1e-5, 1e-3), CheckResult("b", 2.0, 1.0, {"note": "x"})]
    doc = json.loads(report_json(checks))
    assert [c["passed"] for c in doc["checks"]] == [True, False]
    assert doc["checks"][1]["note"] == "x" and doc["passed"] is False
    assert not CheckResult("nan", float("nan"), 1.0).passed
