import csv
import itertools

import numpy as np
import pytest
from scipy.integrate import quad

from whode.errors import AmbiguousMatch, LTooSmall, NotDiagonalized
from whode.ode1 import solve_U
from whode.ode2 import init_state, integrate, match_s, ode2_rhs
from whode.problem import CommutantB, build_B, eval_H
from whode.validate import KhrapkovSpec, khrapkov_s

J = np.array([[0.0, 1.0], [1.0, 0.0]])


def test_identity_trajectory_is_constant(identity_cfg):
    p = identity_cfg.problem
    B = build_B(p, identity_cfg.poles)
    traj = integrate(p, B, L=40, steps=200)
    assert np.abs(traj.s).max() <= 1e-12
    assert np.abs(traj.r - np.array(B.residues)[None]).max() <= 1e-12


def test_khrapkov_initial_residues(khrapkov_traj):
    r0 = khrapkov_traj.r[0]
    np.testing.assert_allclose(r0[0], 0.5 * np.array([[1, 1], [1, -1]]), atol=1e-15)
    np.testing.assert_allclose(r0[1], 0.5 * np.array([[-1, 1], [1, 1]]), atol=1e-15)


def test_antipov_initial_s(antipov_cfg, antipov_traj):
    p = antipov_cfg.problem
    H = eval_H(p, 0, 1 + 40j)
    w, V = np.linalg.eig(H)
    direct = -V @ np.diag(np.log(w)) @ np.linalg.inv(V) / (2j * np.pi)
    s0 = antipov_traj.s[0, 0]
    assert np.abs(s0).max() < 1e-2
    np.testing.assert_allclose(s0, direct, atol=1e-12)


def test_init_rejects_small_L(antipov_cfg, antipov_B):
    with pytest.raises(LTooSmall):
        init_state(antipov_cfg.problem, antipov_B, 0.2)


def test_init_rejects_non_commuting_B(khrapkov_cfg):
    p = khrapkov_cfg.problem
    t = (np.array([[1.0, 0.0], [0.0, 0.0]]), np.array([[0.0, 0.0], [0.0, 1.0]]))
    bogus = CommutantB((2j, -2j), t, np.array([4.0, 0.0, 1.0]), p)
    with pytest.raises(NotDiagonalized):
        init_state(p, bogus, 40.0)


def test_integrate_needs_steps(khrapkov_cfg, khrapkov_B):
    with pytest.raises(ValueError):
        integrate(khrapkov_cfg.problem, khrapkov_B, steps=5)


# match_s

def _candidates(x, vecs):
    inv = np.linalg.inv(vecs)
    return [vecs @ np.diag(np.asarray(x)[list(p)]) @ inv for p in itertools.permutations(range(len(x)))]


def test_match_diagonal_unchanged():
    x = np.array([0.3 + 0.1j, -0.2])
    out = match_s(x, np.diag([1.0, 5.0]), prev=np.diag(x))
    np.testing.assert_allclose(out, np.diag(x), atol=1e-15)


def test_match_swap_picks_previous_candidate():
    x = np.array([0.25 + 0.05j, -0.4])
    Y = np.array([[0.0, 1.0], [1.0, 0.0]])  # eigenvectors (1, 1) and (1, -1)
    c1, c2 = _candidates(x, np.array([[1.0, 1.0], [1.0, -1.0]]))
    assert np.abs(c1 - c2).max() > 0.1
    np.testing.assert_allclose(match_s(x, Y, prev=c2), c2, atol=1e-14)
    np.testing.assert_allclose(match_s(x, Y, prev=c1), c1, atol=1e-14)
    np.testing.assert_allclose(match_s(x, Y, prev=c2 + 1e-3), c2, atol=1e-14)


def test_match_ambiguous():
    x = np.array([0.25, -0.4])
    Y = np.array([[0.0, 1.0], [1.0, 0.0]])
    c1, c2 = _candidates(x, np.array([[1.0, 1.0], [1.0, -1.0]]))
    with pytest.raises(AmbiguousMatch):
        match_s(x, Y, prev=0.5 * (c1 + c2))


def test_match_by_labels():
    x = np.array([0.1, 0.7])
    Y = np.array([[2.0, 1.0], [0.0, -3.0]])
    vals, vecs = np.linalg.eig(Y)
    out = match_s(x, Y, labels=[2.0, -3.0])
    # x[0] sits on the eigenvector with eigenvalue 2
    v2 = vecs[:, np.argmin(np.abs(vals - 2.0))]
    np.testing.assert_allclose(out @ v2, 0.1 * v2, atol=1e-14)
    with pytest.raises(AmbiguousMatch):
        match_s(x, Y, labels=[-0.5, -0.5])


# right-hand side

def test_rhs_vanishes_for_zero_or_commuting_s(khrapkov_traj):
    ctx = khrapkov_traj.ctx
    r = khrapkov_traj.r[10]
    assert np.abs(ode2_rhs(5j, r, np.zeros((1, 2, 2)), ctx)).max() == 0
    s = 0.3 * np.eye(2)[None].astype(complex)
    assert np.abs(ode2_rhs(5j, r, s, ctx)).max() <= 1e-16
    s = (2 * r[0] @ r[0] - r[0] + np.eye(2))[None]  # a polynomial in r_1
    assert np.abs(ode2_rhs(0.5j, r, s, ctx)[0]).max() <= 1e-14


def test_rhs_matches_commutator_formula(khrapkov_traj):
    ctx = khrapkov_traj.ctx
    st = khrapkov_traj.nodes[700]
    out = ode2_rhs(st.b, st.r, st.s, ctx)
    for l, rho in enumerate(ctx.poles):
        c = st.s[0] @ st.r[l] - st.r[l] @ st.s[0]
        np.testing.assert_allclose(out[l], c / (rho - ctx.cuts[0] - st.b), atol=1e-15)


# Khrapkov closed form

@pytest.fixture(scope="module")
def khrapkov_spec40(khrapkov_cfg):
    return KhrapkovSpec.from_problem(khrapkov_cfg.problem, T=40.0)


def test_khrapkov_s_matches_closed_form(khrapkov_traj, khrapkov_spec40):
    worst = 0.0
    for m in range(0, khrapkov_traj.steps + 1, 50):
        b = khrapkov_traj.b[m]
        ref = khrapkov_s(khrapkov_spec40, 1j * b.imag)
        worst = max(worst, np.abs(khrapkov_traj.s[m, 0] - ref).sum(axis=1).max())
    assert worst <= 1e-6


def _eta(p, k1, t):
    """Scalar density of the log jump along the cut, from H alone."""
    k = k1 + 1j * t
    H = eval_H(p, 0, k)
    lam = np.array([[1, k], [k, -1]])
    rt = k * np.sqrt((k * k + 1) / (k * k))  # sqrt(phi) continuous from the top
    h0 = 0.5 * np.trace(H)
    h1 = 0.5 * np.trace(H @ lam) / (k * k + 1)
    return -(np.log(h0 + h1 * rt) - np.log(h0 - h1 * rt)) / (4j * np.pi * rt)


def test_khrapkov_residues_follow_rotation(khrapkov_cfg, khrapkov_traj):
    p = khrapkov_cfg.problem
    k1 = p.cuts[0]
    t_l = khrapkov_traj.r[0]
    for m in [1200, 1800, 2000]:
        tb = khrapkov_traj.b[m].imag
        re = quad(lambda t: (1j * _eta(p, k1, t)).real, tb, 40.0, limit=400, epsabs=1e-12)[0]
        im = quad(lambda t: (1j * _eta(p, k1, t)).imag, tb, 40.0, limit=400, epsabs=1e-12)[0]
        zeta = -(re + 1j * im)
        Q = np.cosh(zeta) * np.eye(2) + np.sinh(zeta) * J
        Qi = np.cosh(zeta) * np.eye(2) - np.sinh(zeta) * J
        for l in range(2):
            np.testing.assert_allclose(khrapkov_traj.r[m, l], Qi @ t_l[l] @ Q, atol=1e-6)


@pytest.mark.parametrize("which", ["antipov", "khrapkov"])
def test_R_reconstruction(which, request, rng):
    traj = request.getfixturevalue(f"{which}_traj")
    B = request.getfixturevalue(f"{which}_B")
    ks = rng.uniform(-3, 3, 8) + 1j * rng.uniform(-2, 0.3, 8)
    U = solve_U(ks, traj).U
    r0 = traj.r[-1]
    for k, u in zip(ks, U):
        R = np.eye(2) + sum(r / (k - rho) for r, rho in zip(r0, B.poles))
        lhs = u @ B(k) @ np.linalg.inv(u)
        assert np.abs(lhs - R).max() <= 1e-6


# trajectory bookkeeping

def test_grid_and_storage(khrapkov_traj):
    b = khrapkov_traj.b
    assert len(b) == khrapkov_traj.steps + 1
    assert b[0] == 40j and b[-1] == 0
    assert np.all(np.diff(b.imag) < 0)
    hb, hs = khrapkov_traj.half_step_values()
    assert np.all((hb.imag < b[:-1].imag) & (hb.imag > b[1:].imag))
    assert hs.shape == (khrapkov_traj.steps, 1, 2, 2)


def test_continuity_constant_recorded(khrapkov_traj):
    c = khrapkov_traj.continuity_constant()
    assert np.isfinite(c) and c > 0
    ds = np.abs(np.diff(khrapkov_traj.s, axis=0)).sum(axis=-1).max(axis=(-1, -2))
    assert np.all(ds <= c * np.abs(np.diff(khrapkov_traj.b)) * (1 + 1e-12))


def test_L_consistency(antipov_traj):
    assert antipov_traj.l_consistency(steps=400) <= 1e-6


@pytest.mark.parametrize("side", ["plus", "minus"])
def test_detour_rejoins_trajectory(khrapkov_traj, side):
    table = khrapkov_traj.detour(0, 1.0, side)
    # every step starts where the previous one ended, with the same s
    np.testing.assert_allclose(table.b[1:, 0], table.b[:-1, 3], rtol=0, atol=1e-13)
    assert np.abs(table.s[1:, 0] - table.s[:-1, 3]).max() <= 1e-8
    assert table.b[0, 0] == 40j and table.b[-1, 3] == 0


def test_trajectory_csv(tmp_path, identity_cfg):
    p = identity_cfg.problem
    traj = integrate(p, build_B(p, identity_cfg.poles), L=10, steps=20)
    path = tmp_path / "traj.csv"
    traj.to_csv(path)
    rows = list(csv.reader(open(path)))
    header, body = rows[0], rows[1:]
    assert header[:2] == ["Im(b)", "half_step"]
    assert len(header) == 2 + 2 * 4 * (2 + 1)
    assert len(body) == 2 * 20 + 1
    assert float(body[0][0]) == 10.0 and float(body[-1][0]) == 0.0
    assert body[1][1] == "1" and body[1][2] == ""
