"""Nonlinear ODE for the residues ``r_l(b)`` of ``R(b, k)`` and the
coefficients ``s_j(b)`` of ODE1.

The system integrated is::

    dr_l/db = sum_j [s_j, r_l] / (rho_l - (k_j + b))

with ``s_j`` rebuilt from ``r`` at every stage: its eigenvectors are those
of ``R(b, k_j + b) - I = sum_l r_l / (k_j + b - rho_l)`` and its eigenvalues
are ``-log(f_m) / (2 pi i)`` where ``f_m`` are the eigenvalues of the jump
``H_j(k_j + b)``.

Eigenvalues are paired with eigenvectors exactly rather than by a search:
``R(b, k)`` is conjugate to ``B(k)``, so the eigenvalue of ``R - I`` on a
given eigenvector equals ``lambda_m / xi(k)`` for the eigenvalue
``lambda_m`` of ``Lambda(k)`` that carries the jump eigenvalue ``f_m``.  The
logarithm branch of each ``f_m`` is carried along the path by continuity,
starting from the branch near zero at ``b = iL``.

The path in ``b`` is a sequence of legs, each integrated by classical RK4
with a fixed number of steps in its own parameter ``u`` in ``[0, 1]``.  The
main leg runs down the imaginary axis from ``iL`` to ``0``; by default it
uses ``b = iL (1 - u)**2`` so that the square-root behaviour of the data at
the branch point becomes smooth in ``u``.  Every stage value of ``s`` is
kept so that ODE1 can be advanced with exactly the same RK4 stages.
"""

from dataclasses import dataclass, field
import csv
import itertools
import math

import numpy as np

from . import cmatrix
from .cmatrix import TWO_PI_I
from .errors import (
    AmbiguousMatch,
    DegenerateEigenvalues,
    FactorizationError,
    LTooSmall,
    NotDiagonalized,
)
from .problem import eval_H, jump_eigenvalues

__all__ = [
    "AxisLeg",
    "LineLeg",
    "ArcLeg",
    "Ode2State",
    "Ode2Segment",
    "Ode2Trajectory",
    "StageTable",
    "init_state",
    "match_s",
    "ode2_rhs",
    "integrate",
    "integrate_legs",
]

INIT_TOL = 0.1
MATCH_RATIO = 2.0
BRANCH_NUDGE = 1e-12


# ====
# Legs
# ====

@dataclass(frozen=True)
class AxisLeg:
    """``b`` from ``iL`` down to ``0`` along the imaginary axis."""

    L: float
    grid: str = "sqrt"

    def __post_init__(self):
        if self.grid not in ("sqrt", "uniform"):
            raise ValueError(f"unknown grid {self.grid!r}")

    def b(self, u):
        v = 1.0 - u
        return 1j * self.L * (v * v if self.grid == "sqrt" else v)

    def db(self, u):
        if self.grid == "sqrt":
            return -2j * self.L * (1.0 - u)
        return -1j * self.L + 0 * u


@dataclass(frozen=True)
class LineLeg:
    start: complex
    end: complex

    def b(self, u):
        return self.start + u * (self.end - self.start)

    def db(self, u):
        return (self.end - self.start) + 0 * u


@dataclass(frozen=True)
class ArcLeg:
    """``b = center + radius * exp(i theta)``, theta from ``theta0`` to ``theta1``."""

    center: complex
    radius: float
    theta0: float
    theta1: float

    def b(self, u):
        th = self.theta0 + u * (self.theta1 - self.theta0)
        return self.center + self.radius * np.exp(1j * th)

    def db(self, u):
        th = self.theta0 + u * (self.theta1 - self.theta0)
        return 1j * self.radius * np.exp(1j * th) * (self.theta1 - self.theta0)


# ==========
# Containers
# ==========

@dataclass
class Ode2State:
    """State at one point of the path.

    ``labels[j]`` and ``logs[j]`` are the eigenvalues of ``Lambda(k_j + b)``
    and the continued logarithms of the matching jump eigenvalues; they
    carry the branch bookkeeping from one step to the next.
    """

    b: complex
    r: np.ndarray
    s: np.ndarray
    labels: list
    logs: list


@dataclass
class StageTable:
    """RK4 stage data consumed by ODE1.

    ``b[m, i]`` is the stage point, ``w[m, i] = du * db/du`` the stage
    weight and ``s[m, i, j]`` the coefficient of cut ``j`` there.
    """

    b: np.ndarray
    w: np.ndarray
    s: np.ndarray

    def __len__(self):
        return self.b.shape[0]

    @classmethod
    def concat(cls, tables):
        tables = [t for t in tables if len(t)]
        return cls(
            np.concatenate([t.b for t in tables]),
            np.concatenate([t.w for t in tables]),
            np.concatenate([t.s for t in tables]),
        )

    def slice(self, start, stop):
        return StageTable(self.b[start:stop], self.w[start:stop], self.s[start:stop])


@dataclass
class Ode2Segment:
    """Integration of one leg: node states plus the stage table."""

    nodes: list
    stages: StageTable

    @property
    def b(self):
        return np.array([st.b for st in self.nodes])

    @property
    def r(self):
        return np.array([st.r for st in self.nodes])

    @property
    def s(self):
        return np.array([st.s for st in self.nodes])


# =======
# Context
# =======

class _Context:
    """Precomputed constants shared by all stage evaluations."""

    def __init__(self, problem, commutant):
        if not problem.is_moiseev:
            raise FactorizationError("ODE2 needs G in Moiseev form")
        self.problem = problem
        self.B = commutant
        self.cuts = np.array(problem.cuts, dtype=np.complex128)
        self.poles = np.array(commutant.poles, dtype=np.complex128)
        self.t = np.array(commutant.residues)
        self.n = problem.dim
        self.scale = max(1.0, float(np.max(np.abs(self.cuts))) if len(self.cuts) else 1.0)


def _jump_data(ctx, j, kappa):
    lam = cmatrix.eig(ctx.problem.lam_at(kappa), normalize="unit").values
    f = jump_eigenvalues(ctx.problem, j, kappa, lam)
    return lam, f


def match_s(xdiag, Y, prev=None, labels=None, ratio=MATCH_RATIO):
    """Matrix with eigenvalues ``xdiag`` and the eigenvectors of ``Y``.

    The assignment of ``xdiag`` entries to eigenvectors of ``Y`` is fixed
    either by ``labels`` (``labels[m]`` is the eigenvalue of ``Y`` expected
    on the eigenvector carrying ``xdiag[m]``) or, without labels, by
    continuity: the permutation minimizing ``||result - prev||`` wins.

    Raises
    ------
    AmbiguousMatch
        If the runner-up assignment is within a factor ``ratio`` of the best.
    """
    xdiag = np.asarray(xdiag, dtype=np.complex128)
    pair = cmatrix.eig(Y, normalize="unit")
    vecs, vals = pair.vectors, pair.values
    inv = cmatrix.mat_inv(vecs)
    n = len(xdiag)
    if labels is not None:
        cost = np.abs(vals[:, None] - np.asarray(labels)[None, :])
        perm, best, runner = cmatrix.best_permutation(cost)
        if n > 1 and runner < ratio * best:
            raise AmbiguousMatch(
                f"eigenvalues of Y do not single out a pairing (best {best:.3e}, "
                f"next {runner:.3e})"
            )
        return vecs @ np.diag(xdiag[perm]) @ inv
    if prev is None:
        return vecs @ np.diag(xdiag) @ inv
    scored = []
    for p in itertools.permutations(range(n)):
        cand = vecs @ np.diag(xdiag[list(p)]) @ inv
        scored.append((cmatrix.inf_norm(cand - prev), cand))
    scored.sort(key=lambda x: x[0])
    if n > 1 and scored[1][0] < ratio * scored[0][0]:
        raise AmbiguousMatch(
            f"two eigenvalue assignments are equally close to the previous value "
            f"({scored[0][0]:.3e} vs {scored[1][0]:.3e})"
        )
    return scored[0][1]


def _compute_s(ctx, b, r, labels_ref, logs_ref):
    """Coefficients ``s_j`` at ``b`` for residues ``r``; returns (s, labels, logs)."""
    if abs(b) <= BRANCH_NUDGE * ctx.scale:
        b = 1j * BRANCH_NUDGE * ctx.scale
    p = len(ctx.cuts)
    s = np.empty((p, ctx.n, ctx.n), dtype=np.complex128)
    labels, logs = [], []
    for j in range(p):
        kappa = ctx.cuts[j] + b
        lam, f = _jump_data(ctx, j, kappa)
        if labels_ref is not None:
            cost = np.abs(lam[None, :] - labels_ref[j][:, None])
            perm, best, runner = cmatrix.best_permutation(cost)
            lam, f = lam[perm], f[perm]
            ref = logs_ref[j]
        else:
            ref = np.zeros(len(f), dtype=np.complex128)
        ell = cmatrix.diag_log_near(f, ref)
        xi = ctx.B.xi_at(kappa)
        Y = np.einsum("l,lab->ab", 1.0 / (kappa - ctx.poles), r)
        s[j] = match_s(-ell / TWO_PI_I, Y, labels=lam / xi)
        labels.append(lam)
        logs.append(ell)
    return s, labels, logs


def ode2_rhs(b, r, s, ctx):
    """``dr_l/db = sum_j [s_j, r_l] / (rho_l - (k_j + b))``; arrays ``(d,N,N)``."""
    coef = 1.0 / (ctx.poles[None, :] - (ctx.cuts[:, None] + b))  # (p, d)
    sr = np.einsum("jab,lbc->jlac", s, r)
    rs = np.einsum("lab,jbc->jlac", r, s)
    return np.einsum("jl,jlac->lac", coef, sr - rs)


def init_state(problem, commutant, L, init_tol=INIT_TOL):
    """State at ``b = iL``: ``r_l = t_l`` and ``s_j`` from the log near zero.

    Raises
    ------
    LTooSmall
        ``||H_j(k_j + iL) - I||`` exceeds ``init_tol``.
    NotDiagonalized
        The eigenvectors of ``B(k_j + iL)`` fail to diagonalize ``H_j``.
    """
    ctx = commutant if isinstance(commutant, _Context) else _Context(problem, commutant)
    b = 1j * L
    n = ctx.n
    for j, c in enumerate(ctx.cuts):
        kappa = c + b
        h = eval_H(problem, j, kappa)
        dev = cmatrix.inf_norm(h - np.eye(n))
        if dev > init_tol:
            raise LTooSmall(
                f"||H_{j}(k_{j} + iL) - I|| = {dev:.3e} exceeds {init_tol:g}; increase L"
            )
        pstar = cmatrix.eig(ctx.B(kappa) - np.eye(n), normalize="unit").vectors
        dh = cmatrix.mat_inv(pstar) @ h @ pstar
        off = np.abs(dh - np.diag(np.diag(dh))).max()
        if off > 1e-8 * max(1.0, np.abs(dh).max()):
            raise NotDiagonalized(
                f"eigenvectors of B(k_{j} + iL) leave off-diagonal {off:.3e} in H_{j}"
            )
    r = ctx.t.copy()
    s, labels, logs = _compute_s(ctx, b, r, None, None)
    return Ode2State(b, r, s, labels, logs)


def integrate_legs(ctx, state, legs):
    """Integrate ODE2 from ``state`` along ``legs`` = [(leg, steps), ...].

    Returns one :class:`Ode2Segment` per leg.
    """
    segments = []
    for leg, steps in legs:
        seg = _integrate_leg(ctx, state, leg, steps)
        segments.append(seg)
        state = seg.nodes[-1]
    return segments


def _integrate_leg(ctx, state, leg, steps):
    if steps < 1:
        raise ValueError("need at least one step per leg")
    du = 1.0 / steps
    p, d, n = len(ctx.cuts), len(ctx.poles), ctx.n
    nodes = [state]
    st_b = np.empty((steps, 4), dtype=np.complex128)
    st_w = np.empty((steps, 4), dtype=np.complex128)
    st_s = np.empty((steps, 4, p, n, n), dtype=np.complex128)
    cur = state
    for m in range(steps):
        u0 = m * du
        us = (u0, u0 + 0.5 * du, u0 + 0.5 * du, u0 + du)
        labels, logs = cur.labels, cur.logs
        r0 = cur.r
        ks = []
        r_stage = r0
        for i, u in enumerate(us):
            b = leg.b(u)
            w = du * leg.db(u)
            if i == 0:
                s = cur.s
            else:
                try:
                    s, _, _ = _compute_s(ctx, b, r_stage, labels, logs)
                except (AmbiguousMatch, DegenerateEigenvalues) as exc:
                    raise type(exc)(f"{exc} [ODE2 stage at b = {b:.6g}]") from exc
            st_b[m, i], st_w[m, i], st_s[m, i] = b, w, s
            kr = w * ode2_rhs(b, r_stage, s, ctx) if w != 0 else np.zeros_like(r0)
            ks.append(kr)
            if i < 2:
                r_stage = r0 + 0.5 * kr
            elif i == 2:
                r_stage = r0 + kr
        r1 = r0 + (ks[0] + 2 * ks[1] + 2 * ks[2] + ks[3]) / 6.0
        b1 = leg.b(u0 + du)
        try:
            s1, labels1, logs1 = _compute_s(ctx, b1, r1, labels, logs)
        except (AmbiguousMatch, DegenerateEigenvalues) as exc:
            raise type(exc)(f"{exc} [ODE2 node at b = {b1:.6g}]") from exc
        cur = Ode2State(b1, r1, s1, labels1, logs1)
        nodes.append(cur)
    return Ode2Segment(nodes, StageTable(st_b, st_w, st_s))


# ==========
# Trajectory
# ==========

@dataclass
class Ode2Trajectory:
    """ODE2 solution along the imaginary axis from ``iL`` to ``0``."""

    L: float
    steps: int
    grid: str
    problem: object = field(repr=False)
    commutant: object = field(repr=False)
    segment: Ode2Segment = field(repr=False)
    ctx: object = field(repr=False, default=None)

    @property
    def nodes(self):
        return self.segment.nodes

    @property
    def stages(self):
        return self.segment.stages

    @property
    def b(self):
        return self.segment.b

    @property
    def r(self):
        return self.segment.r

    @property
    def s(self):
        return self.segment.s

    def half_step_values(self):
        """``(b, s)`` at the step midpoints (third RK4 stage)."""
        return self.stages.b[:, 2], self.stages.s[:, 2]

    def constraint_residual(self):
        """Relative residual of ``sum_l [s_j, r_l]/(rho_l - k_j - b) = 0`` per node."""
        ctx = self.ctx
        out = []
        for st in self.nodes[:-1]:
            worst = 0.0
            for j in range(len(ctx.cuts)):
                coef = 1.0 / (ctx.poles - (ctx.cuts[j] + st.b))
                acc = np.einsum("l,lab->ab", coef, st.r)
                c = cmatrix.commutator(st.s[j], acc)
                scale = max(cmatrix.inf_norm(st.s[j]) * cmatrix.inf_norm(acc), 1e-300)
                worst = max(worst, cmatrix.inf_norm(c) / scale)
            out.append(worst)
        return np.array(out)

    def spectrum_drift(self):
        """Max distance of the eigenvalues of ``r_l(b)`` from those of ``t_l``."""
        ref = [np.sort_complex(np.linalg.eigvals(t)) for t in self.ctx.t]
        out = []
        for st in self.nodes:
            worst = 0.0
            for l, rl in enumerate(st.r):
                ev = np.linalg.eigvals(rl)
                cost = np.abs(ev[:, None] - ref[l][None, :])
                perm, _, _ = cmatrix.best_permutation(cost)
                worst = max(worst, float(np.max(cost[np.arange(len(ev)), perm])))
            out.append(worst)
        return np.array(out)

    def continuity_constant(self):
        """``max ||s(b_{m+1}) - s(b_m)||_inf / |b_{m+1} - b_m|`` over the grid."""
        ds = np.abs(np.diff(self.s, axis=0)).sum(axis=-1).max(axis=(-1, -2))
        db = np.abs(np.diff(self.b))
        return float(np.max(ds / db))

    def l_consistency(self, steps=200):
        """Change of ``s_j(iL)`` when the run starts from ``2iL`` instead.

        ODE2 is integrated from ``2iL`` down to ``iL``; the returned value is
        ``max_j ||s_j(iL; 2L) - s_j(iL; L)||_inf``.  Small values indicate
        that ``L`` is large enough to stand in for infinity.
        """
        top = init_state(self.problem, self.ctx, 2 * self.L, init_tol=np.inf)
        leg = LineLeg(2j * self.L, 1j * self.L)
        (seg,) = integrate_legs(self.ctx, top, [(leg, steps)])
        diff = seg.nodes[-1].s - self.nodes[0].s
        return float(np.max(np.abs(diff).sum(axis=-1)))

    def detour(self, j, height, side, radius=0.05, arc_steps=128):
        """Stage table of the contour from ``iL`` to ``0`` passing the point
        ``b = i*height`` on its left (``side="plus"``) or right (``"minus"``).

        ODE2 is re-integrated along the detour; below it the stored
        trajectory is reused.
        """
        if side not in ("plus", "minus"):
            raise ValueError("side must be 'plus' or 'minus'")
        radius = min(radius, 0.5 * height)
        t = self.b.imag
        above = np.nonzero(t >= height + radius)[0]
        below = np.nonzero(t <= height - radius)[0]
        if not len(above) or not len(below):
            raise FactorizationError(f"shore point at height {height} outside (0, L)")
        n_a, n_m = int(above[-1]), int(below[0])
        top = 1j * (height + radius)
        bottom = 1j * (height - radius)
        theta1 = 1.5 * np.pi if side == "plus" else -0.5 * np.pi
        h_line = radius / 8.0
        legs = [
            (LineLeg(self.b[n_a], top), max(4, math.ceil(abs(self.b[n_a] - top) / h_line))),
            (ArcLeg(1j * height, radius, 0.5 * np.pi, theta1), arc_steps),
            (LineLeg(bottom, self.b[n_m]), max(4, math.ceil(abs(self.b[n_m] - bottom) / h_line))),
        ]
        segs = integrate_legs(self.ctx, self.nodes[n_a], legs)
        return StageTable.concat(
            [self.stages.slice(0, n_a)]
            + [sg.stages for sg in segs]
            + [self.stages.slice(n_m, len(self.stages))]
        )

    def to_csv(self, path):
        """Write Im(b), then Re/Im of every entry of every r_l and s_j.

        Rows alternate whole steps and half steps (third RK4 stage state is
        not stored, so half-step rows carry ``s`` only and blank ``r``).
        """
        d, n = self.r.shape[1], self.problem.dim
        p = self.s.shape[1]
        header = ["Im(b)", "half_step"]
        for name, count in (("r", d), ("s", p)):
            for l in range(count):
                for a in range(n):
                    for c in range(n):
                        header += [f"Re({name}{l + 1}[{a}{c}])", f"Im({name}{l + 1}[{a}{c}])"]
        hb, hs = self.half_step_values()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for m, st in enumerate(self.nodes):
                w.writerow([repr(float(st.b.imag)), 0] + _flat(st.r) + _flat(st.s))
                if m < len(hb):
                    w.writerow([repr(float(hb[m].imag)), 1] + [""] * (2 * d * n * n) + _flat(hs[m]))


def _flat(a):
    out = []
    for z in np.asarray(a).ravel():
        out += [repr(float(z.real)), repr(float(z.imag))]
    return out


def integrate(problem, commutant, L=40.0, steps=2000, grid="sqrt", init_tol=INIT_TOL):
    """Solve ODE2 from ``b = iL`` to ``b = 0``.

    Parameters
    ----------
    problem : FactorizationProblem
    commutant : CommutantB
    L : float
        Height standing in for ``i*inf``.
    steps : int
        Number of RK4 steps ``N_b``.
    grid : {"sqrt", "uniform"}
        ``"sqrt"`` steps uniformly in ``u`` with ``b = iL(1-u)**2``;
        ``"uniform"`` uses ``h = L/steps`` in ``b`` directly.
    """
    if steps < 10:
        raise ValueError("need at least 10 steps")
    ctx = _Context(problem, commutant)
    state = init_state(problem, ctx, L, init_tol)
    (segment,) = integrate_legs(ctx, state, [(AxisLeg(L, grid), steps)])
    return Ode2Trajectory(L, steps, grid, problem, commutant, segment, ctx)
