"""Linear ODE1 producing the factor ``U(k)``.

For a fixed ``k`` the system is::

    dU/db = sum_j s_j(b) / (k - (k_j + b)) U,     U(iL, k) = I,

integrated along the same path and with the same RK4 stages as ODE2, so
the coupled system is advanced by one consistent RK4 scheme.  Points in
the plane share one vectorized pass over the stored stages.  Points on a
cut take a separate contour that goes round the pole ``b = k - k_j`` on
the side selected by the requested shore.
"""

from dataclasses import dataclass, field
import csv
import json

import numpy as np

from .errors import FactorizationError, NonInvertible, PoleCollision

__all__ = [
    "EvalPoint",
    "FactorizationResult",
    "ode1_rhs",
    "ordered_exponential",
    "solve_U",
]

COLLISION_TOL = 1e-6
DET_TOL = 1e-12
CONTOURS = ("straight", "gamma-plus", "gamma-minus")


@dataclass(frozen=True)
class EvalPoint:
    """Point at which ``U`` is wanted.

    ``contour`` is ``"straight"`` for a point off the cuts, or
    ``"gamma-plus"`` / ``"gamma-minus"`` for the right/left shore of cut
    ``cut``.
    """

    k: complex
    contour: str = "straight"
    cut: int = 0

    def __post_init__(self):
        object.__setattr__(self, "k", complex(self.k))
        if self.contour not in CONTOURS:
            raise ValueError(f"unknown contour {self.contour!r}")


def ode1_rhs(b, U, k, s, cuts, L=1.0):
    """Right-hand side ``sum_j s_j / (k - k_j - b) @ U`` for one point.

    Raises
    ------
    PoleCollision
        If ``k - k_j - b`` is within ``1e-6 * L`` of zero.
    """
    U = np.asarray(U, dtype=np.complex128)
    acc = np.zeros_like(U)
    for j, c in enumerate(cuts):
        den = k - c - b
        if abs(den) < COLLISION_TOL * L:
            raise PoleCollision(f"k = {k} meets the pole of cut {j} at b = {b}")
        acc += s[j] / den
    return acc @ U


def _rk4_products(mats, X):
    """Advance ``X`` through RK4 steps whose stage generators are ``mats``.

    ``mats`` has shape ``(M, 4, P, N, N)`` with the step weight already
    folded in; ``X`` has shape ``(P, N, N)``.
    """
    for m in range(mats.shape[0]):
        a1, a2, a3, a4 = mats[m]
        k1 = a1 @ X
        k2 = a2 @ (X + 0.5 * k1)
        k3 = a3 @ (X + 0.5 * k2)
        k4 = a4 @ (X + k3)
        X = X + (k1 + 2.0 * (k2 + k3) + k4) / 6.0
    return X


def ordered_exponential(C, path, steps, X0=None):
    """Solve ``dX/dt = C(t) X`` along ``path`` by RK4; return ``X`` at the end.

    Parameters
    ----------
    C : callable
        ``C(t)`` returns an ``(N, N)`` matrix.
    path : object
        Has ``b(u)`` and ``db(u)`` for ``u`` in ``[0, 1]`` (see the legs in
        :mod:`whode.ode2`).
    steps : int
    X0 : array_like, optional
        Initial value, identity by default.
    """
    n = np.asarray(C(path.b(0.0))).shape[0]
    X = np.eye(n, dtype=np.complex128) if X0 is None else np.array(X0, dtype=np.complex128)
    du = 1.0 / steps
    mats = np.empty((steps, 4, 1, n, n), dtype=np.complex128)
    for m in range(steps):
        u0 = m * du
        for i, u in enumerate((u0, u0 + 0.5 * du, u0 + 0.5 * du, u0 + du)):
            mats[m, i, 0] = du * path.db(u) * np.asarray(C(path.b(u)))
    return _rk4_products(mats, X[None])[0]


def _stage_generators(table, ks, cuts, L):
    """``w * sum_j s_j / (k - k_j - b)`` for every stage and point."""
    den = ks[None, None, :, None] - cuts[None, None, None, :] - table.b[:, :, None, None]
    live = table.w != 0
    close = np.abs(den) < COLLISION_TOL * L
    if np.any(close & live[:, :, None, None]):
        m, i, p, j = np.argwhere(close & live[:, :, None, None])[0]
        raise PoleCollision(
            f"k = {ks[p]:.6g} meets the pole of cut {j} at b = {table.b[m, i]:.6g}; "
            "points on a cut need a gamma-plus or gamma-minus contour"
        )
    coef = np.where(live[:, :, None, None], table.w[:, :, None, None] / np.where(close, 1.0, den), 0)
    return np.einsum("mipj,mijab->mipab", coef, table.s)


def _solve_table(table, ks, cuts, L, n, U0=None, chunk=512):
    start = np.eye(n, dtype=np.complex128) if U0 is None else np.asarray(U0, dtype=np.complex128)
    X = np.broadcast_to(start, (len(ks), n, n)).copy()
    for start in range(0, len(table), chunk):
        part = table.slice(start, start + chunk)
        X = _rk4_products(_stage_generators(part, ks, cuts, L), X)
    return X


def _near_cut(k, cuts, radius):
    """``(j, height, side)`` if ``k`` lies within ``radius`` of cut ``j``."""
    for j, c in enumerate(cuts):
        d = k - c
        if abs(d.real) < radius and d.imag > 4 * radius:
            return j, d.imag, "plus" if d.real > 0 else "minus"
    return None


def _shore_height(point, cuts):
    c = cuts[point.cut]
    d = point.k - c
    if abs(d.real) > 1e-9 * max(1.0, abs(c)) or d.imag <= 0:
        raise FactorizationError(f"{point.k} is not on cut {point.cut} above {c}")
    return d.imag


@dataclass
class FactorizationResult:
    """Values of ``U`` at the requested points."""

    points: list
    U: np.ndarray
    L: float
    steps: int
    diagnostics: dict = field(default_factory=dict)
    trajectory: object = field(default=None, repr=False)

    @property
    def det(self):
        return np.linalg.det(self.U)

    def rows(self):
        out = []
        for pt, u, d in zip(self.points, self.U, self.det):
            row = [pt.k.real, pt.k.imag]
            for z in u.ravel():
                row += [z.real, z.imag]
            out.append(row + [abs(d)])
        return out

    def header(self):
        n = self.U.shape[1]
        cols = ["Re(k)", "Im(k)"]
        for a in range(n):
            for c in range(n):
                cols += [f"Re(U{a + 1}{c + 1})", f"Im(U{a + 1}{c + 1})"]
        return cols + ["|det U|"]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])

    def to_json(self, path=None):
        doc = {
            "L": self.L,
            "steps": self.steps,
            "points": [
                {
                    "k": [pt.k.real, pt.k.imag],
                    "contour": pt.contour,
                    "U_re": u.real.tolist(),
                    "U_im": u.imag.tolist(),
                    "abs_det": float(abs(d)),
                }
                for pt, u, d in zip(self.points, self.U, self.det)
            ],
            "diagnostics": self.diagnostics,
        }
        text = json.dumps(doc, indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def solve_U(points, trajectory, radius=0.05, arc_steps=128, U0=None):
    """Integrate ODE1 for each point and return a :class:`FactorizationResult`.

    Parameters
    ----------
    points : sequence of EvalPoint or complex
    trajectory : Ode2Trajectory
    radius : float
        Radius of the detour around the pole for shore points.
    arc_steps : int
        RK4 steps on the detour arc.
    U0 : array_like, optional
        Value of ``U`` at ``b = iL``; identity by default.

    Raises
    ------
    NonInvertible
        If ``|det U|`` falls below ``1e-12`` at some point.
    """
    points = [p if isinstance(p, EvalPoint) else EvalPoint(p) for p in points]
    cuts = np.array(trajectory.problem.cuts, dtype=np.complex128)
    n = trajectory.problem.dim
    L = trajectory.L
    U = np.empty((len(points), n, n), dtype=np.complex128)

    straight = [i for i, p in enumerate(points) if p.contour == "straight"]
    for i in straight:
        for j, c in enumerate(cuts):
            d = points[i].k - c
            if abs(d.real) < COLLISION_TOL * L and d.imag > -COLLISION_TOL * L:
                raise PoleCollision(
                    f"k = {points[i].k} lies on cut {j}; request a gamma-plus or "
                    "gamma-minus contour for points on a cut"
                )
    # points close to a cut keep the pole on the same side of a detour whose
    # distance from it is resolved by the step size
    routed = {}
    for i in straight:
        near = _near_cut(points[i].k, cuts, radius)
        if near is not None:
            routed[i] = near
    plain = [i for i in straight if i not in routed]
    if plain:
        ks = np.array([points[i].k for i in plain])
        U[plain] = _solve_table(trajectory.stages, ks, cuts, L, n, U0)
    for i, p in enumerate(points):
        if i in routed:
            j, h, side = routed[i]
            table = trajectory.detour(j, h, side, radius=2 * radius, arc_steps=arc_steps)
        elif p.contour != "straight":
            h = _shore_height(p, cuts)
            side = "plus" if p.contour == "gamma-plus" else "minus"
            table = trajectory.detour(p.cut, h, side, radius=radius, arc_steps=arc_steps)
        else:
            continue
        U[i] = _solve_table(table, np.array([p.k]), cuts, L, n, U0)[0]

    dets = np.abs(np.linalg.det(U))
    bad = np.nonzero(dets < DET_TOL)[0]
    if len(bad):
        raise NonInvertible(f"|det U| = {dets[bad[0]]:.3e} at k = {points[bad[0]].k}")
    return FactorizationResult(points, U, L, trajectory.steps, trajectory=trajectory)
