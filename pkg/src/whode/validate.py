"""Independent checks of the ODE factorization.

* :func:`khrapkov_reference` computes ``U(b, k)`` for a Khrapkov-class
  jump ``H = h0 I + h1 Lambda`` with ``Lambda**2 = phi I`` from the
  classical closed form, evaluating the Cauchy integrals by composite
  Gauss-Legendre quadrature.  It shares no code with the ODE path beyond
  evaluating ``H``.
* :func:`jump_residual` measures ``||U_-^{-1} U_+ H^{-1} - I||`` on the
  shores of a cut.
* :func:`b_invariance_check` compares ``s_j(b)`` obtained with two
  different commutants.
"""

from dataclasses import dataclass, field
import json

import numpy as np

from . import cmatrix
from .errors import FactorizationError, QuadratureNotConverged
from .problem import eval_H

__all__ = [
    "KhrapkovSpec",
    "khrapkov_reference",
    "khrapkov_s",
    "jump_residual",
    "b_invariance_check",
    "CheckResult",
    "report_json",
]

GL_NODES = 10
QUAD_TOL = 1e-8
MAX_PANELS = 12800


@dataclass
class KhrapkovSpec:
    """Khrapkov-class jump on the cut ``(k1, k1 + i*inf)``.

    Parameters
    ----------
    h : callable
        ``h(t)`` returns the pair ``(h0, h1)`` of coefficients of
        ``H(k1 + i t) = h0 I + h1 Lambda`` for an array of heights ``t >= 0``.
    k1 : complex
        Branch point.
    lam0, lam1 : array_like
        ``Lambda(k) = lam0 + k lam1``, traceless, with ``lam1**2``
        proportional to ``I``.
    panels : int
        Initial number of quadrature panels ``M``.
    T : float
        Truncation height replacing ``i*inf``.
    tol : float
        Panel-doubling tolerance.
    tail : bool
        Also integrate over ``(T, inf)`` through ``t = T/u`` instead of
        truncating; ``T`` then only splits the two quadratures.
    """

    h: object
    k1: complex
    lam0: np.ndarray = field(default_factory=lambda: np.array([[1.0, 0.0], [0.0, -1.0]]))
    lam1: np.ndarray = field(default_factory=lambda: np.array([[0.0, 1.0], [1.0, 0.0]]))
    panels: int = 200
    T: float = 200.0
    tol: float = QUAD_TOL
    tail: bool = False

    def __post_init__(self):
        self.k1 = complex(self.k1)
        self.lam0 = np.asarray(self.lam0, dtype=np.complex128)
        self.lam1 = np.asarray(self.lam1, dtype=np.complex128)
        if abs(np.trace(self.lam0)) > 1e-12 or abs(np.trace(self.lam1)) > 1e-12:
            raise ValueError("Lambda must be traceless")
        j2 = self.lam1 @ self.lam1
        self.j2 = complex(j2[0, 0])
        if np.abs(j2 - self.j2 * np.eye(2)).max() > 1e-12 or self.j2 == 0:
            raise ValueError("lam1 squared must be a nonzero multiple of I")

    @classmethod
    def from_problem(cls, p, j=0, **kw):
        """Spec for cut ``j`` of a problem whose ``Lambda`` is linear in ``k``."""
        c = p.lam_coeffs
        if p.dim != 2 or c.shape[2] > 2:
            raise FactorizationError("Khrapkov reference needs a 2x2 Lambda linear in k")
        lam0 = c[:, :, 0]
        lam1 = c[:, :, 1] if c.shape[2] > 1 else np.zeros((2, 2))
        k1 = p.cuts[j]

        def coeffs(t):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            h0 = np.empty(t.shape, dtype=np.complex128)
            h1 = np.empty(t.shape, dtype=np.complex128)
            for i, ti in enumerate(t.ravel()):
                k = k1 + 1j * ti
                h = eval_H(p, j, k)
                lam = lam0 + k * lam1
                phi = -np.linalg.det(lam)
                h0.flat[i] = 0.5 * np.trace(h)
                h1.flat[i] = 0.5 * np.trace(h @ lam) / phi
            return h0, h1

        return cls(coeffs, k1, lam0, lam1, **kw)

    def lam(self, k):
        k = np.asarray(k, dtype=np.complex128)
        return self.lam0 + k[..., None, None] * self.lam1

    def phi(self, k):
        return -np.linalg.det(self.lam(k))


def _sqrt_phi_on_cut(spec, t):
    """``sqrt(phi)`` along the cut, continuous from the top down."""
    tau = spec.k1 + 1j * np.asarray(t)
    phi = spec.phi(tau)
    lead = np.sqrt(complex(spec.j2))
    # phi = j2 tau^2 + O(tau); factor out the leading term so that the
    # principal root of the remainder stays continuous along the cut
    return lead * tau * np.sqrt(phi / (spec.j2 * tau * tau))


def _densities(spec, t):
    """``xi`` and ``eta`` at heights ``t`` (sorted descending on input)."""
    h0, h1 = spec.h(t)
    rt = _sqrt_phi_on_cut(spec, t)
    fp = h0 + h1 * rt
    fm = h0 - h1 * rt
    if np.any(fp == 0) or np.any(fm == 0):
        raise FactorizationError("jump eigenvalue vanishes on the cut")
    lp = _unwrapped_log(fp)
    lm = _unwrapped_log(fm)
    xi = -(lp + lm) / (4j * np.pi)
    eta = -(lp - lm) / (4j * np.pi * rt)
    return xi, eta


def _unwrapped_log(f):
    return np.log(np.abs(f)) + 1j * np.unwrap(np.angle(f))


def _panel_nodes(tb, T, panels, breaks=()):
    """Gauss-Legendre nodes on ``[tb, T]`` after ``t = tb + v**2``.

    Returns heights ``t`` (descending) and weights for ``dt``.
    """
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    if T <= tb:
        return np.zeros(0), np.zeros(0)
    V = np.sqrt(T - tb)
    cuts = sorted({0.0, V, *[np.sqrt(b - tb) for b in breaks if tb < b < T]})
    edges = []
    for a, c in zip(cuts[:-1], cuts[1:]):
        n = max(1, int(round(panels * (c - a) / V)))
        edges.append(np.linspace(a, c, n + 1))
    ts, ws = [], []
    for e in edges:
        lo, hi = e[:-1, None], e[1:, None]
        v = 0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)
        wv = 0.5 * (hi - lo) * w[None, :]
        ts.append((tb + v * v).ravel())
        ws.append((2 * v * wv).ravel())
    t = np.concatenate(ts)
    wt = np.concatenate(ws)
    order = np.argsort(-t)
    return t[order], wt[order]


def _tail_nodes(T, panels):
    """Nodes and weights for ``dt`` on ``(T, inf)`` after ``t = T/u``."""
    x, w = np.polynomial.legendre.leggauss(GL_NODES)
    edges = np.linspace(0.0, 1.0, max(4, panels // 10) + 1)
    lo, hi = edges[:-1, None], edges[1:, None]
    u = (0.5 * (hi - lo) * x[None, :] + 0.5 * (hi + lo)).ravel()
    wu = (0.5 * (hi - lo) * w[None, :]).ravel()
    order = np.argsort(u)
    u, wu = u[order], wu[order]
    return T / u, T * wu / (u * u)


def _nodes(spec, tb, panels, breaks=()):
    t, w = _panel_nodes(tb, spec.T, panels, breaks)
    if not spec.tail:
        return t, w, len(t)
    tt, wt = _tail_nodes(spec.T, panels)
    # tail nodes first so that heights stay descending
    return np.concatenate([tt, t]), np.concatenate([wt, w]), len(t)


NEAR = 1.0


def _kernel_integral(d, tb, T, side):
    """``int dtau / (k - tau)`` over the cut from height ``tb`` to ``T``.

    ``d = k - k1``; ``side`` is +1 or -1 and decides the branch when ``k``
    lies on the cut (``d.real == 0``).
    """
    wa = d - 1j * tb
    wb = d - 1j * T
    if d.real > 0 or (d.real == 0 and side > 0):
        return np.log(wa) - np.log(wb)
    # left of the cut the segment crosses the negative axis; rotate it away
    return np.log(-wa) - np.log(-wb)


def _reference_once(spec, tb, ks, shore, panels):
    ks = np.atleast_1d(np.asarray(ks, dtype=np.complex128))
    d = ks - spec.k1
    h = d.imag
    on_cut = (np.abs(d.real) <= 1e-12 * max(1.0, abs(spec.k1))) & (h >= tb)
    if spec.tail and np.any(on_cut & (h >= spec.T)):
        raise FactorizationError("shore point above T; raise T")
    on_cut &= h <= spec.T
    if np.any(on_cut) and shore is None:
        raise FactorizationError("point lies on the cut; give shore='plus' or 'minus'")
    if np.any(on_cut & (h <= tb)):
        raise FactorizationError("shore point at the end of the integration range")
    d = np.where(on_cut, 1j * h, d)
    # points on or close to the cut get the density at the nearest cut
    # point subtracted, with 1/(k - tau) integrated exactly
    near = (np.abs(d.real) < NEAR) & (h > tb) & (h < spec.T)
    breaks = np.unique(h[near])[::-1]
    # the subtracted integrand varies on the scale |Re d| around h
    grading = []
    for dr, hn in zip(np.abs(d.real[near]), h[near]):
        step = dr
        while 0 < step < 1.0:
            grading += [hn - step, hn + step]
            step *= 4.0
    t, w, n_main = _nodes(spec, tb, panels, tuple(breaks) + tuple(grading))
    main = np.zeros(len(t), dtype=bool)
    main[len(t) - n_main:] = True
    tall = np.concatenate([t, breaks])
    order = np.argsort(-tall, kind="stable")
    xi_all, eta_all = _densities(spec, tall[order])
    inv = np.empty_like(order)
    inv[order] = np.arange(len(order))
    xi_all, eta_all = xi_all[inv], eta_all[inv]
    xi, eta = xi_all[: len(t)], eta_all[: len(t)]
    xi_b = dict(zip(breaks, xi_all[len(t):]))
    eta_b = dict(zip(breaks, eta_all[len(t):]))

    tau = spec.k1 + 1j * t
    dtau = 1j * w
    zeta = -np.sum(eta * dtau)
    out = np.empty((len(ks), 2, 2), dtype=np.complex128)
    side = -1.0 if shore == "minus" else 1.0
    for n, k in enumerate(ks):
        den = d[n] - 1j * t
        if near[n]:
            x0, e0 = xi_b[h[n]], eta_b[h[n]]
            base = _kernel_integral(d[n], tb, spec.T, side)
            # the constant is subtracted on [tb, T] only
            x_sub = np.where(main, x0, 0.0)
            e_sub = np.where(main, e0, 0.0)
            xb = -(np.sum((xi - x_sub) / den * dtau) + x0 * base)
            eb = -(np.sum((eta - e_sub) / den * dtau) + e0 * base)
        else:
            xb = -np.sum(xi / den * dtau)
            eb = -np.sum(eta / den * dtau)
        rk = np.sqrt(spec.phi(k))
        lam = spec.lam(k)
        sh = np.sinh(rk * eb) / rk if abs(rk) > 1e-300 else eb
        ut = np.exp(xb) * (np.cosh(rk * eb) * np.eye(2) + sh * lam)
        out[n] = _q_inverse(spec, zeta) @ ut
    return out


def _q(spec, zeta):
    c = np.sqrt(complex(spec.j2))
    return np.cosh(c * zeta) * np.eye(2) + np.sinh(c * zeta) / c * spec.lam1


def _q_inverse(spec, zeta):
    return _q(spec, -zeta)


def khrapkov_reference(spec, b, k, shore=None):
    """Closed-form ``U(b, k)`` for a Khrapkov-class jump.

    Parameters
    ----------
    spec : KhrapkovSpec
    b : complex
        Point ``i t_b`` on the imaginary axis with ``0 <= t_b <= T``.
    k : complex or array_like
        Evaluation points.  Points on the cut need ``shore``.
    shore : {None, "plus", "minus"}
        Side of the cut for points lying on it (``plus`` is the right shore).

    Returns
    -------
    ndarray
        ``(2, 2)`` for scalar ``k``, otherwise ``(P, 2, 2)``.

    Raises
    ------
    QuadratureNotConverged
        If doubling the panel count changes the result by more than
        ``spec.tol`` up to ``MAX_PANELS`` panels.
    """
    tb = float(np.imag(b))
    if abs(np.real(b)) > 1e-14 or not 0.0 <= tb <= spec.T:
        raise ValueError("b must lie on the imaginary axis below iT")
    scalar = np.ndim(k) == 0
    if tb == spec.T and not spec.tail:
        n = 1 if scalar else len(np.atleast_1d(k))
        out = np.broadcast_to(np.eye(2, dtype=np.complex128), (n, 2, 2)).copy()
        return out[0] if scalar else out
    m = spec.panels
    prev = _reference_once(spec, tb, k, shore, m)
    while True:
        m *= 2
        cur = _reference_once(spec, tb, k, shore, m)
        err = float(np.max(np.abs(cur - prev)))
        if err <= spec.tol:
            break
        if m >= MAX_PANELS:
            raise QuadratureNotConverged(
                f"panel doubling to {m} still changes the result by {err:.3e}"
            )
        prev = cur
    return cur[0] if scalar else cur


def khrapkov_s(spec, b):
    """``s_1(b) = Q^{-1} (xi I + eta Lambda(k1 + b)) Q`` from the closed form."""
    tb = float(np.imag(b))
    t, w, _ = _nodes(spec, tb, 2 * spec.panels)
    # at b = 0 the densities are taken in the limit from above the branch point
    top = max(tb, 1e-12 * max(1.0, abs(spec.k1)))
    xi, eta = _densities(spec, np.concatenate([t, [top]]))
    zeta = -np.sum(eta[:-1] * 1j * w)
    kap = spec.k1 + 1j * tb
    core = xi[-1] * np.eye(2) + eta[-1] * spec.lam(kap)
    return _q_inverse(spec, zeta) @ core @ _q(spec, zeta)


def jump_residual(p, j, shore_points, U_plus, U_minus):
    """``||U_-^{-1} U_+ H_j^{-1} - I||_inf`` at each shore point."""
    out = []
    n = p.dim
    for k, up, um in zip(shore_points, U_plus, U_minus):
        h = eval_H(p, j, complex(k))
        m = cmatrix.mat_inv(um) @ up @ cmatrix.mat_inv(h)
        out.append(cmatrix.inf_norm(m - np.eye(n)))
    return out


def b_invariance_check(p, B, B_alt, L=40.0, N_b=2000, grid="sqrt"):
    """Max over the grid of ``||s_j(b; B) - s_j(b; B_alt)||_inf``."""
    from .ode2 import integrate

    a = integrate(p, B, L=L, steps=N_b, grid=grid)
    if B_alt is B:
        return 0.0
    c = integrate(p, B_alt, L=L, steps=N_b, grid=grid)
    diff = a.s - c.s
    return float(np.max(np.sum(np.abs(diff), axis=-1)))


@dataclass
class CheckResult:
    check: str
    max_residual: float
    tolerance: float
    extra: dict = field(default_factory=dict)

    @property
    def passed(self):
        return bool(np.isfinite(self.max_residual) and self.max_residual <= self.tolerance)

    def as_dict(self):
        d = {
            "check": self.check,
            "max_residual": float(self.max_residual),
            "tolerance": float(self.tolerance),
            "passed": self.passed,
        }
        d.update(self.extra)
        return d


def report_json(results):
    """JSON text for a list of :class:`CheckResult` (or dicts with ``passed``)."""
    items = [r.as_dict() if hasattr(r, "as_dict") else dict(r) for r in results]
    return json.dumps({"checks": items, "passed": all(i["passed"] for i in items)}, indent=2)
