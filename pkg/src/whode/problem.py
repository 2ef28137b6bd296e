"""Factorization problem: the matrix G(k), its jumps across the cuts and a
rational commutant.

``G`` is held in Moiseev form ``G = sum_n g_n(k) Lambda(k)**n`` with a
polynomial matrix ``Lambda`` and algebraic scalar coefficients ``g_n``.  A
general entrywise form is also accepted so that non-commutative matrices
can be fed to :func:`check_branch_commutativity`; the ODE solver itself
needs the Moiseev form.
"""

from dataclasses import dataclass, field
from functools import cached_property
import itertools

import numpy as np
from numpy.polynomial import polynomial as npoly

from . import cmatrix
from .errors import (
    BadPoleSet,
    DegenerateEigenvalues,
    DivisionByZero,
    EvalAtBranchPoint,
    FactorizationError,
    SingularMatrix,
)
from .expr import OFF, Const, NotPolynomial, ShoreSpec, as_polynomial, evaluate, parse, radicals

__all__ = [
    "FactorizationProblem",
    "CommutantB",
    "CommutativityReport",
    "eval_G",
    "eval_H",
    "jump_eigenvalues",
    "check_branch_commutativity",
    "check_real_axis",
    "RealAxisReport",
    "build_B",
    "default_poles",
]

COMMUTATIVITY_TOL = 1e-10


def _node(e):
    if isinstance(e, str):
        return parse(e)
    if isinstance(e, (int, float, complex)):
        return Const(complex(e))
    return e


@dataclass(frozen=True)
class FactorizationProblem:
    """Description of the matrix to factorize.

    Attributes
    ----------
    dim : int
        Matrix dimension N.
    cuts : tuple of complex
        Upper half-plane branch points ``k_j``; cut ``j`` runs vertically
        from ``k_j`` to ``k_j + i*inf``.
    lam : tuple of tuple of expression, optional
        Polynomial matrix ``Lambda`` (Moiseev form).
    g : tuple of expression, optional
        Coefficients ``g_0 .. g_{N-1}`` (Moiseev form).
    entries : tuple of tuple of expression, optional
        Entrywise ``G`` for the general form.
    epsilon : float
        Half-width of the strip of analyticity around the real axis.
    """

    dim: int
    cuts: tuple
    lam: tuple = None
    g: tuple = None
    entries: tuple = None
    epsilon: float = 0.1
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "cuts", tuple(complex(c) for c in self.cuts))
        for name in ("lam", "entries"):
            rows = getattr(self, name)
            if rows is not None:
                object.__setattr__(self, name, tuple(tuple(_node(e) for e in r) for r in rows))
        if self.g is not None:
            object.__setattr__(self, "g", tuple(_node(e) for e in self.g))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.is_moiseev:
            if len(self.lam) != self.dim or any(len(row) != self.dim for row in self.lam):
                raise ValueError("Lambda must be dim x dim")
            if len(self.g) != self.dim:
                raise ValueError("need exactly dim coefficients g_0..g_{N-1}")
            self.lam_coeffs  # validates polynomial entries
        elif self.entries is None:
            raise ValueError("give either (lam, g) or entries")
        elif len(self.entries) != self.dim or any(len(r) != self.dim for r in self.entries):
            raise ValueError("entries must be dim x dim")
        for c in self.cuts:
            if c.imag < 0:
                raise ValueError(f"cut branch point {c} lies in the lower half-plane")

    @property
    def is_moiseev(self):
        return self.lam is not None and self.g is not None

    @cached_property
    def lam_coeffs(self):
        """Array ``(N, N, deg + 1)`` of ascending coefficients of Lambda."""
        try:
            polys = [[as_polynomial(e) for e in row] for row in self.lam]
        except NotPolynomial as exc:
            raise ValueError(f"Lambda entries must be polynomials in k ({exc})") from None
        deg = max(len(p) for row in polys for p in row) - 1
        out = np.zeros((self.dim, self.dim, deg + 1), dtype=np.complex128)
        for i, row in enumerate(polys):
            for j, p in enumerate(row):
                out[i, j, : len(p)] = p
        return out

    @property
    def lam_degree(self):
        return self.lam_coeffs.shape[2] - 1

    def lam_at(self, k):
        """Lambda(k); for array ``k`` the matrix axes come last."""
        c = self.lam_coeffs
        if np.ndim(k) == 0:
            return npoly.polyval(complex(k), c.transpose(2, 0, 1))
        k = np.asarray(k, dtype=np.complex128)
        vals = npoly.polyval(k.ravel(), c.transpose(2, 0, 1))  # (N, N, M)
        return np.moveaxis(vals, -1, 0).reshape(k.shape + (self.dim, self.dim))

    def shore(self, j, side):
        return ShoreSpec(side, self.cuts[j], j)

    @cached_property
    def expressions(self):
        if self.is_moiseev:
            return list(self.g)
        return [e for row in self.entries for e in row]

    @cached_property
    def radicals(self):
        found = []
        for e in self.expressions:
            for r in radicals(e):
                if r not in found:
                    found.append(r)
        return found


def eval_G(p, k, shore=OFF, flips=frozenset()):
    """G(k) with scalar coefficients taken on the given shore/sheet."""
    k = complex(k)
    n = p.dim
    if p.is_moiseev:
        lam = p.lam_at(k)
        out = np.zeros((n, n), dtype=np.complex128)
        power = np.eye(n, dtype=np.complex128)
        for m, gm in enumerate(p.g):
            if m:
                power = power @ lam
            out += evaluate(gm, k, shore, flips) * power
        return out
    return np.array(
        [[evaluate(e, k, shore, flips) for e in row] for row in p.entries],
        dtype=np.complex128,
    )


def eval_H(p, j, k):
    """Jump coefficient ``H_j(k) = G(k^-) G(k^+)^{-1}`` on cut ``j``.

    Off the cut (but above ``k_j``) the analytic continuation of both
    shore values is used.
    """
    g_minus = eval_G(p, k, p.shore(j, "minus"))
    g_plus = eval_G(p, k, p.shore(j, "plus"))
    return g_minus @ cmatrix.mat_inv(g_plus)


def jump_eigenvalues(p, j, k, lam_values):
    """Eigenvalues of ``H_j(k)`` on the eigenvectors of ``Lambda(k)``.

    ``lam_values`` are the eigenvalues of ``Lambda(k)``; entry ``m`` of the
    result belongs to the same eigenvector as ``lam_values[m]``.
    """
    if not p.is_moiseev:
        raise FactorizationError("jump eigenvalues need the Moiseev form")
    lam_values = np.asarray(lam_values)
    minus = p.shore(j, "minus")
    plus = p.shore(j, "plus")
    num = np.zeros_like(lam_values)
    den = np.zeros_like(lam_values)
    for n, gn in enumerate(p.g):
        num = num + evaluate(gn, k, minus) * lam_values**n
        den = den + evaluate(gn, k, plus) * lam_values**n
    if np.any(den == 0):
        raise SingularMatrix(f"det G(k+) vanishes at k = {k}")
    return num / den


# ==========================
# Branch-commutativity check
# ==========================

@dataclass
class CommutativityReport:
    max_commutator: float
    tolerance: float
    samples: int
    seed: int
    sheets: int
    worst_k: complex = None

    @property
    def passed(self):
        return self.max_commutator <= self.tolerance

    def as_dict(self):
        return {
            "check": "branch_commutativity",
            "max_residual": self.max_commutator,
            "tolerance": self.tolerance,
            "passed": self.passed,
            "samples": self.samples,
            "seed": self.seed,
            "sheets": self.sheets,
        }


def _sample_affixes(p, samples, rng):
    if p.cuts:
        re = np.array([c.real for c in p.cuts])
        lo, hi = re.min() - 3.0, re.max() + 3.0
        top = max(c.imag for c in p.cuts) + 3.0
    else:
        lo, hi, top = -3.0, 3.0, 3.0
    pts = lo + (hi - lo) * rng.random(samples) + 1j * (0.05 + top * rng.random(samples))
    # points on the cuts themselves
    for c in p.cuts:
        pts = np.append(pts, c + 1j * (0.05 + 3.0 * rng.random(max(samples // 4, 1))))
    return pts


def check_branch_commutativity(p, samples=50, seed=0, tol=COMMUTATIVITY_TOL):
    """Check that all branches of G (and their ratios) commute.

    At every sampled affix, G is evaluated on every sheet (every sign
    combination of its radicals); the sheet values and all ratios
    ``G_a G_b^{-1}`` (the possible jump coefficients) are compared pairwise.
    The reported quantity is ``max ||[A, B]|| / (||A|| ||B||)``.
    """
    rng = np.random.default_rng(seed)
    rads = p.radicals
    if len(rads) > 8:
        raise FactorizationError("too many distinct radicals for sheet enumeration")
    sheets = [
        frozenset(r for r, f in zip(rads, bits) if f)
        for bits in itertools.product((False, True), repeat=len(rads))
    ]
    worst, worst_k = 0.0, None
    for k in _sample_affixes(p, samples, rng):
        try:
            gs = [eval_G(p, k, OFF, s) for s in sheets]
            mats = list(gs)
            for a, b in itertools.permutations(range(len(gs)), 2):
                mats.append(gs[a] @ cmatrix.mat_inv(gs[b]))
        except (EvalAtBranchPoint, DivisionByZero, SingularMatrix):
            continue
        for a, b in itertools.combinations(mats, 2):
            scale = cmatrix.inf_norm(a) * cmatrix.inf_norm(b)
            if scale == 0:
                continue
            c = cmatrix.inf_norm(cmatrix.commutator(a, b)) / scale
            if c > worst:
                worst, worst_k = c, complex(k)
    return CommutativityReport(worst, tol, samples, seed, len(sheets), worst_k)


@dataclass
class RealAxisReport:
    """Sampled check of the strip requirements on the real axis."""

    min_abs_det: float
    max_norm: float
    far_deviation: float
    singular_at: list
    samples: int

    @property
    def passed(self):
        return not self.singular_at and self.min_abs_det > 1e-8 and self.far_deviation <= 1e-4

    def as_dict(self):
        return {
            "check": "real_axis",
            "min_abs_det": self.min_abs_det,
            "max_norm": self.max_norm,
            "far_deviation": self.far_deviation,
            "singular_at": [[z.real, z.imag] for z in self.singular_at],
            "samples": self.samples,
            "passed": self.passed,
        }


def check_real_axis(p, samples=2001, span=50.0, far=1e6):
    """Sample G on the real axis.

    Reports the smallest ``|det G|`` and largest ``||G||`` over a uniform
    grid on ``[-span, span]``, points where G could not be evaluated or is
    singular (a sign change of ``det G`` relative to its neighbours counts,
    which catches real poles between samples), and ``||G - I||`` at
    ``k = +-far``.
    """
    xs = np.linspace(-span, span, samples)
    dets = np.empty(samples, dtype=np.complex128)
    norms = np.empty(samples)
    bad = []
    for i, x in enumerate(xs):
        try:
            g = eval_G(p, x)
        except (EvalAtBranchPoint, DivisionByZero, SingularMatrix, ZeroDivisionError):
            bad.append(complex(x))
            dets[i], norms[i] = np.nan, np.inf
            continue
        dets[i] = np.linalg.det(g)
        norms[i] = cmatrix.inf_norm(g)
    # a pole or zero of det G between samples shows up as a jump in the
    # argument of det G by about pi
    ang = np.angle(dets)
    jumps = np.abs(np.angle(np.exp(1j * np.diff(ang))))
    for i in np.nonzero(jumps > 2.0)[0]:
        bad.append(complex(0.5 * (xs[i] + xs[i + 1])))
    ok = np.isfinite(norms)
    farv = max(cmatrix.inf_norm(eval_G(p, z) - np.eye(p.dim)) for z in (far, -far))
    return RealAxisReport(
        float(np.min(np.abs(dets[ok]))) if ok.any() else 0.0,
        float(np.max(norms[ok])) if ok.any() else np.inf,
        float(farv),
        bad,
        samples,
    )


# =========
# Commutant
# =========

@dataclass(frozen=True, eq=False)
class CommutantB:
    """Rational commutant ``B(k) = I + sum_l t_l / (k - rho_l) = I + Lambda/xi``."""

    poles: tuple
    residues: tuple
    xi: np.ndarray = field(repr=False)
    problem: FactorizationProblem = field(repr=False)

    @property
    def d(self):
        return len(self.poles)

    def xi_at(self, k):
        return npoly.polyval(k, self.xi)

    def __call__(self, k):
        n = self.problem.dim
        out = np.eye(n, dtype=np.complex128)
        for rho, t in zip(self.poles, self.residues):
            out = out + t / (k - rho)
        return out

    def via_lambda(self, k):
        return np.eye(self.problem.dim) + self.problem.lam_at(k) / self.xi_at(k)


def _on_cut(p, z, tol=1e-9):
    for c in p.cuts:
        if abs(z.real - c.real) <= tol * (1 + abs(c)) and z.imag >= c.imag - tol:
            return True
    return False


def build_B(p, poles=None, samples=40, tol=COMMUTATIVITY_TOL):
    """Commutant ``B = I + Lambda(k)/xi(k)`` with ``xi`` monic on ``poles``.

    Raises
    ------
    BadPoleSet
        Poles repeated, on a cut, too few for ``Lambda/xi -> 0``, at a
        degenerate point of ``Lambda``, or if the result fails to commute
        with the jump coefficients on sampled cut points.
    """
    if not p.is_moiseev:
        raise FactorizationError("the commutant is built from the Moiseev form")
    if poles is None:
        poles = default_poles(p)
    poles = tuple(complex(z) for z in poles)
    d = len(poles)
    if d < p.lam_degree + 1:
        raise BadPoleSet(
            f"need at least deg(Lambda) + 1 = {p.lam_degree + 1} poles, got {d}"
        )
    for a, b in itertools.combinations(poles, 2):
        if abs(a - b) <= 1e-9 * (1 + abs(a)):
            raise BadPoleSet(f"repeated pole {a}")
    for z in poles:
        if _on_cut(p, z):
            raise BadPoleSet(f"pole {z} lies on a cut")
    xi = npoly.polyfromroots(poles)
    dxi = npoly.polyder(xi)
    residues = []
    for z in poles:
        lam = p.lam_at(z)
        try:
            cmatrix.eig(lam)
        except DegenerateEigenvalues:
            raise BadPoleSet(f"Lambda has a repeated eigenvalue at pole {z}")
        residues.append(lam / npoly.polyval(z, dxi))
    B = CommutantB(poles, tuple(residues), xi, p)
    _verify_commutant(p, B, samples, tol)
    return B


def _verify_commutant(p, B, samples, tol):
    ts = np.geomspace(0.05, 50.0, samples)
    for j, c in enumerate(p.cuts):
        for t in ts:
            k = c + 1j * t
            bk = B(k)
            try:
                cmatrix.eig(bk - np.eye(p.dim), normalize="unit")
            except DegenerateEigenvalues:
                raise BadPoleSet(f"B is degenerate on cut {j} at k = {k}")
            try:
                h = eval_H(p, j, k)
            except (SingularMatrix, EvalAtBranchPoint, DivisionByZero):
                continue
            rel = cmatrix.inf_norm(cmatrix.commutator(bk, h)) / (
                cmatrix.inf_norm(bk) * cmatrix.inf_norm(h)
            )
            if rel > tol:
                raise BadPoleSet(f"B fails to commute with H_{j} at k = {k} ({rel:.2e})")


def default_poles(p):
    """``deg(Lambda) + 1`` poles on a circle of radius ``2 max|k_j| + 1``.

    The circle is rotated to keep the poles as far as possible from the
    cuts, the real axis and the zeros of ``det Lambda``'s discriminant.
    """
    d = p.lam_degree + 1
    radius = 2.0 * max((abs(c) for c in p.cuts), default=0.0) + 1.0
    best, best_score = None, -np.inf
    for theta0 in np.linspace(0.0, 2 * np.pi / d, 64, endpoint=False):
        pts = radius * np.exp(1j * (theta0 + 2 * np.pi * np.arange(d) / d))
        score = np.min(np.abs(pts.imag))
        for c in p.cuts:
            dist = np.where(
                pts.imag >= c.imag, np.abs(pts.real - c.real), np.abs(pts - c)
            )
            score = min(score, float(np.min(dist)))
        if score > best_score:
            best, best_score = pts, score
    return tuple(complex(z) for z in best)
