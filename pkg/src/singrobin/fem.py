"""Piecewise-linear finite elements on an interval.

Two-point boundary in place of a surface: the boundary integral of any
quantity is the sum of its endpoint values.  Volume integrals of nonlinear
integrands use fixed 5-point Gauss quadrature per element (exact through
degree 9); squared quantities are integrated exactly by closed form.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import operators
from .errors import InvalidArgument, NumericFailure

__all__ = [
    "Mesh1D",
    "DiscreteField",
    "NormReport",
    "build_mesh",
    "norms",
    "estimate_c1",
    "weak_residual",
    "write_field_csv",
    "read_field_csv",
]

_GAUSS_N = 5
_gp, _gw = np.polynomial.legendre.leggauss(_GAUSS_N)


@dataclass(eq=False)
class Mesh1D:
    """Sorted node array with cached element geometry and quadrature data."""

    nodes: np.ndarray

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        if self.nodes.ndim != 1 or self.nodes.size < 3:
            raise InvalidArgument("mesh needs at least 2 elements (3 nodes)")
        if not np.all(np.isfinite(self.nodes)) or not np.all(np.diff(self.nodes) > 0):
            raise InvalidArgument("mesh nodes must be finite and strictly increasing")
        self.h = np.diff(self.nodes)
        self.n_elements = self.h.size
        self.length = float(self.nodes[-1] - self.nodes[0])
        # Gauss points/weights mapped to each element, shape (n_elements, 5).
        self.quad_x = self.nodes[:-1, None] + (_gp[None, :] + 1.0) * 0.5 * self.h[:, None]
        self.quad_w = _gw[None, :] * 0.5 * self.h[:, None]
        # Hat-function values at the quadrature points.
        self.phi_left = (self.nodes[1:, None] - self.quad_x) / self.h[:, None]
        self.phi_right = (self.quad_x - self.nodes[:-1, None]) / self.h[:, None]

    @property
    def n_nodes(self):
        return self.nodes.size

    def element_of(self, x):
        """Index of the element containing each query point (clamped)."""
        idx = np.searchsorted(self.nodes, np.asarray(x, dtype=float), side="right") - 1
        return np.clip(idx, 0, self.n_elements - 1)


def build_mesh(x_l, x_r, n):
    """Uniform mesh with ``n`` elements on (x_l, x_r)."""
    if not (np.isfinite(x_l) and np.isfinite(x_r) and x_l < x_r):
        raise InvalidArgument(f"degenerate interval ({x_l}, {x_r})")
    if n < 2:
        raise InvalidArgument(f"mesh needs at least 2 elements, got {n}")
    return Mesh1D(np.linspace(x_l, x_r, int(n) + 1))


@dataclass(eq=False)
class DiscreteField:
    """Nodal values of a piecewise-linear function on a mesh."""

    mesh: Mesh1D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mesh.n_nodes,):
            raise InvalidArgument(
                f"value count {self.values.shape} does not match node count {self.mesh.n_nodes}"
            )
        if not np.all(np.isfinite(self.values)):
            raise InvalidArgument("field values must be finite")

    def copy(self):
        return DiscreteField(self.mesh, self.values.copy())

    def interpolate(self, x):
        return np.interp(np.asarray(x, dtype=float), self.mesh.nodes, self.values)

    def element_gradients(self):
        return np.diff(self.values) / self.mesh.h

    def gradient_at(self, x):
        """Piecewise-constant gradient evaluated at query points."""
        return self.element_gradients()[self.mesh.element_of(x)]

    def at_quad(self):
        """Values at the mesh quadrature points, shape (n_elements, 5)."""
        m = self.mesh
        return self.values[:-1, None] * m.phi_left + self.values[1:, None] * m.phi_right

    @classmethod
    def constant(cls, mesh, value):
        return cls(mesh, np.full(mesh.n_nodes, float(value)))

    @classmethod
    def from_callable(cls, mesh, fn):
        return cls(mesh, np.asarray(fn(mesh.nodes), dtype=float))


@dataclass
class NormReport:
    """The norm family of one field: volume, boundary, combined, and sup data."""

    W1p: float
    beta_norm: float
    Lp: float
    boundary_Lp: float
    sup: float
    grad_sup: float


def _signed_pow(x, q):
    """sign(x) |x|**q, safe at 0 for q > 0 (used for |x|**(p-2) x with q = p-1)."""
    return np.sign(x) * np.abs(x) ** q


def _lp_volume_pow(u: DiscreteField, p):
    """Integral of |u|^p over the interval (exact for p = 2, Gauss otherwise)."""
    if p == 2.0:
        a, b = u.values[:-1], u.values[1:]
        return float(np.sum(u.mesh.h * (a * a + a * b + b * b) / 3.0))
    return float(np.sum(u.mesh.quad_w * np.abs(u.at_quad()) ** p))


def norms(u: DiscreteField, p, beta):
    """All norms of one field at exponent p and boundary weight beta."""
    if p <= 1:
        raise InvalidArgument("p must exceed 1")
    if beta <= 0:
        raise InvalidArgument("beta must be positive")
    vol = _lp_volume_pow(u, p)
    grads = u.element_gradients()
    grad_pow = float(np.sum(np.abs(grads) ** p * u.mesh.h))
    bdry_pow = float(np.abs(u.values[0]) ** p + np.abs(u.values[-1]) ** p)
    return NormReport(
        W1p=(vol + grad_pow) ** (1.0 / p),
        beta_norm=(beta * bdry_pow + grad_pow) ** (1.0 / p),
        Lp=vol ** (1.0 / p),
        boundary_Lp=bdry_pow ** (1.0 / p),
        sup=float(np.max(np.abs(u.values))),
        grad_sup=float(np.max(np.abs(grads))) if grads.size else 0.0,
    )


# -- norm equivalence ---------------------------------------------------------


def _ratio_parts(mesh, p, beta, v):
    """p-th powers of the two norms and their gradients w.r.t. nodal values."""
    h = mesh.h
    slope = np.diff(v) / h
    slope_pow = np.abs(slope) ** p * h
    d_slope = p * _signed_pow(slope, p - 1)  # d(slope_pow)/d(slope) * h / h
    grad_num = np.zeros_like(v)
    grad_num[:-1] -= d_slope
    grad_num[1:] += d_slope
    num = beta * (np.abs(v[0]) ** p + np.abs(v[-1]) ** p) + float(np.sum(slope_pow))
    gnum = grad_num.copy()
    gnum[0] += beta * p * _signed_pow(v[0], p - 1)
    gnum[-1] += beta * p * _signed_pow(v[-1], p - 1)
    uq = v[:-1, None] * mesh.phi_left + v[1:, None] * mesh.phi_right
    wq = mesh.quad_w * p * _signed_pow(uq, p - 1)
    den = float(np.sum(mesh.quad_w * np.abs(uq) ** p)) + float(np.sum(slope_pow))
    gden = grad_num.copy()
    gden[:-1] += np.sum(wq * mesh.phi_left, axis=1)
    gden[1:] += np.sum(wq * mesh.phi_right, axis=1)
    return num, gnum, den, gden


def _extremal_log_ratio(mesh, p, beta, sign, starts):
    """Minimize sign * log(beta_norm^p / W1p^p) over nonzero fields."""
    tiny = 1e-300

    def objective(v):
        num, gnum, den, gden = _ratio_parts(mesh, p, beta, v)
        val = sign * (np.log(max(num, tiny)) - np.log(max(den, tiny)))
        grad = sign * (gnum / max(num, tiny) - gden / max(den, tiny))
        return val, grad

    best = np.inf
    for v0 in starts:
        res = optimize.minimize(
            objective,
            v0,
            jac=True,
            method="L-BFGS-B",
            options={"maxiter": 2000, "ftol": 1e-18, "gtol": 1e-14},
        )
        if np.isfinite(res.fun):
            best = min(best, float(res.fun))
    if not np.isfinite(best):
        raise NumericFailure("ratio minimization did not converge")
    return best


def _c1_starts(mesh, seed):
    rng = np.random.default_rng(seed)
    x = mesh.nodes
    xs = (x - x[0]) / mesh.length
    starts = [
        np.ones_like(x),
        xs.copy(),
        np.sin(np.pi * xs),
        np.sin(2 * np.pi * xs) + 0.3,
        np.where(xs < 0.5, 1.0 - 2 * xs, 0.0),  # boundary-concentrated
    ]
    starts += [rng.standard_normal(x.size) for _ in range(4)]
    return starts


_c1_memo = {}


def estimate_c1(mesh, p, beta, seed=0, mode="robin"):
    """Largest constant in (0,1) for the two-sided norm equivalence.

    Found by direct minimization of the two Rayleigh-type ratios
    (boundary-weighted norm over full norm and its reciprocal) with
    multi-start L-BFGS on the log-ratio; the smaller extremal root is
    returned.  In Neumann mode the two norms coincide and the constant is 1.
    Results are memoized per (mesh geometry, p, beta, seed).
    """
    if mode == "neumann":
        return 1.0
    key = (mesh.n_nodes, float(mesh.nodes[0]), float(mesh.nodes[-1]), float(p), float(beta), seed)
    if key in _c1_memo:
        return _c1_memo[key]
    starts = _c1_starts(mesh, seed)
    lo = _extremal_log_ratio(mesh, p, beta, +1.0, starts)  # min log ratio
    hi = _extremal_log_ratio(mesh, p, beta, -1.0, starts)  # -max log ratio
    c_low = np.exp(lo / p)
    c_up = np.exp(hi / p)
    # Shrink by the optimizer's resolution so the returned constant sits on
    # the safe side of the true discrete extremum.
    c1 = float(min(c_low, c_up, 1.0 - 1e-12) * (1.0 - 1e-6))
    _c1_memo[key] = c1
    return c1


# -- weak residual -------------------------------------------------------------


def weak_residual(u: DiscreteField, op, rhs, beta, mode="robin"):
    """Hat-function residuals of the divergence-form equation.

    ``rhs(x, s)`` samples the full right-hand side at position x and state s.
    Robin mode adds the boundary pairing at the endpoints; Neumann mode adds
    the volume pairing of |u|^{p-2} u instead.  Assembly is element-local with
    scatter-adds, independent of element visit order.
    """
    mesh = u.mesh
    p = op.p
    slope = u.element_gradients()
    a_slope = operators.flux(op, slope)
    r = np.zeros(mesh.n_nodes)
    np.add.at(r, np.arange(mesh.n_elements), -a_slope)
    np.add.at(r, np.arange(1, mesh.n_nodes), a_slope)
    uq = u.at_quad()
    if not np.all(np.isfinite(uq)):
        raise InvalidArgument("field values must be finite on quadrature points")
    load = mesh.quad_w * np.asarray(rhs(mesh.quad_x, uq), dtype=float)
    if not np.all(np.isfinite(load)):
        raise InvalidArgument("rhs must be finite on all quadrature points")
    np.add.at(r, np.arange(mesh.n_elements), -np.sum(load * mesh.phi_left, axis=1))
    np.add.at(r, np.arange(1, mesh.n_nodes), -np.sum(load * mesh.phi_right, axis=1))
    if mode == "robin":
        r[0] += beta * _signed_pow(u.values[0], p - 1)
        r[-1] += beta * _signed_pow(u.values[-1], p - 1)
    elif mode == "neumann":
        mq = mesh.quad_w * _signed_pow(uq, p - 1)
        np.add.at(r, np.arange(mesh.n_elements), np.sum(mq * mesh.phi_left, axis=1))
        np.add.at(r, np.arange(1, mesh.n_nodes), np.sum(mq * mesh.phi_right, axis=1))
    else:
        raise InvalidArgument(f"unknown boundary mode {mode!r}")
    return r


# -- CSV interchange ------------------------------------------------------------


def write_field_csv(u: DiscreteField, path):
    """Write ``x,u`` rows at full double precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "u"])
        for x, v in zip(u.mesh.nodes, u.values):
            w.writerow([format(x, ".17g"), format(v, ".17g")])


def read_field_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "u"]:
        raise InvalidArgument(f"{path}: expected header 'x,u'")
    data = np.array([[float(a), float(b)] for a, b in rows[1:]])
    return DiscreteField(Mesh1D(data[:, 0]), data[:, 1])
