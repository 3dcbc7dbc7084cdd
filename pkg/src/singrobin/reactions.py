"""Reaction terms: gradient-dependent convection plus a singular zero-order term.

Both terms come from small closed-form families so every growth envelope used
by the solvability conditions has an exact constant, re-validated by sampling.
The singular term blows up at 0 and is only ever evaluated there through its
truncation, which freezes the argument at a strictly positive subsolution
value; the truncated primitives are closed-form and vanish at 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainViolation,
    InternalConsistencyError,
    InvalidArgument,
)

__all__ = [
    "ConvectionSpec",
    "SingularSpec",
    "ReactionSpec",
    "GrowthConstants",
    "ConditionCheck",
    "ConditionVerdicts",
    "TruncatedValues",
    "eval_reactions",
    "truncated_reactions",
    "convection_value",
    "singular_value",
    "truncated_convection",
    "truncated_convection_primitive",
    "truncated_singular",
    "truncated_singular_primitive",
    "hypothesis_constants",
    "check_small_data_conditions",
]

F_FAMILIES = ("affine", "bounded_gradient", "zero")
G_FAMILIES = ("power_singular", "constant", "zero")


@dataclass(frozen=True)
class ConvectionSpec:
    """Convection term ``a + b |s|**(p-1) + c |grad|**(p-1)``.

    ``bounded_gradient`` replaces ``|grad|`` by ``min(|grad|, m_sat)``;
    ``zero`` switches the term off entirely.
    """

    family: str
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0
    m_sat: float = 1.0

    def __post_init__(self):
        if self.family not in F_FAMILIES:
            raise InvalidArgument(f"unknown convection family {self.family!r}")
        if min(self.a, self.b, self.c) < 0:
            raise InvalidArgument("convection coefficients must be nonnegative")
        if self.family == "bounded_gradient" and self.m_sat <= 0:
            raise InvalidArgument("m_sat must be positive")

    def to_dict(self):
        if self.family == "zero":
            return {"family": "zero"}
        d = {"family": self.family, "a": self.a, "b": self.b, "c": self.c}
        if self.family == "bounded_gradient":
            d["m_sat"] = self.m_sat
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            a=float(d.get("a", 0.0)),
            b=float(d.get("b", 0.0)),
            c=float(d.get("c", 0.0)),
            m_sat=float(d.get("m_sat", 1.0)),
        )


@dataclass(frozen=True)
class SingularSpec:
    """Zero-order term, singular (``lam * s**-gamma``), constant, or zero."""

    family: str
    lam: float = 1.0
    gamma: float = 0.5
    c0: float = 1.0

    def __post_init__(self):
        if self.family not in G_FAMILIES:
            raise InvalidArgument(f"unknown singular family {self.family!r}")
        if self.family == "power_singular":
            if self.lam <= 0:
                raise InvalidArgument("power_singular needs lam > 0")
            if not (0 < self.gamma < 1):
                raise InvalidArgument("power_singular needs gamma in (0, 1)")
        if self.family == "constant" and self.c0 < 0:
            raise InvalidArgument("constant term must be nonnegative")

    @property
    def is_zero(self):
        return self.family == "zero" or (self.family == "constant" and self.c0 == 0.0)

    def to_dict(self):
        if self.family == "power_singular":
            return {"family": "power_singular", "lambda": self.lam, "gamma": self.gamma}
        if self.family == "constant":
            return {"family": "constant", "c0": self.c0}
        return {"family": "zero"}

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            lam=float(d.get("lambda", 1.0)),
            gamma=float(d.get("gamma", 0.5)),
            c0=float(d.get("c0", 1.0)),
        )


@dataclass(frozen=True)
class ReactionSpec:
    """Convection + singular pair with the positivity witness for integrability.

    ``theta`` is a strictly positive weight entering the integrability check
    of the singular term near 0 and the a-priori bound; ``None`` means the
    constant function 1.  ``epsilon0`` caps the admissible scale of that
    witness.
    """

    f: ConvectionSpec
    g: SingularSpec
    theta: Optional[Callable[[np.ndarray], np.ndarray]] = None
    epsilon0: float = 1.0

    def __post_init__(self):
        if self.epsilon0 <= 0:
            raise InvalidArgument("epsilon0 must be positive")

    def theta_values(self, x):
        if self.theta is None:
            return np.ones_like(np.asarray(x, dtype=float))
        vals = np.asarray(self.theta(np.asarray(x, dtype=float)), dtype=float)
        if not np.all(vals > 0):
            raise InvalidArgument("theta must be strictly positive")
        return vals

    def to_dict(self):
        return {"f": self.f.to_dict(), "g": self.g.to_dict(), "epsilon0": self.epsilon0}

    @classmethod
    def from_dict(cls, d):
        return cls(
            f=ConvectionSpec.from_dict(d["f"]),
            g=SingularSpec.from_dict(d["g"]),
            epsilon0=float(d.get("epsilon0", 1.0)),
        )


@dataclass
class GrowthConstants:
    """Envelope constants of one reaction pair at exponent p and gradient cap M.

    cM, dM bound the convection term for |grad| <= M; c, d bound the singular
    term above 1; c3..c5 are the explicit-growth constants; c7..c9 the p = 2
    difference moduli.
    """

    cM: float
    dM: float
    c: float
    d: float
    c3: float
    c4: float
    c5: float
    c7: float
    c8: float
    c9: float


@dataclass
class ConditionCheck:
    holds: bool
    lhs: float
    rhs: float
    margin: float

    def to_dict(self):
        return {"holds": self.holds, "lhs": self.lhs, "rhs": self.rhs, "margin": self.margin}


@dataclass
class ConditionVerdicts:
    """The five balance inequalities between reaction growth and structure.

    coercivity        : dM + d below the equivalence-weighted structure budget
                        (makes the truncated energy coercive).
    iteration         : same quantity below 1/p of the budget (keeps the inner
                        induction bounded via the recursion bound).
    existence         : c4 + (2p-1) c5 + d below the budget (a-priori bound
                        for the fixed-point iteration).
    existence_iteration: c4 + d below 1/p of the budget (explicit-growth form
                        of the iteration condition).
    uniqueness        : c7 + c1 c8 + c9 below c1^2 c6 (p = 2 only; flagged
                        not applicable otherwise).
    """

    coercivity: ConditionCheck
    iteration: ConditionCheck
    existence: ConditionCheck
    existence_iteration: ConditionCheck
    uniqueness: ConditionCheck
    uniqueness_applicable: bool

    def to_dict(self):
        return {
            "coercivity": self.coercivity.to_dict(),
            "iteration": self.iteration.to_dict(),
            "existence": self.existence.to_dict(),
            "existence_iteration": self.existence_iteration.to_dict(),
            "uniqueness": self.uniqueness.to_dict(),
            "uniqueness_applicable": self.uniqueness_applicable,
        }


@dataclass
class TruncatedValues:
    f: float
    g: float
    F: float
    G: float


def convection_value(spec: ConvectionSpec, p, s, grad):
    s = np.asarray(s, dtype=float)
    grad = np.asarray(grad, dtype=float)
    if spec.family == "zero":
        return np.zeros(np.broadcast(s, grad).shape)
    gmag = np.abs(grad)
    if spec.family == "bounded_gradient":
        gmag = np.minimum(gmag, spec.m_sat)
    return spec.a + spec.b * np.abs(s) ** (p - 1) + spec.c * gmag ** (p - 1)


def singular_value(spec: SingularSpec, s):
    s = np.asarray(s, dtype=float)
    if spec.family == "power_singular":
        if np.any(s <= 0):
            raise DomainViolation(
                "singular term needs s > 0; evaluate the truncated form instead"
            )
        return spec.lam * s ** (-spec.gamma)
    if spec.family == "constant":
        return np.full(s.shape, spec.c0)
    return np.zeros(s.shape)


def eval_reactions(spec: ReactionSpec, p, x, s, grad):
    """Pointwise (f, g) values; raises on s <= 0 when g is singular."""
    f_val = convection_value(spec.f, p, s, grad)
    g_val = singular_value(spec.g, s)
    return f_val, g_val


# -- truncations ------------------------------------------------------------
#
# Below the splice level s_low(x) > 0 both terms are frozen at s_low, which
# removes the singularity and keeps the primitives finite on all of R.  All
# kernels are vectorized and use clamped arguments inside the inactive branch
# so no invalid powers are ever formed.


def _effective_grad(spec: ConvectionSpec, grad_w):
    g = np.abs(np.asarray(grad_w, dtype=float))
    if spec.family == "bounded_gradient":
        g = np.minimum(g, spec.m_sat)
    return g


def truncated_convection(spec: ConvectionSpec, p, s, s_low, grad_w):
    s = np.asarray(s, dtype=float)
    if spec.family == "zero":
        return np.zeros(np.broadcast(s, s_low, grad_w).shape)
    base = spec.a + spec.c * _effective_grad(spec, grad_w) ** (p - 1)
    s_eff = np.maximum(s, s_low)
    return base + spec.b * s_eff ** (p - 1)


def truncated_convection_primitive(spec: ConvectionSpec, p, s, s_low, grad_w):
    s = np.asarray(s, dtype=float)
    s_low = np.asarray(s_low, dtype=float)
    if spec.family == "zero":
        return np.zeros(np.broadcast(s, s_low, grad_w).shape)
    base = spec.a + spec.c * _effective_grad(spec, grad_w) ** (p - 1)
    frozen = base + spec.b * s_low ** (p - 1)
    s_hi = np.maximum(s, s_low)
    below = s * frozen
    above = s_low * frozen + base * (s_hi - s_low) + spec.b * (s_hi**p - s_low**p) / p
    return np.where(s <= s_low, below, above)


def truncated_singular(spec: SingularSpec, s, s_low):
    s = np.asarray(s, dtype=float)
    if spec.family == "constant":
        return np.full(np.broadcast(s, s_low).shape, spec.c0)
    if spec.family == "zero":
        return np.zeros(np.broadcast(s, s_low).shape)
    s_eff = np.maximum(s, s_low)
    return spec.lam * s_eff ** (-spec.gamma)


def truncated_singular_primitive(spec: SingularSpec, s, s_low):
    s = np.asarray(s, dtype=float)
    if spec.family == "constant":
        return spec.c0 * s * np.ones(np.broadcast(s, s_low).shape)
    if spec.family == "zero":
        return np.zeros(np.broadcast(s, s_low).shape)
    lam, gam = spec.lam, spec.gamma
    s_low = np.asarray(s_low, dtype=float)
    s_hi = np.maximum(s, s_low)
    below = s * lam * s_low ** (-gam)
    above = lam * s_low ** (1 - gam) + lam * (s_hi ** (1 - gam) - s_low ** (1 - gam)) / (
        1 - gam
    )
    return np.where(s <= s_low, below, above)


def truncated_reactions(spec: ReactionSpec, p, u_lower, w, x, s):
    """All four truncated quantities at one point: values and primitives.

    ``u_lower`` and ``w`` are discrete fields on a common mesh; the splice
    level and the frozen gradient are read off them at ``x``.
    """
    x = np.asarray(x, dtype=float)
    s_low = u_lower.interpolate(x)
    if np.any(s_low <= 0):
        raise DomainViolation("subsolution must be strictly positive at x")
    grad_w = w.gradient_at(x)
    return TruncatedValues(
        f=truncated_convection(spec.f, p, s, s_low, grad_w),
        g=truncated_singular(spec.g, s, s_low),
        F=truncated_convection_primitive(spec.f, p, s, s_low, grad_w),
        G=truncated_singular_primitive(spec.g, s, s_low),
    )


# -- growth envelopes and balance conditions --------------------------------


def hypothesis_constants(spec: ReactionSpec, p, M, n_check=10_000, seed=2024):
    """Tightest closed-form envelope constants, re-validated by sampling.

    For the affine convection family the gradient-capped constants are the
    textbook substitution cM = c3 + c5 M**(p-1), dM = c4; the saturated family
    moves its gradient contribution into c3.  Monotone singular families have
    difference modulus 0.

    Raises
    ------
    InternalConsistencyError
        if random sampling finds a point violating a claimed envelope.
    """
    if M <= 0:
        raise InvalidArgument("gradient cap M must be positive")
    f, g = spec.f, spec.g
    if f.family == "zero":
        c3 = c4 = c5 = cM = dM = 0.0
        c7 = c8 = 0.0
    elif f.family == "affine":
        c3, c4, c5 = f.a, f.b, f.c
        cM, dM = f.a + f.c * M ** (p - 1), f.b
        # c7/c8 are p = 2 difference moduli; populated with the family's
        # quadratic-case values at any p, validated only when p = 2.
        c7 = f.b
        c8 = f.c
    else:  # bounded_gradient: gradient part is globally bounded
        c3, c4, c5 = f.a + f.c * f.m_sat ** (p - 1), f.b, 0.0
        cM, dM = f.a + f.c * min(M, f.m_sat) ** (p - 1), f.b
        c7 = f.b
        c8 = f.c

    if g.family == "power_singular":
        c, d, c9 = g.lam, 0.0, 0.0
    elif g.family == "constant":
        c, d, c9 = g.c0, 0.0, 0.0
    else:
        c, d, c9 = 0.0, 0.0, 0.0

    gc = GrowthConstants(cM=cM, dM=dM, c=c, d=d, c3=c3, c4=c4, c5=c5, c7=c7, c8=c8, c9=c9)
    _validate_growth(spec, p, M, gc, n_check, seed)
    return gc


def _validate_growth(spec, p, M, gc, n_check, seed):
    rng = np.random.default_rng(seed)
    s = rng.uniform(-10.0, 10.0, n_check)
    grad = rng.uniform(-M, M, n_check)
    f_val = convection_value(spec.f, p, s, grad)
    tol = 1e-12
    if np.any(f_val > gc.cM + gc.dM * np.abs(s) ** (p - 1) + tol):
        raise InternalConsistencyError("capped-gradient convection envelope violated")
    if np.any(f_val > gc.c3 + gc.c4 * np.abs(s) ** (p - 1) + gc.c5 * np.abs(grad) ** (p - 1) + tol):
        raise InternalConsistencyError("explicit-growth convection envelope violated")
    s_pos = rng.uniform(1.0, 50.0, n_check)
    g_val = singular_value(spec.g, s_pos)
    if np.any(g_val > gc.c + gc.d * s_pos ** (p - 1) + tol):
        raise InternalConsistencyError("singular-term growth envelope violated")
    if math.isclose(p, 2.0):
        t = rng.uniform(-10.0, 10.0, n_check)
        xi = rng.uniform(-M, M, n_check)
        lhs = (convection_value(spec.f, p, s, xi) - convection_value(spec.f, p, t, xi)) * (s - t)
        if np.any(lhs > gc.c7 * (s - t) ** 2 + tol):
            raise InternalConsistencyError("state-difference modulus violated")
        eta = rng.uniform(-M, M, n_check)
        lhs = np.abs(convection_value(spec.f, p, t, xi) - convection_value(spec.f, p, t, eta))
        if np.any(lhs > gc.c8 * np.abs(xi - eta) + tol):
            raise InternalConsistencyError("gradient-difference modulus violated")
        u = rng.uniform(1.0, 50.0, n_check)
        v = rng.uniform(1.0, 50.0, n_check)
        lhs = (singular_value(spec.g, u) - singular_value(spec.g, v)) * (u - v)
        if np.any(lhs > gc.c9 * (u - v) ** 2 + tol):
            raise InternalConsistencyError("singular-difference modulus violated")


def check_small_data_conditions(gc: GrowthConstants, c1, c2, c6, p):
    """Evaluate the five balance inequalities with explicit sides and margins.

    ``c1`` is the norm-equivalence constant, ``c2`` the operator structure
    constant, ``c6`` the strong-monotonicity modulus (may be NaN when
    unavailable).  The uniqueness verdict is flagged not applicable unless
    p = 2 and c6 is supplied.
    """
    # c1 = 1 is the degenerate Neumann value (the two norms coincide there).
    if not (0 < c1 <= 1):
        raise InvalidArgument(f"c1 must lie in (0,1], got {c1}")
    if not (0 < c2 < 1):
        raise InvalidArgument(f"c2 must lie in (0,1), got {c2}")
    if p <= 1:
        raise InvalidArgument("p must exceed 1")
    budget = c1**p * c2

    def chk(lhs, rhs):
        return ConditionCheck(holds=bool(lhs < rhs), lhs=float(lhs), rhs=float(rhs), margin=float(rhs - lhs))

    applicable = bool(math.isclose(p, 2.0) and c6 is not None and np.isfinite(c6))
    c6_val = float(c6) if applicable else float("nan")
    uniq = ConditionCheck(
        holds=bool(applicable and gc.c7 + c1 * gc.c8 + gc.c9 < c1**2 * c6_val),
        lhs=float(gc.c7 + c1 * gc.c8 + gc.c9),
        rhs=c1**2 * c6_val,
        margin=c1**2 * c6_val - (gc.c7 + c1 * gc.c8 + gc.c9),
    )
    return ConditionVerdicts(
        coercivity=chk(gc.dM + gc.d, budget),
        iteration=chk(gc.dM + gc.d, budget / p),
        existence=chk(gc.c4 + (2 * p - 1) * gc.c5 + gc.d, budget),
        existence_iteration=chk(gc.c4 + gc.d, budget / p),
        uniqueness=uniq,
        uniqueness_applicable=applicable,
    )
