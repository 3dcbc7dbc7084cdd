"""Independent a-posteriori checks on fields and on the solver's scaffolding.

Everything here re-derives its quantities from raw fields through the weak
form; nothing is taken from solver internals.  Probes are the nodal hat
functions: they are nonnegative, and every nonnegative piecewise-linear test
function is a positive combination of them, so hat-wise inequalities certify
the whole discrete cone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import operators as ops
from . import reactions
from .errors import (
    DomainViolation,
    InvalidArgument,
    PreconditionViolation,
    UnsupportedProblem,
)
from .fem import DiscreteField, norms, weak_residual
from .iteration import ProblemInstance, iterate_gamma, prepare

__all__ = [
    "InequalityCheck",
    "RecursionReport",
    "UniquenessReport",
    "check_sub_super",
    "lattice_test",
    "recursive_bound_test",
    "extremal_recursion_batch",
    "recursion_bound_formula",
    "uniqueness_multistart",
    "estimate_chain_replay",
    "singular_split_terms",
    "verification_suite",
]


@dataclass
class InequalityCheck:
    kind: str
    max_violation: float
    probe_count: int

    def passed(self, tol):
        return self.max_violation <= tol


def _reaction_rhs(instance, w):
    def rhs(x, s):
        grad_w = w.gradient_at(x)
        return reactions.convection_value(
            instance.reaction.f, instance.p, s, grad_w
        ) + reactions.singular_value(instance.reaction.g, s)

    return rhs


def check_sub_super(u: DiscreteField, w: DiscreteField, instance: ProblemInstance, kind):
    """Signed hat-probe violations of the sub/supersolution inequality.

    ``kind`` is "subsolution" or "supersolution".  Positive ``max_violation``
    means the inequality fails by that amount for some probe.  The field must
    be strictly positive so the singular term is evaluable.
    """
    if kind not in ("subsolution", "supersolution"):
        raise InvalidArgument(f"unknown check kind {kind!r}")
    if np.any(u.values <= 0):
        raise DomainViolation("field must be strictly positive nodewise")
    r = weak_residual(u, instance.operator, _reaction_rhs(instance, w), instance.beta, instance.mode)
    signed = r if kind == "subsolution" else -r
    return InequalityCheck(
        kind=kind, max_violation=float(np.max(signed)), probe_count=r.size
    )


def lattice_test(u1, u2, w, instance, *, pre_tol=None):
    """Supersolution check on the nodal minimum of two supersolutions.

    The continuous minimum has its kinks off-grid, so the discrete check is
    run at a relaxed tolerance proportional to the mesh width times a data
    bound; the returned check carries the raw violation and the caller
    compares against that scale.
    """
    tol = pre_tol if pre_tol is not None else instance.tolerances.inner
    for name, cand in (("u1", u1), ("u2", u2)):
        chk = check_sub_super(cand, w, instance, "supersolution")
        if not chk.passed(tol):
            raise PreconditionViolation(
                f"{name} is not a supersolution (violation {chk.max_violation:.3e})",
                details=chk,
            )
    floor = DiscreteField(u1.mesh, np.minimum(u1.values, u2.values))
    return check_sub_super(floor, w, instance, "supersolution")


def lattice_tolerance(instance, u_min: DiscreteField, w: DiscreteField):
    """O(h) tolerance scale absorbing the interpolation error of a nodal min."""
    h_max = float(np.max(instance.mesh.h))
    rhs = _reaction_rhs(instance, w)
    data = float(np.max(np.abs(rhs(instance.mesh.quad_x, u_min.at_quad()))))
    fluxes = float(np.max(np.abs(ops.flux(instance.operator, u_min.element_gradients()))))
    return h_max * (1.0 + data + fluxes)


# -- recursion bound -------------------------------------------------------------


@dataclass
class RecursionReport:
    bounded: bool
    sup_observed: float
    bound_formula: float
    final: float
    fixed_point: float
    tail_ratio: float


def recursion_bound_formula(alpha, beta, gamma, p, a0):
    """Closed bound for any nonnegative sequence with
    ``alpha a_k^p <= beta a_k + gamma a_{k-1}^p`` and gamma < alpha.

    Uses the contraction rewrite at the cut level T = 2 (beta/(alpha -
    gamma))**(1/(p-1)) (twice the smallest admissible level): the sequence is
    then dominated by an affine recursion with slope below 1, whose invariant
    level caps every term.  At that particular T the residual coefficient
    simplifies to ``alpha - 2**(1-p) (alpha - gamma)``, which keeps the
    formula finite-friendly; the offset is evaluated in logs and only a
    genuinely astronomical bound overflows to +inf.
    """
    denom = alpha - 2.0 ** (1.0 - p) * (alpha - gamma)  # == alpha - beta T**(1-p)
    sigma = 1.0 / p
    B = (gamma / denom) ** sigma
    # A = (beta T / denom)**sigma, assembled in log space.
    log_bT = math.log(beta) + math.log(2.0) + math.log(beta / (alpha - gamma)) / (p - 1.0)
    try:
        A = math.exp(sigma * (log_bT - math.log(denom)))
    except OverflowError:
        return float("inf")
    return max(a0, A / (1.0 - B))


def extremal_recursion_batch(alpha, beta, gamma, p, a0, steps):
    """Iterate the equality version of the recursion for many parameter sets.

    Each step solves ``alpha a^p = beta a + gamma a_prev^p`` for its unique
    positive root with vectorized safeguarded Newton (the target function is
    convex beyond its stationary point, so iterating from above the root
    converges monotonically).  Returns (sup over the trajectory including
    a0, final value, bound from :func:`recursion_bound_formula`).
    """
    alpha = np.atleast_1d(np.asarray(alpha, dtype=float))
    beta = np.atleast_1d(np.asarray(beta, dtype=float)).astype(float)
    gamma = np.atleast_1d(np.asarray(gamma, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    a = np.atleast_1d(np.asarray(a0, dtype=float)).astype(float)
    alpha, beta, gamma, p, a = np.broadcast_arrays(alpha, beta, gamma, p, a)
    a = a.copy()
    if np.any(gamma >= alpha):
        raise PreconditionViolation("the recursion bound needs gamma < alpha")
    if np.any((alpha <= 0) | (beta <= 0) | (gamma < 0) | (p <= 1) | (a < 0)):
        raise InvalidArgument("need alpha, beta > 0, gamma >= 0, p > 1, a0 >= 0")
    sup = a.copy()
    prev = a.copy()
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(steps)):
            # 0 * inf guard: a zero-coupling lane never feeds back.
            C = np.where(gamma == 0.0, 0.0, gamma * prev**p)
            root = _positive_root(alpha, beta, C, p)
            sup = np.maximum(sup, root)
            if np.all(np.abs(root - prev) <= 5e-16 * root + 1e-300):
                prev = root
                break
            prev = root
    bound = np.array(
        [recursion_bound_formula(al, be, ga, pe, a_) for al, be, ga, pe, a_ in zip(alpha, beta, gamma, p, a)]
    )
    return sup, prev, bound


def _positive_root(alpha, beta, C, p):
    """Positive solution of alpha a^p - beta a - C = 0 (C >= 0), vectorized."""
    with np.errstate(over="ignore", invalid="ignore"):
        start = np.maximum(
            (2.0 * beta / alpha) ** (1.0 / (p - 1)), (2.0 * C / alpha) ** (1.0 / p)
        )
        # Lanes whose root exceeds double range are propagated as +inf.
        live = np.isfinite(start) & (start < 1e150)
        a = np.where(live, np.maximum(start, 1e-300), np.inf)
        for _ in range(120):
            ap1 = a ** (p - 1.0)
            f = alpha * a * ap1 - beta * a - C
            df = p * alpha * ap1 - beta
            a_new = a - f / df
            # From above the root the Newton step stays positive and monotone;
            # clamp defensively against roundoff undershoot.
            a_new = np.maximum(a_new, 0.5 * a)
            a_new = np.where(live, a_new, np.inf)
            # Purely relative termination: roots span hundreds of orders of
            # magnitude, an absolute floor would stop tiny ones early.
            if np.all(
                ~live | (np.abs(a_new - a) <= 5e-16 * a_new + 1e-300)
            ):
                a = a_new
                break
            a = a_new
        return np.where(np.isnan(a), np.inf, a)


def recursive_bound_test(alpha, beta, gamma, p, a0, steps):
    """Drive the extremal recursion and compare against the closed bound.

    The equality recursion dominates every sequence satisfying the
    inequality (the step map is monotone in its input), so one trajectory
    certifies the class.  gamma = 0 collapses to the constant
    ``(beta/alpha)**(1/(p-1))`` after one step.
    """
    if not (alpha > 0 and beta > 0 and gamma >= 0 and p > 1 and a0 >= 0):
        raise InvalidArgument("need alpha, beta > 0, gamma >= 0, p > 1, a0 >= 0")
    if gamma >= alpha:
        raise PreconditionViolation("the recursion bound needs gamma < alpha")
    sup, final, bound = extremal_recursion_batch(alpha, beta, gamma, p, a0, steps)
    fixed = (beta / (alpha - gamma)) ** (1.0 / (p - 1))
    # Local contraction factor of the step map at its fixed point.
    rate = gamma * p / ((p - 1) * alpha + gamma)
    return RecursionReport(
        bounded=bool(sup[0] <= bound[0] * (1 + 1e-12)),
        sup_observed=float(sup[0]),
        bound_formula=float(bound[0]),
        final=float(final[0]),
        fixed_point=float(fixed),
        tail_ratio=float(rate),
    )


# -- uniqueness (p = 2) ----------------------------------------------------------


@dataclass
class UniquenessReport:
    max_pairwise_H1: float
    verdict: reactions.ConditionCheck
    distances: list


def uniqueness_multistart(instance: ProblemInstance, n_starts, seed=0):
    """Solve from several randomized outer starts and measure the spread.

    Only meaningful for p = 2 (the difference-testing argument needs the
    quadratic structure); other exponents are refused.  When the uniqueness
    condition holds the spread must collapse to solver scatter, and the
    caller may assert that; when it fails the distances are informational.
    """
    if not math.isclose(instance.p, 2.0):
        raise UnsupportedProblem("uniqueness analysis is restricted to p = 2")
    prep = prepare(instance)
    rng = np.random.default_rng(seed)
    from .energy import build_subsolution

    u_lower, _ = build_subsolution(
        instance.operator, instance.reaction, instance.beta, instance.mesh, mode=instance.mode
    )
    finals = []
    for k in range(n_starts):
        if k == 0:
            w0 = None
        else:
            bump = rng.uniform(0.0, 0.5, size=instance.mesh.n_nodes)
            w0 = DiscreteField(instance.mesh, u_lower.values * (1.0 + bump) + 0.1 * bump)
        report = iterate_gamma(instance, prepared=prep, w0=w0)
        finals.append(report.final)
    dists = []
    for i in range(len(finals)):
        for j in range(i + 1, len(finals)):
            diff = DiscreteField(instance.mesh, finals[i].values - finals[j].values)
            dists.append(norms(diff, 2.0, instance.beta).W1p)
    dists.sort()
    return UniquenessReport(
        max_pairwise_H1=float(dists[-1]) if dists else 0.0,
        verdict=prep.verdicts.uniqueness,
        distances=dists,
    )


def estimate_chain_replay(u, v, instance, gc, c1, c6):
    """Replay the quadratic difference estimate on a solution pair.

    Computes both sides of
    ``c6 ||u-v||^2 <= (c7/c1^2 + c8/c1 + c9/c1^2) ||u-v||^2 + residual slack``
    in the boundary-weighted norm; when the uniqueness condition holds this
    can only be satisfied in the collapsed u = v limit.
    """
    if not math.isclose(instance.p, 2.0):
        raise UnsupportedProblem("the difference estimate needs p = 2")
    diff = DiscreteField(instance.mesh, u.values - v.values)
    nb = norms(diff, 2.0, instance.beta).beta_norm
    lhs = c6 * nb**2
    slack = 2.0 * instance.tolerances.inner * float(np.sum(np.abs(diff.values)))
    rhs = (gc.c7 / c1**2 + gc.c8 / c1 + gc.c9 / c1**2) * nb**2 + slack
    return {"lhs": lhs, "rhs": rhs, "holds": bool(lhs <= rhs), "distance": nb}


def singular_split_terms(u, v, instance):
    """Four-way split of the singular-difference pairing at the level 1.

    The regions {both <= 1}, {both > 1} and the two mixed ones partition the
    quadrature points, so the split reproduces the total exactly; for
    families nonincreasing below 1 the three monotone pieces are nonpositive
    up to quadrature tolerance.
    """
    mesh = instance.mesh
    uq, vq = u.at_quad(), v.at_quad()
    gu = reactions.singular_value(instance.reaction.g, uq)
    gv = reactions.singular_value(instance.reaction.g, vq)
    integrand = (gu - gv) * (uq - vq) * mesh.quad_w
    total = float(np.sum(integrand))
    both_low = np.maximum(uq, vq) <= 1.0
    both_high = np.minimum(uq, vq) > 1.0
    u_low = (uq <= 1.0) & (vq > 1.0)
    v_low = (vq <= 1.0) & (uq > 1.0)
    parts = {
        "both_low": float(np.sum(integrand[both_low])),
        "both_high": float(np.sum(integrand[both_high])),
        "u_low_v_high": float(np.sum(integrand[u_low])),
        "v_low_u_high": float(np.sum(integrand[v_low])),
    }
    gap = abs(total - sum(parts.values()))
    return {"total": total, "parts": parts, "partition_gap": gap}


# -- suite -----------------------------------------------------------------------


def verification_suite(u: DiscreteField, instance: ProblemInstance):
    """Checks a candidate solution must pass; list of per-check records."""
    tol = instance.tolerances.inner
    records = []

    def add(name, tolerance, observed, passed):
        records.append(
            {"name": name, "tolerance": tolerance, "observed": observed, "pass": bool(passed)}
        )

    min_u = float(np.min(u.values))
    add("positivity", 0.0, min_u, min_u > 0)
    if min_u > 0:
        sub = check_sub_super(u, u, instance, "subsolution")
        add("subsolution", tol, sub.max_violation, sub.passed(tol))
        sup = check_sub_super(u, u, instance, "supersolution")
        add("supersolution", tol, sup.max_violation, sup.passed(tol))
        r = weak_residual(
            u, instance.operator, _reaction_rhs(instance, u), instance.beta, instance.mode
        )
        resid = float(np.max(np.abs(r)))
        add("residual", tol, resid, resid <= tol)
    return records
