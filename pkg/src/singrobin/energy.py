"""Truncated-energy assembly and the frozen-gradient solves built on it.

One solve fixes the gradient source ``w`` and minimizes the truncated energy

    E(u) = int Phi(u') + boundary term - int Fhat(., u) - int Ghat(., u)

over the discrete space.  The principal term carries no 1/p factor: with the
potential's derivative equal to the flux map, this normalization makes the
assembled energy gradient coincide exactly with the weak-form residual, which
is what the stopping test and all cross-checks rely on.  The boundary term is
``(beta/p) * (|u(x_l)|^p + |u(x_r)|^p)`` in Robin mode and the volume integral
``(1/p) int |u|^p`` in Neumann mode.

Minimization is preconditioned descent with Armijo backtracking.  The metric
is the slope-weighted stiffness plus boundary (or mass) Jacobian with the
weights floored away from zero: the true Hessian degenerates where u'
vanishes, so raw Newton is unsafe, but the clamped metric keeps the direction
well defined everywhere.  At p = 2 all weights are 1 and the metric is the
plain quadratic stiffness-plus-boundary operator, factorized once.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import operators, reactions
from .errors import (
    ConstructionFailure,
    DegenerateSubsolution,
    InvalidArgument,
    PreconditionViolation,
    StagnationError,
    TruncationConsistencyError,
)
from .fem import DiscreteField, _signed_pow, weak_residual

__all__ = [
    "EnergyContext",
    "MinimizeOutcome",
    "energy_and_gradient",
    "minimize_energy",
    "build_subsolution",
    "solve_frozen",
    "frozen_reaction_solve",
    "coercivity_bounds",
]

_ARMIJO = 1e-4
_MAX_BACKTRACKS = 60
_MAX_LS_FAILURES = 20


_W_FLOOR = 1e-8


def _weighted_preconditioner(mesh, beta, mode, p, operator, values):
    """Descent metric: slope-weighted stiffness plus boundary/mass Jacobian.

    The element weights are the flux Jacobian at the current slopes, floored
    away from zero so the factorization stays definite where the operator
    degenerates.  For p = 2 every weight is 1 and this is precisely the
    quadratic stiffness-plus-boundary operator.
    """
    h = mesh.h
    n = mesh.n_nodes
    if p == 2.0:
        w = np.ones(mesh.n_elements)
    else:
        slope = np.diff(values) / h
        w = np.maximum(operators.jacobian(operator, slope), _W_FLOOR)
    ke = w / h
    main = np.zeros(n)
    main[:-1] += ke
    main[1:] += ke
    off = -ke
    if mode == "robin":
        if p == 2.0:
            bw = np.full(2, beta)
        else:
            bw = np.clip(
                beta * (p - 1.0) * np.abs(values[[0, -1]]) ** (p - 2.0), _W_FLOOR, 1e12
            )
        main[0] += bw[0]
        main[-1] += bw[-1]
        mat = sp.diags([off, main, off], [-1, 0, 1], format="csc")
    else:
        if p == 2.0:
            mw = np.ones(mesh.n_elements)
        else:
            mid = 0.5 * (values[:-1] + values[1:])
            mw = np.clip((p - 1.0) * np.abs(mid) ** (p - 2), _W_FLOOR, 1e12)
        m_main = np.zeros(n)
        m_main[:-1] += mw * h / 3.0
        m_main[1:] += mw * h / 3.0
        mat = sp.diags(
            [off + mw * h / 6.0, main + m_main, off + mw * h / 6.0], [-1, 0, 1], format="csc"
        )
    return spla.splu(mat)


@dataclass(eq=False)
class _Assembly:
    """Mesh-bound energy assembly for one right-hand-side model.

    ``rhs_at`` and ``prim_at`` map quadrature-point states (n_elements, 5)
    to reaction values and primitives at the same points.
    """

    mesh: object
    operator: object
    beta: float
    mode: str
    rhs_at: object
    prim_at: object

    def __post_init__(self):
        self.p = self.operator.p
        self._static_lu = None
        if self.p == 2.0:
            # Weight-independent metric: factorize once.
            self._static_lu = _weighted_preconditioner(
                self.mesh, self.beta, self.mode, 2.0, self.operator, np.zeros(self.mesh.n_nodes)
            )

    def preconditioner_at(self, values):
        if self._static_lu is not None:
            return self._static_lu
        return _weighted_preconditioner(
            self.mesh, self.beta, self.mode, self.p, self.operator, values
        )

    def state_at_quad(self, values):
        m = self.mesh
        return values[:-1, None] * m.phi_left + values[1:, None] * m.phi_right

    def energy(self, values):
        m = self.mesh
        slope = np.diff(values) / m.h
        E = float(np.sum(operators.potential(self.operator, slope) * m.h))
        s_q = self.state_at_quad(values)
        if self.mode == "robin":
            E += self.beta / self.p * (
                np.abs(values[0]) ** self.p + np.abs(values[-1]) ** self.p
            )
        else:
            E += float(np.sum(m.quad_w * np.abs(s_q) ** self.p)) / self.p
        E -= float(np.sum(m.quad_w * self.prim_at(s_q)))
        return E

    def energy_gradient(self, values):
        m = self.mesh
        slope = np.diff(values) / m.h
        E = float(np.sum(operators.potential(self.operator, slope) * m.h))
        a_slope = operators.flux(self.operator, slope)
        g = np.zeros_like(values)
        g[:-1] -= a_slope
        g[1:] += a_slope
        s_q = self.state_at_quad(values)
        if self.mode == "robin":
            E += self.beta / self.p * (
                np.abs(values[0]) ** self.p + np.abs(values[-1]) ** self.p
            )
            g[0] += self.beta * _signed_pow(values[0], self.p - 1)
            g[-1] += self.beta * _signed_pow(values[-1], self.p - 1)
        else:
            E += float(np.sum(m.quad_w * np.abs(s_q) ** self.p)) / self.p
            mq = m.quad_w * _signed_pow(s_q, self.p - 1)
            g[:-1] += np.sum(mq * m.phi_left, axis=1)
            g[1:] += np.sum(mq * m.phi_right, axis=1)
        E -= float(np.sum(m.quad_w * self.prim_at(s_q)))
        load = m.quad_w * self.rhs_at(s_q)
        g[:-1] -= np.sum(load * m.phi_left, axis=1)
        g[1:] -= np.sum(load * m.phi_right, axis=1)
        return E, g


@dataclass(eq=False)
class EnergyContext:
    """Everything one frozen-gradient solve needs.

    The reaction is truncated below the strictly positive ``u_lower``; the
    convection gradient argument is frozen at the gradient of ``w``.  Both
    fields must live on the same mesh.
    """

    operator: object
    reaction: object
    p: float
    beta: float
    mode: str
    mesh: object
    u_lower: DiscreteField
    w: DiscreteField
    s_level: float = 1.0

    def __post_init__(self):
        if self.u_lower.mesh is not self.mesh or self.w.mesh is not self.mesh:
            raise InvalidArgument("u_lower and w must live on the context mesh")
        if np.any(self.u_lower.values <= 0):
            raise InvalidArgument("u_lower must be strictly positive at all nodes")
        self._ulow_q = self.u_lower.at_quad()
        gradw = self.w.element_gradients()
        self._gradw_q = np.broadcast_to(gradw[:, None], self._ulow_q.shape)
        self.assembly = _Assembly(
            mesh=self.mesh,
            operator=self.operator,
            beta=self.beta,
            mode=self.mode,
            rhs_at=self._reaction_at,
            prim_at=self._primitive_at,
        )

    @classmethod
    def from_instance(cls, instance, u_lower, w):
        return cls(
            operator=instance.operator,
            reaction=instance.reaction,
            p=instance.operator.p,
            beta=instance.beta,
            mode=instance.mode,
            mesh=instance.mesh,
            u_lower=u_lower,
            w=w,
            s_level=instance.s_level,
        )

    def _reaction_at(self, s_q):
        r = self.reaction
        return reactions.truncated_convection(
            r.f, self.p, s_q, self._ulow_q, self._gradw_q
        ) + reactions.truncated_singular(r.g, s_q, self._ulow_q)

    def _primitive_at(self, s_q):
        r = self.reaction
        return reactions.truncated_convection_primitive(
            r.f, self.p, s_q, self._ulow_q, self._gradw_q
        ) + reactions.truncated_singular_primitive(r.g, s_q, self._ulow_q)

    # Pointwise callables for cross-checks against the independent residual path.

    def rhs_truncated(self, x, s):
        r = self.reaction
        s_low = self.u_lower.interpolate(x)
        grad_w = self.w.gradient_at(x)
        return reactions.truncated_convection(
            r.f, self.p, s, s_low, grad_w
        ) + reactions.truncated_singular(r.g, s, s_low)

    def rhs_untruncated(self, x, s):
        """True reaction at state s with the gradient still frozen at w."""
        r = self.reaction
        grad_w = self.w.gradient_at(x)
        return reactions.convection_value(r.f, self.p, s, grad_w) + reactions.singular_value(
            r.g, s
        )


@dataclass
class MinimizeOutcome:
    u: DiscreteField
    energy: float
    residual_sup: float
    iterations: int
    line_search_failures: int
    converged: bool
    untruncated_residual: Optional[float] = None


def energy_and_gradient(ctx: EnergyContext, u):
    """Energy value and assembled gradient at ``u`` (field or nodal array)."""
    values = u.values if isinstance(u, DiscreteField) else np.asarray(u, dtype=float)
    return ctx.assembly.energy_gradient(values)


def _minimize_assembly(assembly, start_values, tol, max_iter):
    u = np.array(start_values, dtype=float)
    E, g = assembly.energy_gradient(u)
    ls_failures = 0
    consecutive = 0
    it = 0
    while it < max_iter:
        res = float(np.max(np.abs(g)))
        if res <= tol:
            return u, E, res, it, ls_failures, True
        d = -assembly.preconditioner_at(u).solve(g)
        gd = float(g @ d)
        t = 1.0
        accepted = False
        for _ in range(_MAX_BACKTRACKS):
            if assembly.energy(u + t * d) <= E + _ARMIJO * t * gd:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            ls_failures += 1
            consecutive += 1
            if consecutive >= _MAX_LS_FAILURES:
                raise StagnationError(
                    f"line search failed {consecutive} times in a row at residual {res:.3e}"
                )
            it += 1
            continue
        consecutive = 0
        u = u + t * d
        E, g = assembly.energy_gradient(u)
        it += 1
    return u, E, float(np.max(np.abs(g))), it, ls_failures, False


def minimize_energy(ctx: EnergyContext, start, tol_inner, max_iter=400):
    """Preconditioned Armijo descent to a discrete critical point.

    Stops when the residual sup-norm falls below ``tol_inner``; energy is
    nonincreasing across accepted steps.  Returns a non-converged outcome
    with the best iterate when the iteration budget runs out.
    """
    start_values = start.values if isinstance(start, DiscreteField) else start
    u, E, res, it, fails, ok = _minimize_assembly(
        ctx.assembly, start_values, tol_inner, max_iter
    )
    return MinimizeOutcome(
        u=DiscreteField(ctx.mesh, u),
        energy=E,
        residual_sup=res,
        iterations=it,
        line_search_failures=fails,
        converged=ok,
    )


# -- subsolution construction --------------------------------------------------


def _capped_singular(gspec, delta):
    """Value/primitive closures of the delta-capped singular term.

    The cap makes the term globally bounded; below the cap crossing (and for
    nonpositive states) the value is the constant delta, so the primitive is
    linear there and vanishes at 0.
    """
    if gspec.family == "constant":
        lvl = min(gspec.c0, delta)
        return (lambda s: np.full(np.shape(s), lvl), lambda s: lvl * np.asarray(s))
    lam, gam = gspec.lam, gspec.gamma
    s_cap = (lam / delta) ** (1.0 / gam)

    def value(s):
        s = np.asarray(s, dtype=float)
        return np.where(s <= s_cap, delta, lam * np.maximum(s, s_cap) ** (-gam))

    def primitive(s):
        s = np.asarray(s, dtype=float)
        s_hi = np.maximum(s, s_cap)
        tail = lam * (s_hi ** (1 - gam) - s_cap ** (1 - gam)) / (1 - gam)
        return np.where(s <= s_cap, delta * s, delta * s_cap + tail)

    return value, primitive


def build_subsolution(
    op,
    reaction,
    beta,
    mesh,
    delta0=1.0,
    *,
    mode="robin",
    tol=1e-10,
    max_iter=400,
    positivity_margin=1e-8,
):
    """Strictly positive subsolution with sup <= 1, independent of the
    convection gradient.

    Solves the problem with the singular term capped at level delta, halving
    delta from ``delta0`` until the sup-norm constraint holds.  The returned
    field is verified against nonnegative hat probes: it satisfies the
    subsolution inequality for the full reaction (with any gradient source,
    since the convection term is nonnegative) and the stronger form with the
    singular term alone.

    Returns (field, delta_used).
    """
    g = reaction.g
    if g.is_zero:
        raise PreconditionViolation(
            "subsolution construction needs a nontrivial zero-order term"
        )
    if delta0 <= 0:
        raise InvalidArgument("delta0 must be positive")
    delta = float(delta0)
    while True:
        value, primitive = _capped_singular(g, delta)
        assembly = _Assembly(
            mesh=mesh,
            operator=op,
            beta=beta,
            mode=mode,
            rhs_at=value,
            prim_at=primitive,
        )
        start = np.full(mesh.n_nodes, 0.1)
        u, E, res, it, fails, ok = _minimize_assembly(assembly, start, tol, max_iter)
        if not ok:
            raise ConstructionFailure(
                f"capped solve stalled at residual {res:.3e} for delta={delta}"
            )
        # Solve-tolerance slack: a field sitting exactly at the sup bound may
        # overshoot it by the solver residual.
        if float(np.max(u)) <= 1.0 + 64.0 * tol:
            break
        delta *= 0.5
        if delta < 1e-14:
            raise ConstructionFailure("cap level underflowed before sup <= 1 was reached")
    if float(np.min(u)) < positivity_margin:
        raise DegenerateSubsolution(
            f"subsolution minimum {np.min(u):.3e} below margin {positivity_margin:.1e}"
        )
    field = DiscreteField(mesh, u)
    zero_w = DiscreteField(mesh, np.zeros(mesh.n_nodes))
    p = op.p

    def rhs_full(x, s):
        return reactions.convection_value(
            reaction.f, p, s, zero_w.gradient_at(x)
        ) + reactions.singular_value(reaction.g, s)

    def rhs_g_only(x, s):
        return reactions.singular_value(reaction.g, s)

    check_tol = 10.0 * tol + 1e-12
    for rhs in (rhs_full, rhs_g_only):
        viol = float(np.max(weak_residual(field, op, rhs, beta, mode)))
        if viol > check_tol:
            raise ConstructionFailure(
                f"constructed field violates the subsolution inequality by {viol:.3e}"
            )
    return field, delta


# -- frozen-gradient solves -----------------------------------------------------


def solve_frozen(w, u_lower, instance, *, start=None, max_iter=400):
    """Minimize the truncated energy with gradient source frozen at ``w``.

    Starts at the subsolution (biasing the descent toward the minimal
    solution) unless ``start`` overrides it.  On success the iterate sits
    above the subsolution up to the positivity tolerance, its energy is
    nonpositive, and the residual with the *untruncated* reaction also meets
    the inner tolerance, i.e. the truncation is inactive at the solution.
    """
    ctx = EnergyContext.from_instance(instance, u_lower, w)
    tol_inner = instance.tolerances.inner
    out = minimize_energy(ctx, start if start is not None else u_lower, 0.5 * tol_inner, max_iter)
    if out.converged:
        drop = float(np.min(out.u.values - u_lower.values))
        if drop < -instance.tolerances.positivity:
            raise TruncationConsistencyError(
                f"solution dips {-drop:.3e} below the subsolution "
                f"(tolerance {instance.tolerances.positivity:.1e})"
            )
        out.untruncated_residual = float(
            np.max(
                np.abs(
                    weak_residual(
                        out.u, instance.operator, ctx.rhs_untruncated, instance.beta, instance.mode
                    )
                )
            )
        )
    return out


def frozen_reaction_solve(instance, u_tilde, w, u_lower, *, max_iter=400):
    """Solve the auxiliary problem with the whole reaction frozen at ``u_tilde``.

    The right-hand side no longer depends on the unknown, so the energy is
    strictly convex and the critical point unique.
    """
    ctx = EnergyContext.from_instance(instance, u_lower, w)
    rhs_q = ctx._reaction_at(u_tilde.at_quad())

    assembly = _Assembly(
        mesh=instance.mesh,
        operator=instance.operator,
        beta=instance.beta,
        mode=instance.mode,
        rhs_at=lambda s: rhs_q,
        prim_at=lambda s: rhs_q * s,
    )
    u, E, res, it, fails, ok = _minimize_assembly(
        assembly, u_lower.values, 0.5 * instance.tolerances.inner, max_iter
    )
    return MinimizeOutcome(
        u=DiscreteField(instance.mesh, u),
        energy=E,
        residual_sup=res,
        iterations=it,
        line_search_failures=fails,
        converged=ok,
    )


def coercivity_bounds(ctx: EnergyContext, gc, c1, c2):
    """Constants (alpha1, alpha2) of the quantitative coercivity estimate
    ``E(u) >= (alpha1/p) ||u||^p - alpha2 (1 + ||u||)`` in the full norm.

    ``gc`` must be the growth constants evaluated at a gradient cap covering
    sup |w| + sup |w'|.  alpha1 is the structure budget left after the
    p-power reaction growth; alpha2 collects the reaction mass at the
    subsolution.
    """
    m = ctx.mesh
    p = ctx.p
    ulow_q = ctx._ulow_q
    f_q = reactions.convection_value(ctx.reaction.f, p, ulow_q, ctx._gradw_q)
    g_q = reactions.singular_value(ctx.reaction.g, ulow_q)
    K = float(np.sum(m.quad_w * ((f_q + g_q) * ulow_q + g_q)))
    p_conj = p / (p - 1)
    alpha1 = c1**p * c2 - gc.dM - gc.d
    alpha2 = max((gc.cM + gc.c) * m.length ** (1.0 / p_conj), K)
    return alpha1, alpha2
