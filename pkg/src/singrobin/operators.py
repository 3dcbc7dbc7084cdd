"""Radial diffusion operators and sampled certification of their structure.

The divergence-form operators handled here all have the radial shape
``xi -> a0(|xi|) * xi`` with a scalar profile ``a0``.  Three named families
(p-Laplacian, (p,q)-Laplacian, generalized p-mean-curvature) carry closed-form
profiles, potentials and ellipticity envelopes; a ``tabulated`` family accepts
sampled profiles.  Certification is sample-based: :func:`estimate_c2` finds the
structure constant tying the operator to p-power growth, and
:func:`validate_operator` checks monotonicity, Jacobian growth and ellipticity
by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    HypothesisViolation,
    InvalidArgument,
    NumericFailure,
    PreconditionViolation,
)

__all__ = [
    "OperatorSpec",
    "OperatorConstants",
    "HypothesisReport",
    "flux",
    "potential",
    "jacobian",
    "ellipticity_envelope",
    "envelope_constants",
    "estimate_c2",
    "validate_operator",
    "uniqueness_modulus",
]

FAMILIES = ("p_laplacian", "pq_laplacian", "p_mean_curvature", "tabulated")

# Relative slack absorbing finite-difference noise when comparing the sampled
# Jacobian against its envelope bounds.
_FD_SLACK = 1e-6


@dataclass(frozen=True)
class OperatorSpec:
    """A radial operator ``xi -> a0(|xi|) xi`` with growth exponent ``p``.

    Families
    --------
    p_laplacian
        profile ``a0(t) = t**(p-2)``, any ``p > 1``.
    pq_laplacian
        profile ``a0(t) = t**(p-2) + t**(q-2)``, ``1 < q < p``.
    p_mean_curvature
        profile ``a0(t) = (1 + t**2)**((p-2)/2)``; the ellipticity envelope
        holds for ``p >= 2`` (sampled certification flags smaller p).
    tabulated
        profile sampled at strictly increasing abscissae ``table_t > 0``;
        ``table_omega`` optionally supplies the ellipticity envelope.
        Evaluation clamps to the end samples outside the table range.
    """

    family: str
    p: float
    q: float | None = None
    table_t: tuple[float, ...] | None = None
    table_a0: tuple[float, ...] | None = None
    table_omega: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidArgument(f"unknown operator family {self.family!r}")
        if not (np.isfinite(self.p) and self.p > 1):
            raise InvalidArgument(f"exponent p must satisfy p > 1, got {self.p}")
        if self.family == "pq_laplacian":
            if self.q is None or not (1 < self.q < self.p):
                raise InvalidArgument(
                    f"pq_laplacian needs 1 < q < p, got q={self.q}, p={self.p}"
                )
        if self.family == "tabulated":
            if self.table_t is None or self.table_a0 is None:
                raise InvalidArgument("tabulated operator needs table_t and table_a0")
            t = np.asarray(self.table_t, dtype=float)
            a0 = np.asarray(self.table_a0, dtype=float)
            if t.ndim != 1 or t.size < 2 or a0.shape != t.shape:
                raise InvalidArgument("tabulated samples must be two matching 1-D arrays")
            if not np.all(t > 0) or not np.all(np.diff(t) > 0):
                raise InvalidArgument("table_t must be strictly increasing and positive")
            if not np.all(a0 > 0):
                raise InvalidArgument("table_a0 must be strictly positive")
            # Monotonicity of t * a0(t) is certified by validate_operator and
            # required before solving, but a violating table must still be
            # constructible so the violation can be reported as data.
            object.__setattr__(self, "table_t", tuple(map(float, t)))
            object.__setattr__(self, "table_a0", tuple(map(float, a0)))
            if self.table_omega is not None:
                om = np.asarray(self.table_omega, dtype=float)
                if om.shape != t.shape or not np.all(om > 0):
                    raise InvalidArgument("table_omega must match table_t and be positive")
                object.__setattr__(self, "table_omega", tuple(map(float, om)))

    def to_dict(self):
        d = {"family": self.family, "p": self.p}
        if self.family == "pq_laplacian":
            d["q"] = self.q
        if self.family == "tabulated":
            d["t"] = list(self.table_t)
            d["a0"] = list(self.table_a0)
            if self.table_omega is not None:
                d["omega"] = list(self.table_omega)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            family=d["family"],
            p=float(d["p"]),
            q=float(d["q"]) if "q" in d else None,
            table_t=tuple(d["t"]) if "t" in d else None,
            table_a0=tuple(d["a0"]) if "a0" in d else None,
            table_omega=tuple(d["omega"]) if "omega" in d else None,
        )


@dataclass
class OperatorConstants:
    """Sampled structure constant plus any envelope violations found alongside."""

    c2: float
    envelope_violations: list = field(default_factory=list)


@dataclass
class HypothesisReport:
    """Sampled check of monotonicity, Jacobian growth and ellipticity."""

    n_samples: int
    monotonicity_violations: list
    jacobian_bound_violations: list
    ellipticity_violations: list
    c5: float
    envelope: dict

    @property
    def ok(self):
        return not (
            self.monotonicity_violations
            or self.jacobian_bound_violations
            or self.ellipticity_violations
        )


def _check_finite(xi):
    if not np.all(np.isfinite(xi)):
        raise InvalidArgument("operator argument must be finite")


def flux(spec: OperatorSpec, xi):
    """Evaluate ``a0(|xi|) xi`` with the continuous extension 0 at xi = 0.

    Vectorized over ``xi``; written in terms of ``|xi|**(p-1)`` so profiles
    that blow up at 0 (p < 2) never overflow.
    """
    xi = np.asarray(xi, dtype=float)
    _check_finite(xi)
    t = np.abs(xi)
    s = np.sign(xi)
    p = spec.p
    if spec.family == "p_laplacian":
        return s * t ** (p - 1)
    if spec.family == "pq_laplacian":
        return s * (t ** (p - 1) + t ** (spec.q - 1))
    if spec.family == "p_mean_curvature":
        return (1.0 + t**2) ** ((p - 2) / 2) * xi
    a0 = np.interp(t, spec.table_t, spec.table_a0)
    return a0 * xi


def potential(spec: OperatorSpec, xi):
    """Primitive of the flux along rays: integral of ``s a0(s)`` up to ``|xi|``.

    Closed form for the named families; adaptive quadrature for tabulated
    profiles (raises :class:`NumericFailure` carrying the achieved tolerance
    if the quadrature does not converge).
    """
    xi = np.asarray(xi, dtype=float)
    _check_finite(xi)
    t = np.abs(xi)
    p = spec.p
    if spec.family == "p_laplacian":
        return t**p / p
    if spec.family == "pq_laplacian":
        return t**p / p + t ** spec.q / spec.q
    if spec.family == "p_mean_curvature":
        return ((1.0 + t**2) ** (p / 2) - 1.0) / p
    tt = np.asarray(spec.table_t)
    aa = np.asarray(spec.table_a0)

    def integrand(s):
        return s * np.interp(s, tt, aa)

    out = np.empty_like(t)
    flat = t.ravel()
    res = out.ravel()
    for k, upper in enumerate(flat):
        if upper == 0.0:
            res[k] = 0.0
            continue
        val, err = integrate.quad(integrand, 0.0, upper, limit=200)
        if not np.isfinite(val) or err > 1e-9 * max(1.0, abs(val)):
            raise NumericFailure(
                f"potential quadrature did not converge at |xi|={upper}",
                achieved_tol=err,
            )
        res[k] = val
    return out if xi.ndim else float(out)


def jacobian(spec: OperatorSpec, xi):
    """Derivative of the flux map (scalar in 1-D).

    Closed form for named families, centered difference for tabulated ones.
    Profiles with p < 2 blow up at 0; the argument is clamped to
    ``|xi| >= 1e-10`` here (and only here) to avoid overflow.
    """
    xi = np.asarray(xi, dtype=float)
    _check_finite(xi)
    t = np.maximum(np.abs(xi), 1e-10)
    p = spec.p
    if spec.family == "p_laplacian":
        return (p - 1) * t ** (p - 2)
    if spec.family == "pq_laplacian":
        return (p - 1) * t ** (p - 2) + (spec.q - 1) * t ** (spec.q - 2)
    if spec.family == "p_mean_curvature":
        return (1.0 + t**2) ** ((p - 4) / 2) * (1.0 + (p - 1) * t**2)
    h = 1e-6 * np.maximum(t, 1.0)
    return (flux(spec, xi + h) - flux(spec, xi - h)) / (2 * h)


def ellipticity_envelope(spec: OperatorSpec, t):
    """Family envelope ``omega(t)`` bounding the Jacobian from both sides.

    Chosen so ``omega(t)/t <= Da(t) <= C5 omega(t)/t`` holds with the
    family constant returned by the companion ``c5`` entry of
    :func:`envelope_constants`:

    * p_laplacian: ``(p-1) t**(p-1)``
    * pq_laplacian: ``(q-1) (t**(p-1) + t**(q-1))``
    * p_mean_curvature: ``t (1+t**2)**((p-2)/2)`` (valid for p >= 2)
    * tabulated: user-supplied samples (required).
    """
    t = np.asarray(t, dtype=float)
    p = spec.p
    if spec.family == "p_laplacian":
        return (p - 1) * t ** (p - 1)
    if spec.family == "pq_laplacian":
        return (spec.q - 1) * (t ** (p - 1) + t ** (spec.q - 1))
    if spec.family == "p_mean_curvature":
        return t * (1.0 + t**2) ** ((p - 2) / 2)
    if spec.table_omega is None:
        raise PreconditionViolation(
            "tabulated operator needs table_omega for ellipticity checks"
        )
    return np.interp(t, spec.table_t, spec.table_omega)


def _envelope_c5(spec: OperatorSpec):
    if spec.family == "p_laplacian":
        return 1.0
    if spec.family == "pq_laplacian":
        return (spec.p - 1) / (spec.q - 1)
    if spec.family == "p_mean_curvature":
        return max(1.0, spec.p - 1)
    # No closed form for tables; calibrate from the sampled Jacobian.
    t = np.linspace(spec.table_t[0], spec.table_t[-1], 2001)[1:]
    ratio = jacobian(spec, t) * t / ellipticity_envelope(spec, t)
    return float(np.max(ratio)) * (1 + _FD_SLACK)


def envelope_constants(spec: OperatorSpec, t_range=(1e-3, 1e3), n=4001):
    """Sampled envelope constants for the ellipticity profile.

    Returns a dict with the log-derivative range of omega (``c1_omega``,
    ``c2_omega``), the power-growth floor and cap (``c3``, ``c4``), and the
    Jacobian cap factor ``c5``.  These are reported, not asserted: the named
    families fix omega only through the inequalities it must satisfy.
    """
    t = np.geomspace(*t_range, n)
    om = ellipticity_envelope(spec, t)
    dlog = np.gradient(np.log(om), np.log(t))
    return {
        "c1_omega": float(np.min(dlog)),
        "c2_omega": float(np.max(dlog)),
        "c3": float(np.min(om / t ** (spec.p - 1))),
        "c4": float(np.max(om / (1.0 + t ** (spec.p - 1)))),
        "c5": _envelope_c5(spec),
    }


def estimate_c2(spec: OperatorSpec, sample_radius=1e6, n_samples=10_000):
    """Largest sampled constant in (0,1) tying the operator to p-power growth.

    Scans ``|xi|`` log-spaced in ``(0, sample_radius]`` and takes the infimum
    of the five ratio functions coming from the two-sided bounds on the flux,
    the pairing ``<a(xi), xi>`` and the potential.  A relative resolution
    margin of 1e-3 is subtracted so the returned value is conservative for
    arguments between samples.

    Raises
    ------
    HypothesisViolation
        if no positive constant survives the scan.
    """
    if n_samples < 1000:
        raise InvalidArgument("estimate_c2 needs n_samples >= 1000")
    if not (sample_radius > 0 and np.isfinite(sample_radius)):
        raise InvalidArgument("sample_radius must be positive and finite")
    t = np.geomspace(sample_radius * 1e-12, sample_radius, n_samples)
    p = spec.p
    a_t = flux(spec, t)  # = a0(t) t > 0 on t > 0
    G_t = potential(spec, t)
    tp = t**p
    ratios = np.minimum.reduce(
        [
            a_t * t / tp,  # pairing >= c2 |xi|^p
            G_t / tp,  # potential >= c2 |xi|^p
            (1.0 + t ** (p - 1)) / a_t,  # |a(xi)| <= (1/c2)(1+|xi|^(p-1))
            (1.0 + tp) / (a_t * t),  # pairing <= (1/c2)(1+|xi|^p)
            (1.0 + tp) / G_t,  # potential <= (1/c2)(1+|xi|^p)
        ]
    )
    raw = float(np.min(ratios))
    c2 = min(raw * (1.0 - 1e-3), 1.0 - 1e-9)
    if not (c2 > 0 and np.isfinite(c2)):
        raise HypothesisViolation(
            f"no admissible structure constant for {spec.family} (raw infimum {raw})"
        )
    # Piggy-back the differential checks on a thinned grid so the returned
    # record is self-contained.
    sub = t[:: max(1, n_samples // 512)]
    violations = _differential_violations(spec, sub)
    return OperatorConstants(c2=c2, envelope_violations=violations)


def _differential_violations(spec, t):
    """Jacobian-bound and ellipticity failures at the given radii (FD-based)."""
    if spec.family == "tabulated" and spec.table_omega is None:
        return []
    om_over_t = ellipticity_envelope(spec, t) / t
    c5 = _envelope_c5(spec)
    h = 1e-7 * np.maximum(t, 1e-3)
    da = (flux(spec, t + h) - flux(spec, t - h)) / (2 * h)
    bad_hi = np.abs(da) > c5 * om_over_t * (1 + _FD_SLACK) + 1e-12
    bad_lo = da < om_over_t * (1 - _FD_SLACK) - 1e-12
    out = [("jacobian_bound", float(x)) for x in t[bad_hi]]
    out += [("ellipticity", float(x)) for x in t[bad_lo]]
    return out


def validate_operator(spec: OperatorSpec, n_samples=10_000, t_range=(1e-2, 1e2), seed=0):
    """Sampled validation of strict monotonicity and the Jacobian envelopes.

    Monotonicity is checked on random signed pairs, the Jacobian bounds by
    centered differences at radii log-spaced over ``t_range``.  Violations are
    reported as data, not raised.
    """
    rng = np.random.default_rng(seed)
    t = np.geomspace(t_range[0], t_range[1], n_samples)
    # Consecutive grid pairs (catch local dips) plus random signed partners.
    a_grid = flux(spec, t)
    grid_bad = np.diff(a_grid) <= 0
    mono = [
        ("monotonicity", float(a), float(b))
        for a, b in zip(t[:-1][grid_bad], t[1:][grid_bad])
    ]
    xi = t * rng.choice([-1.0, 1.0], size=n_samples)
    eta = xi * rng.uniform(0.2, 0.8, size=n_samples) + rng.normal(
        scale=0.1 * t, size=n_samples
    )
    keep = xi != eta
    pair = (flux(spec, xi[keep]) - flux(spec, eta[keep])) * (xi[keep] - eta[keep])
    mono += [
        ("monotonicity", float(a), float(b))
        for a, b in zip(xi[keep][pair <= 0], eta[keep][pair <= 0])
    ]
    if spec.family == "tabulated" and spec.table_omega is None:
        raise PreconditionViolation(
            "validate_operator needs an ellipticity envelope; supply table_omega"
        )
    diff = _differential_violations(spec, t)
    return HypothesisReport(
        n_samples=n_samples,
        monotonicity_violations=mono,
        jacobian_bound_violations=[v for v in diff if v[0] == "jacobian_bound"],
        ellipticity_violations=[v for v in diff if v[0] == "ellipticity"],
        c5=_envelope_c5(spec),
        envelope=envelope_constants(spec),
    )


def uniqueness_modulus(spec: OperatorSpec):
    """Strong-monotonicity modulus for the p = 2 uniqueness analysis.

    Exact value 1 for the quadratic members (p-Laplacian and mean-curvature
    at p = 2, (2,q)-Laplacian whose q-part only adds a monotone term);
    ``None`` when p != 2 or the operator is tabulated.
    """
    if not math.isclose(spec.p, 2.0):
        return None
    if spec.family in ("p_laplacian", "p_mean_curvature"):
        return 1.0
    if spec.family == "pq_laplacian":
        return 1.0
    return None
