import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import singrobin as sr
from singrobin.errors import DomainViolation, InvalidArgument
from singrobin.reactions import (
    truncated_convection,
    truncated_convection_primitive,
    truncated_singular,
    truncated_singular_primitive,
)


class TestEval:
    def test_affine_direct(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=1.0, b=0.1, c=0.1),
            g=sr.SingularSpec("zero"),
        )
        f_val, _ = sr.eval_reactions(spec, 2.0, 0.5, 2.0, 3.0)
        assert f_val == pytest.approx(1.0 + 0.2 + 0.3)

    def test_singular_small_state(self):
        spec = sr.SingularSpec("power_singular", lam=1.0, gamma=0.5)
        assert sr.reactions.singular_value(spec, 0.25) == pytest.approx(2.0)

    def test_singular_large_state_obeys_tail_bound(self):
        spec = sr.SingularSpec("power_singular", lam=1.0, gamma=0.5)
        val = sr.reactions.singular_value(spec, 4.0)
        assert val == pytest.approx(0.5)
        assert val <= 1.0  # tail envelope with c = lam, d = 0

    def test_singular_rejects_nonpositive(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("zero"),
            g=sr.SingularSpec("power_singular", lam=1.0, gamma=0.5),
        )
        with pytest.raises(DomainViolation):
            sr.eval_reactions(spec, 2.0, 0.5, -1.0, 0.0)

    def test_nonnegative_everywhere(self):
        rng = np.random.default_rng(0)
        s = rng.uniform(-5, 5, 200)
        grad = rng.uniform(-5, 5, 200)
        f = sr.ConvectionSpec("bounded_gradient", a=0.3, b=0.2, c=0.4, m_sat=2.0)
        assert np.all(sr.reactions.convection_value(f, 2.5, s, grad) >= 0)


class TestTruncation:
    def setup_method(self):
        self.g = sr.SingularSpec("power_singular", lam=1.0, gamma=0.5)
        self.f = sr.ConvectionSpec("affine", a=1.0, b=0.1, c=0.1)

    def test_frozen_below_splice(self):
        # Deep below the splice the singular term is pinned at the splice value.
        assert truncated_singular(self.g, -3.0, 0.25) == pytest.approx(2.0)

    def test_continuous_at_splice(self):
        low = 0.25
        assert truncated_singular(self.g, low, low) == pytest.approx(
            sr.reactions.singular_value(self.g, low)
        )
        eps = 1e-12
        below = truncated_singular(self.g, low - eps, low)
        above = truncated_singular(self.g, low + eps, low)
        assert below == pytest.approx(above, abs=1e-9)

    def test_primitives_vanish_at_zero(self):
        for s_low in (0.1, 0.5, 0.9):
            assert truncated_singular_primitive(self.g, 0.0, s_low) == 0.0
            assert truncated_convection_primitive(self.f, 2.0, 0.0, s_low, 1.3) == 0.0

    def test_primitive_derivative_matches_value(self):
        # Centered differences away from the splice point.
        rng = np.random.default_rng(1)
        s_low = 0.4
        s = np.concatenate([rng.uniform(-2, 0.3, 40), rng.uniform(0.5, 3, 40)])
        h = 1e-6
        for val_fn, prim_fn in (
            (
                lambda x: truncated_singular(self.g, x, s_low),
                lambda x: truncated_singular_primitive(self.g, x, s_low),
            ),
            (
                lambda x: truncated_convection(self.f, 2.0, x, s_low, 0.7),
                lambda x: truncated_convection_primitive(self.f, 2.0, x, s_low, 0.7),
            ),
        ):
            fd = (prim_fn(s + h) - prim_fn(s - h)) / (2 * h)
            assert np.allclose(fd, val_fn(s), rtol=1e-6, atol=1e-9)

    def test_monotone_in_splice_level(self):
        # For levels in (0,1] and states below both, lower splice => larger value.
        s = -0.5
        low1, low2 = 0.2, 0.6
        assert truncated_singular(self.g, s, low1) >= truncated_singular(self.g, s, low2)

    def test_bounded_on_compacts(self):
        s = np.linspace(-10, 10, 2001)
        vals = truncated_singular(self.g, s, 0.05)
        assert np.all(np.isfinite(vals))
        assert np.max(vals) == pytest.approx(sr.reactions.singular_value(self.g, 0.05))

    def test_field_level_wrapper(self, mesh100):
        u_lower = sr.DiscreteField(mesh100, np.full(mesh100.n_nodes, 0.25))
        w = sr.DiscreteField(mesh100, mesh100.nodes.copy())  # gradient 1
        spec = sr.ReactionSpec(f=self.f, g=self.g)
        out = sr.truncated_reactions(spec, 2.0, u_lower, w, 0.5, -3.0)
        assert out.g == pytest.approx(2.0)
        assert out.f == pytest.approx(1.0 + 0.1 * 0.25 + 0.1 * 1.0)
        assert sr.truncated_reactions(spec, 2.0, u_lower, w, 0.5, 0.0).G == 0.0

    @settings(deadline=None, max_examples=150)
    @given(
        s=st.floats(-5, 5),
        low=st.floats(0.05, 1.0),
        lam=st.floats(0.1, 3.0),
        gam=st.floats(0.05, 0.95),
    )
    def test_splice_continuity_property(self, s, low, lam, gam):
        g = sr.SingularSpec("power_singular", lam=lam, gamma=gam)
        eps = 1e-9 * max(1.0, abs(low))
        below = truncated_singular(g, low - eps, low)
        above = truncated_singular(g, low + eps, low)
        assert abs(float(below) - float(above)) <= 1e-6 * float(above)


class TestGrowthConstants:
    def test_affine_cap_substitution(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=1.0, b=0.1, c=0.1),
            g=sr.SingularSpec("zero"),
        )
        gc = sr.hypothesis_constants(spec, 2.0, M=4.0)
        assert gc.cM == pytest.approx(1.4)
        assert gc.dM == pytest.approx(0.1)
        assert (gc.c3, gc.c4, gc.c5) == (1.0, 0.1, 0.1)

    def test_singular_tail(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("zero"),
            g=sr.SingularSpec("power_singular", lam=2.0, gamma=0.5),
        )
        gc = sr.hypothesis_constants(spec, 2.0, M=1.0)
        assert gc.c == pytest.approx(2.0)
        assert gc.d == 0.0

    def test_zero_family_all_zero(self):
        spec = sr.ReactionSpec(f=sr.ConvectionSpec("zero"), g=sr.SingularSpec("zero"))
        gc = sr.hypothesis_constants(spec, 3.0, M=2.0)
        assert (gc.cM, gc.dM, gc.c3, gc.c4, gc.c5, gc.c7, gc.c8) == (0,) * 7

    def test_bounded_gradient_moves_cap_into_constant(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("bounded_gradient", a=0.5, b=0.1, c=0.2, m_sat=3.0),
            g=sr.SingularSpec("zero"),
        )
        gc = sr.hypothesis_constants(spec, 2.0, M=10.0)
        assert gc.c5 == 0.0
        assert gc.c3 == pytest.approx(0.5 + 0.2 * 3.0)
        assert gc.cM == pytest.approx(0.5 + 0.2 * 3.0)

    def test_envelope_soundness_sampled(self):
        # f <= cM + dM |s|^(p-1) over 10^4 samples with |grad| <= M.
        rng = np.random.default_rng(5)
        p, M = 2.0, 4.0
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=1.0, b=0.1, c=0.1),
            g=sr.SingularSpec("constant", c0=0.3),
        )
        gc = sr.hypothesis_constants(spec, p, M)
        s = rng.uniform(-20, 20, 10_000)
        grad = rng.uniform(-M, M, 10_000)
        f_val = sr.reactions.convection_value(spec.f, p, s, grad)
        assert np.all(f_val <= gc.cM + gc.dM * np.abs(s) ** (p - 1) + 1e-12)

    def test_rejects_nonpositive_cap(self):
        spec = sr.ReactionSpec(f=sr.ConvectionSpec("zero"), g=sr.SingularSpec("zero"))
        with pytest.raises(InvalidArgument):
            sr.hypothesis_constants(spec, 2.0, M=0.0)


class TestSmallDataConditions:
    def _gc(self, **kw):
        base = dict(cM=0, dM=0, c=0, d=0, c3=0, c4=0, c5=0, c7=0, c8=0, c9=0)
        base.update(kw)
        return sr.GrowthConstants(**base)

    def test_existence_arithmetic(self):
        gc = self._gc(c4=0.01, c5=0.01)
        v = sr.check_small_data_conditions(gc, 0.5, 0.5, 1.0, 2.0)
        assert v.existence.lhs == pytest.approx(0.04)
        assert v.existence.rhs == pytest.approx(0.125)
        assert v.existence.holds

    def test_existence_iteration_arithmetic(self):
        gc = self._gc(c4=0.01, c5=0.01)
        v = sr.check_small_data_conditions(gc, 0.5, 0.5, 1.0, 2.0)
        assert v.existence_iteration.lhs == pytest.approx(0.01)
        assert v.existence_iteration.rhs == pytest.approx(0.0625)
        assert v.existence_iteration.holds

    def test_uniqueness_failure_case(self):
        gc = self._gc(c7=0.2, c8=0.2, c9=0.2)
        v = sr.check_small_data_conditions(gc, 0.5, 0.5, 1.0, 2.0)
        assert v.uniqueness.lhs == pytest.approx(0.5)
        assert v.uniqueness.rhs == pytest.approx(0.25)
        assert not v.uniqueness.holds
        assert v.uniqueness_applicable

    def test_uniqueness_flagged_for_other_exponents(self):
        gc = self._gc()
        v = sr.check_small_data_conditions(gc, 0.5, 0.5, None, 3.0)
        assert not v.uniqueness_applicable
        assert not v.uniqueness.holds

    def test_holds_iff_lhs_below_rhs(self):
        gc = self._gc(c4=0.2)
        v = sr.check_small_data_conditions(gc, 0.5, 0.5, 1.0, 2.0)
        for check in (v.coercivity, v.iteration, v.existence, v.existence_iteration):
            assert check.holds == (check.lhs < check.rhs)
            assert check.margin == pytest.approx(check.rhs - check.lhs)


class TestSpecValidation:
    def test_gamma_range(self):
        with pytest.raises(InvalidArgument):
            sr.SingularSpec("power_singular", lam=1.0, gamma=1.5)

    def test_negative_coefficients_rejected(self):
        with pytest.raises(InvalidArgument):
            sr.ConvectionSpec("affine", a=-1.0)

    def test_json_round_trip(self):
        spec = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=1.0, b=0.1, c=0.1),
            g=sr.SingularSpec("power_singular", lam=1.0, gamma=0.5),
        )
        d = spec.to_dict()
        assert d["f"] == {"family": "affine", "a": 1.0, "b": 0.1, "c": 0.1}
        assert d["g"] == {"family": "power_singular", "lambda": 1.0, "gamma": 0.5}
        back = sr.ReactionSpec.from_dict(d)
        assert back.f == spec.f and back.g == spec.g
