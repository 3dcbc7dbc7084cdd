import numpy as np
import pytest

import singrobin as sr
from singrobin.errors import InvalidArgument, RefusedInstance

from conftest import robin_quadratic


class TestIterateGamma:
    def test_constant_source_single_sweep(self, constant_instance):
        report = sr.iterate_gamma(constant_instance)
        assert report.converged
        assert report.outer_iterations == 1
        exact = robin_quadratic(constant_instance.mesh.nodes)
        assert np.max(np.abs(report.final.values - exact)) <= 1e-4

    def test_singular_convection_run(self, singular_instance):
        inst = singular_instance
        report = sr.iterate_gamma(inst)
        assert report.converged
        assert report.outer_iterations <= 50
        assert report.history[-1].residual <= 1e-8
        assert np.min(report.final.values - report.u_lower.values) >= -1e-10
        assert report.verdicts.existence.holds
        assert report.verdicts.existence_iteration.holds
        assert report.bounded_flag
        for rec in report.history:
            assert rec.w1p_norm <= report.k_star_bound
            assert rec.energy <= 0.0  # localization level membership

    def test_fixed_point_certificate(self, singular_instance_small):
        inst = singular_instance_small
        report = sr.iterate_gamma(inst)
        assert report.converged
        extra = sr.solve_frozen(report.final, report.u_lower, inst)
        assert sr.c1_delta(extra.u, report.final) <= inst.tolerances.outer

    def test_gate_refuses_large_gradient_growth(self, laplace2, mesh100):
        reac = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=0.1, b=0.01, c=5.0),
            g=sr.SingularSpec("power_singular", lam=0.1, gamma=0.5),
        )
        inst = sr.ProblemInstance(operator=laplace2, reaction=reac, beta=1.0, mesh=mesh100)
        with pytest.raises(RefusedInstance):
            sr.iterate_gamma(inst)

    def test_override_bypasses_gate(self, laplace2, mesh100):
        reac = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=0.1, b=0.01, c=5.0),
            g=sr.SingularSpec("power_singular", lam=0.1, gamma=0.5),
        )
        inst = sr.ProblemInstance(
            operator=laplace2, reaction=reac, beta=1.0, mesh=mesh100, max_outer=3
        )
        report = sr.iterate_gamma(inst, override=True)
        assert report.outer_iterations >= 1  # ran; convergence not promised

    def test_nonconvergence_keeps_history(self, laplace2, mesh100, singular_reaction):
        inst = sr.ProblemInstance(
            operator=laplace2,
            reaction=singular_reaction,
            beta=1.0,
            mesh=mesh100,
            tolerances=sr.Tolerances(inner=1e-8, outer=1e-16, positivity=1e-10),
            max_outer=3,
        )
        report = sr.iterate_gamma(inst)
        assert not report.converged
        assert len(report.history) == 3

    def test_mesh_refinement_consistency(self, laplace2, singular_reaction):
        fields = {}
        for n in (100, 200):
            inst = sr.ProblemInstance(
                operator=laplace2,
                reaction=singular_reaction,
                beta=1.0,
                mesh=sr.build_mesh(0.0, 1.0, n),
            )
            fields[n] = sr.iterate_gamma(inst).final
        coarse = fields[100]
        fine_at_coarse = fields[200].interpolate(coarse.mesh.nodes)
        assert np.max(np.abs(fine_at_coarse - coarse.values)) <= 1.0 / 100

    def test_neumann_mode(self, laplace2, mesh100, constant_reaction):
        inst = sr.ProblemInstance(
            operator=laplace2, reaction=constant_reaction, beta=1.0, mesh=mesh100, mode="neumann"
        )
        report = sr.iterate_gamma(inst)
        assert report.converged
        assert np.max(np.abs(report.final.values - 1.0)) <= 1e-6

    @pytest.mark.parametrize(
        "op",
        [
            sr.OperatorSpec("p_laplacian", 3.0),
            sr.OperatorSpec("p_laplacian", 1.5),
            sr.OperatorSpec("pq_laplacian", 3.0, q=2.0),
            sr.OperatorSpec("p_mean_curvature", 3.0),
        ],
        ids=["cubic", "subquadratic", "two-term", "curvature"],
    )
    def test_non_quadratic_families(self, op):
        mesh = sr.build_mesh(0.0, 1.0, 100)
        reac = sr.ReactionSpec(
            f=sr.ConvectionSpec("affine", a=0.05, b=0.005, c=0.005),
            g=sr.SingularSpec("power_singular", lam=0.05, gamma=0.5),
        )
        inst = sr.ProblemInstance(operator=op, reaction=reac, beta=1.0, mesh=mesh)
        report = sr.iterate_gamma(inst)
        assert report.converged
        assert report.history[-1].residual <= inst.tolerances.inner
        assert np.min(report.final.values - report.u_lower.values) >= -1e-10
        assert np.max(np.abs(report.final.values - report.final.values[::-1])) <= 1e-8


class TestKStar:
    def test_infinite_when_budget_exhausted(self, singular_instance_small):
        inst = singular_instance_small
        prep = sr.prepare(inst)
        u_lower, _ = sr.build_subsolution(inst.operator, inst.reaction, inst.beta, inst.mesh)
        gc_bad = sr.GrowthConstants(
            cM=1, dM=1, c=1, d=1, c3=1, c4=1, c5=1, c7=0, c8=0, c9=0
        )
        assert sr.compute_k_star(inst, gc_bad, prep.c1, prep.c2, u_lower) == float("inf")

    def test_finite_and_above_iterates(self, singular_instance_small):
        inst = singular_instance_small
        prep = sr.prepare(inst)
        u_lower, _ = sr.build_subsolution(inst.operator, inst.reaction, inst.beta, inst.mesh)
        k_star = sr.compute_k_star(inst, prep.growth, prep.c1, prep.c2, u_lower)
        assert np.isfinite(k_star) and k_star > 0
        report = sr.iterate_gamma(inst, prepared=prep)
        assert all(rec.w1p_norm <= k_star for rec in report.history)

    def test_root_satisfies_defining_equation(self, singular_instance_small):
        inst = singular_instance_small
        prep = sr.prepare(inst)
        u_lower, _ = sr.build_subsolution(inst.operator, inst.reaction, inst.beta, inst.mesh)
        gc = prep.growth
        k = sr.compute_k_star(inst, gc, prep.c1, prep.c2, u_lower)
        p = inst.p
        A = prep.c1**p * prep.c2 - gc.c4 - (2 * p - 1) * gc.c5 - gc.d
        # Reconstruct the constant side from the root.
        resid = (A / p) * k**p - (gc.c3 + gc.c) * inst.mesh.length ** (1 / 2) * k
        assert resid > 0  # root balances first-order mass plus offset


class TestMinimalSelection:
    def test_deterministic(self, singular_instance_small):
        inst = singular_instance_small
        w = sr.DiscreteField.constant(inst.mesh, 0.0)
        a = sr.minimal_selection(inst, w, 3, seed=9)
        b = sr.minimal_selection(inst, w, 3, seed=9)
        assert np.array_equal(a.values, b.values)

    def test_single_start_unchanged(self, singular_instance_small):
        inst = singular_instance_small
        w = sr.DiscreteField.constant(inst.mesh, 0.0)
        u_lower, _ = sr.build_subsolution(inst.operator, inst.reaction, inst.beta, inst.mesh)
        direct = sr.solve_frozen(w, u_lower, inst)
        got = sr.minimal_selection(inst, w, 1, seed=0)
        assert np.array_equal(got.values, direct.u.values)

    def test_convex_case_all_starts_coincide(self, singular_instance_small):
        # The uniqueness budget holds for this instance, so every start must
        # land on the same critical point.
        inst = singular_instance_small
        prep = sr.prepare(inst)
        assert prep.verdicts.uniqueness.holds
        w = sr.DiscreteField.constant(inst.mesh, 0.0)
        u_lower, _ = sr.build_subsolution(inst.operator, inst.reaction, inst.beta, inst.mesh)
        got = sr.minimal_selection(inst, w, 4, seed=10)
        direct = sr.solve_frozen(w, u_lower, inst)
        assert np.max(np.abs(got.values - direct.u.values)) <= 1e-6

    def test_start_count_validated(self, singular_instance_small):
        w = sr.DiscreteField.constant(singular_instance_small.mesh, 0.0)
        with pytest.raises(InvalidArgument):
            sr.minimal_selection(singular_instance_small, w, 0)


class TestProblemInstance:
    def test_round_trip(self, singular_instance_small):
        d = singular_instance_small.to_dict()
        back = sr.ProblemInstance.from_dict(d)
        assert back.to_dict() == d

    def test_validation(self, laplace2, mesh100, constant_reaction):
        with pytest.raises(InvalidArgument):
            sr.ProblemInstance(
                operator=laplace2, reaction=constant_reaction, beta=-1.0, mesh=mesh100
            )
        with pytest.raises(InvalidArgument):
            sr.ProblemInstance(
                operator=laplace2,
                reaction=constant_reaction,
                beta=1.0,
                mesh=mesh100,
                mode="periodic",
            )
        with pytest.raises(InvalidArgument):
            sr.Tolerances(inner=0.0)
