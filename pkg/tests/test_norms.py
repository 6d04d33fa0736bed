import numpy as np
import pytest

from kdvgauge.errors import AdmissibilityError, ValidationError
from kdvgauge.evolve import StepperConfig, Trajectory, evolve, free_trajectory
from kdvgauge.gauge import EquationSpec
from kdvgauge.norms import (
    COMPOSITES,
    INF,
    MixedNormSpec,
    check_admissible,
    check_linear_estimates,
    check_product_estimate,
    check_unbound_lemma,
    composite_norm,
    fuse_symmetric,
    linear_ratios,
    mixed_norm_array,
    product_estimate_report,
    sample_set,
    x_t_components,
    xr_t_components,
)
from kdvgauge.spectral import Grid1D


@pytest.fixture
def grid():
    return Grid1D(8 * np.pi, 256)


def rows(grid, M=20, seed=0):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((M + 1, grid.n))


class TestMixedNorm:
    def test_spec_validation(self):
        with pytest.raises(ValidationError, match="outer variable"):
            MixedNormSpec("y", 2, 2)
        with pytest.raises(ValidationError, match="exponents"):
            MixedNormSpec("t", 0.5, 2)

    def test_fubini(self, grid):
        A = rows(grid)
        a = mixed_norm_array(A, grid, 0.1, MixedNormSpec("t", 2, 2))
        b = mixed_norm_array(A, grid, 0.1, MixedNormSpec("x", 2, 2))
        assert a == pytest.approx(b, rel=1e-13)

    @pytest.mark.parametrize("p,q", [(2, 2), (6, INF), (INF, 2), (8, 4)])
    def test_constant_field(self, grid, p, q):
        T, M, c = 2.0, 40, 3.0
        A = np.full((M + 1, grid.n), c)
        ref = c * (2 * grid.L) ** (0 if q == INF else 1 / q) * T ** (0 if p == INF else 1 / p)
        assert mixed_norm_array(A, grid, T / M, MixedNormSpec("t", p, q)) == pytest.approx(ref, rel=1e-13)

    def test_single_snapshot(self, grid):
        A = rows(grid, 0)
        assert mixed_norm_array(A, grid, 0.1, MixedNormSpec("t", 2, 2)) == 0.0
        sup = mixed_norm_array(A, grid, 0.1, MixedNormSpec("t", INF, INF))
        assert sup == pytest.approx(np.max(np.abs(A)))

    @pytest.mark.parametrize("outer", ["x", "t"])
    def test_homogeneity_and_triangle(self, grid, outer):
        A, B = rows(grid, seed=1), rows(grid, seed=2)
        spec = MixedNormSpec(outer, 3, 5)
        n = lambda X: mixed_norm_array(X, grid, 0.05, spec)
        assert n(-2.5 * A) == pytest.approx(2.5 * n(A), rel=1e-13)
        assert n(A + B) <= n(A) + n(B)

    def test_holder(self, grid):
        A, B = rows(grid, seed=3), rows(grid, seed=4)
        one = mixed_norm_array(A * B, grid, 0.05, MixedNormSpec("t", 1, 1))
        two = (mixed_norm_array(A, grid, 0.05, MixedNormSpec("t", 2, 2))
               * mixed_norm_array(B, grid, 0.05, MixedNormSpec("t", 2, 2)))
        assert one <= two

    @pytest.mark.parametrize("T", [0.5, 2.0])
    def test_time_l1_below_root_T_l2(self, grid, T):
        # discrete Cauchy-Schwarz on [0, T]; a fused window [-T, T] doubles the measure
        M = 40
        A = rows(grid, M, seed=5)
        l1 = mixed_norm_array(A, grid, T / M, MixedNormSpec("x", 2, 1))
        l2 = mixed_norm_array(A, grid, T / M, MixedNormSpec("x", 2, 2))
        assert l1 <= np.sqrt(T) * l2 * (1 + 1e-13)


class TestComposites:
    def zero_traj(self, grid, spec):
        fields = {k: np.zeros((5, grid.n)) for k in spec.fields}
        return Trajectory(grid, np.linspace(0, 0.4, 5), fields, spec)

    @pytest.mark.parametrize("which", COMPOSITES)
    def test_zero(self, grid, which):
        spec = EquationSpec(c1=1.0, c2=0.5, variant="coupled")
        rep = composite_norm(self.zero_traj(grid, spec), which, s=1.5, r=0.5)
        assert rep.total == 0.0

    def test_unknown(self, grid):
        with pytest.raises(ValidationError, match="unknown composite"):
            composite_norm(self.zero_traj(grid, EquationSpec()), "W_T")

    def test_missing_parameters(self, grid):
        tr = self.zero_traj(grid, EquationSpec())
        with pytest.raises(ValidationError, match="needs r"):
            composite_norm(tr, "X^r_T")
        with pytest.raises(ValidationError, match="needs s"):
            composite_norm(tr, "Z^s_T")

    def test_calzprime_needs_c4_zero(self, grid):
        spec = EquationSpec(c4=1.0, variant="quadratic")
        with pytest.raises(ValidationError, match="c4 = 0"):
            composite_norm(self.zero_traj(grid, spec), "calZprime_T")

    def test_xr_at_zero_contains_x(self, grid):
        A = rows(grid)
        base = x_t_components(A, grid, 0.05)
        xr = xr_t_components(A, grid, 0.05, 0.0)
        for k, v in base.items():
            assert xr[f"<dx>^0 {k}"] == pytest.approx(v, rel=1e-12)
        assert len(xr) == len(base) + 1

    def test_xr_fractional_piece(self, grid):
        assert len(xr_t_components(rows(grid), grid, 0.05, 0.5)) == 6
        with pytest.raises(ValidationError, match="r must be >= 0"):
            xr_t_components(rows(grid), grid, 0.05, -0.5)

    def test_z_reduces_to_x_pieces_for_c1_zero(self, grid):
        g = Grid1D(8 * np.pi, 256)
        u0 = g.field(0.1 * np.exp(-g.x**2))
        tr = evolve(u0, 0.2, StepperConfig(0.005, 0.05), EquationSpec(c2=1.0))
        z = composite_norm(tr, "Z_T")
        x = composite_norm(tr, "X_T")
        for k, v in x.components.items():
            assert z[f"u: {k}"] == v

    def test_fuse_symmetric(self, grid):
        u0 = grid.field(np.exp(-grid.x**2))
        cfg = StepperConfig(0.01, 0.05)
        f = evolve(u0, 0.2, cfg, EquationSpec())
        b = evolve(u0, 0.2, cfg, EquationSpec(), backward=True)
        fused = fuse_symmetric(f, b)
        assert np.allclose(fused.times, np.linspace(-0.2, 0.2, 9))
        with pytest.raises(ValidationError, match="share snapshot times"):
            fuse_symmetric(f, evolve(u0, 0.1, cfg, EquationSpec(), backward=True))


class TestFreeEvolutionX:
    def test_ratio_stable_under_refinement(self):
        worst = []
        for n, h in ((512, 0.02), (1024, 0.01)):
            g = Grid1D(16 * np.pi, n)
            ratios = []
            for f in sample_set(1, 4):
                u0 = g.sample(f)
                tr = free_trajectory(u0, np.arange(0, 51) * h)
                ratios.append(composite_norm(tr, "X_T").total / u0.norm())
            worst.append(max(ratios))
        assert np.isfinite(worst[0])
        assert abs(worst[1] / worst[0] - 1) < 0.2


class TestAdmissibility:
    @pytest.mark.parametrize("triple", [(6, INF, 0), (4, INF, 0.25), (8, 8, 0), (INF, 2, 0)])
    def test_accepted(self, triple):
        check_admissible(*triple)

    @pytest.mark.parametrize("triple,msg", [
        ((2, 2, 0), "not admissible"),
        ((1, INF, 0), "2 <= q"),
        ((6, INF, 0.5), "s <= 1/q"),
    ])
    def test_rejected(self, triple, msg):
        with pytest.raises(AdmissibilityError, match=msg):
            check_admissible(*triple)


class TestLinearEstimates:
    def test_stable_under_refinement(self):
        rep = check_linear_estimates(sample_set(0, 4), 1.0, Grid1D(16 * np.pi, 512), 0.01)
        assert rep.passed, rep.checks

    def test_rejects_bad_triple(self, grid):
        with pytest.raises(AdmissibilityError, match="not admissible"):
            check_linear_estimates(sample_set(0, 1), 1.0, grid, 0.01, triples=((2, 2, 0),))

    def test_maximal_needs_s_above_three_quarters(self, grid):
        with pytest.raises(AdmissibilityError, match="s > 3/4"):
            check_linear_estimates(sample_set(0, 1), 1.0, grid, 0.01, s_max=0.7)

    def test_translation_invariance(self):
        g = Grid1D(16 * np.pi, 512)
        u = g.sample(sample_set(0, 1)[0])
        a = linear_ratios(u, 1.0, 0.01)
        b = linear_ratios(g.field(np.roll(u.values, 37)), 1.0, 0.01)
        for k in a:
            assert a[k] == pytest.approx(b[k], rel=1e-12)

    def test_strichartz_scaling_invariance(self):
        # u0 -> lam^(1/2) u0(lam x) with T -> T / lam^3 leaves admissible ratios fixed
        g = Grid1D(16 * np.pi, 2048)
        lam = 2.0
        u = g.field(np.exp(-g.x**2) * np.cos(g.x))
        v = g.field(np.sqrt(lam) * np.exp(-(lam * g.x) ** 2) * np.cos(lam * g.x))
        tri = ((6, INF, 0.0), (8, 8, 0.0))
        a = linear_ratios(u, 1.0, 0.005, tri)
        b = linear_ratios(v, 1.0 / lam**3, 0.005 / lam**3, tri)
        for k in ("strichartz q=6 r=inf s=0", "strichartz q=8 r=8 s=0"):
            assert a[k] == pytest.approx(b[k], rel=0.02)


class TestProductEstimate:
    @pytest.mark.parametrize("r", [0.0, 0.5, 1.5])
    def test_constant_multiplier(self, grid, r):
        f = grid.field(np.exp(-grid.x**2) * np.cos(3 * grid.x))
        assert check_product_estimate(f, grid.field(np.ones(grid.n)), r) == pytest.approx(1.0, rel=1e-10)

    def test_zero(self, grid):
        assert check_product_estimate(grid.zeros(), grid.zeros(), 1.0) == 0.0

    @pytest.mark.parametrize("alpha", [-3.0, 0.01, 7.5])
    def test_invariant_under_scaling_g(self, grid, alpha):
        f = grid.field(np.exp(-grid.x**2))
        g = grid.field(np.exp(-((grid.x - 1) / 2) ** 2) * np.cos(2 * grid.x))
        assert check_product_estimate(f, g * alpha, 1.5) == pytest.approx(
            check_product_estimate(f, g, 1.5), rel=1e-12)

    @pytest.mark.parametrize("r", [0.0, 1.5])
    def test_high_low_pair_stable(self, r):
        # f near frequency 64, g near frequency 2
        f = lambda x: np.exp(-(x / 2) ** 2) * np.cos(64 * x)
        g = lambda x: np.exp(-(x / 2) ** 2) * np.cos(2 * x)
        vals = [check_product_estimate(G.sample(f), G.sample(g), r)
                for G in (Grid1D(8 * np.pi, 2048), Grid1D(8 * np.pi, 4096))]
        assert 0 < vals[0] < 1
        assert abs(vals[1] / vals[0] - 1) < 0.2

    def test_negative_r(self, grid):
        with pytest.raises(ValidationError, match="r must be >= 0"):
            check_product_estimate(grid.zeros(), grid.zeros(), -1.0)

    @pytest.mark.parametrize("r", [0.0, 1.5])
    def test_report_stable(self, grid, r):
        rep = product_estimate_report(grid, r)
        assert rep.passed, rep.checks
        # high-low pairs are included
        assert len(rep.rows) == 12


class TestUnboundCheck:
    def test_zero_is_degenerate(self, grid):
        spec = EquationSpec(c1=1.0, variant="coupled")
        tr = Trajectory(grid, np.linspace(0, 0.4, 5),
                        {"u": np.zeros((5, grid.n)), "vf": np.zeros((5, grid.n))}, spec)
        res = check_unbound_lemma(tr)
        assert res.degenerate and res.ratio == 0.0

    @pytest.mark.parametrize("r", [0.0, 1.0])
    def test_small_data_ratio_below_one(self, r):
        g = Grid1D(16 * np.pi, 512)
        tr = evolve(g.field(0.1 * np.exp(-g.x**2)), 0.5, StepperConfig(0.0025, 0.01),
                    EquationSpec(c1=1.0, variant="coupled"))
        res = check_unbound_lemma(tr, r)
        assert not res.degenerate
        assert 0 < res.ratio < 1

    def test_needs_coupled(self, grid):
        tr = evolve(grid.zeros(), 0.1, StepperConfig(0.01, 0.05), EquationSpec())
        with pytest.raises(ValidationError, match="coupled trajectory"):
            check_unbound_lemma(tr)
