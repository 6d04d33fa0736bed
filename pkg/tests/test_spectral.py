import numpy as np
import pytest

from kdvgauge.errors import RepresentationError, ValidationError
from kdvgauge.spectral import (
    FOURIER,
    Field,
    Grid1D,
    MultiplierSpec,
    admissible_blocks,
    airy_propagate,
    apply_multiplier,
    bessel,
    check_pad,
    derivative,
    identity,
    littlewood_paley,
    power,
    primitive_periodic,
    product,
    riesz,
    spectral_derivative,
    transform,
)


@pytest.fixture
def grid():
    return Grid1D(8 * np.pi, 256)


def random_field(grid, seed=0, band=20.0):
    rng = np.random.default_rng(seed)
    c = grid.field(rng.standard_normal(grid.n)).fourier().values
    c = c * (np.abs(grid.xi) < band)
    c[grid.n // 2] = 0.0
    return Field(grid, c, FOURIER).physical()


class TestGrid:
    def test_spacings(self, grid):
        assert grid.dx == pytest.approx(16 * np.pi / 256)
        assert grid.dxi == pytest.approx(1 / 8)
        assert grid.x[0] == -grid.L

    @pytest.mark.parametrize("n", [15, 100, 8])
    def test_rejects_bad_size(self, n):
        with pytest.raises(ValidationError, match="power of two"):
            Grid1D(1.0, n)

    def test_rejects_bad_length(self):
        with pytest.raises(ValidationError, match="half length"):
            Grid1D(-1.0, 64)


class TestTransform:
    def test_zero(self, grid):
        assert np.all(transform(grid.zeros(), "forward").values == 0)

    def test_round_trip(self, grid):
        rng = np.random.default_rng(1)
        u = grid.field(rng.standard_normal(grid.n))
        back = transform(transform(u, "forward"), "inverse")
        assert (back - u).norm() / u.norm() < 1e-13

    def test_pure_mode_two_coefficients(self, grid):
        u = grid.field(np.cos(np.pi * grid.x / grid.L))
        c = u.fourier().values
        nz = np.nonzero(np.abs(c) > 1e-10 * np.abs(c).max())[0]
        assert sorted(grid.xi[nz]) == pytest.approx([-np.pi / grid.L, np.pi / grid.L])

    def test_parseval(self, grid):
        u = random_field(grid, 3)
        assert u.fourier().norm() == pytest.approx(u.norm(), rel=1e-12)

    def test_zero_mode_is_window_integral(self, grid):
        u = grid.field(np.exp(-grid.x**2))
        assert np.sqrt(2 * np.pi) * u.fourier().values[0].real == pytest.approx(
            np.sum(u.values) * grid.dx, rel=1e-13)

    def test_bad_direction(self, grid):
        with pytest.raises(ValidationError, match="direction"):
            transform(grid.zeros(), "sideways")

    def test_physical_must_be_real(self, grid):
        with pytest.raises(RepresentationError, match="real"):
            Field(grid, np.zeros(grid.n, dtype=complex))


class TestMultipliers:
    k = 3.0

    def test_identity(self, grid):
        u = random_field(grid)
        assert (apply_multiplier(u, identity()) - u).norm() < 1e-14

    def test_riesz_on_cosine(self, grid):
        u = grid.field(np.cos(self.k * grid.x))
        out = apply_multiplier(u, riesz(1))
        assert np.max(np.abs(out.values - self.k * u.values)) < 1e-12

    @pytest.mark.parametrize("s", [-0.75, 0.5, 2.0])
    def test_bessel_on_cosine(self, grid, s):
        u = grid.field(np.cos(self.k * grid.x))
        out = apply_multiplier(u, bessel(s))
        ref = (1 + self.k**2) ** (s / 2) * u.values
        assert np.max(np.abs(out.values - ref)) < 1e-12 * np.max(np.abs(ref))

    def test_derivative(self, grid):
        u = grid.field(np.sin(self.k * grid.x))
        assert np.max(np.abs(spectral_derivative(u, 1).values - self.k * np.cos(self.k * grid.x))) < 1e-12
        assert np.max(np.abs(apply_multiplier(u, derivative(2)).values + self.k**2 * u.values)) < 1e-11

    def test_riesz_zero_frequency(self):
        assert riesz(0.5).evaluate(np.array([0.0]))[0] == 0.0

    def test_nonfinite_symbol(self, grid):
        with pytest.raises(ValidationError, match="finite"):
            MultiplierSpec(lambda xi: np.where(xi == 0, np.inf, xi), "bad").evaluate(np.array([0.0, 1.0]))


class TestAiry:
    def test_time_zero(self, grid):
        u = random_field(grid)
        assert (airy_propagate(u, 0.0) - u).norm() < 1e-14

    def test_cosine_phase(self, grid):
        k, t = 3.0, 0.7
        u = grid.field(np.cos(k * grid.x))
        out = airy_propagate(u, t)
        assert np.max(np.abs(out.values - np.cos(k * grid.x + t * k**3 / 3))) < 1e-12

    def test_unitary(self, grid):
        u = random_field(grid, 5)
        assert airy_propagate(u, 1.3).norm() == pytest.approx(u.norm(), rel=1e-13)

    def test_group(self, grid):
        u = random_field(grid, 6)
        a = airy_propagate(airy_propagate(u, 0.4), 0.9)
        assert (a - airy_propagate(u, 1.3)).norm() / u.norm() < 1e-12

    def test_commutes_with_multiplier(self, grid):
        u = random_field(grid, 7)
        a = apply_multiplier(airy_propagate(u, 0.5), bessel(1.5))
        b = airy_propagate(apply_multiplier(u, bessel(1.5)), 0.5)
        assert (a - b).norm() / a.norm() < 1e-12


class TestLittlewoodPaley:
    def test_reassembly(self, grid):
        u = random_field(grid, 2, band=1e9)
        total = grid.zeros()
        for b in admissible_blocks(grid):
            total = total + littlewood_paley(u, b)
        assert (total - u).norm() / u.norm() < 1e-13

    def test_mode_three_in_block_four(self, grid):
        u = grid.field(np.cos(3 * grid.x))
        assert (littlewood_paley(u, 4) - u).norm() < 1e-12
        for b in admissible_blocks(grid):
            if b != 4:
                assert littlewood_paley(u, b).norm() < 1e-12

    def test_orthogonal(self, grid):
        u = random_field(grid, 4, band=1e9)
        assert littlewood_paley(littlewood_paley(u, 8), 4).norm() < 1e-14 * u.norm()

    def test_block_beyond_nyquist(self, grid):
        with pytest.raises(ValidationError, match="Nyquist"):
            littlewood_paley(grid.zeros(), 2**20)

    def test_bad_block(self, grid):
        with pytest.raises(ValidationError, match="power of two"):
            littlewood_paley(grid.zeros(), 3)


class TestProducts:
    def test_two_modes(self, grid):
        k1, k2 = 2.0, 3.5
        a = grid.field(np.cos(k1 * grid.x))
        b = grid.field(np.cos(k2 * grid.x))
        out = product(a, b)
        ref = 0.5 * (np.cos((k1 + k2) * grid.x) + np.cos((k1 - k2) * grid.x))
        assert np.max(np.abs(out.values - ref)) < 1e-13

    def test_constant_one(self, grid):
        u = random_field(grid)
        assert (product(u, grid.field(np.ones(grid.n))) - u).norm() / u.norm() < 1e-13

    def test_quintic_fine_grid_oracle(self):
        g = Grid1D(np.pi, 64)
        f = lambda x: np.cos(x) + 0.5 * np.sin(3 * x) + 0.25 * np.cos(5 * x)
        out = power(g.sample(f), 5, pad_factor=3)
        fine = Grid1D(np.pi, 256)
        ref = fine.field(f(fine.x) ** 5).fourier().values
        # keep the coarse band of the fine-grid evaluation
        keep = np.abs(fine.index) < g.n // 2
        coarse = np.zeros(g.n, dtype=complex)
        coarse[fine.index[keep] % g.n] = ref[keep]
        ref_field = Field(g, coarse, FOURIER).physical()
        assert (out - ref_field).norm() / ref_field.norm() < 1e-12

    def test_pad_too_small(self, grid):
        with pytest.raises(ValidationError, match="too small"):
            check_pad(5, 2)


class TestPrimitivePeriodic:
    def test_gaussian(self):
        g = Grid1D(8 * np.pi, 512)
        from scipy.special import erf
        p = primitive_periodic(np.exp(-g.x**2), g.L)
        ref = np.sqrt(np.pi) / 2 * (erf(g.x) + 1)
        assert np.max(np.abs(p - ref)) < 1e-12
