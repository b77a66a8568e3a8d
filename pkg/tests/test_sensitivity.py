import numpy as np
import pytest

from homlab.elliptic import SolveOptions
from homlab.lattice import GridSpec
from homlab.partition import lattice_partition_labels
from homlab.randomfield import (CoefficientModel, CovarianceSpec, SeedSpec,
                                sample_gaussian, to_coefficients)
from homlab.sensitivity import (FunctionalSpec, carre_du_champ, fd_check,
                                functional_value, malliavin_derivative)

GRID = GridSpec(2, 32)
OPTS = SolveOptions(tol=1e-12)


def _field(seed=0, nu=0.1):
    spec = CovarianceSpec(2.5, 0.0)
    g1 = sample_gaussian(spec, GRID, SeedSpec(seed, 0))
    g2 = (sample_gaussian(spec, GRID, SeedSpec(seed, 0, salt=1))
          if nu else None)
    return to_coefficients(g1, CoefficientModel(0.25, nu), g2, GRID)


def _weight(seed=0):
    return np.random.default_rng(seed).standard_normal((2,) + GRID.shape)


class TestSpec:
    def test_kind_validation(self):
        with pytest.raises(ValueError):
            FunctionalSpec("flux", _weight())
        with pytest.raises(ValueError):
            FunctionalSpec("sigma", _weight(), pair=(1, 0))


class TestAdjoint:
    @pytest.mark.parametrize("kind", ["phi", "sigma"])
    def test_fd_agreement(self, kind):
        a = _field(1)
        spec = FunctionalSpec(kind, _weight(1))
        err, fd, adj = fd_check(a, spec, (5, 9), np.eye(2), 1e-5, OPTS)
        assert err < 1e-4

    def test_skew_perturbation(self):
        a = _field(2)
        da = np.array([[0.0, 1.0], [-1.0, 0.0]])
        spec = FunctionalSpec("phi", _weight(2))
        err, _, _ = fd_check(a, spec, (3, 3), da, 1e-5, OPTS)
        assert err < 1e-4

    def test_bias_is_first_order(self):
        a = _field(3)
        spec = FunctionalSpec("phi", _weight(3))
        deriv = malliavin_derivative(a, spec, OPTS)
        e1, _, _ = fd_check(a, spec, (7, 2), np.eye(2), 2e-4, OPTS, deriv)
        e2, _, _ = fd_check(a, spec, (7, 2), np.eye(2), 1e-4, OPTS, deriv)
        assert e2 < 0.75 * e1 + 1e-7

    def test_linearity_in_weight(self):
        a = _field(4)
        g1, g2 = _weight(4), _weight(5)
        d1 = malliavin_derivative(a, FunctionalSpec("phi", g1), OPTS)
        d2 = malliavin_derivative(a, FunctionalSpec("phi", g2), OPTS)
        d12 = malliavin_derivative(a, FunctionalSpec("phi", g1 + g2), OPTS)
        assert np.allclose(d12.deriv, d1.deriv + d2.deriv, atol=1e-7)

    def test_functional_value_matches_definition(self):
        from homlab.corrector import compute_corrector
        from homlab.lattice import grad
        a = _field(5)
        g = _weight(6)
        spec = FunctionalSpec("phi", g)
        phi, _ = compute_corrector(a, OPTS, directions=[0])
        want = float(np.sum(grad(phi[0]) * g))
        assert np.isclose(functional_value(a, spec, OPTS), want)


class TestCarreDuChamp:
    def _deriv(self):
        a = _field(6)
        return malliavin_derivative(a, FunctionalSpec("phi", _weight(7)),
                                    OPTS)

    def test_monotone_under_coarsening(self):
        deriv = self._deriv()
        finest = np.arange(GRID.n**2).reshape(GRID.shape)
        coarsest = np.zeros(GRID.shape, dtype=np.int64)
        labels = lattice_partition_labels(GRID, 0.3)
        v_fine = carre_du_champ(deriv, finest)
        v_mid = carre_du_champ(deriv, labels)
        v_coarse = carre_du_champ(deriv, coarsest)
        assert v_fine <= v_mid + 1e-12
        assert v_mid <= v_coarse + 1e-12

    def test_gap_rejected(self):
        deriv = self._deriv()
        labels = np.zeros(GRID.shape, dtype=np.int64)
        labels[0, 0] = -1
        with pytest.raises(ValueError):
            carre_du_champ(deriv, labels)

    def test_shape_mismatch_rejected(self):
        deriv = self._deriv()
        with pytest.raises(ValueError):
            carre_du_champ(deriv, np.zeros((8, 8), dtype=np.int64))

    def test_single_cell_value(self):
        deriv = self._deriv()
        labels = np.zeros(GRID.shape, dtype=np.int64)
        want = float(np.sum(np.abs(deriv.deriv)) ** 2)
        assert np.isclose(carre_du_champ(deriv, labels), want)
