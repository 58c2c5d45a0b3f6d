"""Tests for continuous sources: Newton potentials, field construction,
the conservativeness dichotomy, and the lattice ingester.

Radial reference values come from 1D radial quadrature (scipy) of the same
densities, frozen here. The Gaussian potential has the closed form
-Q erf(r / (sqrt2 sigma)) / (4 pi r), used directly.
"""

import json
import math

import numpy as np
import pytest
from scipy.special import erf

from bifield.errors import ConfigError, QuadratureError
from bifield.models import ModelParams
from bifield.observables import QuadratureSpec
from bifield.currents import fd_curl
from bifield.continuous import (
    ContinuousSource,
    bump_source,
    continuous_fields,
    continuous_residual_suite,
    curl_formula_continuous,
    gaussian_source,
    gridded_source,
    merge_sources,
    newton_potential,
    potential_gradient,
    two_gaussian_source,
)

# 1D radial quadrature of the bump density (total 2, radius 1.5): potential
# at r = 0.5 and r = 1.0 from the center, via Q_enc(r)/(4 pi r) + outer shell
BUMP_U_HALF = -0.2045495239482435
BUMP_U_ONE = -0.1542888389262224


def gaussian_potential(total, sigma, r):
    return -total * erf(r / (math.sqrt(2.0) * sigma)) / (4.0 * math.pi * r)


def offset_pair():
    # strong offset mixture; its E-field curl is O(1e-2) near the overlap
    return two_gaussian_source(q1=8.0, sigma1=0.6, center1=(-1.0, 0.0, 0.0),
                               q2=6.0, sigma2=0.8, center2=(1.2, 0.4, 0.0))


class TestContinuousSource:
    def test_slow_decay_exponent_rejected(self):
        rho = gaussian_source().rho_e
        with pytest.raises(ConfigError):
            ContinuousSource(rho_e=rho, gamma=3.0)
        with pytest.raises(ConfigError):
            ContinuousSource(rho_e=rho, gamma=2.5)

    def test_slow_decaying_density_rejected(self):
        def rho(pts):
            pts = np.asarray(pts, dtype=float)
            r2 = np.sum(pts * pts, axis=-1)
            return (1.0 + r2) ** -1.4  # decays like r^-2.8, slower than claimed

        with pytest.raises(ConfigError):
            ContinuousSource(rho_e=rho, gamma=4.0, support_radius=5.0, width=1.0)

    def test_needs_a_density(self):
        with pytest.raises(ConfigError):
            ContinuousSource()

    def test_bad_geometry_rejected(self):
        rho = gaussian_source().rho_e
        with pytest.raises(ConfigError):
            ContinuousSource(rho_e=rho, support_radius=0.0)
        with pytest.raises(ConfigError):
            ContinuousSource(rho_e=rho, width=-1.0)

    def test_gaussian_builder_fields(self):
        src = gaussian_source(total=1.7, sigma=0.8, center=(0.3, -0.2, 0.1))
        assert src.total_q == 1.7
        assert src.total_g == 0.0
        assert src.rho_m is None
        assert src.grad_u is not None
        assert src.width == 0.8
        msrc = gaussian_source(total=0.5, magnetic=True)
        assert msrc.rho_e is None
        assert msrc.total_g == 0.5

    def test_gaussian_density_normalization(self):
        # radial quadrature of 4 pi r^2 rho reproduces the total
        src = gaussian_source(total=1.7, sigma=0.8, center=(0.3, -0.2, 0.1))
        c = np.array([0.3, -0.2, 0.1])
        rs = np.linspace(1e-4, 10.0, 20001)
        vals = src.rho_e(c + rs[:, None] * np.array([0.0, 0.0, 1.0]))
        total = np.trapezoid(4.0 * math.pi * rs**2 * vals, rs)
        assert abs(total - 1.7) <= 1e-6

    def test_bump_density_compact_and_normalized(self):
        src = bump_source(total=2.0, radius=1.5, center=(0.2, 0.0, 0.0))
        c = np.array([0.2, 0.0, 0.0])
        assert float(src.rho_e(c + np.array([0.0, 1.5, 0.0]))) == 0.0
        assert float(src.rho_e(c + np.array([0.0, 2.0, 0.0]))) == 0.0
        assert float(src.rho_e(c)) > 0.0
        rs = np.linspace(1e-6, 1.5, 30001)
        vals = src.rho_e(c + rs[:, None] * np.array([1.0, 0.0, 0.0]))
        total = np.trapezoid(4.0 * math.pi * rs**2 * vals, rs)
        assert abs(total - 2.0) <= 1e-6

    def test_invalid_widths_rejected(self):
        with pytest.raises(ConfigError):
            gaussian_source(sigma=0.0)
        with pytest.raises(ConfigError):
            two_gaussian_source(sigma1=-1.0)
        with pytest.raises(ConfigError):
            bump_source(radius=0.0)

    def test_merge_sources(self):
        e = gaussian_source(total=2.0, sigma=1.0, center=(-0.5, 0.0, 0.0))
        m = gaussian_source(total=1.5, sigma=1.2, center=(0.5, 0.0, 0.0), magnetic=True)
        dy = merge_sources(e, m)
        assert dy.total_q == 2.0
        assert dy.total_g == 1.5
        assert dy.rho_e is e.rho_e
        assert dy.rho_m is m.rho_m
        assert dy.width == 1.0
        assert dy.support_radius >= max(e.support_radius, m.support_radius)
        with pytest.raises(ConfigError):
            merge_sources(m, m)
        with pytest.raises(ConfigError):
            merge_sources(e, e)


class TestNewtonPotential:
    def test_gaussian_matches_closed_form(self):
        src = gaussian_source(total=1.0, sigma=1.0)
        for r in np.geomspace(0.2, 12.0, 15):
            u = newton_potential(src, (r, 0.0, 0.0))
            exact = gaussian_potential(1.0, 1.0, r)
            assert abs(u - exact) <= 1e-5 * abs(exact)

    def test_missing_density_gives_zero(self):
        src = gaussian_source(total=1.0, sigma=1.0)
        assert newton_potential(src, (1.0, 2.0, 3.0), which="magnetic") == 0.0

    def test_narrow_source_is_coulomb_far_out(self):
        src = gaussian_source(total=2.0, sigma=0.05)
        r = 0.5  # ten widths from the center
        u = newton_potential(src, (0.3, 0.4, 0.0))
        exact = -2.0 / (4.0 * math.pi * r)
        assert abs(u - exact) <= 1e-6 * abs(exact)

    def test_bump_exterior_is_exactly_coulomb(self):
        src = bump_source(total=2.0, radius=1.5, center=(0.2, 0.0, 0.0))
        for x in [(3.0, 0.0, 0.0), (0.2, 5.0, 0.0)]:
            d = float(np.linalg.norm(np.array(x) - np.array([0.2, 0.0, 0.0])))
            u = newton_potential(src, x)
            exact = -2.0 / (4.0 * math.pi * d)
            assert abs(u - exact) <= 1e-6 * abs(exact)

    def test_bump_interior_matches_radial_oracle(self):
        src = bump_source(total=2.0, radius=1.5, center=(0.2, 0.0, 0.0))
        c = np.array([0.2, 0.0, 0.0])
        u_half = newton_potential(src, c + np.array([0.0, 0.5, 0.0]))
        u_one = newton_potential(src, c + np.array([0.0, 0.0, 1.0]))
        assert abs(u_half - BUMP_U_HALF) <= 1e-8
        assert abs(u_one - BUMP_U_ONE) <= 1e-8

    def test_regime_boundary_is_seamless(self):
        # the x-centered and source-centered quadratures agree where they meet
        src = gaussian_source(total=1.0, sigma=1.0)
        for r in (8.9, 9.1):
            u = newton_potential(src, (r, 0.0, 0.0))
            exact = gaussian_potential(1.0, 1.0, r)
            assert abs(u - exact) <= 1e-9 * abs(exact)

    def test_invalid_inputs(self):
        src = gaussian_source()
        with pytest.raises(ValueError):
            newton_potential(src, (1.0, 0.0, 0.0), which="both")
        with pytest.raises(ValueError):
            newton_potential(src, (math.inf, 0.0, 0.0))

    def test_unresolvable_density_raises(self):
        # valid decay, but too rough for a two-level quadrature at 1e-10
        def rho(pts):
            pts = np.asarray(pts, dtype=float)
            r2 = np.sum(pts * pts, axis=-1)
            return np.exp(-0.5 * r2) * (1.0 + 0.8 * np.sin(40.0 * r2))

        src = ContinuousSource(rho_e=rho, gamma=6.0, support_radius=8.0, width=1.0)
        quad = QuadratureSpec(rel_tol=1e-10, max_subdivisions=1)
        with pytest.raises(QuadratureError):
            newton_potential(src, (0.3, 0.1, 0.2), quad)


class TestPotentialGradient:
    def test_analytic_matches_finite_differences(self):
        src = gaussian_source(total=1.0, sigma=1.0)
        x = np.array([1.2, -0.5, 0.8])
        g = potential_gradient(src, x)
        h = 1e-5
        for k in range(3):
            step = np.zeros(3)
            step[k] = h
            fd = (newton_potential(src, x + step) - newton_potential(src, x - step)) / (2.0 * h)
            assert abs(g[k] - fd) <= 1e-9

    def test_small_radius_series_matches_erf_branch(self):
        src = gaussian_source(total=3.0, sigma=1.0)
        # below r = 0.01 sigma the gradient switches to a series; the erf
        # expression is still good to ~1e-11 there and pins it down
        r = 0.009
        enclosed = 3.0 * (math.erf(r / math.sqrt(2.0))
                          - math.sqrt(2.0 / math.pi) * r * math.exp(-0.5 * r * r))
        expected = enclosed / (4.0 * math.pi * r**2)
        g = potential_gradient(src, (r, 0.0, 0.0))
        assert abs(g[0] - expected) <= 1e-9 * abs(expected)
        assert abs(g[1]) == 0.0 and abs(g[2]) == 0.0
        assert np.all(potential_gradient(src, (0.0, 0.0, 0.0)) == 0.0)

    def test_fd_route_matches_analytic_route(self):
        # same density with the analytic gradient stripped off
        src = gaussian_source(total=1.0, sigma=1.0)
        bare = ContinuousSource(rho_e=src.rho_e, gamma=6.0, total_q=1.0,
                                support_radius=src.support_radius, width=1.0)
        x = (0.8, -0.3, 0.5)
        g_fd = potential_gradient(bare, x)
        g_an = potential_gradient(src, x)
        # quadrature noise at rel_tol 1e-6 bounds the FD route near 1e-7
        assert np.max(np.abs(g_fd - g_an)) <= 1e-7

    def test_missing_density_gradient_is_zero(self):
        src = gaussian_source()
        assert np.all(potential_gradient(src, (1.0, 1.0, 1.0), which="magnetic") == 0.0)


class TestContinuousFields:
    def test_electric_only_has_no_magnetic_part(self):
        src = gaussian_source(total=1.0, sigma=1.0)
        state = continuous_fields(src, ModelParams.classical(1.0), (0.7, 0.1, -0.3))
        assert np.all(state.b == 0.0)
        assert np.all(state.h == 0.0)
        assert np.linalg.norm(state.e) > 0.0

    @pytest.mark.parametrize("params", [
        ModelParams.classical(1.0),
        ModelParams.logarithmic(0.6),
        ModelParams.exponential(0.5),
        ModelParams.quadratic(0.4),
    ])
    def test_radial_source_is_conservative(self, params):
        src = gaussian_source(total=3.0, sigma=1.0)

        def e_field(y):
            return continuous_fields(src, params, y).e

        for pt in [(0.8, 0.3, -0.2), (2.0, -1.0, 0.5)]:
            curl = fd_curl(e_field, np.array(pt), richardson=True)
            assert np.max(np.abs(curl)) <= 1e-8

    def test_offset_source_is_not_conservative(self):
        src = offset_pair()
        params = ModelParams.classical(1.0)

        def e_field(y):
            return continuous_fields(src, params, y).e

        worst = 0.0
        for pt in [(0.0, 0.8, 0.3), (-0.2, 0.6, 0.0), (0.2, 0.3, -0.8)]:
            curl = fd_curl(e_field, np.array(pt), richardson=True)
            worst = max(worst, float(np.max(np.abs(curl))))
        assert worst > 1e-3

    def test_radial_dyonic_source_conservative_both_fields(self):
        e_src = gaussian_source(total=2.0, sigma=1.0)
        m_src = gaussian_source(total=1.5, sigma=1.2, magnetic=True)
        dy = merge_sources(e_src, m_src)
        for params in [ModelParams.classical(1.0, kappa=0.0),
                       ModelParams.logarithmic(0.5, kappa=0.7)]:
            def e_field(y):
                return continuous_fields(dy, params, y).e

            def h_field(y):
                return continuous_fields(dy, params, y).h

            for pt in [(0.7, 0.2, -0.4), (1.5, -0.8, 0.3)]:
                assert np.max(np.abs(fd_curl(e_field, np.array(pt)))) <= 1e-6
                assert np.max(np.abs(fd_curl(h_field, np.array(pt)))) <= 1e-6

    def test_bump_fd_route_stays_conservative(self):
        src = bump_source(total=2.0, radius=1.5, center=(0.2, 0.0, 0.0))
        params = ModelParams.classical(1.0)

        def e_field(y):
            return continuous_fields(src, params, y).e

        curl = fd_curl(e_field, np.array([0.8, 0.4, -0.3]), step=0.05)
        assert np.max(np.abs(curl)) <= 1e-6

    def test_far_field_is_coulombic(self):
        src = offset_pair()
        target = src.total_q / (4.0 * math.pi)
        for R in (30.0, 100.0):
            g = potential_gradient(src, np.array([R, 0.1, 0.0]))
            ratio = float(np.linalg.norm(g)) * R * R / target
            assert abs(ratio - 1.0) <= 0.02


class TestCurlFormula:
    def test_matches_fd_curl_for_offset_source(self):
        src = offset_pair()
        params = ModelParams.classical(1.0)

        def e_field(y):
            return continuous_fields(src, params, y).e

        for pt in [(0.0, 0.8, 0.3), (0.5, -0.6, 0.2), (-0.2, 0.6, 0.0)]:
            fd = fd_curl(e_field, np.array(pt), richardson=True)
            formula = curl_formula_continuous(src, params, pt)
            assert np.max(np.abs(formula - fd)) <= 1e-4
            assert np.max(np.abs(formula)) > 1e-3

    def test_classical_prefactor_equivalence(self):
        # the model-generic prefactor f'' h' / f'^2 reduces to
        # beta / (1 + beta |grad u|^2)^{3/2} for the square-root model
        from bifield.constitutive import electrostatic_e

        src = offset_pair()
        beta = 1.0
        params = ModelParams.classical(beta)
        for x in [np.array([0.3, 0.5, -0.2]), np.array([-0.8, 0.1, 0.4])]:
            g = potential_gradient(src, x)
            e_vec = electrostatic_e(params, g)
            a = float(e_vec @ e_vec)
            fp = params.f_prime(0.5 * a)
            fpp = params.f_double_prime(0.5 * a)
            generic = fpp / (fp * (fpp * a + fp)) / fp**2
            closed = beta / (1.0 + beta * float(g @ g)) ** 1.5
            assert abs(generic - closed) <= 1e-12 * closed

    def test_radial_source_gives_zero(self):
        src = gaussian_source(total=3.0, sigma=1.0)
        formula = curl_formula_continuous(src, ModelParams.classical(1.0), (0.8, 0.3, -0.2))
        assert np.max(np.abs(formula)) <= 1e-9

    def test_maxwell_limit_is_exactly_zero(self):
        src = offset_pair()
        formula = curl_formula_continuous(src, ModelParams.fractional_power(1.0, 1), (0.0, 0.8, 0.3))
        assert np.all(formula == 0.0)

    @pytest.mark.parametrize("params", [
        ModelParams.logarithmic(0.7),
        ModelParams.exponential(0.5),
        ModelParams.quadratic(0.3),
    ])
    def test_matches_fd_curl_across_models(self, params):
        src = offset_pair()

        def e_field(y):
            return continuous_fields(src, params, y).e

        pt = (0.0, 0.8, 0.3)
        fd = fd_curl(e_field, np.array(pt), richardson=True)
        formula = curl_formula_continuous(src, params, pt)
        assert np.max(np.abs(formula - fd)) <= 1e-4


class TestResidualSuite:
    GRID = [(x, y, z) for x in (-1.0, 0.0, 1.0) for y in (-0.5, 0.5) for z in (-0.4, 0.4)]

    def test_electric_source_satisfies_gauss_law(self):
        src = offset_pair()
        out = continuous_residual_suite(src, ModelParams.classical(1.0), self.GRID)
        assert out["n_points"] == len(self.GRID)
        assert out["max_rho_e"] > 0.1
        assert out["max_residual_e"] <= 1e-3 * out["max_rho_e"]
        assert out["max_residual_m"] == 0.0

    def test_dyonic_source_satisfies_both_laws(self):
        e_src = gaussian_source(total=2.0, sigma=1.0, center=(-0.5, 0.0, 0.0))
        m_src = gaussian_source(total=1.5, sigma=1.2, center=(0.5, 0.2, 0.0), magnetic=True)
        dy = merge_sources(e_src, m_src)
        out = continuous_residual_suite(dy, ModelParams.logarithmic(0.5, kappa=0.5), self.GRID[:6])
        assert out["max_residual_e"] <= 1e-3 * out["max_rho_e"]
        assert out["max_residual_m"] <= 1e-3 * out["max_rho_m"]


class TestGriddedSource:
    @staticmethod
    def write_lattice(tmp_path, fmt="binary", n=41, lo=-4.0, sp=0.2):
        base = gaussian_source(total=1.0, sigma=1.0)
        ax = lo + sp * np.arange(n)
        X, Y, Z = np.meshgrid(ax, ax, ax, indexing="ij")
        vals = base.rho_e(np.stack([X, Y, Z], axis=-1))
        meta = {"dims": [n, n, n], "spacing": [sp, sp, sp],
                "origin": [lo, lo, lo], "format": fmt}
        if fmt == "binary":
            path = tmp_path / "rho.dat"
            vals.astype("<f8").tofile(path)
        else:
            path = tmp_path / "rho.csv"
            np.savetxt(path, vals.ravel()[:, None], delimiter=",")
        (tmp_path / (path.name + ".json")).write_text(json.dumps(meta))
        return path, vals

    def test_binary_round_trip(self, tmp_path):
        path, vals = self.write_lattice(tmp_path, "binary")
        src = gridded_source(path)
        assert abs(src.total_q - 1.0) <= 1e-3
        # trilinear interpolation is exact on lattice nodes; this pins the
        # byte order and the z-fastest layout
        node = np.array([-4.0 + 10 * 0.2, -4.0 + 3 * 0.2, -4.0 + 30 * 0.2])
        assert float(src.rho_e(node)) == vals[10, 3, 30]
        assert float(src.rho_e(np.array([9.0, 0.0, 0.0]))) == 0.0

    def test_csv_matches_binary(self, tmp_path):
        p_bin, _ = self.write_lattice(tmp_path, "binary")
        p_csv, _ = self.write_lattice(tmp_path, "csv")
        s_bin = gridded_source(p_bin)
        s_csv = gridded_source(p_csv)
        pt = np.array([0.37, -0.81, 0.13])
        assert abs(float(s_bin.rho_e(pt)) - float(s_csv.rho_e(pt))) <= 1e-12

    def test_potential_against_closed_form(self, tmp_path):
        path, _ = self.write_lattice(tmp_path, "binary")
        src = gridded_source(path)
        quad = QuadratureSpec(rel_tol=1e-4)
        u = newton_potential(src, (1.0, 0.0, 0.0), quad)
        exact = gaussian_potential(1.0, 1.0, 1.0)
        # budget set by the trilinear sampling error of the lattice itself
        assert abs(u - exact) <= 1e-2 * abs(exact)

    def test_sidecar_errors(self, tmp_path):
        path, vals = self.write_lattice(tmp_path, "binary")
        with pytest.raises(ConfigError):
            gridded_source(path, tmp_path / "missing.json")
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"dims": [3, 3, 3]}))
        with pytest.raises(ConfigError):
            gridded_source(path, bad)
        bad.write_text(json.dumps({"dims": [2, 2, 2], "spacing": [0.1, 0.1, 0.1],
                                   "origin": [0, 0, 0], "format": "binary"}))
        with pytest.raises(ConfigError):
            gridded_source(path, bad)  # size mismatch
        bad.write_text(json.dumps({"dims": [41, 41, 41], "spacing": [0.2, 0.2, 0.2],
                                   "origin": [-4, -4, -4], "format": "parquet"}))
        with pytest.raises(ConfigError):
            gridded_source(path, bad)
