import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cknlab.ckn_operators import BACKWARD, ScaleDiagnostics, scale_chain
from cknlab.inequality_lab import (
    InequalityConstants,
    PhiSamples,
    TestFunctionSpec,
    check_calderon_zygmund,
    check_holder,
    check_local_energy_312,
    check_poincare,
    check_proposition1,
    check_sobolev,
    energy_inequality_residual,
    exponent_key,
    fit_field_constants,
    intensity_integral,
    safe_ratio,
    smooth_step,
    verify_heat_kernel_bounds,
)
from cknlab.leray_solver import FluidParams, frozen_trajectory, simulate
from cknlab.presets import beltrami_shell2
from cknlab.torus_field import SCALAR, SpectralField, make_grid, power_law_spectrum, sample_random_field


def test_safe_ratio():
    assert safe_ratio(0.0, 0.0) == 0.0
    assert safe_ratio(3.0, 2.0) == 1.5
    with pytest.raises(ZeroDivisionError):
        safe_ratio(1.0, 0.0)


@pytest.mark.parametrize("x,key", [(10 / 3, "10/3"), (5 / 3, "5/3"), (2.0, "2"), (1.25, "5/4"), (math.pi, repr(math.pi))])
def test_exponent_key(x, key):
    assert exponent_key(x) == key


class TestConstants:
    def test_update_never_decreases(self):
        c = InequalityConstants()
        c.update("CS", "3", 0.5)
        c.update("CS", "3", 0.2)
        assert c.CS["3"] == 0.5

    def test_merge_superset(self):
        a = InequalityConstants(CS={"10/3": 0.1}, CL={"5/3": 2.0}, Ctilde=3.0)
        b = InequalityConstants(CS={"10/3": 0.05, "4": 1.0}, CL={"5/3": 2.5})
        m = a.merge(b)
        assert m.CS == {"10/3": 0.1, "4": 1.0} and m.CL["5/3"] == 2.5 and m.Ctilde == 3.0
        for t in ("CS", "CL"):
            for k, v in getattr(a, t).items():
                assert getattr(m, t)[k] >= v

    def test_prop1_constant(self):
        c = InequalityConstants(CS={"10/3": 0.2}, CL={"5/3": 1.5})
        assert c.Cprop1 == pytest.approx(0.5)
        with pytest.raises(KeyError):
            InequalityConstants(CS={"10/3": 0.2}).Cprop1

    def test_json_round_trip(self, tmp_path):
        c = InequalityConstants(CP={"1": 0.3}, CS={"10/3": 0.2}, CL={"5/3": 1.5}, Ctilde=7.0,
                                provenance={"label": "x"})
        path = tmp_path / "c.json"
        c.save(str(path))
        assert InequalityConstants.load(str(path)) == c
        with pytest.raises(ValueError):
            InequalityConstants.from_json(json.dumps({"CS": {}, "bogus": 1}))


class TestPoincare:
    def test_constant_gives_zero(self, grid16):
        f = SpectralField.zeros(grid16, SCALAR)
        assert check_poincare(f, 1.0, 1.0) == 0.0

    def test_constant_callable_gives_zero(self):
        g = make_grid(16, 1.0)
        assert check_poincare(lambda d: (3.0, [0.0, 0.0, 0.0]), 0.25, 1.2, grid=g) == 0.0

    def test_linear_function_resolution_stable(self):
        e = np.array([1.0, 2.0, -0.5]) / np.linalg.norm([1.0, 2.0, -0.5])

        def linear(d):
            return sum(e[i] * d[i] for i in range(3)), [np.full_like(d[0], e[i]) for i in range(3)]

        for a in (1.0, 1.25, 1.5):
            lo = check_poincare(linear, 0.25, a, (0.5, 0.5, 0.5), make_grid(64, 1.0))
            hi = check_poincare(linear, 0.25, a, (0.5, 0.5, 0.5), make_grid(128, 1.0))
            assert lo == pytest.approx(hi, rel=0.02)

    def test_ensemble_max_is_finite(self, grid16):
        ratios = []
        for seed in range(100):
            u = sample_random_field(grid16, power_law_spectrum(1.0, 5 / 3, 4), seed)
            f = SpectralField(grid16, u.coeffs[0].copy(), SCALAR)
            ratios.append(check_poincare(f, grid16.L / 4, 1.0, (1.0, 2.0, 3.0)))
        assert 0 < max(ratios) < math.inf

    @pytest.mark.parametrize("r,alpha", [(0.0, 1.0), (1.0, 0.9), (1.0, 1.6)])
    def test_rejects(self, grid16, r, alpha):
        with pytest.raises(ValueError):
            check_poincare(SpectralField.zeros(grid16, SCALAR), r, alpha)


class TestSobolev:
    def test_zero_field(self, grid16):
        assert check_sobolev(SpectralField.zeros(grid16), 1.0, 10 / 3) == 0.0

    def test_q_two_identity(self, random_field16):
        assert check_sobolev(random_field16, 1.3, 2.0, (1, 1, 1)) == pytest.approx(0.5, rel=1e-14)
        whole = random_field16.grid.L
        assert check_sobolev(random_field16, whole, 2.0, zero_average=True) == pytest.approx(1.0, rel=1e-14)

    def test_zero_average_drops_a_term(self, random_field16):
        L = random_field16.grid.L
        full = check_sobolev(random_field16, L, 10 / 3)
        dropped = check_sobolev(random_field16, L, 10 / 3, zero_average=True)
        assert dropped > full

    def test_rejects(self, random_field16):
        with pytest.raises(ValueError):
            check_sobolev(random_field16, 1.0, 7.0)
        with pytest.raises(ValueError):
            check_sobolev(random_field16, 1.0, 3.0, zero_average=True)


class TestCalderonZygmund:
    def test_zero(self, grid16):
        assert check_calderon_zygmund(SpectralField.zeros(grid16), 5 / 3) == 0.0

    @pytest.mark.parametrize("q", [1.5, 5 / 3, 2.0])
    def test_amplitude_homogeneity(self, random_field16, q):
        base = check_calderon_zygmund(random_field16, q)
        for c in (0.1, 10.0):
            scaled = random_field16.with_coeffs(c * random_field16.coeffs)
            assert check_calderon_zygmund(scaled, q) == pytest.approx(base, rel=1e-10)

    def test_beltrami_against_finer_grid(self):
        coarse = beltrami_shell2(make_grid(32, 2 * math.pi), 1.0, 5)
        fine = beltrami_shell2(make_grid(64, 2 * math.pi), 1.0, 5)
        for q in (1.5, 5 / 3, 2.0):
            assert check_calderon_zygmund(coarse, q) == pytest.approx(check_calderon_zygmund(fine, q), rel=1e-3)

    def test_rejects(self, random_field16):
        with pytest.raises(ValueError):
            check_calderon_zygmund(random_field16, 1.0)


class TestHolder:
    def test_cauchy_schwarz_equality(self, rng):
        f = rng.standard_normal(500)
        assert check_holder([f, f], [2, 2]) == pytest.approx(1.0, abs=1e-10)
        assert check_holder([f, 3.0 * f], [2, 2]) == pytest.approx(1.0, abs=1e-10)

    def test_orthogonal(self, grid16):
        x = grid16.coordinates[0] + np.zeros(grid16.real_shape)
        assert check_holder([np.sin(x), np.cos(x)], [2, 2]) < 1e-15

    @settings(max_examples=50, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_random_triples(self, seed):
        r = np.random.default_rng(seed)
        fs = [r.standard_normal(200) * r.uniform(0.1, 10) for _ in range(3)]
        assert check_holder(fs, [3, 3, 3]) <= 1 + 1e-10

    def test_large_exponent_does_not_overflow(self, rng):
        big = rng.standard_normal(50) * 1e3
        small = rng.uniform(0.5, 1.0, 50) * 1e-3
        p = 1.0 / (1.0 - 1.0 / 2000.0)
        assert 0 < check_holder([big, small], [2000.0, p]) <= 1 + 1e-10

    def test_rejects(self, rng):
        f = rng.standard_normal(10)
        with pytest.raises(ValueError):
            check_holder([f, f], [2, 3])
        with pytest.raises(ValueError):
            check_holder([f], [1.0])
        with pytest.raises(ValueError):
            check_holder([f, f], [2])


class TestSmoothStep:
    def test_ends_and_monotone(self):
        x = np.linspace(-0.5, 1.5, 401)
        psi, d1, _ = smooth_step(x)
        assert np.all(psi[x <= 0] == 0) and np.all(psi[x >= 1] == 1)
        assert np.all(np.diff(psi) >= 0) and np.all(d1 >= 0)

    def test_derivatives_by_finite_differences(self):
        x = np.linspace(0.05, 0.95, 19)
        h = 1e-5
        p, d1, d2 = smooth_step(x)
        pp, pm = smooth_step(x + h)[0], smooth_step(x - h)[0]
        assert np.allclose(d1, (pp - pm) / (2 * h), rtol=1e-6, atol=1e-8)
        assert np.allclose(d2, (pp - 2 * p + pm) / h**2, rtol=1e-3, atol=1e-4)


class TestHeatKernel:
    def test_spec_validation(self):
        with pytest.raises(ValueError):
            TestFunctionSpec((0, 0, 0), 1.0, 0.0, 1.0)
        with pytest.raises(ValueError):
            TestFunctionSpec((0, 0, 0), 1.0, 1.0, 1.0, kind="custom")
        phi = TestFunctionSpec((0, 0, 0), 3.0, 1.0, 2.0)
        assert phi.support == (2.5, 3.5)
        with pytest.raises(ValueError):
            phi.on_grid(make_grid(16, 2.0), 3.0)

    def test_derivatives_by_finite_differences(self):
        phi = TestFunctionSpec((0, 0, 0), 1.0, 0.8, 0.7)
        pts = [np.array([0.3, -0.2, 0.25]), np.array([0.05, 0.5, -0.3])]
        h = 1e-4
        for t in (0.9, 1.0 + 0.3 * 0.64 / 0.7):
            for x in pts:
                s = phi.samples(tuple(x), t)
                grad_fd = []
                lap_fd = 0.0
                for i in range(3):
                    e = np.zeros(3)
                    e[i] = h
                    fp = float(phi.samples(tuple(x + e), t).phi)
                    fm = float(phi.samples(tuple(x - e), t).phi)
                    grad_fd.append((fp - fm) / (2 * h))
                    lap_fd += (fp - 2 * float(s.phi) + fm) / h**2
                dt_fd = (float(phi.samples(tuple(x), t + h).phi) - float(phi.samples(tuple(x), t - h).phi)) / (2 * h)
                scale = abs(float(s.phi)) + 1e-3
                assert np.allclose(s.grad, grad_fd, rtol=1e-5, atol=1e-6 * scale)
                assert float(s.dt) == pytest.approx(dt_fd, rel=1e-5, abs=1e-6 * scale)
                assert float(s.lap) == pytest.approx(lap_fd, rel=1e-4, abs=1e-4 * scale)

    def test_bounds_identity_and_scale_stability(self):
        L = 2 * math.pi
        reps = [verify_heat_kernel_bounds(TestFunctionSpec((0, 0, 0), 1.0, r, 0.3)) for r in (L / 4, L / 8)]
        for rep in reps:
            assert rep.inner_identity_max <= 1e-10
            assert rep.min_phi_support > 0
            assert rep.passed
        assert reps[0].C == pytest.approx(reps[1].C, rel=0.10)

    def test_rejects_custom(self):
        spec = TestFunctionSpec((0, 0, 0), 1.0, 1.0, 1.0, kind="custom", custom=lambda d, t: None)
        with pytest.raises(ValueError):
            verify_heat_kernel_bounds(spec)


@pytest.fixture(scope="module")
def viscous_run():
    g = make_grid(16, 2 * math.pi)
    u0 = sample_random_field(g, power_law_spectrum(0.5, 5 / 3, 4), 7)
    return simulate(u0, 1.2, 0.01, FluidParams(1.0, g), 1)


class TestEnergyResidual:
    def test_custom_must_vanish_at_start(self, viscous_run):
        def one(disp, t):
            o, z = np.ones_like(disp[0]), np.zeros_like(disp[0])
            return PhiSamples(o, np.stack([z, z, z]), z, z, 1.0)

        phi = TestFunctionSpec((0, 0, 0), 0.5, 1.0, 1.0, kind="custom", custom=one)
        with pytest.raises(ValueError):
            energy_inequality_residual(viscous_run, phi, 1.0)

    def test_zero_test_function(self, viscous_run):
        def zero(disp, t):
            z = np.zeros_like(disp[0])
            return PhiSamples(z, np.stack([z, z, z]), z, z, 1.0)

        phi = TestFunctionSpec((0, 0, 0), 0.5, 1.0, 1.0, kind="custom", custom=zero)
        res = energy_inequality_residual(viscous_run, phi, 1.0)
        assert res.residual == 0.0 and res.lhs == 0.0

    def test_must_vanish_near_start(self, viscous_run):
        phi = TestFunctionSpec((0, 0, 0), 0.3, viscous_run.grid.L / 8, 1.0)
        with pytest.raises(ValueError):
            energy_inequality_residual(viscous_run, phi, 0.5)

    def test_s_outside_span(self, viscous_run):
        phi = TestFunctionSpec((0, 0, 0), 0.7, viscous_run.grid.L / 8, 1.0)
        with pytest.raises(ValueError):
            energy_inequality_residual(viscous_run, phi, 2.0)

    def test_random_run_direction_and_size(self, viscous_run):
        r = viscous_run.grid.L / 8
        t0 = r**2 + 0.05
        phi = TestFunctionSpec((1.0, 2.0, 3.0), t0, r, 1.0)
        for s in (t0 - 0.3, t0, t0 + 0.2, 1.2):
            res = energy_inequality_residual(viscous_run, phi, s)
            assert res.lhs > 0
            assert res.residual >= -1e-4 * res.lhs
            assert res.relative <= 1e-3

    def test_grid_method_is_consistent(self, viscous_run):
        r = viscous_run.grid.L / 8
        phi = TestFunctionSpec((1.0, 2.0, 3.0), r**2 + 0.05, r, 1.0)
        a = energy_inequality_residual(viscous_run, phi, 1.0)
        b = energy_inequality_residual(viscous_run, phi, 1.0, method="grid", oversample=2)
        assert b.terms["dissipation"] == pytest.approx(a.terms["dissipation"], rel=0.05)
        assert b.lhs == pytest.approx(a.lhs, rel=0.05)


class TestIntensityBound:
    def test_zero_field(self, grid16):
        tr = frozen_trajectory(SpectralField.zeros(grid16), 0.1, [0.0, 1.0])
        res = check_proposition1(tr, InequalityConstants(CS={"10/3": 0.1}, CL={"5/3": 1.0}))
        assert res.lhs == 0 and res.passed

    def test_missing_constants(self, beltrami_traj16):
        with pytest.raises(KeyError):
            check_proposition1(beltrami_traj16, InequalityConstants())

    def test_beltrami_closed_form_time_integral(self):
        g = make_grid(32, 2 * math.pi)
        nu, T = 0.1, 1.0
        u0 = beltrami_shell2(g, 1.0, 6)
        tr = simulate(u0, T, 0.01, FluidParams(nu, g), 1)
        rate = (10 / 3) * nu * 2.0  # |u|^{10/3} and |p|^{5/3} both decay like exp(-10/3 nu |k|^2 t)
        first = intensity_integral(frozen_trajectory(u0, nu, [0.0, 1.0]))
        expect = first * (1 - math.exp(-rate * T)) / rate
        assert intensity_integral(tr) == pytest.approx(expect, rel=1e-4)


class TestLocalEnergy:
    def test_zero(self):
        z = ScaleDiagnostics(1.0, 0, 0, 0, 0, 0, 0)
        res = check_local_energy_312(ScaleDiagnostics(0.5, 0, 0, 0, 0, 0, 0), z, 1.0)
        assert res.required_C == 0 and res.residual == 0

    def test_scale_mismatch(self):
        z = ScaleDiagnostics(1.0, 0, 0, 0, 0, 0, 0)
        with pytest.raises(ValueError):
            check_local_energy_312(z, z)

    def test_beltrami_within_random_ensemble_fit(self, viscous_run):
        def required(tr):
            out = []
            for x0 in [(0, 0, 0), (1, 2, 3), (3, 1, 5)]:
                ch = scale_chain(tr, x0, tr.span[1], -2, BACKWARD)
                out += [check_local_energy_312(h, f).required_C for f, h in zip(ch, ch[1:])]
            return out

        Ct = max(required(viscous_run))
        g = viscous_run.grid
        belt = simulate(beltrami_shell2(g, 0.5, 3), 1.2, 0.01, FluidParams(1.0, g), 4)
        reqs = required(belt)
        assert 0 < Ct < math.inf
        assert max(reqs) <= Ct
        half, full = ScaleDiagnostics(1, 0.1, 0.1, 0, 0, 0, 0), ScaleDiagnostics(2, 0, 0, 1, 1, 0, 0)
        assert check_local_energy_312(half, full, Ct).residual <= 0


def test_fit_field_constants_keys_and_monotone(grid16):
    fields = [sample_random_field(grid16, power_law_spectrum(1.0, 5 / 3, 4), s) for s in range(3)]
    a = fit_field_constants(fields[:2])
    b = fit_field_constants(fields)
    for key in ("2", "3", "10/3", "4", "10/3@ball"):
        assert 0 < a.CS[key] <= b.CS[key]
    for key in ("3/2", "5/3", "2"):
        assert 0 < a.CL[key] <= b.CL[key]
    for key in ("1", "5/4", "3/2"):
        assert 0 < a.CP[key] <= b.CP[key]
    assert b.provenance["fields"] == 3
