#!/usr/bin/env python3
"""Propagators, the nonlinear term, Picard iteration and SF4 archives"""

import math

import numpy as np
import pytest
import scipy.integrate
from pydantic import ValidationError

import core.symbols
from core.archive import decode_snapshot, encode_snapshot, load_archive, write_archive
from core.grid import SpectralField4, direct_convolution, make_grid
from core.spaces import NormParams, build_lp_partition, critical_regularity, random_solenoidal_field
from core.symbols import PhysParams, helmholtz_project, semigroup_symbol
from core.solver import (BoussinesqPropagator, PicardDivergenceError, SolutionNorm, StokesCoriolisPropagator,
                         Trajectory, apply_semigroup, duhamel_bilinear, free_evolution, integrate_exponential,
                         nonlinear_term, picard_solve, rescale_variables, step_exponential, step_sizes,
                         time_grid, unrescale_variables, zeta)


def make_params(omega=1.5, brunt=1.0, alpha=1.0, nu=1.0):
    return PhysParams(nu=nu, kappa=nu, gravity=1.0, omega=omega, brunt=brunt, alpha=alpha)


def critical_norm(alpha=1.0, q=2.0, mu=0.0):
    return NormParams(s=critical_regularity(alpha, q, mu), q=q, mu=mu)


class TestPropagator:
    @pytest.mark.parametrize("convention", ['corrected', 'literal'])
    def test_lattice_symbol_matches_pointwise_symbol(self, convention):
        grid = make_grid(8, 2.0 * np.pi)
        params = make_params(omega=-0.8, brunt=1.3, alpha=0.75)
        propagator = BoussinesqPropagator(grid, params, convention)
        xi = np.moveaxis(grid.wavenumbers, 0, -1)[grid.magnitude > 0.0]
        expected = semigroup_symbol(xi, 0.3, params, convention)
        assert np.max(np.abs(propagator.symbol(0.3)[grid.magnitude > 0.0] - expected)) <= 1e-14

    def test_literal_entries_are_logged(self, monkeypatch):
        events = []
        monkeypatch.setattr(core.symbols, 'log_event', lambda logger, level, message, **kw: events.append(level))
        BoussinesqPropagator(make_grid(8, 2.0 * np.pi), make_params(), 'literal')
        BoussinesqPropagator(make_grid(8, 2.0 * np.pi), make_params())
        assert events == ['WARN', 'DEBUG']


    def test_semigroup_law_on_fields(self):
        grid = make_grid(16, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        v0 = random_solenoidal_field(grid, 4, 3)
        once = propagator.apply(v0.coeffs, 0.5)
        twice = propagator.apply(propagator.apply(v0.coeffs, 0.2), 0.3)
        assert np.max(np.abs(once - twice)) <= 1e-11 * v0.max_magnitude()

    def test_free_evolution_stays_solenoidal_and_real(self):
        grid = make_grid(16, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        y = free_evolution(random_solenoidal_field(grid, 4, 5), time_grid(1.0, 8), propagator)
        assert y.divergence_residual() <= 1e-10
        assert y.conjugate_asymmetry() <= 1e-12

    def test_integral_of_the_semigroup(self):
        """Exact ∫₀ᵗ S agrees with a fine trapezoid sum of S"""
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params(alpha=0.75))
        v0 = random_solenoidal_field(grid, 2, 6).coeffs
        times = np.linspace(0.0, 0.7, 2001)
        samples = np.stack([propagator.apply(v0, t) for t in times])
        trapezoid = scipy.integrate.trapezoid(samples, x=times, axis=0)
        assert np.max(np.abs(propagator.integrate(v0, 0.7) - trapezoid)) <= 1e-6

    def test_stokes_coriolis_keeps_the_fourth_component_decaying(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = StokesCoriolisPropagator(grid, omega=2.0, nu=0.5, alpha=1.0)
        coeffs = np.zeros((4,) + grid.shape, dtype=complex)
        coeffs[3, 1, 0, 0] = 1.0
        out = propagator.apply(coeffs, 1.0)
        assert out[3, 1, 0, 0] == pytest.approx(math.exp(-0.5))
        assert np.all(out[:3] == 0.0)

    def test_negative_time(self):
        propagator = BoussinesqPropagator(make_grid(8, 2.0 * np.pi), make_params())
        with pytest.raises(ValueError, match="nonnegative"):
            propagator.symbol(-1.0)

    def test_apply_semigroup_advances_the_clock(self):
        grid = make_grid(8, 2.0 * np.pi)
        params = make_params()
        v0 = random_solenoidal_field(grid, 2, 11)
        v = apply_semigroup(v0, 0.4, params)
        assert v.time == pytest.approx(0.4)
        assert np.array_equal(v.coeffs, BoussinesqPropagator(grid, params).apply(v0.coeffs, 0.4))

    def test_apply_semigroup_zero_field(self):
        grid = make_grid(8, 2.0 * np.pi)
        zero = SpectralField4(grid=grid, coeffs=np.zeros((4,) + grid.shape), real_valued=True)
        assert np.all(apply_semigroup(zero, 1.0, make_params()).coeffs == 0.0)


class TestNonlinearTerm:
    @pytest.mark.parametrize("n, band", [(8, 2), (16, 4)])
    def test_matches_direct_convolution(self, n, band):
        """−P̃(iξ_k Σ v_k w) against the explicit convolution sum"""
        grid = make_grid(n, 2.0 * np.pi)
        v = random_solenoidal_field(grid, band, 11)
        w = random_solenoidal_field(grid, band, 12)
        tensor = np.stack([direct_convolution(v.coeffs[k], w.coeffs, grid) for k in range(3)])
        flux = 1j * np.einsum('kxyz,kmxyz->mxyz', grid.wavenumbers, tensor)
        expected = np.where(grid.dealias_mask, -helmholtz_project(flux, grid.wavenumbers), 0.0)
        assert np.max(np.abs(nonlinear_term(v, w).coeffs - expected)) <= 1e-10


    def test_output_is_solenoidal_and_dealiased(self):
        grid = make_grid(16, 2.0 * np.pi)
        v = random_solenoidal_field(grid, 5, 13)
        out = nonlinear_term(v, v)
        assert out.real_valued
        assert out.divergence_residual() <= 1e-12
        assert np.all(out.coeffs[:, ~grid.dealias_mask] == 0.0)

    def test_vanishes_for_zero_velocity(self):
        grid = make_grid(8, 2.0 * np.pi)
        coeffs = np.array(random_solenoidal_field(grid, 2, 14).coeffs)
        coeffs[:3] = 0.0
        buoyancy = SpectralField4(grid=grid, coeffs=coeffs, real_valued=True)
        assert np.all(nonlinear_term(buoyancy, buoyancy).coeffs == 0.0)


class TestDuhamel:
    def test_bilinear_is_linear_in_each_slot(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        times = time_grid(0.5, 4)
        v = free_evolution(random_solenoidal_field(grid, 2, 16), times, propagator)
        w = free_evolution(random_solenoidal_field(grid, 2, 17), times, propagator)
        plain = duhamel_bilinear(v, w, propagator).coeffs
        scale = np.max(np.abs(plain))
        for a in (2.5, -0.4):
            left = duhamel_bilinear(v.scaled(a), w, propagator).coeffs
            right = duhamel_bilinear(v, w.scaled(a), propagator).coeffs
            assert np.max(np.abs(left - a * plain)) <= 1e-12 * abs(a) * scale
            assert np.max(np.abs(right - a * plain)) <= 1e-12 * abs(a) * scale


    def test_bilinear_of_zero(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        zero = free_evolution(SpectralField4(grid=grid, coeffs=np.zeros((4,) + grid.shape)),
                              time_grid(0.5, 4), propagator)
        assert np.all(duhamel_bilinear(zero, zero, propagator).coeffs == 0.0)

    def test_zeta_of_constant_forcing(self):
        """Trapezoid Duhamel recursion converges to the exact integral at second order"""
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        f = random_solenoidal_field(grid, 2, 15)
        exact = propagator.integrate(f.coeffs, 1.0)
        errors = []
        for steps in (32, 64):
            times = time_grid(1.0, steps)
            forcing = Trajectory(grid=grid, times=times, coeffs=np.stack([f.coeffs] * len(times)))
            errors.append(np.max(np.abs(zeta(forcing, propagator).coeffs[-1] - exact)))
        assert math.log2(errors[0] / errors[1]) >= 1.8

    def test_step_sizes_of_a_uniform_grid(self):
        steps = step_sizes(time_grid(1.0, 7))
        assert len(set(steps.tolist())) == 1

    def test_time_grid_validation(self):
        with pytest.raises(ValueError):
            time_grid(0.0, 4)
        with pytest.raises(ValueError):
            time_grid(1.0, 0)


class TestPicard:
    def solve(self, n=16, amplitude=0.002, steps=32, max_iter=60):
        grid = make_grid(n, 2.0 * np.pi)
        params = make_params()
        propagator = BoussinesqPropagator(grid, params)
        v0 = random_solenoidal_field(grid, 2, 20240517, amplitude=amplitude)
        solution, report = picard_solve(v0, 1.0, steps, 1e-9, max_iter, propagator, critical_norm(),
                                        params.alpha, nu=params.nu)
        return v0, propagator, solution, report

    def test_small_data_contract(self):
        _, _, solution, report = self.solve()
        assert report.converged
        assert report.smallness < 1.0
        assert report.bound_holds()
        assert all(ratio <= 0.5 for ratio in report.ratios)
        assert report.residual <= 1e-8 * report.y_norm
        assert solution.divergence_residual() <= 1e-10
        assert math.isfinite(report.tail_bound)

    @pytest.mark.slow
    def test_small_data_contract_on_32(self):
        _, _, _, report = self.solve(n=32, steps=33)
        assert report.converged
        assert report.bound_holds()
        assert all(ratio <= 0.5 for ratio in report.ratios)

    def test_exponential_stepper_agrees(self):
        v0, propagator, solution, report = self.solve()
        stepped = integrate_exponential(v0, solution.times, propagator, method='heun')
        norm = SolutionNorm(critical_norm(), 1.0, build_lp_partition(v0.grid))
        assert norm(solution - stepped) <= 1e-3 * report.y_norm

    def test_calibrated_amplitude_is_well_inside_the_ball(self):
        _, _, solution, report = self.solve(amplitude=0.0005)
        assert report.converged
        assert report.smallness <= 0.5

    def test_solution_stays_real(self):
        _, _, solution, _ = self.solve()
        assert solution.real_valued
        assert solution.conjugate_asymmetry() <= 1e-12

    def test_rejects_data_with_divergence(self):
        grid = make_grid(8, 2.0 * np.pi)
        coeffs = np.zeros((4,) + grid.shape, dtype=complex)
        coeffs[0, 1, 0, 0] = coeffs[0, -1, 0, 0] = 1e-3
        compressible = SpectralField4(grid=grid, coeffs=coeffs, real_valued=True)
        with pytest.raises(ValueError, match="not divergence-free"):
            picard_solve(compressible, 1.0, 4, 1e-9, 10, BoussinesqPropagator(grid, make_params()),
                         critical_norm(), 1.0)


    def test_linear_step_is_exact(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        v0 = random_solenoidal_field(grid, 2, 12)
        for method in ('euler', 'heun'):
            v = step_exponential(v0, 0.25, propagator, method, nonlinearity_scale=0.0)
            assert np.max(np.abs(v.coeffs - propagator.apply(v0.coeffs, 0.25))) <= 1e-15
            assert v.time == pytest.approx(0.25)

    def test_heun_is_second_order(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        v0 = random_solenoidal_field(grid, 2, 13, amplitude=0.05)
        reference = integrate_exponential(v0, time_grid(1.0, 256), propagator, method='heun').coeffs[-1]
        errors = []
        for steps in (4, 8):
            stepped = integrate_exponential(v0, time_grid(1.0, steps), propagator, method='heun')
            errors.append(np.max(np.abs(stepped.coeffs[-1] - reference)))
        assert errors[1] <= 0.35 * errors[0]

    def test_exponential_euler_is_first_order(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        v0 = random_solenoidal_field(grid, 2, 13, amplitude=0.05)
        reference = integrate_exponential(v0, time_grid(1.0, 512), propagator, method='heun').coeffs[-1]
        errors = []
        for steps in (16, 32):
            stepped = integrate_exponential(v0, time_grid(1.0, steps), propagator, method='euler')
            errors.append(np.max(np.abs(stepped.coeffs[-1] - reference)))
        assert math.log2(errors[0] / errors[1]) >= 0.95


    def test_unknown_step_method(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        with pytest.raises(ValueError, match="unknown step method"):
            step_exponential(random_solenoidal_field(grid, 2, 1), 0.1, propagator, 'rk4')

    def test_zero_data(self):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        zero = SpectralField4(grid=grid, coeffs=np.zeros((4,) + grid.shape), real_valued=True)
        _, report = picard_solve(zero, 1.0, 4, 1e-9, 10, propagator, critical_norm(), 1.0)
        assert report.converged and report.final_norm == 0.0

    def test_large_data_diverge(self):
        with pytest.raises(PicardDivergenceError) as excinfo:
            self.solve(n=8, amplitude=1e4, steps=8, max_iter=20)
        report = excinfo.value.report
        assert not report.converged
        assert report.smallness > 1.0


class TestVariables:
    def test_temperature_rescaling(self):
        grid = make_grid(8, 2.0 * np.pi)
        params = PhysParams(nu=1.0, kappa=1.0, gravity=4.0, omega=1.0, brunt=0.5, alpha=1.0)
        u0 = np.zeros((3,) + grid.shape, dtype=complex)
        theta0 = np.zeros(grid.shape, dtype=complex)
        theta0[1, 0, 0] = theta0[-1, 0, 0] = 0.25
        v0 = rescale_variables(u0, theta0, params, grid)
        assert v0.coeffs[3, 1, 0, 0] == pytest.approx(1.0)
        _, theta = unrescale_variables(v0, params)
        assert np.max(np.abs(theta - theta0)) <= 1e-15

    def test_shapes_are_checked(self):
        grid = make_grid(8, 2.0 * np.pi)
        with pytest.raises(ValueError, match="velocity must be"):
            rescale_variables(np.zeros((4,) + grid.shape), np.zeros(grid.shape), make_params(), grid)

    def test_compressible_velocity_is_rejected(self):
        grid = make_grid(8, 2.0 * np.pi)
        u0 = np.zeros((3,) + grid.shape, dtype=complex)
        u0[2, 0, 0, 1] = u0[2, 0, 0, -1] = 0.5
        with pytest.raises(ValueError, match="not divergence-free"):
            rescale_variables(u0, np.zeros(grid.shape), make_params(), grid)



class TestTrajectory:
    def test_times_must_start_at_zero(self):
        grid = make_grid(8, 2.0 * np.pi)
        with pytest.raises(ValidationError, match="start at 0"):
            Trajectory(grid=grid, times=np.array([0.5, 1.0]), coeffs=np.zeros((2, 4) + grid.shape))

    def test_coefficient_layout(self):
        grid = make_grid(8, 2.0 * np.pi)
        with pytest.raises(ValidationError, match="do not match"):
            Trajectory(grid=grid, times=np.array([0.0, 1.0]), coeffs=np.zeros((3, 4) + grid.shape))


class TestArchive:
    def test_snapshot_bytes(self):
        grid = make_grid(8, 4.0 * np.pi)
        base = random_solenoidal_field(grid, 2, 30)
        field = base.with_coeffs(base.coeffs, time=0.25)
        decoded = decode_snapshot(encode_snapshot(field))
        assert decoded.grid.same_lattice(grid)
        assert decoded.time == 0.25 and decoded.real_valued
        assert np.array_equal(decoded.coeffs, field.coeffs)

    @pytest.mark.parametrize("mutate, message", [
        (lambda data: data[:10], "too short"),
        (lambda data: b'XXXX' + data[4:], "bad SF4 magic"),
        (lambda data: data[:-16], "expected"),
    ])
    def test_corrupt_snapshots(self, mutate, message):
        field = random_solenoidal_field(make_grid(8, 2.0 * np.pi), 2, 31)
        with pytest.raises(ValueError, match=message):
            decode_snapshot(mutate(encode_snapshot(field)))

    def test_archive_directory(self, tmp_path):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        y = free_evolution(random_solenoidal_field(grid, 2, 32), time_grid(0.5, 4), propagator)
        write_archive(y, str(tmp_path), {'run_id': 'unit', 'final_norm': math.inf})
        loaded, manifest = load_archive(str(tmp_path))
        assert manifest['run_id'] == 'unit'
        assert manifest['final_norm'] == 'inf'
        assert np.array_equal(loaded.times, y.times)
        assert np.array_equal(loaded.coeffs, y.coeffs)

    def test_archive_without_snapshots(self, tmp_path):
        grid = make_grid(8, 2.0 * np.pi)
        propagator = BoussinesqPropagator(grid, make_params())
        y = free_evolution(random_solenoidal_field(grid, 2, 33), time_grid(0.5, 2), propagator)
        write_archive(y, str(tmp_path), {}, write_snapshots=False)
        with pytest.raises(ValueError, match="without snapshot files"):
            load_archive(str(tmp_path))
