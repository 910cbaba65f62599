#!/usr/bin/env python3
"""Littlewood-Paley blocks, Morrey and Fourier-Besov-Morrey norms"""

import math

import numpy as np
import pytest
import scipy.integrate
from hypothesis import given, settings, strategies as st
from pydantic import ValidationError

from core.grid import SpectralField4, make_grid, random_band_limited
from core.spaces import (ANNULUS_INNER, ANNULUS_OUTER, InadmissibleIndicesError, NormParams,
                         admissible_case, bernstein_ratio, block_norms, build_lp_partition,
                         chemin_lerner_norm, critical_regularity, dilate_field, discrete_gaussian, embedding_ratio,
                         fbm_norm, hoelder_ratio, make_homogeneous_data, morrey_norm, norm_record,
                         random_solenoidal_field, sobolev_norm, young_ratio)


@pytest.fixture(scope='module')
def grid16():
    return make_grid(16, 2.0 * np.pi)


@pytest.fixture(scope='module')
def partition16(grid16):
    return build_lp_partition(grid16)


class TestPartition:
    @pytest.mark.parametrize("n, length", [(16, 2.0 * np.pi), (32, 2.0 * np.pi), (16, 4.0 * np.pi)])
    def test_partition_of_unity(self, n, length):
        partition = build_lp_partition(make_grid(n, length))
        assert partition.unity_residual() <= 1e-12

    def test_distant_blocks_do_not_overlap(self, partition16):
        assert partition16.overlap_residual() == 0.0

    def test_blocks_live_in_their_annulus(self, partition16):
        radius = partition16.grid.magnitude
        for j in partition16.js:
            support = partition16.block(int(j)) > 0.0
            assert np.all(radius[support] >= ANNULUS_INNER * 2.0 ** j)
            assert np.all(radius[support] <= ANNULUS_OUTER * 2.0 ** j)

    def test_unit_wavenumber_block_membership(self, partition16):
        """A plane wave at |ξ| = 1 only meets the blocks whose annulus contains 1"""
        grid = partition16.grid
        unit = (grid.index_vectors[0] == 1) & (grid.index_vectors[1] == 0) & (grid.index_vectors[2] == 0)
        nonzero = [int(j) for j in partition16.js if partition16.block(int(j))[unit][0] > 0.0]
        assert nonzero == [-1, 0]
        assert set(nonzero) <= {-2, -1, 0, 1}

    def test_resolved_blocks_fit_the_dealias_sphere(self, partition16):
        for j in partition16.resolved_js():
            assert ANNULUS_OUTER * 2.0 ** j <= partition16.grid.dealias_radius

    def test_block_outside_range(self, partition16):
        with pytest.raises(ValueError, match="outside resolved range"):
            partition16.block(partition16.j_max + 1)


class TestAdmissibility:
    def test_case_i(self):
        assert admissible_case(1.0, NormParams(s=critical_regularity(1.0, 2.0, 0.0), q=2.0)) == 'i'

    def test_case_ii(self):
        """α = 5/2 − 3/(2q) with μ = 0 and q ≤ r ≤ 2"""
        params = NormParams(s=critical_regularity(1.75, 2.0, 0.0), q=2.0, mu=0.0, r=2.0)
        assert admissible_case(1.75, params) == 'ii'

    def test_case_iii(self):
        params = NormParams(s=critical_regularity(0.5, 1.0, 0.0), q=1.0, r=1.0)
        assert admissible_case(0.5, params) == 'iii'

    def test_rejection_names_every_case(self):
        params = NormParams(s=0.0, q=2.0, r=math.inf)
        with pytest.raises(InadmissibleIndicesError, match=r"case \(i\)") as excinfo:
            admissible_case(2.5, params)
        assert "case (ii)" in str(excinfo.value)
        assert "case (iii)" in str(excinfo.value)

    def test_infinite_q_is_rejected(self):
        with pytest.raises(ValidationError, match="must be finite"):
            NormParams(s=0.0, q=math.inf)

    def test_mu_range(self):
        with pytest.raises(ValidationError):
            NormParams(s=0.0, q=2.0, mu=3.0)


class TestMorrey:
    def test_mu_zero_is_the_lattice_lq_norm(self, grid16):
        values = random_band_limited(grid16, 4, 3, components=1)[0]
        expected = (np.sum(np.abs(values) ** 3) * grid16.cell_volume) ** (1.0 / 3.0)
        assert morrey_norm(values, 3.0, 0.0, grid16) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("length, expected", [(2.0 * np.pi, 1.0), (4.0 * np.pi, 0.5)])
    def test_single_sample_is_weighted_at_the_smallest_ball(self, length, expected):
        grid = make_grid(8, length)
        values = np.zeros(grid.shape)
        values[1, 2, 0] = 1.0
        assert morrey_norm(values, 2.0, 1.0, grid) == pytest.approx(expected, rel=1e-12)

    @settings(max_examples=10, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 31 - 1),
           scale=st.floats(min_value=-5.0, max_value=5.0).filter(lambda x: abs(x) > 1e-3))
    def test_norm_axioms(self, seed, scale):
        grid = make_grid(8, 2.0 * np.pi)
        f = random_band_limited(grid, 2, seed, components=1)[0]
        g = random_band_limited(grid, 2, seed + 1, components=1)[0]
        q, mu = 2.0, 1.5
        nf, ng = morrey_norm(f, q, mu, grid), morrey_norm(g, q, mu, grid)
        assert morrey_norm(scale * f, q, mu, grid) == pytest.approx(abs(scale) * nf, rel=1e-12)
        assert morrey_norm(f + g, q, mu, grid) <= (nf + ng) * (1.0 + 1e-12)

    @pytest.mark.parametrize("q, mu", [(0.5, 0.0), (2.0, 3.0), (math.inf, 0.0)])
    def test_invalid_indices(self, grid16, q, mu):
        with pytest.raises(ValueError):
            morrey_norm(np.ones(grid16.shape), q, mu, grid16)


class TestFourierBesovMorrey:
    def test_single_block_field(self, grid16, partition16):
        """A field carried by one block has norm 2^{js} times that block's Morrey norm"""
        j = 0
        block = partition16.block(j)
        only = block * (partition16.block(-1) == 0.0) * (partition16.block(1) == 0.0)
        coeffs = np.zeros((4, 16, 16, 16), dtype=complex)
        coeffs[3] = only
        field = SpectralField4(grid=grid16, coeffs=coeffs)
        params = NormParams(s=0.7, q=1.0)
        expected = 2.0 ** (j * 0.7) * morrey_norm(block * only, 1.0, 0.0, grid16)
        assert fbm_norm(field, params, partition16) == pytest.approx(expected, rel=1e-12)

    def test_critical_scaling_is_exact(self):
        """f(x) -> 2^{2α−1}f(2x) keeps the critical norm fixed"""
        alpha = 1.0
        coarse = random_solenoidal_field(make_grid(16, 2.0 * np.pi), 4, 17)
        fine = dilate_field(coarse, 2.0 * alpha - 1.0)
        params = NormParams(s=critical_regularity(alpha, 1.0, 0.0), q=1.0, mu=0.0)
        before = fbm_norm(coarse, params, build_lp_partition(coarse.grid))
        after = fbm_norm(fine, params, build_lp_partition(fine.grid))
        assert abs(after / before - 1.0) <= 1e-8

    def test_embedding_constant_is_resolution_stable(self):
        source = NormParams(s=-0.5, q=2.0, mu=0.0, r=2.0)
        target = NormParams(s=-2.0, q=1.0, mu=0.0, r=math.inf)
        ratios = []
        for n in (16, 32):
            grid = make_grid(n, 2.0 * np.pi)
            field = random_solenoidal_field(grid, 4, 23)
            ratios.append(embedding_ratio(field, source, target, build_lp_partition(grid)))
        assert abs(ratios[1] / ratios[0] - 1.0) <= 1e-10

    def test_embedding_rejects_mismatched_indices(self, grid16, partition16):
        field = random_solenoidal_field(grid16, 2, 1)
        with pytest.raises(ValueError, match="embedding needs"):
            embedding_ratio(field, NormParams(s=0.0, q=2.0), NormParams(s=0.0, q=1.0), partition16)

    def test_grid_mismatch(self, partition16):
        field = random_solenoidal_field(make_grid(32, 2.0 * np.pi), 2, 1)
        with pytest.raises(ValueError, match="different grids"):
            fbm_norm(field, NormParams(s=0.0, q=2.0), partition16)

    def test_norm_record(self, partition16):
        record = norm_record('fbm', NormParams(s=0.5, q=2.0), 1.25, partition16)
        assert record['record_type'] == 'norm'

        assert record['r'] == 'inf'
        assert record['j_range'] == [partition16.j_min, partition16.j_max]
        assert record['value'] == 1.25

    @pytest.mark.parametrize("mu", [0.0, 1.0])
    def test_stacked_scalar_blocks(self, grid16, partition16, mu):
        """Scalar samples stacked over time are read per slice, not as vector components"""
        samples = random_band_limited(grid16, 3, 41, components=4)
        stacked = block_norms(samples, 2.0, mu, partition16, components=None)
        assert stacked.shape == (4, len(partition16.js))
        for t in range(4):
            single = block_norms(samples[t], 2.0, mu, partition16, components=None)
            assert np.allclose(stacked[t], single, rtol=1e-12, atol=0.0)
            coeffs = np.zeros((4,) + grid16.shape, dtype=complex)
            coeffs[3] = samples[t]
            assert np.allclose(block_norms(coeffs, 2.0, mu, partition16), single, rtol=1e-12, atol=0.0)
        vector = block_norms(samples, 2.0, mu, partition16)
        assert vector.shape == (len(partition16.js),)
        assert not np.allclose(vector, stacked[0])

    def test_component_count_is_checked(self, grid16, partition16):
        samples = random_band_limited(grid16, 3, 41, components=3)
        with pytest.raises(ValueError, match="expected 4 components"):
            block_norms(samples, 2.0, 0.0, partition16)
        with pytest.raises(ValueError, match="axes"):
            block_norms(samples[0], 2.0, 0.0, partition16)



class TestCheminLerner:
    def test_constant_trajectory(self, grid16, partition16):
        field = random_solenoidal_field(grid16, 3, 5)
        times = np.linspace(0.0, 2.0, 5)
        trajectory = [field] * len(times)
        sup = NormParams(s=0.5, q=2.0, p=math.inf)
        integral = NormParams(s=0.5, q=2.0, p=1.0)
        reference = fbm_norm(field, sup, partition16)
        assert chemin_lerner_norm(trajectory, sup, partition16, times) == pytest.approx(reference, rel=1e-12)
        assert chemin_lerner_norm(trajectory, integral, partition16, times) == pytest.approx(2.0 * reference,
                                                                                             rel=1e-12)

    def test_time_integral_before_the_sum(self, grid16, partition16):
        """For r = 1 the block-wise time integral is at most the time integral of the norm"""
        times = np.array([0.0, 0.5, 1.5])
        fields = [random_solenoidal_field(grid16, 4, seed) for seed in (31, 32, 33)]
        params = NormParams(s=0.0, q=2.0, r=1.0, p=1.0)
        per_time = [fbm_norm(f, params, partition16) for f in fields]
        brute = float(scipy.integrate.trapezoid(per_time, x=times))
        assert chemin_lerner_norm(fields, params, partition16, times) <= brute * (1.0 + 1e-12)

    def test_other_time_exponents(self, grid16, partition16):
        field = random_solenoidal_field(grid16, 3, 5)
        with pytest.raises(ValueError, match="must be 1 or inf"):
            chemin_lerner_norm([field, field], NormParams(s=0.0, q=2.0, p=2.0), partition16, [0.0, 1.0])

    def test_empty_trajectory(self, partition16):
        with pytest.raises(ValueError, match="empty trajectory"):
            chemin_lerner_norm([], NormParams(s=0.0, q=2.0), partition16)


class TestHomogeneousData:
    def test_degree_must_match(self, grid16):
        params = NormParams(s=critical_regularity(1.0, 2.0, 0.0), q=2.0)
        with pytest.raises(ValueError, match="incompatible degree"):
            make_homogeneous_data(0.0, params, grid16)

    def test_divergence_free_and_stable(self):
        alpha, q, mu = 1.0, 2.0, 1.0
        params = NormParams(s=critical_regularity(alpha, q, mu), q=q, mu=mu)
        degree = params.s - 3.0 + (3.0 - mu) / q
        norms = []
        for n in (16, 32):
            grid = make_grid(n, 2.0 * np.pi)
            partition = build_lp_partition(grid)
            field = make_homogeneous_data(degree, params, grid, partition, band=(partition.j_min, 0))
            assert field.divergence_residual() <= 1e-12
            norms.append(fbm_norm(field, params, partition))
        assert math.isfinite(norms[0]) and norms[0] > 0.0
        assert abs(norms[1] / norms[0] - 1.0) <= 0.10

    def test_l2_norm_grows_with_resolution(self):
        """Coefficients decaying like |ξ|^{-1/2} are not square summable as the cutoff follows the grid"""
        params = NormParams(s=-2.5, q=1.0)
        degree = params.s
        energies = []
        for n in (16, 64):
            grid = make_grid(n, 2.0 * np.pi)
            energies.append(sobolev_norm(make_homogeneous_data(degree, params, grid)))
        assert energies[1] >= 2.0 * energies[0]


class TestLemmaRatios:
    def test_hoelder(self, grid16):
        f = random_band_limited(grid16, 4, 1, components=1)[0]
        g = random_band_limited(grid16, 4, 2, components=1)[0]
        assert hoelder_ratio(f, g, 2.0, 0.0, 2.0, 0.0, grid16) <= 1.0 + 1e-12
        assert hoelder_ratio(f, g, 2.0, 1.0, 2.0, 1.0, grid16) <= 1.0 + 1e-12

    def test_young(self, grid16):
        kernel = discrete_gaussian(1.0, 3, grid16)
        values = random_band_limited(grid16, 4, 3, components=1)[0]
        assert young_ratio(kernel, values, 2.0, 0.0, grid16) <= 1.0 + 1e-12

    def test_young_needs_odd_kernel(self, grid16):
        with pytest.raises(ValueError, match="odd size"):
            young_ratio(np.ones((2, 2, 2)), np.ones(grid16.shape), 2.0, 0.0, grid16)

    def test_bernstein_ratio_is_bounded(self, grid16, partition16):
        values = partition16.block(1) * random_band_limited(grid16, 5, 4, components=1)[0]
        ratio = bernstein_ratio(values, 1, (1, 0, 0), 2.0, 0.0, 2.0, 0.0, grid16)
        assert 0.0 < ratio <= ANNULUS_OUTER
