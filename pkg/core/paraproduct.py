# paraproduct.py
# Bony decomposition fg = T_f(g) + T_g(f) + R(f, g) on lattice coefficients

import numpy as np
from pydantic import BaseModel, ConfigDict

from .grid import GridMismatchError, dealiased_product
from .logging import setup_logger, log_event

spaces_logger = setup_logger('spaces', 'norms.log')

# Paraproduct blocks S_{k−1}f·Δ_k g stay inside Δ_j for |j−k| ≤ 4
PARAPRODUCT_REACH = 5


class BonyTriple(BaseModel):
    """Low-high, high-low and comparable-frequency parts of one product."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    t_fg: np.ndarray
    t_gf: np.ndarray
    remainder: np.ndarray

    def reconstruction(self):
        return self.t_fg + self.t_gf + self.remainder

    def relative_error(self, product):
        scale = max(float(np.max(np.abs(product))), np.finfo(float).tiny)
        return float(np.max(np.abs(self.reconstruction() - product))) / scale


def _check_scalars(partition, *arrays):
    for values in arrays:
        if np.shape(values) != partition.grid.shape:
            raise GridMismatchError(
                f"scalar field of shape {np.shape(values)} does not live on {partition.grid.describe()}")


def paraproduct(f, g, partition):
    """T_f(g) = Σ_j S_{j−1}f·Δ_j g"""
    grid = partition.grid
    total = np.zeros(grid.shape, dtype=np.complex128)
    for j in partition.js:
        high = partition.project(g, j)
        if not np.any(high):
            continue
        total += dealiased_product(partition.low_pass(f, j - 1), high, grid)
    return total


def remainder(f, g, partition):
    """R(f, g) = Σ_j Δ_j f·Δ̃_j g, plus the product of the two means"""
    grid = partition.grid
    total = dealiased_product(partition.mean(f), partition.mean(g), grid)
    for j in partition.js:
        block = partition.project(f, j)
        if not np.any(block):
            continue
        total += dealiased_product(block, partition.neighbourhood(g, j), grid)
    return total


def bony_decompose(f, g, partition):
    """Split the dealiased product of two scalar coefficient arrays"""
    _check_scalars(partition, f, g)
    f = np.asarray(f, dtype=np.complex128)
    g = np.asarray(g, dtype=np.complex128)
    return BonyTriple(
        t_fg=paraproduct(f, g, partition),
        t_gf=paraproduct(g, f, partition),
        remainder=remainder(f, g, partition),
    )


def block_orthogonality_check(f, partition, g=None):
    """
    Measure support leakage of the dyadic blocks.

    block_overlap is max |Δ_jΔ_k f| over |j−k| ≥ 2 and paraproduct_leakage is
    max |Δ_j[S_{k−1}f·Δ_k g]| over |j−k| ≥ 5 (g defaults to f).
    """
    _check_scalars(partition, f)
    f = np.asarray(f, dtype=np.complex128)
    g = f if g is None else np.asarray(g, dtype=np.complex128)
    _check_scalars(partition, g)
    js = [int(j) for j in partition.js]

    overlap = 0.0
    for j in js:
        block = partition.project(f, j)
        for k in js:
            if abs(j - k) >= 2:
                overlap = max(overlap, float(np.max(np.abs(partition.project(block, k)))))

    leakage = 0.0
    pairs = 0
    for k in js:
        product = dealiased_product(partition.low_pass(f, k - 1), partition.project(g, k), partition.grid)
        for j in js:
            if abs(j - k) >= PARAPRODUCT_REACH:
                leakage = max(leakage, float(np.max(np.abs(partition.project(product, j)))))
                pairs += 1

    report = {
        'block_overlap': overlap,
        'paraproduct_leakage': leakage,
        'leakage_pairs': pairs,
        'j_range': [partition.j_min, partition.j_max],
    }
    log_event(spaces_logger, 'DEBUG', 'Block orthogonality measured', **report)
    return report
