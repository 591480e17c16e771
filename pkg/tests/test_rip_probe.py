import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from offgrid_doa import ArrayGeometry, build_grid, normalize_columns
from offgrid_doa.rip_probe import (CSV_COLUMNS, SQRT2M1, BlockSparseSpec, ContractViolation, beta_sample,
                                   estimate_probabilities, probe_dictionary, random_block_sparse, write_csv)

specs = st.builds(
    lambda b, L, frac, gen, seed: (BlockSparseSpec(3 if gen == "proportional" else b, L,
                                                   max(1, int(frac * L)), gen), seed),
    st.integers(1, 3), st.integers(1, 60), st.floats(0, 1), st.sampled_from(["gaussian", "proportional"]),
    st.integers(0, 2 ** 32 - 1))


@pytest.fixture(scope="module")
def ula8():
    return ArrayGeometry.ula(8)


# -- random vectors ---------------------------------------------------------------------

@given(specs)
def test_vectors_unit_norm_with_exact_support(case):
    spec, seed = case
    c = random_block_sparse(spec, seed)
    assert c.shape == (spec.block_length * spec.num_blocks,)
    assert np.linalg.norm(c) == pytest.approx(1.0, abs=1e-12)
    blocks = c.reshape(spec.block_length, spec.num_blocks)
    assert np.count_nonzero(np.any(blocks != 0, axis=0)) == spec.sparsity


def test_full_sparsity_is_dense():
    c = random_block_sparse(BlockSparseSpec(1, 20, 20), 3)
    assert np.all(c != 0)


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 10))
def test_proportional_blocks(seed, k):
    spec = BlockSparseSpec(3, 40, k, "proportional", 0.01)
    blocks = random_block_sparse(spec, seed).reshape(3, 40)
    active = np.flatnonzero(blocks[0] != 0)
    x1, x2, x3 = blocks[:, active].real
    assert np.all(x1 > 0)
    np.testing.assert_allclose(x2 ** 2 / (x1 * x3), 1.0, rtol=1e-9)
    assert np.all(np.abs(x2 / x1) <= 0.005 + 1e-15)
    assert np.all(blocks.imag == 0)


def test_proportional_random_phase_keeps_ratios():
    spec = BlockSparseSpec(3, 40, 5, "proportional", 0.01, amplitude="random_phase")
    blocks = random_block_sparse(spec, 11).reshape(3, 40)
    active = np.flatnonzero(blocks[0] != 0)
    x1, x2, x3 = blocks[:, active]
    np.testing.assert_allclose(x2 ** 2, x1 * x3, atol=1e-15)
    assert np.any(np.abs(np.angle(x1)) > 1e-3)


@pytest.mark.parametrize("kwargs", [dict(block_length=4, num_blocks=5, sparsity=1),
                                    dict(block_length=1, num_blocks=5, sparsity=6),
                                    dict(block_length=1, num_blocks=5, sparsity=0),
                                    dict(block_length=2, num_blocks=5, sparsity=1, generator="proportional"),
                                    dict(block_length=1, num_blocks=5, sparsity=1, generator="uniform"),
                                    dict(block_length=3, num_blocks=5, sparsity=1, amplitude="complex")])
def test_invalid_specs(kwargs):
    with pytest.raises(ValueError):
        BlockSparseSpec(**kwargs)


# -- beta --------------------------------------------------------------------------------

def test_beta_of_identity_is_zero(rng):
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    assert beta_sample(np.eye(6), c / np.linalg.norm(c)) == pytest.approx(0.0, abs=1e-15)


def test_beta_of_duplicated_column():
    D = np.zeros((3, 4))
    D[0, 0] = D[0, 1] = 1.0
    D[1, 2] = D[2, 3] = 1.0
    c = np.array([1, 1, 0, 0]) / np.sqrt(2)
    assert beta_sample(D, c) == pytest.approx(1.0)


def test_beta_matches_direct_computation(ula8):
    # [DERIVED] straight-line recomputation of | ||D c||^2 - 1 |
    grid = build_grid(0.01)
    Dn = probe_dictionary(ula8, grid, "taylor2")
    for seed in range(5):
        c = random_block_sparse(BlockSparseSpec(3, grid.size, 4), seed)
        v = np.zeros(Dn.shape[0], dtype=complex)
        for j in np.flatnonzero(c):
            v += Dn[:, j] * c[j]
        expected = abs(sum(abs(e) ** 2 for e in v) - 1.0)
        assert beta_sample(Dn, c) == pytest.approx(expected, abs=1e-12)


def test_beta_rejects_non_unit():
    with pytest.raises(ContractViolation):
        beta_sample(np.eye(2), np.array([1.0, 1.0]))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0, 2 * np.pi))
def test_beta_phase_invariant(seed, phi):
    grid = build_grid(0.05)
    Dn = probe_dictionary(ArrayGeometry.ula(8), grid, "taylor2")
    c = random_block_sparse(BlockSparseSpec(3, grid.size, 3), seed)
    assert beta_sample(Dn, np.exp(1j * phi) * c) == pytest.approx(beta_sample(Dn, c), abs=1e-12)


def test_probe_dictionary_shapes(ula8):
    grid = build_grid(0.01)
    assert probe_dictionary(ula8, grid, "lasso").shape == (8, 200)
    assert probe_dictionary(ula8, grid, "neighbor").shape == (8, 400)
    assert probe_dictionary(ula8, grid, "taylor1").shape == (8, 400)
    Dn = probe_dictionary(ula8, grid, "taylor2")
    assert Dn.shape == (8, 600)
    np.testing.assert_allclose(np.linalg.norm(Dn, axis=0), 1.0, atol=1e-12)
    with pytest.raises(ValueError):
        probe_dictionary(ula8, grid, "music")


# -- probabilities ------------------------------------------------------------------------

def test_probabilities_nested_and_reproducible(ula8):
    grid = build_grid(0.01)
    a = estimate_probabilities(ula8, grid, 3, [2, 4, 6], 300, "gaussian", seed=5)
    b = estimate_probabilities(ula8, grid, 3, [2, 4, 6], 300, "gaussian", seed=5)
    for x, y in zip(a, b):
        assert x.prob_lt_1 == y.prob_lt_1 and x.prob_lt_sqrt2m1 == y.prob_lt_sqrt2m1
        assert x.prob_lt_sqrt2m1 <= x.prob_lt_1
        assert 0 <= x.prob_lt_sqrt2m1 and x.prob_lt_1 <= 1
        assert x.beta_summary["min"] <= x.beta_summary["median"] <= x.beta_summary["max"]


def test_independent_of_worker_count(ula8):
    grid = build_grid(0.02)
    a = estimate_probabilities(ula8, grid, 2, [2, 4], 600, seed=9, workers=1)
    b = estimate_probabilities(ula8, grid, 2, [2, 4], 600, seed=9, workers=2)
    assert [(e.prob_lt_1, e.prob_lt_sqrt2m1) for e in a] == [(e.prob_lt_1, e.prob_lt_sqrt2m1) for e in b]


def test_probability_matches_recount(ula8):
    # [DERIVED] regenerate the same substreams by hand and count
    grid = build_grid(0.02)
    est = estimate_probabilities(ula8, grid, 1, [3], 400, seed=2)[0]
    Dn = normalize_columns(probe_dictionary(ula8, grid, "lasso"))[0]
    betas = []
    for chunk, n in enumerate((250, 150)):
        rng = np.random.default_rng(np.random.SeedSequence(2, spawn_key=(3, chunk)))
        spec = BlockSparseSpec(1, grid.size, 3)
        betas += [beta_sample(Dn, random_block_sparse(spec, rng)) for _ in range(n)]
    betas = np.array(betas)
    assert est.prob_lt_1 == np.mean(betas < 1)
    assert est.prob_lt_sqrt2m1 == np.mean(betas < SQRT2M1)


def test_non_increasing_in_sparsity(ula8):
    # averaged over seeds, with three standard errors of slack per step
    grid = build_grid(0.01)
    runs = [estimate_probabilities(ula8, grid, 3, range(2, 11, 2), 500, "gaussian", seed=s) for s in range(4)]
    mean = np.mean([[e.prob_lt_1 for e in run] for run in runs], axis=0)
    n = 4 * 500
    se = np.sqrt(mean * (1 - mean) / n)
    for k in range(len(mean) - 1):
        assert mean[k + 1] <= mean[k] + 3 * np.hypot(se[k], se[k + 1])


def test_rejects_bad_arguments(ula8):
    grid = build_grid(0.05)
    with pytest.raises(ValueError):
        estimate_probabilities(ula8, grid, 3, [2], 0)
    with pytest.raises(ValueError):
        estimate_probabilities(ula8, grid, 3, [2], 10, structure="lasso")


def test_csv_output(tmp_path, ula8):
    grid = build_grid(0.05)
    est = estimate_probabilities(ula8, grid, 3, [2, 4], 50, "proportional", seed=1)
    path = tmp_path / "rip.csv"
    write_csv(est, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert [int(r["two_K"]) for r in rows] == [2, 4]
    assert float(rows[1]["prob_lt_1"]) == est[1].prob_lt_1
    assert rows[0]["generator"] == "proportional" and rows[0]["b"] == "3"
