import numpy as np
import pytest

import graphunfold as gu
from conftest import toy_tensor
from oracles import (
    naive_latent_pair_table,
    naive_population_tensor,
    naive_unfolding,
    pack,
)
from graphunfold.errors import SizeBudgetError
from graphunfold.linalg import khatri_rao, kronecker


class TestPopulationTensor:
    def test_matches_naive_double_loop(self, toy):
        spec, latent, cpts, t = toy
        naive = naive_population_tensor(latent.probabilities, cpts, 5, 2, 2, 2)
        assert t.data.size == 32
        assert np.max(np.abs(t.data - naive)) <= 1e-14

    def test_naive_agreement_for_dependent_latents(self):
        spec, latent, cpts, t = toy_tensor("general-rbm", seed=5)
        naive = naive_population_tensor(latent.probabilities, cpts, 5, 2, 2, 2)
        assert np.max(np.abs(t.data - naive)) <= 1e-14

    def test_single_variable_is_matrix_vector_product(self):
        graph = gu.BipartiteGraph(np.array([[1]]))
        table = np.array([[0.9, 0.25], [0.1, 0.75]])
        spec = gu.ModelSpec(
            graph=graph,
            cards=gu.CardinalitySpec(2, 2),
            family=gu.ExplicitCpts(tables={0: table}),
            latent=np.array([0.3, 0.7]),
        )
        latent, cpts = gu.compile_model(spec)
        t = gu.population_tensor(latent, cpts)
        assert np.allclose(t.data, table @ np.array([0.3, 0.7]), atol=1e-15)

    def test_uniform_model_gives_flat_tensor(self):
        graph = gu.BipartiteGraph(np.ones((3, 1), dtype=int))
        table = np.full((2, 2), 0.5)
        spec = gu.ModelSpec(
            graph=graph,
            cards=gu.CardinalitySpec(2, 2),
            family=gu.ExplicitCpts(tables={j: table for j in range(3)}),
            latent=np.array([0.5, 0.5]),
        )
        latent, cpts = gu.compile_model(spec)
        t = gu.population_tensor(latent, cpts)
        assert np.allclose(t.data, 1.0 / 8.0, atol=1e-15)

    def test_mass_and_sign_invariants(self, toy):
        _, _, _, t = toy
        assert (t.data >= 0).all()
        assert abs(t.data.sum() - 1.0) <= 1e-10

    def test_deterministic_across_runs(self, toy):
        spec, latent, cpts, t = toy
        again = gu.population_tensor(latent, cpts)
        assert np.array_equal(t.data, again.data)

    def test_cell_budget_enforced(self, toy):
        _, latent, cpts, _ = toy
        with pytest.raises(SizeBudgetError):
            gu.population_tensor(latent, cpts, max_cells=16)
        with pytest.raises(SizeBudgetError):
            gu.population_tensor(latent, cpts, max_latent_configs=2)


class TestMarginalAndUnfold:
    def test_marginal_of_everything_is_identity(self, toy):
        _, _, _, t = toy
        m = gu.marginal(t, range(5))
        assert np.array_equal(m.data, t.data)

    def test_marginal_sums_out_last_mode(self):
        rng = np.random.default_rng(0)
        data = rng.dirichlet(np.ones(8))
        t = gu.PopTensor(num_modes=3, levels=2, data=data)
        m = gu.marginal(t, [0, 1])
        arr = data.reshape(2, 2, 2)
        for a in range(2):
            for b in range(2):
                assert m.data[pack((a, b), 2)] == pytest.approx(arr[a, b, :].sum())

    def test_marginal_tower_property(self, toy):
        _, _, _, t = toy
        outer = gu.marginal(t, [0, 1, 3])
        inner = gu.marginal(outer, [0, 2])  # positions of {0, 3} inside {0, 1, 3}
        direct = gu.marginal(t, [0, 3])
        assert np.max(np.abs(inner.data - direct.data)) <= 1e-15

    def test_unfold_index_arithmetic_on_cube(self):
        rng = np.random.default_rng(1)
        data = rng.dirichlet(np.ones(8))
        t = gu.PopTensor(num_modes=3, levels=2, data=data)
        u = gu.unfold(t, [0], [1, 2])
        arr = data.reshape(2, 2, 2)
        for i in range(2):
            for j in range(2):
                for k in range(2):
                    assert u.matrix[i, 2 * j + k] == arr[i, j, k]

    def test_unfold_transpose_symmetry(self, toy):
        _, _, _, t = toy
        a = gu.unfold(t, [0, 1], [2, 3, 4]).matrix
        b = gu.unfold(t, [2, 3, 4], [0, 1]).matrix
        assert np.array_equal(a, b.T)

    def test_unfold_matches_naive_summation(self, toy):
        _, _, _, t = toy
        for rows, cols in ([(0, 1), (2, 3, 4)], [(1, 3), (0, 4)], [(2,), (0, 1)]):
            u = gu.unfold(t, rows, cols).matrix
            naive = naive_unfolding(t.data, 5, 2, rows, cols)
            assert np.max(np.abs(u - naive)) <= 1e-15

    def test_full_unfoldings_share_unit_mass(self, toy):
        _, _, _, t = toy
        for rows in ([0], [0, 1], [1, 2, 4]):
            cols = [j for j in range(5) if j not in rows]
            u = gu.unfold(t, rows, cols).matrix
            assert (u >= 0).all()
            assert u.sum() == pytest.approx(1.0, abs=1e-12)

    def test_unfold_rejects_overlap_and_empty(self, toy):
        _, _, _, t = toy
        with pytest.raises(ValueError):
            gu.unfold(t, [0, 1], [1, 2])
        with pytest.raises(ValueError):
            gu.unfold(t, [], [1, 2])
        with pytest.raises(ValueError):
            gu.marginal(t, [])


class TestLatentJointTable:
    def test_identical_sets_give_diagonal(self, toy):
        _, latent, _, _ = toy
        table = gu.latent_joint_table(latent, [0, 1], [0, 1]).matrix
        assert np.array_equal(np.diag(np.diag(table)), table)
        assert np.allclose(np.diag(table), latent.probabilities)

    def test_overlap_zero_pattern(self, toy):
        _, latent, _, _ = toy
        table = gu.latent_joint_table(latent, [0], [0, 1]).matrix
        # entry (b, (a0, a1)) vanishes unless b == a0
        for b in range(2):
            for a0 in range(2):
                for a1 in range(2):
                    val = table[b, pack((a0, a1), 2)]
                    if b != a0:
                        assert val == 0.0
                    else:
                        assert val == latent.probabilities[pack((a0, a1), 2)]
        assert table[0] @ table[1] == 0.0  # orthogonal rows
        assert np.linalg.matrix_rank(table) == 2

    def test_disjoint_independent_sets_factorize(self, toy):
        spec, latent, _, _ = toy
        table = gu.latent_joint_table(latent, [0], [1]).matrix
        outer = np.outer(spec.latent[0], spec.latent[1])
        assert np.max(np.abs(table - outer)) <= 1e-15

    def test_matches_naive_for_dependent_latents(self):
        _, latent, _, _ = toy_tensor("general-rbm", seed=2)
        for s1, s2 in ([(0,), (0, 1)], [(0, 1), (1,)], [(0,), (1,)]):
            got = gu.latent_joint_table(latent, s1, s2).matrix
            want = naive_latent_pair_table(latent.probabilities, 2, 2, s1, s2)
            assert np.max(np.abs(got - want)) <= 1e-15


class TestConditionalMatrixIdentities:
    def test_disjoint_singleton_parents_kronecker(self):
        spec, latent, cpts, _ = toy_tensor("all-effect", seed=3)
        got = gu.conditional_matrix(cpts, [0, 2], [0, 1], 2)
        want = kronecker(cpts[0].table, cpts[2].table)
        assert np.max(np.abs(got - want)) <= 1e-15

    def test_redundant_latents_tile_columns(self):
        spec, latent, cpts, _ = toy_tensor("noisy-or", seed=3)
        # extra latent sorted before the parent: plain Kronecker with a row of ones
        got = gu.conditional_matrix(cpts, [2], [0, 1], 2)
        want = kronecker(np.ones((1, 2)), cpts[2].table)
        assert np.max(np.abs(got - want)) <= 1e-15
        # extra latent sorted after the parent: per-column tiling instead
        got2 = gu.conditional_matrix(cpts, [0], [0, 1], 2)
        want2 = np.repeat(cpts[0].table, 2, axis=1)
        assert np.max(np.abs(got2 - want2)) <= 1e-15

    def test_khatri_rao_split_over_shared_latents(self):
        spec, latent, cpts, _ = toy_tensor("general-rbm", seed=4)
        got = gu.conditional_matrix(cpts, [0, 1, 2, 3, 4], [0, 1], 2)
        left = gu.conditional_matrix(cpts, [0, 1], [0, 1], 2)
        right = gu.conditional_matrix(cpts, [2, 3, 4], [0, 1], 2)
        assert np.max(np.abs(got - khatri_rao(left, right))) <= 1e-15

    def test_requires_parents_covered(self, toy):
        _, _, cpts, _ = toy
        with pytest.raises(ValueError):
            gu.conditional_matrix(cpts, [4], [0], 2)

    @pytest.mark.parametrize("family", ["noisy-or", "all-effect", "general-rbm"])
    def test_pair_block_factorization(self, family):
        # the pure-pair unfolding factors through the shared latent variable
        for seed in range(3):
            spec, latent, cpts, t = toy_tensor(family, seed)
            left = gu.conditional_matrix(cpts, [0, 1], [0], 2)
            mid = gu.latent_joint_table(latent, [0], [0, 1]).matrix
            right = gu.conditional_matrix(cpts, [2, 3, 4], [0, 1], 2)
            rebuilt = left @ mid @ right.T
            direct = gu.unfold(t, [0, 1], [2, 3, 4]).matrix
            assert np.max(np.abs(rebuilt - direct)) <= 1e-12


class TestTensorDumps:
    @pytest.mark.parametrize("fmt", ["csv", "binary"])
    def test_roundtrip_is_exact(self, toy, tmp_path, fmt):
        _, _, _, t = toy
        path = tmp_path / f"t.{fmt}"
        gu.dump_tensor(t, path, fmt=fmt)
        back = gu.load_tensor(path)
        assert back.num_modes == t.num_modes and back.levels == t.levels
        assert np.array_equal(back.data, t.data)

    def test_formats_decode_identically(self, toy, tmp_path):
        _, _, _, t = toy
        gu.dump_tensor(t, tmp_path / "a", fmt="csv")
        gu.dump_tensor(t, tmp_path / "b", fmt="binary")
        a = gu.load_tensor(tmp_path / "a")
        b = gu.load_tensor(tmp_path / "b")
        assert np.array_equal(a.data, b.data)

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "bad"
        path.write_text("NOT A TENSOR\n1.0\n")
        with pytest.raises(ValueError):
            gu.load_tensor(path)

    def test_wrong_entry_count_rejected(self, tmp_path):
        path = tmp_path / "short"
        path.write_text("PTENSOR v1 2 2\n0.25\n0.25\n0.5\n")
        with pytest.raises(ValueError):
            gu.load_tensor(path)
