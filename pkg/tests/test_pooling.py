"""Packing/disentangling, sep-join baseline and ratio-weighted pooling."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from elyte.data import ElectrolyteComponent, Formulation
from elyte.encoder import EncoderConfig, TokenEmbeddings, encode, init_encoder_params
from elyte.pooling import cido_pack, cido_unpack, pool, pool_backward, sep_join
from elyte.tokenizer import BOS_ID, EOS_ID, MAX_SEQ_LEN, SEP_ID, build_vocab

from conftest import random_formulation_embeddings


def formulation(fid, smiles_ratios):
    return Formulation(
        id=fid,
        components=tuple(ElectrolyteComponent(s, r) for s, r in smiles_ratios),
        target_ce=0.5,
        target_lce=0.3010299956639812,
    )


VOCAB = build_vocab(["CCO", "CC", "c1ccccc1", "[Li+]", "ClCCl", "N#N"])


class TestCidoPack:
    def test_one_formulation_three_components(self):
        f = formulation("f1", [("CCO", 1.0), ("CC", 2.0), ("[Li+]", 1.0)])
        packed = cido_pack([f], VOCAB)
        assert len(packed.sequences) == 3
        assert len(packed.segments) == 3
        assert packed.num_formulations == 1
        assert [s.component_index for s in packed.segments] == [0, 1, 2]
        assert sum(s.ratio for s in packed.segments) == pytest.approx(1.0, abs=1e-12)

    def test_two_formulations(self):
        fs = [
            formulation("f1", [("CCO", 1.0), ("CC", 1.0)]),
            formulation("f2", [("CCO", 1.0), ("CC", 1.0), ("[Li+]", 1.0)]),
        ]
        packed = cido_pack(fs, VOCAB)
        assert len(packed.sequences) == 5
        assert [s.formulation_index for s in packed.segments] == [0, 0, 1, 1, 1]

    def test_tokenize_failure_names_formulation(self):
        f = formulation("bad-one", [("CXO", 1.0)])
        with pytest.raises(ValueError, match="bad-one"):
            cido_pack([f], VOCAB)

    def test_pack_unpack_round_trip_order(self):
        fs = [
            formulation("f1", [("CCO", 1.0), ("CC", 3.0)]),
            formulation("f2", [("[Li+]", 2.0), ("ClCCl", 2.0)]),
        ]
        packed = cido_pack(fs, VOCAB)
        fake = [
            TokenEmbeddings(np.full((len(seq), 2), float(i)), np.ones(len(seq), bool))
            for i, seq in enumerate(packed.sequences)
        ]
        groups = cido_unpack(fake, packed)
        assert len(groups) == 2
        assert [emb.values[0, 0] for emb, _ in groups[0]] == [0.0, 1.0]
        assert [emb.values[0, 0] for emb, _ in groups[1]] == [2.0, 3.0]
        assert [r for _, r in groups[0]] == [0.25, 0.75]

    def test_unpack_length_mismatch(self):
        f = formulation("f1", [("CCO", 1.0)])
        packed = cido_pack([f], VOCAB)
        with pytest.raises(ValueError, match="1 rows"):
            cido_unpack([], packed)


class TestSepJoin:
    def test_single_component_no_sep(self):
        f = formulation("f1", [("CCO", 1.0)])
        seq = sep_join(f, VOCAB)
        assert seq.ids[0] == BOS_ID and seq.ids[-1] == EOS_ID
        assert SEP_ID not in seq.ids

    def test_two_components_arithmetic(self):
        f = formulation("f1", [("CCO", 1.0), ("CCO", 1.0)])
        seq = sep_join(f, VOCAB)
        # bos + 3 + sep + 3 + eos
        assert len(seq) == 9
        assert seq.ids[4] == SEP_ID

    def test_overlength_truncated(self):
        f = formulation("f1", [("C" * 150, 1.0), ("C" * 150, 1.0)])
        seq = sep_join(f, VOCAB)
        assert len(seq) == MAX_SEQ_LEN
        assert seq.truncated


class TestPool:
    def test_single_component_is_token_mean(self):
        rng = np.random.default_rng(0)
        emb = TokenEmbeddings(rng.normal(size=(7, 5)), np.ones(7, bool))
        np.testing.assert_array_equal(pool([(emb, 1.0)]), emb.values.mean(axis=0))

    def test_duplicated_molecule_half_ratios(self):
        rng = np.random.default_rng(1)
        emb = TokenEmbeddings(rng.normal(size=(4, 3)), np.ones(4, bool))
        single = pool([(emb, 1.0)])
        double = pool([(emb, 0.5), (emb, 0.5)])
        np.testing.assert_allclose(double, single, atol=1e-15)

    def test_hand_example(self):
        mol_a = TokenEmbeddings(np.array([[1.0], [3.0]]), np.ones(2, bool))
        mol_b = TokenEmbeddings(np.array([[5.0]]), np.ones(1, bool))
        out = pool([(mol_a, 1.0), (mol_b, 3.0)])
        assert out[0] == 4.25  # 0.25 * 2 + 0.75 * 5, exact in float64

    def test_masked_rows_ignored(self):
        values = np.array([[1.0, 1.0], [9.0, 9.0], [3.0, 3.0]])
        emb = TokenEmbeddings(values, np.array([True, False, True]))
        np.testing.assert_array_equal(pool([(emb, 1.0)]), [2.0, 2.0])

    def test_permutation_invariance(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            per_mol = random_formulation_embeddings(rng)
            forward = pool(per_mol)
            backward = pool(list(reversed(per_mol)))
            np.testing.assert_allclose(forward, backward, atol=1e-12, rtol=0)

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        per_mol = random_formulation_embeddings(rng)
        scaled = [(emb, ratio * 37.5) for emb, ratio in per_mol]
        np.testing.assert_allclose(pool(per_mol), pool(scaled), atol=1e-12, rtol=0)

    def test_convex_hull(self):
        rng = np.random.default_rng(4)
        per_mol = random_formulation_embeddings(rng, width=3)
        means = np.stack([emb.values[emb.valid_mask].mean(axis=0) for emb, _ in per_mol])
        pooled = pool(per_mol)
        assert np.all(pooled >= means.min(axis=0) - 1e-12)
        assert np.all(pooled <= means.max(axis=0) + 1e-12)

    def test_zero_valid_tokens_rejected(self):
        emb = TokenEmbeddings(np.zeros((2, 2)), np.zeros(2, bool))
        with pytest.raises(ValueError, match="zero valid"):
            pool([(emb, 1.0)])

    def test_zero_ratios_rejected(self):
        emb = TokenEmbeddings(np.zeros((1, 2)), np.ones(1, bool))
        with pytest.raises(ValueError):
            pool([(emb, 0.0)])

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            pool([])

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        per_mol = random_formulation_embeddings(rng, width=4, n_mols=2)
        upstream = rng.normal(size=4)
        grads = pool_backward(per_mol, upstream)
        h = 1e-6
        for (emb, _), grad in zip(per_mol, grads):
            flat_index = int(rng.integers(0, emb.values.size))
            original = emb.values.flat[flat_index]
            emb.values.flat[flat_index] = original + h
            plus = float(pool(per_mol) @ upstream)
            emb.values.flat[flat_index] = original - h
            minus = float(pool(per_mol) @ upstream)
            emb.values.flat[flat_index] = original
            numeric = (plus - minus) / (2 * h)
            assert grad.flat[flat_index] == pytest.approx(numeric, rel=1e-6, abs=1e-9)


class TestCidoEquivalence:
    def test_pack_encode_unpack_equals_encode_alone(self, toy_dataset, toy_vocab):
        cfg = EncoderConfig(embed_dim=16, num_heads=2, num_layers=2)
        params = init_encoder_params(cfg, len(toy_vocab), seed=9)
        formulations = list(toy_dataset)[:8]
        packed = cido_pack(formulations, toy_vocab)
        groups = cido_unpack(encode(packed.sequences, cfg, params), packed)
        for f, group in zip(formulations, groups):
            single = cido_pack([f], toy_vocab)
            alone = encode(single.sequences, cfg, params)
            for (together, _), separate in zip(group, alone):
                np.testing.assert_allclose(
                    together.values, separate.values, atol=1e-10, rtol=0
                )
