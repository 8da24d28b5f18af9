"""Tokenization: positional indices, cumulative features, vocabulary,
standardization, and model-sequence assembly."""

import math

import numpy as np
import pytest

from icuseq.cohort import LABEL_NAMES, GeneratorConfig, RawStay, generate_cohort, split_chronological
from icuseq.tokenizer import (
    FIRST_VAR_ID,
    N_TASKS,
    OOV_ID,
    STATIC_ID,
    TASK_IDS,
    EventToken,
    ExcludedStayError,
    assemble_model_sequence,
    build_vocabulary,
    cumulative_features,
    load_vocab,
    positional_indices,
    read_tokenized,
    save_vocab,
    static_vector,
    token_matrix,
    tokenize_stay,
    write_tokenized,
)


def mk_stay(events, stay_id=0, los=10.0, num=None, cat=None):
    return RawStay(stay_id=stay_id, patient_id=stay_id, admission_order=stay_id,
                   los_hours=los, static_categorical=cat or {}, static_numeric=num or {},
                   events=events, labels={k: False for k in LABEL_NAMES})


class TestPositionalIndices:
    def test_worked_example(self):
        assert positional_indices([0.1, 0.2, 0.2, 0.3, 0.3]) == [0, 1, 1, 2, 2]

    def test_empty(self):
        assert positional_indices([]) == []

    def test_unsorted_rejected(self):
        with pytest.raises(ValueError):
            positional_indices([0.2, 0.1])

    def test_matches_distinct_rank_oracle(self):
        rng = np.random.default_rng(0)
        grid = rng.uniform(0, 100, size=200)
        times = np.sort(rng.choice(grid, size=1000)).tolist()
        rank = {t: i for i, t in enumerate(sorted(set(times)))}
        assert positional_indices(times) == [rank[t] for t in times]

    def test_invariant_under_pattern_preserving_perturbation(self):
        rng = np.random.default_rng(1)
        times = np.sort(rng.choice([0.0, 0.5, 0.5, 1.0, 2.5, 2.5, 2.5, 7.0], size=40)).tolist()
        base = positional_indices(times)
        # remap distinct values onto new increasing values: pattern preserved
        distinct = sorted(set(times))
        new_vals = np.cumsum(rng.uniform(0.1, 3.0, size=len(distinct)))
        remap = dict(zip(distinct, new_vals))
        assert positional_indices([remap[t] for t in times]) == base
        # plain affine map too
        assert positional_indices([2.0 * t + 1.0 for t in times]) == base


class TestCumulativeFeatures:
    def test_empty_prior_fallback(self):
        np.testing.assert_array_equal(
            cumulative_features([], 2.0, 5.0),
            [5.0, 5.0, 0.0, 5.0, 5.0, 0.0, 5.0, 0.0])

    def test_two_priors_hand_case(self):
        got = cumulative_features([(1.0, 4.0), (2.0, 6.0)], 3.0, 99.0)
        np.testing.assert_array_equal(got, [5.0, 5.0, 2.0, 4.0, 6.0, 1.0, 4.0, 1.0])

    def test_prior_after_t_now_rejected(self):
        with pytest.raises(ValueError):
            cumulative_features([(5.0, 1.0)], 4.0, 0.0)

    def test_every_prefix_matches_scratch_recomputation(self):
        rng = np.random.default_rng(2)
        times = np.sort(rng.uniform(0, 48, size=50))
        vals = rng.normal(100, 15, size=50)
        series = list(zip(times.tolist(), vals.tolist()))
        for k in range(50):
            got = cumulative_features(series[:k], times[k], vals[k])
            expected = _scratch_features(series[:k], times[k], vals[k])
            np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)

    def test_population_std_single_prior_is_zero(self):
        got = cumulative_features([(1.0, 7.0)], 2.0, 0.0)
        assert got[5] == 0.0


def _scratch_features(prior, t_now, v_now):
    """Independent recomputation: fsum arithmetic and manual median."""
    if not prior:
        return [v_now, v_now, 0.0, v_now, v_now, 0.0, v_now, 0.0]
    vs = [v for _, v in prior]
    n = len(vs)
    mean = math.fsum(vs) / n
    srt = sorted(vs)
    median = srt[n // 2] if n % 2 else (srt[n // 2 - 1] + srt[n // 2]) / 2.0
    var = math.fsum((v - mean) ** 2 for v in vs) / n
    return [mean, median, float(n), min(vs), max(vs), math.sqrt(var), vs[0], t_now - prior[-1][0]]


@pytest.fixture(scope="module")
def micro_vocab():
    dev = [
        mk_stay([(1.0, "hr", 60.0), (2.0, "hr", 70.0)], stay_id=1),
        mk_stay([(3.0, "hr", 80.0)], stay_id=2),
    ]
    return dev, build_vocabulary(dev, min_prevalence=0.0)


class TestBuildVocabulary:
    def test_ids_dense_and_alphabetical(self):
        dev = [mk_stay([(0.0, "zeta", 1.0), (1.0, "alpha", 2.0)])]
        vocab = build_vocabulary(dev, min_prevalence=0.0)
        assert vocab.name_to_id == {"alpha": FIRST_VAR_ID, "zeta": FIRST_VAR_ID + 1}

    def test_id_name_roundtrip(self):
        stays = generate_cohort(GeneratorConfig(n_stays=60, seed=4))
        vocab = build_vocabulary(stays)
        for name, vid in vocab.name_to_id.items():
            assert vocab.id_to_name[vid] == name

    def test_below_prevalence_threshold_excluded(self):
        dev = [mk_stay([(0.0, "common", 1.0)], stay_id=i) for i in range(200)]
        dev[0].events.append((1.0, "rare", 5.0))  # 1/200 = 0.5% of stays
        vocab = build_vocabulary(dev, min_prevalence=0.01)
        assert "rare" not in vocab.name_to_id
        assert "common" in vocab.name_to_id

    def test_threshold_zero_keeps_all_names(self):
        dev = [mk_stay([(0.0, "a", 1.0)]), mk_stay([(0.0, "b", 2.0)])]
        vocab = build_vocabulary(dev, min_prevalence=0.0)
        assert set(vocab.name_to_id) == {"a", "b"}

    def test_all_variables_filtered_is_error(self):
        dev = [mk_stay([(0.0, "a", 1.0)]), mk_stay([(0.0, "b", 2.0)])]
        with pytest.raises(ValueError):
            build_vocabulary(dev, min_prevalence=0.9)

    def test_empty_dev_is_error(self):
        with pytest.raises(ValueError):
            build_vocabulary([])

    def test_micro_corpus_stats_match_hand_computation(self, micro_vocab):
        _, vocab = micro_vocab
        assert vocab.name_to_id == {"hr": FIRST_VAR_ID}
        # raw rows: (60,60,60,0,60,60,0,60,0) (70,60,60,1,60,60,0,60,1) (80,80,80,0,80,80,0,80,0)
        np.testing.assert_allclose(vocab.value_mean["hr"][0], 70.0)
        np.testing.assert_allclose(vocab.value_sd["hr"][0], math.sqrt(200.0 / 3.0), rtol=1e-14)
        np.testing.assert_allclose(vocab.value_mean["hr"][1], 200.0 / 3.0, rtol=1e-14)
        np.testing.assert_allclose(vocab.value_mean["hr"][3], 1.0 / 3.0, rtol=1e-14)
        assert vocab.value_median["hr"] == 70.0
        np.testing.assert_allclose(vocab.time_mean, 2.0)
        np.testing.assert_allclose(vocab.time_sd, math.sqrt(2.0 / 3.0), rtol=1e-14)


class TestTokenizeStay:
    def test_golden_micro_corpus_matrix(self, micro_vocab):
        dev, vocab = micro_vocab
        a = math.sqrt(3.0 / 2.0)   # standardized {60,70,80} at current-col scale
        b = 1.0 / math.sqrt(2.0)   # standardized low side of {60,60,80}-type cols
        c = math.sqrt(2.0)         # standardized high side
        _, toks1 = tokenize_stay(dev[0], vocab)
        _, toks2 = tokenize_stay(dev[1], vocab)
        got = np.vstack([token_matrix(toks1), token_matrix(toks2)])
        expected = np.array([
            # pos, id, t_abs, current, mean, median, count, min, max, std, first, gap
            [0, 10, -a, -a, -b, -b, -b, -b, -b, 0.0, -b, -b],
            [1, 10, 0.0, 0.0, -b, -b, c, -b, -b, 0.0, -b, c],
            [0, 10, a, a, c, c, -b, c, c, 0.0, c, -b],
        ])
        np.testing.assert_allclose(got, expected, rtol=1e-12, atol=1e-12)

    def test_value_at_dev_mean_standardizes_to_zero(self, micro_vocab):
        dev, vocab = micro_vocab
        _, toks = tokenize_stay(mk_stay([(2.0, "hr", 70.0)]), vocab)
        assert toks[0].values[0] == 0.0

    def test_oov_variable_uses_global_stats(self, micro_vocab):
        _, vocab = micro_vocab
        _, toks = tokenize_stay(mk_stay([(2.0, "unknown_var", 55.0)]), vocab)
        assert toks[0].var_id == OOV_ID
        raw = np.array([55.0, 55.0, 55.0, 0.0, 55.0, 55.0, 0.0, 55.0, 0.0])
        np.testing.assert_allclose(
            toks[0].values, (raw - vocab.global_mean) / vocab.global_sd, rtol=1e-12)

    def test_over_length_stay_is_excluded(self, micro_vocab):
        _, vocab = micro_vocab
        events = [(float(i), "hr", 60.0) for i in range(6)]
        with pytest.raises(ExcludedStayError):
            tokenize_stay(mk_stay(events), vocab, max_seq_len=5)

    def test_prefix_causality_later_events_do_not_change_earlier_tokens(self, micro_vocab):
        _, vocab = micro_vocab
        events = [(float(i), "hr", 60.0 + i) for i in range(8)]
        _, full = tokenize_stay(mk_stay(events), vocab)
        _, head = tokenize_stay(mk_stay(events[:5]), vocab)
        assert full[:5] == head

    def test_dev_cohort_standardized_columns_are_zero_mean_unit_sd(self):
        stays = generate_cohort(GeneratorConfig(n_stays=150, seed=8))
        dev, _ = split_chronological(stays, 0.8)
        vocab = build_vocabulary(dev)
        per_var = {}
        for stay in dev:
            _, toks = tokenize_stay(stay, vocab)
            for tok in toks:
                per_var.setdefault(tok.var_id, []).append(tok.values)
        for vid, rows in per_var.items():
            rows = np.array(rows)
            name = vocab.id_to_name[vid]
            raw_sd = vocab.value_sd[name]
            for col in range(9):
                if raw_sd[col] <= 1e-5:  # floored near-constant columns stay ~0
                    continue
                assert abs(rows[:, col].mean()) < 1e-9
                assert abs(rows[:, col].std() - 1.0) < 1e-6


class TestStaticVector:
    def _fixture(self):
        dev = [
            mk_stay([(0.0, "hr", 60.0)], stay_id=1, num={"bmi": 20.0}, cat={"sex": "f"}),
            mk_stay([(0.0, "hr", 61.0)], stay_id=2, num={"bmi": 30.0}, cat={"sex": "m"}),
            mk_stay([(0.0, "hr", 62.0)], stay_id=3, num={"bmi": None}, cat={"sex": None}),
        ]
        return dev, build_vocabulary(dev, min_prevalence=0.0)

    def test_missing_numeric_imputed_to_median_with_mask(self):
        dev, vocab = self._fixture()
        # dev medians/means from observed {20, 30}: median 25, mean 25, sd 5
        vec = static_vector(dev[2], vocab)
        # layout: [bmi_std, onehot(sex f), onehot(sex m), bmi_mask, sex_mask]
        np.testing.assert_allclose(vec, [0.0, 0.0, 0.0, 1.0, 1.0])

    def test_observed_fields_standardized_with_zero_mask(self):
        dev, vocab = self._fixture()
        vec = static_vector(dev[0], vocab)
        np.testing.assert_allclose(vec, [-1.0, 1.0, 0.0, 0.0, 0.0])

    def test_unseen_category_is_all_zero_with_zero_mask(self):
        dev, vocab = self._fixture()
        stay = mk_stay([(0.0, "hr", 60.0)], num={"bmi": 25.0}, cat={"sex": "x"})
        vec = static_vector(stay, vocab)
        np.testing.assert_allclose(vec, [0.0, 0.0, 0.0, 0.0, 0.0])

    def test_fixed_dimension_across_stays(self):
        stays = generate_cohort(GeneratorConfig(n_stays=40, seed=3))
        vocab = build_vocabulary(stays)
        dims = {static_vector(s, vocab).shape for s in stays}
        assert dims == {(vocab.static.dim,)}


class TestAssembleModelSequence:
    def test_empty_event_list_gives_exactly_eight_specials(self, micro_vocab):
        _, vocab = micro_vocab
        seq = assemble_model_sequence([], 10.0, vocab)
        assert len(seq) == 8
        assert [t.var_id for t in seq] == list(TASK_IDS) + [STATIC_ID]

    def test_sequence_length_is_eight_plus_events(self, micro_vocab):
        dev, vocab = micro_vocab
        _, toks = tokenize_stay(dev[0], vocab)
        assert len(assemble_model_sequence(toks, dev[0].los_hours, vocab)) == 8 + len(toks)

    def test_cls_t_abs_is_standardized_los_for_random_stays(self):
        stays = generate_cohort(GeneratorConfig(n_stays=20, seed=5))
        vocab = build_vocabulary(stays)
        for stay in stays:
            _, toks = tokenize_stay(stay, vocab)
            seq = assemble_model_sequence(toks, stay.los_hours, vocab)
            # standardizer applied directly
            expected = (stay.los_hours - vocab.time_mean) / vocab.time_sd
            for tok in seq[:N_TASKS]:
                assert tok.t_abs == expected

    def test_prefix_positions_are_zero_and_events_keep_theirs(self, micro_vocab):
        dev, vocab = micro_vocab
        _, toks = tokenize_stay(dev[0], vocab)
        seq = assemble_model_sequence(toks, dev[0].los_hours, vocab)
        assert [t.pos for t in seq[:8]] == [0] * 8
        assert [t.pos for t in seq[8:]] == [t.pos for t in toks]
        assert all(np.all(t.values == 0.0) for t in seq[:8])


class TestPersistence:
    def test_vocab_roundtrip(self, tmp_path):
        stays = generate_cohort(GeneratorConfig(n_stays=50, seed=6))
        vocab = build_vocabulary(stays)
        path = tmp_path / "vocab.json"
        save_vocab(vocab, path)
        back = load_vocab(path)
        assert back.name_to_id == vocab.name_to_id
        for name in vocab.name_to_id:
            np.testing.assert_array_equal(back.value_mean[name], vocab.value_mean[name])
            np.testing.assert_array_equal(back.value_sd[name], vocab.value_sd[name])
        assert back.time_mean == vocab.time_mean
        assert back.static.dim == vocab.static.dim

    def test_tokenized_file_roundtrip(self, tmp_path):
        stays = generate_cohort(GeneratorConfig(n_stays=10, seed=7))
        vocab = build_vocabulary(stays)
        records = []
        for s in stays:
            static, toks = tokenize_stay(s, vocab)
            records.append((s.stay_id, s.los_hours, s.labels, static, toks))
        path = tmp_path / "tokens.jsonl"
        write_tokenized(path, records)
        back = read_tokenized(path)
        assert len(back) == len(records)
        for (sid, los, labels, static, toks), (sid2, los2, labels2, static2, toks2) in zip(records, back):
            assert (sid, los, labels) == (sid2, los2, labels2)
            np.testing.assert_array_equal(static, static2)
            assert toks == toks2

    def test_version_mismatch_rejected(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"schema_version":99,"kind":"icuseq-tokens"}\n')
        with pytest.raises(ValueError):
            read_tokenized(path)
