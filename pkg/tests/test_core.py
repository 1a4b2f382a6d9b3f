import numpy as np
import pytest
from hypothesis import given, strategies as st

from specdesk import (
    BOS_ID,
    EOS_ID,
    UNK_ID,
    Distribution,
    FormatError,
    SamplerConfig,
    Vocabulary,
    apply_temperature,
    argmax,
    build_vocab,
    decode_tokens,
    derive_seed,
    encode,
    load_vocab,
    make_rng,
    sample,
    save_vocab,
)
from specdesk.core import ACCEPT_STREAM, DRAFT_STREAM, RESERVED_TOKENS


class FixedUniforms:
    """Stand-in rng feeding a scripted sequence of uniforms."""

    def __init__(self, values):
        self._values = list(values)

    def random(self):
        return self._values.pop(0)


class TestVocabulary:
    def test_build_first_appearance_order(self):
        v = build_vocab("ab")
        assert v.tokens == RESERVED_TOKENS + ("a", "b")
        assert v.size == 5

    def test_build_order_follows_appearance(self):
        v = build_vocab("ba")
        assert v.tokens == RESERVED_TOKENS + ("b", "a")

    def test_build_one_id_per_scalar_value(self):
        # 3 reserved + 'a' + U+00E5 + U+65E5, each a single scalar value
        text = "aå日"
        v = build_vocab(text)
        assert v.size == 6
        assert [v.lookup(ch) for ch in text] == [3, 4, 5]

    def test_empty_corpus_gives_reserved_only(self):
        v = build_vocab("")
        assert v.tokens == RESERVED_TOKENS

    def test_build_accepts_chunk_stream(self):
        assert build_vocab(iter(["ab", "bc"])).tokens == RESERVED_TOKENS + ("a", "b", "c")

    def test_lookup_token_at_identity(self):
        v = build_vocab("xyz")
        for i in range(v.size):
            assert v.lookup(v.token_at(i)) == i

    def test_duplicate_tokens_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(RESERVED_TOKENS + ("a", "a"))

    def test_missing_reserved_header_rejected(self):
        with pytest.raises(ValueError):
            Vocabulary(("a", "b", "c"))

    def test_reserved_text_does_not_collide(self):
        # literal "<bos>" in a corpus contributes its characters, not a token
        v = build_vocab("<bos>")
        assert v.size == 3 + len(set("<bos>"))

    def test_file_round_trip(self, tmp_path):
        v = build_vocab("abå日 ")
        path = tmp_path / "v.vocab"
        save_vocab(v, path)
        assert load_vocab(path) == v

    def test_file_round_trip_structural_chars(self, tmp_path):
        v = build_vocab("a\nb\r\\")
        path = tmp_path / "v.vocab"
        save_vocab(v, path)
        loaded = load_vocab(path)
        assert loaded == v
        assert "\n" in loaded.tokens and "\r" in loaded.tokens and "\\" in loaded.tokens

    def test_file_line_number_minus_one_is_id(self, tmp_path):
        v = build_vocab("abc")
        path = tmp_path / "v.vocab"
        save_vocab(v, path)
        lines = path.read_text(encoding="utf-8").split("\n")
        assert lines[:3] == list(RESERVED_TOKENS)
        assert lines[3] == "a" and lines[4] == "b" and lines[5] == "c"

    def test_load_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.vocab"
        path.write_text("<bos>\n<unk>\n<eos>\na\n", encoding="utf-8")
        with pytest.raises(FormatError):
            load_vocab(path)


class TestEncodeDecode:
    def test_encode_empty(self):
        assert encode("", build_vocab("ab")) == []

    def test_encode_direct_lookup(self):
        assert encode("ab", build_vocab("ab")) == [3, 4]

    def test_encode_unknown_maps_to_unk(self):
        assert encode("ac", build_vocab("ab")) == [3, UNK_ID]

    def test_decode_inverse(self):
        v = build_vocab("ab")
        assert decode_tokens([3, 4], v) == "ab"

    def test_decode_empty(self):
        assert decode_tokens([], build_vocab("ab")) == ""

    def test_decode_elides_reserved(self):
        v = build_vocab("ab")
        assert decode_tokens([BOS_ID, 3, EOS_ID], v) == "a"

    def test_decode_out_of_range_is_corruption(self):
        with pytest.raises(ValueError):
            decode_tokens([99], build_vocab("ab"))

    @given(st.text(alphabet="abcxyz éж", max_size=60))
    def test_round_trip_reserved_free_text(self, text):
        v = build_vocab("abcxyz éж")
        assert decode_tokens(encode(text, v), v) == text


class TestDistribution:
    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            Distribution(np.array([1.1, -0.1]))

    def test_rejects_bad_sum(self):
        with pytest.raises(ValueError):
            Distribution(np.array([0.5, 0.4]))

    def test_rejects_all_zero(self):
        with pytest.raises(ValueError):
            Distribution(np.array([0.0, 0.0]))

    def test_probs_read_only(self):
        d = Distribution(np.array([0.5, 0.5]))
        with pytest.raises(ValueError):
            d.probs[0] = 1.0

    def test_tolerates_float_noise(self):
        Distribution(np.array([1 / 3, 1 / 3, 1 / 3]))


class TestApplyTemperature:
    def test_identity_at_one(self):
        d = Distribution(np.array([0.8, 0.2]))
        out = apply_temperature(d, 1.0)
        assert np.array_equal(out.probs, d.probs)

    def test_zero_gives_argmax_one_hot(self):
        out = apply_temperature(Distribution(np.array([0.8, 0.2])), 0.0)
        assert np.array_equal(out.probs, np.array([1.0, 0.0]))

    def test_zero_breaks_ties_toward_lowest_id(self):
        out = apply_temperature(Distribution(np.array([0.25, 0.25, 0.5, 0.0])), 0.0)
        assert argmax(out) == 2
        out = apply_temperature(Distribution(np.array([0.5, 0.5])), 0.0)
        assert np.array_equal(out.probs, np.array([1.0, 0.0]))

    def test_power_renormalize_hand_case(self):
        # 1/T = 2: (0.8, 0.2) -> (0.64, 0.04) / 0.68
        out = apply_temperature(Distribution(np.array([0.8, 0.2])), 0.5)
        expected = np.array([0.64 / 0.68, 0.04 / 0.68])
        assert np.max(np.abs(out.probs - expected)) < 1e-12

    def test_negative_temperature_rejected(self):
        with pytest.raises(ValueError):
            apply_temperature(Distribution(np.array([1.0])), -0.1)

    def test_extreme_temperature_stays_finite(self):
        d = Distribution(np.array([0.9, 0.1 - 1e-12, 1e-12]))
        out = apply_temperature(d, 0.01)
        assert abs(out.probs.sum() - 1.0) < 1e-9

    def test_preserves_argmax_for_positive_t(self):
        rng = np.random.default_rng(7)
        for _ in range(300):
            n = int(rng.integers(2, 9))
            p = rng.dirichlet(np.ones(n))
            if np.sum(p == p.max()) != 1:
                continue
            d = Distribution(p)
            for t in (0.3, 0.7, 1.0, 2.5):
                assert argmax(apply_temperature(d, t)) == argmax(d)

    def test_zero_matches_argmax_for_random_distributions(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            d = Distribution(rng.dirichlet(np.ones(n)))
            hot = apply_temperature(d, 0.0)
            assert hot.p(argmax(d)) == 1.0


class TestArgmax:
    def test_picks_maximum(self):
        assert argmax(Distribution(np.array([0.1, 0.9]))) == 1

    def test_tie_breaks_toward_lowest_id(self):
        assert argmax(Distribution(np.array([0.5, 0.5]))) == 0
        assert argmax(Distribution(np.array([0.2, 0.4, 0.4]))) == 1


class TestSample:
    def test_one_hot_is_deterministic(self):
        d = Distribution(np.array([0.0, 0.0, 0.0, 1.0]))
        for seed in range(5):
            assert sample(d, make_rng(seed, DRAFT_STREAM)) == 3

    def test_inverse_cdf_boundaries(self):
        d = Distribution(np.array([0.5, 0.5]))
        assert sample(d, FixedUniforms([0.25])) == 0
        assert sample(d, FixedUniforms([0.75])) == 1
        assert sample(d, FixedUniforms([0.0])) == 0

    def test_never_returns_zero_probability_id(self):
        d = Distribution(np.array([0.5, 0.0, 0.5]))
        rng = make_rng(3, DRAFT_STREAM)
        assert all(sample(d, rng) != 1 for _ in range(1000))

    def test_empirical_frequency_within_binomial_band(self):
        # 3-sigma band around 0.9 at N=1e5 is within [0.897, 0.903]
        d = Distribution(np.array([0.9, 0.1]))
        rng = make_rng(12345, ACCEPT_STREAM)
        n = 100_000
        hits = sum(sample(d, rng) == 0 for _ in range(n))
        assert 0.897 <= hits / n <= 0.903

    def test_total_variation_distance_small(self):
        probs = np.array([0.3, 0.05, 0.2, 0.05, 0.1, 0.15, 0.05, 0.1])
        d = Distribution(probs)
        rng = make_rng(99, DRAFT_STREAM)
        n = 100_000
        counts = np.zeros(len(probs))
        for _ in range(n):
            counts[sample(d, rng)] += 1
        tv = 0.5 * np.abs(counts / n - probs).sum()
        assert tv <= 0.01


class TestRngContract:
    def test_same_stream_reproduces(self):
        a = make_rng(42, DRAFT_STREAM)
        b = make_rng(42, DRAFT_STREAM)
        assert [a.random() for _ in range(5)] == [b.random() for _ in range(5)]

    def test_streams_are_distinct(self):
        a = make_rng(42, DRAFT_STREAM)
        b = make_rng(42, ACCEPT_STREAM)
        assert [a.random() for _ in range(5)] != [b.random() for _ in range(5)]

    def test_derive_seed_stable_and_path_sensitive(self):
        assert derive_seed(1, 3, 0, 0) == derive_seed(1, 3, 0, 0)
        assert derive_seed(1, 3, 0, 0) != derive_seed(1, 3, 0, 1)
        assert derive_seed(1, 3) != derive_seed(2, 3)

    def test_negative_seed_accepted(self):
        make_rng(-5, DRAFT_STREAM).random()
        assert derive_seed(-5, 0) == derive_seed(-5, 0)


class TestSamplerConfig:
    def test_rejects_negative_temperature(self):
        with pytest.raises(ValueError):
            SamplerConfig(temperature=-1.0)

    def test_defaults(self):
        cfg = SamplerConfig()
        assert cfg.temperature == 1.0 and cfg.seed == 0
