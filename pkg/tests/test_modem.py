import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcsjced.fec import build_code
from dcsjced.modem import (
    CodedLink,
    ConfigError,
    FrameConfig,
    assemble_frame,
    deinterleave,
    generate_m_sequence,
    hard_demap,
    interleave,
    make_permutation,
    map_symbols,
    pilot_sequence,
    qpsk_gray,
)


class TestFrameConfig:
    def test_default_layout(self):
        cfg = FrameConfig()
        assert cfg.frame_len == 218
        assert cfg.n_code_bits == 260

    def test_short_pilot(self):
        assert FrameConfig(n_pilot=31).frame_len == 186

    def test_guard_too_short(self):
        with pytest.raises(ConfigError, match="guard"):
            FrameConfig(n_guard=10)

    def test_rate_mismatch(self):
        with pytest.raises(ConfigError):
            FrameConfig(n_info_bits=100)

    def test_masks_partition_frame(self):
        cfg = FrameConfig()
        fr = assemble_frame(pilot_sequence(63), np.ones(130), cfg)
        total = fr.pilot_mask.astype(int) + fr.data_mask + fr.guard_mask
        assert np.all(total == 1)
        assert np.all(fr.symbols[fr.guard_mask] == 0)


class TestMSequence:
    @pytest.mark.parametrize("degree", [3, 4, 5, 6, 7])
    def test_period_and_balance(self, degree):
        s = generate_m_sequence(degree)
        assert s.size == 2**degree - 1
        # one more -1 (bit 1) than +1 in a maximal-length sequence
        assert np.sum(s == -1) == 2 ** (degree - 1)

    def test_two_valued_autocorrelation(self):
        s = generate_m_sequence(6)
        n = s.size
        ac = np.array([np.dot(s, np.roll(s, k)) for k in range(n)])
        assert ac[0] == n
        assert np.all(ac[1:] == -1)

    def test_non_primitive_rejected(self):
        # x^4 + x^2 + 1 = (x^2 + x + 1)^2 is not primitive
        with pytest.raises(ConfigError, match="not primitive"):
            generate_m_sequence(4, taps=(4, 2))

    def test_bad_pilot_length(self):
        with pytest.raises(ConfigError):
            pilot_sequence(50)


class TestMapping:
    def test_gray_neighbours_differ_in_one_bit(self):
        a = qpsk_gray()
        for i in range(4):
            for j in range(4):
                if np.isclose(abs(a.points[i] - a.points[j]), np.sqrt(2)):
                    assert np.sum(a.labels[i] != a.labels[j]) == 1

    def test_unit_energy(self):
        assert np.allclose(np.abs(qpsk_gray().points), 1.0)

    @given(st.lists(st.integers(0, 1), min_size=2, max_size=80).filter(lambda b: len(b) % 2 == 0))
    def test_map_demap_roundtrip(self, bits):
        a = qpsk_gray()
        assert np.array_equal(hard_demap(map_symbols(bits, a), a), bits)


class TestInterleaver:
    @settings(max_examples=50)
    @given(st.integers(1, 300), st.integers(0, 2**32 - 1))
    def test_roundtrip(self, n, seed):
        rng = np.random.default_rng(seed)
        perm = make_permutation(n, rng)
        x = rng.standard_normal(n)
        assert np.array_equal(deinterleave(interleave(x, perm), perm), x)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            interleave(np.zeros(4), np.arange(5))


class TestCodedLink:
    @pytest.mark.parametrize("order", ["encode-interleave", "interleave-encode"])
    def test_bit_positions_survive_loop(self, order):
        cfg = FrameConfig()
        code = build_code(130, 260)
        rng = np.random.default_rng(5)
        n = cfg.n_code_bits if order == "encode-interleave" else cfg.n_info_bits
        link = CodedLink(cfg, code, make_permutation(n, rng), order=order)
        info = rng.integers(0, 2, 130)
        mapped = link.mapper_bits(info)
        # perfect LLRs in mapper order, routed to the decoder and back
        llr = 10.0 * (1 - 2 * mapped)
        dec_in = link.to_decoder(llr)
        cw = (dec_in < 0).astype(np.int8)
        assert np.all(code.syndrome(cw) == 0)
        assert np.array_equal(link.info_from_codeword(cw), info)
        assert np.array_equal(link.from_decoder(dec_in), llr)

    def test_unknown_order(self):
        cfg = FrameConfig()
        with pytest.raises(ConfigError):
            CodedLink(cfg, None, np.arange(260), order="sideways")
