import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dcsjced.fec import LLR_CLAMP
from dcsjced.modem import qpsk_gray
from dcsjced.msgcore.symbols import apriori_symbol_probs, extrinsic_llr, symbol_posterior


@pytest.fixture(scope="module")
def alph():
    return qpsk_gray()


def brute_extrinsic(r_hat, r_var, prior_llr, alph):
    """Extrinsic LLR of each bit by explicit summation over labels."""
    q = alph.bits_per_symbol
    out = np.zeros(q)
    for b in range(q):
        num = den = 0.0
        for a, lab in enumerate(alph.labels):
            lik = np.exp(-abs(r_hat - alph.points[a]) ** 2 / r_var)
            pr = 1.0
            for o in range(q):
                if o != b:
                    p0 = 1 / (1 + np.exp(-prior_llr[o]))
                    pr *= p0 if lab[o] == 0 else 1 - p0
            if lab[b] == 0:
                num += lik * pr
            else:
                den += lik * pr
        out[b] = np.log(num / den)
    return np.clip(out, -LLR_CLAMP, LLR_CLAMP)


class TestSymbolConversions:
    def test_zero_llr_gives_uniform(self, alph):
        np.testing.assert_allclose(apriori_symbol_probs(np.zeros(4), alph), 0.25)

    def test_prior_factorizes(self, alph):
        llr = np.array([1.3, -0.4])
        p = apriori_symbol_probs(llr, alph)[0]
        p0 = 1 / (1 + np.exp(-llr))
        for a, lab in enumerate(alph.labels):
            want = np.prod([p0[i] if lab[i] == 0 else 1 - p0[i] for i in range(2)])
            assert p[a] == pytest.approx(want)

    def test_extrinsic_matches_enumeration(self, alph, rng):
        for _ in range(50):
            r = rng.normal() + 1j * rng.normal()
            v = rng.uniform(0.05, 2)
            prior = rng.normal(0, 2, 2)
            got = extrinsic_llr(np.array([r]), np.array([v]), prior, alph)
            np.testing.assert_allclose(got, brute_extrinsic(r, v, prior, alph), rtol=1e-9, atol=1e-9)

    def test_extrinsic_excludes_own_prior(self, alph):
        # for Gray QPSK the bits separate, so a bit's extrinsic ignores every prior
        base = extrinsic_llr(np.array([0.3 - 0.2j]), np.array([0.5]), np.zeros(2), alph)
        for prior in itertools.product([-5.0, 0.0, 5.0], repeat=2):
            got = extrinsic_llr(np.array([0.3 - 0.2j]), np.array([0.5]), np.array(prior), alph)
            np.testing.assert_allclose(got, base, atol=1e-12)

    def test_posterior_with_certain_observation(self, alph):
        x, v, p = symbol_posterior(alph.points[[2]], np.array([1e-8]), None, alph)
        assert x[0] == pytest.approx(alph.points[2]) and v[0] == pytest.approx(1e-12, abs=1e-10)

    def test_posterior_moments_uniform(self, alph):
        x, v, _ = symbol_posterior(np.array([0j]), np.array([np.inf]), None, alph)
        assert abs(x[0]) < 1e-12 and v[0] == pytest.approx(1.0)

    @settings(max_examples=200)
    @given(
        st.complex_numbers(max_magnitude=1e4, allow_nan=False, allow_infinity=False),
        st.floats(1e-12, 1e8),
        st.lists(st.floats(-50, 50), min_size=2, max_size=2),
    )
    def test_ranges(self, r, v, prior):
        alph = qpsk_gray()
        x, xv, p = symbol_posterior(np.array([r]), np.array([v]), np.log(apriori_symbol_probs(np.array(prior), alph) + 1e-300), alph)
        assert np.isfinite(x[0]) and 0 < xv[0] <= 1.0 + 1e-9
        assert p.sum() == pytest.approx(1.0) and np.all(p >= 0)
        llr = extrinsic_llr(np.array([r]), np.array([v]), np.array(prior), alph)
        assert np.all(np.isfinite(llr))
