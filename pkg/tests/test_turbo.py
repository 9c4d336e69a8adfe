import numpy as np
import pytest

from dcsjced.baseline import jced_single_frame
from dcsjced.bench import ExperimentConfig, make_trial, received_frames
from dcsjced.channel import HyperParams, noise_var_from_ebn0
from dcsjced.fec import decode_spa
from dcsjced.modem import ConfigError, FrameConfig
from dcsjced.turbo import TurboConfig, run_dcs_jced

SMALL = FrameConfig(n_pilot=15, n_data=40, n_guard=7, n_info_bits=40, channel_len=8)
HYP = HyperParams(lam=0.4)


def small_trial(trial=0, k=3, snr=22.0, seed=5):
    cfg = ExperimentConfig(frame=SMALL, n_frames=k, hyper=HYP, seed=seed)
    data = make_trial(cfg, trial)
    nv = noise_var_from_ebn0(snr, 0.5, 2)
    return cfg, data, received_frames(data, nv), nv


class TestConfig:
    @pytest.mark.parametrize(
        "kw",
        [dict(t_turbo=0), dict(t_fp=0), dict(t_bp=-1), dict(damping=0.0), dict(damping=1.5), dict(domain="fd"), dict(schedule="x"), dict(breakout_tol=0)],
    )
    def test_rejects_invalid(self, kw):
        with pytest.raises(ConfigError):
            TurboConfig(**kw)

    def test_wrong_frame_length(self):
        _, data, y, nv = small_trial()
        with pytest.raises(ConfigError):
            run_dcs_jced(y[:, :-1], data.link, TurboConfig(), HYP, nv, np.random.default_rng(0))


class TestDegeneracy:
    def test_single_frame_without_backward_equals_jced(self):
        cfg = TurboConfig(t_fp=1, t_bp=0, t_inner=30)
        for trial in range(4):
            _, data, y, nv = small_trial(trial)
            a = jced_single_frame(y, data.link, cfg, HYP, nv, np.random.default_rng(trial))
            rng = np.random.default_rng(trial)
            q = qv = None
            for k in range(y.shape[0]):
                b = run_dcs_jced(y[k : k + 1], data.link, cfg, HYP, nv, rng, q_init=q, q_var_init=qv)
                np.testing.assert_array_equal(a.info_bits[k], b.info_bits[0])
                np.testing.assert_array_equal(a.extrinsic_llrs[k], b.extrinsic_llrs[0])
                np.testing.assert_array_equal(a.channel_estimates[k], b.channel_estimates[0])
                q, qv = b.channel_estimates[0], np.maximum(b.channel_vars[0], 1e-12)

    def test_no_em_without_backward_sweep(self):
        _, data, y, nv = small_trial()
        out = run_dcs_jced(y, data.link, TurboConfig(t_bp=0, t_inner=10), HYP, nv, np.random.default_rng(1))
        assert all(it.hyper == HYP for it in out.history)


@pytest.fixture(scope="module")
def run():
    _, data, y, nv = small_trial(snr=30.0)
    cfg = TurboConfig(t_turbo=3, t_fp=2, t_bp=2, t_inner=25)
    return data, y, nv, cfg, run_dcs_jced(y, data.link, cfg, HYP, nv, np.random.default_rng(3))


class TestTurboLoop:

    def test_decodes_at_high_snr(self, run):
        data, _, _, _, out = run
        assert np.mean(out.info_bits != data.info_bits) < 0.02
        err = np.sum(np.abs(out.channel_estimates - data.cir) ** 2) / np.sum(np.abs(data.cir) ** 2)
        assert err < 0.05

    def test_history_shapes(self, run):
        data, _, _, cfg, out = run
        assert len(out.history) == cfg.t_turbo
        k = data.info_bits.shape[0]
        for it in out.history:
            assert it.h_hat.shape == (k, SMALL.channel_len)
            assert it.equalizer_llr.shape == (k, SMALL.n_code_bits)
            assert it.inner_iterations > 0

    def test_decoder_llr_is_decoder_extrinsic(self, run):
        data, _, _, cfg, out = run
        link = data.link
        for it in out.history:
            for k in range(it.equalizer_llr.shape[0]):
                ext, _, _ = decode_spa(link.code, link.to_decoder(it.equalizer_llr[k]), max_iters=cfg.decoder_iters)
                np.testing.assert_array_equal(link.from_decoder(ext), it.decoder_llr[k])

    def test_em_moves_hyperparameters(self, run):
        *_, out = run
        assert out.hyper != HYP and out.history[-1].hyper == out.hyper

    def test_reproducible(self, run):
        data, y, nv, cfg, out = run
        again = run_dcs_jced(y, data.link, cfg, HYP, nv, np.random.default_rng(3))
        np.testing.assert_array_equal(out.extrinsic_llrs, again.extrinsic_llrs)


class TestVariants:
    @pytest.mark.parametrize("domain,schedule", [("frequency", "serial"), ("time", "parallel"), ("frequency", "parallel")])
    def test_variants_decode(self, domain, schedule):
        _, data, y, nv = small_trial(snr=30.0)
        cfg = TurboConfig(domain=domain, schedule=schedule, t_inner=25)
        out = run_dcs_jced(y, data.link, cfg, HYP, nv, np.random.default_rng(3))
        assert np.mean(out.info_bits != data.info_bits) < 0.05

    def test_cross_frame_messages_help_short_pilot(self):
        # a single frame with a weak channel estimate benefits from its neighbours
        ok_dcs = ok_single = 0
        cfg = TurboConfig(t_inner=25)
        single = TurboConfig(t_fp=1, t_bp=0, t_inner=25, em=False)
        for trial in range(4):
            _, data, y, nv = small_trial(trial, k=6, snr=18.0)
            a = run_dcs_jced(y, data.link, cfg, HYP, nv, np.random.default_rng(trial))
            b = jced_single_frame(y, data.link, single, HYP, nv, np.random.default_rng(trial))
            ok_dcs += np.sum(np.abs(a.channel_estimates - data.cir) ** 2)
            ok_single += np.sum(np.abs(b.channel_estimates - data.cir) ** 2)
        assert ok_dcs < ok_single
