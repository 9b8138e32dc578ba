"""Tests for link geometry, power normalization, and the network stacks."""

import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from blockae.channel import NoiseSpec, apply_awgn
from blockae.errors import DegenerateInputError
from blockae.model import (LinkConfig, build_receiver, build_transmitter, hard_decision,
                           normalize_power, receive, transmit)

TINY = LinkConfig(bits_per_block=2, block_count=4, symbol_count=4)


class TestLinkConfig:
    @pytest.mark.parametrize("mp,k_tx,k_rx", [(400, 2, 6), (800, 4, 3), (600, 3, 4)])
    def test_paper_geometry(self, mp, k_tx, k_rx):
        cfg = LinkConfig(6, 400, mp)
        assert cfg.tx_step_width == k_tx
        assert cfg.rx_step_width == k_rx

    def test_code_rate(self):
        assert LinkConfig(6, 400, 800).code_rate == 0.5
        assert LinkConfig(6, 400, 600).code_rate == pytest.approx(2 / 3)

    def test_rate_above_one_rejected(self):
        with pytest.raises(ValueError):
            LinkConfig(6, 400, 399)

    def test_non_integer_tx_width_rejected(self):
        # 2*601/400 is not integral
        with pytest.raises(ValueError, match="transmitter step width"):
            LinkConfig(6, 400, 601)

    def test_non_integer_rx_width_rejected(self):
        # k_tx = 2*700/400 would be 3.5 -> already caught; craft rx-only violation
        with pytest.raises(ValueError, match="receiver step width"):
            LinkConfig(5, 4, 8)  # k_tx = 4 ok, k_rx = 20/8 not integral

    def test_dict_round_trip(self):
        cfg = LinkConfig(6, 50, 100)
        assert LinkConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown"):
            LinkConfig.from_dict({"bits_per_block": 6, "block_count": 4,
                                  "symbol_count": 4, "extra": 1})


class TestNormalizePower:
    def test_already_normalized_unchanged(self):
        frame = torch.tensor([[[1.0, 0.0], [0.0, 1.0]]])
        out = normalize_power(frame)
        assert torch.allclose(out, frame, atol=1e-7)

    def test_hand_oracle(self):
        """Mean power of [(3,0),(0,4)] is 12.5, so scale is 1/sqrt(12.5)."""
        frame = torch.tensor([[[3.0, 0.0], [0.0, 4.0]]], dtype=torch.float64)
        out = normalize_power(frame)
        scale = 1.0 / math.sqrt(12.5)
        expected = torch.tensor([[[3 * scale, 0.0], [0.0, 4 * scale]]], dtype=torch.float64)
        assert torch.allclose(out, expected, atol=1e-9)
        assert out[0, 0, 0].item() == pytest.approx(0.848528, abs=1e-6)
        assert out[0, 1, 1].item() == pytest.approx(1.131371, abs=1e-6)

    def test_all_zero_raises(self):
        with pytest.raises(DegenerateInputError):
            normalize_power(torch.zeros((1, 2, 2)))

    def test_mean_power_one_on_random_frames(self):
        """1000 random frames all land within 1e-6 of unit mean power."""
        g = torch.Generator().manual_seed(5)
        raw = 3.0 * torch.randn((1000, 40, 2), generator=g, dtype=torch.float64)
        out = normalize_power(raw)
        power = (out ** 2).sum(-1).mean(-1)
        assert float((power - 1.0).abs().max()) < 1e-6

    @settings(max_examples=30, deadline=None)
    @given(scale=st.floats(1e-3, 1e3), seed=st.integers(0, 10**6))
    def test_scale_invariance(self, scale, seed):
        g = torch.Generator().manual_seed(seed)
        raw = torch.randn((1, 16, 2), generator=g, dtype=torch.float64) + 0.1
        a = normalize_power(raw)
        b = normalize_power(raw * scale)
        assert torch.allclose(a, b, atol=1e-6)

    def test_batch_independence(self):
        """Each frame in a batch is normalized by its own power."""
        g = torch.Generator().manual_seed(6)
        raw = torch.randn((3, 8, 2), generator=g, dtype=torch.float64)
        batch = normalize_power(raw)
        for i in range(3):
            alone = normalize_power(raw[i:i + 1])
            assert torch.allclose(batch[i], alone[0], atol=1e-12)


class TestTransmitter:
    def test_output_shape_and_power(self):
        tx = build_transmitter(TINY, init_seed=0)
        bits = np.random.default_rng(0).integers(0, 2, (5, TINY.frame_bits), dtype=np.uint8)
        symbols = transmit(tx, bits).detach()
        assert symbols.shape == (5, 4, 2)
        power = (symbols ** 2).sum(-1).mean(-1)
        assert float((power - 1.0).abs().max()) < 1e-6

    def test_half_rate_doubles_symbols(self):
        cfg = LinkConfig(6, 10, 20)
        tx = build_transmitter(cfg, init_seed=0)
        bits = np.zeros((2, cfg.frame_bits), dtype=np.uint8)
        bits[:, ::3] = 1
        assert transmit(tx, bits).shape == (2, 20, 2)

    def test_single_frame_input(self):
        tx = build_transmitter(TINY, init_seed=0)
        frame = np.ones(TINY.frame_bits, dtype=np.uint8)
        assert transmit(tx, frame).shape == (4, 2)

    def test_inference_deterministic(self):
        tx = build_transmitter(TINY, init_seed=3)
        bits = np.random.default_rng(1).integers(0, 2, (2, TINY.frame_bits), dtype=np.uint8)
        a = transmit(tx, bits)
        b = transmit(tx, bits)
        assert torch.equal(a, b)

    def test_init_deterministic(self):
        a = build_transmitter(TINY, init_seed=11)
        b = build_transmitter(TINY, init_seed=11)
        for (ka, va), (kb, vb) in zip(a.state_dict().items(), b.state_dict().items()):
            assert ka == kb
            assert torch.equal(va, vb)

    def test_shape_mismatch_rejected(self):
        tx = build_transmitter(TINY, init_seed=0)
        with pytest.raises(ValueError):
            transmit(tx, np.zeros((2, TINY.frame_bits + 1), dtype=np.uint8))


class TestReceiver:
    @pytest.mark.parametrize("mp,expected", [(400, 6), (800, 3), (600, 4)])
    def test_step_width(self, mp, expected):
        assert LinkConfig(6, 400, mp).rx_step_width == expected

    def test_untrained_outputs_are_probabilities(self):
        rx = build_receiver(TINY, init_seed=0)
        g = torch.Generator().manual_seed(0)
        symbols = torch.randn((3, TINY.symbol_count, 2), generator=g)
        probs = receive(rx, symbols)
        assert probs.shape == (3, TINY.frame_bits)
        assert float(probs.min()) >= 0.0
        assert float(probs.max()) <= 1.0

    def test_single_frame_input(self):
        rx = build_receiver(TINY, init_seed=0)
        probs = receive(rx, torch.zeros((TINY.symbol_count, 2)) + 0.5)
        assert probs.shape == (TINY.frame_bits,)

    def test_inference_deterministic(self):
        rx = build_receiver(TINY, init_seed=2)
        g = torch.Generator().manual_seed(4)
        symbols = torch.randn((2, TINY.symbol_count, 2), generator=g)
        assert torch.equal(receive(rx, symbols), receive(rx, symbols))

    def test_shape_mismatch_rejected(self):
        rx = build_receiver(TINY, init_seed=0)
        with pytest.raises(ValueError):
            receive(rx, torch.zeros((2, TINY.symbol_count + 1, 2)))


class TestEndToEndShapes:
    @pytest.mark.parametrize("s,m,mp", [(2, 4, 4), (6, 10, 10), (6, 10, 20), (6, 12, 18),
                                        (4, 6, 12), (3, 8, 24)])
    def test_identity_channel_round_trip_shape(self, s, m, mp):
        """transmit -> receive is defined for every integral-width geometry."""
        cfg = LinkConfig(s, m, mp)
        tx = build_transmitter(cfg, init_seed=0)
        rx = build_receiver(cfg, init_seed=1)
        bits = np.random.default_rng(8).integers(0, 2, (2, cfg.frame_bits), dtype=np.uint8)
        probs = receive(rx, transmit(tx, bits))
        assert probs.shape == (2, cfg.frame_bits)


class TestHardDecision:
    def test_threshold_and_tie(self):
        assert np.array_equal(hard_decision([0.9, 0.1, 0.5]), [1, 0, 0])

    def test_extremes(self):
        assert np.array_equal(hard_decision(np.zeros(4)), np.zeros(4, dtype=np.uint8))
        assert np.array_equal(hard_decision(np.ones(4)), np.ones(4, dtype=np.uint8))

    def test_accepts_tensor(self):
        out = hard_decision(torch.tensor([[0.6, 0.4]]))
        assert out.dtype == np.uint8
        assert np.array_equal(out, [[1, 0]])


class TestGradientFlow:
    def test_finite_difference_check(self):
        """Autograd gradients of the end-to-end loss match central differences.

        Ten parameters sampled across both networks, step 1e-4, relative
        error under 1e-2 (double precision, noiseless channel).
        """
        torch.manual_seed(0)
        tx = build_transmitter(TINY, init_seed=21).double()
        rx = build_receiver(TINY, init_seed=22).double()
        tx.eval()
        rx.eval()
        g = torch.Generator().manual_seed(31)
        bits = torch.randint(0, 2, (8, TINY.frame_bits), generator=g).double()
        loss_fn = torch.nn.BCELoss()

        def loss_value():
            probs = receive(rx, transmit(tx, bits))
            return loss_fn(probs, bits)

        loss = loss_value()
        loss.backward()

        named = [(n, p) for n, p in list(tx.named_parameters()) + list(rx.named_parameters())
                 if p.requires_grad]
        rng = np.random.default_rng(17)
        picks = rng.choice(len(named), size=10, replace=False)
        step = 1e-4
        checked = 0
        for idx in picks:
            name, param = named[idx]
            flat_idx = int(rng.integers(param.numel()))
            with torch.no_grad():
                original = param.view(-1)[flat_idx].item()
                param.view(-1)[flat_idx] = original + step
                hi = loss_value().item()
                param.view(-1)[flat_idx] = original - step
                lo = loss_value().item()
                param.view(-1)[flat_idx] = original
            fd = (hi - lo) / (2 * step)
            autograd = param.grad.view(-1)[flat_idx].item()
            denom = max(abs(fd), abs(autograd), 1e-8)
            assert abs(fd - autograd) / denom < 1e-2, \
                f"{name}[{flat_idx}]: autograd {autograd:.3e} vs fd {fd:.3e}"
            checked += 1
        assert checked == 10

    def test_gradient_flows_through_channel(self):
        """Noise is additive, so gradients reach the transmitter through it."""
        tx = build_transmitter(TINY, init_seed=1)
        rx = build_receiver(TINY, init_seed=2)
        tx.train()
        rx.train()
        bits = torch.randint(0, 2, (4, TINY.frame_bits),
                             generator=torch.Generator().manual_seed(3)).float()
        symbols = tx(bits)
        noisy = apply_awgn(symbols, NoiseSpec(6.0, 0.05), torch.Generator().manual_seed(4))
        loss = torch.nn.functional.binary_cross_entropy_with_logits(rx(noisy), bits)
        loss.backward()
        grads = [p.grad for p in tx.parameters()]
        assert all(g is not None for g in grads)
        assert any(float(g.abs().max()) > 0 for g in grads)
