# -*- coding: utf-8 -*-
import itertools

import pytest
import torch
from omegaconf import OmegaConf

from src.models.errors import ConfigurationError, NumericError, TokenError
from src.models.rsvq import (
    RECONSTRUCTION_ATOL,
    IvqStageConfig,
    QuantizerConfig,
    ResidualScalarVectorQuantizer,
    ScalarQuantizer,
    SqStageConfig,
    TokenFrame,
    VectorQuantizer,
    half_width,
    ivq_quantize,
    level_offset,
    rsvq_dequantize,
    rsvq_forward_training,
    rsvq_quantize,
    sq_bound_round,
    sq_detokenize,
    sq_quantize,
    sq_tokenize,
    stage_names,
)


def _quantizer(cfg, seed=0):
    torch.manual_seed(seed)
    return ResidualScalarVectorQuantizer(cfg).double()


class TestScalarQuantizer:
    @pytest.mark.parametrize(
        "x,level,expected",
        [(0.0, 4, 0.0), (100.0, 4, 0.5), (-100.0, 4, -1.0), (0.0, 5, 0.0)],
    )
    def test_bound_round(self, x, level, expected):
        """Direct evaluation of the bounded rounding at its extremes"""
        assert sq_bound_round(x, level).item() == expected

    def test_offsets(self):
        assert level_offset(4) == 0.5
        assert level_offset(5) == 0.0
        assert level_offset(5, "printed") == 0.5
        assert half_width(4) == pytest.approx(1.5015)

    @pytest.mark.parametrize("level", [2, 3, 4, 5, 9, 10, 11])
    def test_grid_size(self, level):
        """Bounded rounding reaches exactly l distinct grid values"""
        x = torch.linspace(-20.0, 20.0, 20001, dtype=torch.float64)
        values = torch.unique(sq_bound_round(x, level))
        assert values.numel() == level

    def test_zero_input_digits(self):
        """s = 0 projects to 0 and takes the middle digit of every even level"""
        p = ScalarQuantizer(5, (4, 4, 4, 4, 4)).double()
        s_hat, digits, token = sq_quantize(torch.zeros(5, dtype=torch.float64), p)
        assert torch.equal(digits, torch.full((5,), 2, dtype=torch.long))
        assert torch.equal(s_hat, torch.zeros(5, dtype=torch.float64))
        assert token == 2 * (1 + 4 + 16 + 64 + 256)

    def test_deterministic_and_in_range(self):
        torch.manual_seed(0)
        p = ScalarQuantizer(32, (4, 4, 4, 4, 4)).double()
        s = 3.0 * torch.randn(500, 32, dtype=torch.float64)
        _, _, first = sq_quantize(s, p)
        _, _, second = sq_quantize(s, p)
        assert torch.equal(first, second)
        assert first.min() >= 0 and first.max() < 1024

    def test_printed_rule_stays_on_grid(self):
        """The printed offset shifts odd grids but digits stay in range"""
        p = ScalarQuantizer(3, (5, 5, 5), offset_rule="printed").double()
        with torch.no_grad():
            p.down_proj.weight.copy_(torch.eye(3, dtype=torch.float64))
        s = torch.tensor([[100.0, -100.0, 0.0]], dtype=torch.float64)
        _, digits, _ = sq_quantize(s, p)
        assert ((digits >= 0) & (digits < 5)).all()

    def test_non_finite_input(self):
        p = ScalarQuantizer(4, (4, 4)).double()
        with pytest.raises(NumericError):
            sq_quantize(torch.tensor([0.0, float("inf"), 0.0, 0.0]), p)


class TestTokenize:
    @pytest.mark.parametrize(
        "digits,levels,token",
        [
            ((0, 0, 0, 0, 0), (4, 4, 4, 4, 4), 0),
            ((3, 2, 1, 0, 3), (4, 4, 4, 4, 4), 795),
            ((10, 10, 9, 9, 9, 8), (11, 11, 10, 10, 10, 9), 1088999),
        ],
    )
    def test_tokenize(self, digits, levels, token):
        assert sq_tokenize(digits, levels) == token
        assert sq_detokenize(token, levels).tolist() == list(digits)

    def test_exhaustive_bijection(self):
        levels = (4, 4, 4, 4, 4)
        digits = torch.tensor(list(itertools.product(range(4), repeat=5)))
        tokens = sq_tokenize(digits, levels)
        assert torch.equal(tokens.sort().values, torch.arange(1024))
        assert torch.equal(sq_detokenize(tokens, levels), digits)

    def test_high_profile_random_bijection(self, high_cfg):
        """10^5 random digit vectors of the 1,089,000-code high profile"""
        levels = high_cfg.sq_stages[0].levels
        generator = torch.Generator().manual_seed(10)
        digits = torch.stack(
            [torch.randint(0, level, (100000,), generator=generator) for level in levels],
            -1,
        )
        tokens = sq_tokenize(digits, levels)
        assert tokens.min() >= 0 and tokens.max() < 1089000
        assert torch.equal(sq_detokenize(tokens, levels), digits)
        assert torch.unique(tokens).numel() == torch.unique(digits, dim=0).shape[0]

    def test_out_of_range(self):
        with pytest.raises(TokenError):
            sq_tokenize((4, 0, 0, 0, 0), (4, 4, 4, 4, 4))
        with pytest.raises(TokenError):
            sq_tokenize((0, 0), (4, 4, 4))
        with pytest.raises(TokenError):
            sq_detokenize(1024, (4, 4, 4, 4, 4))
        with pytest.raises(TokenError):
            sq_detokenize(-1, (4, 4, 4, 4, 4))


class TestVectorQuantizer:
    def _identity_vq(self, codebook):
        k, m = codebook.shape
        p = VectorQuantizer(m, m, k).double()
        with torch.no_grad():
            p.down_proj.weight.copy_(torch.eye(m, dtype=torch.float64))
            p.up_proj.weight.copy_(torch.eye(m, dtype=torch.float64))
            p.codebook.copy_(codebook)
        return p

    def test_exact_codevector(self):
        torch.manual_seed(1)
        codebook = torch.randn(16, 4, dtype=torch.float64)
        p = self._identity_vq(codebook)
        v_hat, token = ivq_quantize(codebook[7], p)
        assert token == 7
        assert torch.equal(v_hat, codebook[7])

    def test_tie_goes_to_lowest_index(self):
        codebook = torch.full((8, 4), 10.0, dtype=torch.float64)
        codebook[2] = torch.tensor([1.0, 0.0, 0.0, 0.0])
        codebook[5] = torch.tensor([-1.0, 0.0, 0.0, 0.0])
        p = self._identity_vq(codebook)
        _, token = ivq_quantize(torch.zeros(4, dtype=torch.float64), p)
        assert token == 2

    def test_matches_exhaustive_scan(self):
        torch.manual_seed(2)
        p = VectorQuantizer(8, 4, 16).double()
        v = torch.randn(200, 8, dtype=torch.float64)
        _, tokens = ivq_quantize(v, p)
        with torch.no_grad():
            projected = p.down_proj(v)
        for row, token in zip(projected, tokens):
            distances = ((row - p.codebook) ** 2).sum(-1)
            assert int(token) == int(torch.argmin(distances))

    def test_decode_range(self):
        p = VectorQuantizer(4, 4, 16).double()
        with pytest.raises(TokenError):
            p.decode(torch.tensor([16]))


class TestResidualQuantizer:
    def test_single_sq_stage_residual(self):
        cfg = QuantizerConfig(8, (SqStageConfig((4, 4, 4)),))
        quantizer = _quantizer(cfg)
        z = torch.randn(10, 8, dtype=torch.float64)
        result = rsvq_quantize(z, quantizer)
        assert torch.equal(result.residuals[0], z - result.stage_outputs[0])
        assert torch.equal(result.z_hat, result.stage_outputs[0])

    @pytest.mark.parametrize("cfg_name", ["low_cfg", "high_cfg"])
    def test_telescoping_and_round_trip(self, cfg_name, request):
        """
        Tokens decode to z_hat exactly; z_hat + final residual gives back z
        to float rounding, since the two sums are accumulated separately
        """
        cfg = request.getfixturevalue(cfg_name)
        quantizer = _quantizer(cfg, seed=3)
        generator = torch.Generator().manual_seed(4)
        z = torch.randn(10000, 32, generator=generator, dtype=torch.float64)
        result = rsvq_quantize(z, quantizer)

        assert result.tokens.shape == (10000, 3)
        assert torch.equal(rsvq_dequantize(result.tokens, quantizer), result.z_hat)
        reconstructed = result.z_hat + result.residuals[-1]
        assert torch.allclose(reconstructed, z, rtol=0, atol=RECONSTRUCTION_ATOL)
        for index, capacity in enumerate(cfg.capacities):
            column = result.tokens[:, index]
            assert column.min() >= 0 and column.max() < capacity

    @pytest.mark.parametrize("cfg_name", ["low_cfg", "high_cfg"])
    def test_each_stage_refines_on_average(self, cfg_name, request):
        """
        With axis-aligned SQ projections and IVQ codebooks holding a zero
        codevector, the mean squared residual never grows from stage to stage
        """
        cfg = request.getfixturevalue(cfg_name)
        quantizer = _quantizer(cfg, seed=8)
        eye = torch.eye(32, dtype=torch.float64)
        with torch.no_grad():
            for stage in quantizer.sq_stages:
                width = len(stage.levels)
                stage.down_proj.weight.copy_(eye[:width])
                stage.up_proj.weight.copy_(eye[:, :width])
            for stage in quantizer.ivq_stages:
                stage.down_proj.weight.copy_(eye)
                stage.up_proj.weight.copy_(eye)
                stage.codebook[0].zero_()
        generator = torch.Generator().manual_seed(9)
        z = torch.randn(10000, 32, generator=generator, dtype=torch.float64)
        result = rsvq_quantize(z, quantizer)

        energies = [float(z.pow(2).sum(-1).mean())]
        energies += [float(r.pow(2).sum(-1).mean()) for r in result.residuals]
        for before, after in zip(energies, energies[1:]):
            assert after <= before
        assert energies[-1] < energies[0]

    def test_single_vector_token_frame(self, low_cfg):
        quantizer = _quantizer(low_cfg)
        z = torch.randn(32, dtype=torch.float64)
        result = rsvq_quantize(z, quantizer)
        frame = result.token_frame
        assert len(frame.sq_tokens) == 1 and len(frame.ivq_tokens) == 2
        assert torch.equal(rsvq_dequantize(frame, quantizer), result.z_hat)

    def test_partial_decode(self, low_cfg):
        quantizer = _quantizer(low_cfg)
        z = torch.randn(50, 32, dtype=torch.float64)
        result = rsvq_quantize(z, quantizer)
        partial = rsvq_dequantize(result.tokens, quantizer, num_stages=1)
        assert torch.equal(partial, result.stage_outputs[0])
        nothing = rsvq_dequantize(result.tokens, quantizer, num_stages=0)
        assert torch.equal(nothing, torch.zeros_like(z))

    def test_zero_effect_tokens(self):
        """Middle digits of odd levels and a zero codevector decode to 0"""
        cfg = QuantizerConfig(6, (SqStageConfig((5, 5, 5)),), (IvqStageConfig(4, 8),))
        quantizer = _quantizer(cfg)
        with torch.no_grad():
            quantizer.ivq_stages[0].codebook[0].zero_()
        token = sq_tokenize((2, 2, 2), (5, 5, 5))
        z_hat = rsvq_dequantize(torch.tensor([token, 0]), quantizer)
        assert torch.equal(z_hat, torch.zeros(6, dtype=torch.float64))

    def test_single_ivq_decode(self):
        cfg = QuantizerConfig(6, (), (IvqStageConfig(4, 8),))
        quantizer = _quantizer(cfg)
        stage = quantizer.ivq_stages[0]
        z_hat = rsvq_dequantize(torch.tensor([5]), quantizer)
        with torch.no_grad():
            expected = stage.up_proj(stage.codebook[5])
        assert torch.equal(z_hat, expected)

    def test_token_validation(self, low_cfg):
        quantizer = _quantizer(low_cfg)
        with pytest.raises(TokenError, match="Expected 3 tokens"):
            rsvq_dequantize(torch.tensor([0, 0]), quantizer)
        with pytest.raises(TokenError):
            rsvq_dequantize(TokenFrame([1024], [0, 0]), quantizer)
        with pytest.raises(NumericError):
            rsvq_quantize(torch.full((32,), float("nan"), dtype=torch.float64), quantizer)

    def test_training_pass_matches_inference(self, high_cfg):
        quantizer = _quantizer(high_cfg, seed=5)
        z = torch.randn(64, 32, dtype=torch.float64)
        inference = rsvq_quantize(z, quantizer)
        training = rsvq_forward_training(z, quantizer)
        assert torch.equal(training.tokens, inference.tokens)
        assert torch.equal(training.z_hat.detach(), inference.z_hat)
        assert torch.equal(quantizer(z).tokens, inference.tokens)

    def test_stage_names(self, low_cfg):
        assert stage_names(low_cfg) == ["sq1", "ivq1", "ivq2"]
        plain = QuantizerConfig(
            32, (), tuple(IvqStageConfig(32, 1024, improved=False) for _ in range(3))
        )
        assert stage_names(plain) == ["vq1", "vq2", "vq3"]


def _central_jacobian(f, x, eps=1e-5):
    columns = []
    for i in range(x.numel()):
        step = torch.zeros_like(x)
        step[i] = eps
        columns.append((f(x + step) - f(x - step)) / (2.0 * eps))
    return torch.stack(columns, dim=-1)


class TestStraightThrough:
    def test_scalar_stage_matches_finite_differences(self):
        """
        With the rounding frozen the stage is U (2/l) bound(W s) plus a
        constant; points within 1e-3 of a rounding boundary are skipped
        """
        torch.manual_seed(6)
        p = ScalarQuantizer(4, (5, 6, 7)).double()
        generator = torch.Generator().manual_seed(11)

        def straight_through(x):
            return p(x, straight_through=True)[0]

        def smooth_part(x):
            return p.up_proj(2.0 * p.bound(p.down_proj(x)) / p.levels_float)

        checked = 0
        while checked < 100:
            s = 0.5 * torch.randn(4, generator=generator, dtype=torch.float64)
            with torch.no_grad():
                bounded = p.bound(p.down_proj(s))
            if (bounded - bounded.floor() - 0.5).abs().min() < 1e-3:
                continue
            analytic = torch.autograd.functional.jacobian(straight_through, s)
            with torch.no_grad():
                numeric = _central_jacobian(smooth_part, s)
            assert torch.allclose(analytic, numeric, rtol=1e-4, atol=1e-9)
            checked += 1

    def test_vector_stage_matches_finite_differences(self):
        """Inside a Voronoi cell the selection passes U_v W_v through"""
        torch.manual_seed(7)
        p = VectorQuantizer(6, 3, 32).double()
        generator = torch.Generator().manual_seed(12)

        def straight_through(x):
            return p(x, straight_through=True)[0]

        def frozen_selection(x):
            return p.up_proj(p.down_proj(x))

        checked = 0
        while checked < 100:
            v = torch.randn(6, generator=generator, dtype=torch.float64)
            with torch.no_grad():
                nearest = p.distances(p.down_proj(v)).topk(2, largest=False).values
            if nearest[1] - nearest[0] < 1e-3:
                continue
            analytic = torch.autograd.functional.jacobian(straight_through, v)
            with torch.no_grad():
                numeric = _central_jacobian(frozen_selection, v)
                _, token = ivq_quantize(v, p)
                for i in range(6):
                    step = torch.zeros_like(v)
                    step[i] = 1e-5
                    assert ivq_quantize(v + step, p)[1] == token
            assert torch.allclose(analytic, numeric, rtol=1e-4, atol=1e-9)
            checked += 1

    def test_zero_upstream_gradient(self, low_cfg):
        quantizer = _quantizer(low_cfg)
        z = torch.randn(16, 32, dtype=torch.float64)
        result = rsvq_forward_training(z, quantizer)
        (0.0 * result.z_hat).sum().backward()
        for parameter in quantizer.parameters():
            if parameter.grad is not None:
                assert torch.equal(parameter.grad, torch.zeros_like(parameter))


class TestQuantizerConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"latent_dim": 0, "sq_stages": (SqStageConfig((4,)),)},
            {"latent_dim": 8},
            {"latent_dim": 8, "sq_stages": (SqStageConfig((1, 4)),)},
            {"latent_dim": 8, "ivq_stages": (IvqStageConfig(4, 1),)},
            {"latent_dim": 8, "sq_stages": (SqStageConfig((4,)),), "offset_rule": "x"},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigurationError):
            QuantizerConfig(**kwargs)

    def test_from_config(self, low_cfg):
        cfg = OmegaConf.create(
            {
                "name": "low",
                "latent_dim": 32,
                "sq_stages": [{"levels": [4, 4, 4, 4, 4]}],
                "ivq_stages": [
                    {"code_dim": 32, "codebook_size": 1024, "improved": True},
                    {"code_dim": 32, "codebook_size": 1024},
                ],
            }
        )
        parsed = QuantizerConfig.from_config(cfg)
        assert parsed == low_cfg
        assert parsed.capacities == [1024, 1024, 1024]
