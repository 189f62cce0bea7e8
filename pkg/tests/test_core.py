import math

import numpy as np
import pytest
import torch

from latentdrive.core import (
    GaussianParams,
    LatentCode,
    adain,
    kl_standard_normal,
    reparameterize,
)


def raw_for_sigma(sigma: float) -> float:
    """Invert softplus(raw) + 1e-6 = sigma."""
    return math.log(math.expm1(sigma - 1e-6))


class TestReparameterize:
    def test_zero_epsilon_returns_mu(self):
        params = GaussianParams(mu=torch.randn(3, 5), raw_scale=torch.randn(3, 5))
        sample = reparameterize(params, epsilon=torch.zeros(3, 5))
        assert torch.equal(sample, params.mu)

    def test_unit_sigma_passes_epsilon_through(self):
        raw = raw_for_sigma(1.0)
        params = GaussianParams(
            mu=torch.zeros(2, 4), raw_scale=torch.full((2, 4), raw, dtype=torch.float64)
        )
        eps = torch.randn(2, 4, dtype=torch.float64)
        sample = reparameterize(params, epsilon=eps)
        assert torch.allclose(sample, eps, atol=1e-9)

    def test_monte_carlo_moments(self):
        raw = raw_for_sigma(0.5)
        params = GaussianParams(
            mu=torch.full((100_000,), 2.0, dtype=torch.float64),
            raw_scale=torch.full((100_000,), raw, dtype=torch.float64),
        )
        gen = torch.Generator().manual_seed(123)
        sample = reparameterize(params, generator=gen)
        assert abs(sample.mean().item() - 2.0) < 0.01
        assert abs(sample.std().item() - 0.5) < 0.01

    def test_shape_mismatch_raises(self):
        params = GaussianParams(mu=torch.zeros(2, 3), raw_scale=torch.zeros(2, 3))
        with pytest.raises(ValueError):
            reparameterize(params, epsilon=torch.zeros(2, 4))
        with pytest.raises(ValueError):
            GaussianParams(mu=torch.zeros(2, 3), raw_scale=torch.zeros(3, 2))

    def test_gradients_match_finite_differences(self):
        torch.manual_seed(0)
        mu = torch.randn(6, dtype=torch.float64, requires_grad=True)
        raw = torch.randn(6, dtype=torch.float64, requires_grad=True)
        eps = torch.randn(6, dtype=torch.float64)

        out = reparameterize(GaussianParams(mu, raw), epsilon=eps).sum()
        grad_mu, grad_raw = torch.autograd.grad(out, (mu, raw))

        assert torch.allclose(grad_mu, torch.ones_like(mu))
        # d(sample)/d(raw) = eps * softplus'(raw) = eps * sigmoid(raw)
        assert torch.allclose(grad_raw, eps * torch.sigmoid(raw), rtol=1e-10)

        h = 1e-6
        for i in range(6):
            raw_p = raw.detach().clone()
            raw_m = raw.detach().clone()
            raw_p[i] += h
            raw_m[i] -= h
            f_p = reparameterize(GaussianParams(mu.detach(), raw_p), epsilon=eps)[i]
            f_m = reparameterize(GaussianParams(mu.detach(), raw_m), epsilon=eps)[i]
            fd = (f_p - f_m) / (2 * h)
            denom = max(abs(fd.item()), 1e-8)
            assert abs(fd.item() - grad_raw[i].item()) / denom < 1e-4


class TestKL:
    def test_standard_normal_posterior_is_zero(self):
        raw = raw_for_sigma(1.0)
        params = GaussianParams(
            mu=torch.zeros(4, 7, dtype=torch.float64),
            raw_scale=torch.full((4, 7), raw, dtype=torch.float64),
        )
        assert torch.allclose(kl_standard_normal(params), torch.zeros(4, dtype=torch.float64), atol=1e-9)

    def test_scalar_identity(self):
        raw = raw_for_sigma(1.0)
        params = GaussianParams(
            mu=torch.ones(1, 1, dtype=torch.float64),
            raw_scale=torch.full((1, 1), raw, dtype=torch.float64),
        )
        assert abs(kl_standard_normal(params).item() - 0.5) < 1e-9

    def test_matches_monte_carlo_estimate(self):
        rng = np.random.default_rng(7)
        for _ in range(3):
            mu = rng.uniform(-2, 2, size=4)
            sigma = rng.uniform(0.3, 2.0, size=4)
            raw = np.log(np.expm1(sigma - 1e-6))
            params = GaussianParams(
                mu=torch.tensor(mu[None, :]), raw_scale=torch.tensor(raw[None, :])
            )
            closed = kl_standard_normal(params).item()

            n = 1_000_000
            eps = rng.standard_normal((n, 4))
            x = mu[None, :] + sigma[None, :] * eps
            log_q = -0.5 * eps**2 - np.log(sigma)[None, :]
            log_p = -0.5 * x**2
            mc = (log_q - log_p).sum(axis=1).mean()
            assert abs(closed - mc) / abs(mc) < 0.02


class TestAdaIN:
    def test_identity_on_normalized_input(self):
        torch.manual_seed(1)
        x = torch.randn(2, 3, 16, 16, dtype=torch.float64)
        x = (x - x.mean(dim=(2, 3), keepdim=True)) / x.std(dim=(2, 3), keepdim=True, unbiased=False)
        out = adain(x, torch.ones(3, dtype=torch.float64), torch.zeros(3, dtype=torch.float64))
        assert torch.allclose(out, x, atol=1e-4)

    def test_output_moments(self):
        torch.manual_seed(2)
        x = torch.randn(1, 4, 16, 16, dtype=torch.float64) * 3.0 + 1.5
        out = adain(
            x,
            torch.full((4,), 2.0, dtype=torch.float64),
            torch.full((4,), 3.0, dtype=torch.float64),
        )
        mean = out.mean(dim=(2, 3))
        std = out.std(dim=(2, 3), unbiased=False)
        assert torch.all((mean - 3.0).abs() < 1e-4)
        assert torch.all((std - 2.0).abs() < 1e-3)

    def test_constant_map_degenerates_to_bias(self):
        x = torch.full((1, 2, 8, 8), 4.2, dtype=torch.float64)
        out = adain(
            x,
            torch.full((2,), 5.0, dtype=torch.float64),
            torch.full((2,), -1.0, dtype=torch.float64),
        )
        assert torch.allclose(out, torch.full_like(x, -1.0), atol=1e-9)

    def test_moment_property_random_trials(self):
        gen = torch.Generator().manual_seed(99)
        for _ in range(100):
            c = int(torch.randint(1, 5, (1,), generator=gen))
            n = int(torch.randint(4, 9, (1,), generator=gen))
            x = torch.randn(1, c, n, n, generator=gen, dtype=torch.float64) * 2.0
            alpha = torch.rand(c, generator=gen, dtype=torch.float64) + 0.5
            gamma = torch.randn(c, generator=gen, dtype=torch.float64)
            out = adain(x, alpha, gamma)
            mean = out.mean(dim=(2, 3))[0]
            std = out.std(dim=(2, 3), unbiased=False)[0]
            assert torch.all((mean - gamma).abs() < 1e-4)
            assert torch.all((std - alpha).abs() < 1e-3)

    def test_batched_alpha_gamma(self):
        x = torch.randn(3, 2, 4, 4, dtype=torch.float64)
        alpha = torch.rand(3, 2, dtype=torch.float64) + 0.5
        gamma = torch.randn(3, 2, dtype=torch.float64)
        out = adain(x, alpha, gamma)
        mean = out.mean(dim=(2, 3))
        assert torch.allclose(mean, gamma, atol=1e-4)


class TestLatentCode:
    def test_flatten_layout_is_theme_then_row_major_cells(self):
        theme = torch.arange(2.0).reshape(1, 2)
        content = torch.arange(2 * 2 * 3, dtype=torch.float32).reshape(1, 3, 2, 2)
        code = LatentCode(theme=theme, content=content)
        flat = code.flatten()
        # cell (0,0) channels first, then (0,1), (1,0), (1,1)
        expected = torch.tensor([[0.0, 1.0, 0.0, 4.0, 8.0, 1.0, 5.0, 9.0, 2.0, 6.0, 10.0, 3.0, 7.0, 11.0]])
        assert torch.equal(flat, expected)

    def test_unflatten_round_trip(self):
        torch.manual_seed(3)
        code = LatentCode(theme=torch.randn(5, 32), content=torch.randn(5, 16, 4, 4))
        rebuilt = LatentCode.unflatten(code.flatten(), 32, 4, 16)
        assert torch.equal(rebuilt.theme, code.theme)
        assert torch.equal(rebuilt.content, code.content)

    def test_paper_profile_flat_dim(self):
        code = LatentCode(theme=torch.zeros(1, 128), content=torch.zeros(1, 64, 4, 4))
        assert code.flat_dim == 1152
        assert code.flatten().shape == (1, 1152)

    def test_shape_validation(self):
        with pytest.raises(ValueError):
            LatentCode(theme=torch.zeros(1, 2, 3), content=torch.zeros(1, 1, 2, 2))
        with pytest.raises(ValueError):
            LatentCode(theme=torch.zeros(1, 2), content=torch.zeros(1, 1, 2, 3))
        with pytest.raises(ValueError):
            LatentCode.unflatten(torch.zeros(1, 10), 2, 2, 3)
