"""Contracts of the schedule, sampler, and trainer that hold for any weights
(no trained checkpoint needed)."""

import numpy as np
import pytest
import torch

from goalsmith.diffusion import (
    DiffusionModel,
    NoiseSchedule,
    RecordingController,
    SamplerConfig,
    TrainConfig,
    build_caption_dataset,
    ddim_sample,
    denoise_step,
    denoising_loss,
    train_diffusion,
)
from goalsmith.diffusion.sampler import ContractError, to_images, to_tensor
from goalsmith.scene.spec import InputError
from goalsmith.text import ids_tensor


@pytest.fixture(scope="module")
def model():
    return DiffusionModel.create(channels=(8, 8, 8, 8), seed=0)


class TestSchedule:
    def test_alpha_bar_monotone_and_bounded(self):
        for kind in ("cosine", "linear"):
            s = NoiseSchedule(kind)
            ab = s.alpha_bar.numpy()
            assert ab[0] == 1.0
            assert np.all(np.diff(ab) <= 1e-12)
            assert ab[-1] > 0.0

    def test_terminal_snr_positive(self):
        s = NoiseSchedule("cosine")
        assert float(s.alpha_bar[-1]) > 1e-4

    def test_tau_grid(self):
        s = NoiseSchedule("cosine", t_train=1000)
        assert s.tau(0, 50) == 0
        assert s.tau(50, 50) == 1000
        assert s.tau(1, 50) == 20

    def test_unknown_kind(self):
        with pytest.raises(InputError):
            NoiseSchedule("quadratic")

    def test_meta_roundtrip(self):
        s = NoiseSchedule("cosine", t_train=500)
        s2 = NoiseSchedule.from_meta(s.to_meta())
        assert torch.allclose(s.alpha_bar, s2.alpha_bar)


class TestImageConversion:
    def test_roundtrip(self):
        img = np.random.default_rng(0).random((64, 64, 3)).astype(np.float32)
        back = to_images(to_tensor(img), squeeze=True)
        assert np.allclose(back, img, atol=1e-6)

    def test_batching(self):
        imgs = np.random.default_rng(0).random((5, 64, 64, 3)).astype(np.float32)
        t = to_tensor(imgs)
        assert t.shape == (5, 3, 64, 64)


class TestDenoiseStep:
    def test_guidance_one_ignores_null_exactly(self, model):
        x = torch.randn(2, 3, 64, 64)
        pe = model.prompt_tensor("a red cylinder on a white table")
        x1, _ = denoise_step(model.unet, model.schedule, x, 25, pe,
                             model.null_embedding(), 1.0)
        x2, _ = denoise_step(model.unet, model.schedule, x, 25, pe,
                             torch.randn(24, 64), 1.0)
        assert torch.equal(x1, x2)

    def test_guidance_zero_ignores_prompt_exactly(self, model):
        x = torch.randn(2, 3, 64, 64)
        ne = model.null_embedding()
        x1, _ = denoise_step(model.unet, model.schedule, x, 25,
                             model.prompt_tensor("a red cylinder on a white table"), ne, 0.0)
        x2, _ = denoise_step(model.unet, model.schedule, x, 25,
                             model.prompt_tensor("a green cylinder on a white table"), ne, 0.0)
        assert torch.equal(x1, x2)

    def test_identity_controller_bit_identical(self, model):
        class Identity:
            def begin_step(self, t):
                pass

            def __call__(self, kind, layer, probs):
                return probs

        x = torch.randn(1, 3, 64, 64)
        pe = model.prompt_tensor("a red cylinder on a white table")
        ne = model.null_embedding()
        x1, _ = denoise_step(model.unet, model.schedule, x, 30, pe, ne, 7.5)
        x2, _ = denoise_step(model.unet, model.schedule, x, 30, pe, ne, 7.5,
                             controller=Identity())
        assert torch.equal(x1, x2)

    def test_t_bounds(self, model):
        x = torch.randn(1, 3, 64, 64)
        pe = model.prompt_tensor("")
        with pytest.raises(InputError):
            denoise_step(model.unet, model.schedule, x, 0, pe, pe, 1.0)
        with pytest.raises(InputError):
            denoise_step(model.unet, model.schedule, x, 51, pe, pe, 1.0)

    def test_controller_shape_contract(self, model):
        class Bad:
            def begin_step(self, t):
                pass

            def __call__(self, kind, layer, probs):
                return probs[..., :-1] if kind == "cross" else probs

        x = torch.randn(1, 3, 64, 64)
        pe = model.prompt_tensor("a red cylinder on a white table")
        with pytest.raises(RuntimeError, match="controller"):
            denoise_step(model.unet, model.schedule, x, 30, pe,
                         model.null_embedding(), 1.0, controller=Bad())


class TestDDIMSample:
    def test_deterministic(self, model):
        cfg = SamplerConfig(steps=8, guidance=7.5)
        x_T = torch.randn(2, 3, 64, 64)
        pe = model.prompt_tensor("a red cylinder on a white table")
        a = ddim_sample(model.unet, model.schedule, x_T, pe, cfg,
                        null_emb=model.null_embedding())
        b = ddim_sample(model.unet, model.schedule, x_T, pe, cfg,
                        null_emb=model.null_embedding())
        assert torch.equal(a.x0, b.x0)

    def test_recording_has_t_times_l_maps_rows_sum_one(self, model):
        cfg = SamplerConfig(steps=6, guidance=1.0)
        rc = RecordingController()
        traj = ddim_sample(model.unet, model.schedule, torch.randn(1, 3, 64, 64),
                           model.prompt_tensor("a red cylinder on a white table"),
                           cfg, controller=rc)
        assert len(rc.record.maps) == 6 * 3  # three cross layers
        for m in rc.record.maps.values():
            assert torch.allclose(m.sum(-1), torch.ones_like(m.sum(-1)), atol=1e-5)
        assert not any(rc.record.overridden.values())

    def test_trajectory_lengths(self, model):
        cfg = SamplerConfig(steps=5, guidance=1.0)
        traj = ddim_sample(model.unet, model.schedule, torch.randn(1, 3, 64, 64),
                           model.prompt_tensor(""), cfg)
        assert len(traj.states) == 6
        assert len(traj.null_embeddings) == 5

    def test_null_schedule_length_contract(self, model):
        cfg = SamplerConfig(steps=5, guidance=7.5)
        with pytest.raises(ContractError):
            ddim_sample(model.unet, model.schedule, torch.randn(1, 3, 64, 64),
                        model.prompt_tensor(""), cfg,
                        null_schedule=[model.null_embedding()] * 4)


class TestTraining:
    def test_single_pair_overfit_loss_decreases(self):
        pairs = build_caption_dataset(1, seed=3)
        model, losses = train_diffusion(
            pairs, TrainConfig(steps=100, batch=2, lr=1e-3, seed=0),
            enforce_coverage=False)
        assert np.mean(losses[-10:]) < np.mean(losses[:10])

    def test_coverage_enforced(self):
        pairs = build_caption_dataset(10, seed=0)
        with pytest.raises(InputError, match="pairs"):
            train_diffusion(pairs, TrainConfig(steps=1))

    def test_checkpoint_roundtrip(self, tmp_path, model):
        path = model.save(tmp_path / "m.ckpt")
        again = DiffusionModel.load(path)
        assert again.weights_hash() == model.weights_hash()
        x = torch.randn(1, 3, 64, 64)
        k = torch.full((1,), 500.0)
        emb = model.prompt_tensor("a red cylinder on a white table").unsqueeze(0)
        with torch.no_grad():
            a = model.unet(x, k, emb)
            b = again.unet(x, k, emb)
        assert torch.equal(a, b)


class TestGradientCheck:
    def test_denoising_loss_gradient_matches_finite_differences(self):
        """Autograd vs central differences on a miniature double-precision
        model over 8x8 images (the smallest size three downsamplings admit)."""
        torch.manual_seed(0)
        model = DiffusionModel.create(channels=(4, 4, 4, 4), d_attn=4, image_size=8)
        model.unet.double()
        model.text_encoder.double()
        with torch.no_grad():  # zero-initialized output conv would block all upstream gradients
            for p_ in model.unet.parameters():
                p_.add_(0.05 * torch.randn_like(p_))
        x0 = torch.randn(2, 3, 8, 8, dtype=torch.float64)
        ids = ids_tensor(["a red cylinder on a white table"] * 2)
        k = torch.tensor([200, 700])
        noise = torch.randn(2, 3, 8, 8, dtype=torch.float64)

        params = [p for p in model.unet.parameters() if p.requires_grad]
        loss = denoising_loss(model, x0, ids, k, noise)
        grads = torch.autograd.grad(loss, params)

        rng = np.random.default_rng(0)
        checked = 0
        for p, g in zip(params, grads):
            flat = p.detach().reshape(-1)
            gflat = g.reshape(-1)
            for _ in range(2):
                i = int(rng.integers(0, flat.numel()))
                eps = 1e-5
                orig = flat[i].item()
                with torch.no_grad():
                    flat[i] = orig + eps
                    lp = denoising_loss(model, x0, ids, k, noise).item()
                    flat[i] = orig - eps
                    lm = denoising_loss(model, x0, ids, k, noise).item()
                    flat[i] = orig
                fd = (lp - lm) / (2 * eps)
                if abs(fd) < 1e-9 and abs(gflat[i].item()) < 1e-9:
                    continue
                rel = abs(fd - gflat[i].item()) / max(abs(fd), abs(gflat[i].item()))
                assert rel < 1e-3, f"param {i}: fd {fd} vs autograd {gflat[i].item()}"
                checked += 1
        assert checked >= 20
