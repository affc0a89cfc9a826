"""Small text-conditioned U-Net over 64x64 pixels.

Resolutions run 64 -> 32 -> 16 -> 8. Single-head cross-attention sits at the
16x16 (down and up paths) and 8x8 (mid) feature maps so attention maps have
shape (256, 24) or (64, 24); a self-attention block at 8x8 backs the optional
self-attention injection hook. Attention probabilities pass through an
optional controller callable before they weight the values, which is the
editing surface for the whole pipeline.
"""

from __future__ import annotations

import math

import torch
from torch import nn
import torch.nn.functional as F

from ..text import D_TEXT, PROMPT_LEN

CROSS_LAYERS = ("down16", "mid8", "up16")
SELF_LAYERS = ("self8",)


def timestep_embedding(k: torch.Tensor, dim: int) -> torch.Tensor:
    half = dim // 2
    freqs = torch.exp(
        -math.log(10_000.0) * torch.arange(half, dtype=k.dtype, device=k.device) / half
    )
    args = k[:, None] * freqs[None]
    return torch.cat([torch.cos(args), torch.sin(args)], dim=-1)


def _upsampler(c_in, c_out):
    return nn.Sequential(
        nn.Upsample(scale_factor=2, mode="nearest"),
        nn.Conv2d(c_in, c_out, 3, padding=1),
    )


class ResBlock(nn.Module):
    def __init__(self, c_in, c_out, t_dim):
        super().__init__()
        groups = math.gcd(8, c_in)
        self.norm1 = nn.GroupNorm(groups, c_in)
        self.conv1 = nn.Conv2d(c_in, c_out, 3, padding=1)
        self.t_proj = nn.Linear(t_dim, c_out)
        self.norm2 = nn.GroupNorm(math.gcd(8, c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, padding=1)
        self.skip = nn.Conv2d(c_in, c_out, 1) if c_in != c_out else nn.Identity()

    def forward(self, x, t_emb):
        h = self.conv1(F.silu(self.norm1(x)))
        h = h + self.t_proj(t_emb)[:, :, None, None]
        h = self.conv2(F.silu(self.norm2(h)))
        return h + self.skip(x)


class CrossAttention(nn.Module):
    """Single-head cross-attention exposing post-softmax maps to a controller."""

    def __init__(self, channels, layer_key, d_attn=32):
        super().__init__()
        self.layer_key = layer_key
        self.d_attn = d_attn
        self.norm = nn.GroupNorm(math.gcd(8, channels), channels)
        self.q = nn.Conv2d(channels, d_attn, 1)
        self.k = nn.Linear(D_TEXT, d_attn)
        self.v = nn.Linear(D_TEXT, channels)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x, text_emb, controller=None):
        b, c, h, w = x.shape
        q = self.q(self.norm(x)).reshape(b, self.d_attn, h * w).transpose(1, 2)
        k = self.k(text_emb)  # (b, PROMPT_LEN, d_attn)
        v = self.v(text_emb)  # (b, PROMPT_LEN, c)
        logits = torch.bmm(q, k.transpose(1, 2)) / math.sqrt(self.d_attn)
        probs = torch.softmax(logits, dim=-1)  # (b, h*w, PROMPT_LEN)
        if controller is not None:
            probs = controller("cross", self.layer_key, probs)
            if probs.shape != (b, h * w, PROMPT_LEN):
                raise RuntimeError(
                    f"controller returned shape {tuple(probs.shape)} for "
                    f"{self.layer_key}, expected {(b, h * w, PROMPT_LEN)}"
                )
        out = torch.bmm(probs, v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


class SelfAttention(nn.Module):
    def __init__(self, channels, layer_key, d_attn=32):
        super().__init__()
        self.layer_key = layer_key
        self.d_attn = d_attn
        self.norm = nn.GroupNorm(math.gcd(8, channels), channels)
        self.qkv = nn.Conv2d(channels, d_attn * 2 + channels, 1)
        self.proj = nn.Conv2d(channels, channels, 1)

    def forward(self, x, controller=None):
        b, c, h, w = x.shape
        q, k, v = torch.split(self.qkv(self.norm(x)), [self.d_attn, self.d_attn, c], dim=1)
        q = q.reshape(b, self.d_attn, h * w).transpose(1, 2)
        k = k.reshape(b, self.d_attn, h * w)
        probs = torch.softmax(torch.bmm(q, k) / math.sqrt(self.d_attn), dim=-1)
        if controller is not None:
            probs = controller("self", self.layer_key, probs)
        v = v.reshape(b, c, h * w).transpose(1, 2)
        out = torch.bmm(probs, v).transpose(1, 2).reshape(b, c, h, w)
        return x + self.proj(out)


class UNet(nn.Module):
    def __init__(self, channels=(8, 16, 32, 48), t_dim=64, d_attn=32, image_size=64):
        super().__init__()
        c0, c1, c2, c3 = channels
        self.channels = tuple(channels)
        self.image_size = image_size
        self.t_dim = t_dim
        self.t_mlp = nn.Sequential(nn.Linear(t_dim, t_dim * 2), nn.SiLU(), nn.Linear(t_dim * 2, t_dim))

        self.conv_in = nn.Conv2d(3, c0, 3, padding=1)
        self.rb_d0 = ResBlock(c0, c0, t_dim)
        self.down0 = nn.Conv2d(c0, c1, 3, stride=2, padding=1)
        self.rb_d1 = ResBlock(c1, c1, t_dim)
        self.down1 = nn.Conv2d(c1, c2, 3, stride=2, padding=1)
        self.rb_d2 = ResBlock(c2, c2, t_dim)
        self.attn_d2 = CrossAttention(c2, "down16", d_attn)
        self.down2 = nn.Conv2d(c2, c3, 3, stride=2, padding=1)

        self.rb_mid1 = ResBlock(c3, c3, t_dim)
        self.attn_mid = CrossAttention(c3, "mid8", d_attn)
        self.self_mid = SelfAttention(c3, "self8", d_attn)
        self.rb_mid2 = ResBlock(c3, c3, t_dim)

        self.up2 = _upsampler(c3, c2)
        self.rb_u2 = ResBlock(c2 * 2, c2, t_dim)
        self.attn_u2 = CrossAttention(c2, "up16", d_attn)
        self.up1 = _upsampler(c2, c1)
        self.rb_u1 = ResBlock(c1 * 2, c1, t_dim)
        self.up0 = _upsampler(c1, c0)
        self.rb_u0 = ResBlock(c0 * 2, c0, t_dim)

        self.norm_out = nn.GroupNorm(math.gcd(8, c0), c0)
        self.conv_out = nn.Conv2d(c0, 3, 3, padding=1)
        nn.init.zeros_(self.conv_out.weight)
        nn.init.zeros_(self.conv_out.bias)

    def forward(self, x, k, text_emb, controller=None):
        """Predict the noise in x at training timestep k (float tensor, (B,))."""
        t_emb = self.t_mlp(timestep_embedding(k, self.t_dim))

        h0 = self.rb_d0(self.conv_in(x), t_emb)
        h1 = self.rb_d1(self.down0(h0), t_emb)
        h2 = self.rb_d2(self.down1(h1), t_emb)
        h2 = self.attn_d2(h2, text_emb, controller)
        m = self.down2(h2)
        m = self.rb_mid1(m, t_emb)
        m = self.attn_mid(m, text_emb, controller)
        m = self.self_mid(m, controller)
        m = self.rb_mid2(m, t_emb)

        u2 = self.rb_u2(torch.cat([self.up2(m), h2], dim=1), t_emb)
        u2 = self.attn_u2(u2, text_emb, controller)
        u1 = self.rb_u1(torch.cat([self.up1(u2), h1], dim=1), t_emb)
        u0 = self.rb_u0(torch.cat([self.up0(u1), h0], dim=1), t_emb)
        return self.conv_out(F.silu(self.norm_out(u0)))
