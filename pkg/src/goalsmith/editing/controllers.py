"""Attention controllers wiring the editing operators into the sampler.

The source process runs one step ahead within each timestep: its recorder
captures that step's conditional maps, which the target process's edit
controller then consumes. Both processes share the timestep's null-text
embedding, per the inversion schedule.
"""

from __future__ import annotations

import torch

from ..diffusion.sampler import AttentionRecord
from .ops import auto_strength, control_active, dd_edit, p2p_edit
from .specs import AppearanceEdit, StructureEdit


class SourceRecorder:
    """Pass-through controller holding the current step's conditional maps."""

    def __init__(self, keep_steps=(), record_self=False):
        self.step_cross = {}
        self.step_self = {}
        self.record = AttentionRecord()
        self.keep_steps = set(keep_steps)
        self.record_self = record_self
        self.t = None

    def begin_step(self, t: int):
        self.t = t
        self.step_cross = {}
        self.step_self = {}

    def __call__(self, kind: str, layer: str, probs: torch.Tensor) -> torch.Tensor:
        if kind == "cross":
            self.step_cross[layer] = probs.detach()
            if self.t in self.keep_steps:
                self.record.add(layer, self.t, probs, overridden=False)
        elif kind == "self" and self.record_self:
            self.step_self[layer] = probs.detach()
        return probs


class EditController:
    """Applies P2P injection (appearance) or P2P-DD (structure) to the target
    process using the source recorder's maps for the current step."""

    def __init__(self, source: SourceRecorder, edit, total_steps: int,
                 keep_steps=()):
        self.source = source
        self.edit = edit
        self.total_steps = total_steps
        self.record = AttentionRecord()
        self.keep_steps = set(keep_steps)
        self.t = None

    def begin_step(self, t: int):
        self.t = t

    def _edited_cross(self, layer: str, probs: torch.Tensor) -> torch.Tensor:
        src = self.source.step_cross.get(layer)
        if src is None:
            return probs
        edit, T, t = self.edit, self.total_steps, self.t
        if isinstance(edit, AppearanceEdit):
            return p2p_edit(src, probs, t, T, edit.cross_steps)
        injected = p2p_edit(src, probs, t, T, edit.steps)
        if not control_active(t, T, edit.steps):
            return injected
        c = edit.strength
        if c is None:
            c = auto_strength(injected, edit.tokens, edit.gain)
        return dd_edit(injected, edit.box, edit.tokens, c, t, T, edit.steps,
                       weaken=edit.weaken)

    def __call__(self, kind: str, layer: str, probs: torch.Tensor) -> torch.Tensor:
        t, T = self.t, self.total_steps
        if kind == "self":
            budget = getattr(self.edit, "self_steps", 0)
            if budget and control_active(t, T, budget):
                src = self.source.step_self.get(layer)
                if src is not None:
                    return src
            return probs
        out = self._edited_cross(layer, probs)
        if t in self.keep_steps:
            overridden = out is not probs
            self.record.add(layer, t, out, overridden=overridden)
        return out
