"""Whitespace tokenizer over the fixed caption vocabulary, plus the
single-layer token-embedding text encoder.

Prompts are padded to a fixed length of 24 with a dedicated pad token; the
empty prompt encodes to the null token followed by pads. The "sks" feature
token lives in the vocabulary but never appears in class prompts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .scene.caption import ALL_TEMPLATES
from .scene.spec import InputError

PROMPT_LEN = 24
D_TEXT = 64

PAD_TOKEN = "<pad>"
NULL_TOKEN = "<null>"
FEATURE_TOKEN = "sks"


def _build_vocab():
    words = []
    for t in ALL_TEMPLATES:
        for w in t.split():
            if w not in words:
                words.append(w)
    return [PAD_TOKEN, NULL_TOKEN] + words


VOCAB = _build_vocab()
VOCAB_SIZE = len(VOCAB)
TOKEN_TO_ID = {w: i for i, w in enumerate(VOCAB)}
PAD_ID = TOKEN_TO_ID[PAD_TOKEN]
NULL_ID = TOKEN_TO_ID[NULL_TOKEN]
SKS_ID = TOKEN_TO_ID[FEATURE_TOKEN]


def tokenize(text: str) -> list[int]:
    """Token ids padded to PROMPT_LEN. Raises InputError on unknown words."""
    words = text.split()
    if not words:
        ids = [NULL_ID]
    else:
        ids = []
        for w in words:
            if w not in TOKEN_TO_ID:
                raise InputError(f"unknown token {w!r}")
            ids.append(TOKEN_TO_ID[w])
    if len(ids) > PROMPT_LEN:
        raise InputError(f"prompt longer than {PROMPT_LEN} tokens")
    return ids + [PAD_ID] * (PROMPT_LEN - len(ids))


def sentence_length(text: str) -> int:
    return 1 if not text.split() else len(text.split())


def trailing_indices(text: str) -> list[int]:
    """Pad positions after the sentence: the trailing token columns."""
    return list(range(sentence_length(text), PROMPT_LEN))


@dataclass
class PromptEmbedding:
    token_ids: list
    embedding: torch.Tensor  # (PROMPT_LEN, D_TEXT)

    def token_index(self, word: str) -> int:
        tid = TOKEN_TO_ID.get(word)
        if tid is None or tid not in self.token_ids:
            raise InputError(f"{word!r} not present in this prompt")
        return self.token_ids.index(tid)


class TextEncoder(nn.Module):
    """Single embedding table; deterministic function of ids and weights."""

    def __init__(self, vocab_size: int = VOCAB_SIZE, d_text: int = D_TEXT):
        super().__init__()
        self.table = nn.Embedding(vocab_size, d_text)
        nn.init.normal_(self.table.weight, std=0.2)

    def forward(self, ids: torch.Tensor) -> torch.Tensor:
        return self.table(ids)

    def encode_prompt(self, text: str) -> PromptEmbedding:
        ids = tokenize(text)
        with torch.no_grad():
            emb = self.table(torch.tensor(ids, dtype=torch.long))
        return PromptEmbedding(token_ids=ids, embedding=emb)

    def embed_ids(self, ids: torch.Tensor) -> torch.Tensor:
        return self.table(ids)


def ids_tensor(texts) -> torch.Tensor:
    return torch.tensor([tokenize(t) for t in texts], dtype=torch.long)


def null_schedule(T: int, encoder: TextEncoder) -> torch.Tensor:
    """(T, PROMPT_LEN, D_TEXT) schedule of plain null-text embeddings."""
    base = encoder.encode_prompt("").embedding
    return base.unsqueeze(0).repeat(T, 1, 1)
