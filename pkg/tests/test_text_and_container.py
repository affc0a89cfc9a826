import numpy as np
import pytest
import torch

from goalsmith import text as T
from goalsmith.io import array_hash, load_container, save_container
from goalsmith.scene.spec import InputError


class TestTokenizer:
    def test_empty_prompt_is_null_then_pads(self):
        ids = T.tokenize("")
        assert ids[0] == T.NULL_ID
        assert all(i == T.PAD_ID for i in ids[1:])
        assert len(ids) == 24

    def test_identical_strings_identical_ids(self):
        a = T.tokenize("a robot white table with markings on it")
        b = T.tokenize("a robot white table with markings on it")
        assert a == b

    def test_sks_position_four(self):
        ids = T.tokenize("a photo of a sks cube and a gripper on a white table")
        assert ids[4] == T.SKS_ID
        emb = T.TextEncoder().encode_prompt("a photo of a sks cube and a gripper on a white table")
        assert emb.token_index("sks") == 4

    def test_unknown_token_named_in_error(self):
        with pytest.raises(InputError, match="zorp"):
            T.tokenize("a zorp table")

    def test_trailing_indices(self):
        prompt = "a photo of a sks cube and a gripper on a white table"
        trailing = T.trailing_indices(prompt)
        assert trailing == list(range(13, 24))  # 13-word sentence

    def test_pad_embedding_shared(self):
        enc = T.TextEncoder()
        e = enc.encode_prompt("a red cylinder on a white table")
        assert torch.equal(e.embedding[7], e.embedding[23])  # both pads

    def test_encoder_deterministic(self):
        enc = T.TextEncoder()
        a = enc.encode_prompt("a red cylinder on a white table").embedding
        b = enc.encode_prompt("a red cylinder on a white table").embedding
        assert torch.equal(a, b)

    def test_embedding_shape(self):
        enc = T.TextEncoder()
        e = enc.encode_prompt("")
        assert e.embedding.shape == (24, 64)


class TestContainer:
    def test_roundtrip(self, tmp_path):
        arrays = {
            "weights": np.random.default_rng(0).random((3, 4)).astype(np.float32),
            "ids": np.arange(5, dtype=np.int64),
            "bytes": np.arange(6, dtype=np.uint8),
        }
        meta = {"format": "test", "nested": {"a": 1}}
        path = save_container(tmp_path / "x.ckpt", meta, arrays)
        meta2, arrays2 = load_container(path)
        assert meta2 == meta
        for k in arrays:
            assert np.array_equal(arrays[k], arrays2[k])
            assert arrays[k].dtype == arrays2[k].dtype

    def test_little_endian_float32_layout(self, tmp_path):
        arr = np.array([1.0, -2.5], dtype=np.float32)
        path = save_container(tmp_path / "y.ckpt", {}, {"a": arr})
        raw = path.read_bytes()
        assert raw[:4] == b"GSC1"
        assert arr.astype("<f4").tobytes() in raw

    def test_array_hash_sensitivity(self):
        a = np.zeros(4, dtype=np.float32)
        b = np.zeros(4, dtype=np.float32)
        assert array_hash(a) == array_hash(b)
        b[0] = 1e-8
        assert array_hash(a) != array_hash(b)
