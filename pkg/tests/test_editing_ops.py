import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from goalsmith.diffusion.sampler import ContractError
from goalsmith.editing import (
    AppearanceEdit,
    StructureEdit,
    auto_strength,
    box_to_cells,
    dd_edit,
    p2p_dd_edit,
    p2p_edit,
    strengthening_mask,
    weakening_mask,
)
from goalsmith.scene.spec import InputError

T = 50
BOX = (0.5, 0.7, 0.7, 0.9)  # rows 0.5-0.7, cols 0.7-0.9


def rand_maps(b=0, hw=256, gen=None):
    gen = gen or torch.Generator().manual_seed(0)
    shape = (hw, 24) if b == 0 else (b, hw, 24)
    return torch.softmax(torch.randn(shape, generator=gen), dim=-1)


class TestP2PEdit:
    def test_source_during_budget(self):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(1))
        assert p2p_edit(src, tgt, 50, T, 40) is src

    def test_zero_budget_returns_target(self):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(1))
        for t in range(1, T + 1):
            assert p2p_edit(src, tgt, t, T, 0) is tgt

    def test_boundary_at_t10_n40(self):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(1))
        assert p2p_edit(src, tgt, 10, T, 40) is tgt  # 10 > 10 is false
        assert p2p_edit(src, tgt, 11, T, 40) is src

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ContractError):
            p2p_edit(rand_maps(hw=256), rand_maps(hw=64), 50, T, 40)

    @settings(max_examples=60, deadline=None)
    @given(st.integers(1, 50), st.integers(0, 50))
    def test_exact_rule_over_all_steps(self, t, budget):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(1))
        out = p2p_edit(src, tgt, t, T, budget)
        assert out is (src if t > T - budget else tgt)


class TestMasks:
    def test_full_box_argmax_central(self):
        sm = strengthening_mask((0.0, 0.0, 1.0, 1.0), (16, 16)).reshape(16, 16)
        idx = torch.nonzero(sm == sm.max())
        for r, c in idx.tolist():
            assert r in (7, 8) and c in (7, 8)

    def test_zero_outside_box(self):
        sm = strengthening_mask(BOX, (16, 16)).reshape(16, 16)
        inside = torch.zeros(16, 16, dtype=torch.bool)
        inside[8:12, 11:15] = True
        assert (sm[~inside] == 0).all()
        assert (sm[inside] > 0).all()

    def test_table_box_rasterization(self):
        assert box_to_cells(BOX, (16, 16)) == (8, 12, 11, 15)

    def test_peak_near_one(self):
        sm = strengthening_mask((0.0, 0.0, 1.0, 1.0), (17, 17))
        assert abs(sm.max().item() - 1.0) < 1e-6  # odd grid: a cell sits on the center

    def test_weakening_values(self):
        wm = weakening_mask(BOX, (16, 16), 0.01)
        assert (wm == 1.0).sum() == 16  # 4 rows x 4 cols
        assert torch.isclose(wm[wm != 1.0], torch.tensor(0.01)).all()

    def test_weakening_extremes(self):
        assert (weakening_mask(BOX, (16, 16), 1.0) == 1.0).all()
        wm0 = weakening_mask(BOX, (16, 16), 0.0).reshape(16, 16)
        assert (wm0[8:12, 11:15] == 1.0).all() and wm0.sum() == 16

    def test_degenerate_box_rejected(self):
        with pytest.raises(InputError):
            strengthening_mask((0.5, 0.5, 0.5, 0.9), (16, 16))
        with pytest.raises(InputError):
            strengthening_mask((0.9, 0.1, 0.5, 0.9), (16, 16))


class TestDDEdit:
    def test_identity_when_c0_w1(self):
        maps = rand_maps()
        for t in (1, 25, 50):
            out = dd_edit(maps, BOX, [5], 0.0, t, T, 40, weaken=1.0)
            assert torch.equal(out, maps)

    def test_identity_past_budget(self):
        maps = rand_maps()
        out = dd_edit(maps, BOX, [5], 1.0, 10, T, 40)
        assert out is maps

    def test_uniform_map_max_moves_into_box(self):
        maps = torch.full((256, 24), 0.1)
        out = dd_edit(maps, BOX, [3], 1.0, 50, T, 40).reshape(16, 16, 24)
        r, c = np.unravel_index(out[:, :, 3].argmax().item(), (16, 16))
        assert 8 <= r < 12 and 11 <= c < 15

    def test_untouched_columns_bit_identical(self):
        maps = rand_maps()
        out = dd_edit(maps, BOX, [5, 13, 23], 2.0, 50, T, 40)
        untouched = [i for i in range(24) if i not in (5, 13, 23)]
        assert torch.equal(out[:, untouched], maps[:, untouched])
        assert not torch.equal(out[:, [5]], maps[:, [5]])

    def test_rows_not_renormalized(self):
        maps = rand_maps()
        out = dd_edit(maps, BOX, [5], 3.0, 50, T, 40)
        sums = out.sum(dim=-1)
        assert (sums - 1.0).abs().max() > 0.01  # strengthening left row sums != 1

    def test_bad_token_index(self):
        with pytest.raises(InputError):
            dd_edit(rand_maps(), BOX, [24], 1.0, 50, T, 40)
        with pytest.raises(InputError):
            dd_edit(rand_maps(), BOX, [], 1.0, 50, T, 40)

    def test_batched_matches_single(self):
        maps = rand_maps(b=3)
        out = dd_edit(maps, BOX, [5, 6], 1.5, 50, T, 10)
        for i in range(3):
            single = dd_edit(maps[i], BOX, [5, 6], 1.5, 50, T, 10)
            assert torch.equal(out[i], single)


class TestComposition:
    def test_p2p_dd_equals_two_stage_on_100_random_pairs(self):
        gen = torch.Generator().manual_seed(7)
        for trial in range(100):
            hw = 256 if trial % 2 == 0 else 64
            src, tgt = rand_maps(hw=hw, gen=gen), rand_maps(hw=hw, gen=gen)
            t = int(torch.randint(1, T + 1, (1,), generator=gen))
            n = int(torch.randint(0, T + 1, (1,), generator=gen))
            c = float(torch.rand(1, generator=gen) * 2)
            combined = p2p_dd_edit(src, tgt, BOX, [4, 5, 12], c, t, T, n)
            staged = dd_edit(p2p_edit(src, tgt, t, T, n), BOX, [4, 5, 12], c, t, T, n)
            assert torch.equal(combined, staged)

    def test_reduces_to_p2p_when_c0_w1(self):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(2))
        out = p2p_dd_edit(src, tgt, BOX, [5], 0.0, 50, T, 40, weaken=1.0)
        assert torch.equal(out, src)

    def test_no_control_past_budget(self):
        src, tgt = rand_maps(), rand_maps(gen=torch.Generator().manual_seed(2))
        assert p2p_dd_edit(src, tgt, BOX, [5], 1.0, 10, T, 40) is tgt


class TestAutoStrength:
    def test_scalar_for_flat_maps(self):
        maps = rand_maps()
        c = auto_strength(maps, [5, 6], gain=2.0)
        assert torch.isclose(c, maps[:, [5, 6]].max() * 2.0)

    def test_batched(self):
        maps = rand_maps(b=4)
        c = auto_strength(maps, [5], gain=1.0)
        assert c.shape == (4,)
        assert torch.isclose(c[2], maps[2, :, 5].max())


class TestSpecs:
    def test_appearance_requires_equal_lengths(self):
        with pytest.raises(InputError):
            AppearanceEdit("a robot white table with markings on it", "a red cylinder")

    def test_unknown_word_rejected(self):
        with pytest.raises(InputError):
            AppearanceEdit("a shiny table", "a clean table")

    def test_structure_validation(self):
        with pytest.raises(InputError):
            StructureEdit("a photo of a sks cube", (0.9, 0.1, 0.5, 0.9), (4,))
        with pytest.raises(InputError):
            StructureEdit("a photo of a sks cube", BOX, ())
        with pytest.raises(InputError):
            StructureEdit("a photo of a sks cube", BOX, (30,))

    def test_roundtrip(self):
        from goalsmith.editing import edit_from_dict
        e = StructureEdit("a photo of a sks cube", BOX, (4, 5, 12), steps=10)
        assert edit_from_dict(e.to_dict()) == e
        a = AppearanceEdit(
            "a robot white table with markings on it",
            "a robot white table with nothing on it", cross_steps=40)
        assert edit_from_dict(a.to_dict()) == a
