import numpy as np
import pytest

from mfsb.core.fusion import (
    ElementFeatures,
    FusionConfig,
    FusionOrder,
    FusionParams,
    FusionStage,
    IntraSemantics,
    Modality,
    inter_fuse,
    intra_elements,
    intra_fuse,
    run_fusion,
)
from mfsb.core.prompts import ELEMENT_ORDER, Element, PromptForm
from mfsb.core.tensor import Tensor
from mfsb.utils.errors import ConfigError, ShapeError

D = 8


def random_features(rng, elements=ELEMENT_ORDER, grid=4, memory=6):
    return ElementFeatures(
        visual={e: Tensor(rng.normal(size=(grid, D))) for e in elements},
        textual={e: Tensor(rng.normal(size=(memory, D))) for e in elements},
    )


@pytest.fixture
def live_params(rng):
    return FusionParams.create(D, 2, rng, std=0.3, zero_output=False)


class TestZeroWeights:
    def test_every_order_is_identity(self, rng):
        params = FusionParams.zeros(D, n_heads=2)
        for _ in range(100):
            feats = random_features(rng)
            for order in FusionOrder:
                for semantics in IntraSemantics:
                    out, _ = run_fusion(feats, FusionConfig(order, semantics), params)
                    for e in ELEMENT_ORDER:
                        np.testing.assert_array_equal(out.visual[e].data, feats.visual[e].data)
                        np.testing.assert_array_equal(out.textual[e].data, feats.textual[e].data)


class TestInterFusion:
    def test_shapes_preserved(self, rng, live_params):
        feats = random_features(rng)
        out = inter_fuse(feats, live_params)
        for e in ELEMENT_ORDER:
            assert out.visual[e].shape == (4, D)
            assert out.textual[e].shape == (6, D)

    def test_elements_do_not_mix(self, rng, live_params):
        feats = random_features(rng)
        bumped = feats.with_updates({}, {Element.OBJ: Tensor(feats.textual[Element.OBJ].data + 1.0)})
        a, b = inter_fuse(feats, live_params), inter_fuse(bumped, live_params)
        np.testing.assert_array_equal(a.visual[Element.ATTR].data, b.visual[Element.ATTR].data)
        assert not np.allclose(a.visual[Element.OBJ].data, b.visual[Element.OBJ].data)

    def test_uses_inter_arrows(self, rng, live_params):
        feats = random_features(rng)
        before = inter_fuse(feats, live_params).visual[Element.PAIR].data
        arrow = live_params[FusionStage.INTER, Element.PAIR, Modality.VISUAL]
        arrow.w_o.data[...] = 0.0
        np.testing.assert_array_equal(inter_fuse(feats, live_params).visual[Element.PAIR].data,
                                      feats.visual[Element.PAIR].data)
        assert not np.array_equal(before, feats.visual[Element.PAIR].data)


class TestIntraFusion:
    def perturbed_obj_text(self, feats):
        return feats.with_updates({}, {Element.OBJ: Tensor(feats.textual[Element.OBJ].data * 2.0 + 0.5)})

    def test_equations_read_partner_text(self, rng, live_params):
        feats = random_features(rng)
        a = intra_fuse(feats, live_params, IntraSemantics.EQUATIONS)
        b = intra_fuse(self.perturbed_obj_text(feats), live_params, IntraSemantics.EQUATIONS)
        assert np.max(np.abs(a.visual[Element.ATTR].data - b.visual[Element.ATTR].data)) > 1e-6

    def test_prose_ignores_partner_text(self, rng, live_params):
        feats = random_features(rng)
        a = intra_fuse(feats, live_params, IntraSemantics.PROSE)
        b = intra_fuse(self.perturbed_obj_text(feats), live_params, IntraSemantics.PROSE)
        assert np.max(np.abs(a.visual[Element.ATTR].data - b.visual[Element.ATTR].data)) <= 1e-12

    def test_pair_refined_alone(self, rng, live_params):
        feats = random_features(rng)
        out = intra_fuse(feats, live_params)
        assert out.visual[Element.PAIR].shape == (4, D)
        assert not np.allclose(out.visual[Element.PAIR].data, feats.visual[Element.PAIR].data)

    def test_lone_primitive_untouched(self, rng, live_params):
        feats = random_features(rng, elements=(Element.PAIR, Element.ATTR))
        out = intra_fuse(feats, live_params)
        np.testing.assert_array_equal(out.visual[Element.ATTR].data, feats.visual[Element.ATTR].data)

    @pytest.mark.parametrize("elements,expected", [
        ((Element.PAIR,), [Element.PAIR]),
        ((Element.ATTR,), []),
        ((Element.ATTR, Element.OBJ), [Element.ATTR, Element.OBJ]),
        ((Element.PAIR, Element.OBJ), [Element.PAIR]),
        (ELEMENT_ORDER, [Element.PAIR, Element.ATTR, Element.OBJ]),
    ])
    def test_intra_elements(self, elements, expected):
        assert intra_elements(elements) == expected


class TestRunFusion:
    def test_no_fusion_is_identity(self, rng, live_params):
        feats = random_features(rng)
        out, trace = run_fusion(feats, FusionConfig(FusionOrder.NONE), live_params)
        assert trace == []
        assert out is feats

    @pytest.mark.parametrize("order,stages", [
        (FusionOrder.INTER, [FusionStage.INTER]),
        (FusionOrder.INTRA, [FusionStage.INTRA]),
        (FusionOrder.INTER_INTRA, [FusionStage.INTER, FusionStage.INTRA]),
        (FusionOrder.INTRA_INTER, [FusionStage.INTRA, FusionStage.INTER]),
    ])
    def test_trace_follows_order(self, rng, live_params, order, stages):
        _, trace = run_fusion(random_features(rng), FusionConfig(order), live_params)
        assert [r.stage for r in trace] == stages

    def test_order_matters(self, rng, live_params):
        feats = random_features(rng)
        a, _ = run_fusion(feats, FusionConfig(FusionOrder.INTER_INTRA), live_params)
        b, _ = run_fusion(feats, FusionConfig(FusionOrder.INTRA_INTER), live_params)
        assert not np.allclose(a.visual[Element.ATTR].data, b.visual[Element.ATTR].data)

    def test_batched_visual_queries(self, rng, live_params):
        feats = ElementFeatures(
            visual={e: Tensor(rng.normal(size=(3, 4, D))) for e in ELEMENT_ORDER},
            textual={e: Tensor(rng.normal(size=(6, D))) for e in ELEMENT_ORDER},
        )
        out, _ = run_fusion(feats, FusionConfig(FusionOrder.INTER_INTRA), live_params)
        assert out.visual[Element.OBJ].shape == (3, 4, D)
        # text rows attend to each sample's visual tokens
        assert out.textual[Element.OBJ].shape == (3, 6, D)


class TestElementFeatures:
    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            ElementFeatures(
                visual={Element.PAIR: Tensor(rng.normal(size=(4, D)))},
                textual={Element.PAIR: Tensor(rng.normal(size=(6, D + 1)))},
            )

    def test_element_sets_must_agree(self, rng):
        with pytest.raises(ShapeError):
            ElementFeatures(
                visual={Element.PAIR: Tensor(rng.normal(size=(4, D)))},
                textual={Element.OBJ: Tensor(rng.normal(size=(6, D)))},
            )

    def test_form_blocks(self, rng):
        hard, soft = rng.normal(size=(3, 5, D)), rng.normal(size=(3, 4, D))
        memory = np.concatenate([hard.reshape(15, D), soft.reshape(12, D)])
        feats = ElementFeatures(
            visual={Element.ATTR: Tensor(rng.normal(size=(4, D)))},
            textual={Element.ATTR: Tensor(memory)},
            layout={Element.ATTR: ((PromptForm.HARD, 3, 5), (PromptForm.SOFT, 3, 4))},
        )
        blocks = feats.form_blocks(Element.ATTR)
        np.testing.assert_array_equal(blocks[PromptForm.HARD].data, hard)
        np.testing.assert_array_equal(blocks[PromptForm.SOFT].data, soft)


class TestFusionParams:
    def test_twelve_arrows(self, rng):
        params = FusionParams.create(D, 1, rng)
        assert len(params.arrows) == 12
        assert "fusion.intra.attr.text.w_q" in params.tensors()
        assert len(params.tensors()) == 48

    def test_missing_arrow(self, rng):
        arrows = dict(FusionParams.create(D, 1, rng).arrows)
        arrows.pop("inter.obj.visual")
        with pytest.raises(ConfigError):
            FusionParams(arrows)
