import itertools

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from internal_learning.net_dsl import (
    DSR_SPEC_TEXT,
    RETARGET_SPEC_TEXT,
    GeneratorConfig,
    InvalidSpec,
    MultiScaleDiscriminator,
    NetworkSpec,
    SpecSyntaxError,
    build_discriminator,
    build_generator,
    default_generator_spec,
    discriminator_forward,
    generator_forward,
    parse_network_spec,
    patch_map_size,
    target_size,
    validate_spec,
)


def small_generator(spec, seed=0, **kw):
    kw.setdefault("base_channels", 8)
    kw.setdefault("skip_channels", 4)
    return build_generator(GeneratorConfig(spec, seed=seed, **kw))


# ---------------------------------------------------------------- parsing


def test_parse_dsr_spec():
    spec = parse_network_spec(DSR_SPEC_TEXT)
    assert spec == NetworkSpec(10, ((2, 8), (3, 7), (4, 6)), (), ())


def test_parse_retarget_spec():
    spec = parse_network_spec(RETARGET_SPEC_TEXT)
    assert spec.n_residual_blocks == 6 and spec.bottleneck_residuals == 6


def test_parse_minimal():
    spec = parse_network_spec("N=4; S={}; C={}; R=[]")
    assert spec == NetworkSpec(4)


def test_whitespace_insensitive_and_explicit_residuals():
    spec = parse_network_spec(" N = 6 ;\n S = { ( 1 , 5 ) } ; C={2,3};R=[(1,2), 2] ")
    assert spec.skips == ((1, 5),)
    assert spec.cascades == (2, 3)
    assert spec.explicit_residuals == [(1, 2)] and spec.bottleneck_residuals == 2


def test_default_spec_matches_text():
    assert default_generator_spec(10) == parse_network_spec(DSR_SPEC_TEXT)
    assert default_generator_spec(10, 6) == parse_network_spec(RETARGET_SPEC_TEXT)


@pytest.mark.parametrize(
    "text, line, col",
    [
        ("N=10; S={(2,8)(3,7)}; C={}; R=[]", 1, 15),
        ("N=10; S={}; C={}", 1, 17),
        ("N=10;\nS={(2 8)}; C={}; R=[]", 2, 7),
        ("M=10; S={}; C={}; R=[]", 1, 1),
        ("N=10; S={}; C={}; R=[] extra", 1, 24),
    ],
)
def test_syntax_errors_carry_position(text, line, col):
    with pytest.raises(SpecSyntaxError) as info:
        parse_network_spec(text)
    assert (info.value.lineno, info.value.offset) == (line, col)


def test_integer_literal_out_of_range():
    with pytest.raises(SpecSyntaxError, match="out of range"):
        parse_network_spec("N=99999999999; S={}; C={}; R=[]")


def test_mapping_form():
    spec = parse_network_spec({"depth": 10, "skips": [[2, 8], [3, 7], [4, 6]], "residuals": [6]})
    assert spec == parse_network_spec(RETARGET_SPEC_TEXT)
    assert parse_network_spec(spec.to_dict()) == spec


@settings(max_examples=60, deadline=None)
@given(
    st.integers(2, 40),
    st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), max_size=5),
    st.lists(st.integers(0, 50), max_size=4),
    st.lists(st.one_of(st.integers(1, 9), st.tuples(st.integers(0, 50), st.integers(0, 50))), max_size=4),
)
def test_text_round_trip(n, skips, cascades, residuals):
    spec = NetworkSpec(n, tuple(skips), tuple(cascades), tuple(residuals))
    assert parse_network_spec(spec.to_text()) == spec


# ---------------------------------------------------------------- validation


def test_validate_reference_specs():
    assert validate_spec(parse_network_spec(DSR_SPEC_TEXT)) == []
    assert validate_spec(parse_network_spec(RETARGET_SPEC_TEXT)) == []


def test_reversed_skip():
    v = validate_spec(NetworkSpec(10, ((8, 2),)))
    assert len(v) == 1 and v[0].message == "skip requires i<j"
    assert v[0].field == "skips" and v[0].value == (8, 2)


def test_equal_skip_indices_rejected():
    assert [x.message for x in validate_spec(NetworkSpec(10, ((4, 4),)))] == ["skip requires i<j"]


def test_residual_exceeds_depth():
    v = validate_spec(NetworkSpec(10, residuals=((9, 4),)))
    assert len(v) == 1 and v[0].message == "residual block exceeds depth"
    assert "(9, 4)" in str(v[0])


@pytest.mark.parametrize(
    "spec, field",
    [
        (NetworkSpec(1), "depth"),
        (NetworkSpec(10, ((0, 3),)), "skips"),
        (NetworkSpec(10, ((2, 11),)), "skips"),
        (NetworkSpec(10, ((2, 8), (2, 8))), "skips"),
        (NetworkSpec(10, ((2, 8), (3, 8))), "skips"),
        (NetworkSpec(10, cascades=(1,)), "cascades"),
        (NetworkSpec(10, cascades=(11,)), "cascades"),
        (NetworkSpec(10, residuals=(0,)), "residuals"),
        (NetworkSpec(10, residuals=((2, 0),)), "residuals"),
        (NetworkSpec(10, residuals=((0, 2),)), "residuals"),
    ],
)
def test_each_invariant(spec, field):
    v = validate_spec(spec)
    assert v and all(x.field == field for x in v)


def test_build_rejects_invalid_and_odd():
    with pytest.raises(InvalidSpec, match="i<j"):
        build_generator(GeneratorConfig(NetworkSpec(10, ((8, 2),))))
    with pytest.raises(ValueError, match="even"):
        build_generator(GeneratorConfig(NetworkSpec(5)))


# ---------------------------------------------------------------- generator


def test_dsr_generator_structure():
    G = small_generator(parse_network_spec(DSR_SPEC_TEXT))
    kinds = [G.layers[str(l)].kind for l in range(1, 11)]
    assert kinds == ["encoder"] * 5 + ["decoder"] * 5
    skips = {(e.src, e.dst) for e in G.edges if e.kind == "skip-concat"}
    assert skips == {("layer2", "layer8"), ("layer3", "layer7"), ("layer4", "layer6")}
    assert len(G.residual_adds) == 0


def test_retarget_generator_structure():
    G = small_generator(parse_network_spec(RETARGET_SPEC_TEXT))
    assert len([e for e in G.edges if e.kind == "skip-concat"]) == 3
    assert len(G.residual_adds) == 6 and len(G.bottleneck) == 6


@settings(max_examples=30, deadline=None)
@given(st.data())
def test_edge_counts_follow_spec(data):
    n = data.draw(st.sampled_from([4, 6, 8]))
    pairs = [(i, j) for i in range(1, n + 1) for j in range(i + 1, n + 1)]
    skips = data.draw(st.lists(st.sampled_from(pairs), max_size=3, unique_by=lambda p: p[1]))
    cascades = data.draw(st.lists(st.integers(2, n), max_size=2, unique=True))
    blocks = [(l, b) for l in range(1, n) for b in range(1, n - l + 1)]
    residuals = data.draw(st.lists(st.one_of(st.integers(1, 2), st.sampled_from(blocks)), max_size=3))
    spec = NetworkSpec(n, tuple(skips), tuple(cascades), tuple(residuals))
    assert validate_spec(spec) == []
    G = small_generator(spec, base_channels=4, skip_channels=2)
    assert len(G.concat_edges) == len(spec.skips) + len(spec.cascades)
    assert len(G.residual_adds) == spec.n_residual_blocks
    y = generator_forward(G, torch.rand(1, 3, 20, 24), 1.5, 0.5)
    assert y.shape == (1, 3, 30, 12)


def test_no_skip_ablation():
    spec = parse_network_spec(DSR_SPEC_TEXT).without_skips()
    G = small_generator(spec)
    assert G.concat_edges == []
    assert generator_forward(G, torch.rand(1, 3, 16, 16), 2, 2).shape[-2:] == (32, 32)


def test_shape_sweep():
    G = small_generator(parse_network_spec(RETARGET_SPEC_TEXT))
    x = torch.rand(1, 3, 64, 48)
    for s_h, s_w in itertools.product([0.5, 1, 1.5, 2], repeat=2):
        y = generator_forward(G, x, s_h, s_w)
        assert y.shape[-2:] == (round(s_h * 64), round(s_w * 48))


@pytest.mark.parametrize("hw, s, expected", [((64, 64), (1, 1), (64, 64)), ((64, 64), (2, 1), (128, 64)),
                                             ((100, 80), (1.5, 0.5), (150, 40)), ((33, 17), (0.5, 0.5), (17, 9))])
def test_documented_shapes(hw, s, expected):
    G = small_generator(parse_network_spec(DSR_SPEC_TEXT))
    y = generator_forward(G, torch.rand(1, 3, *hw), *s)
    assert y.shape == (1, 3, *expected)
    assert y.min() >= 0 and y.max() <= 1


def test_target_size_rules():
    assert target_size(33, 17, 0.5, 0.5) == (17, 9)  # 16.5 and 8.5 round up
    with pytest.raises(ValueError):
        target_size(10, 10, 0.0, 1.0)
    with pytest.raises(ValueError):
        target_size(2, 2, 0.1, 1.0)


def test_build_determinism():
    spec = parse_network_spec(RETARGET_SPEC_TEXT)
    a, b = small_generator(spec, seed=7), small_generator(spec, seed=7)
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb and torch.equal(pa, pb)
    c = small_generator(spec, seed=8)
    assert any(not torch.equal(p, q) for p, q in zip(a.parameters(), c.parameters()))


def test_explicit_channel_schedule():
    G = build_generator(GeneratorConfig(NetworkSpec(4, ((1, 3),)), channel_schedule=[4, 8], skip_channels=2))
    assert G.layers["1"].conv.out_channels == 4 and G.layers["2"].conv.out_channels == 8
    assert generator_forward(G, torch.rand(1, 3, 12, 12)).shape[-2:] == (12, 12)
    with pytest.raises(ValueError):
        GeneratorConfig(NetworkSpec(4), channel_schedule=[4])


def test_summary_lists_edges():
    G = small_generator(parse_network_spec(RETARGET_SPEC_TEXT))
    text = G.summary()
    assert "skip edges: 3" in text and "residual blocks: 6" in text
    assert f"total parameters: {G.count_parameters()}" in text


# ---------------------------------------------------------------- discriminator


def test_discriminator_weights_and_layers():
    D = build_discriminator((1, 1, 1, 1), seed=0)
    assert D.scale_weights.tolist() == [0.25] * 4
    assert len(D.sub_discriminators) == 4
    assert all(d.n_layers == 4 for d in D.sub_discriminators)
    assert D.scale_factors == (1.0, 0.5, 0.25, 0.125)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=4, max_size=4).filter(lambda w: sum(w) > 1e-3))
def test_weights_sum_to_one(w):
    D = MultiScaleDiscriminator(w, channels=(2, 2, 2))
    assert D.scale_weights.sum().item() == pytest.approx(1.0, abs=1e-6)


def test_all_zero_weights_rejected():
    with pytest.raises(ValueError, match="zero"):
        build_discriminator((0, 0, 0, 0))


def test_patch_map_sizes_hand_table():
    # pyramid 64, 32, 16, 8; three (k4, p2, s2) convs give n//2 + 1, the last (k4, p2, s1) gives n + 1
    table = {64: 10, 32: 6, 16: 4, 8: 3}
    D = build_discriminator(seed=0, channels=(4, 4, 4))
    out = discriminator_forward(D, torch.rand(1, 3, 64, 64))
    assert [m.shape[-1] for m in out.maps] == list(table.values())
    assert all(patch_map_size(k) == v for k, v in table.items())


def test_minimum_size_error():
    D = build_discriminator(channels=(4, 4, 4))
    with pytest.raises(ValueError, match="8x8"):
        D(torch.rand(1, 3, 7, 30))


def test_aggregate_matches_maps():
    D = build_discriminator((0.1, 0.2, 0.3, 0.4), seed=3, channels=(4, 8, 8))
    out = D(torch.rand(1, 3, 96, 96))
    expected = sum(w * m.mean() for w, m in zip([0.1, 0.2, 0.3, 0.4], out.maps))
    assert out.aggregate.item() == pytest.approx(expected.item(), rel=1e-5)


def test_aggregate_of_constant_maps():
    D = build_discriminator(channels=(4, 4, 4))
    for sub in D.sub_discriminators:
        last = sub.convs[-1]
        torch.nn.init.zeros_(last.weight)
        torch.nn.init.ones_(last.bias)
    assert D(torch.rand(1, 3, 32, 32)).aggregate.item() == pytest.approx(1.0)


def test_single_scale_weighting():
    D = build_discriminator((1, 0, 0, 0), seed=1, channels=(4, 4, 4))
    z = torch.rand(1, 3, 40, 40)
    out = D(z)
    assert out.aggregate.item() == pytest.approx(D.sub_discriminators[0](z).mean().item(), rel=1e-6)
