import math

import numpy as np
import pytest

from caprnn import captioner as cap
from caprnn import nn
from caprnn.errors import ConfigError, FormatError, UsageError, VocabularyError


def toy_config(arch, precision=64):
    return cap.ModelConfig(architecture=arch, layer_size=4, vocab_size=6, image_dim=8,
                           precision=precision, seed=13)


def unit_feature(dim, seed=0):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


# -- wiring -------------------------------------------------------------------

def test_merge_output_dense_takes_concatenated_input():
    model = cap.build_model(cap.ModelConfig("merge", 128, 2539, image_dim=4096))
    assert model.out_w.shape == (256, 2539)
    assert model.cell.w_xi.shape == (128, 128)


def test_inject_lstm_takes_concatenated_input():
    model = cap.build_model(cap.ModelConfig("inject", 128, 2539, image_dim=4096))
    assert model.cell.w_xi.shape == (256, 128)
    assert model.out_w.shape == (128, 2539)


def test_same_seed_same_parameters():
    cfg = toy_config("merge")
    a = cap.build_model(cfg, seed=42)
    b = cap.build_model(cfg, seed=42)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa.value, pb.value)


def test_biases_start_at_zero():
    model = cap.build_model(toy_config("inject"))
    for p in model.parameters():
        if ".b" in p.name or p.name.startswith("lstm.b"):
            assert not p.value.any()


def test_invalid_config_rejected():
    with pytest.raises(ConfigError):
        cap.build_model(cap.ModelConfig("attend", 4, 6))
    with pytest.raises(ConfigError):
        cap.build_model(cap.ModelConfig("merge", 4, 3))
    with pytest.raises(ConfigError):
        cap.build_model(cap.ModelConfig("merge", 0, 6))


# -- forward ------------------------------------------------------------------

@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_forward_zero_parameters_gives_zero_logits(arch):
    model = cap.build_model(toy_config(arch))
    for p in model.parameters():
        p.value[...] = 0.0
    logits = cap.forward(model, unit_feature(8), [cap.START_INDEX, 3, 4])
    assert np.array_equal(logits, np.zeros(6))


@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_forward_batch_shape(arch):
    model = cap.build_model(toy_config(arch))
    feats = np.stack([unit_feature(8, s) for s in range(3)])
    prefixes = np.array([[0, 3, 4], [0, 4, 5], [0, 5, 3]])
    logits = cap.forward(model, feats, prefixes)
    assert logits.shape == (3, 6)


def test_forward_is_pure():
    model = cap.build_model(toy_config("merge"))
    feat = unit_feature(8)
    prefix = [0, 3, 4, 5]
    first = cap.forward(model, feat, prefix)
    second = cap.forward(model, feat, prefix)
    assert np.array_equal(first, second)


def test_forward_rejects_empty_or_unbracketed_prefix():
    model = cap.build_model(toy_config("merge"))
    with pytest.raises(UsageError):
        cap.forward(model, unit_feature(8), [])
    with pytest.raises(UsageError):
        cap.forward(model, unit_feature(8), [3, 4])


def test_forward_rejects_out_of_range_token():
    model = cap.build_model(toy_config("merge"))
    with pytest.raises(VocabularyError):
        cap.forward(model, unit_feature(8), [0, 9])


def prefix_state(model, feature, prefix):
    logits, state = model.decode_start(feature)
    for tok in prefix[1:]:
        logits, state = model.decode_step(state, np.array([tok]))
    return logits[0], state.hidden[0]


def test_merge_hidden_state_ignores_the_image():
    model = cap.build_model(toy_config("merge"), seed=5)
    prefix = [0, 3, 4]
    logits_a, hidden_a = prefix_state(model, unit_feature(8, 1), prefix)
    logits_b, hidden_b = prefix_state(model, unit_feature(8, 2), prefix)
    assert np.array_equal(hidden_a, hidden_b)
    assert not np.array_equal(logits_a, logits_b)


def test_inject_hidden_state_tracks_the_image():
    model = cap.build_model(toy_config("inject"), seed=5)
    prefix = [0, 3, 4]
    _, hidden_a = prefix_state(model, unit_feature(8, 1), prefix)
    _, hidden_b = prefix_state(model, unit_feature(8, 2), prefix)
    assert not np.array_equal(hidden_a, hidden_b)


@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_stepwise_decode_matches_forward(arch):
    model = cap.build_model(toy_config(arch), seed=3)
    feat = unit_feature(8, 3)
    prefix = [0, 3, 4, 5, 2]
    stepped, _ = prefix_state(model, feat, prefix)
    direct = cap.forward(model, feat, prefix)
    assert np.allclose(stepped, direct, atol=1e-12)


# -- caption loss ----------------------------------------------------------------

@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_caption_loss_uniform_logits(arch):
    model = cap.build_model(toy_config(arch))
    for p in model.parameters():
        p.value[...] = 0.0
    caption = [0, 3, 4, 5, 1]  # four predicted positions
    loss = cap.caption_loss(model, unit_feature(8), caption)
    assert abs(float(loss.data) - 4 * math.log(6)) < 1e-9


def test_caption_loss_nonnegative():
    model = cap.build_model(toy_config("merge"), seed=9)
    for seed in range(5):
        loss = cap.caption_loss(model, unit_feature(8, seed), [0, 3, 4, 1])
        assert float(loss.data) >= 0.0


def test_caption_loss_rejects_short_or_unbracketed():
    model = cap.build_model(toy_config("merge"))
    with pytest.raises(UsageError):
        cap.caption_loss(model, unit_feature(8), [0])
    with pytest.raises(UsageError):
        cap.caption_loss(model, unit_feature(8), [3, 4, 5])


@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_caption_loss_gradients_match_finite_differences(arch):
    model = cap.build_model(toy_config(arch), seed=21)
    feat = unit_feature(8, 4)
    caption = [0, 3, 4, 5, 3, 1]

    report = nn.grad_check(lambda: cap.caption_loss(model, feat, caption),
                           model.parameters(), tolerance=1e-4)
    assert report.ok, report.errors


# -- parameter counts -----------------------------------------------------------

def test_count_params_three_percent_gap_at_small_vocab():
    merge = cap.count_params(cap.ModelConfig("merge", 512, 2539, image_dim=4096))
    inject = cap.count_params(cap.ModelConfig("inject", 512, 2539, image_dim=4096))
    assert merge["total"] == 8_099_307
    assert inject["total"] == 7_847_915
    ratio = merge["total"] / inject["total"]
    assert abs(ratio - 1.032) < 0.005


def test_count_params_large_vocab_gap():
    merge = cap.count_params(cap.ModelConfig("merge", 512, 9584, image_dim=4096))
    inject = cap.count_params(cap.ModelConfig("inject", 512, 9584, image_dim=4096))
    ratio = merge["total"] / inject["total"]
    assert 1.15 <= ratio <= 1.30


def test_merge_lstm_always_smaller_than_inject_lstm():
    for x in (4, 128, 256, 512):
        for v in (6, 2539, 9584):
            merge = cap.count_params(cap.ModelConfig("merge", x, v, image_dim=4096))
            inject = cap.count_params(cap.ModelConfig("inject", x, v, image_dim=4096))
            assert merge["lstm"] < inject["lstm"]


def test_merge_total_exceeds_inject_and_gap_grows_with_vocab():
    gaps = []
    for v in (2539, 2918, 3478, 7415, 8275, 9584):
        merge = cap.count_params(cap.ModelConfig("merge", 512, v, image_dim=4096))
        inject = cap.count_params(cap.ModelConfig("inject", 512, v, image_dim=4096))
        assert merge["total"] > inject["total"]
        gaps.append(merge["total"] - inject["total"])
    assert all(b > a for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("arch", cap.ARCHITECTURES)
def test_count_params_matches_built_model(arch):
    for cfg in (toy_config(arch), cap.ModelConfig(arch, 16, 23, image_dim=8)):
        model = cap.build_model(cfg)
        assert model.num_params() == cap.count_params(cfg)["total"]


# -- checkpoints ----------------------------------------------------------------

def test_checkpoint_round_trip_bit_exact(tmp_path):
    cfg = cap.ModelConfig("merge", 8, 11, image_dim=5, precision=32, seed=2)
    model = cap.build_model(cfg)
    first = tmp_path / "a.bin"
    second = tmp_path / "b.bin"
    cap.save_checkpoint(model, first)
    loaded = cap.load_checkpoint(first)
    assert loaded.config == cfg
    for p, q in zip(model.parameters(), loaded.parameters()):
        assert np.array_equal(p.value, q.value)
    cap.save_checkpoint(loaded, second)
    assert first.read_bytes() == second.read_bytes()


def test_checkpoint_rejects_bad_magic(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + b"\x00" * 16)
    with pytest.raises(FormatError):
        cap.load_checkpoint(path)


def test_checkpoint_rejects_truncation(tmp_path):
    cfg = cap.ModelConfig("inject", 4, 6, image_dim=3)
    model = cap.build_model(cfg)
    path = tmp_path / "full.bin"
    cap.save_checkpoint(model, path)
    clipped = tmp_path / "clipped.bin"
    clipped.write_bytes(path.read_bytes()[:-7])
    with pytest.raises(FormatError):
        cap.load_checkpoint(clipped)
