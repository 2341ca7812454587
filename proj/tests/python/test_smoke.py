import numpy as np
import pytest

import compvid


def test_generate_and_round_trip(tmp_path):
    seq = compvid.generate_sequence(3, n_blocks=3, horizon=6, canvas=32)
    assert seq.frames.shape == (7, 32, 32, 3)
    assert seq.frames.dtype == np.uint8
    assert seq.centers.shape == (7, 3, 2)
    assert np.all((seq.centers >= 0) & (seq.centers <= 1))
    path = tmp_path / "s.cvps"
    compvid.write_sequence(seq, path)
    assert compvid.load_sequence(path) == seq
    assert compvid.generate_sequence(3, n_blocks=3, horizon=6, canvas=32) == seq


def test_compose_matches_numpy():
    rng = np.random.default_rng(0)
    bg = rng.normal(size=(1, 3, 5, 5))
    f = rng.normal(size=(1, 2, 3, 5, 5))
    m = rng.uniform(size=(1, 2, 1, 5, 5))
    expected = (0.1 * bg + (f * m).sum(1)) / (0.1 + m.sum(1))
    np.testing.assert_allclose(compvid.compose(bg, f, m), expected, atol=1e-12)


def test_warp_stays_inside_and_kl():
    out = compvid.warp_to_frame(np.ones((1, 1, 4, 4)), np.array([[0.5, 0.5]]), 4, 16, 16)
    assert out.shape == (1, 1, 16, 16)
    assert out[0, 0, :6].sum() == 0
    assert out.sum() == pytest.approx(16.0)
    assert compvid.kl_to_standard(np.zeros((1, 8)), np.zeros((1, 8)))[0] == pytest.approx(0.0, abs=1e-12)


def test_errors_map_to_python_exceptions(tmp_path):
    with pytest.raises(compvid.ArgumentError):
        compvid.frame_error(np.zeros((1, 3, 4, 4)), np.zeros((1, 3, 4, 4)), metric="nope")
    with pytest.raises(ValueError):
        compvid.location_error(np.zeros((2, 3, 2)), np.zeros((2, 2, 2)))
    with pytest.raises(compvid.IoError):
        compvid.load_sequence(tmp_path / "missing.cvps")


def test_cli_train_and_best_of_k(tmp_path):
    data, run = tmp_path / "data", tmp_path / "run"
    assert compvid.run_cli(["generate", "--out", str(data), "--train", "2", "--val", "0", "--test", "1",
                            "--horizon", "3", "--canvas", "32"]) == 0
    assert compvid.run_cli(["train", "--data", str(data), "--out", str(run), "--canvas", "32",
                            "--crop_extent", "10", "--patch_size", "8", "--horizon", "3", "--batch_size", "2",
                            "--steps", "2", "--quiet"]) == 0
    assert compvid.run_cli(["train"]) == 2
    ckpt = compvid.load_checkpoint(run / "checkpoints" / "final.cvpk")
    assert ckpt.step == 2
    assert ckpt.config["canvas"] == "32"
    seq = compvid.generate_sequence(1, n_blocks=4, horizon=3, canvas=32)
    r = ckpt.best_of_k(seq, k=5, seed=1)
    assert r["loc_best"].shape == (3,)
    assert np.all(r["loc_best"] <= r["loc_mean"] + 1e-12)
    assert r["sample_centers"].shape == (5, 3, 4, 2)
