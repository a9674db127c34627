import colorsys
import csv
from pathlib import Path

import numpy as np
import pytest

from ordinal_depth import codec
from ordinal_depth.cli import main
from ordinal_depth.errors import ConfigError, NumericError
from ordinal_depth.harness import ablate, config, plots, render
from ordinal_depth.harness.config import ExperimentConfig
from ordinal_depth.harness.inference import infer
from ordinal_depth.harness.training import init_network, load_splits, train
from ordinal_depth.losses import sigmoid, softmax
from ordinal_depth.network import ModelConfig, Network, checkpoint_hash, load_checkpoint
from ordinal_depth.discretizer import DiscretizationSpec
from ordinal_depth.tensorcore import Rng

GOLDEN = Path(__file__).parent / "golden"

TINY = ExperimentConfig(iterations=6, eval_every=3, n_train=6, n_eval=3, base_width=4,
                        groups_per_norm=2, m_d=16, batch_size=2)


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------ config

def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(seed=3, dilation_rates=(1, 3), crop=(24, 40), flip=False, lr=3e-4,
                           loss_kind="mae-regression", out_dir="x/y")
    assert config.loads(config.dumps(cfg)) == cfg
    config.save(cfg, tmp_path / "c.txt")
    assert config.load(tmp_path / "c.txt") == cfg


def test_config_text_format():
    cfg = config.loads("# comment\n\nseed = 4  # trailing\ncrop=16x24\ndilation_rates=1,2\nflip=false\n")
    assert (cfg.seed, cfg.crop, cfg.dilation_rates, cfg.flip) == (4, (16, 24), (1, 2), False)
    assert "crop=32x48" not in config.dumps(cfg)


@pytest.mark.parametrize("text", ["nope=1", "lr=fast", "seed", "loss_kind=l2", "lam=-1",
                                  "crop=64x64", "base_width=6"])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        config.loads(text)


def test_config_digest():
    a = ExperimentConfig()
    assert a.digest() == a.replace(out_dir="elsewhere").digest()
    assert a.digest() != a.replace(lr=1e-3).digest()


# ---------------------------------------------------------------- training

def test_zero_iterations_returns_initial_parameters():
    cfg = TINY.replace(iterations=0)
    net, log = train(cfg, write=False)
    ref = init_network(cfg)
    for k in ref.params:
        np.testing.assert_array_equal(net.params[k], ref.params[k])
    assert [r["iteration"] for r in log.evals] == [0] and log.iterations == []


def test_training_is_deterministic(tmp_path):
    train(TINY.replace(out_dir=str(tmp_path / "a")))
    train(TINY.replace(out_dir=str(tmp_path / "b")))
    for name in ("runlog.csv", "evals.csv", "hashes.txt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_outputs_and_checkpoint_references(tmp_path):
    cfg = TINY.replace(out_dir=str(tmp_path))
    net, log = train(cfg)
    rows = read_csv(tmp_path / "runlog.csv")
    assert [int(r["iteration"]) for r in rows] == list(range(1, 7))
    assert {r["config_hash"] for r in rows} == {cfg.digest()}
    evals = read_csv(tmp_path / "evals.csv")
    assert [int(r["iteration"]) for r in evals] == [3, 6]
    for r in evals:
        ck = tmp_path / "checkpoints" / f"iter_{int(r['iteration']):06d}"
        assert checkpoint_hash(load_checkpoint(ck, cfg.model_config())) == r["checkpoint"]
    assert checkpoint_hash(load_checkpoint(tmp_path / "final", cfg.model_config())) == evals[-1]["checkpoint"]


def test_training_reduces_loss_on_default_toy_config():
    cfg = ExperimentConfig(iterations=500, eval_every=500)
    _, log = train(cfg, write=False)
    totals = [r["total"] for r in log.iterations]
    assert np.mean(totals[-25:]) < np.mean(totals[:25])
    assert totals[-1] < totals[0]


def test_lambda_zero_keeps_semantic_head_at_init():
    cfg = TINY.replace(lam=0.0)
    net, _ = train(cfg, write=False)
    ref = init_network(cfg)
    for k, v in net.params.items():
        if k.startswith("sem."):
            np.testing.assert_array_equal(v, ref.params[k])
    assert not np.array_equal(net.params["depth.out.kernel"], ref.params["depth.out.kernel"])


def test_non_finite_loss_aborts_with_dump(tmp_path):
    cfg = TINY.replace(loss_kind="mae-regression", lr=1e6, iterations=50, out_dir=str(tmp_path))
    with np.errstate(all="ignore"), pytest.raises(NumericError, match="iteration"):
        train(cfg)
    dumps = list((tmp_path / "failure").glob("batch_*.npz"))
    assert len(dumps) == 1
    with np.load(dumps[0]) as z:
        assert z["images"].shape[0] == cfg.batch_size


def test_splits_are_disjoint_and_sized():
    train_set, eval_set = load_splits(TINY)
    assert len(train_set) == 6 and len(eval_set) == 3
    assert train_set[0].meta["index"] == "0" and eval_set[0].meta["index"] == "6"


# --------------------------------------------------------------- inference

SPEC = DiscretizationSpec(2.0, 80.0, 16)
MCFG = ModelConfig(base_width=4, groups_per_norm=2, m_d=16, m_s=6, seed=2)


def test_flip_merge_off_is_raw_forward_and_decode():
    net = Network(MCFG)
    x = Rng(0).uniform((2, 3, 16, 24), 0, 1)
    pred = infer(net, x, SPEC)
    d, s, _ = net.forward(x)
    depth, valid = codec.decode_to_depth(sigmoid(d), SPEC)
    np.testing.assert_array_equal(pred.depth, np.where(valid, depth, SPEC.d_max))
    np.testing.assert_array_equal(pred.labels, np.argmax(softmax(s, axis=1), axis=1))


def test_flip_merge_matches_explicit_reference():
    net = Network(MCFG)
    x = Rng(1).uniform((2, 3, 16, 24), 0, 1)
    pred = infer(net, x, SPEC, flip_merge=True)
    d, s, _ = net.forward(x)
    df, sf, _ = net.forward(x[..., ::-1].copy())
    pd = 0.5 * (sigmoid(d) + sigmoid(df)[..., ::-1])
    ps = 0.5 * (softmax(s, axis=1) + softmax(sf, axis=1)[..., ::-1])
    depth, valid = codec.decode_to_depth(pd, SPEC)
    np.testing.assert_allclose(pred.depth_volume, pd, rtol=0, atol=1e-15)
    np.testing.assert_array_equal(pred.depth, np.where(valid, depth, SPEC.d_max))
    np.testing.assert_array_equal(pred.labels, np.argmax(ps, axis=1))


def test_flip_merge_on_symmetric_input_equals_single_pass():
    # only a mirror-equivariant network can satisfy this, so symmetrise kernels
    net = Network(MCFG)
    for k, v in net.params.items():
        if k.endswith(".kernel"):
            v[:] = 0.5 * (v + v[..., ::-1])
    x = Rng(2).uniform((1, 3, 16, 12), 0, 1)
    x = np.concatenate([x, x[..., ::-1]], axis=-1)
    single = infer(net, x, SPEC)
    merged = infer(net, x, SPEC, flip_merge=True)
    np.testing.assert_allclose(merged.depth_volume, single.depth_volume, rtol=0, atol=1e-12)
    np.testing.assert_allclose(merged.sem_volume, single.sem_volume, rtol=0, atol=1e-12)
    np.testing.assert_array_equal(merged.labels, single.labels)


# ----------------------------------------------------------------- ablation

def test_ablation_controls_and_absent_semantics(tmp_path):
    rows = ablate.ablate(TINY, "semantic-loss", out_dir=tmp_path)
    assert [r["variant"] for r in rows] == ["lam=0", "lam=10"]
    assert len({r["dataset_hash"] for r in rows}) == 1
    assert len({r["batch_hash"] for r in rows}) == 1
    on_disk = read_csv(tmp_path / "ablation_semantic-loss.csv")
    assert on_disk[0]["sem_acc"] == "" and on_disk[0]["sem_mean_iou"] == ""
    assert float(on_disk[1]["sem_acc"]) > 0
    assert list(on_disk[0]) == ablate.COLUMNS


def test_ablation_variants():
    names = [n for n, _ in ablate.variants(ExperimentConfig(), "m-depth")]
    assert names == ["m_d=96", "m_d=128", "m_d=160"]
    cfgs = [c for _, c in ablate.variants(ExperimentConfig(), "loss-kind")]
    assert [c.loss_kind for c in cfgs] == ["ordinal", "mae-regression"]
    with pytest.raises(ConfigError):
        ablate.variants(ExperimentConfig(), "depth-of-field")


def test_regression_variant_has_no_class_accuracy():
    rows = ablate.ablate(TINY.replace(iterations=2, eval_every=2), "loss-kind", write=False)
    assert rows[0]["depth_class_acc"] is not None and rows[1]["depth_class_acc"] is None


# ------------------------------------------------------------------ render

def test_depth_ramp_golden_file(tmp_path):
    ramp = np.tile(np.geomspace(80.0, 2.0, 64), (4, 1))
    out = render.write_png(tmp_path / "ramp.png", render.colorize_depth(ramp))
    assert out.read_bytes() == (GOLDEN / "depth_ramp.png").read_bytes()
    rgb = render.colorize_depth(ramp)[0] / 255.0
    hue = [colorsys.rgb_to_hsv(*c)[0] for c in rgb]
    assert np.all(np.diff(hue) <= 0) and hue[0] > hue[-1]


def test_invalid_pixels_are_black():
    depth = np.array([[10.0, 0.0], [5.0, 20.0]])
    valid = np.array([[True, True], [False, True]])
    rgb = render.colorize_depth(depth, valid)
    assert not rgb[0, 1].any() and not rgb[1, 0].any() and rgb[0, 0].any()
    assert not render.colorize_labels(np.array([[255]]))[0, 0].any()
    assert not render.colorize_error(np.array([[-1.0]]))[0, 0].any()


def test_error_map_runs_blue_to_red():
    lo, hi = render.colorize_error(np.array([[0.0, 1.0]]))[0].astype(int)
    assert lo[2] > lo[0] and hi[0] > hi[2]


def test_render_outputs_are_deterministic(tmp_path):
    rng = Rng(4)
    depth, labels = rng.uniform((8, 8), 2, 80), rng.integers(6, (8, 8))
    scores = rng.uniform((8, 8), -0.5, 1)
    a = render.render_outputs(tmp_path / "a", "s", depth, labels, scores)
    b = render.render_outputs(tmp_path / "b", "s", depth, labels, scores)
    assert [p.read_bytes() for p in a] == [p.read_bytes() for p in b]


def test_report_figures(tmp_path):
    d = Rng(0).uniform((20, 20), 2, 80)
    specs = {"exp": DiscretizationSpec(m_d=32), "lin": DiscretizationSpec(m_d=32, scheme="linear-depth")}
    assert plots.class_histograms(d, d > 0, specs, tmp_path / "h.png").stat().st_size > 0
    rows = [{"variant": "a", "rmse": 1.0}, {"variant": "b", "rmse": 2.0}, {"variant": "a", "rmse": 1.5}]
    assert plots.ablation_bars(rows, tmp_path / "b.png").stat().st_size > 0


# --------------------------------------------------------------------- CLI

def _tiny_cfg_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    config.save(TINY, path)
    return str(path)


def test_cli_train_eval_render(tmp_path, capsys):
    cfg = _tiny_cfg_file(tmp_path)
    run = str(tmp_path / "run")
    assert main(["train", "--config", cfg, "--out-dir", run]) == 0
    assert (tmp_path / "run" / "figures" / "training_curves.png").is_file()
    assert main(["eval", "--out-dir", run]) == 0
    out = capsys.readouterr().out.strip().splitlines()
    assert out[-2] == "silog,ard_pct,rmse,irmse,mean_iou,depth_class_acc"
    assert main(["render", "--out-dir", run, "--limit", "1"]) == 0
    assert (tmp_path / "run" / "render" / "6_depth.png").is_file()
    assert main(["infer", "--out-dir", run, "--flip-merge", "--limit", "2"]) == 0
    rows = read_csv(tmp_path / "run" / "predictions" / "predictions.csv")
    assert [r["sample"] for r in rows] == ["6", "7"]


def test_cli_gen_data_roundtrip(tmp_path):
    cfg = _tiny_cfg_file(tmp_path)
    assert main(["gen-data", "--config", cfg, "--out-dir", str(tmp_path / "g"), "--seed", "5"]) == 0
    rows = read_csv(tmp_path / "g" / "data" / "index.csv")
    assert len(rows) == 9 and rows[-1]["split"] == "eval"


def test_cli_exit_codes(tmp_path):
    cfg = _tiny_cfg_file(tmp_path)
    assert main(["train", "--config", cfg, "--set", "bogus=1"]) == 2
    assert main(["train", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["eval", "--out-dir", str(tmp_path / "nothing")]) == 2
    with np.errstate(all="ignore"):
        assert main(["train", "--config", cfg, "--out-dir", str(tmp_path / "bad"),
                     "--set", "loss_kind=mae-regression", "--set", "lr=1e6",
                     "--set", "iterations=50"]) == 3
    with pytest.raises(SystemExit) as exc:
        main(["ablate", "--axis", "nonsense"])
    assert exc.value.code == 2
