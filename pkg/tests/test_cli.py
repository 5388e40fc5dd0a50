import numpy as np
import pytest

from conftest import constant_net
from smoothcert import cli, datasets, nn, smoothing
from smoothcert.oracle import Halfspace
from smoothcert.stats import RngStream, binom_lower_bound, std_normal_quantile


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def moons(tmp_path):
    path = tmp_path / "moons.csv"
    assert run("gen-data", "--n", 400, "--seed", 3, "--out", path) == 0
    return path


def _save_halfspace(tmp_path, n=500, sigma=0.25):
    h = Halfspace.from_normal([1.0, 1.0], 0.2)
    X = np.random.default_rng(0).normal(size=(n, 2))
    ds = datasets.Dataset(X, h.label(X), 2)
    data, model = tmp_path / "hs.csv", tmp_path / "hs.model"
    datasets.save_dataset(ds, data)
    nn.save_model(h.to_network(steepness=1e6), sigma, model)
    return h, ds, data, model


def test_gen_data_writes_loadable_csv(moons):
    ds = datasets.load_dataset(moons)
    assert len(ds) == 400 and ds.d == 2
    lines = moons.read_text().splitlines()
    assert lines[0].startswith("# smoothcert-dataset v1")
    assert any(line.startswith("# build = smoothcert") for line in lines[:20])
    assert np.array_equal(ds.X, datasets.gen_two_moons(400, 0.1, 3).X)


def test_gen_data_rings_and_blobs(tmp_path):
    assert run("gen-data", "--dataset", "rings", "--radii", "1,2,3", "--n", 90, "--out", tmp_path / "r.csv") == 0
    assert datasets.load_dataset(tmp_path / "r.csv").num_classes == 3
    assert run("gen-data", "--dataset", "blobs", "--centers", "0,0;4,4", "--n", 10, "--out", tmp_path / "b.csv") == 0
    assert run("gen-data", "--dataset", "blobs", "--centers", "0,0", "--out", tmp_path / "x.csv") == 2


def test_train_gaussian_only_defaults(tmp_path, moons, capsys):
    out = tmp_path / "g.model"
    assert run("train", "--data", moons, "--mode", "gaussian_only", "--out", out) == 0
    net, sigma = nn.load_model(out)
    ds = datasets.load_dataset(moons)
    assert sigma == 0.25
    assert np.mean(nn.hard_forward(net, ds.X) == ds.y) >= 0.9
    log = cli.read_csv(tmp_path / "g.log.csv")
    assert [int(r["epoch"]) for r in log] == list(range(150))
    assert sorted(p.name for p in tmp_path.glob("g.epoch*")) == ["g.epoch0050.model", "g.epoch0100.model"]


def test_zero_epsilon_smoothadv_matches_gaussian_only(tmp_path, moons):
    common = ["--data", moons, "--epochs", 5, "--epsilon", 0, "--seed", 4]
    assert run("train", *common, "--mode", "smoothadv", "--out", tmp_path / "a.model") == 0
    assert run("train", *common, "--mode", "gaussian_only", "--out", tmp_path / "b.model") == 0
    assert (tmp_path / "a.model").read_bytes() == (tmp_path / "b.model").read_bytes()


def test_missing_dataset_exit_code(tmp_path, capsys):
    missing = tmp_path / "nowhere.csv"
    assert run("train", "--data", missing, "--out", tmp_path / "m") == 2
    assert str(missing) in capsys.readouterr().err
    assert not (tmp_path / "m").exists()


def test_config_file_and_flag_override(tmp_path, moons):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(f"# toy run\ndata = {moons}\nepochs = 2   # short\nmode = gaussian_only\nhidden = 8\n")
    assert run("train", "--config", cfg, "--epochs", 3, "--out", tmp_path / "m.model") == 0
    header = (tmp_path / "m.log.csv").read_text()
    assert "# epochs = 3\n" in header and "# hidden = 8\n" in header and "# mode = gaussian_only\n" in header
    assert len(cli.read_csv(tmp_path / "m.log.csv")) == 3


@pytest.mark.parametrize("text", ["epochs = many\n", "colour = red\n", "just words\n", "mode = adam\n"])
def test_bad_config_is_exit_2(tmp_path, moons, text):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(f"data = {moons}\n" + text)
    assert run("train", "--config", cfg, "--out", tmp_path / "m.model") == 2


def test_config_errors_exit_2(tmp_path, moons):
    assert run("train", "--config", tmp_path / "absent.cfg", "--out", tmp_path / "m") == 2
    assert run("train", "--data", moons, "--out", tmp_path / "m", "--mode", "smoothadv", "--epsilon", -1) == 2
    assert run("train", "--out", tmp_path / "m") == 2
    assert run("frobnicate") == 2


def test_certify_constant_model_on_single_class(tmp_path):
    ds = datasets.Dataset(np.random.default_rng(0).normal(size=(20, 2)), np.ones(20, int), 2)
    datasets.save_dataset(ds, tmp_path / "d.csv")
    nn.save_model(constant_net([0.0, 1.0]), 0.5, tmp_path / "c.model")
    n, alpha = 1000, 0.001
    cap = 0.5 * std_normal_quantile(binom_lower_bound(n, n, alpha).lower)
    grid = [0.0, 0.5, 1.0, cap]
    assert run("certify", "--model", tmp_path / "c.model", "--data", tmp_path / "d.csv", "--n", n,
               "--radii", ",".join(repr(r) for r in grid), "--out", tmp_path / "cert.csv") == 0
    curve = cli.read_csv(tmp_path / "cert.curve.csv")
    assert [float(r["certified_accuracy"]) for r in curve] == [1.0] * 4


def test_certify_rejects_nonpositive_sigma(tmp_path):
    _, _, data, model = _save_halfspace(tmp_path, n=10)
    assert run("certify", "--model", model, "--data", data, "--sigma", 0, "--out", tmp_path / "x.csv") == 2


def test_certify_halfspace_matches_exact_curve(tmp_path):
    h, ds, data, model = _save_halfspace(tmp_path)
    grid = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5]
    assert run("certify", "--model", model, "--data", data, "--radii", ",".join(map(str, grid)),
               "--out", tmp_path / "c.csv") == 0
    rows = cli.read_csv(tmp_path / "c.csv")
    curve = cli.read_csv(tmp_path / "c.curve.csv")
    dist = np.abs(h.margin(ds.X))
    for r, row in zip(grid, curve):
        assert abs(float(row["certified_accuracy"]) - np.mean(dist >= r)) <= 0.02
    # r = 0 is the fraction of non-abstaining correct examples
    ok = np.mean([int(r["correct"]) == 1 and int(r["prediction"]) != -1 for r in rows])
    assert float(curve[0]["certified_accuracy"]) == pytest.approx(ok)


def test_certify_output_is_independent_of_workers(tmp_path, moons):
    model = tmp_path / "m.model"
    assert run("train", "--data", moons, "--epochs", 3, "--out", model) == 0
    for w in (1, 4):
        assert run("certify", "--model", model, "--data", moons, "--n", 500, "--subsample", 60,
                   "--workers", w, "--out", tmp_path / f"w{w}.csv") == 0
    for suffix in (".csv", ".curve.csv"):
        assert (tmp_path / f"w1{suffix}").read_bytes() == (tmp_path / f"w4{suffix}").read_bytes()
    idx = [int(r["index"]) for r in cli.read_csv(tmp_path / "w1.csv")]
    assert len(idx) == 60 and idx == sorted(idx)


def test_attack_zero_epsilon_is_clean_predict(tmp_path):
    h, ds, data, model = _save_halfspace(tmp_path, n=100)
    assert run("attack", "--model", model, "--data", data, "--epsilon", "0,0.3", "--n", 1000,
               "--seed", 7, "--out", tmp_path / "a.csv") == 0
    summary = cli.read_csv(tmp_path / "a.summary.csv")
    sc = smoothing.SmoothedClassifier(h.to_network(steepness=1e6), 0.25)
    clean = np.mean([smoothing.predict(sc, x, 1000, 0.001, RngStream(7).spawn("predict", i)).prediction == y
                     for i, (x, y) in enumerate(ds)])
    assert float(summary[0]["empirical_accuracy"]) == pytest.approx(clean)
    norms = [float(r["perturbation_norm"]) for r in cli.read_csv(tmp_path / "a.csv")]
    assert max(norms) <= 0.3 + 1e-9


def test_attack_respects_certificate(tmp_path):
    _, _, data, model = _save_halfspace(tmp_path, n=300)
    r = 0.25
    assert run("certify", "--model", model, "--data", data, "--radii", f"0,{r}", "--out", tmp_path / "c.csv") == 0
    # the step net has no gradient; a sigmoid copy with the same boundary drives the attack
    h = Halfspace.from_normal([1.0, 1.0], 0.2)
    nn.save_model(h.to_network(steepness=4.0), 0.25, tmp_path / "soft.model")
    assert run("attack", "--model", tmp_path / "soft.model", "--data", data, "--epsilon", r,
               "--m-test", 16, "--out", tmp_path / "a.csv") == 0
    cert = float(cli.read_csv(tmp_path / "c.curve.csv")[1]["certified_accuracy"])
    emp = float(cli.read_csv(tmp_path / "a.summary.csv")[0]["empirical_accuracy"])
    assert emp >= cert - 0.03


def _curve_file(path, accs, radii=(0.0, 0.25, 0.5)):
    cli.write_csv(path, ["fixture"], ["radius", "certified_accuracy", "abstention_rate"],
                  [(r, a, 0.0) for r, a in zip(radii, accs)])
    return path


def test_report_envelope(tmp_path):
    a = _curve_file(tmp_path / "a.csv", [0.9, 0.5, 0.1])
    b = _curve_file(tmp_path / "b.csv", [0.8, 0.6, 0.3])
    assert run("report", a, "--out", tmp_path / "one.csv") == 0
    assert [float(r["envelope"]) for r in cli.read_csv(tmp_path / "one.csv")] == [0.9, 0.5, 0.1]
    assert run("report", a, b, "--out", tmp_path / "two.csv") == 0
    rows = cli.read_csv(tmp_path / "two.csv")
    assert [float(r["envelope"]) for r in rows] == [0.9, 0.6, 0.3]
    assert [int(r["best_curve"]) for r in rows] == [0, 1, 1]


def test_report_rejects_mismatched_grids(tmp_path):
    a = _curve_file(tmp_path / "a.csv", [0.9, 0.5, 0.1])
    b = _curve_file(tmp_path / "b.csv", [0.9, 0.5, 0.1], radii=(0.0, 0.2, 0.5))
    assert run("report", a, b, "--out", tmp_path / "r.csv") == 2


def test_upper_envelope_unit():
    rows = cli.upper_envelope([[(0.0, 0.5), (1.0, 0.2)], [(0.0, 0.4), (1.0, 0.3)]])
    assert rows == [(0.0, 0.5, 0, 0.5, 0.4), (1.0, 0.3, 1, 0.2, 0.3)]
    with pytest.raises(cli.ConfigError):
        cli.certified_curve([0], [0], [0.1], [0.2, 0.1])


def test_subsample_is_seeded():
    a = cli.select_indices(100, 10, 3)
    assert np.array_equal(a, cli.select_indices(100, 10, 3))
    assert not np.array_equal(a, cli.select_indices(100, 10, 4))
    assert np.array_equal(cli.select_indices(5, None, 0), np.arange(5))
