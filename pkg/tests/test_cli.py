"""End-to-end CLI subcommand round trips and config parsing."""
import csv
import json
import os

import numpy as np
import pytest

from dbconf import autodiff as ad
from dbconf.cli import (build_model_config, build_run_config, main,
                        parse_flat_config)
from dbconf.dataio import read_trialset


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    rc = main(["synth", "--subjects", "2", "--trials", "12",
               "--channels", "8", "--samples", "128", "--seed", "9",
               "--out-dir", str(d)])
    assert rc == 0
    return d


@pytest.fixture(scope="module")
def small_config(tmp_path_factory):
    p = tmp_path_factory.mktemp("cfg") / "run.conf"
    p.write_text(
        "# small harness config\n"
        "epochs = 2\n"
        "batch_size = 8\n"
        "seeds = 1,2\n"
        "ea.enabled = true\n"
        "model.embed_dim = 8\n"
        "model.n_temporal_layers = 1\n"
        "model.n_spatial_layers = 1\n"
        "model.pool_window = 16\n"
        "model.kernel_size = 9\n")
    return p


def test_synth_writes_eegb_and_meta(data_dir):
    files = sorted(os.listdir(data_dir))
    assert files == ["meta.json", "subject_00.eegb", "subject_01.eegb"]
    ts = read_trialset(data_dir / "subject_00.eegb")
    assert ts.trials.shape == (12, 8, 128)
    meta = json.load(open(data_dir / "meta.json"))
    assert meta["informative_channels"] == [2, 6]


def test_flat_config_parsing(small_config):
    flat = parse_flat_config(small_config)
    assert flat["epochs"] == "2"
    rc = build_run_config(flat)
    assert rc.epochs == 2 and rc.batch_size == 8 and rc.seeds == (1, 2)
    assert rc.ea.enabled is True
    mc = build_model_config(flat, channels=8, time_samples=128)
    assert mc.embed_dim == 8 and mc.pool_window == 16


def test_flat_config_rejects_garbage(tmp_path):
    p = tmp_path / "bad.conf"
    p.write_text("this line has no equals sign\n")
    with pytest.raises(ValueError, match="key = value"):
        parse_flat_config(p)


def test_align_subcommand_whitens(data_dir, tmp_path):
    out = tmp_path / "aligned.eegb"
    rc = main(["align", str(data_dir / "subject_00.eegb"), str(out)])
    assert rc == 0
    ts = read_trialset(out)
    cov = np.mean([x @ x.T for x in ts.trials], axis=0)
    np.testing.assert_allclose(cov, np.eye(8), atol=1e-6)


def test_train_eval_attention_roundtrip(data_dir, small_config, tmp_path):
    ckpt = tmp_path / "model.ckpt"
    rc = main(["--config", str(small_config), "--seed", "1",
               "--out", str(ckpt),
               "train", "--data", str(data_dir / "subject_00.eegb")])
    assert rc == 0
    assert ckpt.read_bytes()[:4] == b"DBCF"

    rc = main(["eval", "--checkpoint", str(ckpt),
               "--data", str(data_dir / "subject_00.eegb"), "--ea"])
    assert rc == 0

    att = tmp_path / "att.csv"
    rc = main(["--out", str(att), "attention", "--checkpoint", str(ckpt),
               "--data", str(data_dir / "subject_01.eegb")])
    assert rc == 0
    rows = list(csv.reader(open(att)))
    assert len(rows) == 1 + 12 + 1  # header + trials + mean row
    for r in rows[1:]:
        assert abs(sum(map(float, r[1:])) - 1.0) < 1e-9


def test_run_subcommand_writes_report(data_dir, small_config, tmp_path):
    out = tmp_path / "runout"
    rc = main(["--config", str(small_config), "--out", str(out),
               "run", "--data-dir", str(data_dir), "--protocol", "CO"])
    assert rc == 0
    report = open(out / "report.txt").read()
    assert "protocol=CO" in report and "mean_accuracy=" in report
    back = json.load(open(out / "report.json"))
    assert len(back["runs"]) == 2 * 2  # subjects x seeds


def test_params_subcommand_reports_published_total(capsys):
    rc = main(["params", "--channels", "22", "--samples", "1000"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "total=92186" in out


def test_params_ablation_flag_changes_total(capsys):
    main(["params", "--channels", "22", "--samples", "1000",
          "--no-spatial-branch"])
    out = capsys.readouterr().out
    assert "total=46570" in out


def test_gradcheck_pass_and_fail_exit_codes(capsys):
    rc = main(["--seed", "0", "gradcheck"])
    out = capsys.readouterr().out
    assert rc == 0 and "PASS" in out
    assert "max_relative_error=" in out
    rc = main(["--seed", "0", "gradcheck", "--threshold", "1e-9"])
    out = capsys.readouterr().out
    assert rc == 1 and "FAIL" in out


def test_gradcheck_catches_corrupted_backward(monkeypatch):
    # sabotage one derivative: gelu backward scaled by 1.05 must be flagged
    from dbconf.gradcheck import model_grad_check
    import numpy as _np
    from scipy.special import erf as _erf

    real_make = ad._make

    def bad_gelu(a):
        a = ad.astensor(a)
        phi = 0.5 * (1.0 + _erf(a.data / _np.sqrt(2.0)))
        pdf = _np.exp(-0.5 * a.data ** 2) / _np.sqrt(2.0 * _np.pi)
        d = phi + a.data * pdf

        def bwd(g):
            a._accumulate(g * d * 1.05)   # wrong by 5%

        return real_make(a.data * phi, (a,), bwd)

    monkeypatch.setattr(ad, "gelu", bad_gelu)
    report = model_grad_check()
    assert max(report.values()) > 1e-2
