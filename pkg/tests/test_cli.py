import numpy as np
import pytest

from clouds import complement_pair
from manidrift import cli, fileio
from manidrift.config import read_config
from manidrift.errors import ConfigError


def run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def pair(tmp_path):
    Z, H = complement_pair(4, 12)
    fileio.save_feature_matrix(Z, tmp_path / "z.bin")
    fileio.save_feature_matrix(H, tmp_path / "h.bin")
    return tmp_path / "z.bin", tmp_path / "h.bin"


def test_drift_identical_files(capsys, tmp_path, pair):
    z, _ = pair
    code, out, _ = run(capsys, "drift", "--pretrained", str(z), "--tuned", str(z), "--rank", "4",
                       "--ranks", "1,2,4", "--out", str(tmp_path / "d.csv"))
    assert code == 0 and out == "delta=0.000000\n"
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "rank,ratio_pretrained,ratio_tuned,delta,n_samples"
    assert [ln.split(",")[3] for ln in lines[1:]] == ["0.000000"] * 3


def test_drift_complement_pair(capsys, pair):
    z, h = pair
    code, out, _ = run(capsys, "drift", "--pretrained", str(z), "--tuned", str(h), "--rank", "4")
    assert code == 0
    assert out.splitlines() == ["rank,ratio_pretrained,ratio_tuned,delta,n_samples",
                                "4,0.000000,1.000000,1.000000,8", "delta=1.000000"]


def test_drift_per_class_cap(capsys, tmp_path, pair):
    z, h = pair
    (tmp_path / "y.txt").write_text("\n".join("01230123"))
    code, out, _ = run(capsys, "drift", "--pretrained", str(z), "--tuned", str(h), "--rank", "1",
                       "--per-class-cap", "1", "--labels", str(tmp_path / "y.txt"))
    assert code == 0 and out.splitlines()[1].endswith(",4")


def test_drift_missing_tuned_is_usage(capsys, pair):
    code, _, err = run(capsys, "drift", "--pretrained", str(pair[0]))
    assert code == 2 and err.count("\n") == 1


def test_drift_rank_too_large(capsys, pair):
    code, _, err = run(capsys, "drift", "--pretrained", str(pair[0]), "--tuned", str(pair[1]))
    assert code == 1 and err.startswith("error: rank-too-large") and err.count("\n") == 1


def test_drift_bad_file(capsys, tmp_path, pair):
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + bytes(36))
    code, _, err = run(capsys, "drift", "--pretrained", str(tmp_path / "bad.bin"), "--tuned", str(pair[1]))
    assert code == 1 and "bad-magic" in err


def test_drift_csv_format(capsys, tmp_path):
    (tmp_path / "a.csv").write_text("dim=2\n1,0\n-1,0\n0,1\n")
    code, out, _ = run(capsys, "drift", "--pretrained", str(tmp_path / "a.csv"), "--tuned",
                       str(tmp_path / "a.csv"), "--format", "csv", "--rank", "1")
    assert code == 0 and out.endswith("delta=0.000000\n")


def test_bound_fixed(capsys):
    code, out, _ = run(capsys, "bound", "--tau", "1", "--classes", "2", "--samples", "100")
    assert code == 0 and out.startswith("B=2.693147, rademacher=0.000000, deviation=")


def test_bound_peeling(capsys):
    code, out, _ = run(capsys, "bound", "--classes", "2", "--samples", "128", "--mode", "peeling",
                       "--l-con", "0.5", "--radius", "5")
    assert code == 0 and out.splitlines()[-1] == "H=7"


def test_bound_degenerate(capsys):
    code, _, err = run(capsys, "bound", "--classes", "2", "--samples", "100", "--epsilon", "100")
    assert code == 1 and "degenerate-regime" in err and err.count("\n") == 1


def test_bound_bad_choice_is_usage(capsys):
    code, _, _ = run(capsys, "bound", "--classes", "2", "--samples", "100", "--mode", "other")
    assert code == 2


TRAIN_SMALL = ["--classes", "4", "--dim", "16", "--transferable-rank", "4", "--shortcut-rank", "4",
               "--train-per-class", "4", "--test-per-class", "8", "--d-pca", "4"]


def test_train_outputs_byte_stable(capsys, tmp_path):
    outs = []
    for name in ("a.csv", "b.csv"):
        code, out, _ = run(capsys, "train", *TRAIN_SMALL, "--epochs", "5", "--seed", "7",
                           "--out", str(tmp_path / name))
        assert code == 0
        outs.append(out)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert outs[0] == outs[1]
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "epoch,ce,img,txt,con,total" and len(lines) == 6
    assert outs[0].splitlines()[0] == "lambda,delta,mean_alignment,test_accuracy"


def test_train_zero_lr(capsys, tmp_path):
    code, _, _ = run(capsys, "train", *TRAIN_SMALL, "--epochs", "2", "--lr", "0", "--out", str(tmp_path / "e.csv"))
    rows = (tmp_path / "e.csv").read_text().splitlines()[1:]
    assert code == 0 and rows[0].split(",")[1:] == rows[1].split(",")[1:]


def test_train_invalid_config(capsys):
    code, _, err = run(capsys, "train", "--tau", "-1")
    assert code == 1 and err.startswith("error: invalid-parameter")


def test_compare_with_seeds(capsys, tmp_path):
    code, out, _ = run(capsys, "compare", *TRAIN_SMALL, "--epochs", "3", "--lambdas", "0,12", "--seeds", "1,2",
                       "--epochs-dir", str(tmp_path / "ep"))
    lines = out.splitlines()
    assert code == 0 and len(lines) == 3 and lines[1].startswith("0.000000,")
    assert len(list((tmp_path / "ep").iterdir())) == 4


def test_config_file(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# bound settings\nclasses = 2\nsamples = 128\nmode = peeling\nl-con = 0.5\nradius = 5\n")
    code, out, _ = run(capsys, "bound", "--config", str(cfg))
    assert code == 0 and out.splitlines()[-1] == "H=7"
    code, out, _ = run(capsys, "bound", "--config", str(cfg), "--samples", "1000")
    assert out.splitlines()[-1] == "H=10"


def test_config_rejects_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("classes = 2\nbogus = 1\n")
    code, _, err = run(capsys, "bound", "--config", str(cfg))
    assert code == 1 and "unknown key" in err


def test_config_rejects_bad_value(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("epochs = many\n")
    with pytest.raises(ConfigError):
        read_config(cfg, {"epochs": int})


def test_verify_passes(capsys):
    code, out, _ = run(capsys, "verify", "--suite", "grad", "--trials", "6")
    assert code == 0 and out.startswith("PASS grad/finite-difference: 6/6")


def test_no_command_is_usage(capsys):
    assert run(capsys)[0] == 2
