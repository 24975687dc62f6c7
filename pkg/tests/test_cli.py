import io

import numpy as np
import pytest

from resdg import cli
from resdg.experiments import ReferenceSpec, RunSpec
from resdg.integrators import Starred
from resdg.storage import read_csv

FAST_REF = "rk4:1e-05:100"


def run_cli(args, capsys):
    code = cli.main(args)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def load(path):
    with open(path) as fh:
        return read_csv(fh)


def test_defaults_match_published_protocol():
    args = cli.build_parser().parse_args(["run"])
    spec = cli.spec_from_args(args)
    assert spec.cfg.h == 0.001 and spec.T == 100.0
    assert spec.cfg.starred is Starred.MIDPOINT and spec.cfg.predictor == "explicit-euler"
    assert spec.cfg.tol == 1e-15 and spec.cfg.max_iter == 50
    assert spec.system == "damped-ho" and spec.params == {"b": 0.2} and spec.ic == (1.3, -2.2)
    assert spec.reference == ReferenceSpec("none")


def test_reference_spec_parsing():
    assert ReferenceSpec.parse("rk4:1e-6:1000") == ReferenceSpec("rk4", 1e-6, 1000)
    assert ReferenceSpec.parse(str(ReferenceSpec("rk4", 1e-6, 1000))) == ReferenceSpec("rk4", 1e-6, 1000)
    for bad in ("rk4", "rk4:1e-6", "rk5:1:1", "rk4:-1:10"):
        with pytest.raises(ValueError):
            ReferenceSpec.parse(bad)


def test_run_damped_oscillator(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code, stdout, _ = run_cli(["run", "--system", "damped-ho", "--param", "b=0.2",
                               "--integrator", "en-gr", "--x0", "1.3", "--y0", "-2.2",
                               "--out", str(out)], capsys)
    assert code == 0
    meta, cols, _ = load(out)
    assert list(cols) == ["t", "x", "y", "z", "H", "K"]
    assert len(cols["t"]) == 100001
    assert np.max(np.abs(cols["K"] - cols["K"][0])) <= 1e-10
    assert meta["cfg"]["h"] == 0.001 and meta["ic"] == [1.3, -2.2]
    assert "dz/dt = +y*D" in meta["convention"]
    assert "max_K_drift=" in stdout


def test_run_with_exact_reference_columns(tmp_path, capsys):
    out = tmp_path / "run.csv"
    code, _, _ = run_cli(["run", "--reference", "exact", "--T", "5", "--out", str(out)], capsys)
    assert code == 0
    _, cols, _ = load(out)
    assert list(cols) == ["t", "x", "y", "z", "H", "K", "err_x", "err_y", "R_dev", "K_dev"]
    assert np.isnan(cols["R_dev"][0]) and np.all(np.isfinite(cols["R_dev"][1:]))
    assert cols["err_x"][0] == 0.0


def test_run_duffing_imr_basin(tmp_path, capsys):
    code, stdout, _ = run_cli(["run", "--system", "duffing", "--param", "b=0.2",
                               "--integrator", "imr", "--x0", "-6.0", "--y0", "2.5",
                               "--out", str(tmp_path / "d.csv")], capsys)
    assert code == 0 and "basin=left" in stdout


def test_strict_rejects_vdp_st_gr(capsys):
    code, out, err = run_cli(["run", "--system", "vdp", "--param", "a=1.0",
                              "--integrator", "st-gr", "--strict"], capsys)
    assert code == 1
    assert "not applicable to the Van der Pol" in err and out == ""


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--system", "lorenz"])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["run", "--param", "b"])
    assert info.value.code == 1
    code, _, err = run_cli(["run", "--T", "0.0005", "--h", "0.001"], capsys)
    assert code == 1 and "multiple" in err
    code, _, _ = run_cli(["run", "--param", "a=1.0"], capsys)
    assert code == 1


def test_numerical_failure_exits_two(capsys):
    code, _, err = run_cli(["run", "--system", "duffing", "--integrator", "euler", "--h", "0.5",
                            "--T", "50"], capsys)
    assert code == 2 and "numerical failure" in err
    code, _, err = run_cli(["run", "--system", "duffing", "--integrator", "imr", "--h", "0.3",
                            "--T", "0.3", "--max-iter", "3"], capsys)
    assert code == 2
    code, _, _ = run_cli(["run", "--system", "duffing", "--integrator", "imr", "--h", "0.3",
                          "--T", "0.3", "--max-iter", "3", "--allow-stalls", "--out", "-"], capsys)
    assert code == 0


def test_csv_to_stdout_keeps_summary_on_stderr(capsys):
    code, out, err = run_cli(["run", "--T", "0.01"], capsys)
    assert code == 0
    meta, cols, _ = read_csv(io.StringIO(out))
    assert len(cols["t"]) == 11 and "max_K_drift" in err


def test_determinism(tmp_path, capsys):
    args = ["run", "--system", "duffing", "--T", "2", "--reference", "rk4:1e-05:100",
            "--cache-dir", str(tmp_path / "cache")]
    run_cli(args + ["--out", str(tmp_path / "a.csv")], capsys)
    run_cli(args + ["--out", str(tmp_path / "b.csv")], capsys)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_compare_damped_oscillator(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    code, _, _ = run_cli(["compare", "--integrator", "en-gr", "--integrator", "imr",
                          "--integrator", "sv", "--reference", "exact", "--T", "10",
                          "--out", str(out)], capsys)
    assert code == 0
    meta, cols, _ = load(out)
    assert meta["integrator"] == ["en-gr", "imr", "sv"]
    for name in ("en-gr", "imr", "sv"):
        for key in ("x", "y", "z", "K", "err_x", "err_y", "R_dev", "K_dev"):
            assert f"{name}:{key}" in cols
    assert np.array_equal(cols["en-gr:x"], cols["imr:x"])


def test_compare_vdp_identical_trajectories(tmp_path, capsys):
    out = tmp_path / "cmp.csv"
    code, _, _ = run_cli(["compare", "--system", "vdp", "--integrator", "en-gr",
                          "--integrator", "imr", "--reference", FAST_REF, "--T", "10",
                          "--out", str(out)], capsys)
    assert code == 0
    _, cols, _ = load(out)
    assert np.max(np.abs(cols["en-gr:x"] - cols["imr:x"])) <= 1e-10
    assert np.max(np.abs(cols["en-gr:y"] - cols["imr:y"])) <= 1e-10


def test_compare_single_matches_run_shape(tmp_path, capsys):
    run_cli(["compare", "--integrator", "imr", "--T", "1", "--out", str(tmp_path / "c.csv")], capsys)
    run_cli(["run", "--integrator", "imr", "--T", "1", "--out", str(tmp_path / "r.csv")], capsys)
    _, c, _ = load(tmp_path / "c.csv")
    _, r, _ = load(tmp_path / "r.csv")
    assert list(c) == list(r)
    assert all(np.array_equal(c[k], r[k]) for k in r)


def test_compare_strict_rejected(capsys):
    code, _, _ = run_cli(["compare", "--system", "vdp", "--strict", "--T", "1"], capsys)
    assert code == 1


@pytest.mark.parametrize("integrator, lo, hi, T", [
    ("en-gr", 1.9, 2.1, "10"), ("euler", 0.9, 1.1, "10"), ("rk4-38", 3.8, 4.2, "1")])
def test_convergence_command(integrator, lo, hi, T, tmp_path, capsys):
    out = tmp_path / "conv.csv"
    code, stdout, _ = run_cli(["convergence", "--integrator", integrator, "--T", T,
                               "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "h,max_error" and len(lines) == 5
    order = float(lines[-1].split("=")[1])
    assert lo <= order <= hi
    assert "fitted order" in stdout


def test_convergence_with_rk4_reference(tmp_path, capsys):
    out = tmp_path / "conv.csv"
    code, _, _ = run_cli(["convergence", "--system", "duffing", "--T", "2", "--hs", "0.01",
                          "0.005", "--reference", "rk4:1e-05:100", "--out", str(out)], capsys)
    assert code == 0
    assert 1.9 <= float(out.read_text().splitlines()[-1].split("=")[1]) <= 2.1


def test_reference_command(tmp_path, capsys):
    out = tmp_path / "ref.csv"
    code, _, _ = run_cli(["reference", "--system", "duffing", "--h-ref", "1e-5", "--stride",
                          "100", "--T", "5", "--out", str(out)], capsys)
    assert code == 0
    meta, cols, _ = load(out)
    assert meta["integrator"] == "rk4-38" and meta["stride"] == 100
    assert len(cols["t"]) == 5001


def test_unknown_figure_rejected():
    with pytest.raises(SystemExit) as info:
        cli.main(["figure", "5.1"])
    assert info.value.code == 1


def test_figure_3_1(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, _, _ = run_cli(["figure", "3.1", "--out", str(out)], capsys)
    assert code == 0
    meta, cols, _ = load(out)
    assert list(cols) == ["t", "K_dev_en-gr", "K_dev_sv"]
    assert cols["K_dev_en-gr"].max() <= 1e-10
    assert cols["K_dev_sv"].max() > 100 * cols["K_dev_en-gr"].max()
    assert meta["figure"] == "3.1"


def test_figure_4_2(tmp_path, capsys):
    out = tmp_path / "f.csv"
    assert run_cli(["figure", "4.2", "--out", str(out)], capsys)[0] == 0
    _, cols, _ = load(out)
    assert list(cols) == ["t", "K_dev_en-gr"] and cols["K_dev_en-gr"].max() <= 1e-10


@pytest.mark.parametrize("fig, keys", [
    ("3.2", ["t", "R_dev_en-gr", "R_dev_imr"]),
    ("4.1", ["t", "err_y_en-gr", "err_y_imr"]),
    ("4.3", ["t", "R_dev_en-gr", "R_dev_st-gr", "R_dev_imr"]),
])
def test_other_figures(fig, keys, tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, _, _ = run_cli(["figure", fig, "--reference", FAST_REF, "--out", str(out)], capsys)
    assert code == 0
    _, cols, _ = load(out)
    assert list(cols) == keys
    assert all(np.all(np.nan_to_num(v) >= 0) for v in cols.values())


def test_figure_4_4_trailer(tmp_path, capsys):
    out = tmp_path / "f.csv"
    code, stdout, _ = run_cli(["figure", "4.4", "--reference", FAST_REF, "--cache-dir",
                               str(tmp_path), "--out", str(out)], capsys)
    assert code == 0
    _, cols, trailer = load(out)
    assert list(cols) == ["t", "err_x_en-gr", "err_x_st-gr-midpoint", "err_x_st-gr-left"]
    labels = dict(line.split(" ", 1)[1].split("=") for line in trailer)
    assert set(labels) == {"en-gr", "st-gr-midpoint", "st-gr-left", "reference"}
    assert labels["en-gr"] == "left" and labels["reference"] == "left"
    assert "basin" in stdout
