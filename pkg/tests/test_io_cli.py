import json
import struct

import numpy as np
import pytest

from conftest import make_noiseless
from robust_mfm.cli import main
from robust_mfm.config import parse_config
from robust_mfm.core import MatrixSeries
from robust_mfm.errors import ValidationError
from robust_mfm.io import (long_csv_text, parse_long_csv, parse_tensor, read_fit, read_series,
                           tensor_bytes, write_fit, write_long_csv, write_tensor)


def test_tensor_layout_by_hand():
    X = MatrixSeries(np.arange(12, dtype=float).reshape(2, 3, 2))
    buf = tensor_bytes(X)
    assert buf[:4] == b"MFM1"
    assert struct.unpack("<IQQQI", buf[4:36]) == (1, 2, 3, 2, 1)
    assert struct.unpack("<d", buf[36 + 8 * 5:36 + 8 * 6])[0] == 5.0
    assert len(buf) == 36 + 96


def test_tensor_roundtrip_bytes(tmp_path, rng):
    X = MatrixSeries(rng.standard_normal((3, 4, 5)))
    write_tensor(tmp_path / "a.mfm", X)
    Y = read_series(tmp_path / "a.mfm")
    assert Y.data.tobytes() == X.data.tobytes()
    assert tensor_bytes(Y) == (tmp_path / "a.mfm").read_bytes()


def test_csv_roundtrip_and_shuffled_rows(tmp_path, rng):
    X = MatrixSeries(rng.standard_normal((2, 3, 2)) * 1e-7)
    write_long_csv(tmp_path / "a.csv", X)
    assert read_series(tmp_path / "a.csv").data.tobytes() == X.data.tobytes()
    lines = long_csv_text(X).splitlines()
    body = lines[1:][::-1]
    assert parse_long_csv("\n".join([lines[0]] + body)).data.tobytes() == X.data.tobytes()


@pytest.mark.parametrize("buf", [
    b"MFM",
    b"XXXX" + bytes(32),
    struct.pack("<4sIQQQI", b"MFM1", 2, 1, 1, 1, 1) + bytes(8),
    struct.pack("<4sIQQQI", b"MFM1", 1, 1, 1, 1, 2) + bytes(8),
    struct.pack("<4sIQQQI", b"MFM1", 1, 1, 1, 2, 1) + bytes(8),
    struct.pack("<4sIQQQI", b"MFM1", 1, 0, 1, 1, 1),
])
def test_malformed_tensor(buf):
    with pytest.raises(ValidationError):
        parse_tensor(buf)


@pytest.mark.parametrize("text", [
    "a,b,c,d\n1,1,1,0\n",
    "t,i,j,value\n",
    "t,i,j,value\n1,1,1,0\n1,1,1,0\n",
    "t,i,j,value\n1,1,1,0\n1,1,2,0\n2,1,1,0\n",
    "t,i,j,value\n0,1,1,0\n",
    "t,i,j,value\n1,1,1,x\n",
])
def test_malformed_csv(text):
    with pytest.raises(ValidationError):
        parse_long_csv(text)


def test_fit_files_roundtrip(tmp_path):
    s, R, C, F = make_noiseless(4, 5, 3, 2, 1)
    from robust_mfm.core import FactorFit

    write_fit(tmp_path, FactorFit(R, C, F))
    f = read_fit(tmp_path)
    assert f.R.tobytes() == R.tobytes() and f.F.tobytes() == F.tobytes()


def test_config_rejects_unknown_and_bad_values():
    with pytest.raises(ValidationError):
        parse_config({"ihr": {"k3": 1}})
    with pytest.raises(ValidationError):
        parse_config({"extra": 1})
    with pytest.raises(ValidationError):
        parse_config({"ihr": {"tau": -1}})
    with pytest.raises(ValidationError):
        parse_config({"ranks": {"m1": 1}})
    with pytest.raises(ValidationError):
        parse_config({"ihr": {"k1": True}})
    assert parse_config({"ihr": {"tau": "inf"}}).ihr.huber().tau > 1e10


def _cfg(tmp_path, doc):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_simulate_deterministic(tmp_path):
    cfg = _cfg(tmp_path, {"dgp": {"T": 6, "p1": 5, "p2": 4, "k1": 2, "k2": 2, "seed": 3}})
    for d in ("a", "b"):
        assert main(["simulate", "--config", cfg, "--output-dir", str(tmp_path / d), "--csv"]) == 0
    for name in ("series.mfm", "series.csv", "R0.csv", "C0.csv", "F0.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    a = read_series(tmp_path / "a" / "series.mfm")
    b = read_series(tmp_path / "a" / "series.csv")
    assert a.data.tobytes() == b.data.tobytes()
    main(["simulate", "--config", cfg, "--output-dir", str(tmp_path / "c"), "--seed", "4"])
    assert (tmp_path / "c" / "series.mfm").read_bytes() != (tmp_path / "a" / "series.mfm").read_bytes()


def test_cli_error_codes(tmp_path):
    assert main(["fit", "--input", str(tmp_path / "missing.mfm"), "--output-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.mfm"
    bad.write_bytes(b"MFM1junk")
    assert main(["fit", "--input", str(bad), "--output-dir", str(tmp_path)]) == 2
    assert main(["fit", "--config", _cfg(tmp_path, {"nope": 1}), "--input", str(bad),
                 "--output-dir", str(tmp_path)]) == 2
    assert main(["ranks", "--config", _cfg(tmp_path, {"ranks": {"m1": 1}}), "--input", str(bad),
                 "--output-dir", str(tmp_path)]) == 2
    assert main(["frobnicate"]) == 2


def test_cli_fit_noiseless(tmp_path):
    s, R, C, F = make_noiseless(10, 8, 7, 2, 2, seed=5)
    write_tensor(tmp_path / "x.mfm", s)
    cfg = _cfg(tmp_path, {"ihr": {"k1": 2, "k2": 2, "seed": 1}})
    assert main(["fit", "--config", cfg, "--input", str(tmp_path / "x.mfm"),
                 "--output-dir", str(tmp_path / "o")]) == 0
    d = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert d["converged"] and d["objective"] < 1e-12


def test_cli_fit_nonconvergence_exit(tmp_path, rng):
    write_tensor(tmp_path / "x.mfm", MatrixSeries(rng.standard_normal((8, 6, 6))))
    cfg = _cfg(tmp_path, {"ihr": {"k1": 2, "k2": 2, "max_sweeps": 1}})
    assert main(["fit", "--config", cfg, "--input", str(tmp_path / "x.mfm"),
                 "--output-dir", str(tmp_path / "o")]) == 4
    assert (tmp_path / "o" / "R.csv").exists()


def test_cli_ls_matches_infinite_tau(tmp_path, rng):
    write_tensor(tmp_path / "x.mfm", MatrixSeries(rng.standard_normal((8, 6, 5))))
    outs = []
    for method in ("ihr", "ls"):
        cfg = _cfg(tmp_path, {"method": method, "ihr": {"k1": 1, "k2": 1, "tau": "inf", "init": "alpha_pca"}})
        main(["fit", "--config", cfg, "--input", str(tmp_path / "x.mfm"),
              "--output-dir", str(tmp_path / method)])
        outs.append(np.loadtxt(tmp_path / method / "R.csv", delimiter=",", skiprows=1))
    np.testing.assert_allclose(outs[0], outs[1], atol=1e-10)


def test_cli_ranks_noiseless(tmp_path):
    s, *_ = make_noiseless(12, 10, 10, 3, 3, seed=8, spread=(1.5, 1.5))
    write_tensor(tmp_path / "x.mfm", s)
    cfg = _cfg(tmp_path, {"ranks": {"m1": 5, "m2": 5}})
    main(["ranks", "--config", cfg, "--input", str(tmp_path / "x.mfm"), "--output-dir", str(tmp_path)])
    rep = json.loads((tmp_path / "ranks.json").read_text())
    assert (rep["ER"]["k1_hat"], rep["ER"]["k2_hat"]) == (3, 3)


def test_cli_infer_truth_equals_fit(tmp_path):
    cfg = _cfg(tmp_path, {"dgp": {"T": 10, "p1": 12, "p2": 10, "k1": 1, "k2": 1, "psi": 0.0, "seed": 2},
                          "ihr": {"k1": 1, "k2": 1}})
    main(["simulate", "--config", cfg, "--output-dir", str(tmp_path / "sim")])
    for src, dst in (("R0", "R"), ("C0", "C"), ("F0", "F")):
        (tmp_path / "sim" / f"{dst}.csv").write_bytes((tmp_path / "sim" / f"{src}.csv").read_bytes())
    # the truth is normalized by the reader; write the normalized version as the fit
    from robust_mfm.normalization import normalize_fit
    from robust_mfm.core import FactorFit

    f = read_fit(tmp_path / "sim", normalized=False)
    R, C, F, _ = normalize_fit(f.R, f.C, f.F)
    write_fit(tmp_path / "fit", FactorFit(R, C, F))
    rc = main(["infer", "--config", cfg, "--input", str(tmp_path / "sim" / "series.mfm"),
               "--fit", str(tmp_path / "fit"), "--truth", str(tmp_path / "sim"),
               "--output-dir", str(tmp_path / "inf")])
    assert rc == 0
    rep = json.loads((tmp_path / "inf" / "inference.json").read_text())
    stats = [s for r in rep["rows"] + rep["cols"] if r["standardized"] for s in r["standardized"]]
    assert stats and max(abs(s) for s in stats) < 1e-9


def test_cli_validate(tmp_path):
    s, *_ = make_noiseless(30, 6, 5, 2, 1)
    write_long_csv(tmp_path / "x.csv", s)
    cfg = _cfg(tmp_path, {"method": "alpha_pca", "ihr": {"k1": 2, "k2": 1}, "rolling": {"horizon": 5}})
    assert main(["validate", "--config", cfg, "--input", str(tmp_path / "x.csv"),
                 "--output-dir", str(tmp_path)]) == 0
    summ = json.loads((tmp_path / "rolling.json").read_text())
    assert summ["mean_MSE"] < 1e-20
