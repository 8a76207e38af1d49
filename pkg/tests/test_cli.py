import math
import subprocess
import sys
import textwrap

import pytest

from eshelby_lab import __version__
from eshelby_lab.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_REJECTED,
    ConfigError,
    load_config,
    main,
    parse_sweep,
    summarize_sweep,
)
from eshelby_lab.io import parse_report, read_csv

SPECIAL = """
[run]
command = special-material
[eigenstress]
k1 = 1
k3 = 2
[material]
lambda = 1
mu = 1
"""

FIELD = """
[run]
command = field
seed = 4
[shape]
type = ellipsoid
semi_axes = 1 0.7 0.4
[material]
lambda = 1
mu = 1
[eigenstress]
k1 = 1
k3 = 2
[grid]
resolution = 24
[quadrature]
n = 24
[probes]
count = 4
[output]
dump = true
"""

POTENTIAL = """
[run]
command = potential
[shape]
type = ball
radius = 1
[potential]
kind = N
points = 0 0 0; 0.5 0 0; 2 0 0
[quadrature]
n = 32
"""


def _write(tmp_path, text, name="exp.ini"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return str(p)


def _run(tmp_path, text, *extra, out="out"):
    cfg = _write(tmp_path, text)
    code = main(["--config", cfg, "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def _report(path):
    return parse_report(path.read_text())


def test_special_material_report(tmp_path):
    code, out = _run(tmp_path, SPECIAL)
    assert code == EXIT_OK
    r = _report(out / "special-material.report")
    assert r["tool"] == "eshelby-lab" and r["version"] == __version__ and len(r["config_hash"]) == 64
    assert float(r["gamma0.ratio"]) == 1.0
    assert float(r["eta2.printed.ratio"]) == pytest.approx(1 / 3)
    assert r["eta2.agree"] == "false"
    assert float(r["joint.determinant"]) == -2.0
    assert [float(r[f"constants.{k}"]) for k in ("alpha", "beta", "gamma", "eta")] == [0.5, 2.0, 0.0, -3.0]


def test_potential_golden_values(tmp_path):
    code, out = _run(tmp_path, POTENTIAL)
    assert code == EXIT_OK
    header, rows = read_csv(out / "potential.csv")
    assert header[:3] == ["x1", "x2", "x3"]
    vals = [float(r[header.index("value")]) for r in rows]
    assert vals == pytest.approx([-0.5, -0.458333, -1 / 6], abs=1e-3)
    assert (out / "potential.csv").read_text().startswith("# tool = eshelby-lab\n")


def test_field_artifacts_are_deterministic_across_threads(tmp_path):
    assert _run(tmp_path, FIELD, "--threads", "1", out="a")[0] == EXIT_OK
    assert _run(tmp_path, FIELD, "--threads", "2", out="b")[0] == EXIT_OK
    for name in ("field.report", "field.csv", "field.eshf", "field.eshf.header"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name


def test_seed_flag_overrides_config(tmp_path):
    _, out = _run(tmp_path, SPECIAL, "--seed", "9")
    assert _report(out / "special-material.report")["seed"] == "9"


@pytest.mark.parametrize("edit, key", [
    (lambda t: t.replace("[run]", "[run]\nbogus = 1"), "run.bogus"),
    (lambda t: t.replace("mu = 1", "mu = one"), "material.mu"),
    (lambda t: t.replace("[material]\nlambda = 1\nmu = 1\n", ""), "material"),
    (lambda t: t.replace("command = field", "command = nope"), "run.command"),
    (lambda t: t + "[grid]\npadding = 1\n" if "[grid]" not in t else t.replace("[grid]", "[grid]\npadding = 1"), "grid.padding"),
    (lambda t: t + "[ignored]\nx = 1\n", "ignored"),
    (lambda t: t.replace("resolution = 24", "resolution = 4"), "grid.resolution"),
    (lambda t: t.replace("resolution = 24", "resolution = 24\nresolution = 32"), "resolution"),
])
def test_config_errors_name_the_key(tmp_path, capsys, edit, key):
    code, _ = _run(tmp_path, edit(FIELD))
    assert code == EXIT_CONFIG
    assert key in capsys.readouterr().err


def test_missing_config_file_is_a_config_error(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "none.ini")]) == EXIT_CONFIG
    assert "config" in capsys.readouterr().err


def test_rejection_exit_code(tmp_path, capsys):
    text = FIELD.replace("command = field", "command = theorem1").replace("k1 = 1\nk3 = 2", "tensor = 1 0 0 0 2 0 0 0 3")
    code, _ = _run(tmp_path, text)
    assert code == EXIT_REJECTED
    assert "rejected" in capsys.readouterr().err


def test_config_hash_tracks_meaningful_changes():
    base = load_config(textwrap.dedent(FIELD))
    explicit_default = load_config(textwrap.dedent(FIELD).replace("[grid]", "[grid]\npadding = 3"))
    other_prefix = load_config(textwrap.dedent(FIELD).replace("dump = true", "dump = true\nprefix = x"))
    changed = load_config(textwrap.dedent(FIELD).replace("resolution = 24", "resolution = 32"))
    reseeded = load_config(textwrap.dedent(FIELD), seed=5)
    assert base.hash() == explicit_default.hash() == other_prefix.hash()
    assert len({base.hash(), changed.hash(), reseeded.hash()}) == 3


def test_overrides_apply_and_validate():
    cfg = load_config(textwrap.dedent(SPECIAL), {"eigenstress.k3": "3"})
    assert cfg["eigenstress"]["k3"] == 3.0
    with pytest.raises(ConfigError):
        load_config(textwrap.dedent(SPECIAL), {"eigenstress.k9": "3"})


@pytest.mark.parametrize("spec, key, vals", [
    ("eigenstress.k3=1.5,2,2.5", "eigenstress.k3", ["1.5", "2", "2.5"]),
    ("grid.resolution=32:128:32", "grid.resolution", ["32.0", "64.0", "96.0", "128.0"]),
    ("eigenstress.k3=1:1.3:0.1", "eigenstress.k3", ["1.0", "1.1", "1.2", "1.3"]),
])
def test_parse_sweep(spec, key, vals):
    assert parse_sweep(spec) == (key, vals)


@pytest.mark.parametrize("spec", ["k3=1,2", "eigenstress.k3=", "eigenstress.k3=3:1:1", "eigenstress.tensor=1",
                                  "nosuch.key=1"])
def test_parse_sweep_rejects(spec):
    with pytest.raises(ConfigError):
        parse_sweep(spec)


def test_summarize_sweep_flags_and_roots():
    s = summarize_sweep([1.0, 2.0, 3.0], {"a": [3.0, 2.0, 1.0], "b": [1.0, 1.05, 0.9], "c": [-1.0, 1.0, 2.0], "t": ["x", "y", "z"]})
    assert s["a.strictly_decreasing"] and s["a.decreasing_within_slack"] and s["a.sign_changes"] == 0
    assert not s["b.strictly_decreasing"] and s["b.decreasing_within_slack"]
    assert s["c.strictly_increasing"] and s["c.sign_changes"] == 1 and s["c.root.1"] == 1.5
    assert not any(k.startswith("t.") for k in s)


def test_joint_determinant_sweep_finds_one_plus_sqrt2(tmp_path):
    code, out = _run(tmp_path, SPECIAL, "--sweep", "eigenstress.k3=1.5:3:0.01")
    assert code == EXIT_OK
    s = _report(out / "sweep.report")
    assert int(s["joint.determinant.sign_changes"]) == 1
    assert float(s["joint.determinant.root.1"]) == pytest.approx(1 + math.sqrt(2), abs=1e-9)
    header, rows = read_csv(out / "sweep.csv")
    assert header[0] == "eigenstress.k3" and len(rows) == 151
    assert (out / "special-material_000.report").exists()


def test_empty_sweep_is_a_config_error(tmp_path):
    assert _run(tmp_path, SPECIAL, "--sweep", "eigenstress.k3=")[0] == EXIT_CONFIG


def test_sweep_of_unused_section_rejected(tmp_path, capsys):
    assert _run(tmp_path, SPECIAL, "--sweep", "grid.resolution=8,16")[0] == EXIT_CONFIG
    assert "grid.resolution" in capsys.readouterr().err


def test_module_entry_point_and_version():
    r = subprocess.run([sys.executable, "-m", "eshelby_lab", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == f"eshelby-lab {__version__}"
