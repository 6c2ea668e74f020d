import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jrlattice import io
from jrlattice.lattice import LatticeSpec

MINIMAL = """\
# minimal kink run
[lattice]
N = 160
Phi0 = 3
xi0 = 1
[fermions]
J = 3
g = 0.8
[run]
dt = 0.01
"""


def test_minimal_config_parses():
    cfg = io.parse_config_text(MINIMAL)
    spec = cfg.spec
    ref = LatticeSpec.from_kink(160, 3.0, 1.0)
    assert spec.N == 160
    assert spec.m0_sq == pytest.approx(ref.m0_sq)
    assert spec.lam == pytest.approx(ref.lam)
    assert cfg.fermions.J == 3.0 and cfg.fermions.g == 0.8
    assert cfg.run.dt == 0.01
    assert cfg.run.n_traj == 1


def test_parse_from_file(tmp_path):
    p = tmp_path / "k.ini"
    p.write_text(MINIMAL)
    assert io.parse_config(p) == io.parse_config_text(MINIMAL)


def test_negative_lam_rejected_with_invariant():
    text = "[lattice]\nN = 60\nm0_sq = -1\nlam = -2\n"
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text(text)
    assert err.value.kind == "invariant"
    assert err.value.key == "lam"
    assert "lam > 0" in str(err.value)
    assert err.value.lines == (4,)


def test_zero_lam_allowed_only_for_free_field():
    io.parse_config_text("[lattice]\nN = 8\nm0_sq = 1\nlam = 0\n")
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text("[lattice]\nN = 8\nm0_sq = -1\nlam = 0\n")
    assert err.value.kind == "invariant"


def test_duplicate_key_reports_both_lines():
    text = "[lattice]\nN = 60\nPhi0 = 3\nPhi0 = 4\nxi0 = 1\n"
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text(text)
    assert err.value.kind == "duplicate"
    assert err.value.key == "Phi0"
    assert err.value.lines == (3, 4)


def test_duplicate_section_reports_both_lines():
    text = "[lattice]\nN = 8\nPhi0 = 1\nxi0 = 1\n[run]\ndt = 0.1\n[run]\nseed = 2\n"
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text(text)
    assert err.value.kind == "duplicate"
    assert err.value.lines == (5, 7)


def test_unknown_key_and_section():
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text("[lattice]\nN = 60\nPhi0 = 3\nfoo = 4\n")
    assert err.value.kind == "unknown" and err.value.key == "foo" and err.value.lines == (4,)
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text("[bogus]\nx = 1\n")
    assert err.value.kind == "unknown"


def test_missing_key():
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text("[lattice]\nN = 60\nPhi0 = 3\n")
    assert err.value.kind == "missing"
    assert err.value.key == "xi0"


def test_mixed_lattice_forms_rejected():
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text("[lattice]\nN = 8\nPhi0 = 1\nxi0 = 1\nlam = 1\nm0_sq = -1\n")
    assert err.value.kind == "invariant"


@pytest.mark.parametrize(
    "text",
    [
        "[lattice]\nN = 8\nPhi0 = 1\nxi0 = 1\n[run]\nfermion_mode = sideways\n",
        "[lattice]\nN = 8\nPhi0 = -1\nxi0 = 1\n",
        "[lattice]\nN = 8\nPhi0 = 1\nxi0 = 1\n[run]\ndt = -0.1\n",
    ],
)
def test_bad_values_are_invariant_errors(text):
    with pytest.raises(io.ConfigError) as err:
        io.parse_config_text(text)
    assert err.value.kind == "invariant"


def test_malformed_lines_are_syntax_errors():
    for text in ("[lattice\nN = 1\n", "[lattice]\nN 60\n", "N = 60\n", "[lattice]\nN = sixty\n"):
        with pytest.raises(io.ConfigError) as err:
            io.parse_config_text(text)
        assert err.value.kind == "syntax"


FULL = """\
[lattice]
N = 80
Phi0 = 5
xi0 = 5
center = 0.5
[fermions]
J = 3
g = 0.24
[wigner]
d = 30
p_bar = -2
frozen_all = true
[run]
dt = 0.1
t_max = 20
stride = 5
zero_mode = both
observables = phi, energy, condensate
[trap]
omega_x = 6.283185307179586e6
omega_y = 6.283185307179586e7
omega_z = 1.8849555921538757e7
N_ions = 40
a = 10e-6
m_a = 2.8395e-25
[laser]
Omega_L = 1e5
delta_L = 6.0e7
Delta_k = 1.2e7
Omega_tilde = 2e4
Delta_k_tilde = 1e7
z0 = 1e-7
q_z = 0.1
"""


@pytest.mark.parametrize("text", [MINIMAL, FULL])
def test_round_trip(text):
    cfg = io.parse_config_text(text)
    again = io.parse_config_text(io.serialize_config(cfg))
    assert again == cfg
    assert io.serialize_config(again) == io.serialize_config(cfg)


@settings(max_examples=40, deadline=None)
@given(
    N=st.integers(8, 400),
    Phi0=st.floats(0.01, 100, allow_nan=False),
    xi0=st.floats(0.01, 100, allow_nan=False),
    seed=st.integers(0, 2**64 - 1),
    dt=st.floats(1e-6, 1.0),
)
def test_round_trip_property(N, Phi0, xi0, seed, dt):
    text = f"[lattice]\nN = {N}\nPhi0 = {Phi0!r}\nxi0 = {xi0!r}\n[run]\nseed = {seed}\ndt = {dt!r}\n"
    cfg = io.parse_config_text(text)
    assert io.parse_config_text(io.serialize_config(cfg)) == cfg


def test_hash_ignores_key_order_and_comments():
    a = io.parse_config_text(MINIMAL)
    reordered = "[run]\ndt = 0.01\n[fermions]\ng = 0.8\nJ = 3\n[lattice]\nxi0 = 1  # width\nPhi0 = 3\nN = 160\n"
    b = io.parse_config_text(reordered)
    assert a == b
    assert io.config_hash(a) == io.config_hash(b)
    c = io.parse_config_text(MINIMAL.replace("g = 0.8", "g = 0.9"))
    assert io.config_hash(a) != io.config_hash(c)
    assert io.config_hash(a, {"command": "relax"}) != io.config_hash(a, {"command": "modes"})


def test_with_run_overrides():
    cfg = io.parse_config_text(MINIMAL)
    new = cfg.with_run(seed=9, threads=None)
    assert new.run.seed == 9 and new.run.threads == 1
    assert cfg.run.seed == 0


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_write_table(tmp_path):
    p = tmp_path / "t.csv"
    io.write_table(p, {"t": np.array([0.0, 0.1]), "q": np.array([1, 2])}, "abc")
    rows = _read_csv(p)
    assert rows[0] == ["t", "q", "manifest"]
    assert rows[1] == ["0.0", "1", "abc"]
    assert float(rows[2][0]) == 0.1
    with pytest.raises(ValueError):
        io.write_table(p, {"a": np.zeros(2), "b": np.zeros(3)}, "abc")


def test_write_long_table(tmp_path):
    p = tmp_path / "l.csv"
    times = np.array([0.0, 1.0])
    x = np.array([-1.0, 0.0, 1.0])
    f = np.arange(6.0).reshape(2, 3)
    io.write_long_table(p, times, x, {"phi": f}, "h", errors={"phi": 0.1 * f})
    rows = _read_csv(p)
    assert rows[0] == ["t", "x", "phi", "phi_err", "manifest"]
    assert len(rows) == 7
    assert [float(v) for v in rows[5][:4]] == [1.0, 0.0, 4.0, pytest.approx(0.4)]
    with pytest.raises(ValueError):
        io.write_long_table(p, times, x, {"phi": f.T}, "h")


def test_manifest(tmp_path):
    m = io.RunManifest("hash", 3, "relax")
    m.outputs.append("profile.csv")
    m.finish()
    data = json.loads(open(m.write(tmp_path)).read())
    assert data["config_hash"] == "hash" and data["seed"] == 3
    assert data["outputs"] == ["profile.csv"]
    assert data["finished"] is not None and data["version"]


def test_read_jsonl(tmp_path):
    p = tmp_path / "e.jsonl"
    p.write_text('{"t": 0.0, "phi": [1, 2], "manifest": "h"}\n\n{"t": 1.0, "phi": [3, 4], "manifest": "h"}\n')
    data = io.read_jsonl(p)
    assert data["manifest"] == "h"
    np.testing.assert_array_equal(data["phi"], [[1, 2], [3, 4]])
    (tmp_path / "empty.jsonl").write_text("")
    with pytest.raises(ValueError):
        io.read_jsonl(tmp_path / "empty.jsonl")
