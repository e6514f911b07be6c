import csv
import io
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from diqpq import bell, cli, config
from diqpq.errors import ConfigError

HONEST = """version = 1

[protocol]
theta_rad = "pi/2"
psi1_rad = "pi/4"
psi2_rad = "3*pi/4"
n_pairs = 4000
seed = 3
"""

BIASED = HONEST.replace("n_pairs = 4000", "n_pairs = 200000") + """
[source]
kind = "biased"
epsilon = 0.3
"""


def write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# -- config -------------------------------------------------------------------


@pytest.mark.parametrize(
    "expr,want",
    [("pi/2", math.pi / 2), ("3*pi/4", 3 * math.pi / 4), ("(pi - 0.5)/2", (math.pi - 0.5) / 2), (0.25, 0.25), ("-pi/8", -math.pi / 8)],
)
def test_parse_angle(expr, want):
    assert config.parse_angle(expr) == pytest.approx(want, abs=1e-15)


@pytest.mark.parametrize("expr", ["__import__('os')", "pi**2", "e", "", True, "1/0"])
def test_parse_angle_rejects(expr):
    with pytest.raises(ValueError):
        config.parse_angle(expr)


def test_config_defaults():
    cfg = config.loads(HONEST)
    assert cfg.params.theta == math.pi / 2 and cfg.params.n_pairs == 4000
    assert cfg.source_kind == "honest" and cfg.policy == "honest" and cfg.method == "test"


@pytest.mark.parametrize(
    "edit,line,needle",
    [
        (lambda t: t.replace('psi2_rad = "3*pi/4"', 'psi2_rad = "2*pi/3"'), 6, "psi1 + psi2"),
        (lambda t: t.replace("n_pairs = 4000", "n_pairs = 2"), 7, "n_pairs"),
        (lambda t: t.replace("n_pairs = 4000", "n_pairs = 4000.5"), 7, "integer"),
        (lambda t: t.replace('theta_rad = "pi/2"', 'theta_rad = "pi"'), 4, "theta"),
        (lambda t: t.replace('theta_rad = "pi/2"', 'theta = 1.0'), 4, "_rad"),
        (lambda t: t + "eta = 0.5x\n", 9, "syntax"),
        (lambda t: t.replace("version = 1", "version = 2"), 1, "version"),
        (lambda t: t + "\n[source]\nepsilon = 0.7\n", 11, "epsilon"),
        (lambda t: t + "\n[bogus]\nx = 1\n", 10, "bogus"),
    ],
)
def test_config_errors_are_line_precise(edit, line, needle):
    with pytest.raises(ConfigError) as e:
        config.loads(edit(HONEST), "c.toml")
    assert e.value.line == line
    assert needle in str(e.value)
    assert str(e.value).startswith(f"c.toml:{line}:")


@given(st.floats(-1.0, 3.0), st.floats(-0.5, 4.0))
def test_config_rejects_exactly_params_constraints(theta, eta):
    text = HONEST.replace('theta_rad = "pi/2"', f"theta_rad = {theta!r}") + f"eta = {eta!r}\n"
    ok = 0 < theta <= math.pi / 2 and 0 < eta <= 1
    try:
        config.loads(text)
    except ConfigError:
        assert not ok
    else:
        assert ok


# -- subcommands ----------------------------------------------------------------


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_certify_honest(tmp_path, capsys):
    c = write(tmp_path, HONEST.replace("n_pairs = 4000", "n_pairs = 200000"))
    code, out, _ = run(["certify", "--config", c, "--out", str(tmp_path / "t.txt")], capsys)
    assert code == cli.EXIT_OK and "verdict=Proceed" in out
    I = float(out.split("I=")[1].split()[0])
    assert abs(I - 2.828) < 0.03
    assert (tmp_path / "t.txt").read_text().startswith("DIQPQ-TRANSCRIPT 1\n")


def test_certify_biased_aborts(tmp_path, capsys):
    code, out, _ = run(["certify", "--config", write(tmp_path, BIASED)], capsys)
    assert code == cli.EXIT_ABORT and "Abort(below-threshold)" in out


def test_certify_game_and_repetitions(tmp_path, capsys):
    c = write(tmp_path, HONEST)
    code, out, _ = run(["certify", "--config", c, "--method", "game", "--repetitions", "3"], capsys)
    assert code == cli.EXIT_OK and out.count("Y=") == 3


def test_config_error_exit(tmp_path, capsys):
    c = write(tmp_path, HONEST.replace('"3*pi/4"', '"2*pi/3"'))
    code, _, err = run(["certify", "--config", c], capsys)
    assert code == cli.EXIT_CONFIG and ":6:" in err


def test_missing_file_exit(tmp_path, capsys):
    code, _, _ = run(["certify", "--config", str(tmp_path / "nope.toml")], capsys)
    assert code == cli.EXIT_IO


def test_bad_arguments_exit(capsys):
    assert run(["figure", "--figure", "7"], capsys)[0] == cli.EXIT_CONFIG
    assert run(["certify"], capsys)[0] == cli.EXIT_CONFIG


def read_csv(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_figure_values(capsys):
    rows = read_csv(run(["figure", "--figure", "5"], capsys)[1])
    top = [r for r in rows if r["psi1"] == cli.fmt(math.pi / 4) and r["theta"] == cli.fmt(math.pi / 2)]
    assert float(top[0]["threshold"]) == pytest.approx(3.3084, abs=5e-4)
    rows = read_csv(run(["figure", "--figure", "4"], capsys)[1])
    top = [r for r in rows if r["psi1"] == cli.fmt(math.pi / 4) and r["theta"] == cli.fmt(math.pi / 2)]
    assert float(top[0]["threshold"]) == pytest.approx(2 * math.sqrt(2), abs=1e-11)
    assert len({(r["psi1"], r["psi2"]) for r in rows}) == 3


def test_figure3_slice_matches_figure4(capsys):
    f3 = read_csv(run(["figure", "--figure", "3"], capsys)[1])
    f4 = read_csv(run(["figure", "--figure", "4"], capsys)[1])
    slice3 = [(r["theta"], r["threshold"]) for r in f3 if r["eta"] == "1"]
    curve4 = [(r["theta"], r["threshold"]) for r in f4 if r["psi1"] == cli.fmt(math.pi / 4)]
    assert slice3 == curve4


def test_figure_byte_stable(tmp_path, capsys):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(["figure", "--figure", "3", "--out", str(a)], capsys)
    run(["figure", "--figure", "3", "--out", str(b)], capsys)
    assert a.read_bytes() == b.read_bytes()
    assert b"\r" not in a.read_bytes()


def test_attack_scan(tmp_path, capsys):
    c = write(tmp_path, HONEST.replace('psi1_rad = "pi/4"', 'psi1_rad = "3*pi/8"').replace('"3*pi/4"', '"5*pi/8"')
              + "\n[scan]\nepsilon_min = -0.4\nepsilon_max = 0.4\neta_min = 0.71\neta_max = 1.0\nresolution = 21\n")
    rows = read_csv(run(["attack-scan", "--config", c], capsys)[1])
    assert len(rows) == 21 * 21
    for r in rows:
        eps, eta = float(r["epsilon"]), float(r["eta"])
        if eps == 0 or eta == 1:
            assert r["region"] == "NoAttack"
        gap = float(r["attack_value"]) - float(r["threshold_ideal"])
        attack = r["region"] != "NoAttack"
        assert attack == (eps != 0 and bell.ETA_LOOPHOLE < eta < 1 and gap > 0)
    assert any(r["region"] == "Case1" for r in rows)


def test_keyrate(tmp_path, capsys):
    c = write(tmp_path, HONEST.replace("n_pairs = 4000", "n_pairs = 40000"))
    rows = read_csv(run(["keyrate", "--config", c, "--repetitions", "2"], capsys)[1])
    assert len(rows) == 2
    for r in rows:
        assert r["mismatches"] == "0"
        assert abs(float(r["fraction"]) - 0.5) < 0.02


def test_protocol_subcommand(tmp_path, capsys):
    c = write(tmp_path, HONEST)
    db = tmp_path / "db.txt"
    db.write_text("0110100111010010\n")
    t1, t2 = tmp_path / "t1.txt", tmp_path / "t2.txt"
    for i in range(16):
        code, out, _ = run(["protocol", "--config", c, "--database", str(db), "--index", str(i), "--out", str(t1)], capsys)
        assert code == 0 and f"retrieved={'0110100111010010'[i]}" in out
    run(["protocol", "--config", c, "--database", str(db), "--index", "15", "--out", str(t2)], capsys)
    assert t1.read_bytes() == t2.read_bytes()


def test_protocol_errors(tmp_path, capsys):
    c = write(tmp_path, HONEST)
    db = tmp_path / "db.txt"
    db.write_text("0101")
    assert run(["protocol", "--config", c, "--database", str(db), "--index", "4"], capsys)[0] == cli.EXIT_CONFIG
    assert run(["protocol", "--config", c, "--database", str(tmp_path / "x"), "--index", "0"], capsys)[0] == cli.EXIT_IO
    b = write(tmp_path, BIASED, "b.toml")
    db.write_text("0101" * 4)
    code, out, _ = run(["protocol", "--config", b, "--database", str(db), "--index", "1"], capsys)
    assert code == cli.EXIT_ABORT and "Abort" in out


def test_seed_override(tmp_path, capsys):
    c = write(tmp_path, HONEST)
    _, a, _ = run(["certify", "--config", c, "--seed", "5"], capsys)
    _, b, _ = run(["certify", "--config", c, "--seed", "6"], capsys)
    assert a != b and "seed=5" in a


def test_concentration_subcommand(tmp_path, capsys):
    c = write(tmp_path, HONEST.replace("seed = 3", "seed = 3\neps_chsh = 0.05"))
    code, out, _ = run(["concentration", "--config", c, "--repetitions", "50"], capsys)
    assert code == cli.EXIT_OK and "within_bound=True" in out
