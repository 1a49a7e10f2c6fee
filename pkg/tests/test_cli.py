import json

import pytest

from ruelle import cli
from ruelle import config as cfgmod
from ruelle.funcspace import GridFunction, write_csv
from ruelle.apriori import make_finite_alphabet


def run(tmp_path, *argv):
    return cli.run(list(argv) + ["--out", str(tmp_path)])


def report(tmp_path, command):
    return json.loads((tmp_path / command / "report.json").read_text())


def test_rpf_zero(tmp_path):
    assert run(tmp_path, "rpf", "--preset", "iid") == 0
    rep = report(tmp_path, "rpf")
    assert rep["schema_version"] == cli.SCHEMA_VERSION
    assert rep["command"] == "rpf"
    assert rep["results"]["lambda"] == 1.0
    assert set(rep) == {"schema_version", "command", "config", "results", "timings"}
    assert (tmp_path / "rpf" / "gibbs.csv").exists()
    assert (tmp_path / "rpf" / "eigfun.csv").exists()


def test_variance_markov(tmp_path):
    assert run(tmp_path, "variance", "--preset", "markov") == 0
    res = report(tmp_path, "variance")["results"]
    assert res["spread"] <= 1e-6
    for key in ("sigma2_resolvent", "sigma2_quadratic", "sigma2_greenkubo"):
        assert abs(res[key] - res["oracle_c"]) <= 1e-8


def test_normalize_writes_table(tmp_path):
    assert run(tmp_path, "normalize", "--preset", "circle-cos", "--set", "space.n_nodes=16") == 0
    res = report(tmp_path, "normalize")["results"]
    assert res["normalization_defect"] <= 1e-12
    assert (tmp_path / "normalize" / "normalized.csv").read_text().startswith("s1,s2,value")


def test_pressure_curve_constant_observable(tmp_path):
    args = ["--preset", "iid", "--set", "observable.preset=constant", "--set", "observable.value=0.5",
            "--set", "observable.depth=0"]
    assert run(tmp_path, "pressure-curve", *args) == 0
    rows = (tmp_path / "pressure-curve" / "pressure_curve.csv").read_text().splitlines()[1:]
    ts = [float(r.split(",")[0]) for r in rows]
    ps = [float(r.split(",")[1]) for r in rows]
    for t, p in zip(ts, ps):
        assert abs(p - 0.5 * t) <= 1e-12


def test_pressure_curve_properties(tmp_path):
    assert run(tmp_path, "pressure-curve", "--preset", "markov", "--set", "run.t_points=9") == 0
    res = report(tmp_path, "pressure-curve")["results"]
    assert res["max_p_prime_gap"] <= 1e-8
    assert res["min_second_difference"] >= -1e-10
    assert run(tmp_path, "pressure-curve", "--preset", "coboundary", "--set", "run.t_points=5") == 0
    res = report(tmp_path, "pressure-curve")["results"]
    assert res["max_p_double_prime"] <= 1e-8


def test_entropy_and_basis(tmp_path):
    assert run(tmp_path, "entropy-derivatives", "--preset", "markov") == 0
    res = report(tmp_path, "entropy-derivatives")["results"]
    assert res["first_general_rel_err"] <= 1e-5
    assert abs(res["linear_response_series"] - res["linear_response_fd"]) <= 1e-8
    header = (tmp_path / "entropy-derivatives" / "derivatives.csv").read_text().splitlines()[0]
    assert header == "quantity,analytic,fd,abs_gap"
    assert run(tmp_path, "basis", "--preset", "markov") == 0
    res = report(tmp_path, "basis")["results"]
    assert res["kernel_gram_max_err"] <= 1e-12
    assert res["haar_gram_max_err"] <= 1e-12
    assert res["max_transfer_of_basis"] <= 1e-12
    assert abs(res["coefficient_sum"] - res["direct_integral"]) <= 1e-10
    assert res["reconstruction_residual"] <= 1e-10


def test_basis_needs_markov(tmp_path, capsys):
    assert run(tmp_path, "basis", "--preset", "iid") == 2
    assert "space.kind" in capsys.readouterr().err


def test_replay_identical(tmp_path):
    assert run(tmp_path, "entropy-derivatives", "--preset", "markov") == 0
    path = tmp_path / "entropy-derivatives" / "report.json"
    out2 = tmp_path / "again"
    assert cli.run(["entropy-derivatives", "--from-report", str(path), "--out", str(out2)]) == 0
    a, b = json.loads(path.read_text()), report(out2, "entropy-derivatives")
    assert cli.same_results(a, b)


def test_replay_detects_tampering(tmp_path):
    assert run(tmp_path, "rpf", "--preset", "iid") == 0
    path = tmp_path / "rpf" / "report.json"
    rep = json.loads(path.read_text())
    rep["results"]["lambda"] = 2.0
    path.write_text(json.dumps(rep))
    assert cli.run(["rpf", "--from-report", str(path), "--out", str(tmp_path / "x")]) == 1
    assert cli.run(["variance", "--from-report", str(path), "--out", str(tmp_path / "x")]) == 2


def test_config_file_and_table(tmp_path):
    space = make_finite_alphabet(3)
    write_csv(GridFunction(space, 2, [0.1, 0.2, 0.3, 0.0, -0.1, 0.5, 0.2, 0.2, 0.1]), tmp_path / "f.csv")
    (tmp_path / "exp.ini").write_text(
        "[space]\nkind = finite\nd = 3\n\n"
        "[potential]\npreset = table\nfile = f.csv\n\n"
        "[observable]\npreset = indicator\nword = 2\n"
    )
    assert cli.run(["variance", "--config", str(tmp_path / "exp.ini"), "--out", str(tmp_path)]) == 0
    assert report(tmp_path, "variance")["results"]["spread"] <= 1e-6


def test_env_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ENV, str(tmp_path / "env"))
    assert cli.run(["rpf", "--preset", "iid"]) == 0
    assert (tmp_path / "env" / "rpf" / "report.json").exists()


def test_print_config(capsys):
    assert cli.run(["rpf", "--preset", "markov", "--print-config"]) == 0
    out = capsys.readouterr().out
    assert "[markov]" in out and "p01 = 0.3" in out
    raw = cfgmod.parse_ini(out)
    assert raw["potential"]["preset"] == "markov-logj"


def test_unknown_command(capsys):
    assert cli.run(["frobnicate"]) == 2
    assert cli.run(["rpf", "--preset", "nope"]) == 2


def test_malformed_ini(tmp_path, capsys):
    (tmp_path / "bad.ini").write_text("[space]\nkind = finite\nthis line is broken\n")
    assert cli.run(["rpf", "--config", str(tmp_path / "bad.ini")]) == 2
    err = capsys.readouterr().err
    assert "bad.ini:3: cannot parse" in err


def test_nonconvergence_exit(tmp_path):
    assert run(tmp_path, "rpf", "--preset", "circle-cos", "--set", "space.n_nodes=16",
               "--set", "run.tol=1e-300") == 3


@pytest.mark.parametrize(
    "override, field",
    [
        ("space.kind=torus", "space.kind"),
        ("space.d=1", "space.d"),
        ("space.d=two", "space.d"),
        ("space.weights=1,-1", "space.weights"),
        ("space.weights=1,2,3", "space.weights"),
        ("potential.preset=magic", "potential.preset"),
        ("potential.depth=-1", "potential.depth"),
        ("potential.depth=40", "potential.depth"),
        ("observable.value=nan", "observable.value"),
        ("run.tol=0", "run.tol"),
        ("run.tol=1e-3", "run.tol"),
        ("run.n=0", "run.n"),
        ("run.m=10", "run.m"),
        ("run.seed=-4", "run.seed"),
        ("run.fd_step=0.5", "run.fd_step"),
        ("run.z_grid=0,3", "run.z_grid"),
        ("run.z_grid=a,b", "run.z_grid"),
        ("run.t_max=-5", "run.t_max"),
        ("run.t_points=2", "run.t_points"),
        ("run.max_word_len=4", "run.max_word_len"),
        ("run.direction_seed=x", "run.direction_seed"),
        ("output.formats=xml", "output.formats"),
    ],
)
def test_validation_per_field(override, field, capsys):
    assert cli.run(["rpf", "--preset", "iid", "--set", override]) == 2
    assert field in capsys.readouterr().err


@pytest.mark.parametrize("override, field", [("markov.p01=0", "markov"), ("markov.p00=0.5", "markov"),
                                             ("markov.p10=x", "markov.p10")])
def test_validation_markov(override, field, capsys):
    assert cli.run(["rpf", "--preset", "markov", "--set", override]) == 2
    assert field in capsys.readouterr().err


def test_missing_table_file(tmp_path, capsys):
    args = ["rpf", "--preset", "iid", "--set", "potential.preset=table", "--set", "potential.file=nope.csv"]
    assert cli.run(args) == 2
    assert "potential.file" in capsys.readouterr().err


def test_bad_override_syntax(capsys):
    assert cli.run(["rpf", "--preset", "iid", "--set", "novalue"]) == 2
    assert "section.key=value" in capsys.readouterr().err


@pytest.mark.parametrize(
    "text, expect",
    [
        ("kind = finite\n", "bad.ini:1: line outside any [section]"),
        ("[space]\nkind = finite\nkind = circle\n", "bad.ini:3:"),
    ],
)
def test_ini_line_diagnostics(tmp_path, capsys, text, expect):
    (tmp_path / "bad.ini").write_text(text)
    assert cli.run(["rpf", "--config", str(tmp_path / "bad.ini")]) == 2
    assert expect in capsys.readouterr().err
