import csv
import io
import json

import pytest

from mixlangevin.errors import ConfigurationError
from mixlangevin.harness import (
    apply_overrides,
    emit_report,
    fit_loglog_slope,
    parse_config_text,
    run_certify,
    run_checks,
    run_experiment,
    run_sweep,
)
from mixlangevin.harness.cli import main
from mixlangevin.harness.experiment import SweepResult
from mixlangevin.harness.report import SLOPE_HEADER, SWEEP_HEADER, csv_text, to_json

SMALL_RUN = """
experiment = small
seed = 3
potential.name = quadratic
potential.dim = 1
chain.eta = 0.1
chain.steps = 400
chain.burn_in = 100
ensemble.chains = 2000
metrics.request = kl, tv, w, moments
metrics.samples = tail
metrics.moment_s = 2, 4
"""

SMALL_SWEEP = SMALL_RUN.replace("experiment = small", "experiment = small_sweep") + \
    "sweep.eta = 0.2, 0.1, 0.05, 0.025\n"


def cfg_file(tmp_path, text, name="c.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- config parsing ------------------------------------------------------------


def test_parse_basic_and_lists():
    cfg = parse_config_text(SMALL_RUN + "potential.a = 1.5\n")
    assert cfg["chain.steps"] == 400
    assert cfg["metrics.moment_s"] == (2, 4)
    assert cfg["potential.a"] == (1.5,)
    assert cfg["chain.gradient"] == "exact"  # default


def test_terms_parse():
    cfg = parse_config_text("potential.name = mixture_norm\npotential.dim = 2\npotential.terms = 1:2.5, 0.5:3\n")
    assert cfg["potential.terms"] == ((1.0, 2.5), (0.5, 3.0))


@pytest.mark.parametrize("text,field", [
    ("potential.name = quadratic\nchain.bogus = 1\n", "chain.bogus"),
    ("potential.name = quadratic\nchain.steps = ten\n", "chain.steps"),
    ("potential.name = quadratic\nchain.gradient = leapfrog\n", "chain.gradient"),
    ("potential.name = quadratic\nchain.steps = 10\nchain.steps = 20\n", "chain.steps"),
    ("potential.name = quadratic\nmetrics.request = kl, entropy\n", "metrics.request"),
    ("potential.name = quadratic\npotential.terms = 1\n", "potential.terms"),
    ("potential.name = quadratic\njust text\n", "<text>:2"),
])
def test_parse_errors_name_the_field(text, field):
    with pytest.raises(ConfigurationError) as e:
        parse_config_text(text)
    assert e.value.field == field
    assert field in str(e.value)


def test_kl_on_grid_at_d5_is_invalid():
    cfg = parse_config_text("potential.name = quadratic\npotential.dim = 5\nreference.kind = grid\n"
                            "metrics.request = kl\nensemble.chains = 200\nchain.steps = 10\n")
    with pytest.raises(ConfigurationError) as e:
        run_experiment(cfg)
    assert e.value.field == "metrics.request"
    assert "dim" in str(e.value)


def test_sweep_axes_conflict():
    with pytest.raises(ConfigurationError):
        parse_config_text("potential.name = quadratic\nsweep.eta = 0.1, 0.2\nsweep.epsilon = 0.1\n")


def test_overrides_and_run_id():
    cfg = parse_config_text(SMALL_RUN)
    same = parse_config_text("\n".join(reversed(SMALL_RUN.strip().splitlines())) + "\n")
    assert cfg.run_id() == same.run_id()
    other = apply_overrides(cfg, ["seed=4"])
    assert other["seed"] == 4 and other.run_id() != cfg.run_id()
    assert apply_overrides(cfg, ["chain.eta=0.05"])["chain.eta"] == 0.05
    with pytest.raises(ConfigurationError):
        apply_overrides(cfg, ["chain.eta"])


# -- reports -------------------------------------------------------------------


def test_csv_quoting_and_line_endings():
    text = csv_text(["a", "b"], [["x,y", 'say "hi"'], [0.1, None], [True, 2]])
    assert "\r" not in text
    assert text.splitlines() == ["a,b", '"x,y","say ""hi"""', "0.1,", "true,2"]
    assert list(csv.reader(io.StringIO(text)))[1] == ["x,y", 'say "hi"']


def test_json_is_canonical():
    assert to_json({"b": 1, "a": float("nan")}) == '{\n  "a": null,\n  "b": 1\n}\n'


def test_empty_sweep_writes_header_only(tmp_path):
    cfg = parse_config_text(SMALL_SWEEP)
    paths = emit_report(SweepResult(cfg, cfg.run_id(), [], [], []), tmp_path)
    assert paths["csv"].read_text() == ",".join(SWEEP_HEADER) + "\n"
    assert paths["slopes"].read_text() == ",".join(SLOPE_HEADER) + "\n"
    assert json.loads(paths["json"].read_text())["rows"] == []


def test_run_report_deterministic(tmp_path):
    cfg = parse_config_text(SMALL_RUN)
    a = emit_report(run_experiment(cfg, workers=1), tmp_path / "a")
    b = emit_report(run_experiment(cfg, workers=3), tmp_path / "b")
    assert a["json"].read_bytes() == b["json"].read_bytes()
    assert a["csv"].read_bytes() == b["csv"].read_bytes()
    d = json.loads(a["json"].read_text())
    assert d["schema"] == 1 and d["kind"] == "run" and d["run_id"] == cfg.run_id()
    assert set(d["metrics"]["verdicts"]) >= {"pinsker", "bolley_villani"}
    rows = a["csv"].read_text().splitlines()
    assert len(rows) == 2001 and rows[0].startswith("chain,")


def test_sweep_four_points_and_slope(tmp_path):
    res = run_sweep(parse_config_text(SMALL_SWEEP), workers=1)
    paths = emit_report(res, tmp_path)
    rows = list(csv.reader(paths["csv"].open(newline="")))
    assert rows[0] == SWEEP_HEADER and len(rows) == 5
    assert [float(r[1]) for r in rows[1:]] == [0.2, 0.1, 0.05, 0.025]
    slopes = list(csv.reader(paths["slopes"].open(newline="")))
    assert slopes[0] == SLOPE_HEADER and len(slopes) == 2
    d = res.to_dict()
    assert d["slopes"][0]["axis"] == "eta"


def test_slope_fit_recovers_power_law():
    x = [0.2, 0.1, 0.05, 0.025]
    y = [3 * v ** 2 for v in x]
    slope, se, n = fit_loglog_slope(x, y, [1e-3 * v for v in y])[:3]
    assert slope == pytest.approx(2.0, abs=1e-9) and n == 4


def test_flat_sweep_not_identifiable():
    text = ("experiment = flat\npotential.name = flat\npotential.dim = 1\nchain.steps = 50\n"
            "ensemble.chains = 2000\nmetrics.request = kl, tv\nsweep.eta = 0.2, 0.1, 0.05\n")
    res = run_sweep(parse_config_text(text), workers=1)
    assert res.to_dict()["slopes"][0]["status"] == "not-identifiable"


def test_certify_small():
    text = ("experiment = cert\npotential.name = linear_tail\npotential.dim = 2\npotential.alphas = 1\n"
            "certify.trials = 2000\n")
    d = run_certify(parse_config_text(text)).to_dict()
    assert d["status"] == "pass"
    assert any(c["check"].startswith("control_") and not c["passed"] for c in d["certificates"])


def test_checks_small():
    text = ("experiment = chk\npotential.name = mixture_norm\npotential.dim = 2\npotential.terms = 1:2.5\n"
            "potential.metadata = quoted\nchecks.request = smoothing_bounds, unbiased\n"
            "checks.points = 3\nchecks.draws = 5000\n")
    res = run_checks(parse_config_text(text))
    d = res.to_dict()
    assert d["kind"] == "checks" and d["schema"] == 1
    assert all(v["passed"] for v in d["verdicts"].values())
    assert len(d["verdicts"]) == 3


# -- CLI -----------------------------------------------------------------------


def test_cli_exit_ok_and_seed_flag(tmp_path, capsys):
    p = cfg_file(tmp_path, SMALL_RUN)
    out = tmp_path / "out"
    assert main(["run", str(p), "--out-dir", str(out), "--workers", "1"]) == 0
    assert main(["run", str(p), "--out-dir", str(out), "--seed", "5", "--set", "ensemble.chains=500"]) == 0
    files = sorted((out / "small").glob("*.json"))
    assert len(files) == 2
    seeds = sorted(json.loads(f.read_text())["seed"] for f in files)
    assert seeds == [3, 5]
    assert "status=pass" in capsys.readouterr().out


def test_cli_exit_verdict_failure(tmp_path):
    text = ("experiment = moments\nchecks.request = gengauss_identity\nchecks.dims = 5\n"
            "checks.p = 2\nchecks.n = 4\nchecks.draws = 20000\n")
    assert main(["run", str(cfg_file(tmp_path, text)), "--out-dir", str(tmp_path)]) == 1


def test_cli_exit_config_error(tmp_path, capsys):
    p = cfg_file(tmp_path, "potential.name = quadratic\nchain.eta = fast\n")
    assert main(["run", str(p), "--out-dir", str(tmp_path)]) == 2
    assert "chain.eta" in capsys.readouterr().err
    assert main(["sweep", str(tmp_path / "missing.cfg")]) == 2
    # a sweep command needs an axis
    assert main(["sweep", str(cfg_file(tmp_path, SMALL_RUN, "r.cfg")), "--out-dir", str(tmp_path)]) == 2
