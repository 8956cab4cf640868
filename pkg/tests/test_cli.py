import io
import subprocess
import sys

import pydot
import pytest

from spudd.bench import gen_expon
from spudd.cli import EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_OK, EXIT_USAGE, run
from spudd.parser import parse

KEYS = [
    "model",
    "method",
    "variables",
    "actions",
    "discount",
    "epsilon",
    "bigadd",
    "iterations",
    "converged",
    "wall_time",
    "distinct_values",
    "value_internal_nodes",
    "value_leaves",
    "value_equivalent_tree_leaves",
    "policy_internal_nodes",
    "policy_leaves",
    "policy_equivalent_tree_leaves",
    "policy_action_sets",
    "supnorm_trace",
]


def call(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def report(text):
    return dict(line.split(": ", 1) for line in text.splitlines())


def test_report_keys_and_values(fixtures_dir):
    code, out, _ = call("solve", "--input", str(fixtures_dir / "expon6.mdp"))
    assert code == EXIT_OK
    rep = report(out)
    assert list(rep) == KEYS
    assert rep["variables"] == "6"
    assert rep["distinct_values"] == "64"
    assert rep["converged"] == "true"
    assert rep["bigadd"] == "inf"
    assert len(rep["supnorm_trace"].split(",")) == int(rep["iterations"])


def test_report_is_deterministic():
    args = ("solve", "--gen", "random", "--n", "6", "--seed", "4", "--bigadd", "2")
    first, second = report(call(*args)[1]), report(call(*args)[1])
    first.pop("wall_time"), second.pop("wall_time")
    assert first == second


def test_check_oracle_both_methods():
    for method in ("spudd", "flat"):
        code, out, _ = call("solve", "--gen", "random", "--n", "5", "--seed", "2", "--method", method, "--check-oracle")
        assert code == EXIT_OK
        rep = report(out)
        assert list(rep)[-2:] == ["supnorm_vs_flat", "policy_matches_flat"]
        assert float(rep["supnorm_vs_flat"]) <= 1e-9
        assert rep["policy_matches_flat"] == "true"


def test_flat_and_spudd_reports_agree():
    spudd = report(call("solve", "--gen", "linear", "--n", "5")[1])
    flat = report(call("solve", "--gen", "linear", "--n", "5", "--method", "flat")[1])
    for key in ("iterations", "distinct_values", "value_leaves", "policy_action_sets"):
        assert spudd[key] == flat[key], key


def test_not_converged_exit_code():
    code, out, _ = call("solve", "--gen", "expon", "--n", "4", "--max-iters", "3")
    assert code == EXIT_NOT_CONVERGED
    assert report(out)["converged"] == "false"


def test_invalid_model_exit_code(tmp_path):
    bad = tmp_path / "bad.mdp"
    bad.write_text("(variables C)\n(action a (C (1.2)))\n(reward (0))\n(discount 0.9)\n")
    code, out, err = call("solve", "--input", str(bad))
    assert code == EXIT_INVALID
    assert out == ""
    assert "line 2, column 15" in err


def test_missing_file_and_oracle_limit(tmp_path):
    assert call("solve", "--input", str(tmp_path / "none.mdp"))[0] == EXIT_INVALID
    assert call("solve", "--gen", "linear", "--n", "21", "--check-oracle")[0] == EXIT_INVALID


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["solve"],
        ["solve", "--gen", "expon"],
        ["solve", "--gen", "nope", "--n", "3"],
        ["solve", "--gen", "expon", "--n", "3", "--input", "x.mdp"],
        ["solve", "--gen", "expon", "--n", "3", "--bigadd", "0"],
        ["solve", "--gen", "expon", "--n", "3", "--epsilon", "-1"],
        ["solve", "--input", "x.mdp", "--n", "3"],
        ["frobnicate"],
    ],
)
def test_usage_errors(argv):
    assert call(*argv)[0] == EXIT_USAGE


def test_dot_dumps(tmp_path):
    value_path, policy_path = tmp_path / "v.dot", tmp_path / "p.dot"
    code, out, _ = call(
        "solve", "--gen", "expon", "--n", "3", "--dump-value", str(value_path), "--dump-policy", str(policy_path)
    )
    assert code == EXIT_OK
    rep = report(out)
    (graph,) = pydot.graph_from_dot_data(value_path.read_text())
    shapes = [n.get_shape() for n in graph.get_nodes() if n.get_name() not in ("node", "edge", "graph")]
    assert shapes.count("box") == int(rep["value_leaves"])
    assert len(shapes) - shapes.count("box") == int(rep["value_internal_nodes"])
    (policy,) = pydot.graph_from_dot_data(policy_path.read_text())
    labels = {n.get_label().strip('"') for n in policy.get_nodes() if n.get_shape() == "box"}
    assert labels <= {"a1", "a2", "a3"}
    assert len(labels) == int(rep["policy_leaves"])


def test_tied_policy_labels_are_joined(tmp_path):
    model = tmp_path / "tie.mdp"
    model.write_text("(variables x)(action b (x (0.5)))(action a (x (0.5)))(reward (x (true (1)) (false (0))))(discount 0.5)")
    path = tmp_path / "p.dot"
    assert call("solve", "--input", str(model), "--dump-policy", str(path))[0] == EXIT_OK
    assert '"a,b"' in path.read_text()


def test_stats_every_writes_progress():
    code, _, err = call("solve", "--gen", "expon", "--n", "3", "--stats-every", "10")
    assert code == EXIT_OK
    lines = err.splitlines()
    assert lines and all(line.startswith("iteration ") for line in lines)
    assert lines[0].startswith("iteration 10:")


def test_generated_and_file_models_agree(tmp_path, fixtures_dir):
    from_file = report(call("solve", "--input", str(fixtures_dir / "expon6.mdp"))[1])
    generated = report(call("solve", "--gen", "expon", "--n", "6")[1])
    for key in KEYS[2:]:
        if key != "wall_time":
            assert from_file[key] == generated[key], key


def test_console_entry_point(fixtures_dir):
    proc = subprocess.run(
        [sys.executable, "-m", "spudd.cli", "solve", "--input", str(fixtures_dir / "linear6.mdp")],
        capture_output=True,
        text=True,
    )
    assert proc.returncode == 0
    assert report(proc.stdout)["distinct_values"] == "7"


def test_fixture_parses_like_generator(fixtures_dir):
    spec = parse((fixtures_dir / "expon6.mdp").read_text())
    assert len(spec.actions) == len(gen_expon(6).actions)
