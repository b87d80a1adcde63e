import json
import os

import pytest

from fluidnet import fixtures
from fluidnet.cli import main
from fluidnet.specfile import network_to_yaml

LSP_YAML = "skorokhod:\n  theta: [-1.0]\n  reflection: [[1.0]]\n  z0: [1.0]\n"


@pytest.fixture
def spec_file(tmp_path):
    def write(spec_or_text, name="net.yaml"):
        path = tmp_path / name
        text = spec_or_text if isinstance(spec_or_text, str) else network_to_yaml(spec_or_text)
        path.write_text(text)
        return str(path)

    return write


def run_cli(command, input_path, out_dir, *extra):
    return main(
        ["--command", command, "--input", input_path, "--out", str(out_dir), *extra]
    )


def read_report(out_dir):
    with open(os.path.join(out_dir, "report.json")) as handle:
        return json.load(handle)


def test_stability_stable_exit_zero(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("stability", spec_file(fixtures.single_queue()), out,
                   "--horizon", "10", "--samples", "4")
    assert code == 0
    report = read_report(out)
    assert report["stability"]["status"] == "stable"
    assert report["stability"]["tau"] == pytest.approx(2.0, abs=1e-6)


def test_stability_unstable_exit_two(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("stability", spec_file(fixtures.lu_kumar()), out,
                   "--horizon", "30", "--samples", "2")
    assert code == 2
    assert os.path.exists(out / "witness.csv")
    report = read_report(out)
    assert report["stability"]["status"] == "unstable"


def test_malformed_input_exit_one(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("classes: 1\nstations: [unclosed\n")
    assert run_cli("stability", str(bad), tmp_path / "out") == 1


def test_unknown_key_exit_one(spec_file, tmp_path):
    path = spec_file(network_to_yaml(fixtures.single_queue()) + "bogus: 1\n")
    assert run_cli("simulate", path, tmp_path / "out") == 1


def test_simulate_writes_trajectory(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("simulate", spec_file(fixtures.tandem()), out, "--horizon", "5")
    assert code == 0
    with open(out / "trajectory.csv") as handle:
        header = handle.readline().strip()
    assert header == "t,Q1,Q2,T1,T2,u1,u2"
    report = read_report(out)
    assert report["simulate"]["invariants"]["ok"]


def test_skorokhod_command(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("skorokhod", spec_file(LSP_YAML, "lsp.yaml"), out,
                   "--horizon", "3", "--step", "0.05")
    assert code == 0
    report = read_report(out)
    assert report["skorokhod"]["flow_residual"] < 1e-9
    with open(out / "solution.csv") as handle:
        assert handle.readline().strip() == "t,Z1,Y1"


def test_lyapunov_command(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("lyapunov", spec_file(fixtures.tandem()), out,
                   "--horizon", "20", "--samples", "4")
    assert code == 0
    report = read_report(out)
    assert report["certificate"]["status"] == "Verified"
    assert report["sandwich"]["ok"]


def test_gfn_check_command(spec_file, tmp_path):
    out = tmp_path / "out"
    code = run_cli("gfn-check", spec_file(fixtures.tandem()), out,
                   "--horizon", "10", "--samples", "4", "--step", "0.05")
    assert code == 0
    report = read_report(out)
    assert report["gfn_check"]["residual_ok"]
    assert report["gfn_check"]["lipschitz_ok"]


def test_fluidlimit_command(spec_file, tmp_path):
    text = network_to_yaml(fixtures.two_class_priority()) + (
        "queueing:\n  interarrival: exponential\n  service: exponential\n"
        "fluidlimit:\n  direction: [0.5, 0.5]\n  scales: [5, 20]\n"
    )
    out = tmp_path / "out"
    code = run_cli("fluidlimit", spec_file(text), out,
                   "--horizon", "2", "--samples", "3", "--step", "0.02")
    assert code == 0
    with open(out / "distances.csv") as handle:
        assert handle.readline().strip() == "r,seed,mean_dist,max_dist"


def test_byte_identical_reruns(spec_file, tmp_path):
    path = spec_file(fixtures.tandem())
    outputs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert run_cli("stability", path, out, "--horizon", "10", "--samples", "4",
                       "--seed", "7") == 0
        with open(out / "report.json", "rb") as handle:
            outputs.append(handle.read())
    assert outputs[0] == outputs[1]


def test_different_seed_logged(spec_file, tmp_path):
    path = spec_file(fixtures.tandem())
    out = tmp_path / "out"
    run_cli("stability", path, out, "--seed", "123", "--horizon", "10", "--samples", "2")
    report = read_report(out)
    assert report["parameters"]["seed"] == 123


def test_emit_plot_data(tmp_path):
    import numpy as np

    from fluidnet.cli import emit_plot_data
    from fluidnet.dynamics import MaxDrain, Trajectory, simulate

    traj = simulate(fixtures.single_queue(), [1.0], MaxDrain(), 3.0, 0.5)
    target = tmp_path / "traj.csv"
    emit_plot_data(traj, target)
    assert target.read_text().splitlines()[0] == "t,Q1,T1,u1"

    empty = Trajectory(
        np.empty(0), np.empty((0, 2)), np.empty((0, 2)), np.empty((0, 2))
    )
    header_only = tmp_path / "empty.csv"
    emit_plot_data(empty, header_only)
    assert header_only.read_text() == "t,Q1,Q2,T1,T2,u1,u2\n"

    with pytest.raises(TypeError):
        emit_plot_data(42, tmp_path / "nope.csv")

    from fluidnet.errors import IoError

    with pytest.raises(IoError):
        emit_plot_data(traj, tmp_path / "missing-dir" / "x.csv")
