import json
import re

import numpy as np
import pytest

from rosdyn.cli import main
from rosdyn.dynamics import Trajectory, integrate
from rosdyn.io import read_trajectory_csv, write_orbit_svg, write_rows_csv, write_trajectory_csv
from rosdyn.builders import build_cycle
from rosdyn.market import MarketInstance, load_instance, save_instance

NOR3 = "X = NOR(Y, Z)\nY = NOR(Z, X)\nZ = NOR(X, Y)\n"


def test_empty_trajectory_csv_has_header_only(tmp_path):
    traj = Trajectory(("a", "b"), np.zeros(0), np.zeros((0, 2)), np.zeros((0, 2)), "", {})
    write_trajectory_csv(traj, tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines() == ["t,m_a,m_b,U_a,U_b"]


def test_csv_round_trip_is_exact(tmp_path):
    traj = integrate(build_cycle(3), [1.2, 1.8, 2.4], 5.0)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    back = read_trajectory_csv(tmp_path / "t.csv")
    assert back.names == traj.names
    assert np.array_equal(back.times, traj.times)
    assert np.array_equal(back.states, traj.states)
    assert np.array_equal(back.utilities, traj.utilities)


def test_csv_without_utilities(tmp_path):
    traj = integrate(build_cycle(2), [1.2, 1.8], 1.0, record_utilities=False)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    assert read_trajectory_csv(tmp_path / "t.csv").utilities is None


def test_csv_errors_name_the_path(tmp_path):
    with pytest.raises(OSError, match="nowhere"):
        read_trajectory_csv(tmp_path / "nowhere.csv")
    (tmp_path / "bad.csv").write_text("x,y\n1,2\n")
    with pytest.raises(ValueError, match="bad.csv"):
        read_trajectory_csv(tmp_path / "bad.csv")
    traj = integrate(MarketInstance(("a",)), [1.0], 1.0)
    with pytest.raises(OSError, match="missing-dir"):
        write_trajectory_csv(traj, tmp_path / "missing-dir" / "t.csv")


def svg_box(text):
    vb = [float(x) for x in re.search(r'viewBox="([^"]+)"', text).group(1).split()]
    pts = re.search(r'points="([^"]+)"', text).group(1).split()
    xy = np.array([[float(v) for v in p.split(",")] for p in pts])
    return vb, xy


def test_circle_svg_aspect_ratio(tmp_path):
    t = np.linspace(0, 2 * np.pi, 2001)
    write_orbit_svg(np.stack([1.5 - 0.4 * np.cos(t), 1.5 - 0.4 * np.sin(t)], axis=1), tmp_path / "c.svg")
    text = (tmp_path / "c.svg").read_text()
    assert text.count("<polyline") == 1 and text.count("<line") == 2
    vb, xy = svg_box(text)
    assert vb[2] / vb[3] == pytest.approx(1.0, rel=1e-2)
    span = xy.max(axis=0) - xy.min(axis=0)
    assert vb[2] == pytest.approx(1.1 * span[0], rel=1e-4)
    assert vb[0] == pytest.approx(xy[:, 0].min() - 0.05 * span[0], abs=1e-5)


def test_svg_rejects_bad_input(tmp_path):
    with pytest.raises(ValueError):
        write_orbit_svg(np.zeros((0, 2)), tmp_path / "x.svg")
    with pytest.raises(ValueError):
        write_orbit_svg(np.zeros((3, 3)), tmp_path / "x.svg")


def test_rows_csv(tmp_path):
    write_rows_csv(tmp_path / "r.csv", ["a", "b"], [(1, 0.1), ("x", np.float64(2.5))])
    assert (tmp_path / "r.csv").read_text().splitlines() == ["a,b", "1,0.1", "x,2.5"]


# ---------------------------------------------------------------- CLI


def write_instance(tmp_path, inst, name="i.json"):
    p = tmp_path / name
    save_instance(inst, p)
    return str(p)


def test_simulate_no_item_instance(tmp_path, capsys):
    path = write_instance(tmp_path, MarketInstance(("a", "b")))
    assert main(["simulate", "--instance", path, "--m0", "1.5,2", "--horizon", "1", "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "trajectory.csv").read_text().splitlines()
    assert rows[0] == "t,m_a,m_b,U_a,U_b"
    assert all(r.split(",")[1:] == ["1.5", "2.0", "0.0", "0.0"] for r in rows[1:])
    assert (tmp_path / "trajectory.png").exists() and (tmp_path / "trajectory.svg").exists()


def test_simulate_is_deterministic(tmp_path):
    path = write_instance(tmp_path, build_cycle(3))
    outs = []
    for k in range(2):
        d = tmp_path / f"run{k}"
        assert main(["simulate", "--instance", path, "--m0", "random:7", "--horizon", "5", "--seed", "3",
                     "--out", str(d), "--no-figures"]) == 0
        outs.append((d / "trajectory.csv").read_bytes())
    assert outs[0] == outs[1]


def test_simulate_lambda_override_and_rkf45(tmp_path):
    path = write_instance(tmp_path, build_cycle(2))
    assert main(["simulate", "--instance", path, "--m0", "1.5,1.5", "--lambda", "0", "--horizon", "30",
                 "--method", "rkf45", "--dt", "0.1", "--out", str(tmp_path), "--no-figures"]) == 0
    final = read_trajectory_csv(tmp_path / "trajectory.csv").final
    assert final == pytest.approx([1.0, 1.0], abs=1e-3)


@pytest.mark.parametrize("args, needle", [
    (["simulate", "--instance", "missing.json"], "missing.json"),
    (["simulate", "--instance", "{inst}", "--m0", "1,2,3"], "--m0"),
    (["simulate", "--instance", "{inst}", "--m0", "random:x"], "random:x"),
    (["simulate", "--instance", "{inst}", "--lambda", "2"], "--lambda"),
    (["simulate", "--instance", "{inst}", "--dt", "-1"], "positive"),
    (["compile-circuit", "--network", "{bad}"], "line 1"),
    (["build-repressilator", "--builder", "cycle:1"], "cycle:1"),
    (["build-repressilator", "--builder", "torus:3"], "torus:3"),
    (["sweep-lambda", "--builder", "cycle:2", "--grid", "0,1.5"], "--grid"),
    (["scan-bistability", "--builder", "cycle:2", "--box", "3,1"], "--box"),
    (["analyze", "--trajectory", "none.csv"], "none.csv"),
    (["compile-linear", "--matrix", "{bad}", "--x0", "1", "--horizon", "1"], "--matrix"),
    (["simulate", "--instance", "{inst}", "--quad-nodes", "1"], "--quad-nodes"),
])
def test_errors_name_offending_input(tmp_path, capsys, args, needle):
    inst = write_instance(tmp_path, build_cycle(2))
    (tmp_path / "bad.txt").write_text("X = AND(Y)\n")
    args = [a.format(inst=inst, bad=tmp_path / "bad.txt") for a in args] + ["--out", str(tmp_path)]
    assert main(args) != 0
    assert needle in capsys.readouterr().err


def test_invalid_instance_file_is_reported(tmp_path, capsys):
    p = tmp_path / "i.json"
    p.write_text(json.dumps({"lambda": 1, "bidders": ["a"], "items": [{"values": {"q": {"fixed": 1}}}]}))
    assert main(["simulate", "--instance", str(p)]) == 2
    assert "missing bidder 'q'" in capsys.readouterr().err


def test_build_repressilator(tmp_path, capsys):
    assert main(["build-repressilator", "--builder", "coupled:coupling-A", "--c", "5", "--out", str(tmp_path)]) == 0
    inst = load_instance(tmp_path / "instance.json")
    assert inst.n_bidders == 9 and inst.n_items == 12
    edges = tmp_path / "g.txt"
    edges.write_text("n 3\nc 2\n1 2\n2 3\n")
    assert main(["build-repressilator", "--builder", f"edges:{edges}", "--out", str(tmp_path)]) == 0
    assert load_instance(tmp_path / "instance.json").n_items == 2


def test_compile_circuit_reports_counts(tmp_path, capsys):
    net = tmp_path / "nor3.txt"
    net.write_text(NOR3)
    assert main(["compile-circuit", "--network", str(net), "--mode", "full", "--out", str(tmp_path)]) == 0
    assert capsys.readouterr().out.startswith("21 bidders")
    assert load_instance(tmp_path / "instance.json").n_bidders == 21


def test_compile_linear(tmp_path, capsys):
    (tmp_path / "A.txt").write_text("0 -1\n1, 0\n")
    assert main(["compile-linear", "--matrix", str(tmp_path / "A.txt"), "--x0", "1,0",
                 "--horizon", str(4 * np.pi), "--out", str(tmp_path)]) == 0
    assert "6 bidders, 26 items" in capsys.readouterr().out
    rows = (tmp_path / "predicted.csv").read_text().splitlines()
    assert rows[0] == "t,m_y1,m_y2,m_y3,m_y4"
    assert [float(x) for x in rows[1].split(",")][:3] == pytest.approx([0.0, 1.1, 1.5])


def test_analyze_reads_simulated_csv(tmp_path, capsys):
    path = write_instance(tmp_path, build_cycle(2))
    main(["simulate", "--instance", path, "--m0", "1.4,1.4", "--horizon", "100", "--out", str(tmp_path),
          "--no-figures"])
    capsys.readouterr()
    assert main(["analyze", "--trajectory", str(tmp_path / "trajectory.csv"), "--out", str(tmp_path)]) == 0
    report = capsys.readouterr().out
    assert "classification: equilibrium" in report
    assert (tmp_path / "analysis.txt").read_text() == report
    assert (tmp_path / "analysis.png").exists()


def test_analyze_without_utilities_needs_instance(tmp_path, capsys):
    traj = integrate(build_cycle(2), [1.4, 1.4], 30.0, record_utilities=False)
    write_trajectory_csv(traj, tmp_path / "t.csv")
    assert main(["analyze", "--trajectory", str(tmp_path / "t.csv"), "--out", str(tmp_path)]) == 2
    assert "--instance" in capsys.readouterr().err
    path = write_instance(tmp_path, build_cycle(2))
    assert main(["analyze", "--trajectory", str(tmp_path / "t.csv"), "--instance", path,
                 "--out", str(tmp_path), "--no-figures"]) == 0


def test_sweep_and_scan(tmp_path, capsys):
    assert main(["sweep-lambda", "--builder", "cycle:2", "--grid", "0,1", "--horizon", "40",
                 "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "sweep.csv").read_text().splitlines()
    assert rows[0] == "lambda,m1_min,m1_max,converged" and len(rows) == 3
    assert (tmp_path / "sweep.png").exists()
    assert main(["scan-bistability", "--builder", "cycle:2", "--count", "3", "--horizon", "100",
                 "--out", str(tmp_path)]) == 0
    assert (tmp_path / "bistability.csv").read_text().startswith("cluster,count,m_b1,m_b2")


def test_gallery_command(gallery):
    assert gallery["status"] == 0
    out = gallery["out"]
    report = (out / "report.csv").read_text()
    circle = next(line for line in report.splitlines() if line.startswith("circle,"))
    period = float(re.search(r"period ([0-9.]+)", circle).group(1))
    assert period == pytest.approx(2 * np.pi, rel=1e-2)
    for name in ("circle.csv", "circle.png", "circle-orbit.svg", "cycle-3.png", "cycle-3-projection.svg",
                 "lambda-sweep.csv", "lambda-sweep.png", "cycle-4-bistability.csv", "first-price.csv"):
        assert (out / name).exists(), name
