import numpy as np
import pytest
from conftest import ANGLES, DESK, SHELF

from pivoplan import cli, harness
from pivoplan.harness import (FREE, ExecutionTrace, ExperimentSpec, FeasibilityMatrix, angle_label, classify,
                              parse_angle, stability_rollout, write_execution)
from pivoplan.planner import PlanResult


def test_parse_angle():
    assert parse_angle("free") is FREE
    assert parse_angle("-pi/4") == pytest.approx(-np.pi / 4)
    assert parse_angle("pi/2") == pytest.approx(np.pi / 2)
    assert parse_angle("0.5pi") == pytest.approx(np.pi / 2)
    assert parse_angle("0.3") == pytest.approx(0.3)
    with pytest.raises(ValueError):
        parse_angle("north")
    assert angle_label(-np.pi / 4) == "-pi/4"
    assert angle_label(FREE) == "free"


def test_classify():
    assert classify(False, 0.1) == harness.OK
    assert classify(False, 0.6) == harness.PIVOT_FAILURE
    assert classify(True, 0.0) == harness.DROP


def test_matrix_csv_has_every_cell(tmp_path):
    m = FeasibilityMatrix.empty("t", [0.0, FREE], [0.0, FREE])
    for i in range(2):
        for j in range(2):
            m.set(i, j, PlanResult("infeasible_goal", chosen_start_angle=0.0, planning_time_s=0.1))
    p = tmp_path / "m.csv"
    m.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0].startswith("alpha_s,alpha_g,outcome")
    assert len(lines) == 5
    assert m.gray(0, 0) and not m.gray(1, 1) and not m.gray(0, 1)


def test_zero_disturbance_rollout_stays_vertical(desk_scene):
    ex = stability_rollout(desk_scene.object("E"), 0.0, 0.0, None, 2.0, seed=0, noise=(0.0, 0.0))
    assert ex.max_deviation < 1e-3
    assert not ex.slipped_out
    assert ex.outcome == harness.OK


def test_rollout_is_seeded(tmp_path, desk_scene):
    obj = desk_scene.object("E")
    a = stability_rollout(obj, np.pi / 2, 0.0, None, 1.5, seed=4)
    b = stability_rollout(obj, np.pi / 2, 0.0, None, 1.5, seed=4)
    c = stability_rollout(obj, np.pi / 2, 0.0, None, 1.5, seed=5)
    write_execution(tmp_path / "a", "x", a)
    write_execution(tmp_path / "b", "x", b)
    for name in ("trace_x.csv", "schedule_x.csv", "plot_x.py"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert not np.array_equal(a.fn_cmd, c.fn_cmd)


def test_trace_columns_and_plot_script(tmp_path, desk_scene):
    ex = stability_rollout(desk_scene.object("E"), np.pi / 2, 0.0, None, 1.5, seed=0)
    assert isinstance(ex, ExecutionTrace)
    write_execution(tmp_path, "case", ex)
    header = (tmp_path / "trace_case.csv").read_text().splitlines()[0].split(",")
    for col in ("t", "fn_SA", "fn_GP", "fn_cmd", "modality", "v_j"):
        assert col in header
    script = (tmp_path / "plot_case.py").read_text()
    compile(script, "plot_case.py", "exec")
    assert "trace_case.csv" in script and "schedule_case.csv" in script
    assert "axvspan" in script and 'color="0.85"' in script


def _cli(tmp_path, *args):
    return cli.main(list(args) + ["--out", str(tmp_path)])


def test_cli_desk_and_reproducible(tmp_path):
    argv = ["desk", "--scene", str(DESK), "--heights", "0.2", "--angles", "0", "free", "--seed", "3"]
    assert _cli(tmp_path / "a", *argv) == cli.EXIT_OK
    assert _cli(tmp_path / "b", *argv) == cli.EXIT_OK
    a = (tmp_path / "a" / "matrix_0.20.csv").read_bytes()
    assert a == (tmp_path / "b" / "matrix_0.20.csv").read_bytes()
    assert (tmp_path / "a" / "matrix_0.20.txt").exists()


def test_cli_shelf_writes_execution(tmp_path):
    argv = ["shelf", "--scene", str(SHELF), "--heights", "0.2", "--angles", "free"]
    assert _cli(tmp_path, *argv) == cli.EXIT_OK
    names = {p.name for p in tmp_path.iterdir()}
    assert {"matrix_0.20.csv", "trace_shelf_0.20_free_free.csv", "schedule_shelf_0.20_free_free.csv",
            "plot_shelf_0.20_free_free.py"} <= names


def test_cli_scene_errors(tmp_path):
    assert _cli(tmp_path, "desk", "--scene", str(tmp_path / "missing.yaml")) == cli.EXIT_SCENE
    bad = tmp_path / "bad.yaml"
    bad.write_text("obstacles: [\n")
    assert _cli(tmp_path, "desk", "--scene", str(bad)) == cli.EXIT_SCENE
    assert _cli(tmp_path, "desk", "--scene", str(DESK), "--objects", "Z") == cli.EXIT_SCENE
    assert _cli(tmp_path, "sensitivity", "--scene", str(DESK), "--mu-override", "Q=0.3") == cli.EXIT_SCENE
    no_task = tmp_path / "no_task.yaml"
    no_task.write_text("obstacles: []\n")
    assert _cli(tmp_path, "desk", "--scene", str(no_task)) == cli.EXIT_SCENE


def test_cli_solver_failure(tmp_path, monkeypatch):
    def boom(self, request):
        raise np.linalg.LinAlgError("singular KKT system")
    monkeypatch.setattr(harness.Planner, "plan", boom)
    assert _cli(tmp_path, "desk", "--scene", str(DESK), "--heights", "0.2", "--angles", "0") == cli.EXIT_SOLVER


def test_cli_rejects_bad_arguments(tmp_path):
    with pytest.raises(SystemExit):
        _cli(tmp_path, "desk", "--scene", str(DESK), "--angles", "sideways")
    with pytest.raises(SystemExit):
        _cli(tmp_path, "desk", "--scene", str(DESK), "--mu-override", "B")


def test_gray_cells_match_rigid_grasp(grids):
    """A gray cell succeeds exactly when the rigid-grasp request does."""
    for h in (0.2, 0.72, 1.31):
        piv, rigid = grids.desk(h, True), grids.desk(h, False)
        for i in range(len(ANGLES)):
            for j in range(len(ANGLES)):
                if piv.gray(i, j):
                    assert piv.success(i, j) == rigid.success(i, j), (h, i, j)


def test_rigid_grasp_keeps_angle(grids):
    m = grids.desk(0.2, False)
    for i, a in enumerate(m.rows):
        for j, b in enumerate(m.cols):
            if m.success(i, j):
                start = m.chosen_start[i][j]
                assert m.chosen_goal[i][j] == pytest.approx(start, abs=0.05)


def test_successful_cells_have_trajectories(grids):
    m = grids.desk(0.2)
    mask = m.success_mask()
    assert set(m.trajectories) == {tuple(ij) for ij in np.argwhere(mask).tolist()}
    for (i, j), traj in m.trajectories.items():
        assert traj.duration == pytest.approx(m.durations[i][j])


def test_experiment_spec_defaults():
    spec = ExperimentSpec("desk", str(DESK))
    assert spec.angle_grid == ANGLES
    assert spec.pivoting_enabled
    assert spec.threshold == 0.01
