"""Command-line driver: argument and config handling, exit codes, CSV
shapes and determinism, and the construct/destruct checkpoint chain."""

import json
import math
import os

import pytest

from cclab import construct, destruct
from cclab.cli import main


def run(tmp, *argv):
    return main(list(argv) + ["--out", str(tmp)])


def read(tmp, name):
    with open(os.path.join(str(tmp), name)) as fh:
        return fh.read()


def rows_of(text):
    lines = text.strip().split("\n")
    return lines[0], [ln.split(",") for ln in lines[1:]]


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    """One construction run shared by the chain tests."""
    tmp = tmp_path_factory.mktemp("cli")
    code = run(tmp, "construct", "--lambda", "1000", "--l", "1",
               "--qN", "21", "--steps", "3", "--grid", "128",
               "--samples", "12")
    assert code == 0
    return tmp


class TestParsing:
    def test_no_command(self):
        assert main([]) == 2

    def test_unknown_command(self):
        assert main(["bogus"]) == 2

    def test_version_exits_clean(self):
        assert main(["--version"]) == 0

    def test_help_exits_clean(self):
        assert main(["le", "--help"]) == 0

    def test_bad_omega(self, tmp_path):
        assert run(tmp_path, "cf", "--omega", "2.5") == 2

    def test_bad_threads(self, tmp_path):
        assert run(tmp_path, "returns", "--threads", "0") == 2
        assert run(tmp_path, "le", "--schrodinger", "2*3*cos", "--n", "10",
                   "--grid", "64", "--threads", "0") == 2

    def test_le_needs_exactly_one_source(self, tmp_path):
        assert run(tmp_path, "le", "--n", "10") == 2
        assert run(tmp_path, "le", "--schrodinger", "2*3*cos",
                   "--checkpoint", "x.json", "--n", "10") == 2

    def test_le_needs_n(self, tmp_path):
        assert run(tmp_path, "le", "--schrodinger", "2*3*cos") == 2

    def test_bad_potential(self, tmp_path):
        assert run(tmp_path, "le", "--schrodinger", "cos", "--n", "5") == 2
        assert run(tmp_path, "le", "--schrodinger", "2*oops*cos",
                   "--n", "5") == 2

    def test_bad_ell(self, tmp_path):
        assert run(tmp_path, "construct", "--l", "zero") == 2
        assert run(tmp_path, "construct", "--l", "0") == 2
        # smooth class without an exponent
        assert run(tmp_path, "construct", "--l", "inf") == 2

    def test_bad_probe_orders(self, tmp_path):
        assert run(tmp_path, "probe", "--orders", "0,7") == 2
        assert run(tmp_path, "probe", "--orders", "") == 2

    def test_probe_gap_window_must_exist(self, tmp_path):
        assert run(tmp_path, "probe", "--alpha-min", "0.5",
                   "--alpha-max", "1.0") == 2


class TestConfigFiles:
    def test_config_supplies_command_and_flags(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# comment\ncommand=cf\nomega=golden\ndepth=9\n")
        assert run(tmp_path, "--config", str(cfg)) == 0
        header, rows = rows_of(read(tmp_path, "cf.csv"))
        assert header == "k,a_k,p_k,q_k"
        assert len(rows) == 9

    def test_explicit_flags_win(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command=cf\ndepth=9\n")
        assert run(tmp_path, "--config", str(cfg), "--depth", "5") == 0
        _, rows = rows_of(read(tmp_path, "cf.csv"))
        assert len(rows) == 5

    def test_explicit_command_position(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth=7\n")
        assert run(tmp_path, "cf", "--config", str(cfg)) == 0
        _, rows = rows_of(read(tmp_path, "cf.csv"))
        assert len(rows) == 7

    def test_boolean_values_toggle_flags(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command=le\nschrodinger=2*3*cos\nper-return=true\n"
                       "q=13\ngrid=64\n")
        assert run(tmp_path, "--config", str(cfg)) == 0
        header, rows = rows_of(read(tmp_path, "le.csv"))
        assert rows[0][header.split(",").index("min_time")] != "-"

    def test_false_boolean_is_dropped(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command=le\nschrodinger=2*3*cos\nper-return=false\n"
                       "n=20\ngrid=64\n")
        assert run(tmp_path, "--config", str(cfg)) == 0

    def test_command_conflict(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command=cf\n")
        assert run(tmp_path, "returns", "--config", str(cfg)) == 2

    def test_malformed_lines(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth\n")
        assert main(["--config", str(cfg)]) == 2
        cfg.write_text("=5\n")
        assert main(["--config", str(cfg)]) == 2
        cfg.write_text("depth=\n")
        assert main(["--config", str(cfg)]) == 2

    def test_missing_file(self):
        assert main(["--config", "/nonexistent/f.cfg"]) == 2

    def test_config_without_command_anywhere(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("depth=5\n")
        assert main(["--config", str(cfg)]) == 2


class TestCf:
    def test_golden_table(self, tmp_path):
        assert run(tmp_path, "cf", "--depth", "10") == 0
        header, rows = rows_of(read(tmp_path, "cf.csv"))
        assert header == "k,a_k,p_k,q_k"
        assert [int(r[3]) for r in rows] == [1, 2, 3, 5, 8, 13, 21, 34,
                                             55, 89]
        assert all(r[1] == "1" for r in rows)
        man = read(tmp_path, "cf_manifest.txt")
        assert "status pass" in man
        assert "bounded_type_M 2.0" in man

    def test_rational_terminates(self, tmp_path):
        assert run(tmp_path, "cf", "--omega", "5/8") == 0
        man = read(tmp_path, "cf_manifest.txt")
        assert "terminated True" in man


class TestReturns:
    def test_convergent_level(self, tmp_path):
        assert run(tmp_path, "returns", "--q", "13", "--grid", "40") == 0
        header, rows = rows_of(read(tmp_path, "returns.csv"))
        assert header == "component,x,forward,backward"
        assert len(rows) == 80
        times = [int(r[2]) for r in rows] + [int(r[3]) for r in rows]
        assert min(times) >= 13
        man = read(tmp_path, "returns_manifest.txt")
        assert "check floor_q pass" in man

    def test_min_times_agree_across_directions(self, tmp_path):
        assert run(tmp_path, "returns", "--q", "34", "--grid", "60") == 0
        _, rows = rows_of(read(tmp_path, "returns.csv"))
        assert min(int(r[2]) for r in rows) == min(int(r[3]) for r in rows)

    def test_non_convergent_level_skips_floor(self, tmp_path):
        assert run(tmp_path, "returns", "--q", "20", "--grid", "10") == 0
        assert "floor_q skipped" in read(tmp_path, "returns_manifest.txt")

    def test_overlapping_arcs_rejected(self, tmp_path):
        assert run(tmp_path, "returns", "--q", "1") == 2


class TestDecompose:
    def test_sweep_passes(self, tmp_path):
        assert run(tmp_path, "decompose", "--count", "400") == 0
        header, rows = rows_of(read(tmp_path, "decompose.csv"))
        assert header == "j,psi,alpha,phi,alpha_err,angle_err,sum_err"
        assert len(rows) == 400
        assert max(float(r[4]) for r in rows) <= 1e-10
        assert max(float(r[5]) for r in rows) <= 1e-8

    def test_deterministic_bytes(self, tmp_path):
        run(tmp_path, "decompose", "--count", "150")
        first = read(tmp_path, "decompose.csv")
        run(tmp_path, "decompose", "--count", "150")
        assert read(tmp_path, "decompose.csv") == first

    def test_seed_changes_samples(self, tmp_path):
        run(tmp_path, "decompose", "--count", "150")
        first = read(tmp_path, "decompose.csv")
        run(tmp_path, "decompose", "--count", "150", "--seed", "7")
        assert read(tmp_path, "decompose.csv") != first

    def test_impossible_tolerance_fails(self, tmp_path):
        assert run(tmp_path, "decompose", "--count", "50",
                   "--tol-norm", "0") == 3
        assert "status fail" in read(tmp_path, "decompose_manifest.txt")


class TestLe:
    def test_schrodinger_floor(self, tmp_path):
        assert run(tmp_path, "le", "--schrodinger", "2*3*cos",
                   "--n", "300", "--grid", "401") == 0
        header, rows = rows_of(read(tmp_path, "le.csv"))
        cols = header.split(",")
        value = float(rows[0][cols.index("value")])
        floor = float(rows[0][cols.index("floor")])
        assert value >= floor
        assert math.isclose(floor, math.log(3.0) - 0.05)
        assert rows[0][-1] == "pass"

    def test_small_amplitude_has_no_floor(self, tmp_path):
        assert run(tmp_path, "le", "--schrodinger", "1.5*cos",
                   "--n", "50", "--grid", "64") == 0
        _, rows = rows_of(read(tmp_path, "le.csv"))
        assert rows[0][-2] == "-"

    def test_checkpoint_per_return(self, tmp_path, workdir):
        ckpt = os.path.join(str(workdir), "construction.json")
        assert run(tmp_path, "le", "--checkpoint", ckpt, "--per-return",
                   "--q", "21", "--grid", "64") == 0
        header, rows = rows_of(read(tmp_path, "le.csv"))
        cols = header.split(",")
        assert rows[0][cols.index("kind")] == "angle-family"
        # per-return growth at the base level reproduces log lambda
        assert math.isclose(float(rows[0][cols.index("value")]),
                            math.log(1000.0), rel_tol=1e-10)
        assert int(rows[0][cols.index("min_time")]) == 72

    def test_per_return_needs_q(self, tmp_path):
        assert run(tmp_path, "le", "--schrodinger", "2*3*cos",
                   "--per-return") == 2


class TestConstruct:
    def test_csv_and_checkpoint(self, workdir):
        header, rows = rows_of(read(workdir, "construct.csv"))
        assert header == ("k,q,lambda_k,flatness,separation,"
                          "separation_floor,log_mu_lower,mu_lower,passed")
        assert [int(r[1]) for r in rows] == [21, 55, 144, 377]
        assert all(r[-1] == "pass" for r in rows)
        for r in rows:
            assert float(r[7]) >= float(r[2]) * (1.0 - 1e-9)
            assert float(r[3]) <= 1e-6
            assert float(r[4]) >= float(r[5])
        state = construct.load_state(
            os.path.join(str(workdir), "construction.json"))
        assert state.q == 377
        assert state.report.ok

    def test_manifest_parameters(self, workdir):
        man = read(workdir, "construct_manifest.txt")
        assert "command construct" in man
        assert "lambda 1000.0" in man
        assert "qN 21" in man
        assert "steps 3" in man
        assert "status pass" in man
        assert man.count("increment ") == 3

    def test_infeasible_schedule(self, tmp_path):
        # lam below q_start**2 violates the tail condition under --strict
        assert run(tmp_path, "construct", "--lambda", "1.5",
                   "--qN", "21", "--steps", "1", "--strict-schedule") == 2

    def test_smooth_class(self, tmp_path):
        assert run(tmp_path, "construct", "--l", "inf", "--a", "0.05",
                   "--steps", "1", "--grid", "96", "--samples", "10") == 0
        _, rows = rows_of(read(tmp_path, "construct.csv"))
        assert [int(r[1]) for r in rows] == [21, 55]
        assert all(r[-1] == "pass" for r in rows)


class TestDestruct:
    def test_decay_run(self, workdir, tmp_path, capsys):
        ckpt = os.path.join(str(workdir), "construction.json")
        code = run(tmp_path, "destruct", "--steps", "1",
                   "--checkpoint", ckpt, "--grid", "128",
                   "--samples", "12")
        assert code == 0
        header, rows = rows_of(read(tmp_path, "decay.csv"))
        assert header == "step,level,mu_lower,mu_upper,bound,passed"
        assert [r[0] for r in rows] == ["0", "1"]
        assert [int(r[1]) for r in rows] == [21, 233]
        assert all(r[-1] == "pass" for r in rows)
        # the surgery lowers the top per-return growth
        assert float(rows[1][3]) < float(rows[0][3])
        err = capsys.readouterr().err
        assert "nu floor missed at sub-level 55" in err
        man = read(tmp_path, "destruct_manifest.txt")
        assert "warning nu floor missed at sub-level 55" in man
        assert "status pass" in man
        dstate = destruct.load_destruction(
            os.path.join(str(tmp_path), "destruction.json"))
        assert dstate.step == 1
        assert dstate.level == 233

    def test_nu_floor_raise_aborts(self, workdir, tmp_path):
        ckpt = os.path.join(str(workdir), "construction.json")
        code = run(tmp_path, "destruct", "--steps", "1",
                   "--checkpoint", ckpt, "--grid", "128",
                   "--samples", "12", "--nu-floor", "raise")
        assert code == 3
        man = read(tmp_path, "destruct_manifest.txt")
        assert "error" in man and "sub-level 55" in man
        assert "status fail" in man

    def test_resume_reports_geometry_exhaustion(self, workdir, tmp_path):
        ckpt = os.path.join(str(workdir), "construction.json")
        assert run(tmp_path, "destruct", "--steps", "1",
                   "--checkpoint", ckpt, "--grid", "128",
                   "--samples", "12") == 0
        dest = os.path.join(str(tmp_path), "destruction.json")
        code = run(tmp_path, "destruct", "--steps", "1",
                   "--checkpoint", dest, "--grid", "128",
                   "--samples", "12")
        assert code == 3
        man = read(tmp_path, "destruct_manifest.txt")
        assert "resumed true" in man
        assert "fail to nest" in man

    def test_missing_checkpoint(self, tmp_path):
        assert run(tmp_path, "destruct", "--checkpoint",
                   os.path.join(str(tmp_path), "nope.json")) == 2

    def test_wrong_checkpoint_kind(self, tmp_path):
        path = os.path.join(str(tmp_path), "junk.json")
        with open(path, "w") as fh:
            json.dump({"format": "something else"}, fh)
        assert run(tmp_path, "destruct", "--checkpoint", path) == 2


class TestProbe:
    def test_sweep_passes_and_reports(self, tmp_path):
        assert run(tmp_path, "probe", "--count", "200") == 0
        header, rows = rows_of(read(tmp_path, "probe.csv"))
        assert header == "order,which,alpha_a,alpha_b,theta,gap,measured,ratio"
        assert {r[0] for r in rows} == {"0", "1"}
        man = read(tmp_path, "probe_manifest.txt")
        assert man.count("check spread pass") == 2
        assert "order 0 constant" in man

    def test_ratio_envelope_within_spread(self, tmp_path):
        assert run(tmp_path, "probe", "--count", "300", "--orders", "0") == 0
        _, rows = rows_of(read(tmp_path, "probe.csv"))
        ratios = [float(r[-1]) for r in rows]
        assert max(ratios) / min(ratios) <= 10.0

    def test_deterministic_bytes(self, tmp_path):
        run(tmp_path, "probe", "--count", "80")
        first = read(tmp_path, "probe.csv")
        run(tmp_path, "probe", "--count", "80")
        assert read(tmp_path, "probe.csv") == first

    def test_psi_envelope(self, tmp_path):
        assert run(tmp_path, "probe", "--count", "150", "--which", "psi",
                   "--orders", "1") == 0
