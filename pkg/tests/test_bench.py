"""Study drivers: CSV determinism, summary stats, the command line surface."""

import json
import math
import os

import numpy as np
import pytest

from qbai.bench import (
    QuantestRow,
    _parse_params,
    default_quantest_matrix,
    main,
    quantest_verify,
    resolution_study,
    run_study,
    scaling_study,
    wilson_interval,
)
from qbai.dist import (
    Instance,
    deterministic,
    load_instance,
    make_lower_bound_instance,
    save_instance,
    uniform,
)
from qbai.engine import AlgoConfig


def det_instance():
    return Instance(arms=(deterministic(0.2), deterministic(0.8)), q=0.5, lam=1.0)


def det_config():
    return AlgoConfig(lam=1.0, eps=0.1, q=0.5, delta=0.1, c=1)


class TestWilson:
    @pytest.mark.parametrize("k,n", [(90, 100), (3, 7), (250, 500)])
    def test_matches_quadratic_root_oracle(self, k, n):
        # the score interval is the root pair of (p-t)^2 n = z^2 t (1-t)
        z = 1.959963984540054
        p = k / n
        roots = np.roots([n + z * z, -(2 * n * p + z * z), n * p * p])
        lo, hi = wilson_interval(k, n)
        np.testing.assert_allclose(sorted(roots), [lo, hi], atol=1e-12)

    def test_complement_symmetry(self):
        lo, hi = wilson_interval(17, 60)
        lo2, hi2 = wilson_interval(43, 60)
        assert abs(lo - (1.0 - hi2)) < 1e-12
        assert abs(hi - (1.0 - lo2)) < 1e-12

    def test_edges(self):
        assert wilson_interval(0, 0) == (0.0, 1.0)
        lo, hi = wilson_interval(0, 10)
        assert lo == 0.0 and hi < 0.35
        lo, hi = wilson_interval(10, 10)
        assert lo > 0.65 and hi <= 1.0


class TestRunStudy:
    def test_csv_layout_and_content(self):
        rep = run_study(det_instance(), det_config(), trials=3, base_seed=11, jobs=1)
        lines = rep.csv_text().strip().split("\n")
        assert lines[0] == (
            "seed,returned_arm,correct,total_pulls,sentinel_queries,rounds,"
            "pulls_arm_1,pulls_arm_2"
        )
        assert len(lines) == 4
        for i, line in enumerate(lines[1:]):
            cells = line.split(",")
            assert cells[0] == str(11 + i)
            assert cells[1] == "2"
            assert cells[2] == "1"
            assert cells[3] == "4784"

    def test_worker_count_never_changes_output(self):
        a = run_study(det_instance(), det_config(), trials=4, base_seed=0, jobs=1)
        b = run_study(det_instance(), det_config(), trials=4, base_seed=0, jobs=2)
        assert a.csv_text() == b.csv_text()

    def test_json_summary_fields(self):
        rep = run_study(det_instance(), det_config(), trials=3, base_seed=0, jobs=1)
        s = rep.json_summary()
        assert s["trials"] == 3
        assert s["base_seed"] == 0
        assert s["success_rate"] == 1.0
        assert s["median_pulls"] == 4784
        assert s["eps_satisfying"] == [2]
        assert s["config"]["eps"] == 0.1
        assert s["wilson_low"] < 1.0 <= s["wilson_high"]
        assert s["terminated"] == 3

    def test_keep_results_exposes_traces(self):
        rep = run_study(det_instance(), det_config(), trials=2, base_seed=0, jobs=1,
                        keep_results=True)
        assert rep.results is not None and len(rep.results) == 2
        assert all(r.terminated for r in rep.results)


class TestSweeps:
    def test_resolution_medians_increase(self):
        rep = resolution_study([10, 20], trials=3, base_seed=0, jobs=1)
        assert rep.medians[0] < rep.medians[1]
        assert len(rep.ratios) == 1 and rep.ratios[0] > 1.0
        assert rep.labels == ["lam_over_eps=10", "lam_over_eps=20"]

    def test_gamma_sweep_shapes(self):
        rep = scaling_study([0.16], trials=2, base_seed=0, jobs=1)
        assert len(rep.medians) == 1 and rep.medians[0] > 0
        assert rep.ratios == []
        assert 0.0 <= rep.best_arm_never_pulled_more <= 1.0
        s = rep.json_summary()
        assert s["params"][0]["gamma"] == 0.16
        assert s["median_pulls"] == rep.medians


class TestQuantestVerify:
    def test_small_matrix_verifies(self):
        rows = [QuantestRow("unit", uniform(0.0, 1.0), 0.5, 0.1)]
        rep = quantest_verify(runs=40, base_seed=0, matrix=rows, grid_points=17)
        (r,) = rep.rows
        assert r["success_rate"] >= 0.85
        assert r["budget_ok"] == 1.0
        assert r["max_queries"] <= r["t_max"]
        lines = rep.csv_text().strip().split("\n")
        assert len(lines) == 2 and lines[0].startswith("label,tau")

    def test_default_matrix_covers_both_tails(self):
        taus = {row.tau for row in default_quantest_matrix()}
        assert min(taus) < 0.5 < max(taus)


class TestParamParsing:
    def test_types_inferred(self):
        got = _parse_params("K=3,gamma=0.1, name=hard ,j=2")
        assert got == {"K": 3, "gamma": 0.1, "name": "hard", "j": 2}
        assert isinstance(got["K"], int) and isinstance(got["gamma"], float)

    def test_empty_and_errors(self):
        assert _parse_params("") == {}
        with pytest.raises(ValueError):
            _parse_params("oops")


class TestCli:
    def test_make_instance_then_gaps(self, tmp_path, capsys):
        inst_path = str(tmp_path / "hard.json")
        rc = main([
            "make-instance", "--generator", "lower-bound",
            "--params", "K=2,gamma=0.1", "--out", inst_path,
        ])
        assert rc == 0
        inst = load_instance(inst_path)
        assert inst.K == 2 and inst.q == 0.5
        base = str(tmp_path / "gaps")
        rc = main(["gaps", "--instance", inst_path, "--eps", "0.05", "--c", "2",
                   "--out", base])
        assert rc == 0
        assert os.path.exists(base + ".json") and os.path.exists(base + ".csv")
        report = json.loads(open(base + ".json").read())
        assert report["config"]["c"] == 2
        assert len(report["arms"]) == 2
        out = capsys.readouterr().out
        assert "classification=" in out

    def test_gaps_limit_mode(self, tmp_path):
        inst_path = str(tmp_path / "nt.json")
        main(["make-instance", "--generator", "near-tie",
              "--params", "m1=0.5,m2=0.48,eps=0.1", "--out", inst_path])
        base = str(tmp_path / "lim")
        rc = main(["gaps", "--instance", inst_path, "--eps", "0.1",
                   "--c-str", "inf", "--out", base])
        assert rc == 0
        report = json.loads(open(base + ".json").read())
        assert report["config"]["c"] == "infinity"

    def test_run_verb_writes_study(self, tmp_path, capsys):
        inst_path = str(tmp_path / "det.json")
        save_instance(det_instance(), inst_path)
        base = str(tmp_path / "study")
        rc = main(["run", "--instance", inst_path, "--eps", "0.1", "--delta", "0.1",
                   "--c", "1", "--trials", "2", "--seed", "0", "--jobs", "1",
                   "--out", base])
        assert rc == 0
        body = open(base + ".csv").read()
        assert body == run_study(det_instance(), det_config(), 2, 0, jobs=1).csv_text()
        assert "success_rate=1.0000" in capsys.readouterr().out

    def test_scaling_verb_resolution(self, tmp_path, capsys):
        out_dir = str(tmp_path / "sweep")
        rc = main(["scaling", "--sweep", "resolution", "--ratios", "10",
                   "--trials", "2", "--seed", "0", "--jobs", "1", "--out", out_dir])
        assert rc == 0
        assert os.path.exists(os.path.join(out_dir, "summary.json"))
        # ratios arrive as floats and the sweep default is delta = 0.05
        assert os.path.exists(os.path.join(out_dir, "lam_over_eps_10.0.csv"))
        assert "median_pulls=5228" in capsys.readouterr().out

    def test_quantest_verify_verb(self, tmp_path, capsys):
        base = str(tmp_path / "qv")
        rc = main(["quantest-verify", "--runs", "3", "--seed", "0", "--out", base])
        assert rc == 0
        report = json.loads(open(base + ".json").read())
        assert report["runs"] == 3
        assert len(report["rows"]) == len(default_quantest_matrix())
        assert "budget_ok" in capsys.readouterr().out

    def test_conflicting_c_flags_exit(self, tmp_path):
        inst_path = str(tmp_path / "det.json")
        save_instance(det_instance(), inst_path)
        with pytest.raises(SystemExit):
            main(["run", "--instance", inst_path, "--eps", "0.1", "--delta", "0.1",
                  "--c", "1", "--theta", "0.5", "--trials", "1"])

    def test_theta_flag_selects_c(self, tmp_path, capsys):
        inst_path = str(tmp_path / "det.json")
        save_instance(det_instance(), inst_path)
        rc = main(["run", "--instance", inst_path, "--eps", "0.1", "--delta", "0.1",
                   "--theta", "0.5", "--trials", "1", "--jobs", "1"])
        assert rc == 0
        assert "success_rate" in capsys.readouterr().out
