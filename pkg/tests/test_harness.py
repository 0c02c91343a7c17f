import json

import numpy as np
import pytest

from ksync.cli import main as cli_main
from ksync.harness import (
    CSV_HEADER,
    ConfigError,
    ExperimentConfig,
    derive_setup2_probs,
    emit_plot,
    plot_svg,
    rows_to_csv,
    run_sweep,
    simulate_once,
    validate_config,
    write_csv,
)


class TestDeriveSetup2Probs:
    def test_worked_example(self):
        p = derive_setup2_probs(4, 0.2, 0.05)
        assert p == pytest.approx((0.275, 0.225, 0.175, 0.125), abs=1e-15)

    def test_single_group(self):
        assert derive_setup2_probs(1, 0.3, 0.4) == pytest.approx((0.7,))

    def test_sum_identity_exact(self):
        for k, eta, gamma in ((2, 0.37, 0.01), (3, 0.55, 0.03), (5, 0.1, 0.02)):
            p = derive_setup2_probs(k, eta, gamma)
            assert abs(sum(p) + eta - 1.0) <= 1e-15

    def test_nonpositive_smallest_rejected(self):
        with pytest.raises(ValueError, match="not positive"):
            derive_setup2_probs(4, 0.9, 0.05)

    def test_zero_gap_boundary_skipped_by_sweep(self):
        # gamma = 0 yields equal probabilities, which the mixture model
        # rejects; the sweep logs and skips that grid point
        cfg = ExperimentConfig(mode="setup2", n=20, k=2, gamma=0.0, eta_grid=(0.0,),
                               lam=1.0, trials_angles=1, trials_graphs=1)
        logged = []
        rows, meta = run_sweep(cfg, log=logged.append)
        assert rows == []
        assert logged and "strictly decreasing" in logged[0]


class TestRunSweep:
    def test_trivial_single_row_perfect_correlation(self):
        cfg = ExperimentConfig(mode="setup1", n=30, k=1, p=(1.0,), lambda_grid=(1.0,),
                               trials_angles=1, trials_graphs=1, seed=5)
        rows, _ = run_sweep(cfg)
        assert len(rows) == 1
        row = rows[0]
        assert row[0] == "setup1" and row[1] == "EIG-H" and row[7] == 1
        assert row[8] == pytest.approx(1.0, abs=1e-8)
        assert row[10] == 1

    def test_row_count_schema(self):
        cfg = ExperimentConfig(mode="setup2", n=24, k=2, gamma=0.05, eta_grid=(0.1, 0.3),
                               lam=1.0, trials_angles=1, trials_graphs=2,
                               solvers=("EIG-H", "EIG-R"))
        rows, _ = run_sweep(cfg)
        assert len(rows) == 2 * 2 * 2  # grid x solvers x groups

    def test_reproducible_and_thread_invariant(self):
        base = dict(mode="setup1", n=40, k=2, p=(0.5, 0.3), lambda_grid=(0.6, 1.0),
                    trials_angles=2, trials_graphs=2, seed=11)
        rows_a, _ = run_sweep(ExperimentConfig(**base))
        rows_b, _ = run_sweep(ExperimentConfig(**base))
        rows_c, _ = run_sweep(ExperimentConfig(**base, threads=4))
        assert rows_to_csv(rows_a) == rows_to_csv(rows_b)
        assert rows_to_csv(rows_a) == rows_to_csv(rows_c)

    def test_validation_collects_all_errors(self):
        cfg = ExperimentConfig(mode="nonsense", n=0, k=2, p=(0.5, 0.6),
                               solvers=("EIG-X",))
        errors = validate_config(cfg)
        assert len(errors) >= 3
        with pytest.raises(ConfigError):
            run_sweep(cfg)

    def test_setup1_eta_consistency_checked(self):
        cfg = ExperimentConfig(mode="setup1", n=10, k=2, p=(0.5, 0.3), eta=0.1)
        assert any("inconsistent" in e for e in validate_config(cfg))


class TestCsv:
    def test_header_and_bytes(self, tmp_path):
        cfg = ExperimentConfig(mode="setup1", n=20, k=1, p=(0.9,), lambda_grid=(1.0,),
                               trials_angles=1, trials_graphs=1)
        rows, _ = run_sweep(cfg)
        path = tmp_path / "out.csv"
        write_csv(rows, path)
        text = path.read_text()
        assert text.splitlines()[0] == ",".join(CSV_HEADER)
        write_csv(rows, tmp_path / "out2.csv")
        assert (tmp_path / "out2.csv").read_bytes() == path.read_bytes()


class TestPlot:
    def make_rows(self, points=5, groups=2):
        rows = []
        for i in range(points):
            lam = 0.2 * (i + 1)
            for g in range(1, groups + 1):
                rows.append(("setup1", "EIG-H", 100, groups, lam, 0.3, "",
                             g, 0.5 + 0.05 * i + 0.1 * g, 0.02, 4))
        return rows

    def test_polyline_structure(self):
        svg = plot_svg(self.make_rows())
        assert svg.count("<polyline") == 2
        first = svg.split("<polyline")[1]
        points_attr = first.split('points="')[1].split('"')[0]
        assert len(points_attr.split()) == 5
        assert svg.count("<polygon") == 2  # one band per series

    def test_single_point_marker(self):
        rows = [("setup2", "SDP-BM", 50, 1, 0.4, 0.2, "0.05", 1, 0.9, 0.01, 4)]
        svg = plot_svg(rows)
        assert "<circle" in svg
        assert "<polyline" not in svg

    def test_deterministic_bytes(self, tmp_path):
        rows = self.make_rows()
        emit_plot(rows, tmp_path / "a.svg")
        emit_plot(rows, tmp_path / "b.svg")
        assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()
        assert (tmp_path / "a.svg").read_text().startswith("<svg")

    def test_empty_and_mixed_modes_rejected(self):
        with pytest.raises(ValueError, match="no rows"):
            plot_svg([])
        mixed = self.make_rows()[:1] + [("setup2",) + self.make_rows()[0][1:]]
        with pytest.raises(ValueError, match="mix"):
            plot_svg(mixed)


class TestSimulate:
    def test_report_structure(self):
        cfg = ExperimentConfig(mode="setup1", n=30, k=1, p=(1.0,), lambda_grid=(1.0,),
                               solvers=("EIG-H",))
        graph, groups, report = simulate_once(cfg)
        assert graph.n == 30 and groups.k == 1
        assert report["EIG-H"]["matched_by_index"][0] == pytest.approx(1.0, abs=1e-8)


class TestConfigFile:
    def test_json_round_trip_with_overrides(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"mode": "setup1", "n": 25, "k": 1, "p": [1.0],
                                    "lambda_grid": [1.0], "trials_angles": 1,
                                    "trials_graphs": 1}))
        cfg = ExperimentConfig.from_json(path, overrides={"seed": 9})
        assert cfg.n == 25 and cfg.seed == 9

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"mode": "setup1", "bogus": 1}))
        with pytest.raises(ConfigError, match="bogus"):
            ExperimentConfig.from_json(path)


class TestCli:
    def test_sweep_success_exit_zero(self, tmp_path):
        out = tmp_path / "s.csv"
        code = cli_main(["sweep", "--mode", "setup1", "--n", "20", "--k", "1",
                         "--p", "1.0", "--lambda-grid", "1.0",
                         "--trials-angles", "1", "--trials-graphs", "1",
                         "--out", str(out)])
        assert code == 0
        assert out.exists()
        assert (tmp_path / "s.csv.meta").exists()

    def test_config_error_exit_two(self):
        code = cli_main(["sweep", "--mode", "setup1", "--n", "20", "--k", "2",
                         "--p", "0.5,0.6"])
        assert code == 2

    def test_runtime_error_exit_one(self, tmp_path):
        code = cli_main(["sweep", "--mode", "setup1", "--n", "20", "--k", "1",
                         "--p", "1.0", "--lambda-grid", "1.0",
                         "--trials-angles", "1", "--trials-graphs", "1",
                         "--out", str(tmp_path / "missing" / "deep" / "s.csv")])
        assert code == 1

    def test_simulate_writes_graph(self, tmp_path):
        out = tmp_path / "inst.graph"
        code = cli_main(["simulate", "--n", "20", "--k", "1", "--p", "1.0",
                         "--lam", "1.0", "--out", str(out)])
        assert code == 0
        assert out.read_text().startswith("20 ")

    def test_theory_prints(self, capsys):
        code = cli_main(["theory", "--n", "50", "--k", "2", "--p", "0.3,0.2",
                         "--lam", "1.0", "--delta", "0.1"])
        assert code == 0
        out = capsys.readouterr().out
        assert "spectral_norm_bound" in out and "c_eps" in out
