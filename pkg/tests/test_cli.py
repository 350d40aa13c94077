import json

import numpy as np
import pytest

from odflow import PathTable, build_static_incidence
from odflow.cli import main
from odflow.fixtures import SIX_LINKS_A


def write_counts(path, links, counts):
    lines = ["link_id,count"] + [f"{l},{c}" for l, c in zip(links, counts)]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture()
def demo_counts(tmp_path, fig2):
    """Counts of the bundled 4-sparse demo over its six-link set."""
    ms = build_static_incidence(fig2.table, SIX_LINKS_A, fig2.network)
    x = np.zeros(14)
    x[1], x[7], x[10], x[13] = 10.0, 20.0, 10.0, 30.0
    y = ms.matrix @ x
    counts = tmp_path / "counts.csv"
    write_counts(counts, SIX_LINKS_A, y)
    truth = tmp_path / "truth.json"
    truth.write_text(json.dumps(list(x)))
    return counts, truth, x


class TestEnumerate:
    def test_triangle_seven_paths(self, tmp_path, capsys):
        out = tmp_path / "paths.json"
        rc = main([
            "enumerate", "--network", "fig1",
            "--od", "1,2", "--od", "1,3", "--od", "2,1",
            "--od", "2,3", "--od", "3,1", "--od", "3,2",
            "--output", str(out),
        ])
        assert rc == 0
        assert "paths=7" in capsys.readouterr().out
        assert len(json.loads(out.read_text())) == 7
        assert (tmp_path / "paths.json.manifest.json").exists()

    def test_disconnected_od_fails_with_parse_code(self, tmp_path):
        net = tmp_path / "net.json"
        net.write_text(json.dumps({
            "nodes": [1, 2, 3],
            "links": [{"id": "a", "tail": 1, "head": 2}],
        }))
        rc = main([
            "enumerate", "--network", str(net), "--od", "1,3",
            "--output", str(tmp_path / "p.json"),
        ])
        assert rc == 3

    def test_filters_excluding_everything_warn(self, tmp_path, capsys):
        out = tmp_path / "p.json"
        rc = main([
            "enumerate", "--network", "fig1", "--od", "2,1",
            "--max-links", "1", "--output", str(out),
        ])
        assert rc == 0
        assert "excluded" in capsys.readouterr().err
        assert json.loads(out.read_text()) == []


class TestEstimate:
    def test_l1_end_to_end_recovery(self, tmp_path, demo_counts, capsys):
        counts, truth, _ = demo_counts
        out = tmp_path / "result.json"
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l1",
            "--truth", str(truth), "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["recovery"]["exact"] is True
        assert payload["sparsity"] == 4

    def test_l2_not_exact(self, tmp_path, demo_counts):
        counts, truth, _ = demo_counts
        out = tmp_path / "result.json"
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l2",
            "--truth", str(truth), "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["recovery"]["exact"] is False
        assert payload["recovery"]["relative_error"] > 0.1

    def test_zero_counts_zero_allocation(self, tmp_path):
        counts = tmp_path / "counts.csv"
        write_counts(counts, SIX_LINKS_A, [0.0] * 6)
        out = tmp_path / "result.json"
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l1",
            "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert all(entry["flow"] == 0.0 for entry in payload["allocation"])

    def test_missing_delta_is_usage_error(self, tmp_path, demo_counts):
        counts, _, _ = demo_counts
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l1-noisy",
            "--output", str(tmp_path / "r.json"),
        ])
        assert rc == 2

    def test_negative_delta_is_usage_error(self, tmp_path, demo_counts):
        counts, _, _ = demo_counts
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l1-noisy",
            "--delta", "-1", "--output", str(tmp_path / "r.json"),
        ])
        assert rc == 2

    def test_infeasible_counts_exit_code(self, tmp_path):
        counts = tmp_path / "counts.csv"
        write_counts(counts, ["l1-3", "l3-2"], [5.0, 0.0])
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "l1",
            "--output", str(tmp_path / "r.json"),
        ])
        assert rc == 4

    def test_weighted_needs_weights(self, tmp_path, demo_counts):
        counts, _, _ = demo_counts
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "weighted",
            "--output", str(tmp_path / "r.json"),
        ])
        assert rc == 2

    def test_weighted_with_file(self, tmp_path, demo_counts):
        counts, truth, _ = demo_counts
        weights = tmp_path / "w.json"
        lam = [1.0] * 14
        for i in (1, 7, 10, 13):
            lam[i] = 0.1
        weights.write_text(json.dumps(lam))
        out = tmp_path / "r.json"
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "weighted",
            "--weights", str(weights), "--truth", str(truth),
            "--output", str(out),
        ])
        assert rc == 0
        assert json.loads(out.read_text())["recovery"]["exact"] is True

    def test_reweighted(self, tmp_path, demo_counts):
        counts, truth, _ = demo_counts
        out = tmp_path / "r.json"
        rc = main([
            "estimate", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--method", "reweighted",
            "--iters", "3", "--truth", str(truth), "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert len(payload["objective_trace"]) == 3

    def test_dynamic_measurement_file(self, tmp_path, fig1):
        from odflow import build_dynamic_system

        measured = [l.id for l in fig1.network.links]
        ms = build_dynamic_system(fig1.table, fig1.network, measured, [0, 1])
        x = np.zeros(ms.n_cols)
        x[ms.col_labels.index((1, 0))] = 6.0
        y = ms.matrix @ x
        counts = tmp_path / "dyn.csv"
        lines = ["link_id,time,count"]
        for (lid, t), c in zip(ms.row_labels, y):
            lines.append(f"{lid},{t},{c}")
        counts.write_text("\n".join(lines) + "\n")
        out = tmp_path / "r.json"
        rc = main([
            "estimate", "--network", "fig1", "--paths", "fig1",
            "--measurements", str(counts), "--method", "l1",
            "--dynamic", "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        flows = {tuple(e["od"]): e["flow"] for e in payload["od_flows"]}
        assert flows[(1, 3)] == pytest.approx(6.0, abs=1e-8)
        assert any("departure" in e for e in payload["allocation"])

    def test_bad_file_is_parse_error(self, tmp_path):
        rc = main([
            "estimate", "--network", "missing.json", "--paths", "fig2",
            "--measurements", "missing.csv", "--method", "l1",
            "--output", str(tmp_path / "r.json"),
        ])
        assert rc == 3

    def test_file_ingestion_at_case_study_scale(self, tmp_path, nguyen):
        # 10 counted links against a 33-path catalog, everything from files
        from odflow.fileio import save_network, save_paths

        paths = nguyen.table.paths[:33]
        table = PathTable.from_paths(paths)
        net_file = tmp_path / "net.json"
        paths_file = tmp_path / "paths.json"
        save_network(nguyen.network, net_file)
        save_paths(paths, paths_file)

        rng = np.random.default_rng(33)
        x = np.zeros(33)
        x[rng.choice(33, size=4, replace=False)] = rng.uniform(5.0, 50.0, 4)
        covered = sorted({lid for p in paths for lid in p.links})
        measured = [covered[i] for i in sorted(rng.permutation(len(covered))[:10])]
        ms = build_static_incidence(table, measured, nguyen.network)
        counts = tmp_path / "counts.csv"
        write_counts(counts, measured, ms.matrix @ x)

        out = tmp_path / "r.json"
        rc = main([
            "estimate", "--network", str(net_file), "--paths", str(paths_file),
            "--measurements", str(counts), "--method", "l1",
            "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert len(payload["allocation"]) == 33
        assert payload["status"] == "optimal"


class TestVmt:
    def test_unit_lengths_pinned_instance(self, tmp_path, fig1, capsys):
        links = [l.id for l in fig1.network.links]
        ms = build_static_incidence(fig1.table, links, fig1.network)
        x = np.zeros(7)
        x[5] = 7.0
        counts = tmp_path / "counts.csv"
        write_counts(counts, links, ms.matrix @ x)
        out = tmp_path / "vmt.json"
        rc = main([
            "vmt", "--network", "fig1", "--paths", "fig1",
            "--measurements", str(counts), "--unit", "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        assert payload["vmt_lower"] == pytest.approx(7.0, abs=1e-3)
        assert payload["vmt_upper"] == pytest.approx(7.0, abs=1e-3)

    def test_lengths_source_required(self, tmp_path, demo_counts):
        counts, _, _ = demo_counts
        rc = main([
            "vmt", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--output", str(tmp_path / "v.json"),
        ])
        assert rc == 2

    def test_unbounded_exit_code(self, tmp_path, capsys):
        counts = tmp_path / "counts.csv"
        write_counts(counts, ["l1-3", "l4-3"], [0.0, 0.0])
        rc = main([
            "vmt", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--unit",
            "--output", str(tmp_path / "v.json"),
        ])
        assert rc == 4
        assert "unbounded" in capsys.readouterr().err

    def test_link_lengths(self, tmp_path, fig2):
        links = [l.id for l in fig2.network.links]
        ms = build_static_incidence(fig2.table, links, fig2.network)
        x = np.zeros(14)
        x[1], x[7] = 5.0, 2.0
        counts = tmp_path / "counts.csv"
        write_counts(counts, links, ms.matrix @ x)
        out = tmp_path / "v.json"
        rc = main([
            "vmt", "--network", "fig2", "--paths", "fig2",
            "--measurements", str(counts), "--link-lengths",
            "--output", str(out),
        ])
        assert rc == 0
        payload = json.loads(out.read_text())
        true_value = 2 * 5.0 + 3 * 2.0  # link counts of paths 1 and 7
        assert payload["vmt_lower"] <= true_value + 1e-6
        assert payload["vmt_upper"] >= true_value - 1e-6


class TestSweepCommands:
    def test_sweep_and_rerun_byte_identical(self, tmp_path):
        out = tmp_path / "sweep.csv"
        rc = main([
            "sweep", "--fixture", "fig2", "--supports", "4,8,12",
            "--m-grid", "8:10", "--trials", "30", "--seed", "11",
            "--output", str(out),
        ])
        assert rc == 0
        rerun_dir = tmp_path / "again"
        rc = main([
            "rerun", str(out) + ".manifest.json",
            "--output-dir", str(rerun_dir),
        ])
        assert rc == 0
        assert (rerun_dir / "sweep.csv").read_bytes() == out.read_bytes()

    def test_sweep_requires_exactly_one_mode(self, tmp_path):
        rc = main([
            "sweep", "--fixture", "fig2", "--m-grid", "8:10",
            "--trials", "5", "--output", str(tmp_path / "s.csv"),
        ])
        assert rc == 2
        rc = main([
            "sweep", "--fixture", "fig2", "--supports", "4,8,12",
            "--sparsity", "3", "--m-grid", "8:10", "--trials", "5",
            "--output", str(tmp_path / "s.csv"),
        ])
        assert rc == 2

    def test_noisy_cdf_csv(self, tmp_path):
        out = tmp_path / "cdf.csv"
        rc = main([
            "noisy-cdf", "--fixture", "fig2", "--support", "4,8,12",
            "--nu", "0.1", "--m", "10", "--trials", "20", "--seed", "3",
            "--output", str(out),
        ])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "method,error,cdf"
        assert len(lines) == 1 + 2 * 20

    def test_vmt_sweep_csv(self, tmp_path):
        out = tmp_path / "vmt.csv"
        rc = main([
            "vmt-sweep", "--fixture", "nguyen", "--m-grid", "38",
            "--trials", "10", "--seed", "5", "--output", str(out),
        ])
        assert rc == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == (
            "M,rate_min,rate_max,mean_ratio_min,mean_ratio_max,unbounded_count"
        )
        assert len(lines) == 2

    def test_grid_command(self, tmp_path, capsys):
        rc = main(["grid", "--n", "50", "--alpha", "0.1"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "paths=126410606437752" in out
        assert "exact_fraction" in out

    def test_grid_csv_output(self, tmp_path):
        out = tmp_path / "grid.csv"
        rc = main(["grid", "--n", "10", "--alpha", "0.2", "--output", str(out)])
        assert rc == 0
        assert out.read_text().startswith("n,alpha,turns,")

    def test_usage_error_without_command(self):
        assert main([]) == 2

    def test_env_seed_default(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ODFLOW_SEED", "77")
        out_a = tmp_path / "a.csv"
        rc = main([
            "sweep", "--fixture", "fig2", "--supports", "4,8,12",
            "--m-grid", "10", "--trials", "10", "--output", str(out_a),
        ])
        assert rc == 0
        manifest = json.loads((tmp_path / "a.csv.manifest.json").read_text())
        assert manifest["seed"] == 77
