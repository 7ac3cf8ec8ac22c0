import csv

import pytest

from casegrowth.cli import build_parser, main

SUBCOMMANDS = [
    "ingest", "estimate", "benchmark", "detect", "allocate",
    "importance", "diagnostics", "plot", "synth",
]


def run(argv):
    return main(argv)


def synth_dir(tmp_path, **overrides):
    out = tmp_path / "panel"
    args = {
        "--counties": "6", "--days": "60", "--break-day": "30",
        "--seed": "5", "--noise": "0.02", "--noise-features": "3",
    }
    args.update(overrides)
    argv = ["synth", "--out", str(out)]
    for k, v in args.items():
        argv += [k, v]
    assert run(argv) == 0
    return out


def data_flags(panel_dir):
    return [
        "--cases", str(panel_dir / "cases.csv"),
        "--cases-kind", "incident",
        "--smooth-window", "1",
        "--features", str(panel_dir / "features_static.csv"),
        "--features", str(panel_dir / "features_policy.csv"),
        "--schema", str(panel_dir / "schema.ini"),
    ]


class TestHelp:
    @pytest.mark.parametrize("cmd", SUBCOMMANDS)
    def test_every_subcommand_has_help(self, cmd, capsys):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage" in capsys.readouterr().out

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args(["estimate", "--bogus"])
        assert exc.value.code == 2


class TestSynth:
    def test_deterministic_file_set(self, tmp_path):
        a = synth_dir(tmp_path / "a")
        b = synth_dir(tmp_path / "b")
        for name in ("cases.csv", "features_static.csv", "features_policy.csv",
                     "schema.ini", "truth.csv"):
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_seed_changes_output(self, tmp_path):
        a = synth_dir(tmp_path / "a")
        b = synth_dir(tmp_path / "b", **{"--seed": "6"})
        assert (a / "cases.csv").read_bytes() != (b / "cases.csv").read_bytes()


class TestIngest:
    def test_table_dump(self, tmp_path):
        panel = synth_dir(tmp_path)
        out = tmp_path / "table.csv"
        assert run(["ingest", *data_flags(panel), "--out", str(out)]) == 0
        with open(out) as fh:
            rows = list(csv.reader(fh))
        assert rows[0][:4] == ["county", "day", "date", "ln_incident"]
        assert len(rows) > 300

    def test_missing_cases_flag_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            run(["ingest", "--out", str(tmp_path / "t.csv")])
        assert exc.value.code == 2


class TestEstimate:
    def test_ols_rates(self, tmp_path, capsys):
        panel = synth_dir(tmp_path)
        out = tmp_path / "rates.csv"
        assert run([
            "estimate", *data_flags(panel), "--method", "ols", "--delta", "2",
            "--day", "40", "--out", str(out),
        ]) == 0
        with open(out) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert {r["day"] for r in rows} == {"40"}

    def test_delta_below_two_is_usage_error(self, tmp_path):
        panel = synth_dir(tmp_path)
        with pytest.raises(SystemExit) as exc:
            run(["estimate", *data_flags(panel), "--method", "ols", "--delta", "1"])
        assert exc.value.code == 2

    def test_seed_mandatory_for_forest_methods(self, tmp_path):
        panel = synth_dir(tmp_path)
        with pytest.raises(SystemExit) as exc:
            run(["estimate", *data_flags(panel), "--method", "tlgrf"])
        assert exc.value.code == 2

    def test_tlgrf_runs(self, tmp_path):
        panel = synth_dir(tmp_path)
        out = tmp_path / "rates.csv"
        assert run([
            "estimate", *data_flags(panel), "--method", "tlgrf", "--seed", "3",
            "--trees", "20", "--day", "40", "--out", str(out),
        ]) == 0
        with open(out) as fh:
            assert len(list(csv.DictReader(fh))) == 6

    def test_kmeans_exports_cluster_assignment(self, tmp_path):
        panel = synth_dir(tmp_path)
        out = tmp_path / "rates.csv"
        clusters = tmp_path / "clusters.csv"
        assert run([
            "estimate", *data_flags(panel), "--method", "kmeans", "--k", "2",
            "--seed", "3", "--day", "40", "--out", str(out),
            "--clusters-out", str(clusters),
        ]) == 0
        with open(clusters) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 6
        assert {r["cluster"] for r in rows} <= {"0", "1"}

    def test_thread_env_caps_workers(self, tmp_path, monkeypatch):
        from casegrowth.cli import _resolve_workers

        class Args:
            workers = 8

        monkeypatch.setenv("COVID_GROWTH_THREADS", "2")
        assert _resolve_workers(Args()) == 2
        monkeypatch.delenv("COVID_GROWTH_THREADS")
        assert _resolve_workers(Args()) == 8


class TestBenchmark:
    def test_repeat_runs_byte_identical(self, tmp_path):
        panel = synth_dir(tmp_path)
        outs = []
        for name in ("r1.csv", "r2.csv"):
            out = tmp_path / name
            assert run([
                "benchmark", *data_flags(panel),
                "--methods", "tlgrf,ols:2", "--from", "40", "--to", "46",
                "--seed", "11", "--trees", "20", "--out", str(out),
            ]) == 0
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_plot_from_report(self, tmp_path):
        panel = synth_dir(tmp_path)
        report = tmp_path / "report.csv"
        assert run([
            "benchmark", *data_flags(panel),
            "--methods", "ols:2,ols:7", "--from", "40", "--to", "46",
            "--seed", "11", "--out", str(report),
        ]) == 0
        chart = tmp_path / "chart.svg"
        assert run(["plot", "--report", str(report), "--metric", "mae", "--out", str(chart)]) == 0
        text = chart.read_text()
        assert text.startswith("<svg") and "polyline" in text
        assert (tmp_path / "chart.csv").exists()
        # plotting twice is byte-identical
        chart2 = tmp_path / "chart2.svg"
        run(["plot", "--report", str(report), "--metric", "mae", "--out", str(chart2)])
        assert chart.read_bytes() == chart2.read_bytes()


class TestDetectAllocate:
    def write_rates(self, path, rows):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["county", "day", "rate"])
            writer.writerows(rows)

    def test_detect_fixed_threshold(self, tmp_path, capsys):
        est = tmp_path / "est.csv"
        lab = tmp_path / "lab.csv"
        self.write_rates(est, [("a", 1, 0.5), ("b", 1, 0.1)])
        lab.write_text("county,day,label\na,1,1\nb,1,0\n")
        assert run(["detect", "--estimates", str(est), "--labels", str(lab),
                    "--threshold", "0.3"]) == 0
        out = capsys.readouterr().out
        assert "tp,1" in out and "tn,1" in out

    def test_detect_auto_threshold(self, tmp_path):
        est = tmp_path / "est.csv"
        lab = tmp_path / "lab.csv"
        rows, labels = [], ["county,day,label"]
        for day in range(1, 31):
            for i, county in enumerate("abcd"):
                positive = i < 2
                rows.append((county, day, 0.6 if positive else 0.05))
                labels.append(f"{county},{day},{int(positive)}")
        self.write_rates(est, rows)
        lab.write_text("\n".join(labels) + "\n")
        out = tmp_path / "detect.csv"
        assert run(["detect", "--estimates", str(est), "--labels", str(lab),
                    "--threshold", "auto", "--split", "10,20,30",
                    "--thresholds", "0.3", "--out", str(out)]) == 0
        text = out.read_text()
        assert "threshold,0.3" in text
        assert "test_f1,1" in text

    def test_allocate(self, tmp_path):
        panel = synth_dir(tmp_path)
        est = tmp_path / "est.csv"
        assert run([
            "estimate", *data_flags(panel), "--method", "ols", "--delta", "2",
            "--day", "40", "--out", str(est),
        ]) == 0
        points = tmp_path / "points.csv"
        points.write_text("day,capacity,excluded\n40,2,\n")
        out = tmp_path / "alloc.csv"
        assert run(["allocate", *data_flags(panel), "--estimates", str(est),
                    "--points", str(points), "--out", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert lines[0] == "day,recommended,shortfall"
        assert lines[1].startswith("40,")
        assert any(line.startswith("ppv,") for line in lines)


class TestForestReports:
    def test_importance_and_diagnostics(self, tmp_path):
        panel = synth_dir(tmp_path)
        imp = tmp_path / "imp.csv"
        assert run(["importance", *data_flags(panel), "--seed", "3", "--trees", "20",
                    "--day", "40", "--out", str(imp)]) == 0
        lines = imp.read_text().splitlines()
        assert lines[0] == "feature,importance"
        assert len(lines) > 3
        diag = tmp_path / "diag.csv"
        assert run(["diagnostics", *data_flags(panel), "--seed", "3", "--trees", "20",
                    "--day", "40", "--out", str(diag)]) == 0
        assert "median_depth" in diag.read_text()


class TestConfigPrecedence:
    def test_cli_beats_config_beats_default(self, tmp_path):
        panel = synth_dir(tmp_path)
        cfg = tmp_path / "run.ini"
        cfg.write_text("[casegrowth]\nmin_count = 25\nsmooth_window = 1\ncases_kind = incident\n")
        out1 = tmp_path / "t1.csv"
        assert run([
            "--config", str(cfg), "ingest",
            "--cases", str(panel / "cases.csv"), "--out", str(out1),
        ]) == 0
        out2 = tmp_path / "t2.csv"
        assert run([
            "--config", str(cfg), "ingest",
            "--cases", str(panel / "cases.csv"), "--min-count", "100",
            "--out", str(out2),
        ]) == 0
        n1 = len(out1.read_text().splitlines())
        n2 = len(out2.read_text().splitlines())
        assert n2 < n1  # higher floor filters more rows
