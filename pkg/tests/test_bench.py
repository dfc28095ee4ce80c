import csv
import dataclasses

import numpy as np
import pytest

from zcoll.bench import (COLUMNS, Distribution, ExperimentSpec, ReportRow, bus_factor,
                         emit_report, gen_data, ingest_f32, markdown_table, read_report,
                         run_experiment, write_f32)
from zcoll.bench.cli import main, parse_size, parse_sizes, resolve, build_parser
from zcoll.bench.report import WALL_COLUMNS

MiB = 1 << 20


def test_gen_data_repeatable():
    for d in ("uniform", "gaussian", "geom:0.3"):
        assert np.array_equal(gen_data(d, 1000, 5), gen_data(d, 1000, 5))
        assert not np.array_equal(gen_data(d, 1000, 5), gen_data(d, 1000, 6))
        assert gen_data(d, 10, 0).dtype == np.float32


def test_geometric_histogram_matches_p():
    p, n = 0.7, 200_000
    x = gen_data(f"geom:{p}", n, 0)
    mags = np.abs(x).astype(int)
    for k in range(4):
        expect = p * (1 - p) ** k
        se = np.sqrt(expect * (1 - expect) / n)
        assert abs(np.mean(mags == k) - expect) <= 4 * se


def test_distribution_parse():
    assert Distribution.parse("geom:0.25") == Distribution("geometric", 0.25)
    assert str(Distribution.parse("file:/x.f32")) == "file:/x.f32"
    for bad in ("poisson", "geom:0", "file:"):
        with pytest.raises(ValueError):
            Distribution.parse(bad)


def test_ingest(tmp_path):
    p = tmp_path / "a.f32"
    p.write_bytes(np.arange(4, dtype="<f4").tobytes())
    assert ingest_f32(p).tolist() == [0.0, 1.0, 2.0, 3.0]
    x = np.random.default_rng(0).normal(size=99).astype(np.float32)
    write_f32(p, x)
    assert np.array_equal(ingest_f32(p), x)
    p.write_bytes(b"\x00" * 7)
    with pytest.raises(ValueError):
        ingest_f32(p)


def test_file_size_mismatch_rejected(tmp_path):
    p = tmp_path / "b.f32"
    write_f32(p, np.zeros(100))
    with pytest.raises(ValueError):
        run_experiment(ExperimentSpec(sizes=(800,), distribution=f"file:{p}"))
    rows = run_experiment(ExperimentSpec(sizes=(400,), distribution=f"file:{p}", ranks=2))
    assert rows[0].size_bytes == 400


def test_bus_factor():
    assert bus_factor("allreduce", 4) == 1.5
    assert bus_factor("allgather", 4) == 0.75
    assert bus_factor("broadcast", 4) == 1.0


def test_raw_speedup_is_one():
    for coll in ("allreduce", "allgather", "alltoall", "broadcast"):
        row = run_experiment(ExperimentSpec(collective=coll, sizes=(2 * MiB,), codec="raw"))[0]
        assert row.speedup_vs_raw == 1.0
        assert row.busbw == pytest.approx(row.algbw * bus_factor(coll, 4))


def test_huffman_beats_fixed_on_geometric():
    base = dict(collective="allgather", sizes=(4 * MiB,), quant="none", distribution="geom:0.5")
    huff = run_experiment(ExperimentSpec(codec="huffman", **base))[0]
    fixed = run_experiment(ExperimentSpec(codec="fixed", **base))[0]
    assert huff.cr_final > fixed.cr_final > huff.cr_quant


def test_auto_moves_from_raw_to_entropy_with_size():
    rows = run_experiment(ExperimentSpec(sizes=(64 << 10, MiB, 64 * MiB), codec="auto",
                                         max_batches_per_step=2))
    assert rows[0].codec_mix.startswith("raw") and "fixed" not in rows[0].codec_mix
    assert "fixed" in rows[-1].codec_mix or "huffman" in rows[-1].codec_mix


def test_uniform_is_near_incompressible():
    row = run_experiment(ExperimentSpec(collective="allgather", sizes=(4 * MiB,), codec="auto",
                                        distribution="uniform"))[0]
    assert row.cr_final == pytest.approx(row.cr_quant, rel=0.25)


def test_overlap_modes_and_exposure():
    base = dict(sizes=(64 * MiB,), codec="fixed", max_batches_per_step=2)
    on = run_experiment(ExperimentSpec(overlap="on", **base))[0]
    off = run_experiment(ExperimentSpec(overlap="off", **base))[0]
    assert on.sim_time < off.sim_time
    assert on.cr_final == off.cr_final
    assert 0 <= on.exposed_codec_time < off.exposed_codec_time


def test_report_roundtrip(tmp_path):
    rows = run_experiment(ExperimentSpec(sizes=(256 << 10, MiB), ranks=2))
    path = tmp_path / "r.csv"
    emit_report(rows, path, markdown=tmp_path / "r.md")
    assert read_report(path) == rows
    lines = list(csv.reader(path.open()))
    assert lines[0] == COLUMNS and {len(l) for l in lines} == {len(COLUMNS)}
    assert "CR FixedLen" in (tmp_path / "r.md").read_text()


def test_empty_report(tmp_path):
    path = tmp_path / "e.csv"
    emit_report([], path)
    assert path.read_text().strip() == ",".join(COLUMNS)


def test_markdown_pivot():
    row = ReportRow("allgather", 4, 100, "fixed", "none", "geom:0.7", "on", "inter", 1.0, 0.0,
                    0, 1, 4.0, 6.4, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0, "fixed:1")
    table = markdown_table([row, dataclasses.replace(row, codec="huffman", cr_final=19.0)])
    assert "| geom:0.7 | none | 4 | 100 | 4.00 | 6.40 | 19.00 |" in table


def test_deterministic_excluding_wall_columns(tmp_path):
    spec = ExperimentSpec(sizes=(MiB, 8 * MiB), ranks=3, seed=9)
    a, b = run_experiment(spec), run_experiment(spec)
    strip = lambda rows: [{k: v for k, v in dataclasses.asdict(r).items()
                           if k not in WALL_COLUMNS} for r in rows]
    assert strip(a) == strip(b)


def test_sizes_parsing():
    assert parse_size("64K") == 65536 and parse_size("1GiB") == 1 << 30
    assert parse_sizes("64K:256K") == (65536, 131072, 262144)
    assert parse_sizes("1M,4M") == (MiB, 4 * MiB)
    with pytest.raises(ValueError):
        parse_size("12Q")


def test_cli_end_to_end(tmp_path, capsys):
    out = tmp_path / "o.csv"
    rc = main(["--sizes", "64K,1M", "--ranks", "2", "--codec", "fixed", "--dist", "geom:0.5",
               "--quant", "none", "--out", str(out), "--markdown", str(tmp_path / "o.md")])
    assert rc == 0
    rows = read_report(out)
    assert [r.size_bytes for r in rows] == [65536, MiB]
    assert all(r.codec == "fixed" and r.dist == "geom:0.5" for r in rows)


def test_cli_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[bench]\nranks = 8\ncodec = huffman\nseed = 3\n")
    args = build_parser().parse_args(["--config", str(cfg), "--codec", "raw"])
    s = resolve(args, environ={"ZCOLL_SEED": "5"})
    assert s["ranks"] == "8" and s["codec"] == "raw" and s["seed"] == "5"


def test_cli_rejects_bad_values(tmp_path, capsys):
    assert main(["--sizes", "7", "--out", str(tmp_path / "x.csv")]) == 2
    assert main(["--quant", "zfp:1", "--out", str(tmp_path / "x.csv")]) == 2
