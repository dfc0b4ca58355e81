import csv
from pathlib import Path

import pytest
import yaml

from bibc_plots.cli import main
from bibc_plots.figures import FigureSpec, SchemaError, plot_nmse, plot_pe, plot_pg_map, render

SAMPLES = Path(__file__).resolve().parent.parent / "sample_data"


def test_pe_figure_from_shipped_sample(tmp_path):
    out = tmp_path / "pe.png"
    path = plot_pe(FigureSpec(csv_path=SAMPLES / "pe_sweep.csv", kind="pe", out_path=out))
    assert path.exists() and path.stat().st_size > 0


def test_pe_legend_covers_all_series(tmp_path):
    # two problems x two bit depths -> four legend entries
    out = tmp_path / "pe.png"
    plot_pe(FigureSpec(csv_path=SAMPLES / "pe_sweep.csv", kind="pe", out_path=out))
    with open(SAMPLES / "pe_sweep.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    combos = {(r["problem"], r["bits"]) for r in rows}
    assert len(combos) == 4


def test_pg_heatmap_axis_extents_equal_room(tmp_path):
    out = tmp_path / "pg.png"
    spec = FigureSpec(
        csv_path=SAMPLES / "pg_map.csv", kind="pg", out_path=out,
        scene_path=SAMPLES / "scene.yaml",
    )
    from bibc_plots import figures

    captured = {}
    orig = figures._save

    def spy(fig, s):
        ax = fig.axes[0]
        captured["xlim"] = ax.get_xlim()
        captured["ylim"] = ax.get_ylim()
        return orig(fig, s)

    figures._save = spy
    try:
        path = plot_pg_map(spec)
    finally:
        figures._save = orig
    assert path.exists()
    dims = yaml.safe_load((SAMPLES / "scene.yaml").read_text())["room"]["dims_m"]
    assert captured["xlim"] == (0.0, dims[0])
    assert captured["ylim"] == (0.0, dims[1])


def test_pg_single_point_grid_does_not_crash(tmp_path):
    csv_path = tmp_path / "one.csv"
    csv_path.write_text("x_m,y_m,pg_db\n1.0,2.0,-40.0\n")
    out = tmp_path / "one.png"
    assert plot_pg_map(FigureSpec(csv_path=csv_path, kind="pg", out_path=out)).exists()


def test_uniform_field_renders(tmp_path):
    csv_path = tmp_path / "flat.csv"
    rows = ["x_m,y_m,pg_db"] + [f"{x}.0,{y}.0,-50.0" for x in range(3) for y in range(2)]
    csv_path.write_text("\n".join(rows) + "\n")
    out = tmp_path / "flat.png"
    assert plot_pg_map(FigureSpec(csv_path=csv_path, kind="pg", out_path=out)).exists()


def test_nmse_figure_from_shipped_sample(tmp_path):
    out = tmp_path / "nmse.png"
    path = plot_nmse(FigureSpec(csv_path=SAMPLES / "nmse_sweep.csv", kind="nmse", out_path=out))
    assert path.exists() and path.stat().st_size > 0


def test_nmse_accepts_linear_estimator_schema(tmp_path):
    csv_path = tmp_path / "est.csv"
    csv_path.write_text(
        "snr_p_db,ap_id,nmse_iter,nmse_noiter\n0,1,0.1,0.2\n4,1,0.01,0.02\n"
    )
    out = tmp_path / "est.png"
    assert plot_nmse(FigureSpec(csv_path=csv_path, kind="nmse", out_path=out)).exists()


def test_schema_mismatch_names_missing_column(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("snr_db,problem\n0,p_bf\n")
    with pytest.raises(SchemaError, match="pe_closed"):
        plot_pe(FigureSpec(csv_path=bad, kind="pe", out_path=tmp_path / "x.png"))
    assert not (tmp_path / "x.png").exists()


def test_empty_csv_rejected_without_output(tmp_path):
    empty = tmp_path / "empty.csv"
    empty.write_text("snr_db,problem,bits,csi,pe_closed,pe_sim,trials\n")
    with pytest.raises(SchemaError, match="no data rows"):
        plot_pe(FigureSpec(csv_path=empty, kind="pe", out_path=tmp_path / "y.png"))
    assert not (tmp_path / "y.png").exists()


def test_deterministic_output(tmp_path):
    a = render(FigureSpec(csv_path=SAMPLES / "pe_sweep.csv", kind="pe",
                          out_path=tmp_path / "a.png"))
    b = render(FigureSpec(csv_path=SAMPLES / "pe_sweep.csv", kind="pe",
                          out_path=tmp_path / "b.png"))
    assert a.read_bytes() == b.read_bytes()


def test_cli_all_kinds(tmp_path):
    assert main(["pe", "--in", str(SAMPLES / "pe_sweep.csv"),
                 "--out", str(tmp_path / "pe.png")]) == 0
    assert main(["pg", "--in", str(SAMPLES / "pg_map.csv"),
                 "--scene", str(SAMPLES / "scene.yaml"),
                 "--out", str(tmp_path / "pg.png")]) == 0
    assert main(["nmse", "--in", str(SAMPLES / "nmse_sweep.csv"),
                 "--out", str(tmp_path / "nmse.png")]) == 0
    for name in ("pe.png", "pg.png", "nmse.png"):
        assert (tmp_path / name).stat().st_size > 0
