import xml.etree.ElementTree as ET
from pathlib import Path

import pytest

from xcube_advisor.cli import main
from xcube_advisor.cost_model import exact_cell_count
from xcube_advisor.reports import read_recommendation
from xcube_advisor.selection import ViewSelector
from xcube_advisor.workload import build_matrix, read_workload
from xcube_advisor.clustering import cluster_queries
from xcube_advisor.xcube_store import load_schema, load_warehouse

DATA = Path(__file__).parent / "data"
SALES = ("channels:10:16:channel_desc+channel_class,"
         "promotions:20:20:promo_category+promo_subcategory,"
         "customers:100:16:cust_first_name+cust_city+cust_gender,"
         "products:50:20:prod_category+prod_subcategory,"
         "times:30:8:month_name+year")


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate -> recommend -> materialize on a 10-query sales workload."""
    root = tmp_path_factory.mktemp("pipeline")
    wh, wl = root / "wh", root / "workload.xq"
    assert run("generate", "--dims", SALES, "--facts", 10_000, "--seed", 7,
               "--out", wh, "--workload-out", wl, "--queries", 10) == 0
    rec = root / "rec.xml"
    assert run("recommend", "--workload", wl, "--schema", wh / "Schema.xml",
               "--out", rec) == 0
    views = root / "views"
    assert run("materialize", "--recommendation", rec, "--warehouse", wh, "--out", views) == 0
    return root, wh, wl, rec, views


def test_generate_writes_documents(tmp_path, capsys):
    assert run("generate", "--dims", "a:3:4,b:2:8", "--facts", 20, "--out", tmp_path) == 0
    for name in ("Schema.xml", "Dimensions.xml", "Facts.xml", "run-manifest.xml"):
        assert (tmp_path / name).exists()
    assert "seed: 42" in capsys.readouterr().out
    w = load_warehouse(tmp_path)
    assert len(w.facts) == 20 and len(w.members) == 5


def test_generate_is_deterministic(tmp_path):
    for sub in ("x", "y"):
        assert run("generate", "--dims", SALES, "--facts", 300, "--seed", 5,
                   "--out", tmp_path / sub) == 0
    for name in ("Schema.xml", "Dimensions.xml", "Facts.xml"):
        assert (tmp_path / "x" / name).read_bytes() == (tmp_path / "y" / name).read_bytes()


def test_generate_zero_facts(tmp_path):
    assert run("generate", "--dims", "a:3:4", "--facts", 0, "--out", tmp_path) == 0
    assert load_warehouse(tmp_path).facts == ()


@pytest.mark.parametrize("dims, facts", [("a:0:4", 5), ("a:3", 5), ("a:x:4", 5),
                                         ("a:3:0", 5), ("a:3:4", -1), ("", 5)])
def test_generate_usage_errors(tmp_path, dims, facts):
    assert run("generate", "--dims", dims, "--facts", facts, "--out", tmp_path) == 2


def test_analyze_snapshot_pair(tmp_path, capsys):
    schema = tmp_path / "Schema.xml"
    run("generate", "--dims", "channels:3:8:channel_desc+channel_class,"
        "customers:4:8:cust_first_name+cust_city", "--facts", 10, "--out", tmp_path)
    report = tmp_path / "analysis.xml"
    assert run("analyze", "--workload", DATA / "snapshot_pair.xq", "--schema", schema,
               "--report", report) == 0
    out = capsys.readouterr().out
    assert "Clusters (sim-dominates): 1" in out
    root = ET.parse(report).getroot()
    rows = [r.text.split() for r in root.iter("row")]
    assert rows == [["1"] * 4, ["1"] * 4]
    assert len(root.findall("clusters/cluster")) == 1


def test_analyze_matches_library(pipeline):
    root, wh, wl, _, _ = pipeline
    report = root / "analysis.xml"
    assert run("analyze", "--workload", wl, "--schema", wh / "Schema.xml",
               "--report", report) == 0
    matrix = build_matrix(read_workload(wl), load_schema(wh / "Schema.xml"))
    clusters = cluster_queries(matrix)
    doc = ET.parse(report).getroot()
    assert [a.get("name") for a in doc.iter("attribute")] == list(matrix.attributes)
    got = [tuple(q.get("id") for q in c.findall("query")) for c in doc.iter("cluster")]
    assert got == [c.query_ids for c in clusters]
    assert len(clusters) >= 3


def test_analyze_bad_policy(pipeline):
    _, wh, wl, _, _ = pipeline
    assert run("analyze", "--workload", wl, "--schema", wh / "Schema.xml",
               "--cluster-policy", "bogus") == 2


def test_analyze_unsupported_query(tmp_path, pipeline):
    _, wh, _, _, _ = pipeline
    bad = tmp_path / "bad.xq"
    bad.write_text("for $x in //CubeFacts/cube/Cell group by(@year) order by @year "
                   "return sum(quantity)")
    assert run("analyze", "--workload", bad, "--schema", wh / "Schema.xml") == 1


def test_recommend_matches_library(pipeline):
    _, wh, wl, rec, _ = pipeline
    sel = ViewSelector(load_schema(wh / "Schema.xml")).fit(read_workload(wl))
    parsed = read_recommendation(rec)
    assert [v.id for v in parsed.selected] == sel.selection_.selected_ids
    assert list(parsed.selected) == sel.selected_views_
    assert parsed.fact_count == 10_000


@pytest.mark.parametrize("extra", [["--objective", "ratio"],
                                   ["--objective", "hybrid", "--budget", "100"],
                                   ["--objective", "hybrid", "--budget", "100", "--alpha", "2"],
                                   ["--budget", "-1"]])
def test_recommend_usage_errors(pipeline, extra):
    _, wh, wl, _, _ = pipeline
    assert run("recommend", "--workload", wl, "--schema", wh / "Schema.xml", *extra) == 2


def test_recommend_zero_budget(tmp_path, pipeline):
    _, wh, wl, _, _ = pipeline
    rec = tmp_path / "rec.xml"
    assert run("recommend", "--workload", wl, "--schema", wh / "Schema.xml",
               "--objective", "ratio", "--budget", 0, "--out", rec) == 0
    assert read_recommendation(rec).selected == ()


def test_recommend_hybrid_alpha_one_equals_profit(tmp_path, pipeline):
    _, wh, wl, _, _ = pipeline
    a, b = tmp_path / "a.xml", tmp_path / "b.xml"
    common = ["recommend", "--workload", wl, "--schema", wh / "Schema.xml", "--budget", 1e6]
    assert run(*common, "--out", a) == 0
    assert run(*common, "--objective", "hybrid", "--alpha", 1, "--out", b) == 0
    assert read_recommendation(a).selected == read_recommendation(b).selected
    assert read_recommendation(a).selected


def test_materialize_row_counts(pipeline):
    _, wh, _, rec, views = pipeline
    w = load_warehouse(wh)
    manifest = ET.parse(views / "views-manifest.xml").getroot()
    entries = manifest.findall("view")
    assert [e.get("id") for e in entries] == [v.id for v in read_recommendation(rec).selected]
    for e, v in zip(entries, read_recommendation(rec).selected):
        assert int(e.get("rows")) == exact_cell_count(v, w)
        assert (views / e.get("file")).exists()


def test_materialize_empty_recommendation(tmp_path, pipeline):
    _, wh, wl, _, _ = pipeline
    rec = tmp_path / "rec.xml"
    run("recommend", "--workload", wl, "--schema", wh / "Schema.xml",
        "--objective", "ratio", "--budget", 0, "--out", rec)
    out = tmp_path / "views"
    assert run("materialize", "--recommendation", rec, "--warehouse", wh, "--out", out) == 0
    assert [p.name for p in out.iterdir()] == ["views-manifest.xml"]


def test_materialize_schema_mismatch(tmp_path, pipeline):
    _, _, _, rec, _ = pipeline
    other = tmp_path / "other"
    run("generate", "--dims", "a:3:4", "--facts", 5, "--out", other)
    assert run("materialize", "--recommendation", rec, "--warehouse", other,
               "--out", tmp_path / "v") == 1


def test_bench_pipeline(tmp_path, pipeline, capsys):
    _, wh, wl, _, views = pipeline
    csv = tmp_path / "bench.csv"
    assert run("bench", "--workload", wl, "--warehouse", wh, "--views", views,
               "--csv", csv) == 0
    out = capsys.readouterr().out
    speedup = float(out.rsplit("speedup:", 1)[1])
    assert speedup >= 10
    lines = csv.read_text().splitlines()[1:]
    assert len(lines) == 10
    base = sum(int(line.split(",")[1]) for line in lines)
    view = sum(int(line.split(",")[2]) for line in lines)
    assert base == 10 * 10_000
    assert base / view == pytest.approx(speedup, abs=0.01)


def test_bench_no_views(tmp_path, pipeline, capsys):
    _, wh, wl, _, _ = pipeline
    empty = tmp_path / "views"
    rec = tmp_path / "rec.xml"
    run("recommend", "--workload", wl, "--schema", wh / "Schema.xml",
        "--objective", "ratio", "--budget", 0, "--out", rec)
    run("materialize", "--recommendation", rec, "--warehouse", wh, "--out", empty)
    capsys.readouterr()
    assert run("bench", "--workload", wl, "--warehouse", wh, "--views", empty) == 0
    assert "speedup: 1.00" in capsys.readouterr().out


def test_bench_missing_views_dir(tmp_path, pipeline):
    _, wh, wl, _, _ = pipeline
    assert run("bench", "--workload", wl, "--warehouse", wh,
               "--views", tmp_path / "nowhere") == 2


def test_missing_input_file(tmp_path):
    assert run("analyze", "--workload", tmp_path / "none.xq",
               "--schema", tmp_path / "none.xml") == 1
