import json

import pytest

from kidex.cli import main


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    assert main(["gen", "--n", "3", "--seed", "8", "--noise", "0", "--out", str(root)]) == 0
    return root


def test_gen_same_seed_identical_trees(tmp_path):
    assert main(["gen", "--n", "2", "--seed", "5", "--noise", "0", "--out", str(tmp_path / "a")]) == 0
    assert main(["gen", "--n", "2", "--seed", "5", "--noise", "0", "--out", str(tmp_path / "b")]) == 0
    a = {p.relative_to(tmp_path / "a"): p.read_bytes() for p in sorted((tmp_path / "a").rglob("*.json*"))}
    b = {p.relative_to(tmp_path / "b"): p.read_bytes() for p in sorted((tmp_path / "b").rglob("*.json*"))}
    assert a == b


def test_annotate_end_to_end(corpus, tmp_path):
    out = tmp_path / "fields.csv"
    assert main(["annotate", "--in", str(corpus / "docs"), "--out", str(out)]) == 0
    lines = out.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0].startswith("doc_id,field,value")
    assert len(lines) == 1 + 3 * 8


def test_annotate_bad_rules_exit_2(corpus, tmp_path):
    bad = tmp_path / "bad.tre"
    bad.write_text("$X = (/a/", encoding="utf-8")
    code = main(["annotate", "--rules", str(bad), "--in", str(corpus / "docs"),
                 "--out", str(tmp_path / "o.csv")])
    assert code == 2


def test_annotate_empty_dir_header_only(tmp_path):
    empty = tmp_path / "empty"
    empty.mkdir()
    out = tmp_path / "o.csv"
    assert main(["annotate", "--in", str(empty), "--out", str(out)]) == 0
    assert out.read_bytes() == b"doc_id,field,value,tag,first_token,last_token,rule_id\r\n"


def test_annotate_missing_dir_exit_1(tmp_path):
    assert main(["annotate", "--in", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "o.csv")]) == 1


def test_tables_end_to_end(corpus, tmp_path, capsys):
    out = tmp_path / "tables.jsonl"
    assert main(["tables", "--masks", str(corpus / "masks"),
                 "--pages", str(corpus / "docs"), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 9
    assert all(r["status"] == "extracted" for r in rows)
    summary = capsys.readouterr().out
    assert "Missing" in summary and "Extracted" in summary


def test_tables_single_page_file(corpus, tmp_path):
    out = tmp_path / "one.jsonl"
    one = sorted((corpus / "docs").iterdir())[0]
    assert main(["tables", "--masks", str(corpus / "masks"), "--pages", str(one),
                 "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert len(rows) == 3


def test_tables_malformed_mask_warns_not_fails(corpus, tmp_path, capsys):
    masks = tmp_path / "masks"
    masks.mkdir()
    for p in (corpus / "masks").iterdir():
        (masks / p.name).write_bytes(p.read_bytes())
    (masks / "kid00001.p3.json").write_text("{broken", encoding="utf-8")
    out = tmp_path / "tables.jsonl"
    assert main(["tables", "--masks", str(masks), "--pages", str(corpus / "docs"),
                 "--out", str(out)]) == 0
    assert "skipping malformed" in capsys.readouterr().err


def test_tables_strict_malformed_exit_1(corpus, tmp_path):
    masks = tmp_path / "masks"
    masks.mkdir()
    (masks / "kid00001.p3.json").write_text("{broken", encoding="utf-8")
    assert main(["--strict", "tables", "--masks", str(masks),
                 "--pages", str(corpus / "docs"), "--out", str(tmp_path / "t.jsonl")]) == 1


def test_missing_page_makes_type_missing(corpus, tmp_path):
    # a doc without the costs-evolution anchor page: type reported missing
    docs = tmp_path / "docs"
    docs.mkdir()
    src = json.loads((corpus / "docs" / "kid00001.pages.json").read_text(encoding="utf-8"))
    src["pages"] = [p.replace("Andamento dei costi", "testo generico") for p in src["pages"]]
    (docs / "kid00001.pages.json").write_text(json.dumps(src), encoding="utf-8")
    out = tmp_path / "tables.jsonl"
    assert main(["tables", "--masks", str(corpus / "masks"), "--pages", str(docs),
                 "--out", str(out)]) == 0
    rows = {json.loads(l)["type"]: json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()}
    assert rows["costs_evolution"]["status"] == "missing"
    assert rows["costs_evolution"]["page"] is None
    assert rows["performance_scenarios"]["status"] == "extracted"


def test_eval_gold_vs_itself_is_perfect(corpus, tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    # gold as predictions: convert gold fields to a jsonl prediction file
    rows = []
    for line in (corpus / "gold" / "fields.jsonl").read_text(encoding="utf-8").splitlines():
        row = json.loads(line)
        row.update({"tag": "x", "first_token": 0, "last_token": 0, "rule_id": "g"})
        rows.append(json.dumps(row))
    (pred / "fields.jsonl").write_text("\n".join(rows) + "\n", encoding="utf-8")
    (pred / "tables.jsonl").write_bytes((corpus / "gold" / "tables.jsonl").read_bytes())
    assert main(["eval", "--gold", str(corpus / "gold"), "--pred", str(pred)]) == 0
    out = capsys.readouterr().out
    assert "1.0000" in out
    report = json.loads((pred / "eval_report.json").read_text(encoding="utf-8"))
    assert report["micro"]["precision"] == 1.0
    assert report["tables"]["costs_evolution"]["missing"] == 0


def test_eval_missing_gold_exit_1(tmp_path, capsys):
    pred = tmp_path / "pred"
    pred.mkdir()
    assert main(["eval", "--gold", str(tmp_path / "nogold"), "--pred", str(pred)]) == 1
    assert "fields.jsonl" in capsys.readouterr().err


def test_workers_flag_byte_identical(corpus, tmp_path):
    outs = []
    for k in (1, 4):
        out = tmp_path / f"fields{k}.csv"
        assert main(["--workers", str(k), "annotate", "--in", str(corpus / "docs"),
                     "--out", str(out)]) == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]


def test_config_file_overrides(tmp_path, corpus):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"workers": 2, "tab": {"confidence_threshold": 0.99}}),
                   encoding="utf-8")
    out = tmp_path / "tables.jsonl"
    assert main(["--config", str(cfg), "tables", "--masks", str(corpus / "masks"),
                 "--pages", str(corpus / "docs"), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    # threshold 0.99 kills most detections: nothing should be extracted
    assert all(r["status"] == "missing" for r in rows)


def test_gen_invalid_n_exit_1(tmp_path):
    assert main(["gen", "--n", "0", "--seed", "1", "--out", str(tmp_path / "x")]) == 1


def test_config_tab_as_separate_file(tmp_path, corpus):
    tab = tmp_path / "tab.json"
    tab.write_text(json.dumps({"confidence_threshold": 0.99}), encoding="utf-8")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"tab": str(tab)}), encoding="utf-8")
    out = tmp_path / "tables.jsonl"
    assert main(["--config", str(cfg), "tables", "--masks", str(corpus / "masks"),
                 "--pages", str(corpus / "docs"), "--out", str(out)]) == 0
    rows = [json.loads(l) for l in out.read_text(encoding="utf-8").splitlines()]
    assert all(r["status"] == "missing" for r in rows)


def test_config_missing_referenced_file_exit_1(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"rules": str(tmp_path / "nope.tre")}), encoding="utf-8")
    assert main(["--config", str(cfg), "gen", "--n", "1", "--seed", "1",
                 "--out", str(tmp_path / "x")]) == 1
