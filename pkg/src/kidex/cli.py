"""Command-line entry point: annotate, tables, eval, gen.

Outputs are sorted by (doc_id, field/type) before writing, so reruns and
any ``--workers`` value produce byte-identical files.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

from . import annotate as annotate_mod
from . import evalkit, matcher, ruledsl, tabrec, textprep
from .corpusgen import gen_corpus
from .model import SchemaError, load_page_detections
from .normalize import ConfusionMap

EXIT_OK = 0
EXIT_IO = 1
EXIT_RULES = 2


@dataclass
class Config:
    rules: Optional[str] = None
    sections: Optional[str] = None
    labels: Optional[str] = None
    tab: dict = field(default_factory=dict)  # inline TabConfig fields
    confusions: Optional[dict] = None
    locale_hint: str = "it"
    workers: int = 1

    @classmethod
    def load(cls, path: Optional[str]) -> "Config":
        if not path:
            return cls()
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        cfg = cls()
        for key in ("rules", "sections", "labels", "locale_hint", "workers", "confusions"):
            if key in data:
                setattr(cfg, key, data[key])
        tab = data.get("tab", {})
        if isinstance(tab, str):  # a path to a separate tab-config JSON
            if not Path(tab).exists():
                raise FileNotFoundError(tab)
            tab = json.loads(Path(tab).read_text(encoding="utf-8"))
        cfg.tab = tab
        for name in ("rules", "sections", "labels"):
            value = getattr(cfg, name)
            if value and not Path(value).exists():
                raise FileNotFoundError(value)
        return cfg

    def tab_config(self) -> tabrec.TabConfig:
        return tabrec.TabConfig.from_dict(self.tab) if self.tab else tabrec.TabConfig()

    def confusion_map(self) -> ConfusionMap:
        if not self.confusions:
            return ConfusionMap()
        return ConfusionMap(pairs=dict(self.confusions.get("pairs", {"/": "7"})),
                            numeric_context_only=self.confusions.get("numeric_context_only", True))


def _default_rules_text() -> str:
    return resources.files("kidex.data").joinpath("default_rules.tre").read_text(encoding="utf-8")


def _doc_paths(in_dir: Path) -> list[Path]:
    if not in_dir.is_dir():
        raise NotADirectoryError(str(in_dir))
    return sorted(p for p in in_dir.iterdir()
                  if p.suffix.lower() in (".txt", ".json") and p.is_file())


def _page_file_paths(pages: Path) -> list[Path]:
    if pages.is_dir():
        return sorted(p for p in pages.iterdir()
                      if p.name.endswith(".json") and p.is_file())
    if pages.is_file():
        return [pages]
    raise FileNotFoundError(str(pages))


def _doc_id_for(path: Path) -> str:
    stem = path.stem
    return stem[:-6] if stem.endswith(".pages") else stem


# ---------------------------------------------------------------------------
# annotate
# ---------------------------------------------------------------------------

def cmd_annotate(args, config: Config) -> int:
    rules_path = args.rules or config.rules
    try:
        source = (Path(rules_path).read_text(encoding="utf-8") if rules_path
                  else _default_rules_text())
        source_name = rules_path or "default_rules.tre"
        compiled = ruledsl.compile_rules(ruledsl.parse_rules(source, str(source_name)))
    except ruledsl.RuleError as e:
        print(f"rule error: {e}", file=sys.stderr)
        return EXIT_RULES
    except OSError as e:
        print(f"cannot read rules: {e}", file=sys.stderr)
        return EXIT_IO

    try:
        sections_path = args.sections or config.sections
        section_cfg = (annotate_mod.load_section_config(sections_path) if sections_path
                       else annotate_mod.default_section_config())
        docs = _doc_paths(Path(args.in_dir))
    except (OSError, SchemaError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_IO

    def process(path: Path) -> list[matcher.ExtractionResult]:
        doc = textprep.load_document(_doc_id_for(path), path)
        doc = annotate_mod.tokenize_document(doc)
        doc = annotate_mod.annotate_sections(doc, section_cfg)
        _doc, results = matcher.run_rules(compiled, doc)
        return results

    workers = max(1, args.workers or config.workers)
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_doc = list(pool.map(process, docs))
    except matcher.RuleComplexityError as e:
        print(f"rule error: {e}", file=sys.stderr)
        return EXIT_RULES
    except (OSError, SchemaError, textprep.IngestError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_IO

    results = [r for chunk in per_doc for r in chunk]
    results.sort(key=lambda r: (r.doc_id, r.field, r.first_token, r.last_token, r.rule_id))
    try:
        matcher.export_results(results, args.format, args.out)
    except OSError as e:
        print(f"cannot write output: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"annotate: {len(docs)} documents, {len(results)} extractions -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def cmd_tables(args, config: Config) -> int:
    tab_cfg = config.tab_config()
    labels = (tabrec.load_labels_config(args.labels or config.labels)
              if (args.labels or config.labels) else tabrec.default_labels_config())
    cmap = config.confusion_map()

    masks_dir = Path(args.masks)
    if not masks_dir.is_dir():
        print(f"input error: not a directory: {masks_dir}", file=sys.stderr)
        return EXIT_IO
    masks: dict[tuple[str, int], object] = {}
    skipped_docs: set[str] = set()
    for path in sorted(masks_dir.iterdir()):
        if not (path.is_file() and path.suffix == ".json"):
            continue
        try:
            page = load_page_detections(path)
            masks[(page.doc_id, page.page)] = page
        except (SchemaError, OSError) as e:
            print(f"warning: skipping malformed mask file {path.name}: {e}", file=sys.stderr)
            if args.strict:
                return EXIT_IO
            skipped_docs.add(path.name.split(".p")[0])

    try:
        page_files = _page_file_paths(Path(args.pages))
    except OSError as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_IO

    def process(path: Path) -> list[dict]:
        doc = textprep.load_document(_doc_id_for(path), path)
        if doc.doc_id in skipped_docs:
            return []
        page_map = tabrec.identify_pages(doc.page_texts(), tab_cfg)
        rows = []
        for ttype in tabrec.TableType:
            pageno = page_map.get(ttype)
            record = None
            if pageno is not None and (doc.doc_id, pageno) in masks:
                page = masks[(doc.doc_id, pageno)]
                try:
                    hit = tabrec.extract_table(page, ttype, tab_cfg, labels)
                except tabrec.AmbiguousTableError as e:
                    print(f"warning: {doc.doc_id} p{pageno}: {e}", file=sys.stderr)
                    hit = None
                if hit is not None:
                    record, warnings = tabrec.map_to_record(hit[0], hit[1], labels, cmap,
                                                            config.locale_hint)
                    for w in warnings:
                        print(f"warning: {doc.doc_id} p{pageno}: {w}", file=sys.stderr)
            rows.append(tabrec.table_row_dict(doc.doc_id, pageno, ttype, record))
        return rows

    workers = max(1, args.workers or config.workers)
    try:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            per_doc = list(pool.map(process, page_files))
    except (OSError, SchemaError, textprep.IngestError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_IO

    rows = [row for chunk in per_doc for row in chunk]
    rows.sort(key=lambda r: (r["doc_id"], r["type"]))
    try:
        tabrec.write_tables_jsonl(rows, args.out)
    except OSError as e:
        print(f"cannot write output: {e}", file=sys.stderr)
        return EXIT_IO

    print(f"{'table type':<24} {'Extracted':>10} {'Missing':>10}")
    for ttype in tabrec.TableType:
        extracted = sum(1 for r in rows if r["type"] == ttype.value and r["status"] == "extracted")
        missing = sum(1 for r in rows if r["type"] == ttype.value and r["status"] == "missing")
        title = evalkit.TABLE_TITLES[ttype]
        print(f"{title:<24} {extracted:>10} {missing:>10}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval and gen
# ---------------------------------------------------------------------------

def _load_predictions(pred_dir: Path):
    fields: list[evalkit.Triple] = []
    for name in ("fields.jsonl", "fields.csv"):
        path = pred_dir / name
        if path.exists():
            for row in matcher.read_results_file(path):
                fields.append((row["doc_id"], row["field"], row["value"]))
            break
    tables = {}
    tables_path = pred_dir / "tables.jsonl"
    if tables_path.exists():
        for row in tabrec.read_tables_jsonl(tables_path):
            doc_id, _page, ttype, record = tabrec.parse_table_row(row)
            tables[(doc_id, ttype)] = (row["status"], record)
    return fields, tables


def cmd_eval(args, config: Config) -> int:
    try:
        gold = evalkit.load_gold_set(Path(args.gold))
        fields, tables = _load_predictions(Path(args.pred))
    except FileNotFoundError as e:
        print(f"missing file: {e}", file=sys.stderr)
        return EXIT_IO
    except (OSError, SchemaError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_IO
    report = evalkit.evaluate(gold, fields, tables)
    sys.stdout.write(evalkit.format_report(report))
    report_path = Path(args.report) if args.report else Path(args.pred) / "eval_report.json"
    try:
        report_path.write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    except OSError as e:
        print(f"cannot write report: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"report -> {report_path}")
    return EXIT_OK


def cmd_gen(args, config: Config) -> int:
    try:
        out = gen_corpus(args.n, args.seed, args.noise, args.out)
    except (OSError, ValueError) as e:
        print(f"gen error: {e}", file=sys.stderr)
        return EXIT_IO
    print(f"gen: {args.n} documents (seed {args.seed}, noise {args.noise}) -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kidex",
                                     description="Key-information-document extraction toolkit")
    parser.add_argument("--config", help="JSON config file; flags override its values")
    parser.add_argument("--workers", type=int, default=0,
                        help="worker threads per command (default 1)")
    parser.add_argument("--strict", action="store_true",
                        help="fail on malformed inputs instead of skipping")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("annotate", help="run extraction rules over documents")
    p.add_argument("--rules", help="rule file (.tre); defaults to the packaged ruleset")
    p.add_argument("--sections", help="section config JSON; defaults packaged")
    p.add_argument("--in", dest="in_dir", required=True, help="directory of .txt / page .json docs")
    p.add_argument("--out", required=True, help="output file")
    p.add_argument("--format", choices=("csv", "jsonl"), default="csv")
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("tables", help="reconstruct typed tables from detection masks")
    p.add_argument("--masks", required=True, help="directory of page-detections JSON files")
    p.add_argument("--pages", required=True, help="page-text file or directory of them")
    p.add_argument("--labels", help="labels config JSON; defaults packaged")
    p.add_argument("--out", required=True, help="output tables JSONL")
    p.set_defaults(func=cmd_tables)

    p = sub.add_parser("eval", help="score predictions against gold data")
    p.add_argument("--gold", required=True, help="gold directory (fields.jsonl, tables.jsonl)")
    p.add_argument("--pred", required=True, help="predictions directory")
    p.add_argument("--report", help="JSON report path (default: <pred>/eval_report.json)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gen", help="generate a synthetic gold corpus")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen)
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = Config.load(args.config)
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_IO
    return args.func(args, config)


if __name__ == "__main__":
    sys.exit(main())
