"""Table reconstruction from detection masks and OCR text.

Pipeline per page: confidence filtering, cell-to-table assignment by box
centers, bbox enlargement, OCR text association by IoU, table
identification by anchor strings, alignment-factor row grouping, and
multi-line cell splitting. Identified tables are then mapped onto one of
the three typed financial records.
"""
from __future__ import annotations

import json
import math
import re
import statistics
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional

from .model import (BBox, Cell, CostCategory, CostsCompositionRecord, CostsEvolutionRecord,
                    Detection, PageDetections, PerformanceScenariosRecord, Period, PeriodCosts,
                    RawTable, Scenario, ScenarioCell, SchemaError, TypedRecord,
                    contains_center, iou)
from .normalize import ConfusionMap, fix_confusions, normalize_number


class TableType(str, Enum):
    PERFORMANCE_SCENARIOS = "performance_scenarios"
    COSTS_EVOLUTION = "costs_evolution"
    COSTS_COMPOSITION = "costs_composition"


class AmbiguousTableError(ValueError):
    """Anchor strings for two different table types matched the same table."""

    def __init__(self, matched: Iterable[TableType]):
        self.matched = tuple(matched)
        names = ", ".join(t.value for t in self.matched)
        super().__init__(f"table matches anchors of multiple types: {names}")


@dataclass(frozen=True)
class AnchorSet:
    page_strings: tuple[str, ...]
    table_strings: tuple[str, ...]


DEFAULT_ANCHORS: dict[TableType, AnchorSet] = {
    TableType.PERFORMANCE_SCENARIOS: AnchorSet(
        page_strings=("Scenari di performance", "Performance scenarios"),
        table_strings=("Scenario di stress", "Stress scenario"),
    ),
    TableType.COSTS_EVOLUTION: AnchorSet(
        page_strings=("Andamento dei costi", "Evoluzione dei costi", "Costs over time"),
        # the identification of this table rides on just these two header cells
        table_strings=("Costi totali", "Impatto sul rendimento",
                       "Total costs", "Impact on return"),
    ),
    TableType.COSTS_COMPOSITION: AnchorSet(
        page_strings=("Composizione dei costi", "Composition of costs"),
        table_strings=("Costi di ingresso", "Costi di uscita",
                       "Entry costs", "Exit costs"),
    ),
}


@dataclass(frozen=True)
class TabConfig:
    confidence_threshold: float = 0.6
    alignment_factor_ratio: float = 0.5  # fraction of the median cell height
    enlargement_ratio: float = 0.05      # per side
    ocr_iou_threshold: float = 0.5
    anchors: Mapping[TableType, AnchorSet] = field(default_factory=lambda: dict(DEFAULT_ANCHORS))

    def __post_init__(self):
        for name in ("confidence_threshold", "alignment_factor_ratio",
                     "enlargement_ratio", "ocr_iou_threshold"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0) and not (name == "enlargement_ratio" and v == 0.0):
                raise ValueError(f"{name} must be in (0, 1], got {v}")
        for ttype, anchors in self.anchors.items():
            if not anchors.page_strings or not anchors.table_strings:
                raise ValueError(f"{ttype.value}: needs at least one page and one table anchor")

    @classmethod
    def from_dict(cls, d: Mapping) -> "TabConfig":
        kwargs: dict = {}
        for name in ("confidence_threshold", "alignment_factor_ratio",
                     "enlargement_ratio", "ocr_iou_threshold"):
            if name in d:
                kwargs[name] = float(d[name])
        if "anchors" in d:
            anchors = dict(DEFAULT_ANCHORS)
            for key, spec in d["anchors"].items():
                anchors[TableType(key)] = AnchorSet(tuple(spec["page_strings"]),
                                                    tuple(spec["table_strings"]))
            kwargs["anchors"] = anchors
        return cls(**kwargs)


_WS_RE = re.compile(r"\s+")


def _norm_ws(s: str) -> str:
    return _WS_RE.sub(" ", s).strip().casefold()


_PUNCT_STRIP_RE = re.compile(r"[.,:;!?()\[\]{}\"'«»%€]")


def _norm_label(s: str) -> str:
    """Label comparison key: case, whitespace and punctuation insensitive."""
    return _norm_ws(_PUNCT_STRIP_RE.sub(" ", s))


def _label_found(needle_norm: str, haystack_norm: str) -> bool:
    if not needle_norm:
        return False
    return re.search(r"(?<!\w)" + re.escape(needle_norm) + r"(?!\w)", haystack_norm) is not None


# ---------------------------------------------------------------------------
# Pipeline operations
# ---------------------------------------------------------------------------

def identify_pages(doc_pages: list[str], cfg: TabConfig) -> dict[TableType, int]:
    """First page (1-based) whose text contains any page anchor of each type."""
    normed = [_norm_ws(p) for p in doc_pages]
    out: dict[TableType, int] = {}
    for ttype, anchors in cfg.anchors.items():
        needles = [_norm_ws(s) for s in anchors.page_strings]
        for pageno, page in enumerate(normed, start=1):
            if any(needle in page for needle in needles):
                out[ttype] = pageno
                break
    return out


def filter_detections(page: PageDetections, cfg: TabConfig) -> tuple[list[Detection], list[Detection]]:
    """Keep detections at or above the confidence threshold, split tables/cells."""
    tables, cells = [], []
    for det in page.detections:
        if det.confidence < cfg.confidence_threshold:
            continue
        (tables if det.cls.is_table else cells).append(det)
    return tables, cells


def assign_cells(tables: list[Detection], cells: list[Detection]) -> dict[int, list[Detection]]:
    """Cell goes to the table containing its center; IoU breaks multi-table ties."""
    out: dict[int, list[Detection]] = {i: [] for i in range(len(tables))}
    for cell in cells:
        holders = [i for i, t in enumerate(tables) if contains_center(t.bbox, cell.bbox)]
        if not holders:
            continue
        best = max(holders, key=lambda i: (iou(cell.bbox, tables[i].bbox), -i))
        out[best].append(cell)
    return out


def enlarge_bbox(cell: BBox, cfg: TabConfig, page_w: int, page_h: int) -> BBox:
    """Pad each side outward by ratio x that dimension, clamped to the page.

    Fractional pads round outward (floor the mins, ceil the maxes) so
    enlargement never loses a pixel to rounding.
    """
    dx = cfg.enlargement_ratio * cell.width
    dy = cfg.enlargement_ratio * cell.height
    return BBox(
        left=max(0, math.floor(cell.left - dx)),
        top=max(0, math.floor(cell.top - dy)),
        right=min(page_w, math.ceil(cell.right + dx)),
        bottom=min(page_h, math.ceil(cell.bottom + dy)),
    )


def cell_text(cell: BBox, ocr: Iterable, cfg: TabConfig,
              page_w: Optional[int] = None, page_h: Optional[int] = None) -> Optional[str]:
    """Text of the OCR entry overlapping the enlarged cell best, if well enough.

    ``ocr`` accepts OcrEntry-like objects with ``bbox`` and ``text``. When
    page dimensions are omitted, clamping cannot apply and the raw
    enlargement is used.
    """
    if page_w is None or page_h is None:
        page_w = page_h = 10 ** 9
    enlarged = enlarge_bbox(cell, cfg, page_w, page_h)
    best_text, best_iou = None, 0.0
    for entry in ocr:
        score = iou(enlarged, entry.bbox)
        if score > best_iou:
            best_text, best_iou = entry.text, score
    if best_iou >= cfg.ocr_iou_threshold:
        return best_text
    return None


def identify_table(cells_with_text: Iterable[Cell], cfg: TabConfig) -> Optional[TableType]:
    """The unique table type whose anchors occur in some cell text; None if none."""
    texts = [_norm_ws(c.text) for c in cells_with_text if c.text]
    matched = []
    for ttype, anchors in cfg.anchors.items():
        needles = [_norm_ws(s) for s in anchors.table_strings]
        if any(needle in text for text in texts for needle in needles):
            matched.append(ttype)
    if not matched:
        return None
    if len(matched) > 1:
        raise AmbiguousTableError(matched)
    return matched[0]


def group_rows(cells: list[Cell], cfg: TabConfig,
               table_bbox: Optional[BBox] = None) -> RawTable:
    """Cluster cells into rows by top coordinate.

    The alignment factor is ``alignment_factor_ratio`` x the median cell
    height. Scanning cells by ascending top, a cell joins the current row
    while its top is within the factor of the row's FIRST cell; otherwise
    it starts a new row. Rows are left-to-right sorted.
    """
    if not cells:
        raise ValueError("group_rows needs at least one cell")
    factor = cfg.alignment_factor_ratio * statistics.median(c.bbox.height for c in cells)
    ordered = sorted(cells, key=lambda c: (c.bbox.top, c.bbox.left, c.bbox.right))
    rows: list[list[Cell]] = [[ordered[0]]]
    anchor_top = ordered[0].bbox.top
    for cell in ordered[1:]:
        if cell.bbox.top - anchor_top <= factor:
            rows[-1].append(cell)
        else:
            rows.append([cell])
            anchor_top = cell.bbox.top
    sorted_rows = tuple(tuple(sorted(row, key=lambda c: (c.bbox.left, c.bbox.top)))
                        for row in rows)
    if table_bbox is None:
        table_bbox = BBox(min(c.bbox.left for c in cells), min(c.bbox.top for c in cells),
                          max(c.bbox.right for c in cells), max(c.bbox.bottom for c in cells))
    return RawTable(table_bbox, sorted_rows)


def _is_numericish(text: str) -> bool:
    return normalize_number(text) is not None


def split_multiline(row: Iterable[Cell], schema_labels: Iterable[str]) -> list[Cell]:
    """Split cells that wrongly merged vertically stacked fields.

    A cell splits only when every newline-separated part is either a known
    field label (each a distinct one) or a numeric value; genuine
    multi-line prose is left alone. The bbox is divided evenly by line count.
    """
    label_keys = {_norm_label(lbl) for lbl in schema_labels}
    out: list[Cell] = []
    for cell in row:
        parts = [p.strip() for p in cell.text.split("\n")] if cell.text else []
        if len(parts) < 2 or any(not p for p in parts):
            out.append(cell)
            continue
        used_labels: set[str] = set()
        splittable = True
        for part in parts:
            key = _norm_label(part)
            if key in label_keys and key not in used_labels:
                used_labels.add(key)
            elif not _is_numericish(part):
                splittable = False
                break
        if not splittable:
            out.append(cell)
            continue
        k = len(parts)
        box = cell.bbox
        for i, part in enumerate(parts):
            top = box.top + (box.height * i) // k
            bottom = box.top + (box.height * (i + 1)) // k if i + 1 < k else box.bottom
            out.append(Cell(BBox(box.left, top, box.right, bottom), part))
    return out


def extract_table(page: PageDetections, type_hint: Optional[TableType],
                  cfg: TabConfig,
                  labels: Optional["LabelsConfig"] = None) -> Optional[tuple[TableType, RawTable]]:
    """Full per-page composition; None when no table is identified (a Missing)."""
    tables, cells = filter_detections(page, cfg)
    if not tables:
        return None
    assignment = assign_cells(tables, cells)
    order = sorted(range(len(tables)), key=lambda i: (tables[i].bbox.top, tables[i].bbox.left))
    labels = labels or default_labels_config()
    for idx in order:
        assigned = assignment[idx]
        if not assigned:
            continue
        resolved = []
        for det in assigned:
            text = cell_text(det.bbox, page.ocr, cfg, page.page_width, page.page_height)
            resolved.append(Cell(det.bbox, text or ""))
        ttype = identify_table(resolved, cfg)
        if ttype is None or (type_hint is not None and ttype is not type_hint):
            continue
        table = group_rows(resolved, cfg, tables[idx].bbox)
        schema_labels = labels.all_labels(ttype)
        split_rows = [split_multiline(row, schema_labels) for row in table.rows]
        flat = [c for row in split_rows for c in row]
        if len(flat) != sum(len(r) for r in table.rows):
            table = group_rows(flat, cfg, tables[idx].bbox)
        return ttype, table
    return None


# ---------------------------------------------------------------------------
# Labels config and record mapping
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LabelsConfig:
    """Label phrases that tie grid rows/columns to record fields."""
    initial_period: tuple[str, ...]
    scenarios: Mapping[Scenario, tuple[str, ...]]
    perf_metrics: Mapping[str, tuple[str, ...]]       # refund | yield_pct
    evolution_metrics: Mapping[str, tuple[str, ...]]  # total_cost | riy_pct
    categories: Mapping[CostCategory, tuple[str, ...]]

    def all_labels(self, ttype: TableType) -> list[str]:
        if ttype is TableType.PERFORMANCE_SCENARIOS:
            pools = list(self.scenarios.values()) + list(self.perf_metrics.values())
        elif ttype is TableType.COSTS_EVOLUTION:
            pools = list(self.evolution_metrics.values())
        else:
            pools = list(self.categories.values())
        return [label for pool in pools for label in pool]

    @classmethod
    def from_dict(cls, d: Mapping) -> "LabelsConfig":
        try:
            perf = d["performance_scenarios"]
            return cls(
                initial_period=tuple(d["periods"]["initial"]),
                scenarios={Scenario(k): tuple(v) for k, v in perf["scenarios"].items()},
                perf_metrics={k: tuple(v) for k, v in perf["metrics"].items()},
                evolution_metrics={k: tuple(v) for k, v in d["costs_evolution"]["metrics"].items()},
                categories={CostCategory(k): tuple(v)
                            for k, v in d["costs_composition"]["categories"].items()},
            )
        except KeyError as e:
            raise SchemaError(f"labels config: missing field {e.args[0]!r}") from None


def load_labels_config(path: str | Path) -> LabelsConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path}: not valid JSON ({e.msg} at line {e.lineno})") from None
    return LabelsConfig.from_dict(data)


def default_labels_config() -> LabelsConfig:
    data = resources.files("kidex.data").joinpath("labels.json").read_text(encoding="utf-8")
    return LabelsConfig.from_dict(json.loads(data))


_PERIOD_RE = re.compile(r"(\d+)\s*(?:anni|anno|years|year)(?!\w)")


def _match_label(text: str, pools: Mapping, norm_cache: dict) -> Optional[object]:
    """Key of the first label pool matching the text at word boundaries."""
    hay = _norm_label(text)
    if not hay:
        return None
    for key, labels in pools.items():
        for label in labels:
            needle = norm_cache.setdefault(label, _norm_label(label))
            if _label_found(needle, hay):
                return key
    return None


def _period_columns(table: RawTable, labels: LabelsConfig) -> list[tuple[int, Period]]:
    """(column center x, period) pairs discovered from header-like cells."""
    found: list[tuple[int, int]] = []  # (center_x, years)
    initial_keys = [_norm_label(s) for s in labels.initial_period]
    for row in table.rows:
        for cell in row:
            norm = _norm_label(cell.text)
            if not norm:
                continue
            center = (cell.bbox.left + cell.bbox.right) // 2
            if any(_label_found(k, norm) for k in initial_keys):
                found.append((center, 1))
                continue
            m = _PERIOD_RE.search(norm)
            if m:
                found.append((center, int(m.group(1))))
    if not found:
        return []
    years = sorted({y for _, y in found})
    max_years = years[-1]
    out = []
    for center, y in found:
        if y == 1:
            period = Period.INITIAL
        elif y == max_years and max_years > 1:
            period = Period.RECOMMENDED
        else:
            period = Period.INTERMEDIATE
        out.append((center, period))
    return out


def _nearest_period(center_x: int, columns: list[tuple[int, Period]]) -> Period:
    return min(columns, key=lambda cp: abs(cp[0] - center_x))[1]


def _numeric_cells(row: Iterable[Cell], cmap: ConfusionMap,
                   locale_hint: str) -> list[tuple[Cell, Decimal, bool]]:
    out = []
    for cell in row:
        if not cell.text:
            continue
        repaired = fix_confusions(cell.text, cmap)
        value = normalize_number(repaired, locale_hint)
        if value is not None:
            out.append((cell, value, "%" in cell.text))
    return out


def map_to_record(ttype: TableType, table: RawTable, labels: Optional[LabelsConfig] = None,
                  cmap: Optional[ConfusionMap] = None,
                  locale_hint: str = "it") -> tuple[TypedRecord, list[str]]:
    """Map a reconstructed grid onto its typed record; returns (record, warnings).

    Rows are matched by label cells; numeric cells go to periods by column
    position. When no period header is readable, numeric cells are taken
    in column order with a warning. A record with nothing matched is still
    returned, all-missing.
    """
    labels = labels or default_labels_config()
    cmap = cmap or ConfusionMap()
    warnings: list[str] = []
    cache: dict = {}

    if ttype is TableType.COSTS_COMPOSITION:
        entries: dict[CostCategory, Optional[Decimal]] = {}
        for row in table.rows:
            category = None
            for cell in row:
                category = _match_label(cell.text, labels.categories, cache)
                if category is not None:
                    break
            numerics = _numeric_cells(row, cmap, locale_hint)
            if category is None:
                if numerics:
                    warnings.append(f"composition row unmatched: {[c.text for c in row]!r}")
                continue
            entries[category] = numerics[0][1] if numerics else None
            if len(numerics) > 1:
                warnings.append(f"composition row {category.value}: extra numeric cells ignored")
        if not entries:
            warnings.append("costs composition: nothing matched, all-missing record")
        return CostsCompositionRecord(entries), warnings

    columns = _period_columns(table, labels)
    if not columns:
        warnings.append("no period header readable; assigning by column order")
    period_order = [Period.INITIAL, Period.INTERMEDIATE, Period.RECOMMENDED]

    def assign(row_numerics, kind_of):
        """(period, value, kind) per numeric cell; without a period header the
        ordinal fallback counts per metric kind, so a refund and a yield in
        the same row both land on the same (first) period."""
        out = []
        counters: dict[str, int] = {}
        for cell, value, is_pct in row_numerics:
            kind = kind_of(is_pct)
            if columns:
                period = _nearest_period((cell.bbox.left + cell.bbox.right) // 2, columns)
            else:
                idx = counters.get(kind, 0)
                counters[kind] = idx + 1
                if idx >= len(period_order):
                    warnings.append(f"more numeric cells than periods: {cell.text!r} ignored")
                    continue
                period = period_order[idx]
            out.append((period, value, kind))
        return out

    if ttype is TableType.COSTS_EVOLUTION:
        ev_entries: dict[Period, PeriodCosts] = {}
        for row in table.rows:
            metric = None
            for cell in row:
                metric = _match_label(cell.text, labels.evolution_metrics, cache)
                if metric is not None:
                    break
            numerics = _numeric_cells(row, cmap, locale_hint)
            if metric is None or not numerics:
                if metric is None and numerics and not _row_is_header(row, labels):
                    warnings.append(f"evolution row unmatched: {[c.text for c in row]!r}")
                continue
            for period, value, kind in assign(numerics, lambda _pct: metric):
                prev = ev_entries.get(period, PeriodCosts())
                ev_entries[period] = PeriodCosts(
                    total_cost=value if kind == "total_cost" else prev.total_cost,
                    riy_pct=value if kind == "riy_pct" else prev.riy_pct,
                )
        if not ev_entries:
            warnings.append("costs evolution: nothing matched, all-missing record")
        return CostsEvolutionRecord(ev_entries), warnings

    # performance scenarios: the scenario label may sit on the first of a
    # pair of metric rows, so it carries forward until the next label
    perf_entries: dict[tuple[Scenario, Period], ScenarioCell] = {}
    current_scenario: Optional[Scenario] = None
    for row in table.rows:
        scenario = None
        for cell in row:
            scenario = _match_label(cell.text, labels.scenarios, cache)
            if scenario is not None:
                break
        if scenario is not None:
            current_scenario = scenario
        metric = None
        for cell in row:
            metric = _match_label(cell.text, labels.perf_metrics, cache)
            if metric is not None:
                break
        numerics = _numeric_cells(row, cmap, locale_hint)
        if not numerics:
            continue
        if current_scenario is None:
            if not _row_is_header(row, labels):
                warnings.append(f"performance row unmatched: {[c.text for c in row]!r}")
            continue
        kind_of = (lambda _pct: metric) if metric else (
            lambda is_pct: "yield_pct" if is_pct else "refund")
        for period, value, kind in assign(numerics, kind_of):
            key = (current_scenario, period)
            prev = perf_entries.get(key, ScenarioCell())
            perf_entries[key] = ScenarioCell(
                refund=value if kind == "refund" else prev.refund,
                yield_pct=value if kind == "yield_pct" else prev.yield_pct,
            )
    if not perf_entries:
        warnings.append("performance scenarios: nothing matched, all-missing record")
    return PerformanceScenariosRecord(perf_entries), warnings


def _row_is_header(row: Iterable[Cell], labels: LabelsConfig) -> bool:
    """Heuristic: a row whose only numerics sit in period-label cells."""
    for cell in row:
        norm = _norm_label(cell.text)
        if norm and (_PERIOD_RE.search(norm)
                     or any(_label_found(_norm_label(s), norm) for s in labels.initial_period)):
            return True
    return False


# ---------------------------------------------------------------------------
# Tables JSONL output
# ---------------------------------------------------------------------------

RECORD_TYPES = {
    TableType.PERFORMANCE_SCENARIOS: PerformanceScenariosRecord,
    TableType.COSTS_EVOLUTION: CostsEvolutionRecord,
    TableType.COSTS_COMPOSITION: CostsCompositionRecord,
}


def table_row_dict(doc_id: str, page: Optional[int], ttype: TableType,
                   record: Optional[TypedRecord]) -> dict:
    return {
        "doc_id": doc_id,
        "page": page,
        "type": ttype.value,
        "status": "extracted" if record is not None else "missing",
        "record": record.to_dict() if record is not None else None,
    }


def parse_table_row(d: Mapping) -> tuple[str, Optional[int], TableType, Optional[TypedRecord]]:
    for key in ("doc_id", "type", "status"):
        if key not in d:
            raise SchemaError(f"tables row: missing field {key!r}")
    ttype = TableType(d["type"])
    record = None
    if d["status"] == "extracted":
        if d.get("record") is None:
            raise SchemaError("tables row: status 'extracted' requires a record")
        record = RECORD_TYPES[ttype].from_dict(d["record"])
    return d["doc_id"], d.get("page"), ttype, record


def write_tables_jsonl(rows: Iterable[dict], path: str | Path) -> None:
    text = "".join(json.dumps(row, ensure_ascii=False) + "\n" for row in rows)
    Path(path).write_text(text, encoding="utf-8")


def read_tables_jsonl(path: str | Path) -> list[dict]:
    rows = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rows.append(json.loads(line))
        except json.JSONDecodeError as e:
            raise SchemaError(f"{path}:{lineno}: not valid JSON ({e.msg})") from None
    return rows
