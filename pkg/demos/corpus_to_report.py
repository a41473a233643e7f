"""Generate a small gold corpus, run both pipelines, score the predictions.

Run:  python demos/corpus_to_report.py
"""
import tempfile
from pathlib import Path

from kidex.cli import main

with tempfile.TemporaryDirectory() as tmp:
    corpus = Path(tmp) / "corpus"
    pred = Path(tmp) / "pred"
    pred.mkdir()

    # a 10% noise rate drops some header-cell masks, so a few tables go
    # missing even though their numerical cells were detected fine
    main(["gen", "--n", "25", "--seed", "42", "--noise", "0.1", "--out", str(corpus)])
    main(["annotate", "--in", str(corpus / "docs"), "--out", str(pred / "fields.csv")])
    main(["tables", "--masks", str(corpus / "masks"), "--pages", str(corpus / "docs"),
          "--out", str(pred / "tables.jsonl")])
    main(["eval", "--gold", str(corpus / "gold"), "--pred", str(pred)])
