"""Run directory layout: ``run.json``, per-fold curves and models, summary tables.

Everything except ``run.json`` and ``models/`` is derived from ``run.json``
alone, so :func:`write_report` regenerates it byte-for-byte from a finished
run.
"""

from __future__ import annotations

import csv
import io
import json
import os
from pathlib import Path

from ._canon import fmt9
from .errors import DataError
from .features import _write_text
from .metrics import roc_curve
from .summary import recompute

RUN_FILE = "run.json"
TABLE2_METRICS = ("accuracy", "precision", "recall", "f1", "fpr")
HIGHER_IS_BETTER = {"accuracy": True, "precision": True, "recall": True, "f1": True,
                    "fpr": False, "eer": False, "margin": True, "separability": True,
                    "security": True}


def dump_json(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True, ensure_ascii=False) + "\n"


def _csv(rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow([fmt9(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def write_run(directory: str | os.PathLike, record: dict, svms: list[dict]) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _write_text(directory / RUN_FILE, dump_json(record))
    models_dir = directory / "models"
    models_dir.mkdir(exist_ok=True)
    for svm in svms:
        _write_text(models_dir / f"{svm['model']}_fold{svm['fold']}.json", dump_json(svm))
    write_report(directory, record)


def load_run(directory: str | os.PathLike) -> dict:
    path = Path(directory) / RUN_FILE
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise DataError(f"{directory} is not a completed run directory (no {RUN_FILE})") from exc
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def table2(run: dict) -> list[list]:
    header = ["dataset", "model"]
    for m in TABLE2_METRICS:
        header += [m, f"{m}_std"]
    header += ["eer", "eer_std", "eer_pooled"]
    rows = [header]
    for name in sorted(run["models"]):
        s = run["models"][name]["summary"]
        row = [run["dataset"]["name"], name]
        for m in TABLE2_METRICS + ("eer",):
            row += [s[m]["mean"], s[m]["std"]]
        rows.append(row + [s["eer_pooled"]])
    return rows


def table3(run: dict) -> list[list]:
    rows = [["dataset", "model", "margin", "separability", "security"]]
    for name in sorted(run["models"]):
        d = run["diagnostics"]["models"][name]
        rows.append([run["dataset"]["name"], name, d["margin"], d["sep_score"], d["sec_score"]])
    return rows


def table4(run: dict) -> list[list]:
    rows = [["dataset", "baseline", "challenger", "delta_eer", "delta_fpr", "cohens_d", "t",
             "dof", "p", "effect"]]
    for c in run["comparisons"]:
        rows.append([run["dataset"]["name"], c["baseline"], c["challenger"], c["delta_eer"],
                     c["delta_fpr"], c["cohens_d"], c["t"], c["dof"], c["p"], c["effect"]])
    return rows


def curve_files(run: dict) -> dict[str, str]:
    out = {}
    for name in sorted(run["models"]):
        for fold in run["models"][name]["folds"]:
            curve = roc_curve(fold["scores"], fold["labels"])
            k = fold["fold"]
            roc = [["threshold", "fpr", "tpr", "fnr"]]
            roc += [[float(t), float(f), float(p), float(n)]
                    for t, f, p, n in zip(curve.thresholds, curve.fpr, curve.tpr, curve.fnr)]
            det = [["fpr", "fnr"]] + [[float(f), float(n)] for f, n in zip(*curve.det)]
            out[f"roc_{name}_{k}.csv"] = _csv(roc)
            out[f"det_{name}_{k}.csv"] = _csv(det)
    return out


def write_report(directory: str | os.PathLike, run: dict) -> dict[str, str]:
    """(Re)write tables and curve files derived from ``run``; returns name -> text."""
    directory = Path(directory)
    files = {"table2.csv": _csv(table2(run)), "table3.csv": _csv(table3(run)),
             "table4.csv": _csv(table4(run))}
    curves = directory / "curves"
    curves.mkdir(parents=True, exist_ok=True)
    for name, text in curve_files(run).items():
        _write_text(curves / name, text)
    for name, text in files.items():
        _write_text(directory / name, text)
    return files


def report(directory: str | os.PathLike) -> dict:
    """Validate a finished run against its raw scores and regenerate its reports."""
    run = load_run(directory)
    try:
        recompute(run)
    except (KeyError, TypeError) as exc:
        raise DataError(f"incomplete run record in {directory}: missing {exc}") from exc
    write_report(directory, run)
    return run


def _mark_best(rows: list[list], columns: dict[int, bool]) -> list[list[str]]:
    """Format numbers to 3 decimals and star the best value of each listed column."""
    body = rows[1:]
    best = {}
    for col, higher in columns.items():
        vals = [r[col] for r in body]
        best[col] = max(vals) if higher else min(vals)
    out = [list(rows[0])]
    for r in body:
        cells = []
        for i, v in enumerate(r):
            if isinstance(v, float):
                text = f"{v:.3f}"
                if i in best and len(body) > 1 and v == best[i]:
                    text += "*"
                cells.append(text)
            else:
                cells.append(str(v))
        out.append(cells)
    return out


def _render(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def text_tables(run: dict) -> str:
    t2 = table2(run)
    cols2 = {i: HIGHER_IS_BETTER[h] for i, h in enumerate(t2[0]) if h in HIGHER_IS_BETTER}
    t3 = table3(run)
    cols3 = {i: HIGHER_IS_BETTER[h] for i, h in enumerate(t3[0]) if h in HIGHER_IS_BETTER}
    parts = ["Detection performance (mean and std over folds; * marks the best value)",
             _render(_mark_best(t2, cols2)),
             "",
             "Diagnostics (margins are within-kernel quantities)",
             _render(_mark_best(t3, cols3))]
    t4 = table4(run)
    if len(t4) > 1:
        parts += ["", "Kernel comparisons on per-fold EER (delta = baseline - challenger)",
                  _render(_mark_best(t4, {}))]
    return "\n".join(parts) + "\n"
