"""Aligned plain-text tables for corpus statistics and evaluation reports."""
from __future__ import annotations

from collections.abc import Mapping, Sequence

from bugsolve.analysis import TG_BUCKETS, WhenAccuracyTable
from bugsolve.filters import CorpusStats
from bugsolve.metrics import MetricReport

SPLITS = ("train", "valid", "test", "total")

STATS_ROWS = (
    ("Projects", "n_projects", "count"),
    ("Examples", "n_examples", "count"),
    ("  # Commit messages", "n_commit_messages", "count"),
    ("  # PR titles", "n_pr_titles", "count"),
    ("Avg T", "avg_T", "avg"),
    ("Avg t_g", "avg_t_g", "avg"),
    ("Avg utterance length (#tokens)", "avg_utterance_len", "avg"),
    ("Avg title length (#tokens)", "avg_title_len", "avg"),
    ("Avg description length (#tokens)", "avg_description_len", "avg"),
)


def render(header: Sequence[str], rows: Sequence[Sequence[str]], rules: Sequence[int] = ()) -> str:
    """First column left-aligned, the rest right-aligned. ``rules`` lists row
    indices that get a dashed line above them."""
    width = [max(len(r[i]) for r in [header, *rows]) for i in range(len(header))]

    def line(cells: Sequence[str]) -> str:
        parts = [cells[0].ljust(width[0])] + [c.rjust(w) for c, w in zip(cells[1:], width[1:])]
        return "  ".join(parts).rstrip()

    bar = "-" * (sum(width) + 2 * (len(width) - 1))
    out = [bar, line(header), bar]
    for i, row in enumerate(rows):
        if i in rules:
            out.append(bar)
        out.append(line(row))
    out.append(bar)
    return "\n".join(out) + "\n"


def pct(value: float | None) -> str:
    return "-" if value is None else f"{value:.1f}"


def _stat(stats: CorpusStats, key: str, kind: str) -> str:
    v = getattr(stats, key)
    return f"{v:,}" if kind == "count" else f"{v:.1f}"


def stats_table(full: Mapping[str, CorpusStats], filtered: Mapping[str, CorpusStats] | None = None) -> str:
    """Corpus statistics per split; filtered-subset values go in parentheses."""
    cols = [s for s in SPLITS if s in full]
    rows = []
    for label, key, kind in STATS_ROWS:
        row = [label]
        for s in cols:
            cell = _stat(full[s], key, kind)
            if filtered is not None and s in filtered:
                cell += f" ({_stat(filtered[s], key, kind)})"
            row.append(cell)
        rows.append(row)
    return render(["", *(s.capitalize() for s in cols)], rows)


def novel_ngram_table(groups: Mapping[str, Mapping[str, Mapping[int, float | None]]], ns: Sequence[int] = (1, 2, 3, 4)) -> str:
    labels = {"title": "Title", "utterances": "U_1..U_tg", "title+utterances": "Title + U_1..U_tg"}
    rows, rules = [], []
    for g, table in groups.items():
        if rows:
            rules.append(len(rows))
        for key, label in labels.items():
            rows.append([g, label, *(pct(table[key].get(n)) for n in ns)])
    return render(["", "", *map(str, ns)], rows, rules)


def overlap_table(rows: Mapping[str, Mapping[int, tuple[float, float] | None]], ns: Sequence[int] = (1, 2)) -> str:
    """Per model: % of output n-grams in the title, then % in U_1..U_tg only."""
    header = ["Model", *(f"Title {n}" for n in ns), *(f"U_1..U_tg only {n}" for n in ns)]
    body = []
    for model, vals in rows.items():
        cells = [model]
        cells += [pct(vals[n][0]) if vals.get(n) else "-" for n in ns]
        cells += [pct(vals[n][1]) if vals.get(n) else "-" for n in ns]
        body.append(cells)
    return render(header, body)


def when_table(columns: Mapping[str, WhenAccuracyTable]) -> str:
    names = list(columns)
    rows = [
        ["t_p < t_g", *(pct(columns[c].pct_tp_lt_tg) for c in names)],
        ["t_p = None", *(pct(columns[c].pct_tp_none) for c in names)],
        ["t_p = t_g", *(pct(columns[c].pct_tp_eq_tg) for c in names)],
    ]
    for b in TG_BUCKETS:
        label = f"  t_g = {b}" if b != "≥5" else "  t_g ≥ 5"
        rows.append([label, *(pct(columns[c].by_tg[b]) for c in names)])
    return render(["", *names], rows, rules=[2])


METRIC_LABELS = {"bleu4": "BLEU-4", "meteor": "METEOR", "rouge1_f": "ROUGE-1", "rouge2_f": "ROUGE-2", "rougeL_f": "ROUGE-L"}


def metric_table(reports: Mapping[str, MetricReport], keys: Sequence[str] | None = None) -> str:
    """One row per system, scores scaled to 0..100."""
    first = next(iter(reports.values()))
    keys = list(keys or first.aggregate)
    rows = [[name, *(f"{100 * r.aggregate[k]:.1f}" for k in keys)] for name, r in reports.items()]
    return render(["", *(METRIC_LABELS.get(k, k) for k in keys)], rows)


def pipeline_table(groups: Mapping[str, tuple[MetricReport, MetricReport]], keys: Sequence[str] = ("bleu4", "meteor", "rougeL_f")) -> str:
    """Scores with context at the predicted step versus the gold step."""
    rows, rules = [], []
    for g, (at_tp, at_tg) in groups.items():
        if rows:
            rules.append(len(rows))
        for label, rep in (("@t_p", at_tp), ("@t_g", at_tg)):
            rows.append([g, label, *(f"{100 * rep.aggregate[k]:.1f}" for k in keys)])
    return render(["", "", *(METRIC_LABELS[k] for k in keys)], rows, rules)


def bucket_table(buckets: Mapping[int, object], keys: Sequence[str] = ("bleu4", "meteor", "rougeL_f")) -> str:
    rows = [[str(b), str(s.n), *(f"{100 * s.aggregate[k]:.1f}" for k in keys)] for b, s in sorted(buckets.items())]
    return render(["Bucket", "n", *(METRIC_LABELS[k] for k in keys)], rows)
