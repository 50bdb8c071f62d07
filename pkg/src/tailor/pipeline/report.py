"""Self-contained HTML report over the evaluation metrics."""

from __future__ import annotations

import html

from .config import ExperimentConfig

_CSS = """
body { font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 900px; color: #222; }
h1 { font-size: 1.5rem; } h2 { font-size: 1.15rem; margin-top: 2rem; }
table { border-collapse: collapse; margin: 0.8rem 0; }
td, th { border: 1px solid #ccc; padding: 0.35rem 0.7rem; text-align: right; }
th { background: #f2f2f2; }
td:first-child, th:first-child { text-align: left; }
.pos { color: #0a7a2f; font-weight: 600; } .neg { color: #b00020; }
img, object { max-width: 420px; }
.small { color: #666; font-size: 0.85rem; }
"""


def _fmt(x, digits=3):
    if x is None:
        return "-"
    return f"{x:.{digits}f}"


def render_report(cfg: ExperimentConfig, metrics: dict) -> str:
    rows = []
    for set_name, entry in metrics["sets"].items():
        t = entry.get("tailor", {})
        b = entry.get("baseline", {})
        d = entry.get("delta", {})
        delta = d.get("auc_delta")
        cls = "pos" if (delta or 0) > 0 else "neg"
        rows.append(
            f"<tr><td>{html.escape(set_name)}</td>"
            f"<td>{_fmt(t.get('auc'))} [{_fmt(t.get('ci', [None, None])[0])},"
            f" {_fmt(t.get('ci', [None, None])[1])}]</td>"
            f"<td>{_fmt(b.get('auc'))} [{_fmt(b.get('ci', [None, None])[0])},"
            f" {_fmt(b.get('ci', [None, None])[1])}]</td>"
            f"<td class='{cls}'>{_fmt(delta)}</td>"
            f"<td>{_fmt(d.get('delong_p'), 4)}</td>"
            f"<td>{_fmt(d.get('permutation_p'), 4)}</td>"
            f"<td>{t.get('n', '-')}</td></tr>")
    table = ("<table><tr><th>test set</th><th>ensemble AUC [95% CI]</th>"
             "<th>baseline AUC [95% CI]</th><th>&Delta;AUC</th><th>DeLong p</th>"
             "<th>permutation p</th><th>lesions</th></tr>" + "".join(rows) + "</table>")

    fixed_rows = []
    for set_name, entry in metrics["sets"].items():
        fs = entry.get("fixed_sens", {})
        if fs.get("unattainable"):
            fixed_rows.append(f"<tr><td>{html.escape(set_name)}</td>"
                              f"<td colspan=3>target unattainable</td></tr>")
            continue
        fixed_rows.append(
            f"<tr><td>{html.escape(set_name)}</td>"
            f"<td>{_fmt(fs.get('target'), 2)}</td>"
            f"<td>{_fmt(fs.get('tailor', {}).get('specificity'))}</td>"
            f"<td>{_fmt(fs.get('baseline', {}).get('specificity'))}</td></tr>")
    fixed = ("<table><tr><th>test set</th><th>sensitivity target</th>"
             "<th>ensemble specificity</th><th>baseline specificity</th></tr>"
             + "".join(fixed_rows) + "</table>")

    svgs = "".join(f'<object data="../eval/roc_{name}.svg" type="image/svg+xml"></object>'
                   for name in metrics["sets"])

    subtype_html = ""
    overall = metrics["sets"].get("overall", {})
    if "subtypes" in overall:
        rows = []
        subtypes = overall["subtypes"]["tailor"]
        baseline_sub = overall["subtypes"]["baseline"]
        for name in sorted(subtypes):
            cell = subtypes[name]
            bcell = baseline_sub.get(name, {"correct": 0, "total": cell["total"]})
            rows.append(f"<tr><td>{html.escape(name)}</td><td>{cell['total']}</td>"
                        f"<td>{cell['correct']}</td><td>{bcell['correct']}</td></tr>")
        subtype_html = ("<h2>Per-subtype correct counts (fixed sensitivity)</h2>"
                        "<table><tr><th>subtype</th><th>lesions</th>"
                        "<th>ensemble correct</th><th>baseline correct</th></tr>"
                        + "".join(rows) + "</table>")

    return f"""<!doctype html>
<html><head><meta charset="utf-8"><title>Run report</title><style>{_CSS}</style></head>
<body>
<h1>Pipeline run report</h1>
<p class="small">seed {cfg.seed}; output root {html.escape(str(cfg.out_root))}</p>
<h2>AUC comparison: synthetic-data ensemble vs real-data baseline</h2>
{table}
<h2>Specificity at fixed sensitivity</h2>
{fixed}
{subtype_html}
<h2>ROC curves</h2>
{svgs}
</body></html>
"""
