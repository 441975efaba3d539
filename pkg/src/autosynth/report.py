"""Plot-ready summaries of search history files.

Turns a history CSV into a per-trial report: the monotone best-score series
plus running quantiles of every child score evaluated up to that trial
(the history does not record the initial pool, so quantiles summarize the
evaluated children).  The report is written as CSV for downstream tools and
rendered to PNG figures alongside it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

REPORT_HEADER = (
    "trial,best_score,child_min,child_q25,child_median,child_q75,child_max"
)


def build_report(rows: list[dict]) -> list[dict]:
    """Per-trial best score and running child-score quantiles."""
    report = []
    scores: list[float] = []
    for row in rows:
        scores.append(row["child_score"])
        q = np.percentile(scores, [0, 25, 50, 75, 100])
        report.append(
            {
                "trial": row["trial"],
                "best_score": row["best_score"],
                "child_min": float(q[0]),
                "child_q25": float(q[1]),
                "child_median": float(q[2]),
                "child_q75": float(q[3]),
                "child_max": float(q[4]),
            }
        )
    return report


def write_report_csv(report: list[dict], path) -> None:
    lines = [REPORT_HEADER]
    for r in report:
        lines.append(
            f"{r['trial']},{r['best_score']!r},{r['child_min']!r},"
            f"{r['child_q25']!r},{r['child_median']!r},{r['child_q75']!r},"
            f"{r['child_max']!r}"
        )
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def render_figures(report: list[dict], out_dir) -> list[Path]:
    """Render the best-score curve and the quantile band to PNG files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trials = [r["trial"] for r in report]
    best = [r["best_score"] for r in report]

    fig, ax = plt.subplots(figsize=(6, 4))
    ax.step(trials, best, where="post", color="tab:blue")
    ax.set_xlabel("trial")
    ax.set_ylabel("best score")
    ax.set_title("Best fitness so far")
    ax.grid(True, alpha=0.3)
    best_path = out_dir / "best_score.png"
    fig.tight_layout()
    fig.savefig(best_path, dpi=120)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6, 4))
    q25 = [r["child_q25"] for r in report]
    q75 = [r["child_q75"] for r in report]
    med = [r["child_median"] for r in report]
    lo = [r["child_min"] for r in report]
    ax.fill_between(trials, q25, q75, alpha=0.3, color="tab:orange", label="q25-q75")
    ax.plot(trials, med, color="tab:orange", label="median")
    ax.plot(trials, lo, color="tab:green", linestyle="--", label="min")
    ax.set_xlabel("trial")
    ax.set_ylabel("child score (running)")
    ax.set_title("Evaluated-score quantiles")
    ax.legend()
    ax.grid(True, alpha=0.3)
    quant_path = out_dir / "score_quantiles.png"
    fig.tight_layout()
    fig.savefig(quant_path, dpi=120)
    plt.close(fig)

    return [best_path, quant_path]
