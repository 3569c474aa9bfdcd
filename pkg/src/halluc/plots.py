"""Figures and markdown digest for a finished run directory."""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .harness import RunRecord, SummaryRow, summarize

_GAP = "-"


def plot_accuracy_vs_n_shot(rows: list[SummaryRow], path: str) -> bool:
    """One error-bar line per (arm, m); skipped when only a single n_shot ran."""
    n_values = sorted({r.n_shot for r in rows})
    if len(n_values) < 1:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    series: dict[tuple, list[SummaryRow]] = {}
    for r in rows:
        series.setdefault((r.arm, r.m), []).append(r)
    for (arm, m), pts in sorted(series.items()):
        pts = sorted(pts, key=lambda r: r.n_shot)
        label = arm if arm == "real-only" else f"{arm} (m={m})"
        ax.errorbar(
            [p.n_shot for p in pts],
            [p.mean_top1 for p in pts],
            yerr=[p.std_top1 for p in pts],
            marker="o",
            capsize=3,
            label=label,
        )
    ax.set_xlabel("n-shot")
    ax.set_ylabel("top-1 accuracy")
    ax.set_xticks(n_values)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def plot_accuracy_vs_m(rows: list[SummaryRow], path: str) -> bool:
    """Augmented accuracy against m, one line per n_shot, with the real-only
    baseline drawn as a horizontal dashed line.  Needs at least two m values."""
    aug = [r for r in rows if r.arm == "augmented"]
    if len({r.m for r in aug}) < 2:
        return False
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for n_shot in sorted({r.n_shot for r in aug}):
        pts = sorted((r for r in aug if r.n_shot == n_shot), key=lambda r: r.m)
        ax.errorbar(
            [p.m for p in pts],
            [p.mean_top1 for p in pts],
            yerr=[p.std_top1 for p in pts],
            marker="o",
            capsize=3,
            label=f"augmented, n={n_shot}",
        )
        base = [r for r in rows if r.arm == "real-only" and r.n_shot == n_shot]
        if base:
            ax.axhline(base[0].mean_top1, linestyle="--", alpha=0.5, color="gray")
    ax.set_xlabel("m (hallucinations kept per class)")
    ax.set_ylabel("top-1 accuracy")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return True


def _delta_table(record: RunRecord, n_shot: int, m: int) -> list[str]:
    real = {c.seed: c.report.top1_accuracy for c in record.cells
            if c.arm == "real-only" and c.n_shot == n_shot}
    aug = {c.seed: c.report.top1_accuracy for c in record.cells
           if c.arm == "augmented" and c.n_shot == n_shot and c.m == m}
    lines = [
        f"### n_shot={n_shot}, m={m}",
        "",
        "| seed | real-only | augmented | delta |",
        "|---:|---:|---:|---:|",
    ]
    for seed in sorted(set(real) | set(aug)):
        r, a = real.get(seed), aug.get(seed)
        r_s = f"{r:.4f}" if r is not None else _GAP
        a_s = f"{a:.4f}" if a is not None else _GAP
        d_s = f"{a - r:+.4f}" if r is not None and a is not None else _GAP
        lines.append(f"| {seed} | {r_s} | {a_s} | {d_s} |")
    lines.append("")
    return lines


def write_report(record: RunRecord, out_dir: str) -> str:
    """Write report.md (plus figures) into out_dir; returns the report path."""
    os.makedirs(out_dir, exist_ok=True)
    rows = summarize(record)
    lines = [
        "# Run report",
        "",
        f"config hash: `{record.config_hash}`",
        "",
        "## Summary (mean over master seeds, population std)",
        "",
        "| arm | n_shot | m | seeds | top-1 |",
        "|---|---:|---:|---:|---|",
    ]
    for r in rows:
        lines.append(f"| {r.arm} | {r.n_shot} | {r.m} | {r.seeds} | "
                     f"{r.mean_top1:.4f} ± {r.std_top1:.4f} |")
    lines.append("")
    pairs = sorted({(r.n_shot, r.m) for r in rows if r.arm == "augmented" and r.m > 0})
    if pairs:
        lines.append("## Per-seed comparison")
        lines.append("")
        for n_shot, m in pairs:
            lines.extend(_delta_table(record, n_shot, m))
    figures = []
    if plot_accuracy_vs_n_shot(rows, os.path.join(out_dir, "accuracy_vs_n_shot.png")):
        figures.append("accuracy_vs_n_shot.png")
    if plot_accuracy_vs_m(rows, os.path.join(out_dir, "accuracy_vs_m.png")):
        figures.append("accuracy_vs_m.png")
    else:
        lines.append("_accuracy_vs_m.png omitted: fewer than two m values in this run._")
        lines.append("")
    if figures:
        lines.append("## Figures")
        lines.append("")
        for name in figures:
            lines.append(f"![{name}]({name})")
        lines.append("")
    path = os.path.join(out_dir, "report.md")
    tmp = path + f".tmp-{os.getpid()}"
    with open(tmp, "w") as f:
        f.write("\n".join(lines))
    os.replace(tmp, path)
    return path
