"""Waterfall and complexity figures rendered from sweep CSV files.

The CSV is the canonical output; these helpers turn one sweep file into
PNG figures saved next to it (or into an explicit directory).
"""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

__all__ = ["read_sweep_csv", "render_report"]


def read_sweep_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for key in ("snr_db", "ber", "bler", "mean_nodes"):
            row[key] = float(row[key])
        for key in ("frames", "bit_errors", "block_errors"):
            row[key] = int(row[key])
        for key in ("layer_ber_0", "layer_ber_1"):
            row[key] = float(row[key]) if row.get(key) else None
    return rows


def _by_scenario(rows):
    groups = {}
    for row in rows:
        groups.setdefault(row["scenario"], []).append(row)
    for rows_ in groups.values():
        rows_.sort(key=lambda r: r["snr_db"])
    return groups


def _semilogy_per_scenario(groups, key, ylabel, title):
    fig, ax = plt.subplots(figsize=(6.4, 4.4))
    for name, rows in sorted(groups.items()):
        xs = [r["snr_db"] for r in rows]
        ys = [r[key] for r in rows]
        if any(y is not None and y > 0 for y in ys):
            ax.semilogy(xs, ys, marker="o", label=name)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.4)
    if ax.get_legend_handles_labels()[0]:
        ax.legend()
    fig.tight_layout()
    return fig


def render_report(csv_path, outdir=None):
    """Render BLER/BER, node-count, and (if present) per-layer BER figures.

    Returns the list of files written.
    """
    csv_path = Path(csv_path)
    outdir = Path(outdir) if outdir else csv_path.parent
    outdir.mkdir(parents=True, exist_ok=True)
    rows = read_sweep_csv(csv_path)
    stem = csv_path.stem
    written = []
    if not rows:
        return written
    groups = _by_scenario(rows)

    fig = _semilogy_per_scenario(groups, "bler", "BLER", f"{stem}: block error rate")
    path = outdir / f"{stem}_bler.png"
    fig.savefig(path, dpi=140)
    plt.close(fig)
    written.append(path)

    fig = _semilogy_per_scenario(groups, "ber", "BER", f"{stem}: bit error rate")
    path = outdir / f"{stem}_ber.png"
    fig.savefig(path, dpi=140)
    plt.close(fig)
    written.append(path)

    if any(r["mean_nodes"] > 0 for r in rows):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for name, rows_ in sorted(groups.items()):
            ax.plot([r["snr_db"] for r in rows_], [r["mean_nodes"] for r in rows_],
                    marker="s", label=name)
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("mean visited nodes per vector use")
        ax.set_title(f"{stem}: sphere-search complexity")
        ax.grid(True, alpha=0.4)
        ax.legend()
        fig.tight_layout()
        path = outdir / f"{stem}_nodes.png"
        fig.savefig(path, dpi=140)
        plt.close(fig)
        written.append(path)

    if any(r["layer_ber_0"] is not None for r in rows):
        fig, ax = plt.subplots(figsize=(6.4, 4.4))
        for name, rows_ in sorted(groups.items()):
            for layer in (0, 1):
                ys = [r[f"layer_ber_{layer}"] for r in rows_]
                if any(y is not None and y > 0 for y in ys):
                    ax.semilogy([r["snr_db"] for r in rows_], ys,
                                marker="o" if layer == 0 else "^",
                                label=f"{name} layer {layer}")
        ax.set_xlabel("SNR (dB)")
        ax.set_ylabel("per-layer demapper BER")
        ax.set_title(f"{stem}: per-layer bit error rate")
        ax.grid(True, which="both", alpha=0.4)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = outdir / f"{stem}_layer_ber.png"
        fig.savefig(path, dpi=140)
        plt.close(fig)
        written.append(path)
    return written
