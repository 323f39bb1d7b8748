"""SVG rendering of experiment CSVs. Presentation only: values are plotted as read."""

from __future__ import annotations

import csv
import json
import logging
import warnings
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


def _read_csv(path: Path) -> dict:
    with path.open() as fh:
        rows = [line for line in fh if not line.startswith("#")]
    reader = csv.DictReader(rows)
    cols: dict[str, list] = {name: [] for name in reader.fieldnames or []}
    for row in reader:
        for k, v in row.items():
            cols[k].append(v)
    out = {}
    for k, v in cols.items():
        try:
            out[k] = np.array(v, dtype=float)
        except ValueError:
            out[k] = np.array(v)
    return out


def _figure(*args, **kw):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt, plt.subplots(*args, **kw)


def _save(plt, fig, path: Path) -> Path:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _plot_fig3(out: Path, entries) -> list[Path]:
    mc = [e for e in entries if e["kind"] == "fig3-montecarlo"]
    sweeps = [e for e in entries if e["kind"] == "semiclassical-sweep"]
    plt, (fig, ax) = _figure(figsize=(5, 3.5))
    for e in mc:
        d = _read_csv(out / e["path"])
        ax.errorbar(d["w_over_gc"], d["g2_zero"], yerr=d["g2_err"], fmt="o", color="tab:green", label="Monte Carlo")
    for e, color in zip(sweeps, ("tab:blue", "tab:orange", "tab:red")):
        d = _read_csv(out / e["path"])
        ok = d["flag"] == "ok"
        ax.plot(d["w_over_gc"][ok], d["g2_zero"][ok], "-", color=color, label=f"pair theory N={e['n_atoms']}")
        # unreliable below threshold: drawn dashed
        ax.plot(d["w_over_gc"][~ok], d["g2_zero"][~ok], "--", color=color, lw=0.8)
    ax.axhline(1.0, color="gray", ls="--", lw=0.8)
    ax.axhline(2.0, color="gray", ls="--", lw=0.8)
    top = 3.0
    for e in mc:
        d = _read_csv(out / e["path"])
        finite = np.isfinite(d["g2_zero"])
        if finite.any():
            top = max(top, float(np.max(d["g2_zero"][finite] + np.nan_to_num(d["g2_err"][finite]))) + 0.2)
    ax.set_ylim(0.0, top)
    ax.set_xscale("log")
    ax.set_xlabel(r"$w/\Gamma_c$")
    ax.set_ylabel(r"$g^{(2)}(0)$")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return [_save(plt, fig, out / "fig3.svg")]


def _plot_fig4(out: Path, entries) -> list[Path]:
    plt, (fig, axes) = _figure(3, 1, figsize=(5, 8), sharex=True)
    for e, style in zip(entries, ("-", "--", "-.")):
        d = _read_csv(out / e["path"])
        for ax, col in zip(axes, ("s", "p", "z2_minus_s2")):
            ax.plot(d["w_over_gc"], d[col], style, label=f"N={e['n_atoms']}")
    labels = (
        r"$\langle\sigma_z^{(1)}\rangle$",
        r"$\langle\sigma_+^{(1)}\sigma_-^{(2)}\rangle$",
        r"$\langle\sigma_z^{(1)}\sigma_z^{(2)}\rangle-\langle\sigma_z^{(1)}\rangle^2$",
    )
    for ax, label, tag in zip(axes, labels, "abc"):
        ax.set_ylabel(label)
        ax.set_xscale("log")
        ax.set_title(f"({tag})", loc="left", fontsize=9)
    axes[-1].set_xlabel(r"$w/\Gamma_c$")
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    return [_save(plt, fig, out / "fig4.svg")]


def _plot_g2_tau(out: Path, entry) -> Path:
    d = _read_csv(out / entry["path"])
    plt, (fig, ax) = _figure(figsize=(5, 3.5))
    ax.errorbar(d["tau"], d["g2"], yerr=d["g2_err"], fmt=".", ms=3, label="Monte Carlo")
    if "thermal" in d:
        ax.plot(d["tau"], d["thermal"], color="purple", label="thermal light")
    ax.axhline(1.0, color="gray", ls="--", lw=0.8)
    ax.set_xlabel(r"$\tau\,\Gamma_c$")
    ax.set_ylabel(r"$g^{(2)}(\tau)$")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(plt, fig, out / (Path(entry["path"]).stem + ".svg"))


def emit_plots(manifest, out_dir: str | Path | None = None) -> dict:
    """Render the CSVs listed in a manifest (dict or path to ``manifest.json``).

    Returns ``{"rendered": [...], "missing": [...]}``. Missing CSVs are
    listed and skipped; an empty manifest only triggers a warning.
    """
    if not isinstance(manifest, dict):
        path = Path(manifest)
        out_dir = out_dir or path.parent
        manifest = json.loads(path.read_text())
    out = Path(out_dir or ".")
    entries = [e for e in manifest.get("outputs", []) if str(e.get("path", "")).endswith(".csv")]
    if not entries:
        warnings.warn("manifest lists no CSV outputs; nothing to plot", stacklevel=2)
        return {"rendered": [], "missing": []}
    missing = [e["path"] for e in entries if not (out / e["path"]).exists()]
    present = [e for e in entries if e["path"] not in missing]
    rendered: list[Path] = []
    fig3 = [e for e in present if e["kind"] in ("fig3-montecarlo",) or (e["kind"] == "semiclassical-sweep" and e["path"].startswith("fig3"))]
    if fig3:
        rendered += _plot_fig3(out, fig3)
    fig4 = [e for e in present if e["kind"] == "fig4-correlations"]
    if fig4:
        rendered += _plot_fig4(out, fig4)
    for e in present:
        if e["kind"] == "g2-tau":
            rendered.append(_plot_g2_tau(out, e))
    sweeps = [e for e in present if e["kind"] == "semiclassical-sweep" and not e["path"].startswith("fig3")]
    if sweeps:
        plt, (fig, ax) = _figure(figsize=(5, 3.5))
        for e in sweeps:
            d = _read_csv(out / e["path"])
            ok = d["flag"] == "ok"
            (line,) = ax.plot(d["w_over_gc"][ok], d["g2_zero"][ok], label=f"N={e['n_atoms']}")
            ax.plot(d["w_over_gc"][~ok], d["g2_zero"][~ok], "--", color=line.get_color(), lw=0.8)
        ax.set_xscale("log")
        ax.set_xlabel(r"$w/\Gamma_c$")
        ax.set_ylabel(r"$g^{(2)}(0)$")
        ax.legend(fontsize=7)
        fig.tight_layout()
        rendered.append(_save(plt, fig, out / "sweep.svg"))
    for m in missing:
        log.warning("missing CSV %s", m)
    return {"rendered": [str(p) for p in rendered], "missing": missing}
