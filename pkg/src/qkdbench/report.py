"""Two-column series files and figures rendered from a scenario report."""
from __future__ import annotations

from pathlib import Path

from .errors import UnknownMetric


def available_metrics(report: dict) -> list[str]:
    return sorted(report.get("series", {}))


def series_text(report: dict, metric: str) -> str:
    """Render one series as tab-separated ``x y`` lines under a ``#`` header."""
    series = report.get("series", {})
    if metric not in series:
        raise UnknownMetric(f"no series {metric!r} in report; available: {available_metrics(report) or 'none'}")
    s = series[metric]
    lines = [f"# {s['x_label']}\t{s['y_label']}"]
    lines += [f"{x!r}\t{y!r}" for x, y in zip(s["x"], s["y"])]
    return "\n".join(lines) + "\n"


def emit_series(report: dict, metric: str, path: str | Path | None = None) -> str:
    """Return the series text and, with ``path``, write it there too."""
    text = series_text(report, metric)
    if path is not None:
        Path(path).write_text(text)
    return text


def read_series(path: str | Path) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#") or not line.strip():
            continue
        x, y = line.split("\t")
        xs.append(float(x))
        ys.append(float(y))
    return xs, ys


_TITLES = {
    "blinding": "Blinded detector response",
    "lsec_vs_loss": "Secret key length against channel loss",
    "filter_window": "Eve's bit agreement against software filter window",
}


def render_figure(report: dict, metric: str, path: str | Path) -> Path:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if metric not in report.get("series", {}):
        raise UnknownMetric(metric)
    s = report["series"][metric]
    fig, ax = plt.subplots(figsize=(5.5, 3.8), dpi=120)
    x, y = s["x"], s["y"]
    if metric == "blinding":
        ax.plot([v * 1e15 for v in x], y, "-")
        ax.set_xlabel("trigger energy (fJ)")
        ax.set_ylabel("click probability")
    elif metric == "lsec_vs_loss":
        pos = [(a, b) for a, b in zip(x, y) if b > 0]
        ax.semilogy([a for a, _ in pos], [b for _, b in pos], "o-")
        if s.get("abort_loss_db") is not None:
            ax.axvline(s["abort_loss_db"], color="grey", ls="--", lw=1)
        ax.set_xlabel("channel loss (dB)")
        ax.set_ylabel("secret key length (bits)")
    elif metric == "filter_window" and "sigma" in s:
        ax.errorbar(x, y, yerr=[3 * v for v in s["sigma"]], fmt="o")
        ax.set_xscale("symlog", linthresh=1)
        ax.axhline(0.5, color="grey", lw=1)
        ax.set_xlabel("filter window (gates)")
        ax.set_ylabel("Eve's bit agreement")
    else:
        ax.plot(x, y, "o-")
        ax.set_xlabel(s["x_label"])
        ax.set_ylabel(s["y_label"])
    ax.set_title(_TITLES.get(metric, metric), fontsize=10)
    ax.grid(alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path)
    plt.close(fig)
    return path


def write_outputs(report: dict, report_text: str, out_dir: str | Path, figures: bool = True) -> list[Path]:
    """Write the report, one series file per metric and optional PNG figures."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [out / "report.json"]
    written[0].write_text(report_text)
    for metric in available_metrics(report):
        written.append(out / f"{metric}.tsv")
        emit_series(report, metric, written[-1])
        if figures:
            written.append(render_figure(report, metric, out / f"{metric}.png"))
    return written
