# File: ekfadmm/report.py
"""
Result emission: CSV tables, key=value summaries, the resolved config and
simple SVG line charts.

All numeric output uses repr() of Python floats, so identical runs produce
byte-identical files.
"""
import csv
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog
from jinja2 import Environment
from pydantic import BaseModel

from ekfadmm.core_models import ExperimentConfig, SweepRow
from ekfadmm.regret import RegretCurve, Trace

log = structlog.get_logger(__name__)


class ExperimentIOError(RuntimeError):
    """Raised when result files cannot be written."""
    pass


Series = Tuple[str, Sequence[float], Sequence[float]]

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _ensure_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ExperimentIOError(f"cannot create output directory '{path}': {e}") from e
    return path


def _write_rows(path: Path, header: List[str], rows) -> None:
    try:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([_fmt(v) for v in row])
    except OSError as e:
        raise ExperimentIOError(f"cannot write '{path}': {e}") from e


def _write_text(path: Path, text: str) -> None:
    try:
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        raise ExperimentIOError(f"cannot write '{path}': {e}") from e


# --- Tables ---

def write_config_json(path: Path, config: ExperimentConfig) -> None:
    _write_text(path, config.model_dump_json(indent=2) + "\n")


def write_trace_csv(path: Path, trace: Trace, vectors_max: int = 10) -> None:
    """
    One row per step: k, f, g_x, g_nu, gap, grad_norm, then x_k and nu_k entries
    when n_x <= vectors_max. Wall time is left out to keep the file deterministic.
    """
    header = ["k", "f", "g_x", "g_nu", "gap", "grad_norm"]
    with_vectors = trace.n_x <= vectors_max
    if with_vectors:
        header += [f"x_{i}" for i in range(trace.n_x)] + [f"nu_{i}" for i in range(trace.n_x)]

    def rows():
        for k in range(trace.size):
            row = [k, trace.f[k], trace.g_x[k], trace.g_nu[k], trace.gap[k], trace.grad_norm[k]]
            if with_vectors:
                row += list(trace.x[k]) + list(trace.nu[k])
            yield row

    _write_rows(path, header, rows())


def write_regret_csv(path: Path, r_f: RegretCurve, r_c: RegretCurve, r_f_x: Optional[RegretCurve] = None) -> None:
    """n, R_f, R_f/n, R_c, R_c/n and, when given, the g(x) variant of R_f."""
    header = ["n", "R_f", "R_f_per_n", "R_c", "R_c_per_n"]
    columns = [r_f.n, r_f.values, r_f.per_sample, r_c.values, r_c.per_sample]
    if r_f_x is not None:
        header += ["R_f_x", "R_f_x_per_n"]
        columns += [r_f_x.values, r_f_x.per_sample]
    _write_rows(path, header, zip(*columns))


def write_curves_csv(path: Path, rows: List[Dict[str, float]]) -> None:
    if not rows:
        raise ExperimentIOError("no checkpoint rows to write")
    header = list(rows[0].keys())
    _write_rows(path, header, ([row[h] for h in header] for row in rows))


def flatten(model: BaseModel) -> Dict[str, Any]:
    """Nested model fields become dotted keys."""
    out: Dict[str, Any] = {}

    def walk(prefix: str, value: Any) -> None:
        if isinstance(value, dict):
            for key, item in value.items():
                walk(f"{prefix}.{key}" if prefix else key, item)
        else:
            out[prefix] = value

    walk("", model.model_dump())
    return out


def format_key_values(values: Dict[str, Any]) -> str:
    return "".join(f"{key}={_fmt(value)}\n" for key, value in values.items())


def format_summary(summary: BaseModel) -> str:
    return format_key_values(flatten(summary))


def parse_summary(text: str) -> Dict[str, str]:
    """Inverse of format_summary, values left as strings."""
    pairs = (line.split("=", 1) for line in text.splitlines() if "=" in line)
    return {key: value for key, value in pairs}


def write_summary(path: Path, summary: BaseModel) -> None:
    _write_text(path, format_summary(summary))


def write_key_values(path: Path, values: Dict[str, Any]) -> None:
    _write_text(path, format_key_values(values))


def write_sweep_csv(path: Path, seeds: Sequence[int], summaries: Sequence[BaseModel]) -> None:
    """One row per seed, flattened summary fields as columns."""
    flat = [flatten(s) for s in summaries]
    header = ["seed"] + list(flat[0])
    _write_rows(path, header, ([seed] + [f[h] for h in header[1:]] for seed, f in zip(seeds, flat)))


# --- Templates ---

def create_report_environment() -> Environment:
    """Jinja2 environment for SVG charts and text tables."""
    env = Environment(autoescape=True, trim_blocks=True, lstrip_blocks=True)
    env.filters["mean_std"] = lambda pair, digits=4: f"{pair[0]:.{digits}g} ({pair[1]:.{digits}g})"
    env.filters["pad"] = lambda value, width: str(value).ljust(width)
    return env


report_env = create_report_environment()

_SVG_TEMPLATE = report_env.from_string(
    """<svg xmlns="http://www.w3.org/2000/svg" width="{{ width }}" height="{{ height }}"
     font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{{ width // 2 }}" y="16" text-anchor="middle" font-size="13">{{ title }}</text>
<rect x="{{ left }}" y="{{ top }}" width="{{ plot_w }}" height="{{ plot_h }}" fill="none" stroke="#888"/>
{% for tick in y_ticks %}
<text x="{{ left - 4 }}" y="{{ tick.pos }}" text-anchor="end" dominant-baseline="middle">{{ tick.label }}</text>
{% endfor %}
{% for tick in x_ticks %}
<text x="{{ tick.pos }}" y="{{ top + plot_h + 14 }}" text-anchor="middle">{{ tick.label }}</text>
{% endfor %}
<text x="{{ left + plot_w // 2 }}" y="{{ height - 6 }}" text-anchor="middle">{{ x_label }}</text>
{% for s in series %}
<polyline fill="none" stroke="{{ s.color }}" stroke-width="1.5" points="{{ s.points }}"/>
<text x="{{ left + plot_w + 8 }}" y="{{ top + 14 * loop.index }}" fill="{{ s.color }}">{{ s.label }}</text>
{% endfor %}
</svg>
"""
)

_SWEEP_TEMPLATE = report_env.from_string(
    """{{ "label"|pad(16) }} {{ "runs"|pad(5) }}{% for col in columns %} {{ col|pad(24) }}{% endfor %}

{% for row in rows %}
{{ row.label|pad(16) }} {{ row.runs|pad(5) }}
{%- for col in columns %} {{ row[col]|mean_std|pad(24) }}{% endfor %}

{% endfor %}
"""
)


def _ticks(lo: float, hi: float, to_pos, log_scale: bool, count: int = 5) -> List[Dict[str, Any]]:
    ticks = []
    for i in range(count):
        v = lo + (hi - lo) * i / (count - 1)
        label = f"{10 ** v:.3g}" if log_scale else f"{v:.3g}"
        ticks.append({"pos": round(to_pos(v), 2), "label": label})
    return ticks


def render_line_chart(
    series: Sequence[Series],
    title: str,
    x_label: str = "n",
    log_y: bool = False,
    width: int = 720,
    height: int = 420,
) -> str:
    """
    Polyline chart of one or more (label, xs, ys) series. With log_y the y-axis
    is log10 and nonpositive or non-finite points are dropped.
    """
    left, right, top, bottom = 70, 150, 28, 40
    plot_w, plot_h = width - left - right, height - top - bottom

    cleaned = []
    for label, xs, ys in series:
        pts = []
        for x, y in zip(xs, ys):
            if not math.isfinite(y) or (log_y and y <= 0):
                continue
            pts.append((float(x), math.log10(y) if log_y else float(y)))
        if pts:
            cleaned.append((label, pts))
    if not cleaned:
        log.warning("Chart has no plottable points", title=title)
        cleaned_x, cleaned_y = [0.0, 1.0], [0.0, 1.0]
    else:
        cleaned_x = [p[0] for _, pts in cleaned for p in pts]
        cleaned_y = [p[1] for _, pts in cleaned for p in pts]

    x_lo, x_hi = min(cleaned_x), max(cleaned_x)
    y_lo, y_hi = min(cleaned_y), max(cleaned_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5

    def to_x(v: float) -> float:
        return left + (v - x_lo) / (x_hi - x_lo) * plot_w

    def to_y(v: float) -> float:
        return top + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    rendered = [
        {
            "label": label,
            "color": _COLORS[i % len(_COLORS)],
            "points": " ".join(f"{to_x(x):.2f},{to_y(y):.2f}" for x, y in pts),
        }
        for i, (label, pts) in enumerate(cleaned)
    ]
    return _SVG_TEMPLATE.render(
        width=width,
        height=height,
        left=left,
        top=top,
        plot_w=plot_w,
        plot_h=plot_h,
        title=title + (" (log scale)" if log_y else ""),
        x_label=x_label,
        series=rendered,
        y_ticks=_ticks(y_lo, y_hi, to_y, log_y),
        x_ticks=_ticks(x_lo, x_hi, to_x, False),
    )


def write_chart(path: Path, *args, **kwargs) -> None:
    _write_text(path, render_line_chart(*args, **kwargs))


def format_sweep_table(rows: Sequence[SweepRow]) -> str:
    """Table rows formatted as "mean (std)" per metric."""
    columns = ["loss", "mse", "sparsity", "cv", "time", "regret_f_per_n"]
    return _SWEEP_TEMPLATE.render(columns=columns, rows=[row.model_dump() for row in rows])


def write_sweep_summary(path: Path, rows: Sequence[SweepRow]) -> None:
    _write_text(path, format_sweep_table(rows))


def ensure_output_dir(path: Path) -> Path:
    return _ensure_dir(Path(path))
