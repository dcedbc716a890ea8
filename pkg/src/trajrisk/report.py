"""Report artifacts: Markdown metric tables and standalone SVG figures.

SVGs are assembled as plain strings with fixed float formatting so a
repeated run produces byte-identical files.  The diff colorplot uses a
blue-white-red diverging scale clipped to +/-1 m; the weight heatmap a
viridis-like sequential scale over [1, 10].
"""

from __future__ import annotations

from .errors import StructuralError
from .riskmap import WEIGHT_MAX, WEIGHT_MIN, RiskHeatmap

# viridis anchor colours, dark to light
_VIRIDIS = (
    (68, 1, 84), (72, 40, 120), (62, 74, 137), (49, 104, 142),
    (38, 130, 142), (31, 158, 137), (53, 183, 121), (109, 205, 89),
    (180, 222, 44), (253, 231, 37),
)
_DIV_NEG = (33, 102, 172)   # blue: variant better
_DIV_POS = (178, 24, 43)    # red: variant worse
_DIV_MID = (247, 247, 247)

DIFF_CLIP_M = 1.0


def _hex(rgb) -> str:
    return "#{:02x}{:02x}{:02x}".format(*(int(round(c)) for c in rgb))


def sequential_color(v01: float) -> str:
    """Viridis-style colour for v in [0, 1]."""
    v = min(max(float(v01), 0.0), 1.0)
    x = v * (len(_VIRIDIS) - 1)
    i = min(int(x), len(_VIRIDIS) - 2)
    f = x - i
    a, b = _VIRIDIS[i], _VIRIDIS[i + 1]
    return _hex(tuple(a[j] + f * (b[j] - a[j]) for j in range(3)))


def diverging_color(v: float) -> str:
    """Blue-white-red for v in [-1, 1] (clipped)."""
    v = min(max(float(v), -1.0), 1.0)
    ref = _DIV_NEG if v < 0 else _DIV_POS
    f = abs(v)
    return _hex(tuple(_DIV_MID[j] + f * (ref[j] - _DIV_MID[j])
                      for j in range(3)))


def _svg_open(width: int, height: int) -> list:
    return [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}">',
            f'<rect x="0" y="0" width="{width}" height="{height}" '
            f'fill="#ffffff"/>']


def _text(x, y, s, size=12, anchor="start") -> str:
    return (f'<text x="{x:.1f}" y="{y:.1f}" font-family="sans-serif" '
            f'font-size="{size}" text-anchor="{anchor}">{s}</text>')


def _rect(x, y, w, h, fill) -> str:
    return (f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" '
            f'height="{h:.2f}" fill="{fill}"/>')


_PLOT = 480.0
_MARGIN_L = 50.0
_MARGIN_T = 40.0
_MARGIN_B = 40.0
_CBAR_W = 18.0
_CBAR_GAP = 24.0


def _grid_frame(parts, extents, title, legend_fn, legend_lo, legend_hi):
    """Axes, title and colourbar shared by the two grid plots."""
    x_min, y_min, x_max, y_max = extents
    x0, y0 = _MARGIN_L, _MARGIN_T
    parts.append(_text(x0, 24, title, size=14))
    parts.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{_PLOT:.1f}" '
                 f'height="{_PLOT:.1f}" fill="none" stroke="#444444"/>')
    parts.append(_text(x0, y0 + _PLOT + 16, f"{x_min:g}", size=11))
    parts.append(_text(x0 + _PLOT, y0 + _PLOT + 16, f"{x_max:g}", size=11,
                       anchor="end"))
    parts.append(_text(x0 + _PLOT / 2, y0 + _PLOT + 30, "x (m)", size=11,
                       anchor="middle"))
    parts.append(_text(x0 - 6, y0 + _PLOT, f"{y_min:g}", size=11,
                       anchor="end"))
    parts.append(_text(x0 - 6, y0 + 10, f"{y_max:g}", size=11, anchor="end"))
    bx = x0 + _PLOT + _CBAR_GAP
    n_seg = 24
    for i in range(n_seg):
        f = (i + 0.5) / n_seg
        yy = y0 + _PLOT * (1.0 - (i + 1) / n_seg)
        parts.append(_rect(bx, yy, _CBAR_W, _PLOT / n_seg + 0.5,
                           legend_fn(f)))
    parts.append(f'<rect x="{bx:.1f}" y="{y0:.1f}" width="{_CBAR_W:.1f}" '
                 f'height="{_PLOT:.1f}" fill="none" stroke="#444444"/>')
    parts.append(_text(bx + _CBAR_W + 4, y0 + _PLOT, legend_lo, size=11))
    parts.append(_text(bx + _CBAR_W + 4, y0 + 10, legend_hi, size=11))
    return x0, y0


def _cell_xy(ix, iy, grid_n):
    """Top-left pixel of a grid cell; y axis points up in world space."""
    cell = _PLOT / grid_n
    return (_MARGIN_L + ix * cell, _MARGIN_T + _PLOT - (iy + 1) * cell)


def render_weight_heatmap_svg(heatmap: RiskHeatmap, path,
                              title="Location-risk weights") -> None:
    grid_n = heatmap.grid_n
    width = int(_MARGIN_L + _PLOT + _CBAR_GAP + _CBAR_W + 60)
    height = int(_MARGIN_T + _PLOT + _MARGIN_B)
    parts = _svg_open(width, height)

    def color(f):
        return sequential_color(f)

    x0, y0 = _grid_frame(parts, heatmap.extents, title, color,
                         f"{WEIGHT_MIN:g}", f"{WEIGHT_MAX:g}")
    span = WEIGHT_MAX - WEIGHT_MIN
    base = sequential_color(0.0)
    parts.insert(2, _rect(x0, y0, _PLOT, _PLOT, base))
    cell = _PLOT / grid_n
    w = heatmap.weights
    for ix in range(grid_n):
        col = w[ix]
        for iy in range(grid_n):
            v = col[iy]
            if v <= WEIGHT_MIN:
                continue  # background already carries the minimum colour
            px, py = _cell_xy(ix, iy, grid_n)
            parts.append(_rect(px, py, cell, cell,
                               sequential_color((v - WEIGHT_MIN) / span)))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def render_fde_diff_colorplot(variant_bins, baseline_bins, extents, grid_n,
                              path, title="FDE@3s difference (m)") -> None:
    """Per-bin FDE@3s difference, variant minus baseline.

    ``*_bins`` map (bin_x, bin_y) -> (mean_fde_3s, count).  Bins missing
    from either side are skipped; out-of-range bin indices mean the two
    tables were built on different grids and raise StructuralError.
    """
    for name, bins in (("variant", variant_bins), ("baseline", baseline_bins)):
        for (bx, by) in bins:
            if not (0 <= bx < grid_n and 0 <= by < grid_n):
                raise StructuralError(
                    f"{name} bin ({bx}, {by}) outside the {grid_n}x{grid_n} "
                    f"grid; bin tables do not share a shape")
    width = int(_MARGIN_L + _PLOT + _CBAR_GAP + _CBAR_W + 60)
    height = int(_MARGIN_T + _PLOT + _MARGIN_B)
    parts = _svg_open(width, height)

    def color(f):
        return diverging_color(2.0 * f - 1.0)

    _grid_frame(parts, extents, title, color,
                f"-{DIFF_CLIP_M:g}", f"+{DIFF_CLIP_M:g}")
    cell = _PLOT / grid_n
    for key in sorted(set(variant_bins) & set(baseline_bins)):
        diff = variant_bins[key][0] - baseline_bins[key][0]
        px, py = _cell_xy(key[0], key[1], grid_n)
        parts.append(_rect(px, py, cell, cell,
                           diverging_color(diff / DIFF_CLIP_M)))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


def render_binned_bars(pairs, bin_edges, path, title, xlabel,
                       ylabel="mean FDE@3s diff (m)") -> None:
    """Bar chart of mean paired differences per bin, counts annotated.

    ``pairs`` is a list of (key_value, diff).  Empty input still renders
    the axes so the artifact set is stable.
    """
    edges = [float(e) for e in bin_edges]
    n_bins = len(edges) - 1
    sums = [0.0] * n_bins
    counts = [0] * n_bins
    for key, diff in pairs:
        for b in range(n_bins):
            if edges[b] <= key < edges[b + 1] or (
                    b == n_bins - 1 and key == edges[-1]):
                sums[b] += diff
                counts[b] += 1
                break
    means = [sums[b] / counts[b] if counts[b] else 0.0 for b in range(n_bins)]
    lim = max([abs(m) for m in means if m == m] + [0.1])

    width, height = 640, 360
    x0, y0, pw, ph = 60.0, 40.0, 540.0, 240.0
    parts = _svg_open(width, height)
    parts.append(_text(x0, 24, title, size=14))
    mid_y = y0 + ph / 2.0
    parts.append(f'<line x1="{x0:.1f}" y1="{mid_y:.1f}" '
                 f'x2="{x0 + pw:.1f}" y2="{mid_y:.1f}" stroke="#444444"/>')
    parts.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{pw:.1f}" '
                 f'height="{ph:.1f}" fill="none" stroke="#444444"/>')
    bw = pw / max(n_bins, 1)
    for b in range(n_bins):
        cx = x0 + b * bw
        if counts[b]:
            h = abs(means[b]) / lim * (ph / 2.0 - 4.0)
            top = mid_y - h if means[b] < 0 else mid_y
            fill = _hex(_DIV_NEG) if means[b] < 0 else _hex(_DIV_POS)
            parts.append(_rect(cx + bw * 0.15, top, bw * 0.7, h, fill))
        parts.append(_text(cx + bw / 2.0, y0 + ph + 14,
                           f"{edges[b]:g}", size=9, anchor="middle"))
        parts.append(_text(cx + bw / 2.0, y0 + ph + 28,
                           f"n={counts[b]}", size=9, anchor="middle"))
    parts.append(_text(x0 + pw, y0 + ph + 14, f"{edges[-1]:g}", size=9,
                       anchor="middle"))
    parts.append(_text(x0 - 8, mid_y + 4, "0", size=10, anchor="end"))
    parts.append(_text(x0 - 8, y0 + 10, f"+{lim:.2f}", size=10, anchor="end"))
    parts.append(_text(x0 - 8, y0 + ph, f"-{lim:.2f}", size=10, anchor="end"))
    parts.append(_text(x0 + pw / 2.0, y0 + ph + 44, xlabel, size=11,
                       anchor="middle"))
    parts.append(_text(16, y0 + ph / 2.0, ylabel, size=11, anchor="middle"))
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(parts) + "\n")


# --- Markdown tables -------------------------------------------------------

_SPEED_COLS = (("all", "all"), ("stationary", "stat"),
               ("non_stationary", "no-stat"), ("high_speed", ">14 m/s"))
_VEH_RISK_COLS = (("all", "all"), ("risk_low", "low"),
                  ("risk_medium", "medium"), ("risk_high", "high"))
_VRU_RISK_COLS = (("all", "all"), ("risk_low", "low"), ("risk_high", "high"))


def _metric_table(reports, metric, cols, horizons, decimals):
    lines = []
    header = ["variant"]
    for h in horizons:
        header += [f"@{h}s {label}" for _, label in cols]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for rep in reports:
        table = rep.fde if metric == "fde" else rep.kde_nll
        row = [rep.variant]
        for h in horizons:
            for stratum, _ in cols:
                if rep.counts.get(stratum, 0):
                    row.append(f"{table[(stratum, h)]:.{decimals}f}")
                else:
                    row.append("—")
        lines.append("| " + " | ".join(row) + " |")
    counts = reports[0].counts
    note = ", ".join(f"{label}={counts.get(stratum, 0)}"
                     for stratum, label in cols)
    lines.append("")
    lines.append(f"Examples per stratum: {note}.")
    return "\n".join(lines)


def emit_result_tables(reports, path) -> None:
    """tables.md with the four headline result tables.

    ``reports`` is a list of StratifiedReport covering both agent
    classes and all trained variants; variants keep list order.
    """
    veh = [r for r in reports if r.agent_class == "vehicle"]
    ped = [r for r in reports if r.agent_class == "pedestrian"]
    sections = ["# Results", ""]
    if veh:
        horizons = veh[0].horizons
        sections += [
            "## Table I — vehicle most-likely FDE (m) by speed stratum", "",
            _metric_table(veh, "fde", _SPEED_COLS, horizons, 2), "",
            "## Table II — vehicle KDE-NLL (nats) by speed stratum", "",
            _metric_table(veh, "kde_nll", _SPEED_COLS, horizons, 2), "",
            "## Table III — vehicle metrics by location-risk stratum", "",
            "### FDE (m)", "",
            _metric_table(veh, "fde", _VEH_RISK_COLS, horizons, 2), "",
            "### KDE-NLL (nats)", "",
            _metric_table(veh, "kde_nll", _VEH_RISK_COLS, horizons, 2), "",
        ]
    if ped:
        horizons = ped[0].horizons
        sections += [
            "## Table IV — pedestrian-class metrics by location-risk stratum",
            "",
            "### FDE (m)", "",
            _metric_table(ped, "fde", _VRU_RISK_COLS, horizons, 3), "",
            "### KDE-NLL (nats)", "",
            _metric_table(ped, "kde_nll", _VRU_RISK_COLS, horizons, 3), "",
        ]
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("\n".join(sections))
