"""Minimal dependency-free SVG polyline renderer for quick-look plots.

CSV is the canonical output format; these plots are a convenience. Output is
deterministic (no timestamps, fixed float formatting).
"""

import math

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#555555")


def _fmt(x):
    return "%.2f" % x


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min(s * mag for s in (1, 2, 5, 10) if s * mag >= raw)
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(t)
        t += step
    return ticks


def render_lines(series, out_path, width=800, height=480, title="", x_label="t", y_label=""):
    """Write an SVG line chart.

    ``series`` is a list of (label, x_array, y_array) triples sharing axes.
    """
    margin_l, margin_r, margin_t, margin_b = 60, 20, 30, 45
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b
    xs_min = min(min(x) for _, x, _ in series)
    xs_max = max(max(x) for _, x, _ in series)
    ys_min = min(min(y) for _, _, y in series)
    ys_max = max(max(y) for _, _, y in series)
    if xs_max == xs_min:
        xs_max = xs_min + 1.0
    if ys_max == ys_min:
        ys_max = ys_min + 1.0
    pad = 0.05 * (ys_max - ys_min)
    ys_min, ys_max = ys_min - pad, ys_max + pad

    def px(x):
        return margin_l + plot_w * (x - xs_min) / (xs_max - xs_min)

    def py(y):
        return margin_t + plot_h * (1.0 - (y - ys_min) / (ys_max - ys_min))

    out = []
    out.append(
        '<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
        'font-family="sans-serif" font-size="12">' % (width, height)
    )
    out.append('<rect width="%d" height="%d" fill="white"/>' % (width, height))
    out.append(
        '<rect x="%d" y="%d" width="%d" height="%d" fill="none" stroke="#333"/>'
        % (margin_l, margin_t, plot_w, plot_h)
    )
    if title:
        out.append(
            '<text x="%d" y="20" text-anchor="middle" font-size="14">%s</text>'
            % (width // 2, title)
        )
    for t in _ticks(xs_min, xs_max):
        x = px(t)
        out.append(
            '<line x1="%s" y1="%d" x2="%s" y2="%d" stroke="#333"/>'
            % (_fmt(x), margin_t + plot_h, _fmt(x), margin_t + plot_h + 4)
        )
        out.append(
            '<text x="%s" y="%d" text-anchor="middle">%g</text>'
            % (_fmt(x), margin_t + plot_h + 18, t)
        )
    for t in _ticks(ys_min, ys_max):
        y = py(t)
        out.append(
            '<line x1="%d" y1="%s" x2="%d" y2="%s" stroke="#333"/>'
            % (margin_l - 4, _fmt(y), margin_l, _fmt(y))
        )
        out.append(
            '<text x="%d" y="%s" text-anchor="end">%g</text>' % (margin_l - 8, _fmt(y), t)
        )
    out.append(
        '<text x="%d" y="%d" text-anchor="middle">%s</text>'
        % (margin_l + plot_w // 2, height - 8, x_label)
    )
    if y_label:
        out.append(
            '<text x="14" y="%d" text-anchor="middle" transform="rotate(-90 14 %d)">%s</text>'
            % (margin_t + plot_h // 2, margin_t + plot_h // 2, y_label)
        )
    for i, (label, x, y) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        step = max(1, len(x) // 4000)  # cap point count to keep files small
        pts = " ".join(
            "%s,%s" % (_fmt(px(xv)), _fmt(py(yv))) for xv, yv in zip(x[::step], y[::step])
        )
        out.append(
            '<polyline points="%s" fill="none" stroke="%s" stroke-width="1"/>' % (pts, color)
        )
        if label:
            ly = margin_t + 16 + 16 * i
            out.append(
                '<line x1="%d" y1="%d" x2="%d" y2="%d" stroke="%s" stroke-width="2"/>'
                % (margin_l + 8, ly - 4, margin_l + 28, ly - 4, color)
            )
            out.append('<text x="%d" y="%d">%s</text>' % (margin_l + 34, ly, label))
    out.append("</svg>")
    with open(out_path, "w") as fh:
        fh.write("\n".join(out) + "\n")
