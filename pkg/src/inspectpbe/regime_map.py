"""Regime map over (p_t_l, p_d): classification grid, CSV and a static SVG."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, replace

from .cost_model import CostModel, TrafficEnvironment, delta_c
from .equilibrium import classify_thresholds, ensure_assumptions, misbehavior_threshold, regime_thresholds
from .game import GameParams

COLORS = {
    "A": "#4e79a7",
    "B1": "#f28e2b",
    "B2": "#59a14f",
    "B3": "#e15759",
    "Boundary": "#bab0ac",
}
LABEL_ORDER = ("A", "B1", "B2", "B3", "Boundary")
CSV_COLUMNS = ("p_t_l", "p_d", "theta", "F_l", "regime", "boundary_detail")


@dataclass
class RegimeMap:
    env: TrafficEnvironment
    params: GameParams
    p_t_l: list[float]
    p_d: list[float]
    labels: list[list[str]]  # labels[j][i]: row j is p_d[j], column i is p_t_l[i]
    details: list[list[str | None]]
    dc0: float

    def counts(self) -> dict[str, int]:
        out = {k: 0 for k in LABEL_ORDER}
        for row in self.labels:
            for lab in row:
                out[lab] += 1
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for j, pd in enumerate(self.p_d):
            for i, pt in enumerate(self.p_t_l):
                w.writerow([repr(pt), repr(pd), repr(self.env.theta), repr(self.params.F_l),
                            self.labels[j][i], self.details[j][i] or ""])
        return buf.getvalue()


def default_axes(env: TrafficEnvironment, model: CostModel, params: GameParams, n: int = 200):
    """Cell centres over (0, 1.25 dc(0)] for p_t_l and (0, 1.5 (1-theta) F] for p_d."""
    dc0 = delta_c(env, model, 0.0)
    x_max = 1.25 * dc0
    y_max = 1.5 * (1.0 - env.theta) * params.fine_l
    if y_max <= 0.0:
        y_max = 1.0
    xs = [x_max * (i + 0.5) / n for i in range(n)]
    ys = [y_max * (j + 0.5) / n for j in range(n)]
    return xs, ys


def compute_regime_map(
    env: TrafficEnvironment,
    model: CostModel,
    params: GameParams,
    p_t_l_values: list[float],
    p_d_values: list[float],
    rel_tol: float = 1e-9,
) -> RegimeMap:
    ensure_assumptions(env, model)
    labels, details = [], []
    dc0 = delta_c(env, model, 0.0)
    for pd in p_d_values:
        th = regime_thresholds(env, model, replace(params, p_d=pd))
        row_l, row_d = [], []
        for pt in p_t_l_values:
            reg = classify_thresholds(replace(params, p_t_l=pt, p_d=pd), th, rel_tol)
            row_l.append(reg.label)
            row_d.append(reg.boundary_detail)
        labels.append(row_l)
        details.append(row_d)
    return RegimeMap(env, params, list(p_t_l_values), list(p_d_values), labels, details, dc0)


# --------------------------------------------------------------------------- SVG

W, H = 640, 480
ML, MR, MT, MB = 80, 150, 40, 60


def _f(v: float) -> str:
    return f"{v:.2f}"


def _edges(centres: list[float]) -> list[float]:
    if len(centres) == 1:
        c = centres[0]
        half = abs(c) * 0.5 or 0.5
        return [c - half, c + half]
    e = [centres[0] - 0.5 * (centres[1] - centres[0])]
    for a, b in zip(centres, centres[1:]):
        e.append(0.5 * (a + b))
    e.append(centres[-1] + 0.5 * (centres[-1] - centres[-2]))
    return e


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def render_svg(rmap: RegimeMap, model: CostModel, curve_points: int = 400) -> str:
    """Filled regime cells, threshold curves, axes and legend. Deterministic text."""
    xe, ye = _edges(rmap.p_t_l), _edges(rmap.p_d)
    x0, x1, y0, y1 = xe[0], xe[-1], ye[0], ye[-1]
    pw, ph = W - ML - MR, H - MT - MB

    def sx(x):
        return ML + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return MT + ph - (y - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<style>text{font-family:sans-serif;font-size:12px}</style>',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="#ffffff"/>',
        f'<text x="{_f(ML + pw / 2)}" y="20" text-anchor="middle">PBE regimes '
        f'(theta={rmap.env.theta:g}, F_l={rmap.params.F_l:g} USD)</text>',
        '<g shape-rendering="crispEdges">',
    ]
    # one rect per horizontal run of equal labels
    for j, row in enumerate(rmap.labels):
        i = 0
        while i < len(row):
            k = i
            while k + 1 < len(row) and row[k + 1] == row[i]:
                k += 1
            xa, xb = sx(xe[i]), sx(xe[k + 1])
            ya, yb = sy(ye[j + 1]), sy(ye[j])
            out.append(f'<rect x="{_f(xa)}" y="{_f(ya)}" width="{_f(xb - xa)}" '
                       f'height="{_f(yb - ya)}" fill="{COLORS[row[i]]}"/>')
            i = k + 1
    out.append("</g>")

    # threshold curves
    env, params = rmap.env, rmap.params
    fine = params.fine_l
    mef = (1.0 - env.theta) * fine
    curves = []
    if x0 <= rmap.dc0 <= x1:
        curves.append(("dc(0)", [(rmap.dc0, y0), (rmap.dc0, y1)]))
    if y0 <= mef <= y1:
        curves.append(("(1-theta)F_l", [(max(x0, 0.0), mef), (min(x1, rmap.dc0), mef)]))
    upper, lower = [], []
    for k in range(curve_points + 1):
        pd = y0 + (min(y1, mef) - y0) * k / curve_points
        if pd <= 0.0:
            continue
        s_hat = misbehavior_threshold(env, replace(params, p_d=pd))
        if not isinstance(s_hat, float):
            continue
        d = delta_c(env, model, s_hat)
        upper.append((d, pd))
        lower.append((d - fine, pd))
    curves.append(("dc(sigma_hat)", upper))
    curves.append(("dc(sigma_hat)-F_l", lower))
    for name, pts in curves:
        segs, cur = [], []
        for x, y in pts:
            if math.isfinite(x) and x0 <= x <= x1 and y0 <= y <= y1:
                cur.append(f"{_f(sx(x))},{_f(sy(y))}")
            elif cur:
                segs.append(cur)
                cur = []
        if cur:
            segs.append(cur)
        for seg in segs:
            if len(seg) >= 2:
                out.append(f'<polyline fill="none" stroke="#000000" stroke-width="1.5" '
                           f'points="{" ".join(seg)}"><title>{name}</title></polyline>')

    # axes
    out.append(f'<rect x="{ML}" y="{MT}" width="{pw}" height="{ph}" fill="none" stroke="#000000"/>')
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_f(sx(t))}" y1="{MT + ph}" x2="{_f(sx(t))}" y2="{MT + ph + 5}" stroke="#000000"/>')
        out.append(f'<text x="{_f(sx(t))}" y="{MT + ph + 18}" text-anchor="middle">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{ML - 5}" y1="{_f(sy(t))}" x2="{ML}" y2="{_f(sy(t))}" stroke="#000000"/>')
        out.append(f'<text x="{ML - 8}" y="{_f(sy(t) + 4)}" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{_f(ML + pw / 2)}" y="{H - 15}" text-anchor="middle">'
               f'misbehavior cost p_t_l (USD)</text>')
    out.append(f'<text x="20" y="{_f(MT + ph / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 20 {_f(MT + ph / 2)})">inspection cost p_d (USD)</text>')

    # legend
    counts = rmap.counts()
    lx, ly = W - MR + 15, MT + 10
    for n, lab in enumerate(LABEL_ORDER):
        yy = ly + 22 * n
        out.append(f'<rect x="{lx}" y="{yy}" width="14" height="14" fill="{COLORS[lab]}" stroke="#000000"/>')
        out.append(f'<text x="{lx + 20}" y="{yy + 12}">{lab} ({counts[lab]})</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
