"""SVG parameter diagrams in log10(sigma) / log10(lambda) coordinates.

Region fills come from the classification lattice and are drawn as one
compound path per region (cell rectangles merged along rows).  Boundaries are
drawn from the exact envelope polylines on top.  Every drawn element carries
a stable ``id`` so documents can be inspected without rasterising:

``fill-err``, ``fill-pur``, ``hatch-overlap``
    regions (ERR above PUR; the overlap is hatched)
``boundary-err``, ``boundary-pur``, ``boundary-I`` ... ``boundary-V``,
``boundary-V-proposed``
    curves
``fill-v-<year>``, ``outline-v-<year>``
    year sweep of the diffraction region (``<year>`` may be ``proposed``)
``marker-<label>``
    marked parameter points
"""

from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import numpy as np  # noqa: E402
from matplotlib.figure import Figure  # noqa: E402
from matplotlib.lines import Line2D  # noqa: E402
from matplotlib.patches import Patch, PathPatch  # noqa: E402
from matplotlib.path import Path  # noqa: E402
from matplotlib.ticker import FixedLocator, FuncFormatter  # noqa: E402

from .catalog import Constraint, SourceKind  # noqa: E402
from .classify import (  # noqa: E402
    ModelSpec,
    Polyline,
    Window,
    build_constraints,
    classify_point,
    empirical,
    envelope_polyline,
    exclusion_mask,
    region_masks,
)
from .core import Confidence, ParamPoint  # noqa: E402
from .pur import pur_boundary, sigma_cutoff  # noqa: E402

MIN_RESOLUTION = 50
# the 1927/1930 diffraction bounds lie above lambda = 1e4, so the sweep
# window reaches higher than the other figures
FIG3_WINDOW = Window((-12.0, 0.0), (-20.0, 16.0))
DEFAULT_MARKERS = (("GRW", ParamPoint(1e-7, 1e-16)), ("Adler", ParamPoint(1e-6, 3e-8)))
DEFAULT_YEARS = (1930, 1988, 2011, "proposed")
MODES = ("regions", "sources", "growth")

ERR_COLOR = "#c0392b"
PUR_COLOR = "#2e6da4"
KIND_COLORS = {
    SourceKind.XRAY: "#7b3294",
    SourceKind.IGM_WARMING: "#008837",
    SourceKind.CAVE_WARMING: "#e66101",
    SourceKind.SUPERCURRENT: "#5e3c99",
    SourceKind.DIFFRACTION: "#000000",
}


@dataclass(frozen=True)
class DiagramConfig:
    window: Optional[Window] = None  # None: per-mode default
    mode: str = "regions"
    markers: tuple = DEFAULT_MARKERS
    grid_resolution: int = 200
    years: tuple = DEFAULT_YEARS
    width_px: int = 860
    height_px: int = 480
    legend: bool = True
    title: str = ""

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.grid_resolution < MIN_RESOLUTION:
            raise ValueError(f"grid_resolution must be >= {MIN_RESOLUTION}")
        if self.width_px < 100 or self.height_px < 100:
            raise ValueError("figure must be at least 100 px on each side")

    @property
    def effective_window(self) -> Window:
        if self.window is not None:
            return self.window
        return FIG3_WINDOW if self.mode == "growth" else Window()


def line_style(c: Constraint) -> str:
    if c.proposed:
        return ":"
    if c.source.kind is SourceKind.SUPERCURRENT:
        return "-."
    if c.confidence is Confidence.DASHED:
        return "--"
    return "-"


@dataclass(frozen=True, eq=False)
class Fill:
    gid: str
    mask: np.ndarray  # (ny, nx) over cell centers
    color: str
    alpha: float = 0.45
    hatch: Optional[str] = None
    label: str = ""


@dataclass(frozen=True, eq=False)
class Curve:
    gid: str
    vertices: np.ndarray
    style: str = "-"
    color: str = "#000000"
    label: str = ""


@dataclass(frozen=True)
class Marker:
    label: str
    point: ParamPoint
    refuted: bool
    unsatisfactory: bool

    @property
    def inside_fill(self) -> bool:
        return self.refuted or self.unsatisfactory


@dataclass(eq=False)
class Diagram:
    window: Window
    resolution: int
    fills: list[Fill] = field(default_factory=list)
    curves: list[Curve] = field(default_factory=list)
    markers: list[Marker] = field(default_factory=list)


def _window_sigma(window: Window) -> tuple[float, float]:
    return 10.0 ** window.log_sigma[0], 10.0 ** window.log_sigma[1]


def pur_polyline(spec: ModelSpec, window: Window) -> np.ndarray:
    """PUR lambda-threshold (and sigma cut-off, if any) as log-log vertices."""
    pb = pur_boundary(spec.theory, spec.ontology, spec.thresholds, spec.geometry)
    xa, xb = window.log_sigma
    cut = sigma_cutoff(spec.ontology, spec.thresholds)
    if cut is not None:
        xb = min(xb, math.log10(cut))
    xs = [xa] + [math.log10(b) for b in pb.breakpoints if 0 < b < math.inf
                 and xa < math.log10(b) < xb] + [xb]
    verts = [(x, math.log10(pb(10.0**x))) for x in xs]
    if cut is not None and xb < window.log_sigma[1]:
        verts.append((xb, window.log_lambda[1]))
    return np.array(verts)


def _source_curves(constraints: Sequence[Constraint], window: Window) -> list[Curve]:
    curves = []
    s_win = _window_sigma(window)
    for kind in SourceKind:
        if kind is SourceKind.SOUND:
            continue
        for proposed in (False, True):
            group = [c for c in constraints if c.source.kind is kind and c.proposed == proposed]
            if kind is SourceKind.DIFFRACTION and proposed:
                # proposed rows extend the historical envelope
                group = [c for c in constraints if c.source.kind is kind]
                if not any(c.proposed for c in group):
                    continue
            if not group:
                continue
            poly = envelope_polyline(group, s_win)
            gid = f"boundary-{kind.value}" + ("-proposed" if proposed else "")
            style = ":" if proposed else line_style(group[0])
            label = f"{kind.value}: {kind.title}" + (" (proposed)" if proposed else "")
            curves.append(Curve(gid, poly.vertices, style, KIND_COLORS[kind], label))
    return curves


def _year_spec(spec: ModelSpec, year) -> ModelSpec:
    layers = frozenset({SourceKind.DIFFRACTION})
    if year == "proposed":
        return replace(spec, layers=layers, year_max=None, include_proposed=True)
    return replace(spec, layers=layers, year_max=int(year), include_proposed=False)


def region_v_mask(spec: ModelSpec, experiments, year, log_sigma, log_lambda) -> np.ndarray:
    """Diffraction exclusion on a lattice for one entry of the year sweep.

    Proposed rows count as excluding here; this is a projection, not a
    refutation."""
    cons = build_constraints(_year_spec(spec, year), experiments)
    X, Y = np.meshgrid(log_sigma, log_lambda)
    return exclusion_mask(cons, 10.0**X, 10.0**Y)


def build_diagram(spec: ModelSpec, cfg: DiagramConfig, experiments=()) -> Diagram:
    window = cfg.effective_window
    res = cfg.grid_resolution
    xs, ys = window.cell_centers(res)
    d = Diagram(window, res)
    s_win = _window_sigma(window)

    if cfg.mode == "growth":
        years = list(cfg.years)
        masks = [region_v_mask(spec, experiments, y, xs, ys) for y in years]
        shades = np.linspace(0.15, 0.6, len(years))[::-1]
        for y, m, a in zip(years, masks, shades):
            d.fills.append(Fill(f"fill-v-{y}", m, "#555555", alpha=float(a), label=f"V up to {y}"))
        for y in years:
            cons = build_constraints(_year_spec(spec, y), experiments)
            if not cons:
                continue
            poly = envelope_polyline(cons, s_win)
            style = ":" if y == "proposed" else "-"
            d.curves.append(Curve(f"outline-v-{y}", poly.vertices, style, "#000000"))
    else:
        refuted, unsat = region_masks(spec, experiments, xs, ys)
        d.fills.append(Fill("fill-pur", unsat, PUR_COLOR, label="PUR"))
        d.fills.append(Fill("fill-err", refuted, ERR_COLOR, label="ERR"))
        d.fills.append(Fill("hatch-overlap", refuted & unsat, "none", alpha=1.0, hatch="///"))
        constraints = build_constraints(spec, experiments)
        emp = empirical(constraints)
        if emp:
            d.curves.append(Curve("boundary-err", envelope_polyline(emp, s_win).vertices,
                                  "-", ERR_COLOR, "ERR boundary"))
        d.curves.append(Curve("boundary-pur", pur_polyline(spec, window), "-", PUR_COLOR,
                              "PUR boundary"))
        if cfg.mode == "sources":
            d.curves.extend(_source_curves(constraints, window))

    for label, pt in cfg.markers:
        c = classify_point(spec, pt, experiments)
        d.markers.append(Marker(label, pt, bool(c.refuted_by), c.unsatisfactory))
    return d


def _row_runs(mask: np.ndarray, xe: np.ndarray, ye: np.ndarray) -> Optional[Path]:
    verts, codes = [], []
    for iy in range(mask.shape[0]):
        row = np.concatenate([[False], mask[iy], [False]]).astype(np.int8)
        edges = np.flatnonzero(np.diff(row))
        for a, b in zip(edges[::2], edges[1::2]):
            x0, x1, y0, y1 = xe[a], xe[b], ye[iy], ye[iy + 1]
            verts += [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
            codes += [Path.MOVETO, Path.LINETO, Path.LINETO, Path.LINETO, Path.CLOSEPOLY]
    if not verts:
        return None
    return Path(np.array(verts), codes)


def _decade_axis(axis, lo: float, hi: float, max_labels: int = 12):
    ticks = np.arange(math.ceil(lo), math.floor(hi) + 1)
    step = max(1, math.ceil(len(ticks) / max_labels))
    axis.set_major_locator(FixedLocator(ticks))
    axis.set_major_formatter(FuncFormatter(
        lambda v, _pos: f"$10^{{{int(round(v))}}}$" if int(round(v)) % step == 0 else ""
    ))


_SIZE_RE = re.compile(r'<svg([^>]*?)width="([\d.]+)pt" height="([\d.]+)pt"')


def _finish_svg(text: str, width: int, height: int) -> str:
    return _SIZE_RE.sub(
        lambda m: f'<svg{m.group(1)}width="{width}px" height="{height}px"', text, count=1
    )


def _new_axes(window: Window, cfg: DiagramConfig):
    fig = Figure(figsize=(cfg.width_px / 72.0, cfg.height_px / 72.0), dpi=72)
    ax = fig.add_subplot()
    ax.set_xlim(*window.log_sigma)
    ax.set_ylim(*window.log_lambda)
    _decade_axis(ax.xaxis, *window.log_sigma)
    _decade_axis(ax.yaxis, *window.log_lambda)
    ax.set_xlabel("sigma [m]")
    ax.set_ylabel("lambda [1/s]")
    if cfg.title:
        ax.set_title(cfg.title)
    return fig, ax


def _save_svg(fig: Figure, cfg: DiagramConfig) -> str:
    buf = io.StringIO()
    with matplotlib.rc_context({"svg.hashsalt": "collapsemap", "svg.fonttype": "none"}):
        fig.savefig(buf, format="svg", metadata={"Date": None})
    return _finish_svg(buf.getvalue(), cfg.width_px, cfg.height_px)


def render_svg(diagram: Diagram, cfg: DiagramConfig) -> str:
    window = diagram.window
    fig, ax = _new_axes(window, cfg)
    xe = np.linspace(*window.log_sigma, diagram.resolution + 1)
    ye = np.linspace(*window.log_lambda, diagram.resolution + 1)
    handles = []
    for z, f in enumerate(diagram.fills):
        path = _row_runs(f.mask, xe, ye)
        if path is None:
            continue
        if f.hatch:
            patch = PathPatch(path, facecolor="none", edgecolor="#333333", hatch=f.hatch,
                              linewidth=0, zorder=1 + z)
        else:
            patch = PathPatch(path, facecolor=f.color, alpha=f.alpha, linewidth=0, zorder=1 + z)
            if f.label:
                handles.append(Patch(facecolor=f.color, alpha=f.alpha, label=f.label))
        patch.set_gid(f.gid)
        ax.add_patch(patch)
    for c in diagram.curves:
        (line,) = ax.plot(c.vertices[:, 0], c.vertices[:, 1], linestyle=c.style, color=c.color,
                          linewidth=1.4, zorder=20)
        line.set_gid(c.gid)
        if c.label:
            handles.append(Line2D([], [], linestyle=c.style, color=c.color, label=c.label))
    for m in diagram.markers:
        x, y = m.point.log10
        (pt,) = ax.plot([x], [y], marker="o", color="#111111", markersize=6, linestyle="none",
                        zorder=30)
        pt.set_gid(f"marker-{m.label}")
        ax.annotate(m.label, (x, y), textcoords="offset points", xytext=(6, 4), zorder=30)
    if cfg.legend and handles:
        fig.subplots_adjust(left=0.09, right=0.66)
        ax.legend(handles=handles, loc="upper left", bbox_to_anchor=(1.02, 1.0), fontsize=7,
                  frameon=False)
    return _save_svg(fig, cfg)


def render_diagram(spec: ModelSpec, cfg: DiagramConfig, experiments=()) -> str:
    return render_svg(build_diagram(spec, cfg, experiments), cfg)


def render_polyline(poly: Polyline, window: Window, cfg: Optional[DiagramConfig] = None,
                    label: str = "lower envelope") -> str:
    """A single boundary curve, for the envelope command."""
    cfg = cfg or DiagramConfig(window=window)
    fig, ax = _new_axes(window, cfg)
    (line,) = ax.plot(poly.vertices[:, 0], poly.vertices[:, 1], color=ERR_COLOR, label=label)
    line.set_gid("boundary-envelope")
    if cfg.legend:
        ax.legend(loc="lower right", fontsize=7)
    return _save_svg(fig, cfg)
