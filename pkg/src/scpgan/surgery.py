"""Self-correcting weights for two- and three-part discriminator losses.

Given the flattened gradients of the clean (C), enhanced (E) and optionally
noisy (N) loss parts, pick weights so that the combined descent direction is
never obtuse to the parts it corrects:

* SC2: if <gC, gE> > 0 keep (1, 1); otherwise w_E = -<gC, gE> / |gE|^2,
  which makes the combination orthogonal to gE.
* SC3: after SC2, if the combination is obtuse (or orthogonal) to gN, set
  w_N so that the final direction is orthogonal to gN.

The angle test is the sign of the inner product, and a zero inner product
takes the correcting branch.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import LengthMismatch

EPS = 1e-12

BRANCHES = ("acute_acute", "acute_obtuse", "obtuse_acute", "obtuse_obtuse",
            "two_part_acute", "two_part_obtuse")


@dataclass(frozen=True)
class ScWeights:
    w_c: float
    w_e: float
    w_n: float | None
    branch: str
    degenerate: bool = False


def _vec(g):
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1:
        raise LengthMismatch(f"gradient vectors must be 1-D, got shape {g.shape}")
    return g


def _same_length(*gs):
    n = {g.size for g in gs if g is not None}
    if len(n) > 1:
        raise LengthMismatch(f"gradient lengths differ: {sorted(n)}")


def dot_and_norms(g1, g2):
    g1, g2 = _vec(g1), _vec(g2)
    _same_length(g1, g2)
    return float(g1 @ g2), float(math.sqrt(g1 @ g1)), float(math.sqrt(g2 @ g2))


def sc2_weights(gc, ge) -> ScWeights:
    gc, ge = _vec(gc), _vec(ge)
    dot, _, ne = dot_and_norms(gc, ge)
    if dot > 0:
        return ScWeights(1.0, 1.0, None, "two_part_acute")
    if ne < EPS:
        return ScWeights(1.0, 1.0, None, "two_part_obtuse", degenerate=True)
    w_e = -dot / (ne * ne)
    collapsed = not np.any(gc + w_e * ge)
    return ScWeights(1.0, w_e, None, "two_part_obtuse", degenerate=collapsed)


def sc3_weights(gc, ge, gn) -> ScWeights:
    gc, ge, gn = _vec(gc), _vec(ge), _vec(gn)
    _same_length(gc, ge, gn)
    two = sc2_weights(gc, ge)
    first = "acute" if two.branch == "two_part_acute" else "obtuse"
    combined = two.w_c * gc + two.w_e * ge
    if combined @ gn > 0:
        return ScWeights(two.w_c, two.w_e, 1.0, f"{first}_acute", two.degenerate)
    nn = float(gn @ gn)
    if math.sqrt(nn) < EPS:
        return ScWeights(two.w_c, two.w_e, 1.0, f"{first}_obtuse", degenerate=True)
    ee = float(ge @ ge)
    if first == "acute" or math.sqrt(ee) < EPS:
        # A guarded (vanishing) gE kept w_E = 1, so the unit-weight formula applies.
        w_n = -float(gc @ gn) / nn - float(ge @ gn) / nn
    else:
        w_n = -float(gc @ gn) / nn + float(gc @ ge) * float(ge @ gn) / (ee * nn)
    final = combined + w_n * gn
    degenerate = two.degenerate or not np.any(final)
    return ScWeights(two.w_c, two.w_e, w_n, f"{first}_obtuse", degenerate)


def combine(gc, ge, gn, w: ScWeights) -> np.ndarray:
    """w_C*gC + w_E*gE (+ w_N*gN); all-unit weights reproduce the plain sum exactly."""
    gc, ge = _vec(gc), _vec(ge)
    _same_length(gc, ge, None if gn is None else _vec(gn))
    out = w.w_c * gc + w.w_e * ge
    if gn is not None and w.w_n is not None:
        out = out + w.w_n * _vec(gn)
    return out


def _angle(a, b, n1, n2):
    """Angle in degrees; the half-angle form stays accurate near 0 and 180."""
    if n1 == 0 or n2 == 0:
        return float("nan")
    ua, ub = a / n1, b / n2
    return math.degrees(2 * math.atan2(np.linalg.norm(ua - ub), np.linalg.norm(ua + ub)))


def tolerance(direction, *parts) -> float:
    """Sign-test slack: 1e-9 * |g| * max part norm."""
    scale = max(float(np.linalg.norm(p)) for p in parts if p is not None)
    return 1e-9 * float(np.linalg.norm(direction)) * scale


@dataclass
class ConflictReport:
    angle_ce_deg: float
    angle_cen_deg: float | None
    norm_c: float
    norm_e: float
    norm_n: float | None
    w_c: float
    w_e: float
    w_n: float | None
    branch: str
    degenerate: bool
    dot_g_c: float
    dot_g_e: float
    dot_g_n: float | None
    tau: float
    obtuse_c: bool
    obtuse_e: bool
    obtuse_n: bool | None

    CSV_FIELDS = ("step", "angle_ce_deg", "angle_cen_deg", "w_c", "w_e", "w_n", "branch", "degenerate")

    def csv_row(self, step):
        d = asdict(self)
        row = {"step": step, **{k: d[k] for k in self.CSV_FIELDS[1:]}}
        return {k: ("" if v is None else v) for k, v in row.items()}


def conflict_report(gc, ge, gn=None) -> ConflictReport:
    """Measure the gradient geometry of one step.  Pure; touches no training state."""
    gc, ge = _vec(gc), _vec(ge)
    gn = None if gn is None else _vec(gn)
    w = sc2_weights(gc, ge) if gn is None else sc3_weights(gc, ge, gn)
    g = combine(gc, ge, gn, w)
    tau = tolerance(g, gc, ge, gn)
    dot_ce, nc, ne = dot_and_norms(gc, ge)
    angle_cen = nn = dot_gn = None
    if gn is not None:
        comb = w.w_c * gc + w.w_e * ge
        d, n1, nn = dot_and_norms(comb, gn)
        angle_cen = _angle(comb, gn, n1, nn)
        dot_gn = float(g @ gn)
    dot_gc, dot_ge = float(g @ gc), float(g @ ge)
    return ConflictReport(
        angle_ce_deg=_angle(gc, ge, nc, ne), angle_cen_deg=angle_cen,
        norm_c=nc, norm_e=ne, norm_n=nn,
        w_c=w.w_c, w_e=w.w_e, w_n=w.w_n, branch=w.branch, degenerate=w.degenerate,
        dot_g_c=dot_gc, dot_g_e=dot_ge, dot_g_n=dot_gn, tau=tau,
        obtuse_c=dot_gc < -tau, obtuse_e=dot_ge < -tau,
        obtuse_n=None if dot_gn is None else dot_gn < -tau,
    )


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ConflictReport.CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for step, rep in enumerate(reports):
        writer.writerow(rep.csv_row(step))
    return buf.getvalue()
