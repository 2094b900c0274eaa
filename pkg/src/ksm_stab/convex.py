"""Discrete convex analysis on the dual polytope.

The central object is a convex function u on R^l represented by sampled
Legendre-dual values u* on a grid over P* (class ``ConvexDualGrid``).  The
primal function is recovered as u(y) = max over grid nodes z of
(<y, z> - u*(z)), a piecewise linear convex function, so the integral of
exp(-u) over R^l has closed-form pieces: exactly per segment in 1D, and via a
Fubini sweep (exact inner line integrals, adaptive Simpson outer) in 2D.
Integrals are split into a window part on [-Y, Y]^l and a tail part; the 1D
tails are exact, the 2D strip tail is a certified per-vertex-cone bound.

Grid values are the optimization variables of the Monge-Ampere solver; the
module therefore also provides convexity projection (isotonic regression on
slopes in 1D, lower convex envelope in 2D), per-cell exp(-u) masses and
breakpoint fluxes (the exact gradient/Hessian data of -log int exp(-u)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import isotonic_regression
from scipy.spatial import ConvexHull

from .polytope import DualPolytope, support_function

__all__ = [
    "PLConvex",
    "DualGridGeometry",
    "ConvexDualGrid",
    "WindowTooSmallError",
    "dual_grid_geometry",
    "grid_from_values",
    "pl_exp_integral_1d",
]

DEFAULT_LEVEL = {1: 9, 2: 6}
DEFAULT_WINDOW = {1: 40.0, 2: 20.0}
DEFAULT_STEP = {1: 0.02, 2: 0.25}
TAIL_FRACTION_LIMIT = 1e-6


class WindowTooSmallError(RuntimeError):
    """Primal tail bound exceeds the allowed fraction of the window integral."""


# ---------------------------------------------------------------------------
# piecewise linear convex functions on P*
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PLConvex:
    """phi(z) = max_r (<a_r, z> + b_r) with rational coefficients.

    ``offset`` is the test-configuration constant R; it shifts geodesics but
    never Ding invariants.
    """

    pieces: tuple[tuple[tuple[Fraction, ...], Fraction], ...]
    offset: Fraction = Fraction(0)

    @staticmethod
    def make(pieces, offset=0) -> "PLConvex":
        ps = tuple(
            (tuple(Fraction(x) for x in a), Fraction(b)) for a, b in pieces
        )
        if not ps:
            raise ValueError("need at least one affine piece")
        dim = len(ps[0][0])
        if any(len(a) != dim for a, _ in ps):
            raise ValueError("pieces of mixed dimension")
        return PLConvex(ps, Fraction(offset))

    @property
    def dimension(self) -> int:
        return len(self.pieces[0][0])

    @property
    def slope_array(self) -> np.ndarray:
        return np.array([[float(x) for x in a] for a, _ in self.pieces])

    @property
    def intercept_array(self) -> np.ndarray:
        return np.array([float(b) for _, b in self.pieces])

    @property
    def max_slope_norm(self) -> float:
        return float(np.max(np.linalg.norm(self.slope_array, axis=1)))

    @property
    def is_affine(self) -> bool:
        return len(set(self.pieces)) == 1

    def __call__(self, z):
        zz = np.asarray(z, dtype=float)
        single = zz.ndim <= 1
        zs = np.atleast_2d(zz.reshape(1, -1) if single else zz)
        vals = np.max(zs @ self.slope_array.T + self.intercept_array, axis=1)
        return float(vals[0]) if single else vals

    def value_exact(self, z) -> Fraction:
        zf = tuple(Fraction(x) for x in z)
        return max(sum(a * x for a, x in zip(av, zf)) + b for av, b in self.pieces)

    def at_zero(self) -> float:
        return float(max(b for _, b in self.pieces))

    def kink_points_1d(self, lo: Fraction, hi: Fraction):
        """Exact subdivision of [lo, hi] into maximal intervals of linearity.

        Returns a sorted list of Fraction breakpoints including lo and hi.
        """
        if self.dimension != 1:
            raise ValueError("kink decomposition only in 1D")
        cuts = {Fraction(lo), Fraction(hi)}
        for i in range(len(self.pieces)):
            (ai,), bi = self.pieces[i]
            for j in range(i + 1, len(self.pieces)):
                (aj,), bj = self.pieces[j]
                if ai == aj:
                    continue
                x = (bj - bi) / (ai - aj)
                if lo < x < hi:
                    # keep only genuine kinks of the max
                    vx = self.value_exact((x,))
                    if vx == ai * x + bi:
                        cuts.add(x)
        return sorted(cuts)

    def to_json(self) -> dict:
        return {
            "pieces": [[[str(x) for x in a], str(b)] for a, b in self.pieces],
            "R": str(self.offset),
        }

    @staticmethod
    def from_json(obj) -> "PLConvex":
        return PLConvex.make(
            [(a, b) for a, b in obj["pieces"]], obj.get("R", 0)
        )


# ---------------------------------------------------------------------------
# dual grid geometry
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class DualGridGeometry:
    """Nodes of the uniformly refined origin-cone triangulation of P*.

    1D: sorted nodes over [-1, 1] (2^level cells).  2D: per base triangle an
    edge subdivision into 2^(level-2) parts; ``triangles`` lists node-index
    triples of the subtriangulation.
    """

    dual: DualPolytope
    level: int
    nodes: np.ndarray  # (m, l) float
    nodes_exact: tuple  # tuple of Fraction tuples, same order
    triangles: tuple[tuple[int, int, int], ...]  # empty in 1D
    vertex_node_indices: tuple[int, ...]  # grid index of each dual vertex
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def dimension(self) -> int:
        return self.dual.dimension

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]


def dual_grid_geometry(dual: DualPolytope, level: int | None = None) -> DualGridGeometry:
    l = dual.dimension
    if l not in (1, 2):
        raise ValueError("dual grids implemented for l in {1, 2}")
    if level is None:
        level = DEFAULT_LEVEL[l]
    key = ("grid", level)
    if key in dual._cache:
        return dual._cache[key]

    if l == 1:
        n_cells = 2**level
        # exact nodes; the 1D dual is always [-1, 1]
        exact = [Fraction(-n_cells + 2 * i, n_cells) for i in range(n_cells + 1)]
        nodes = np.array([[float(x)] for x in exact])
        vidx = []
        for v in dual.vertices:
            vidx.append(exact.index(v[0]))
        geom = DualGridGeometry(
            dual, level, nodes, tuple((x,) for x in exact), (), tuple(vidx)
        )
    else:
        k = 2 ** max(level - 2, 0)
        index_of: dict[tuple[Fraction, Fraction], int] = {}
        exact: list[tuple[Fraction, Fraction]] = []

        def node_index(p):
            if p not in index_of:
                index_of[p] = len(exact)
                exact.append(p)
            return index_of[p]

        triangles = []
        pts = dual.tri_points
        for simplex in dual.triangulation:
            v0, v1, v2 = (pts[i] for i in simplex)
            e1 = tuple(v1[c] - v0[c] for c in range(2))
            e2 = tuple(v2[c] - v0[c] for c in range(2))

            def P(i, j):
                return (
                    v0[0] + Fraction(i, k) * e1[0] + Fraction(j, k) * e2[0],
                    v0[1] + Fraction(i, k) * e1[1] + Fraction(j, k) * e2[1],
                )

            for i in range(k):
                for j in range(k - i):
                    a, b, c = node_index(P(i, j)), node_index(P(i + 1, j)), node_index(P(i, j + 1))
                    triangles.append((a, b, c))
                    if i + j < k - 1:
                        d = node_index(P(i + 1, j + 1))
                        triangles.append((b, d, c))
        nodes = np.array([[float(x), float(y)] for x, y in exact])
        vidx = tuple(index_of[v] for v in dual.vertices)
        geom = DualGridGeometry(
            dual, level, nodes, tuple(exact), tuple(triangles), vidx
        )
    dual._cache[key] = geom
    return geom


# ---------------------------------------------------------------------------
# exact 1D piecewise-linear exponential integrals
# ---------------------------------------------------------------------------


def _segment_exp_mass(u_lo, u_hi, width):
    """int_0^w exp(-(affine from u_lo to u_hi)) dt, stable for small slopes."""
    d = u_hi - u_lo
    if width == 0.0:
        return 0.0
    if abs(d) < 1e-12:
        return width * np.exp(-u_lo) * (1.0 - d / 2.0)
    return width * np.exp(-u_lo) * (-np.expm1(-d)) / d


def pl_exp_integral_1d(slopes, intercepts, window=None, node_ids=None):
    """Integral of exp(-max_j(slopes[j] * y - intercepts[j])) over R.

    The lines' upper envelope is built exactly (slope order); returns a dict
    with the total, its always-finite ``log_total``, window and tail parts,
    per-line cell masses (zero for inactive lines), breakpoints, active line
    ids and breakpoint fluxes.  Masses and fluxes carry a common scale
    exp(``mass_log_scale``) so that arbitrarily shifted data (long geodesics)
    never under/overflows; normalized masses are exact.  Diverges unless
    min slope < 0 < max slope.
    """
    s = np.asarray(slopes, dtype=float)
    q = np.asarray(intercepts, dtype=float)
    n = len(s)
    ids = np.arange(n) if node_ids is None else np.asarray(node_ids)
    order = np.lexsort((q, s))
    s_o, q_o = s[order], q[order]
    # among equal slopes only the line with the smallest intercept survives
    keep = np.ones(n, dtype=bool)
    keep[1:] = s_o[1:] != s_o[:-1]
    pos = order[keep]
    s_o, q_o = s_o[keep], q_o[keep]

    # upper envelope of lines y -> s*y - q (monotone stack over slopes)
    act: list[int] = []
    bps: list[float] = []
    for i in range(len(s_o)):
        while act:
            j = act[-1]
            x = (q_o[i] - q_o[j]) / (s_o[i] - s_o[j])
            if bps and x <= bps[-1]:
                act.pop()
                bps.pop()
            else:
                bps.append(x)
                break
        act.append(i)
    if s_o[act[0]] >= 0 or s_o[act[-1]] <= 0:
        raise WindowTooSmallError(
            "exp integral diverges: active slopes do not straddle zero"
        )
    act_arr = np.array(act)
    sa, qa = s_o[act_arr], q_o[act_arr]
    b = np.asarray(bps)
    # u at breakpoints (value of the active line on each side, equal there)
    ub = sa[:-1] * b - qa[:-1]

    # all exponentials are taken relative to the plateau level s0 = min u, so
    # arbitrarily shifted data (long geodesics) never under/overflows
    s0 = float(np.min(ub))
    qs = qa + s0  # intercepts of the shifted function u - s0

    K = len(act_arr)
    masses_active = np.zeros(K)
    masses_active[0] = np.exp(-(ub[0] - s0)) / (-sa[0])
    masses_active[-1] = np.exp(-(ub[-1] - s0)) / sa[-1]
    if K > 2:
        uL = sa[1:-1] * b[:-1] - qs[1:-1]
        uR = sa[1:-1] * b[1:] - qs[1:-1]
        widths = np.diff(b)
        d = uR - uL
        safe = np.where(d == 0, 1.0, d)
        core = np.where(np.abs(d) > 1e-12, -np.expm1(-safe) / safe, 1.0 - d / 2.0)
        masses_active[1:-1] = widths * np.exp(-uL) * core

    scaled_total = float(np.sum(masses_active))
    log_total = float(np.log(scaled_total) - s0)

    scaled_tail = 0.0
    if window is not None:
        Y = float(window)

        def mass_outside(side):
            # side = +1: [Y, inf); side = -1: (-inf, -Y]; shifted scale
            out = 0.0
            for k in range(K):
                lo = b[k - 1] if k > 0 else -np.inf
                hi = b[k] if k < K - 1 else np.inf
                if side > 0:
                    lo = max(lo, Y)
                else:
                    hi = min(hi, -Y)
                if lo >= hi:
                    continue
                sk, qk = sa[k], qs[k]
                if hi == np.inf:
                    out += np.exp(-(sk * lo - qk)) / sk
                elif lo == -np.inf:
                    out += np.exp(-(sk * hi - qk)) / (-sk)
                else:
                    out += _segment_exp_mass(sk * lo - qk, sk * hi - qk, hi - lo)
            return out

        scaled_tail = mass_outside(+1) + mass_outside(-1)
    scaled_window = scaled_total - scaled_tail

    masses = np.zeros(n)
    masses[pos[act_arr]] = masses_active
    fluxes = np.exp(-(ub - s0))
    with np.errstate(over="ignore", under="ignore"):
        total = float(np.exp(log_total))
        window_true = float(scaled_window * np.exp(-s0))
        tail_true = float(scaled_tail * np.exp(-s0))
    return {
        "total": total,
        "log_total": log_total,
        "window": window_true,
        "tail": tail_true,
        "tail_fraction": scaled_tail / scaled_window if scaled_window > 0 else np.inf,
        # masses and fluxes are scaled by exp(mass_log_scale) = exp(s0)
        # relative to the true exp(-u) masses; their normalized versions are
        # exact, and sum(masses) * exp(-s0) = total
        "masses": masses,
        "mass_log_scale": s0,
        "breakpoints": b,
        "active": ids[pos[act_arr]],
        "active_positions": pos[act_arr],
        "active_slopes": sa,
        "fluxes": fluxes,
    }


# ---------------------------------------------------------------------------
# the dual-grid convex function
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class ConvexDualGrid:
    """Convex u on R^l given by dual values u* on a grid over P*."""

    geom: DualGridGeometry
    values: np.ndarray
    window: float
    step: float

    @property
    def dual(self) -> DualPolytope:
        return self.geom.dual

    @property
    def dimension(self) -> int:
        return self.geom.dimension

    @property
    def nodes(self) -> np.ndarray:
        return self.geom.nodes

    def with_values(self, values, window=None) -> "ConvexDualGrid":
        return ConvexDualGrid(
            self.geom,
            np.asarray(values, dtype=float).copy(),
            self.window if window is None else float(window),
            self.step,
        )

    def shifted(self, c: float) -> "ConvexDualGrid":
        """Add the constant c to u (subtract it from every dual value)."""
        return self.with_values(self.values - c)

    # -- convexity ---------------------------------------------------------

    def is_grid_convex(self, tol: float = 1e-9) -> bool:
        scale = 1.0 + float(np.max(np.abs(self.values)))
        if self.dimension == 1:
            z = self.nodes[:, 0]
            sl = np.diff(self.values) / np.diff(z)
            return bool(np.all(np.diff(sl) >= -tol * scale))
        env = self.convexify().values
        return bool(np.all(self.values >= env - tol * scale))

    def convexify(self) -> "ConvexDualGrid":
        """Project the dual values onto grid-convex ones.

        1D: isotonic regression on the slope sequence (PAV), anchored to
        preserve the mean value.  2D: lower convex envelope.
        """
        if self.dimension == 1:
            z = self.nodes[:, 0]
            dz = np.diff(z)
            sl = isotonic_regression(np.diff(self.values) / dz).x
            out = np.concatenate([[0.0], np.cumsum(sl * dz)]) + self.values[0]
            out += self.values.mean() - out.mean()
            return self.with_values(out)
        env = self.biconjugate_values()
        return self.with_values(np.minimum(self.values, env))

    # -- conjugation -------------------------------------------------------

    def _envelope_1d(self):
        z = self.nodes[:, 0]
        res = pl_exp_integral_1d(z, self.values, window=self.window)
        return res

    def _lower_hull_2d(self):
        """Indices of active nodes and lower-hull facets of (z, u*)."""
        key = ("hull", self.values.tobytes())
        cache = self.geom._cache.setdefault("hulls", {})
        if key in cache:
            return cache[key]
        pts = np.column_stack([self.nodes, self.values])
        # an apex far above keeps Qhull non-degenerate for affine value sets
        apex = np.append(
            self.nodes.mean(axis=0),
            self.values.max() + 10.0 * (np.ptp(self.values) + 1.0),
        )
        hull = ConvexHull(np.vstack([pts, apex]))
        m = self.geom.n_nodes
        facets = []
        for simplex, eq in zip(hull.simplices, hull.equations):
            if eq[2] < -1e-12 and m not in simplex:  # lower facet, apex-free
                facets.append((tuple(int(i) for i in simplex), eq))
        active = sorted({i for f, _ in facets for i in f})
        out = (np.array(active), facets)
        if len(cache) > 8:
            cache.clear()
        cache[key] = out
        return out

    def active_nodes(self) -> np.ndarray:
        if self.dimension == 1:
            return np.asarray(self._envelope_1d()["active"])
        return self._lower_hull_2d()[0]

    def primal_value(self, y) -> float | np.ndarray:
        """u(y) = max over grid nodes of <y, z> - u*(z)."""
        yy = np.asarray(y, dtype=float)
        single = yy.ndim <= 1
        ys = np.atleast_2d(yy.reshape(1, -1) if single else yy)
        if self.dimension == 1:
            act = self.active_nodes()
            Z = self.nodes[act]
            V = self.values[act]
        else:
            act = self.active_nodes()
            Z, V = self.nodes[act], self.values[act]
        out = np.empty(ys.shape[0])
        chunk = max(1, int(4_000_000 / max(len(V), 1)))
        for i in range(0, ys.shape[0], chunk):
            out[i : i + chunk] = np.max(ys[i : i + chunk] @ Z.T - V, axis=1)
        return float(out[0]) if single else out

    def primal_grid(self):
        """(y_grid, u values) on the window lattice with the stored step."""
        n = int(round(self.window / self.step))
        axis = np.linspace(-self.window, self.window, 2 * n + 1)
        if self.dimension == 1:
            return axis.reshape(-1, 1), self.primal_value(axis.reshape(-1, 1))
        Y1, Y2 = np.meshgrid(axis, axis, indexing="ij")
        pts = np.column_stack([Y1.ravel(), Y2.ravel()])
        return pts, self.primal_value(pts)

    # -- exp(-u) integrals --------------------------------------------------

    def exp_integral(self, *, full: bool = False, outer_tol: float = 1e-8) -> dict:
        """Integral of exp(-u) over R^l split into window and tail parts.

        1D both parts are exact closed forms.  2D integrates the strip
        |y_2| <= Y with exact inner line integrals and an adaptive Simpson
        sweep, and adds a certified per-vertex-cone bound for the rest.
        Raises WindowTooSmallError when the tail exceeds the allowed fraction
        of the window part (skipped with ``full=True``).
        """
        if self.dimension == 1:
            res = self._envelope_1d()
            out = {
                "total": res["total"],
                "log_total": res["log_total"],
                "window": res["window"],
                "tail": res["tail"],
                "tail_fraction": res["tail_fraction"],
                "masses": res["masses"],
            }
        else:
            out = self._exp_integral_2d(outer_tol)
        if not full and out["tail_fraction"] > TAIL_FRACTION_LIMIT:
            raise WindowTooSmallError(
                f"tail bound fraction {out['tail_fraction']:.3e} exceeds "
                f"{TAIL_FRACTION_LIMIT:.0e} of the window integral; enlarge the window"
            )
        return out

    def _strip_sweep(self, n_outer: int):
        """Composite-Simpson sweep over y2 in [-Y, Y] with exact inner
        integrals, combined in log space (positive Simpson weights)."""
        act = self.active_nodes()
        Z, V = self.nodes[act], self.values[act]
        ys = np.linspace(-self.window, self.window, n_outer + 1)
        w = np.ones(n_outer + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (ys[1] - ys[0]) / 3.0
        log_terms = np.empty(n_outer + 1)
        fracs = np.empty((n_outer + 1, len(act)))
        for i, (y2, wy) in enumerate(zip(ys, w)):
            res = pl_exp_integral_1d(Z[:, 0], V - Z[:, 1] * y2, node_ids=act)
            log_terms[i] = math.log(wy) + res["log_total"]
            m = res["masses"]
            fracs[i] = m / np.sum(m)
        mx = float(np.max(log_terms))
        scaled = np.exp(log_terms - mx)
        log_window = mx + math.log(float(np.sum(scaled)))
        masses = np.zeros(self.geom.n_nodes)
        masses[act] = scaled @ fracs  # proportional to the true cell masses
        return log_window, masses

    def _exp_integral_2d(self, outer_tol: float = 1e-8) -> dict:
        # the outer integrand has kinks where the primal cell complex crosses
        # the sweep line, so composite Simpson converges like n^-3; loose
        # tolerances (solver gradients) stop the doubling early
        n = 128
        prev, masses = self._strip_sweep(n)
        while True:
            n *= 2
            cur, masses = self._strip_sweep(n)
            if abs(cur - prev) <= outer_tol or n >= 4096:
                break
            prev = cur
        # tail bound per vertex cone: on the normal cone of a dual vertex p,
        # u(y) >= <y, p> - u*(p) = v(y) - u*(p), and outside the window box
        # v >= M, so the cone contributes at most e^{u*(p)} (1+M) e^{-M}
        u_at_vertices = self.values[list(self.geom.vertex_node_indices)]
        M = self._support_min_on_box_boundary()
        mx = float(np.max(u_at_vertices))
        log_sum = mx + math.log(float(np.sum(np.exp(u_at_vertices - mx))))
        log_tail = log_sum + math.log(1.0 + M) - M
        tail_fraction = math.exp(log_tail - cur)
        log_total = cur + math.log1p(tail_fraction)
        with np.errstate(over="ignore", under="ignore"):
            out = {
                "total": float(np.exp(log_total)),
                "log_total": log_total,
                "window": float(np.exp(cur)),
                "tail": float(np.exp(log_tail)),
                "tail_fraction": tail_fraction,
                "masses": masses,
            }
        return out

    def _support_min_on_box_boundary(self) -> float:
        """Exact min of the support function v_{P*} on the window box boundary."""
        V = self.dual.vertex_array
        Y = self.window
        best = np.inf
        corners = [(-Y, -Y), (-Y, Y), (Y, -Y), (Y, Y)]
        segs = [(corners[0], corners[1]), (corners[1], corners[3]), (corners[3], corners[2]), (corners[2], corners[0])]
        for (p, q) in segs:
            p = np.array(p)
            d = np.array(q) - p
            a = V @ d  # affine slopes of <y(t), v_i>
            b = V @ p
            cand = {0.0, 1.0}
            for i in range(len(a)):
                for j in range(i + 1, len(a)):
                    if a[i] != a[j]:
                        t = (b[j] - b[i]) / (a[i] - a[j])
                        if 0.0 < t < 1.0:
                            cand.add(float(t))
            for t in cand:
                best = min(best, float(np.max(a * t + b)))
        return best

    # -- dual-side utilities -------------------------------------------------

    def interpolate(self, z) -> float:
        """Value of the PL grid function u* at a point z of P*."""
        zz = np.atleast_1d(np.asarray(z, dtype=float))
        if self.dimension == 1:
            return float(np.interp(zz[0], self.nodes[:, 0], self.values))
        for (i, j, k) in self.geom.triangles:
            A = np.column_stack([self.nodes[j] - self.nodes[i], self.nodes[k] - self.nodes[i]])
            try:
                lam = np.linalg.solve(A, zz - self.nodes[i])
            except np.linalg.LinAlgError:
                continue
            l1, l2 = lam
            l0 = 1.0 - l1 - l2
            if min(l0, l1, l2) >= -1e-10:
                return float(l0 * self.values[i] + l1 * self.values[j] + l2 * self.values[k])
        raise ValueError(f"point {z} not inside the dual grid")

    def biconjugate_values(self) -> np.ndarray:
        """((u*)*)* sampled back on the grid nodes (exact for the PL model)."""
        if self.dimension == 1:
            res = self._envelope_1d()
            b = res["breakpoints"]
            act = res["active"]
            # u at breakpoints
            sa = self.nodes[act, 0]
            va = self.values[act]
            ub = sa[:-1] * b - va[:-1]
            z = self.nodes[:, 0]
            if len(b) == 0:
                return self.values.copy()
            vals = np.max(np.outer(z, b) - ub, axis=1)
            # beyond the extreme active slopes the sup is attained at infinity;
            # nodes outside [min sa, max sa] keep their raw value
            out = np.where((z >= sa[0]) & (z <= sa[-1]), vals, self.values)
            return out
        act, facets = self._lower_hull_2d()
        ys, uys = [], []
        for simplex, eq in facets:
            a, bcoef, c, d = eq
            yT = np.array([-a / c, -bcoef / c])
            i0 = simplex[0]
            uT = float(yT @ self.nodes[i0] - self.values[i0])
            ys.append(yT)
            uys.append(uT)
        ys = np.array(ys)
        uys = np.array(uys)
        return np.max(self.nodes @ ys.T - uys, axis=1)

    def is_psh_b(self, bound: float) -> bool:
        """PSH_b membership flag: |u - v_{P*}| stays within ``bound`` on the
        window boundary (grid data is always PSH and E^1)."""
        return self.psh_b_bound() <= bound

    def psh_b_bound(self) -> float:
        """max |u - v_{P*}| over the window boundary (PSH_b certificate)."""
        Y = self.window
        if self.dimension == 1:
            pts = np.array([[-Y], [Y]])
        else:
            t = np.linspace(-Y, Y, 201)
            pts = np.vstack(
                [
                    np.column_stack([t, np.full_like(t, -Y)]),
                    np.column_stack([t, np.full_like(t, Y)]),
                    np.column_stack([np.full_like(t, -Y), t]),
                    np.column_stack([np.full_like(t, Y), t]),
                ]
            )
        u = self.primal_value(pts)
        v = support_function(self.dual, pts)
        return float(np.max(np.abs(u - v)))


def grid_from_values(
    dual: DualPolytope,
    values,
    *,
    level: int | None = None,
    window: float | None = None,
    step: float | None = None,
) -> ConvexDualGrid:
    """Build a ConvexDualGrid from nodal values or a callable on nodes."""
    geom = dual_grid_geometry(dual, level)
    l = dual.dimension
    if callable(values):
        vals = np.asarray(values(geom.nodes), dtype=float)
    else:
        vals = np.asarray(values, dtype=float)
    if vals.shape != (geom.n_nodes,):
        raise ValueError(f"expected {geom.n_nodes} nodal values, got {vals.shape}")
    return ConvexDualGrid(
        geom,
        vals,
        DEFAULT_WINDOW[l] if window is None else float(window),
        DEFAULT_STEP[l] if step is None else float(step),
    )


def support_grid(dual: DualPolytope, **kw) -> ConvexDualGrid:
    """The grid with u* = 0, i.e. u = v_{P*} (useful for N0 identities)."""
    return grid_from_values(dual, lambda zs: np.zeros(zs.shape[0]), **kw)
