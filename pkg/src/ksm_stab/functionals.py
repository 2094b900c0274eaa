"""Functionals built from the dual-polytope weight g.

For a KSM datum with weight h, a multiplier profile sigma and a fiber field
with affine potential k(z) = -<c, z> + C_V, the weight

    g(z) = h(z) * exp(-sigma(k(z)))

transports every functional of the theory to the dual polytope: the reduced
Futaki vector int z g dz (whose vanishing is the existence criterion), the
Ding functional D(u) = (1/|P*|_g) int u* g - log int exp(-u), Ding invariants
of piecewise linear test data, the reduced J functionals, toric geodesics and
coercivity probes.

When the field touches the admissible boundary (k_min = alpha with sigma
blowing up there), g vanishes on a face of P* like (k - alpha)^e; the 1D
integrators then switch to Gauss-Jacobi rules with the singular factor as
weight, which restores spectral accuracy that uniform refinement cannot
deliver on such integrands.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import roots_jacobi

from .convex import (
    ConvexDualGrid,
    PLConvex,
    grid_from_values,
)
from .ksm import HStats, KSMData, h_stats, h_values
from .polytope import DualPolytope, QuadratureError, integrate
from .sigma import SigmaProfile

__all__ = [
    "FiberField",
    "GStats",
    "Verdict",
    "DomainError",
    "normalize_field",
    "field_from_json",
    "g_weight",
    "g_stats",
    "stability_verdict",
    "Functionals",
]

BARYCENTER_TOL = 1e-8  # default verdict tolerance on ||b_g||
BOUNDARY_DETECT_TOL = 1e-13


class DomainError(ValueError):
    """Fiber potential leaves the admissible sigma domain."""


# ---------------------------------------------------------------------------
# fiber fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FiberField:
    """Fiber-directed holomorphic field, reduced to k(z) = -<c, z> + C_V.

    The normalization C_V = <c, b_h> makes the h-weighted mean of k vanish.
    Exact rational channels are carried along whenever the coefficients were
    given as rationals, so boundary potentials like k(1) = -1 are exact.
    """

    coeffs: tuple[float, ...]
    C_V: float
    vertex_values: tuple[float, ...]  # k at the dual vertices, vertex order
    coeffs_exact: tuple[Fraction, ...] | None = None
    C_V_exact: Fraction | None = None
    vertex_values_exact: tuple[Fraction, ...] | None = None

    @property
    def dimension(self) -> int:
        return len(self.coeffs)

    @property
    def k_min(self) -> float:
        return min(self.vertex_values)

    @property
    def k_max(self) -> float:
        return max(self.vertex_values)

    @property
    def c_array(self) -> np.ndarray:
        return np.asarray(self.coeffs, dtype=float)

    def k_values(self, zs) -> np.ndarray:
        zs = np.asarray(zs, dtype=float)
        return -(zs @ self.c_array) + self.C_V

    def k_at(self, z) -> float:
        return float(self.k_values(np.atleast_1d(np.asarray(z, dtype=float)).reshape(1, -1))[0])

    def as_pl(self) -> PLConvex:
        if self.coeffs_exact is not None:
            return PLConvex.make([(tuple(-x for x in self.coeffs_exact), self.C_V_exact)])
        return PLConvex.make([(tuple(Fraction(-x) for x in self.coeffs), Fraction(self.C_V))])

    def to_json(self) -> dict:
        if self.coeffs_exact is not None:
            return {"c": [str(x) for x in self.coeffs_exact]}
        return {"c": list(self.coeffs)}


def _maybe_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return None


def normalize_field(c, hstats: HStats, dual: DualPolytope) -> FiberField:
    """Build the FiberField with C_V = <c, b_h> (h-weighted mean zero)."""
    c_seq = list(c if isinstance(c, (list, tuple, np.ndarray)) else [c])
    exact = [_maybe_fraction(x) for x in c_seq]
    if all(e is not None for e in exact):
        ce = tuple(exact)
        C_V_e = sum(x * b for x, b in zip(ce, hstats.barycenter_h_exact))
        vvals_e = tuple(
            -sum(x * z for x, z in zip(ce, v)) + C_V_e for v in dual.vertices
        )
        return FiberField(
            coeffs=tuple(float(x) for x in ce),
            C_V=float(C_V_e),
            vertex_values=tuple(float(v) for v in vvals_e),
            coeffs_exact=ce,
            C_V_exact=C_V_e,
            vertex_values_exact=vvals_e,
        )
    cf = tuple(float(x) for x in c_seq)
    C_V = float(np.dot(cf, hstats.barycenter_h))
    vvals = tuple(
        float(-np.dot(cf, [float(x) for x in v]) + C_V) for v in dual.vertices
    )
    return FiberField(coeffs=cf, C_V=C_V, vertex_values=vvals)


def field_from_json(obj, hstats: HStats, dual: DualPolytope) -> FiberField:
    return normalize_field(obj["c"], hstats, dual)


def field_domain_margins(field: FiberField, profile: SigmaProfile) -> tuple[float, float]:
    """(k_min - alpha, beta - k_max); both must be positive in uniform mode."""
    return field.k_min - profile.alpha, profile.beta - field.k_max


def boundary_vertex(field: FiberField, profile: SigmaProfile, dual: DualPolytope):
    """Index of the dual vertex where k attains alpha, or None.

    Exact when the field carries rational data; otherwise within
    BOUNDARY_DETECT_TOL of alpha.
    """
    if not math.isfinite(profile.alpha):
        return None
    alpha = profile.alpha
    if field.vertex_values_exact is not None and float(Fraction(alpha)) == alpha:
        af = Fraction(alpha)
        for i, v in enumerate(field.vertex_values_exact):
            if v == af:
                return i
        if min(field.vertex_values_exact) > af:
            return None
    scale = 1.0 + abs(alpha)
    i = int(np.argmin(field.vertex_values))
    if abs(field.vertex_values[i] - alpha) <= BOUNDARY_DETECT_TOL * scale:
        return i
    return None


def check_field_domain(
    field: FiberField, profile: SigmaProfile, dual: DualPolytope, *, allow_boundary=False
):
    lo, hi = field_domain_margins(field, profile)
    if hi <= 0:
        raise DomainError(
            f"k_max = {field.k_max} is not below the profile domain end {profile.beta}"
        )
    if lo < 0:
        if not (allow_boundary and boundary_vertex(field, profile, dual) is not None):
            raise DomainError(
                f"k_min = {field.k_min} lies below the profile domain start {profile.alpha}"
            )
    if lo == 0 or boundary_vertex(field, profile, dual) is not None:
        if not allow_boundary:
            raise DomainError(
                "potential touches the domain boundary (non-uniform mode); "
                "pass allow_boundary=True to accept"
            )


# ---------------------------------------------------------------------------
# the weight g and its integrals
# ---------------------------------------------------------------------------


def _f_values(profile: SigmaProfile, ts: np.ndarray) -> np.ndarray:
    """exp(-sigma(t)) vectorized, robust at the vanishing endpoint."""
    ts = np.asarray(ts, dtype=float)
    e = profile.boundary_exponent
    if e is not None:
        base = np.maximum(ts - profile.alpha, 0.0)
        return base**e * profile.f_regular(ts)
    val, _, _ = profile._impl(ts)
    return np.exp(-val)


def g_values(data: KSMData, profile: SigmaProfile, field: FiberField, zs) -> np.ndarray:
    zs = np.asarray(zs, dtype=float)
    k = field.k_values(zs)
    if np.any(k < profile.alpha - 1e-9) or np.any(k >= profile.beta):
        raise DomainError("potential value outside [alpha, beta) on the given points")
    return h_values(data, zs) * _f_values(profile, np.clip(k, profile.alpha, None))


def g_weight(data: KSMData, profile: SigmaProfile, field: FiberField, z) -> float:
    """g(z) = h(z) exp(-sigma(k(z))) at a single point of P*."""
    zz = np.atleast_1d(np.asarray(z, dtype=float))
    if not data.dual().contains(zz):
        raise DomainError(f"point {z} lies outside the dual polytope")
    return float(g_values(data, profile, field, zz.reshape(1, -1))[0])


@dataclass(frozen=True)
class _Singular1D:
    """g = (k - alpha)^e * regular with the zero at dual vertex +-1 (1D)."""

    side: int  # +1: zero at z = 1, -1: zero at z = -1
    exponent: float
    scale: float  # |c|, from k - alpha = |c| (1 -+ z)


def _singularity_1d(data, profile, field) -> _Singular1D | None:
    if data.fiber_dimension != 1 or profile.boundary_exponent is None:
        return None
    dual = data.dual()
    bi = boundary_vertex(field, profile, dual)
    if bi is None:
        return None
    zv = float(dual.vertices[bi][0])
    return _Singular1D(
        side=1 if zv > 0 else -1,
        exponent=float(profile.boundary_exponent),
        scale=abs(field.coeffs[0]),
    )


def _gauss_jacobi_rule(n: int, a: float, b: float):
    x, w = roots_jacobi(n, a, b)
    return x, w


def _integral_singular_1d(fn_regular, sing: _Singular1D, *, tol=1e-13, n0=48, nmax=400):
    """int_{-1}^1 (1 -+ z)^e * fn_regular(z) dz via adaptive Gauss-Jacobi."""
    a, b = (sing.exponent, 0.0) if sing.side > 0 else (0.0, sing.exponent)
    n = n0
    x, w = _gauss_jacobi_rule(n, a, b)
    prev = float(w @ fn_regular(x))
    while True:
        n = int(n * 1.6)
        x, w = _gauss_jacobi_rule(n, a, b)
        cur = float(w @ fn_regular(x))
        if abs(cur - prev) <= tol * (1.0 + abs(cur)) or n >= nmax:
            return cur
        prev = cur


def g_integral(data, profile, field, poly_fn, *, tol=None):
    """int_{P*} poly_fn(z) g(z) dz with singularity-aware 1D quadrature.

    ``poly_fn`` maps an (m, l) batch to (m,) values and must be smooth.
    """
    dual = data.dual()
    sing = _singularity_1d(data, profile, field)
    if sing is None:
        return integrate(
            dual,
            lambda zs: poly_fn(zs) * g_values(data, profile, field, zs),
            tol=tol,
        )

    def regular(x):
        zs = x.reshape(-1, 1)
        k = field.k_values(zs)
        return (
            poly_fn(zs)
            * h_values(data, zs)
            * profile.f_regular(k)
            * sing.scale**sing.exponent
        )

    return _integral_singular_1d(regular, sing, tol=tol or 1e-13)


@dataclass(frozen=True)
class GStats:
    """g-weighted volume, barycenter, reduced Futaki vector and the bounds
    A <= exp(-sigma(k)) <= B over P* (A = 0 exactly in non-uniform mode)."""

    volume_g: float
    barycenter_g: np.ndarray
    reduced_futaki: np.ndarray
    A: float
    B: float

    @property
    def futaki_norm(self) -> float:
        return float(np.linalg.norm(self.reduced_futaki))


def g_stats(
    data: KSMData,
    profile: SigmaProfile,
    field: FiberField,
    *,
    allow_boundary: bool = True,
    tol: float | None = None,
) -> GStats:
    """All g-moments of P*.  The reduced Futaki vector is (int z_k g dz)_k, the
    existence criterion being its vanishing; it drops the fixed positive
    base-fiber factor, so only its vanishing and sign carry meaning."""
    dual = data.dual()
    check_field_domain(field, profile, dual, allow_boundary=allow_boundary)
    l = data.fiber_dimension
    vol = g_integral(data, profile, field, lambda zs: np.ones(zs.shape[0]), tol=tol)
    fut = np.array(
        [
            g_integral(data, profile, field, lambda zs, k=k: zs[:, k], tol=tol)
            for k in range(l)
        ]
    )
    ts = np.linspace(field.k_min, field.k_max, 2001)
    fvals = _f_values(profile, np.clip(ts, profile.alpha, None))
    return GStats(
        volume_g=vol,
        barycenter_g=fut / vol,
        reduced_futaki=fut,
        A=float(np.min(fvals)),
        B=float(np.max(fvals)),
    )


# ---------------------------------------------------------------------------
# stability verdict
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Verdict:
    status: str  # "polystable_uniform" | "polystable_nonuniform" | "unstable"
    barycenter_norm: float
    barycenter_g: tuple[float, ...]
    reduced_futaki: tuple[float, ...]
    tol: float
    boundary_touching: bool
    destabilizer: dict | None  # {"pieces": ..., "invariant": float} when unstable

    @property
    def polystable(self) -> bool:
        return self.status.startswith("polystable")

    def to_json(self) -> dict:
        return {
            "status": self.status,
            "barycenter_g": list(self.barycenter_g),
            "barycenter_norm": self.barycenter_norm,
            "reduced_futaki": list(self.reduced_futaki),
            "tol": self.tol,
            "boundary_touching": self.boundary_touching,
            "destabilizer": self.destabilizer,
        }


def stability_verdict(
    stats: GStats,
    profile: SigmaProfile,
    field: FiberField,
    data: KSMData,
    tol: float = BARYCENTER_TOL,
) -> Verdict:
    """Classify (data, sigma, field): polystable (uniform or non-uniform when
    k_min = alpha) versus unstable, with the coordinate destabilizer and its
    Ding invariant in the unstable case."""
    bnorm = float(np.linalg.norm(stats.barycenter_g))
    boundary = boundary_vertex(field, profile, data.dual()) is not None
    if bnorm <= tol:
        status = "polystable_nonuniform" if boundary else "polystable_uniform"
        dest = None
    else:
        status = "unstable"
        k = int(np.argmax(np.abs(stats.reduced_futaki)))
        sign = 1.0 if stats.reduced_futaki[k] > 0 else -1.0
        a = tuple(
            Fraction(-int(sign)) if j == k else Fraction(0)
            for j in range(field.dimension)
        )
        phi = PLConvex.make([(a, Fraction(0))])
        fn = Functionals(data, profile, field, gstats=stats)
        dest = {"pieces": phi.to_json(), "invariant": fn.ding_invariant(phi)}
    return Verdict(
        status=status,
        barycenter_norm=bnorm,
        barycenter_g=tuple(float(x) for x in stats.barycenter_g),
        reduced_futaki=tuple(float(x) for x in stats.reduced_futaki),
        tol=tol,
        boundary_touching=boundary,
        destabilizer=dest,
    )


# ---------------------------------------------------------------------------
# functional context: Ding, J, geodesics, probes
# ---------------------------------------------------------------------------


class Functionals:
    """All g-weighted functionals for one (data, profile, field) triple.

    Caches hat-function weights per grid geometry so Ding/J evaluations on a
    fixed grid are O(#nodes) dot products.
    """

    def __init__(self, data, profile, field, *, hstats=None, gstats=None):
        self.data = data
        self.profile = profile
        self.field = field
        self.dual = data.dual()
        self.hstats = hstats or h_stats(data)
        self.gstats = gstats or g_stats(data, profile, field)
        self._hat_cache: dict = {}

    # -- nodal quadrature weights ------------------------------------------

    def _weight_values(self, kind, zs):
        if kind == "g":
            return g_values(self.data, self.profile, self.field, zs)
        return h_values(self.data, zs)

    def hat_weights(self, geom, kind: str) -> np.ndarray:
        """w_j = int hat_j(z) * weight(z) dz over P* for every grid node j."""
        key = (id(geom), kind)
        if key in self._hat_cache:
            return self._hat_cache[key]
        if geom.dimension == 1:
            w = self._hat_weights_1d(geom, kind)
        else:
            w = self._hat_weights_2d(geom, kind)
        self._hat_cache[key] = w
        return w

    def _hat_weights_1d(self, geom, kind) -> np.ndarray:
        z = geom.nodes[:, 0]
        m = len(z)
        out = np.zeros(m)
        sing = _singularity_1d(self.data, self.profile, self.field) if kind == "g" else None
        xg, wg = leggauss(8)
        for i in range(m - 1):
            a, b = z[i], z[i + 1]
            singular_here = sing is not None and (
                (sing.side > 0 and i == m - 2) or (sing.side < 0 and i == 0)
            )
            if not singular_here:
                x = 0.5 * (a + b) + 0.5 * (b - a) * xg
                wq = 0.5 * (b - a) * wg
                vals = self._weight_values(kind, x.reshape(-1, 1))
            else:
                e = sing.exponent
                ja, jb = (e, 0.0) if sing.side > 0 else (0.0, e)
                xj, wj = _gauss_jacobi_rule(60, ja, jb)
                x = 0.5 * (a + b) + 0.5 * (b - a) * xj
                half = 0.5 * (b - a)
                # (1 -+ z) = half * (1 -+ x) on the cell touching the vertex
                wq = wj * half ** (e + 1.0)
                zs = x.reshape(-1, 1)
                vals = (
                    h_values(self.data, zs)
                    * self.profile.f_regular(self.field.k_values(zs))
                    * sing.scale**e
                )
            lam = (x - a) / (b - a)
            out[i] += np.sum(wq * vals * (1.0 - lam))
            out[i + 1] += np.sum(wq * vals * lam)
        return out

    def _hat_weights_2d(self, geom, kind) -> np.ndarray:
        from .polytope import _reference_rule

        ref_nodes, ref_w = _reference_rule(2, 10)
        lam12 = ref_nodes
        lam0 = 1.0 - ref_nodes.sum(axis=1)
        out = np.zeros(geom.n_nodes)
        for (i, j, k) in geom.triangles:
            vi, vj, vk = geom.nodes[i], geom.nodes[j], geom.nodes[k]
            J = np.column_stack([vj - vi, vk - vi])
            detJ = abs(float(np.linalg.det(J)))
            pts = ref_nodes @ J.T + vi
            vals = self._weight_values(kind, pts) * ref_w * detJ
            out[i] += float(vals @ lam0)
            out[j] += float(vals @ lam12[:, 0])
            out[k] += float(vals @ lam12[:, 1])
        return out

    # -- core functionals ----------------------------------------------------

    def grid(self, level=None, *, window=None, values=None) -> ConvexDualGrid:
        if values is None:
            values = lambda zs: np.zeros(zs.shape[0])
        return grid_from_values(self.dual, values, level=level, window=window)

    def ding(self, u: ConvexDualGrid, *, return_parts: bool = False):
        """D(u) = (1/|P*|_g) int u* g dz - log int exp(-u) dy."""
        wg = self.hat_weights(u.geom, "g")
        dual_part = float(wg @ u.values) / self.gstats.volume_g
        res = u.exp_integral()
        D = dual_part - res["log_total"]
        if return_parts:
            return D, {
                "dual_part": dual_part,
                "exp_integral": res["total"],
                "log_exp_integral": res["log_total"],
                "tail": res["tail"],
                "tail_fraction": res["tail_fraction"],
            }
        return D

    def j_red(self, u: ConvexDualGrid) -> float:
        """J_red(u) = (1/|P*|_h) int u* h dz - u*(b_h) (nonnegative)."""
        wh = self.hat_weights(u.geom, "h")
        return float(wh @ u.values) / self.hstats.volume_h - u.interpolate(
            self.hstats.barycenter_h
        )

    def j_sigma(self, u: ConvexDualGrid) -> float:
        """J^sigma_red(u) = (1/|P*|_g) int u* g dz - u*(b_g)."""
        wg = self.hat_weights(u.geom, "g")
        return float(wg @ u.values) / self.gstats.volume_g - u.interpolate(
            self.gstats.barycenter_g
        )

    # -- Ding invariants of PL test data -------------------------------------

    def _smooth_g_integral_on(self, a: Fraction, b: Fraction, poly_fn) -> float:
        """int_a^b poly_fn(z) g(z) dz on a subinterval of [-1, 1] (1D)."""
        sing = _singularity_1d(self.data, self.profile, self.field)
        af, bf = float(a), float(b)
        if sing is not None and (
            (sing.side > 0 and bf == 1.0) or (sing.side < 0 and af == -1.0)
        ):
            e = sing.exponent
            ja, jb = (e, 0.0) if sing.side > 0 else (0.0, e)

            def eval_n(n):
                xj, wj = _gauss_jacobi_rule(n, ja, jb)
                x = 0.5 * (af + bf) + 0.5 * (bf - af) * xj
                half = 0.5 * (bf - af)
                zs = x.reshape(-1, 1)
                vals = (
                    poly_fn(zs)
                    * h_values(self.data, zs)
                    * self.profile.f_regular(self.field.k_values(zs))
                    * sing.scale**e
                )
                return float(np.sum(wj * half ** (e + 1.0) * vals))

            prev, n = eval_n(48), 48
            while True:
                n = int(n * 1.6)
                cur = eval_n(n)
                if abs(cur - prev) <= 1e-13 * (1 + abs(cur)) or n >= 400:
                    return cur
                prev = cur

        xg, wg = leggauss(10)
        n = 8
        prev = None
        while True:
            edges = np.linspace(af, bf, n + 1)
            mid = 0.5 * (edges[:-1] + edges[1:])
            half = 0.5 * (edges[1] - edges[0])
            x = (mid[:, None] + half * xg[None, :]).ravel()
            wq = np.tile(half * wg, n)
            zs = x.reshape(-1, 1)
            vals = poly_fn(zs) * g_values(self.data, self.profile, self.field, zs)
            cur = float(wq @ vals)
            if prev is not None and abs(cur - prev) <= 1e-13 * (1 + abs(cur)):
                return cur
            if n >= 4096:
                raise QuadratureError("subinterval quadrature did not converge")
            prev, n = cur, n * 2

    def pl_g_integral(self, phi: PLConvex) -> float:
        """int_{P*} phi g dz, exact-in-structure over phi's linearity pieces."""
        if self.data.fiber_dimension == 1:
            cuts = phi.kink_points_1d(Fraction(-1), Fraction(1))
            total = 0.0
            for a, b in zip(cuts[:-1], cuts[1:]):
                total += self._smooth_g_integral_on(a, b, lambda zs: phi(zs))
            return total
        return self._pl_g_integral_2d(phi)

    def _pl_g_integral_2d(self, phi: PLConvex) -> float:
        total = 0.0
        pts = self.dual.tri_points
        for simplex in self.dual.triangulation:
            tri = [pts[i] for i in simplex]
            for r, (ar, br) in enumerate(phi.pieces):
                poly = _clip_to_piece(tri, phi.pieces, r)
                if len(poly) < 3:
                    continue
                for t in _fan_triangulate(poly):
                    total += self._triangle_g_integral(t, ar, br)
        return total

    def _triangle_g_integral(self, tri, a, b) -> float:
        from .polytope import _reference_rule

        af = np.array([float(x) for x in a])
        bf = float(b)
        verts = np.array([[float(x) for x in p] for p in tri])
        J = np.column_stack([verts[1] - verts[0], verts[2] - verts[0]])
        detJ = abs(float(np.linalg.det(J)))
        if detJ == 0.0:
            return 0.0

        prev = None
        r = 2
        while True:
            ref_nodes, ref_w = _reference_rule(2, 10)
            acc = 0.0
            for sub in _subdiv_triangle(verts, r):
                Js = np.column_stack([sub[1] - sub[0], sub[2] - sub[0]])
                dj = abs(float(np.linalg.det(Js)))
                pts = ref_nodes @ Js.T + sub[0]
                vals = (pts @ af + bf) * g_values(self.data, self.profile, self.field, pts)
                acc += float((ref_w * dj) @ vals)
            if prev is not None and abs(acc - prev) <= 1e-12 * (1 + abs(acc)):
                return acc
            if r >= 64:
                return acc
            prev, r = acc, r * 2

    def ding_invariant(self, phi: PLConvex) -> float:
        """(1/|P*|_g) int phi g dz - phi(0): the Ding invariant of the
        fiber-directed toric test configuration given by (P, phi, R);
        independent of the offset R."""
        return self.pl_g_integral(phi) / self.gstats.volume_g - phi.at_zero()

    # -- geodesics ------------------------------------------------------------

    def geodesic_point(self, u0: ConvexDualGrid, phi: PLConvex, t: float, R=None) -> ConvexDualGrid:
        """u_t with dual values u0* + t (phi - R).

        The window grows with t times (slope bound + value range of phi over
        P*): the exp(-u_t) plateau extends to where outer dual vertices take
        over, which is governed by the added function's value spread, not
        just its slopes.
        """
        if t < 0:
            raise ValueError("geodesic parameter t must be nonnegative")
        Rv = float(phi.offset if R is None else R)
        phi_nodes = phi(u0.nodes)
        vals = u0.values + t * (phi_nodes - Rv)
        spread = float(np.max(phi_nodes) - np.min(phi_nodes))
        window = u0.window + t * (phi.max_slope_norm + spread + 0.05) + 1.0
        return u0.with_values(vals, window=window)

    # -- coercivity probe ------------------------------------------------------

    def coercivity_probe(self, samples, j_kind: str = "red"):
        """Fit the largest delta and smallest C with D >= delta * J - C over
        the sample set; j_kind selects J_red or J^sigma_red.

        delta is the smallest slope (D_i + C) / J_i over the outer-J samples
        (J_i >= max J / 4), with C the offset needed at small J.  Reports "no
        coercivity evidence" when delta <= 0 or when D spreads by more than 1
        across samples whose J agree to 1e-9 (D unbounded below at frozen J).
        """
        jfun = self.j_red if j_kind == "red" else self.j_sigma
        table = []
        for u in samples:
            table.append((float(jfun(u)), float(self.ding(u))))
        js = np.array([t[0] for t in table])
        ds = np.array([t[1] for t in table])
        C0 = float(max(0.0, -np.min(ds)))
        jmax = float(np.max(js)) if len(js) else 0.0
        outer = js >= max(jmax / 4.0, 1e-12)
        if np.any(outer):
            delta = float(np.min((ds[outer] + C0) / js[outer]))
        else:
            delta = 0.0
        flat = js <= 1e-9 * (1.0 + jmax)
        unbounded_at_flat = bool(np.any(flat) and (np.ptp(ds[flat]) > 1.0 if np.sum(flat) > 1 else False))
        evidence = delta > 0 and not unbounded_at_flat
        message = (
            "coercivity evidence on the sample set"
            if evidence
            else "no coercivity evidence"
            + ("; D unbounded below at J ~ 0" if unbounded_at_flat else "")
        )
        return {
            "delta": delta,
            "C": C0,
            "table": table,
            "evidence": evidence,
            "j_kind": j_kind,
            "message": message,
        }


# ---------------------------------------------------------------------------
# exact polygon clipping for 2D PL integrals
# ---------------------------------------------------------------------------


def _clip_to_piece(poly, pieces, r):
    """Clip a rational polygon to {z : piece r >= piece s for all s}."""
    ar, br = pieces[r]
    out = [tuple(p) for p in poly]
    for s, (as_, bs) in enumerate(pieces):
        if s == r:
            continue
        # half plane <ar - as, z> + (br - bs) >= 0
        n = tuple(ar[i] - as_[i] for i in range(len(ar)))
        c = br - bs
        if all(x == 0 for x in n) and c == 0:
            continue
        out = _clip_halfplane(out, n, c)
        if len(out) < 3:
            return []
    return out


def _clip_halfplane(poly, n, c):
    """Sutherland-Hodgman in exact rationals against <n, z> + c >= 0."""
    if not poly:
        return []
    res = []
    m = len(poly)
    vals = [n[0] * p[0] + n[1] * p[1] + c for p in poly]
    for i in range(m):
        p, q = poly[i], poly[(i + 1) % m]
        vp, vq = vals[i], vals[(i + 1) % m]
        if vp >= 0:
            res.append(p)
        if (vp > 0 and vq < 0) or (vp < 0 and vq > 0):
            t = vp / (vp - vq)
            res.append(
                (p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1]))
            )
    # drop exact duplicates
    dedup = []
    for p in res:
        if not dedup or p != dedup[-1]:
            dedup.append(p)
    if len(dedup) > 1 and dedup[0] == dedup[-1]:
        dedup.pop()
    return dedup


def _fan_triangulate(poly):
    return [(poly[0], poly[i], poly[i + 1]) for i in range(1, len(poly) - 1)]


def _subdiv_triangle(verts, r):
    v0, e1, e2 = verts[0], verts[1] - verts[0], verts[2] - verts[0]
    out = []
    for i in range(r):
        for j in range(r - i):
            p = lambda a, b: v0 + (a / r) * e1 + (b / r) * e2
            out.append(np.array([p(i, j), p(i + 1, j), p(i, j + 1)]))
            if i + j < r - 1:
                out.append(np.array([p(i + 1, j), p(i + 1, j + 1), p(i, j + 1)]))
    return out
