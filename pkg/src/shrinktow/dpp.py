"""The shrinking tug-of-war operator and its monotone fixed-point solver.

At each cloud point x the operator forms

    (1 - (1-a) g s(x)) * { (a/2)(sup + inf over B_{eps d'_x}(x))
                           + (1-a) * avg over B_eps(x) ∩ Omega }
    + (1-a) g s(x) * G(x)

with a the tug-of-war weight, g the Robin coefficient, and s the boundary
weight. Interior points (dist >= eps) see the pure tug-of-war-with-noise form.
The fixed point is bracketed by monotone iteration from the constant fields
-+||G|| and the two-branch gap is the uniqueness certificate.

Solves for several parameter sets on one cloud share the sample stencils and
cut-ball quadrature rows, so their branches iterate in one fused pass.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass

import numpy as np

from . import quadrature
from ._kernels import combine_envelope_stats, csr_avg, dedup_rows, stencil_extrema, stencil_extrema_arg
from .errors import DomainError, EmptyIntersection, NoConvergence, OutsideBoundaryStrip
from .field import Cloud, ScalarField, build_cloud
from .geometry import boundary_weight_profile

__all__ = [
    "DppParams",
    "BoundaryData",
    "SolveResult",
    "alpha_from_p",
    "ball_extrema",
    "cut_ball_average",
    "apply_T",
    "residual",
    "solve_dpp",
    "solve_dpp_multi",
    "DppOperator",
]

_CHUNK = 1024  # rows per precompute chunk; bounds peak memory
# monotone-envelope roundoff allowance, relative to ||G||: float32 quadrature
# weights make row sums wobble by ~1e-7, visible only while per-iteration
# increments sit below that scale (the initial flat phase)
_CLIP_GUARD = 5e-7


def alpha_from_p(p, n):
    """Tug-of-war weight 4(p-2)/(4p+n-6); zero at p=2 (pure random walk)."""
    if p < 2:
        raise DomainError(f"p={p} < 2 would give a negative tug-of-war weight")
    if n < 2:
        raise DomainError("dimension must be at least 2")
    return 4.0 * (p - 2.0) / (4.0 * p + n - 6.0)


@dataclass(frozen=True)
class DppParams:
    """Problem parameters; alpha derives from p unless given directly."""

    n: int
    eps: float
    gamma: float
    p: float | None = None
    alpha: float | None = None

    def __post_init__(self):
        if self.eps <= 0:
            raise DomainError("eps must be positive")
        if self.gamma <= 0:
            raise DomainError("gamma must be positive")
        if self.p is None and self.alpha is None:
            raise DomainError("provide p or alpha")
        if self.alpha is None:
            object.__setattr__(self, "alpha", alpha_from_p(self.p, self.n))
        if not 0.0 <= self.alpha < 1.0:
            raise DomainError(f"alpha={self.alpha} outside [0, 1)")
        # the stopping band (1-alpha) gamma s_eps(x) must stay below 1;
        # s_eps is maximal on the boundary itself
        s_max = float(boundary_weight_profile(self.n, 0.0, self.eps))
        if (1.0 - self.alpha) * self.gamma * s_max >= 1.0:
            raise DomainError(
                f"(1-alpha)*gamma*max(s_eps) = {(1 - self.alpha) * self.gamma * s_max:.3g} >= 1: "
                "stopping band would leave no room for moves"
            )


class BoundaryData:
    """Boundary payoff G on the strip {dist <= eps}; evaluation outside raises."""

    def __init__(self, fn, domain, eps):
        self.fn = fn
        self.domain = domain
        self.eps = float(eps)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = np.atleast_2d(x)
        dist = self.domain.boundary_distance(pts)
        if np.any(dist < -1e-9 * self.eps) or np.any(dist > self.eps * (1 + 1e-9)):
            raise OutsideBoundaryStrip("G evaluated outside the strip {dist <= eps}")
        vals = np.asarray(self.fn(pts), dtype=float)
        return float(vals[0]) if single else vals

    def sup_norm(self, cloud=None, samples=4096):
        """Max |G| over strip samples (and the cloud's strip points when given).

        Covers every point the operator will ever read, so the constant
        bracket start +-sup is monotone at cloud level exactly.
        """
        vals = []
        if cloud is not None:
            mask = cloud.dist < self.eps
            if np.any(mask):
                vals.append(np.abs(self(cloud.points[mask])))
        for frac in (0.0, 0.25, 0.5, 0.75, 0.999999):
            layer = _strip_layer(self.domain, frac * self.eps, samples, cloud)
            if layer is not None and len(layer):
                vals.append(np.abs(self(layer)))
        if not vals:
            raise DomainError("no strip samples available for sup norm")
        return float(np.max(np.concatenate(vals)))


def _strip_layer(domain, off, samples, cloud=None):
    from . import geometry as g

    if isinstance(domain, g.Disk):
        t = 2 * np.pi * np.arange(samples) / samples
        r = domain.radius - off
        return np.asarray(domain.center) + r * np.stack([np.cos(t), np.sin(t)], 1)
    if isinstance(domain, g.Annulus):
        t = 2 * np.pi * np.arange(samples // 2) / (samples // 2)
        c = np.asarray(domain.center)
        ring = np.stack([np.cos(t), np.sin(t)], 1)
        return np.vstack([c + (domain.r_inner + off) * ring, c + (domain.r_outer - off) * ring])
    if isinstance(domain, g.HalfPlane):
        if cloud is not None and cloud.window is not None:
            tmin, tmax, _ = cloud.window
        else:
            tmin, tmax = -1.0, 1.0
        nu = np.asarray(domain.normal)
        tau = np.array([nu[1], -nu[0]])
        t = np.linspace(tmin, tmax, samples)
        return (domain.offset - off) * nu[None, :] + t[:, None] * tau[None, :]
    if isinstance(domain, g.Ellipse):
        t = 2 * np.pi * np.arange(samples) / samples
        bdry = np.stack([domain.a * np.cos(t), domain.b * np.sin(t)], 1) + np.asarray(domain.center)
        return bdry - off * domain.outward_normal(bdry)
    return None


@dataclass
class SolveResult:
    """Two-branch bracket: monotone limits, their gap, and the midpoint residual."""

    u_lower: ScalarField
    u_upper: ScalarField
    gap: float
    iterations_lower: int
    iterations_upper: int
    residual: float
    params: DppParams
    wall_time: float = 0.0

    def midpoint(self):
        return ScalarField(self.u_lower.cloud, 0.5 * (self.u_lower.values + self.u_upper.values))

    def summary(self):
        return {
            "gap": self.gap,
            "iterations_lower": self.iterations_lower,
            "iterations_upper": self.iterations_upper,
            "residual": self.residual,
            "eps": self.params.eps,
            "p": self.params.p,
            "gamma": self.params.gamma,
            "h": self.u_lower.cloud.h,
        }

    def dump_summary(self, path):
        with open(path, "w") as f:
            json.dump(self.summary(), f, indent=2, sort_keys=True)
            f.write("\n")


# --- single-point operations ---------------------------------------------------


def ball_extrema(field, x, r, shells=quadrature.EXTREMA_SHELLS, directions=quadrature.EXTREMA_DIRECTIONS):
    """(sup, inf) of the interpolated field over the deterministic ball sample set.

    Samples the center plus shells x directions; sup >= u(x) >= inf by
    construction, and r=0 degenerates to (u(x), u(x)).
    """
    x = np.asarray(x, dtype=float)
    tmpl = quadrature.sphere_shell_template(shells, directions)
    pts = x[None, :] + r * tmpl
    vals = field.interpolate(pts)
    return float(np.max(vals)), float(np.min(vals))


def cut_ball_average(field, x, eps, domain, nodes=None):
    """Average of the interpolated field over B_eps(x) ∩ Omega.

    Fixed low-discrepancy node set mapped to the ball, filtered by domain
    membership, ratio-normalized; deterministic given the node set.
    """
    x = np.asarray(x, dtype=float)
    if nodes is None:
        nodes = quadrature.unit_ball_nodes()
    pts = x[None, :] + eps * nodes
    inside = domain.contains(pts)
    if not np.any(inside):
        raise EmptyIntersection(f"no quadrature node of B_eps({x}) lies in the domain")
    vals = field.interpolate(pts[inside])
    return float(np.mean(vals))


# --- shared operator tables ------------------------------------------------------


def _pack_w2(w):
    """float64 weight triples -> float32 pairs with w0f + w1f <= 1 guaranteed."""
    w0 = w[..., 0].astype(np.float32)
    w1 = w[..., 1].astype(np.float32)
    over = w0.astype(np.float64) + w1.astype(np.float64) > 1.0
    if np.any(over):
        w1 = np.where(over, (1.0 - w0.astype(np.float64)).astype(np.float32), w1)
    return np.stack([w0, w1], axis=-1)


def sup_tables(cloud, shells=quadrature.EXTREMA_SHELLS, directions=quadrature.EXTREMA_DIRECTIONS):
    """Per-point interpolation stencils of the shrinking-ball sample set (cached)."""
    key = ("sup_tables", shells, directions)
    if key not in cloud._cache:
        tmpl = quadrature.sphere_shell_template(shells, directions)
        S = tmpl.shape[0]
        N = cloud.n_points
        radii = cloud.eps * cloud.dprime
        sup_idx = np.empty((N, S, 3), dtype=np.int32)
        sup_w2 = np.empty((N, S, 2), dtype=np.float32)
        for a in range(0, N, _CHUNK):
            b = min(a + _CHUNK, N)
            pts = cloud.points[a:b, None, :] + radii[a:b, None, None] * tmpl[None, :, :]
            idx, w = cloud.interp_table(pts.reshape(-1, 2))
            sup_idx[a:b] = idx.reshape(b - a, S, 3)
            sup_w2[a:b] = _pack_w2(w.reshape(b - a, S, 3))
        cloud._cache[key] = (sup_idx, sup_w2)
    return cloud._cache[key]


def avg_csr(cloud, mapper=None, cache_token=(), stretch=1.0):
    """CSR of cut-ball (or mapped-cap) average weights, deduplicated per row.

    ``mapper(row_slice, template) -> node positions`` defaults to the plain
    ball x + eps * template; ``stretch`` bounds the mapped cap radius in ball
    units (containment radius for ellipsoid caps).
    """
    key = ("avg_csr",) + tuple(cache_token)
    if key in cloud._cache:
        return cloud._cache[key]
    tmpl = quadrature.unit_ball_nodes()
    K = tmpl.shape[0]
    N = cloud.n_points
    ptr = np.zeros(N + 1, dtype=np.int64)
    cols_parts = []
    wts_parts = []
    cap = 4 * int((stretch * cloud.eps / cloud.h + 4) ** 2) + 64
    for a in range(0, N, _CHUNK):
        b = min(a + _CHUNK, N)
        if mapper is None:
            pts = cloud.points[a:b, None, :] + cloud.eps * tmpl[None, :, :]
        else:
            pts = mapper(slice(a, b), tmpl)
        flat = pts.reshape(-1, 2)
        inside = cloud.domain.contains(flat).reshape(b - a, K)
        if np.any(~inside.any(axis=1)):
            raise EmptyIntersection("a cut ball lost every quadrature node")
        idx, w = cloud.interp_table(flat)
        idx = idx.reshape(b - a, K, 3).astype(np.int64)
        w = w.reshape(b - a, K, 3)
        counts = np.empty(b - a, dtype=np.int64)
        cols_buf = np.empty((b - a, cap), dtype=np.int64)
        wts_buf = np.zeros((b - a, cap), dtype=np.float64)
        dedup_rows(idx, w, inside, counts, cols_buf, wts_buf)
        if np.any(counts < 0):
            raise RuntimeError("cut-ball dedup overflow: unique-vertex cap too small")
        norm = inside.sum(axis=1).astype(np.float64)
        for r in range(b - a):
            c = counts[r]
            cols_parts.append(cols_buf[r, :c].astype(np.int32))
            wts_parts.append((wts_buf[r, :c] / norm[r]).astype(np.float32))
            ptr[a + r + 1] = c
    np.cumsum(ptr, out=ptr)
    csr = (ptr, np.concatenate(cols_parts), np.concatenate(wts_parts))
    cloud._cache[key] = csr
    return csr


class DppOperator:
    """One parameter set bound to the shared tables of a cloud."""

    def __init__(self, cloud, params, G, oblique=None):
        if params.n != 2:
            raise DomainError("the assembled operator is two-dimensional")
        if abs(cloud.eps - params.eps) > 1e-12 * params.eps:
            raise DomainError("cloud was built for a different eps")
        self.cloud = cloud
        self.params = params
        self.G = G
        self.oblique = oblique
        a = params.alpha
        s = cloud.s_weight
        kill = (1.0 - a) * params.gamma * s
        self.keep = 1.0 - kill
        self.tug_c = np.ascontiguousarray(self.keep * (a / 2.0))
        self.avg_c = np.ascontiguousarray(self.keep * (1.0 - a))
        bg = np.zeros(cloud.n_points)
        strip = s > 0.0
        if np.any(strip):
            bg[strip] = kill[strip] * np.asarray(G(cloud.points[strip]), dtype=float)
        self.bg = bg
        if a > 0.0:
            self.sup_idx, self.sup_w2 = sup_tables(cloud)
        else:
            self.sup_idx = self.sup_w2 = None
        if oblique is None:
            self.avg_ptr, self.avg_col, self.avg_w = avg_csr(cloud)
        else:
            self.avg_ptr, self.avg_col, self.avg_w = avg_csr(
                cloud,
                mapper=oblique.cap_mapper(cloud),
                cache_token=("oblique", oblique.cache_token()),
                stretch=oblique.containment_radius(),
            )

    def apply_many(self, u_cols):
        """Apply the operator to stacked fields (N, k) -> (N, k)."""
        return _apply_stacked([self], np.ascontiguousarray(u_cols, dtype=np.float64))

    def apply(self, values):
        return self.apply_many(values[:, None])[:, 0]

    def sampled_extrema(self, values, with_args=False):
        """Per-point (sup, inf) over the ball sample set, with argmax/argmin samples."""
        idx, w2 = sup_tables(self.cloud)
        values = np.ascontiguousarray(values, dtype=np.float64)
        N = idx.shape[0]
        smax = np.empty(N)
        smin = np.empty(N)
        amax = np.empty(N, dtype=np.int64)
        amin = np.empty(N, dtype=np.int64)
        stencil_extrema_arg(values, idx, w2, smax, smin, amax, amin)
        if with_args:
            return smax, smin, amax, amin
        return smax, smin


def _stacked_parts(ops, U, acc, smax, smin):
    """CSR averages and ball extrema of the stacked columns, into workspaces."""
    cloud = ops[0].cloud
    if len(ops) > 1 and any(op.avg_ptr is not ops[0].avg_ptr for op in ops):
        raise DomainError("stacked operators must share their quadrature tables")
    csr_avg(U, ops[0].avg_ptr, ops[0].avg_col, ops[0].avg_w, acc)
    if any(op.params.alpha > 0.0 for op in ops):
        idx, w2 = sup_tables(cloud)
        active = np.ones(U.shape[0], dtype=np.bool_)
        stencil_extrema(U, idx, w2, active, smax, smin)


def _apply_stacked(ops, U):
    """Fused application of several operators sharing one cloud.

    U has one column pair (or any column count) per operator, laid out
    contiguously: columns [2j, 2j+1] belong to ops[j] when len(ops) > 1,
    otherwise all columns belong to ops[0].
    """
    N, F = U.shape
    per = F // len(ops)
    acc = np.empty_like(U)
    smax = np.zeros_like(U)
    smin = np.zeros_like(U)
    _stacked_parts(ops, U, acc, smax, smin)
    out = np.empty_like(U)
    for j, op in enumerate(ops):
        cols = slice(j * per, (j + 1) * per)
        part = op.avg_c[:, None] * acc[:, cols] + op.bg[:, None]
        if op.params.alpha > 0.0:
            part = part + op.tug_c[:, None] * (smax[:, cols] + smin[:, cols])
        out[:, cols] = part
    return out


def _operator(field_or_cloud, params, G, domain, oblique=None):
    cloud = field_or_cloud.cloud if isinstance(field_or_cloud, ScalarField) else field_or_cloud
    if cloud.domain is not domain and cloud.domain != domain:
        raise DomainError("field cloud belongs to a different domain")
    okey = ("operator", params, id(G), None if oblique is None else oblique.cache_token())
    if okey not in cloud._cache:
        cloud._cache[okey] = DppOperator(cloud, params, G, oblique=oblique)
    return cloud._cache[okey]


def apply_T(field, params, G, domain, oblique=None):
    """One application of the operator to a field on its own cloud."""
    op = _operator(field, params, G, domain, oblique)
    return ScalarField(field.cloud, op.apply(field.values))


def residual(field, params, G, domain, oblique=None):
    """Sup over the cloud of |T u - u|."""
    op = _operator(field, params, G, domain, oblique)
    return float(np.max(np.abs(op.apply(field.values) - field.values)))


def solve_dpp_multi(params_list, G, domain, tol, max_iter=200_000, h=None, cloud=None, oblique=None):
    """Monotone two-branch solves for several parameter sets on one shared cloud.

    Iterates every branch pair in a fused pass from the constant fields
    -||G|| (nondecreasing) and +||G|| (nonincreasing) until each pair's
    bracket gap reaches its tolerance and its per-iteration increments drop
    below tol/2. The operator is convex in exact arithmetic; floating-point
    row sums wobble by ~1 ulp, so each step takes the monotone envelope
    max(Tu, u) / min(Tu, u) and asserts the clipped amount stays at roundoff
    scale. Raises NoConvergence at ``max_iter`` with the worst gap attached.
    """
    eps = params_list[0].eps
    if any(p.eps != eps for p in params_list):
        raise DomainError("stacked solves must share eps (one cloud)")
    if cloud is None:
        cloud = build_cloud(domain, eps, eps / 8.0 if h is None else h)
    ops = [_operator(cloud, p, G, domain, oblique) for p in params_list]
    gmax = G.sup_norm(cloud) if isinstance(G, BoundaryData) else float(np.max(np.abs(G(cloud.points))))
    tols = [tol] * len(ops) if np.isscalar(tol) else list(tol)
    L = len(ops)
    N = cloud.n_points
    U = np.empty((N, 2 * L), dtype=np.float64)
    U[:, 0::2] = -gmax
    U[:, 1::2] = gmax
    guard = _CLIP_GUARD * max(gmax, 1.0)
    t0 = time.perf_counter()
    it_lo = [None] * L
    it_hi = [None] * L
    gaps = [2.0 * gmax] * L
    done = [False] * L
    # per-column coefficient matrices for the fused combine kernel
    tug = np.empty_like(U)
    avgc = np.empty_like(U)
    bgc = np.empty_like(U)
    for j, op in enumerate(ops):
        for c in (2 * j, 2 * j + 1):
            tug[:, c] = op.tug_c
            avgc[:, c] = op.avg_c
            bgc[:, c] = op.bg
    acc = np.empty_like(U)
    smax = np.zeros_like(U)
    smin = np.zeros_like(U)
    block_stats = np.empty((64, L, 5))
    k = 0
    while k < max_iter:
        _stacked_parts(ops, U, acc, smax, smin)
        combine_envelope_stats(acc, smax, smin, tug, avgc, bgc, U, block_stats)
        k += 1
        stats = block_stats.max(axis=0)
        clip_worst = float(stats[:, :2].max())
        if clip_worst > guard:
            raise AssertionError(
                f"monotone bracket violated beyond roundoff at iteration {k}: clip={clip_worst:.2e}"
            )
        for j in range(L):
            if done[j]:
                continue
            inc_lo, inc_hi, gap_j = float(stats[j, 2]), float(stats[j, 3]), float(stats[j, 4])
            if inc_lo < tols[j] / 2 and it_lo[j] is None:
                it_lo[j] = k
            if inc_hi < tols[j] / 2 and it_hi[j] is None:
                it_hi[j] = k
            gaps[j] = gap_j
            if gap_j <= tols[j] and inc_lo < tols[j] / 2 and inc_hi < tols[j] / 2:
                done[j] = True
        if all(done):
            break
    if not all(done):
        worst = max(g for g, d in zip(gaps, done) if not d)
        raise NoConvergence(
            f"bracket gap {worst:.3e} above tolerance after {max_iter} iterations",
            iterations=max_iter,
            gap=worst,
        )
    wall = time.perf_counter() - t0
    results = []
    for j, op in enumerate(ops):
        lo = U[:, 2 * j].copy()
        hi = U[:, 2 * j + 1].copy()
        mid = 0.5 * (lo + hi)
        res = float(np.max(np.abs(op.apply(mid) - mid)))
        results.append(
            SolveResult(
                u_lower=ScalarField(cloud, lo),
                u_upper=ScalarField(cloud, hi),
                gap=gaps[j],
                iterations_lower=it_lo[j] if it_lo[j] is not None else k,
                iterations_upper=it_hi[j] if it_hi[j] is not None else k,
                residual=res,
                params=op.params,
                wall_time=wall,
            )
        )
    return results


def solve_dpp(params, G, domain, tol, max_iter=200_000, h=None, cloud=None, oblique=None):
    """Monotone two-branch solve of u = T u; see :func:`solve_dpp_multi`."""
    return solve_dpp_multi([params], G, domain, tol, max_iter=max_iter, h=h, cloud=cloud, oblique=oblique)[0]
