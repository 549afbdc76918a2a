"""Point clouds on the closed domain and the piecewise-linear fields living on them.

The cloud is an interior Cartesian lattice plus boundary-fitted offset layers
at distances {0, h/4, h/2, h, 2h, ...} up to eps, so the shrinking tug-of-war
balls stay resolved as their radius eps*d'_x collapses at the wall.
Interpolation is barycentric on a Delaunay triangulation, clamped to vertex
values (convex combinations only); queries outside the triangulated hull fall
back to the nearest node, and queries within 1e-12 of a node return that
node's value exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.spatial import Delaunay, cKDTree

from . import geometry
from ._kernels import walk_interp
from .errors import DomainError

__all__ = ["Cloud", "ScalarField", "build_cloud", "ResolutionWarning"]

_NODE_SNAP = 1e-12


class ResolutionWarning(UserWarning):
    """Cloud spacing is coarse relative to the step size."""


def _offset_schedule(eps, h):
    offs = [0.0, h / 4.0, h / 2.0]
    d = h
    while d < eps * (1.0 - 1e-12):
        offs.append(d)
        d *= 2.0
    offs.append(eps)
    return offs


def _circle_points(center, radius, h, phase=0.0):
    if radius <= 0:
        return np.empty((0, 2))
    m = max(8, int(np.ceil(2.0 * np.pi * radius / h)))
    t = phase + 2.0 * np.pi * np.arange(m) / m
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)], axis=1)


def _layer_points(domain, off, h, window):
    if isinstance(domain, geometry.Disk):
        return _circle_points(domain.center, domain.radius - off, h)
    if isinstance(domain, geometry.Annulus):
        return np.vstack(
            [
                _circle_points(domain.center, domain.r_inner + off, h),
                _circle_points(domain.center, domain.r_outer - off, h),
            ]
        )
    if isinstance(domain, geometry.HalfPlane):
        tmin, tmax, _ = window
        nu = np.asarray(domain.normal)
        tau = np.array([nu[1], -nu[0]])
        base = domain.offset * nu - off * nu
        t = np.arange(tmin, tmax + h / 2, h)
        return base[None, :] + t[:, None] * tau[None, :]
    if isinstance(domain, geometry.Ellipse):
        per = np.pi * (3 * (domain.a + domain.b) - np.sqrt((3 * domain.a + domain.b) * (domain.a + 3 * domain.b)))
        m = max(64, int(np.ceil(8 * per / h)))
        t = 2.0 * np.pi * np.arange(m) / m
        bdry = np.stack([domain.a * np.cos(t), domain.b * np.sin(t)], axis=1) + np.asarray(domain.center)
        nrm = domain.outward_normal(bdry)
        curve = bdry - off * nrm
        seg = np.linalg.norm(np.diff(curve, axis=0, append=curve[:1]), axis=1)
        arcs = np.concatenate([[0.0], np.cumsum(seg)])
        want = np.arange(0.0, arcs[-1] - h / 2, h)
        pick = np.unique(np.searchsorted(arcs, want))
        pick = pick[pick < m]
        return curve[pick]
    raise DomainError(f"no layer generator for domain {type(domain).__name__}")


def _lattice_points(domain, h, min_dist, window):
    if isinstance(domain, geometry.HalfPlane):
        tmin, tmax, depth = window
        nu = np.asarray(domain.normal)
        tau = np.array([nu[1], -nu[0]])
        t = np.arange(tmin, tmax + h / 2, h)
        s = np.arange(min_dist, depth + h / 2, h)
        T, S = np.meshgrid(t, s, indexing="ij")
        pts = (
            domain.offset * nu[None, :]
            + T.reshape(-1, 1) * tau[None, :]
            - S.reshape(-1, 1) * nu[None, :]
        )
        return pts
    if isinstance(domain, geometry.Disk):
        c, r = np.asarray(domain.center), domain.radius
    elif isinstance(domain, geometry.Annulus):
        c, r = np.asarray(domain.center), domain.r_outer
    elif isinstance(domain, geometry.Ellipse):
        c, r = np.asarray(domain.center), domain.a
    else:
        raise DomainError(f"no lattice generator for domain {type(domain).__name__}")
    k = int(np.ceil(r / h))
    ax = c[0] + h * np.arange(-k, k + 1)
    ay = c[1] + h * np.arange(-k, k + 1)
    X, Y = np.meshgrid(ax, ay, indexing="ij")
    pts = np.stack([X.ravel(), Y.ravel()], axis=1)
    keep = domain.boundary_distance(pts) >= min_dist
    return pts[keep]


def build_cloud(domain, eps, h, window=None):
    """Assemble the interior lattice plus boundary layers and triangulate.

    Requires h <= eps/8 (warns above eps/16) and eps below the interior ball
    radius. ``window`` (tmin, tmax, depth) bounds the cloud for half-planes.
    """
    if eps <= 0 or h <= 0:
        raise DomainError("eps and h must be positive")
    if h > eps / 8.0 * (1 + 1e-12):
        raise DomainError(f"resolution contract violated: h={h} > eps/8={eps / 8}")
    if h > eps / 16.0 * (1 + 1e-12):
        warnings.warn(f"h={h} is above eps/16: ball extrema are marginally resolved", ResolutionWarning)
    if eps >= domain.rho:
        raise DomainError(f"eps={eps} must stay below the interior ball radius rho={domain.rho}")
    if isinstance(domain, geometry.HalfPlane) and window is None:
        raise DomainError("half-plane clouds need a (tmin, tmax, depth) window")

    layers = [_layer_points(domain, off, h, window) for off in _offset_schedule(eps, h)]
    lattice = _lattice_points(domain, h, eps + 0.5 * h, window)
    pts = np.vstack(layers + [lattice])
    return Cloud(domain=domain, eps=float(eps), h=float(h), points=pts, window=window)


@dataclass
class Cloud:
    """Fixed point set over the closed domain with location/interpolation machinery."""

    domain: object
    eps: float
    h: float
    points: np.ndarray
    window: tuple | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.points = np.ascontiguousarray(self.points, dtype=np.float64)

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def dist(self):
        if "dist" not in self._cache:
            self._cache["dist"] = np.maximum(self.domain.boundary_distance(self.points), 0.0)
        return self._cache["dist"]

    @property
    def depth(self):
        if "depth" not in self._cache:
            self._cache["depth"] = np.minimum(1.0, self.dist / self.eps)
        return self._cache["depth"]

    @property
    def dprime(self):
        if "dprime" not in self._cache:
            self._cache["dprime"] = np.minimum(0.5, self.dist / self.eps)
        return self._cache["dprime"]

    @property
    def s_weight(self):
        if "s" not in self._cache:
            s = geometry.boundary_weight_profile(self.domain.n, self.depth, self.eps)
            self._cache["s"] = np.where(self.depth >= 1.0, 0.0, s)
        return self._cache["s"]

    @property
    def tri(self):
        if "tri" not in self._cache:
            self._cache["tri"] = Delaunay(self.points)
        return self._cache["tri"]

    @property
    def kdtree(self):
        if "kdtree" not in self._cache:
            self._cache["kdtree"] = cKDTree(self.points)
        return self._cache["kdtree"]

    def _seed_grid(self):
        if "seed_grid" not in self._cache:
            tri = self.tri
            lo = self.points.min(axis=0) - 2 * self.h
            hi = self.points.max(axis=0) + 2 * self.h
            cell = 2.0 * self.h
            nx = int(np.ceil((hi[0] - lo[0]) / cell)) + 1
            ny = int(np.ceil((hi[1] - lo[1]) / cell)) + 1
            cx = lo[0] + cell * (np.arange(nx) + 0.5)
            cy = lo[1] + cell * (np.arange(ny) + 0.5)
            CX, CY = np.meshgrid(cx, cy, indexing="ij")
            centers = np.stack([CX.ravel(), CY.ravel()], axis=1)
            seeds = tri.find_simplex(centers).astype(np.int32)
            bad = seeds < 0
            if np.any(bad):
                good = ~bad
                if np.any(good):
                    t = cKDTree(centers[good])
                    _, j = t.query(centers[bad])
                    seeds[bad] = seeds[good][j]
                else:
                    seeds[:] = 0
            self._cache["seed_grid"] = (lo, cell, nx, ny, seeds.reshape(nx, ny))
        return self._cache["seed_grid"]

    def _tri_arrays(self):
        if "tri_arrays" not in self._cache:
            tri = self.tri
            self._cache["tri_arrays"] = (
                np.ascontiguousarray(tri.neighbors, dtype=np.int32),
                np.ascontiguousarray(tri.transform, dtype=np.float64),
                np.ascontiguousarray(tri.simplices, dtype=np.int32),
            )
        return self._cache["tri_arrays"]

    def _seeds_for(self, Q):
        lo, cell, nx, ny, seeds = self._seed_grid()
        ci = np.clip(((Q[:, 0] - lo[0]) / cell).astype(np.int64), 0, nx - 1)
        cj = np.clip(((Q[:, 1] - lo[1]) / cell).astype(np.int64), 0, ny - 1)
        return np.ascontiguousarray(seeds[ci, cj], dtype=np.int32)

    def interp_table(self, Q):
        """Interpolation stencils (idx, w): value(q) = sum_k w[k] * values[idx[k]].

        Convex-combination weights; outside-hull queries collapse to the
        nearest node, near-node queries (within 1e-12) to that node.
        """
        Q = np.ascontiguousarray(np.atleast_2d(Q), dtype=np.float64)
        nq = Q.shape[0]
        neighbors, transform, simplices = self._tri_arrays()
        idx = np.empty((nq, 3), dtype=np.int32)
        w = np.empty((nq, 3), dtype=np.float64)
        ok = np.empty(nq, dtype=np.bool_)
        walk_interp(Q, self._seeds_for(Q), neighbors, transform, simplices, self.points, _NODE_SNAP**2, idx, w, ok)
        if not ok.all():
            out = ~ok
            _, j = self.kdtree.query(Q[out])
            idx[out] = np.asarray(j, dtype=np.int32)[:, None]
            w[out] = 0.0
            w[out, 0] = 1.0
        return idx, w

    def strip_mask(self):
        return self.dist < self.eps


@dataclass
class ScalarField:
    """Values on a cloud with clamped barycentric interpolation."""

    cloud: Cloud
    values: np.ndarray
    interpolation: str = "barycentric-clamped"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (self.cloud.n_points,):
            raise DomainError("one value per cloud point required")

    @property
    def points(self):
        return self.cloud.points

    @property
    def h(self):
        return self.cloud.h

    def interpolate(self, X):
        single = np.asarray(X).ndim == 1
        idx, w = self.cloud.interp_table(X)
        out = np.einsum("nk,nk->n", w, self.values[idx])
        return float(out[0]) if single else out

    __call__ = interpolate

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    def dump_csv(self, path):
        n = self.points.shape[1]
        header = ",".join([f"x{i + 1}" for i in range(n)] + ["value"])
        data = np.column_stack([self.points, self.values])
        np.savetxt(path, data, delimiter=",", header=header, comments="")
