"""Deterministic sample templates: low-discrepancy ball nodes and sphere shells.

The cut-ball average uses one fixed node set in the unit ball (scrambled Sobol
with a frozen seed, area-preserving polar map), shared across all evaluation
points, so operator applications are bit-reproducible. Ball extrema use a
center + shells x directions template.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.stats import qmc

BALL_NODE_COUNT = 4096
BALL_NODE_SEED = 20240601
EXTREMA_SHELLS = 4
EXTREMA_DIRECTIONS = 32


@lru_cache(maxsize=None)
def unit_ball_nodes(count=BALL_NODE_COUNT, seed=BALL_NODE_SEED):
    """Low-discrepancy nodes in the closed unit disk (fixed seed)."""
    sob = qmc.Sobol(d=2, scramble=True, seed=seed)
    u = sob.random(count)
    r = np.sqrt(u[:, 0])
    t = 2.0 * np.pi * u[:, 1]
    nodes = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
    nodes.setflags(write=False)
    return nodes


@lru_cache(maxsize=None)
def sphere_shell_template(shells=EXTREMA_SHELLS, directions=EXTREMA_DIRECTIONS):
    """Center + concentric shells of the unit ball at uniform arc resolution.

    Sample 0 is the center; shell j (radius j/shells) carries a direction
    count proportional to its radius, ``directions`` on the outermost shell,
    so samples are equally spaced in arc length everywhere. Counts are even
    (antipodal pairs), so linear fields cancel exactly in sup+inf.
    """
    radii = (1.0 + np.arange(shells)) / shells
    pts = [np.zeros((1, 2))]
    for j, r in enumerate(radii, start=1):
        m = max(8, int(round(directions * j / shells / 2)) * 2)
        ang = 2.0 * np.pi * np.arange(m) / m
        pts.append(r * np.stack([np.cos(ang), np.sin(ang)], axis=1))
    out = np.vstack(pts)
    out.setflags(write=False)
    return out
