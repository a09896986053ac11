"""Shared test oracles: finite differences, surface samplers, reference foils.

Everything here is deliberately independent of the library's own gradient
and distance code paths so the tests check against something the
implementation cannot share bugs with.
"""

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def fd_gradient(f, p, step=1e-5):
    """Central-difference gradient of a scalar function of a 3-vector."""
    g = np.zeros(3)
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = step
        g[k] = (f(p + dp) - f(p - dp)) / (2.0 * step)
    return g


def fd_gradient_vec(f, x, step=1e-6):
    """Central-difference gradient of a scalar function of an n-vector."""
    x = np.asarray(x, dtype=float)
    g = np.zeros(len(x))
    for k in range(len(x)):
        dx = np.zeros(len(x))
        dx[k] = step
        g[k] = (f(x + dx) - f(x - dx)) / (2.0 * step)
    return g


def uncorrected_cylinder(points, radius, height):
    """Face-projection cylinder field: the componentwise slab maximum.

    The deliberately naive variant whose exterior value underestimates the
    distance in the diagonal (rim) sectors and whose gradient snaps to a
    face normal; the corner-aware field must beat it there.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    rho = np.hypot(pts[:, 0], pts[:, 1])
    dr = rho - radius
    dz = np.abs(pts[:, 2]) - 0.5 * height
    values = np.maximum(dr, dz)

    grads = np.zeros_like(pts)
    radial = dr >= dz
    safe = np.where(rho > 0, rho, 1.0)
    grads[radial] = np.stack(
        [pts[radial, 0] / safe[radial], pts[radial, 1] / safe[radial], np.zeros(radial.sum())],
        axis=1,
    )
    grads[~radial] = np.stack(
        [np.zeros((~radial).sum()), np.zeros((~radial).sum()), np.sign(pts[~radial, 2])], axis=1
    )
    if np.asarray(points).ndim == 1:
        return float(values[0]), grads[0]
    return values, grads


def fibonacci_sphere(n, radius):
    """Quasi-uniform points on a sphere (max gap ~ sqrt(area / n))."""
    k = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * k + 1.0) / n
    theta = GOLDEN_ANGLE * k
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    return radius * np.stack([rho * np.cos(theta), rho * np.sin(theta), z], axis=1)


def fibonacci_disk(n, radius, z):
    """Quasi-uniform points on a horizontal disk at height z."""
    k = np.arange(n, dtype=float)
    r = radius * np.sqrt((k + 0.5) / n)
    theta = GOLDEN_ANGLE * k
    return np.stack([r * np.cos(theta), r * np.sin(theta), np.full(n, z)], axis=1)


def sample_cylinder_surface(n, radius, height):
    """Quasi-uniform samples over the full cylinder boundary.

    Returns (points, resolution) where resolution = sqrt(total_area / n),
    the scale of the worst-case nearest-sample gap.
    """
    a_lat = 2.0 * np.pi * radius * height
    a_cap = np.pi * radius * radius
    total = a_lat + 2.0 * a_cap
    n_lat = int(round(n * a_lat / total))
    n_cap = (n - n_lat) // 2

    s = np.sqrt(a_lat / max(n_lat, 1))
    n_theta = max(8, int(round(2.0 * np.pi * radius / s)))
    n_z = max(2, int(round(height / s)))
    theta = (np.arange(n_theta) + 0.5) * 2.0 * np.pi / n_theta
    zs = (np.arange(n_z) + 0.5) * height / n_z - 0.5 * height
    tt, zz = np.meshgrid(theta, zs)
    lateral = np.stack(
        [radius * np.cos(tt).ravel(), radius * np.sin(tt).ravel(), zz.ravel()], axis=1
    )
    caps = np.vstack(
        [fibonacci_disk(n_cap, radius, 0.5 * height), fibonacci_disk(n_cap, radius, -0.5 * height)]
    )
    pts = np.vstack([lateral, caps])
    return pts, np.sqrt(total / len(pts))


def sample_sphere_surface(n, radius):
    pts = fibonacci_sphere(n, radius)
    return pts, np.sqrt(4.0 * np.pi * radius * radius / n)


def sample_box_surface(n, half_extents):
    hx, hy, hz = half_extents
    faces = [  # (area, fixed axis, sign, u axis, v axis, u half, v half)
        (4 * hy * hz, 0, +1, 1, 2, hy, hz),
        (4 * hy * hz, 0, -1, 1, 2, hy, hz),
        (4 * hx * hz, 1, +1, 0, 2, hx, hz),
        (4 * hx * hz, 1, -1, 0, 2, hx, hz),
        (4 * hx * hy, 2, +1, 0, 1, hx, hy),
        (4 * hx * hy, 2, -1, 0, 1, hx, hy),
    ]
    total = sum(f[0] for f in faces)
    blocks = []
    for area, ax, sign, ua, va, uh, vh in faces:
        m = max(4, int(round(n * area / total)))
        s = np.sqrt(area / m)
        nu = max(2, int(round(2 * uh / s)))
        nv = max(2, int(round(2 * vh / s)))
        us = (np.arange(nu) + 0.5) * 2 * uh / nu - uh
        vs = (np.arange(nv) + 0.5) * 2 * vh / nv - vh
        uu, vv = np.meshgrid(us, vs)
        pts = np.zeros((uu.size, 3))
        pts[:, ax] = sign * (hx, hy, hz)[ax]
        pts[:, ua] = uu.ravel()
        pts[:, va] = vv.ravel()
        blocks.append(pts)
    pts = np.vstack(blocks)
    return pts, np.sqrt(total / len(pts))


def sample_exterior_points(field, rng, n, box_half=0.15, min_phi=2e-3):
    """Random points with field value in [min_phi, inf): strictly exterior."""
    out = []
    while len(out) < n:
        cand = rng.uniform(-box_half, box_half, size=(4 * n, 3))
        vals = field.value(cand)
        keep = cand[vals >= min_phi]
        out.extend(keep[: n - len(out)])
    return np.array(out[:n])
