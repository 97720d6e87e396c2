"""Batched rollout-cost kernels compiled with numba.

Every control sample is an independent prange iteration that only writes its
own cost slot, so results do not depend on the thread count. The Python
reference paths in ``mppi_planner.rollout`` and ``mc_baseline`` implement the
same arithmetic one sample at a time and are used to check these kernels.
"""

import math
import os

import numba
import numpy as np
from numba import njit, prange

from ._rng import next_normal, seed_state

# Skip the TBB probe (and its version warning) unless the user picked a layer.
if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

SINGLE_INTEGRATOR = 0
UNICYCLE = 1

SWITCH_SIGMA = 0
SWITCH_MEAN = 1

# column layout of the per-agent parameter table
P_UX, P_UY, P_DS, P_ALPHA, P_BETA, P_GAIN, P_CUTOFF, P_VMAX = range(8)
N_AGENT_PARAMS = 8

# layout of the cost parameter vector
(C_BLEND, C_GOAL, C_AGENT, C_OBS, C_RISK, C_FLOOR, C_MARGIN, C_RADII, C_ROBOT_R,
 C_DT, C_KAPPA, C_NOISE) = range(12)
N_COST_PARAMS = 12

PF_MIN_DISTANCE = 1e-6


@njit(cache=True, inline="always")
def _repel(px, py, sx, sy, surface, gain, cutoff):
    dx = px - sx
    dy = py - sy
    d2 = dx * dx + dy * dy
    reach = cutoff + surface
    # cheap reject well outside the cutoff; the exact test below decides the rest
    if reach >= 0.0 and d2 > reach * reach * (1.0 + 1e-9):
        return 0.0, 0.0
    dc = math.sqrt(d2)
    d = dc - surface
    if d >= cutoff:
        return 0.0, 0.0
    if d < PF_MIN_DISTANCE:
        d = PF_MIN_DISTANCE
    if dc > 0.0:
        ex = dx / dc
        ey = dy / dc
    else:
        ex = 1.0
        ey = 0.0
    mag = gain * (1.0 / d - 1.0 / cutoff) / (d * d)
    return mag * ex, mag * ey


@njit(cache=True, inline="always")
def agent_drift(px, py, rx, ry, coop, prm, obstacles):
    """Deterministic agent velocity u_nom + PF."""
    fx = 0.0
    fy = 0.0
    gain = prm[P_GAIN]
    cutoff = prm[P_CUTOFF]
    if coop:
        gx, gy = _repel(px, py, rx, ry, 0.0, gain, cutoff)
        fx += gx
        fy += gy
    for o in range(obstacles.shape[0]):
        gx, gy = _repel(px, py, obstacles[o, 0], obstacles[o, 1], obstacles[o, 2], gain, cutoff)
        fx += gx
        fy += gy
    mag = math.sqrt(fx * fx + fy * fy)
    if mag > prm[P_VMAX]:
        s = prm[P_VMAX] / mag
        fx *= s
        fy *= s
    return fx + prm[P_UX], fy + prm[P_UY]


@njit(cache=True, inline="always")
def disturbance_variance(speed, alpha, beta):
    if speed <= 0.0:
        return alpha
    return alpha * math.tanh(beta / speed)


@njit(cache=True)
def robot_step(kind, x, u, dt):
    if kind == SINGLE_INTEGRATOR:
        x[0] += u[0] * dt
        x[1] += u[1] * dt
    else:
        th = x[2]
        x[0] += u[0] * math.cos(th) * dt
        x[1] += u[0] * math.sin(th) * dt
        th = th + u[1] * dt
        x[2] = math.pi - (math.pi - th) % (2.0 * math.pi)


@njit(cache=True)
def _quad_cost(v, sig_inv, u):
    return (v[0] * (sig_inv[0, 0] * u[0] + sig_inv[0, 1] * u[1])
            + v[1] * (sig_inv[1, 0] * u[0] + sig_inv[1, 1] * u[1]))


@njit(cache=True)
def _obstacle_term(rx, ry, obstacles, cp):
    if obstacles.shape[0] == 0:
        return 0.0
    h = np.inf
    for o in range(obstacles.shape[0]):
        dx = rx - obstacles[o, 0]
        dy = ry - obstacles[o, 1]
        d = math.sqrt(dx * dx + dy * dy) - (obstacles[o, 2] + cp[C_ROBOT_R])
        if d < h:
            h = d
    h -= cp[C_MARGIN]
    return cp[C_OBS] / max(h, cp[C_FLOOR])


@njit(cache=True)
def chol2(a, b, c, out):
    """Lower Cholesky of [[a, b], [b, c]], zero columns where semidefinite."""
    scale = max(1.0, abs(a), abs(c))
    tol = 1e-14 * scale
    if a > tol:
        l11 = math.sqrt(a)
        l21 = b / l11
    else:
        l11 = 0.0
        l21 = 0.0
    d = c - l21 * l21
    l22 = math.sqrt(d) if d > tol else 0.0
    out[0] = l11
    out[1] = l21
    out[2] = l22


@njit(cache=True)
def ecut_sample_cost(x0, kind, u_seq, v_seq, sig_inv, goal, cp, obstacles,
                     sigma0, w, agent_prm, switching, aware):
    H = u_seq.shape[0]
    A = sigma0.shape[0]
    N = w.shape[0]
    x = x0.copy()
    pts = sigma0.copy()
    mu = np.empty((N, 2))
    var = np.empty(N)
    L = np.empty(3)
    dt = cp[C_DT]
    spread = 2.0 + cp[C_KAPPA]
    cost = 0.0
    for t in range(H):
        rx = x[0]
        ry = x[1]
        ex = rx - goal[0]
        ey = ry - goal[1]
        cost += cp[C_GOAL] * (ex * ex + ey * ey)
        if A > 0:
            r = np.inf
            for a in range(A):
                mh = 0.0
                for i in range(N):
                    dx = rx - pts[a, i, 0]
                    dy = ry - pts[a, i, 1]
                    mu[i, 0] = math.sqrt(dx * dx + dy * dy) - cp[C_RADII]
                    mh += w[i] * mu[i, 0]
                vh = 0.0
                for i in range(N):
                    vh += w[i] * (mu[i, 0] - mh) * (mu[i, 0] - mh)
                lb = mh - cp[C_RISK] * math.sqrt(max(vh, 0.0))
                if lb < r:
                    r = lb
            r -= cp[C_MARGIN]
            cost += cp[C_AGENT] / max(r, cp[C_FLOOR])
        cost += _obstacle_term(rx, ry, obstacles, cp)
        cost += cp[C_BLEND] * _quad_cost(v_seq[t], sig_inv, u_seq[t])

        for a in range(A):
            prm = agent_prm[a]
            ds = prm[P_DS]
            coop_all = False
            if switching == SWITCH_MEAN:
                cx = 0.0
                cy = 0.0
                for i in range(N):
                    cx += w[i] * pts[a, i, 0]
                    cy += w[i] * pts[a, i, 1]
                dx = cx - rx
                dy = cy - ry
                coop_all = math.sqrt(dx * dx + dy * dy) <= ds
            for i in range(N):
                px = pts[a, i, 0]
                py = pts[a, i, 1]
                if not aware:
                    coop = False
                elif switching == SWITCH_MEAN:
                    coop = coop_all
                else:
                    dx = px - rx
                    dy = py - ry
                    coop = math.sqrt(dx * dx + dy * dy) <= ds
                ux, uy = agent_drift(px, py, rx, ry, coop, prm, obstacles)
                speed = math.sqrt(ux * ux + uy * uy)
                var[i] = disturbance_variance(speed, prm[P_ALPHA], prm[P_BETA]) * cp[C_NOISE]
                mu[i, 0] = px + ux * dt
                mu[i, 1] = py + uy * dt
            # compression of the expanded set: law of total mean/covariance
            mx = 0.0
            my = 0.0
            for i in range(N):
                mx += w[i] * mu[i, 0]
                my += w[i] * mu[i, 1]
            cxx = 0.0
            cxy = 0.0
            cyy = 0.0
            for i in range(N):
                dx = mu[i, 0] - mx
                dy = mu[i, 1] - my
                cxx += w[i] * (var[i] + dx * dx)
                cxy += w[i] * (dx * dy)
                cyy += w[i] * (var[i] + dy * dy)
            chol2(spread * cxx, spread * cxy, spread * cyy, L)
            pts[a, 0, 0] = mx
            pts[a, 0, 1] = my
            pts[a, 1, 0] = mx + L[0]
            pts[a, 1, 1] = my + L[1]
            pts[a, 2, 0] = mx
            pts[a, 2, 1] = my + L[2]
            pts[a, 3, 0] = mx - L[0]
            pts[a, 3, 1] = my - L[1]
            pts[a, 4, 0] = mx
            pts[a, 4, 1] = my - L[2]
        robot_step(kind, x, u_seq[t], dt)
    ex = x[0] - goal[0]
    ey = x[1] - goal[1]
    cost += cp[C_GOAL] * (ex * ex + ey * ey)
    return cost


@njit(cache=True, parallel=True)
def ecut_costs(x0, kind, controls, v_seq, sig_inv, goal, cp, obstacles,
               sigma0, w, agent_prm, switching, aware):
    M = controls.shape[0]
    out = np.empty(M)
    for m in prange(M):
        out[m] = ecut_sample_cost(x0, kind, controls[m], v_seq, sig_inv, goal, cp,
                                  obstacles, sigma0, w, agent_prm, switching, aware)
    return out


@njit(cache=True)
def mc_sample_cost(x0, kind, u_seq, v_seq, sig_inv, goal, cp, obstacles,
                   mu0, chol0, agent_prm, K, seed, aware):
    state = np.empty(2, dtype=np.uint64)
    seed_state(seed, state)
    H = u_seq.shape[0]
    A = mu0.shape[0]
    x = x0.copy()
    d = np.empty(K)
    reps = np.empty((A, K, 2))
    for a in range(A):
        for k in range(K):
            z0 = next_normal(state)
            z1 = next_normal(state)
            reps[a, k, 0] = mu0[a, 0] + chol0[a, 0, 0] * z0 + chol0[a, 0, 1] * z1
            reps[a, k, 1] = mu0[a, 1] + chol0[a, 1, 0] * z0 + chol0[a, 1, 1] * z1
    dt = cp[C_DT]
    cost = 0.0
    for t in range(H):
        rx = x[0]
        ry = x[1]
        ex = rx - goal[0]
        ey = ry - goal[1]
        cost += cp[C_GOAL] * (ex * ex + ey * ey)
        if A > 0:
            r = np.inf
            for a in range(A):
                mh = 0.0
                for k in range(K):
                    dx = rx - reps[a, k, 0]
                    dy = ry - reps[a, k, 1]
                    d[k] = math.sqrt(dx * dx + dy * dy) - cp[C_RADII]
                    mh += d[k]
                mh /= K
                vh = 0.0
                for k in range(K):
                    vh += (d[k] - mh) * (d[k] - mh)
                vh /= K - 1
                lb = mh - cp[C_RISK] * math.sqrt(vh)
                if lb < r:
                    r = lb
            r -= cp[C_MARGIN]
            cost += cp[C_AGENT] / max(r, cp[C_FLOOR])
        cost += _obstacle_term(rx, ry, obstacles, cp)
        cost += cp[C_BLEND] * _quad_cost(v_seq[t], sig_inv, u_seq[t])

        for a in range(A):
            prm = agent_prm[a]
            ds = prm[P_DS]
            for k in range(K):
                px = reps[a, k, 0]
                py = reps[a, k, 1]
                dx = px - rx
                dy = py - ry
                coop = aware and math.sqrt(dx * dx + dy * dy) <= ds
                ux, uy = agent_drift(px, py, rx, ry, coop, prm, obstacles)
                speed = math.sqrt(ux * ux + uy * uy)
                sd = math.sqrt(disturbance_variance(speed, prm[P_ALPHA], prm[P_BETA]) * cp[C_NOISE])
                z0 = next_normal(state)
                z1 = next_normal(state)
                reps[a, k, 0] = px + ux * dt + sd * z0
                reps[a, k, 1] = py + uy * dt + sd * z1
        robot_step(kind, x, u_seq[t], dt)
    ex = x[0] - goal[0]
    ey = x[1] - goal[1]
    cost += cp[C_GOAL] * (ex * ex + ey * ey)
    return cost


@njit(cache=True, parallel=True)
def mc_costs(x0, kind, controls, v_seq, sig_inv, goal, cp, obstacles,
             mu0, chol0, agent_prm, K, seeds, aware):
    M = controls.shape[0]
    out = np.empty(M)
    for m in prange(M):
        out[m] = mc_sample_cost(x0, kind, controls[m], v_seq, sig_inv, goal, cp, obstacles,
                                mu0, chol0, agent_prm, K, seeds[m], aware)
    return out
