"""Compiled kernels behind the source-set projection.

The moment coordinates handled here exclude ``m_0`` (pinned to 1), so a
vector ``mm`` of length ``ell`` holds ``m_1..m_ell``.
"""

from __future__ import annotations

import math

import numpy as np

from ncnum._jit import njit
from ncnum.geometry.eigen import jacobi_eig, psd_clamp

GRID = 65


# -- hypograph {(a, b): a <= b**(j/ell), 0 <= b <= zeta} -----------------------

@njit
def _curve_gap(y, a0, b0, j, ell):
    da = y ** j - a0
    db = y ** ell - b0
    return da * da + db * db


@njit
def _curve_slope(y, a0, b0, j, ell):
    return 2.0 * (y ** j - a0) * j * y ** (j - 1) + 2.0 * (y ** ell - b0) * ell * y ** (ell - 1)


@njit
def _curve_curv(y, a0, b0, j, ell):
    dj = j * y ** (j - 1)
    dl = ell * y ** (ell - 1)
    s = 2.0 * dj * dj + 2.0 * dl * dl
    if j >= 2:
        s += 2.0 * (y ** j - a0) * j * (j - 1) * y ** (j - 2)
    s += 2.0 * (y ** ell - b0) * ell * (ell - 1) * y ** (ell - 2)
    return s


@njit
def _polish(lo, hi, y, a0, b0, j, ell):
    """Local minimiser of the squared distance to the curve inside [lo, hi]."""
    glo = _curve_slope(lo, a0, b0, j, ell)
    ghi = _curve_slope(hi, a0, b0, j, ell)
    if glo < 0.0 < ghi:
        # safeguarded Newton on the slope, keeping a sign-change bracket
        for _ in range(100):
            g = _curve_slope(y, a0, b0, j, ell)
            if g == 0.0:
                break
            if g < 0.0:
                lo = y
            else:
                hi = y
            h = _curve_curv(y, a0, b0, j, ell)
            yn = y - g / h if h > 0.0 else 0.5 * (lo + hi)
            if not (lo < yn < hi):
                yn = 0.5 * (lo + hi)
            if abs(yn - y) <= 1e-16 * max(1.0, abs(y)) or hi - lo <= 1e-16 * max(1.0, hi):
                y = yn
                break
            y = yn
        return y
    # no sign change: golden section on the gap itself
    invphi = 0.5 * (math.sqrt(5.0) - 1.0)
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    for _ in range(200):
        if _curve_gap(c, a0, b0, j, ell) < _curve_gap(d, a0, b0, j, ell):
            hi = d
        else:
            lo = c
        c = hi - invphi * (hi - lo)
        d = lo + invphi * (hi - lo)
        if hi - lo <= 1e-16:
            break
    return 0.5 * (lo + hi)


@njit
def hypograph_kernel(a0, b0, j, ell, zeta):
    p = j / ell
    if 0.0 <= b0 <= zeta and a0 <= b0 ** p:
        return a0, b0
    # the two vertical edges b = 0 and b = zeta
    best_a = min(a0, 0.0)
    best_b = 0.0
    best = (best_a - a0) ** 2 + b0 ** 2
    za = zeta ** p
    cand = (min(a0, za) - a0) ** 2 + (zeta - b0) ** 2
    if cand < best:
        best, best_a, best_b = cand, min(a0, za), zeta
    if j == ell:
        b = min(max(0.5 * (a0 + b0), 0.0), zeta)
        cand = (b - a0) ** 2 + (b - b0) ** 2
        if cand < best:
            best_a, best_b = b, b
        return best_a, best_b
    Y = zeta ** (1.0 / ell)
    step = Y / (GRID - 1)
    g = np.empty(GRID)
    for k in range(GRID):
        g[k] = _curve_gap(k * step, a0, b0, j, ell)
    for k in range(GRID):
        left = g[k - 1] if k > 0 else np.inf
        right = g[k + 1] if k < GRID - 1 else np.inf
        if g[k] <= left and g[k] <= right:
            lo = max(k - 1, 0) * step
            hi = min(k + 1, GRID - 1) * step
            y = _polish(lo, hi, k * step, a0, b0, j, ell)
            cand = _curve_gap(y, a0, b0, j, ell)
            if cand < best:
                best, best_a, best_b = cand, y ** j, y ** ell
    return best_a, best_b


# -- X_s with per-link caps ----------------------------------------------------

@njit
def xs_residual(mu, x0, r0, xi, zeta, caps):
    s = 0.0
    for k in range(x0.shape[0]):
        s += min(max(x0[k] - mu, 0.0), caps[k])
    return s - min(max(r0 + mu, xi), zeta)


@njit
def xs_kernel(x0, r0, xi, zeta, caps):
    """Projection onto {0 <= x <= caps, xi <= r <= zeta, r = sum(x)}.

    The multiplier ``mu`` of ``sum(x) = r`` solves a monotone piecewise-linear
    equation; bisection brackets it to machine precision.
    """
    span = abs(r0) + zeta + 1.0
    for k in range(x0.shape[0]):
        span += abs(x0[k]) + min(caps[k], 1e300)
    lo = -span
    hi = span
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if xs_residual(mid, x0, r0, xi, zeta, caps) > 0.0:
            lo = mid
        else:
            hi = mid
    # the residual is linear between breakpoints; finish with one secant step
    flo = xs_residual(lo, x0, r0, xi, zeta, caps)
    fhi = xs_residual(hi, x0, r0, xi, zeta, caps)
    mu = hi
    if flo != fhi:
        mu = lo + flo * (hi - lo) / (flo - fhi)
        if not (lo <= mu <= hi):
            mu = hi
    x = np.empty_like(x0)
    for k in range(x0.shape[0]):
        x[k] = min(max(x0[k] - mu, 0.0), caps[k])
    r = min(max(r0 + mu, xi), zeta)
    # remove the last rounding mismatch between r and sum(x) on the free side
    gap = x.sum() - r
    if gap != 0.0:
        if xi < r < zeta:
            r = min(max(r + gap, xi), zeta)
    return x, r


# -- moment-matrix maps ---------------------------------------------------------

@njit
def hankel_lift(mm, beta, h):
    """``H0 = M(0, ell)`` and ``H1 = beta M(0, ell-2) - M(2, ell)`` from m_1..m_ell."""
    H0 = np.empty((h + 1, h + 1))
    for a in range(h + 1):
        for b in range(h + 1):
            k = a + b
            H0[a, b] = 1.0 if k == 0 else mm[k - 1]
    H1 = np.empty((h, h))
    for a in range(h):
        for b in range(h):
            k = a + b
            base = 1.0 if k == 0 else mm[k - 1]
            H1[a, b] = beta * base - mm[k + 1]
    return H0, H1


@njit
def hankel_adjoint(W0, W1, beta, ell):
    """Adjoint of the linear part of :func:`hankel_lift` (constants excluded)."""
    h = ell // 2
    g = np.zeros(ell)
    for a in range(h + 1):
        for b in range(h + 1):
            k = a + b
            if k > 0:
                g[k - 1] += W0[a, b]
    for a in range(h):
        for b in range(h):
            k = a + b
            if k > 0:
                g[k - 1] += beta * W1[a, b]
            g[k + 1] -= W1[a, b]
    return g


# -- ADMM for the source-set projection -----------------------------------------

@njit
def moment_block_inverse(GtG, rho):
    n = GtG.shape[0]
    return np.linalg.inv(np.eye(n) * (1.0 + rho) + rho * GtG)


@njit
def as_admm(v, ell, beta, xi, zeta, caps, rho, GtG, W0, Y0, W1, Y1, Wh, Yh, Wx, Yx,
            tol, max_iter, eig_tol, max_sweeps):
    """Euclidean projection of ``v = (x, m_1..m_ell, r)`` onto the source set.

    Consensus ADMM with one copy per constraint block: the two Hankel PSD
    blocks, one hypograph copy ``(m_j, r)`` per moment and an ``(x, r)`` copy in
    the capped rate set.  ``GtG`` is the Gram matrix of the Hankel lift, so the
    moment block of ``I + rho * sum L_i^T L_i`` is ``(1 + rho) I + rho GtG``;
    the rate and aggregate blocks are diagonal.  Every 25 iterations ``rho``
    is doubled or halved when the primal and dual residuals are more than a
    factor 10 apart.  The ``W*``/``Y*`` arrays (copies and scaled duals) are
    updated in place so callers can warm start.

    Returns ``(u, iterations, primal_residual, dual_residual, rho)``;
    ``iterations`` is negative when ``max_iter`` was reached.
    """
    L = caps.shape[0]
    h = ell // 2
    n = L + ell + 1
    u = v.copy()
    Kmm = moment_block_inverse(GtG, rho)
    kx = 1.0 / (1.0 + rho)
    kr = 1.0 / (1.0 + rho * (ell + 1))
    pres = np.inf
    dres = np.inf
    for it in range(1, max_iter + 1):
        # u-update
        T0 = np.empty_like(W0)
        T1 = np.empty_like(W1)
        T0[:, :] = W0 - Y0
        T0[0, 0] -= 1.0
        T1[:, :] = W1 - Y1
        T1[0, 0] -= beta
        g = hankel_adjoint(T0, T1, beta, ell)
        rhs_m = np.empty(ell)
        for k in range(ell):
            rhs_m[k] = v[L + k] + rho * (g[k] + Wh[k, 0] - Yh[k, 0])
        mm = Kmm @ rhs_m
        for k in range(ell):
            u[L + k] = mm[k]
        rr = v[n - 1] + rho * (Wx[L] - Yx[L])
        for k in range(ell):
            rr += rho * (Wh[k, 1] - Yh[k, 1])
        r = rr * kr
        u[n - 1] = r
        for k in range(L):
            u[k] = (v[k] + rho * (Wx[k] - Yx[k])) * kx

        # copy updates and residuals
        H0, H1 = hankel_lift(mm, beta, h)
        P0, _, _ = psd_clamp(H0 + Y0, eig_tol, max_sweeps)
        P1, _, _ = psd_clamp(H1 + Y1, eig_tol, max_sweeps)
        p2 = 0.0
        d2 = 0.0
        for a in range(h + 1):
            for b in range(h + 1):
                d = P0[a, b] - W0[a, b]
                d2 += d * d
                e = H0[a, b] - P0[a, b]
                p2 += e * e
                W0[a, b] = P0[a, b]
                Y0[a, b] += e
        for a in range(h):
            for b in range(h):
                d = P1[a, b] - W1[a, b]
                d2 += d * d
                e = H1[a, b] - P1[a, b]
                p2 += e * e
                W1[a, b] = P1[a, b]
                Y1[a, b] += e
        for k in range(ell):
            na, nb = hypograph_kernel(mm[k] + Yh[k, 0], r + Yh[k, 1], k + 1, ell, zeta)
            d2 += (na - Wh[k, 0]) ** 2 + (nb - Wh[k, 1]) ** 2
            ea = mm[k] - na
            eb = r - nb
            p2 += ea * ea + eb * eb
            Wh[k, 0] = na
            Wh[k, 1] = nb
            Yh[k, 0] += ea
            Yh[k, 1] += eb
        xin = np.empty(L)
        for k in range(L):
            xin[k] = u[k] + Yx[k]
        nx, nr = xs_kernel(xin, r + Yx[L], xi, zeta, caps)
        for k in range(L):
            d2 += (nx[k] - Wx[k]) ** 2
            e = u[k] - nx[k]
            p2 += e * e
            Wx[k] = nx[k]
            Yx[k] += e
        d2 += (nr - Wx[L]) ** 2
        e = r - nr
        p2 += e * e
        Wx[L] = nr
        Yx[L] += e
        pres = math.sqrt(p2)
        dres = rho * math.sqrt(d2)
        if pres <= tol and dres <= tol:
            return u, it, pres, dres, rho
        if it % 25 == 0 and (pres > 10.0 * dres or dres > 10.0 * pres):
            f = 2.0 if pres > dres else 0.5
            rho *= f
            Y0 /= f
            Y1 /= f
            Yh /= f
            Yx /= f
            Kmm = moment_block_inverse(GtG, rho)
            kx = 1.0 / (1.0 + rho)
            kr = 1.0 / (1.0 + rho * (ell + 1))
    return u, -max_iter, pres, dres, rho


@njit
def as_violation(x, mm, r, caps, xi, zeta, beta, ell, eig_tol, max_sweeps):
    """Largest violation of any source-set constraint (``m_0 = 1`` implied)."""
    h = ell // 2
    H0, H1 = hankel_lift(mm, beta, h)
    w0, _, _ = jacobi_eig(H0, eig_tol, max_sweeps)
    w1, _, _ = jacobi_eig(H1, eig_tol, max_sweeps)
    v = max(0.0, -w0.min(), -w1.min())
    rp = max(r, 0.0)
    for k in range(ell):
        v = max(v, mm[k] - rp ** ((k + 1) / ell))
    s = 0.0
    for k in range(x.shape[0]):
        v = max(v, -x[k], x[k] - caps[k])
        s += x[k]
    v = max(v, abs(s - r), xi - r, r - zeta, -r)
    return v
