"""Numba kernels: policy improvement, line-Jacobi sweeps, bulk simulation.

Packed-array column layouts are defined in solver.py (_JET_COLS and
_CAND_COLS docstrings). The numpy fallback (_kernels_np.py) mirrors every
arithmetic expression here in the same evaluation order; keep the two in
lockstep so both backends stay bit-identical.
"""

from __future__ import annotations

import numpy as np

from .backend import njit, prange


@njit(cache=True, parallel=True)
def improve_nb(jets, cands, lam, eps, tkind, tpar, out_val, out_idx, out_t1, out_t2):
    n = jets.shape[0]
    m = cands.shape[0]
    inv2eps = 1.0 / (2.0 * eps)
    for p in prange(n):
        phi0 = jets[p, 0]
        dxf = jets[p, 1]
        dxb = jets[p, 2]
        d1f = jets[p, 3]
        d1b = jets[p, 4]
        d2f = jets[p, 5]
        d2b = jets[p, 6]
        dxx = jets[p, 7]
        d11 = jets[p, 8]
        d22 = jets[p, 9]
        cxy1 = jets[p, 10]
        cxy2 = jets[p, 11]
        cy12 = jets[p, 12]
        gxc = jets[p, 13]
        g1c = jets[p, 14]
        g2c = jets[p, 15]
        xdr = jets[p, 16]
        best = -1e300
        bi = 0
        bt1 = 0.0
        bt2 = 0.0
        for j in range(m):
            cs1 = cands[j, 0]
            cs2 = cands[j, 1]
            cbx = cands[j, 2]
            cby1 = cands[j, 3]
            cby2 = cands[j, 4]
            cg11 = cands[j, 5]
            cg12 = cands[j, 6]
            cg21 = cands[j, 7]
            cg22 = cands[j, 8]
            sxx = cands[j, 9]
            s11 = cands[j, 10]
            s22 = cands[j, 11]
            sxy1 = cands[j, 12]
            sxy2 = cands[j, 13]
            s12 = cands[j, 14]
            g1 = cs1 * gxc - (cg11 * g1c + cg21 * g2c)
            g2 = cs2 * gxc - (cg12 * g1c + cg22 * g2c)
            t1 = eps * g1
            t2 = eps * g2
            if tkind == 1:
                t1 = min(max(t1, tpar[0]), tpar[2])
                t2 = min(max(t2, tpar[1]), tpar[3])
            elif tkind == 2:
                n2 = t1 * t1 + t2 * t2
                r2 = tpar[0] * tpar[0]
                if n2 > r2:
                    sc = tpar[0] / np.sqrt(n2)
                    t1 = t1 * sc
                    t2 = t2 * sc
            elif tkind == 3:
                t1 = 0.0
                t2 = 0.0
            pen = (t1 * t1 + t2 * t2) * inv2eps
            ax = xdr + cbx + cs1 * t1 + cs2 * t2
            ay1 = cby1 - (cg11 * t1 + cg12 * t2)
            ay2 = cby2 - (cg21 * t1 + cg22 * t2)
            adv = (
                ax * (dxf if ax > 0.0 else dxb)
                + ay1 * (d1f if ay1 > 0.0 else d1b)
                + ay2 * (d2f if ay2 > 0.0 else d2b)
            )
            dif = 0.5 * (sxx * dxx + s11 * d11 + s22 * d22) + sxy1 * cxy1 + sxy2 * cxy2 + s12 * cy12
            val = lam * phi0 - adv - dif + pen
            if val > best:
                best = val
                bi = j
                bt1 = t1
                bt2 = t2
        out_val[p] = best
        out_idx[p] = bi
        out_t1[p] = bt1
        out_t2[p] = bt2


@njit(cache=True, parallel=True)
def sweep_nb(phi, out, sub, dia, sup, cy1p, cy1m, cy2p, cy2m, cxy1, cxy2, cy12, rhs0, omega, has_cross):
    nx = phi.shape[0]
    n1 = phi.shape[1]
    n2 = phi.shape[2]
    nlines = n1 * n2
    for l in prange(nlines):
        j1 = l // n2
        j2 = l % n2
        jp1 = j1 + 1 if j1 + 1 < n1 else j1
        jm1 = j1 - 1 if j1 > 0 else j1
        jp2 = j2 + 1 if j2 + 1 < n2 else j2
        jm2 = j2 - 1 if j2 > 0 else j2
        dp = np.empty(nx)
        rp = np.empty(nx)
        for i in range(nx):
            rhs = (
                rhs0[i, j1, j2]
                + cy1p[i, j1, j2] * phi[i, jp1, j2]
                + cy1m[i, j1, j2] * phi[i, jm1, j2]
                + cy2p[i, j1, j2] * phi[i, j1, jp2]
                + cy2m[i, j1, j2] * phi[i, j1, jm2]
            )
            if has_cross:
                c1 = cxy1[i, j1, j2]
                if c1 != 0.0:
                    rhs += c1 * (
                        phi[i + 1, jp1, j2] - phi[i + 1, jm1, j2] - phi[i - 1, jp1, j2] + phi[i - 1, jm1, j2]
                    )
                c2 = cxy2[i, j1, j2]
                if c2 != 0.0:
                    rhs += c2 * (
                        phi[i + 1, j1, jp2] - phi[i + 1, j1, jm2] - phi[i - 1, j1, jp2] + phi[i - 1, j1, jm2]
                    )
                c3 = cy12[i, j1, j2]
                if c3 != 0.0:
                    rhs += c3 * (
                        phi[i, jp1, jp2] - phi[i, jp1, jm2] - phi[i, jm1, jp2] + phi[i, jm1, jm2]
                    )
            if i == 0:
                dp[0] = dia[0, j1, j2]
                rp[0] = rhs
            else:
                w = sub[i, j1, j2] / dp[i - 1]
                dp[i] = dia[i, j1, j2] - w * sup[i - 1, j1, j2]
                rp[i] = rhs - w * rp[i - 1]
        sol_next = rp[nx - 1] / dp[nx - 1]
        out[nx - 1, j1, j2] = (1.0 - omega) * phi[nx - 1, j1, j2] + omega * sol_next
        for i in range(nx - 2, -1, -1):
            sol_i = (rp[i] - sup[i, j1, j2] * sol_next) / dp[i]
            out[i, j1, j2] = (1.0 - omega) * phi[i, j1, j2] + omega * sol_i
            sol_next = sol_i


@njit(cache=True, parallel=True)
def sim_const_nb(
    seeds, x0, y01, y02,
    r, c, rl, lam, tmax, dt, eps,
    me1, me2, s11, s12, s21, s22,
    mg1, mg2, sg11, sg12, sg21, sg22, q1, q2,
    pi1c, pi2c, t1c, t2c,
    out_contrib, out_pen, out_status, out_tend,
):
    n = seeds.shape[0]
    sqdt = np.sqrt(dt)
    inv2eps = 1.0 / (2.0 * eps)
    for p in prange(n):
        np.random.seed(seeds[p])
        u = np.random.random()
        tau = -np.log1p(-u) / lam
        horizon = tau if tau < tmax else tmax
        nst = int(np.floor(horizon / dt))
        x = x0
        y1 = y01
        y2 = y02
        pen = 0.0
        ruined = x <= rl
        k = 0
        while k < nst and not ruined:
            z1 = np.random.standard_normal()
            z2 = np.random.standard_normal()
            dw1 = sqdt * z1
            dw2 = sqdt * z2
            bx = r * x - c + pi1c * (me1 + s11 * t1c + s12 * t2c) + pi2c * (me2 + s21 * t1c + s22 * t2c)
            gx1 = pi1c * s11 + pi2c * s21
            gx2 = pi1c * s12 + pi2c * s22
            xt = x + bx * dt + gx1 * dw1 + gx2 * dw2
            a1 = mg1 + sg11 * t1c + sg12 * t2c
            a2 = mg2 + sg21 * t1c + sg22 * t2c
            y1t = y1 - pi1c * (a1 * dt + sg11 * dw1 + sg12 * dw2)
            y2t = y2 - pi2c * (a2 * dt + sg21 * dw1 + sg22 * dw2)
            ds1 = max(0.0, -y1t)
            ds2 = max(0.0, -y2t)
            dm1 = ds1 / (1.0 + q1)
            dm2 = ds2 / (1.0 + q2)
            y1 = y1t + ds1
            y2 = y2t + ds2
            x = xt - (q1 * dm1 + q2 * dm2)
            pen += (t1c * t1c + t2c * t2c) * dt * inv2eps
            k += 1
            if x <= rl:
                ruined = True
                break
        if ruined:
            out_status[p] = 1
            out_contrib[p] = 1.0 - pen
        else:
            out_status[p] = 2 if tau <= tmax else 3
            out_contrib[p] = 0.0 - pen
        out_pen[p] = pen
        out_tend[p] = k * dt


@njit(cache=True, parallel=True)
def sim_table_nb(
    seeds, x0, y01, y02,
    r, c, rl, lam, tmax, dt, eps,
    me1, me2, s11, s12, s21, s22,
    mg1, mg2, sg11, sg12, sg21, sg22, q1, q2,
    xg, y1g, y2g, pi_tab, th_tab,
    plo1, plo2, phi1, phi2, tkind, tpar,
    out_contrib, out_pen, out_status, out_tend,
):
    n = seeds.shape[0]
    sqdt = np.sqrt(dt)
    inv2eps = 1.0 / (2.0 * eps)
    nx = xg.shape[0]
    n1 = y1g.shape[0]
    n2 = y2g.shape[0]
    hx = xg[1] - xg[0]
    h1 = y1g[1] - y1g[0]
    h2 = y2g[1] - y2g[0]
    for p in prange(n):
        np.random.seed(seeds[p])
        u = np.random.random()
        tau = -np.log1p(-u) / lam
        horizon = tau if tau < tmax else tmax
        nst = int(np.floor(horizon / dt))
        x = x0
        y1 = y01
        y2 = y02
        pen = 0.0
        ruined = x <= rl
        k = 0
        while k < nst and not ruined:
            z1 = np.random.standard_normal()
            z2 = np.random.standard_normal()
            dw1 = sqdt * z1
            dw2 = sqdt * z2
            tx = (x - xg[0]) / hx
            ix = int(np.floor(tx))
            ix = min(max(ix, 0), nx - 2)
            wx = min(max(tx - ix, 0.0), 1.0)
            t1y = (y1 - y1g[0]) / h1
            i1 = int(np.floor(t1y))
            i1 = min(max(i1, 0), n1 - 2)
            w1 = min(max(t1y - i1, 0.0), 1.0)
            t2y = (y2 - y2g[0]) / h2
            i2 = int(np.floor(t2y))
            i2 = min(max(i2, 0), n2 - 2)
            w2 = min(max(t2y - i2, 0.0), 1.0)
            pi1 = 0.0
            pi2 = 0.0
            th1 = 0.0
            th2 = 0.0
            for comp in range(2):
                v = (
                    (
                        (pi_tab[ix, i1, i2, comp] * (1.0 - wx) + pi_tab[ix + 1, i1, i2, comp] * wx) * (1.0 - w1)
                        + (pi_tab[ix, i1 + 1, i2, comp] * (1.0 - wx) + pi_tab[ix + 1, i1 + 1, i2, comp] * wx) * w1
                    ) * (1.0 - w2)
                    + (
                        (pi_tab[ix, i1, i2 + 1, comp] * (1.0 - wx) + pi_tab[ix + 1, i1, i2 + 1, comp] * wx) * (1.0 - w1)
                        + (pi_tab[ix, i1 + 1, i2 + 1, comp] * (1.0 - wx) + pi_tab[ix + 1, i1 + 1, i2 + 1, comp] * wx) * w1
                    ) * w2
                )
                t = (
                    (
                        (th_tab[ix, i1, i2, comp] * (1.0 - wx) + th_tab[ix + 1, i1, i2, comp] * wx) * (1.0 - w1)
                        + (th_tab[ix, i1 + 1, i2, comp] * (1.0 - wx) + th_tab[ix + 1, i1 + 1, i2, comp] * wx) * w1
                    ) * (1.0 - w2)
                    + (
                        (th_tab[ix, i1, i2 + 1, comp] * (1.0 - wx) + th_tab[ix + 1, i1, i2 + 1, comp] * wx) * (1.0 - w1)
                        + (th_tab[ix, i1 + 1, i2 + 1, comp] * (1.0 - wx) + th_tab[ix + 1, i1 + 1, i2 + 1, comp] * wx) * w1
                    ) * w2
                )
                if comp == 0:
                    pi1 = v
                    th1 = t
                else:
                    pi2 = v
                    th2 = t
            pi1 = min(max(pi1, plo1), phi1)
            pi2 = min(max(pi2, plo2), phi2)
            if tkind == 1:
                th1 = min(max(th1, tpar[0]), tpar[2])
                th2 = min(max(th2, tpar[1]), tpar[3])
            elif tkind == 2:
                nn = th1 * th1 + th2 * th2
                rr = tpar[0] * tpar[0]
                if nn > rr:
                    sc = tpar[0] / np.sqrt(nn)
                    th1 = th1 * sc
                    th2 = th2 * sc
            elif tkind == 3:
                th1 = 0.0
                th2 = 0.0
            bx = r * x - c + pi1 * (me1 + s11 * th1 + s12 * th2) + pi2 * (me2 + s21 * th1 + s22 * th2)
            gx1 = pi1 * s11 + pi2 * s21
            gx2 = pi1 * s12 + pi2 * s22
            xt = x + bx * dt + gx1 * dw1 + gx2 * dw2
            a1 = mg1 + sg11 * th1 + sg12 * th2
            a2 = mg2 + sg21 * th1 + sg22 * th2
            y1t = y1 - pi1 * (a1 * dt + sg11 * dw1 + sg12 * dw2)
            y2t = y2 - pi2 * (a2 * dt + sg21 * dw1 + sg22 * dw2)
            ds1 = max(0.0, -y1t)
            ds2 = max(0.0, -y2t)
            dm1 = ds1 / (1.0 + q1)
            dm2 = ds2 / (1.0 + q2)
            y1 = y1t + ds1
            y2 = y2t + ds2
            x = xt - (q1 * dm1 + q2 * dm2)
            pen += (th1 * th1 + th2 * th2) * dt * inv2eps
            k += 1
            if x <= rl:
                ruined = True
                break
        if ruined:
            out_status[p] = 1
            out_contrib[p] = 1.0 - pen
        else:
            out_status[p] = 2 if tau <= tmax else 3
            out_contrib[p] = 0.0 - pen
        out_pen[p] = pen
        out_tend[p] = k * dt


@njit(cache=True, parallel=True)
def default_times_nb(seeds, lam, out):
    n = seeds.shape[0]
    for p in prange(n):
        np.random.seed(seeds[p])
        u = np.random.random()
        out[p] = -np.log1p(-u) / lam
