"""Compiled trial loop for the built-in criteria and penalties.

Mirrors the numpy pipeline in ``harness._run_numpy`` step for step; the
test-suite checks the two against each other.
"""

import numba
import numpy as np

CRIT_LS, CRIT_MH = 0, 1
STEP_FIXED, STEP_AOP = 0, 1
RHO_ZERO, RHO_FIXED, RHO_AOP = 0, 1, 2


@numba.njit(cache=True)
def run_kernel(
    rev, u_now, d_dec, M, T, wo1, wo2, switch_k, stride,
    crit, lam, nw, step, mu_fixed, zeta, eps1, eps2,
    rho_mode, rho_fixed, theta, delta,
    want_efb, urev, d,
):
    N = rev.shape[0]
    K = d_dec.shape[1]
    n_rep = (K + stride - 1) // stride
    msd = np.empty(n_rep)
    efb = np.zeros(n_rep)

    w = np.zeros(M)
    psi = np.zeros(M)
    g = np.zeros(M)
    P = np.zeros(M)
    e = np.zeros(N)
    phi = np.ones(N)
    mu = np.full(N, mu_fixed)
    norms = np.zeros(N)

    c_sigma = 1.483 * (1.0 + 5.0 / (nw - 1))
    mh_buf = np.zeros((N, nw))
    mh_sigma2 = np.zeros(N)
    mh_xi = np.zeros(N)
    tmp = np.zeros(nw)

    s2e = np.zeros(N)
    s2u = np.zeros(N)
    s2nu = np.zeros(N)
    r_ue = np.zeros((N, M))

    wo = wo1
    wo_energy = 0.0
    for m in range(M):
        wo_energy += wo[m] * wo[m]

    for k in range(K):
        n = k * N
        if k == switch_k:
            wo = wo2
            wo_energy = 0.0
            for m in range(M):
                wo_energy += wo[m] * wo[m]
        a = T - 1 - n
        if k % stride == 0:
            acc = 0.0
            for m in range(M):
                dv = w[m] - wo[m]
                acc += dv * dv
            msd[k // stride] = acc / wo_energy
            if want_efb:
                y = 0.0
                for m in range(M):
                    y += urev[a + m] * w[m]
                efb[k // stride] = d[n] - y

        # subband errors and regressor energies
        for i in range(N):
            s = 0.0
            yy = 0.0
            for m in range(M):
                v = rev[i, a + m]
                s += v * v
                yy += v * w[m]
            norms[i] = s
            e[i] = d_dec[i, k] - yy

        # robust scaling
        if crit == CRIT_MH:
            cnt = min(k + 1, nw)
            lam_k = 0.0 if k == 0 else lam
            for i in range(N):
                mh_buf[i, k % nw] = e[i] * e[i]
                for j in range(cnt):
                    tmp[j] = mh_buf[i, j]
                srt = np.sort(tmp[:cnt])
                med = 0.5 * (srt[(cnt - 1) // 2] + srt[cnt // 2])
                mh_sigma2[i] = lam_k * mh_sigma2[i] + c_sigma * (1.0 - lam_k) * med
                mh_xi[i] = 2.576 * np.sqrt(mh_sigma2[i])
                ae = abs(e[i])
                if ae < mh_xi[i] or (mh_xi[i] == 0.0 and ae == 0.0):
                    phi[i] = 1.0
                else:
                    phi[i] = 0.0

        # variable step-sizes
        if step == STEP_AOP:
            for i in range(N):
                pe = phi[i] * e[i]
                s2e[i] = zeta * s2e[i] + (1.0 - zeta) * pe * pe
                un = u_now[i, k]
                s2u[i] = zeta * s2u[i] + (1.0 - zeta) * un * un
                c = (1.0 - zeta) * pe
                rr = 0.0
                for m in range(M):
                    r_ue[i, m] = zeta * r_ue[i, m] + c * rev[i, a + m]
                    rr += r_ue[i, m] * r_ue[i, m]
                raw = s2e[i] - rr / (s2u[i] + eps1)
                if not raw < 0.0:
                    s2nu[i] = raw
                mi = 1.0 - np.sqrt(s2nu[i] / (s2e[i] + eps2))
                mu[i] = min(max(mi, 0.0), 1.0)

        # coarse update
        for m in range(M):
            psi[m] = w[m]
        for i in range(N):
            gain = mu[i] * phi[i] * e[i] / (norms[i] + delta)
            for m in range(M):
                psi[m] += gain * rev[i, a + m]

        if rho_mode == RHO_ZERO:
            for m in range(M):
                w[m] = psi[m]
        else:
            for m in range(M):
                p = psi[m]
                if p > 0.0:
                    g[m] = 1.0 / (theta + p)
                elif p < 0.0:
                    g[m] = -1.0 / (theta - p)
                else:
                    g[m] = 0.0
                P[m] = g[m]
            for i in range(N):
                ug = 0.0
                for m in range(M):
                    ug += rev[i, a + m] * g[m]
                c = ug / (norms[i] + delta)
                for m in range(M):
                    P[m] -= c * rev[i, a + m]
            if rho_mode == RHO_FIXED:
                rho = rho_fixed
            elif k == 0:
                rho = 0.0
            else:
                num = 0.0
                pp = 0.0
                for m in range(M):
                    num += (psi[m] - w[m]) * P[m]
                    pp += P[m] * P[m]
                rho = 0.0 if pp == 0.0 else max(num / (pp + eps1), 0.0)
            for m in range(M):
                w[m] = psi[m] - rho * P[m]

        ww = 0.0
        for m in range(M):
            ww += w[m] * w[m]
        if not np.isfinite(ww):
            return msd, efb, k

    return msd, efb, -1
