"""Numba-compiled dynamics core.

Same math as the vectorized numpy path in :mod:`swarm_nmpc.dynamics`,
written as explicit loops so small batches (RK4 stages, line-search
evaluations, finite-difference stencils) avoid numpy's per-call
overhead. The numpy path remains the reference implementation; the test
suite asserts agreement to near machine precision, and everything works
without numba installed.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is pre-installed in CI
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(f):
            return f
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _dyn_core(x, u, fext, mext, mass, grav, a_t, b_t, rho_air, disk_area,
              inertia, inertia_inv, thrust_col, area, r_h, r_s, orient,
              gamma, act_idx, sign, pitch_guard, out):
    B = x.shape[0]
    S = area.shape[0]
    for b in range(B):
        phi = x[b, 3]
        th = x[b, 4]
        psi = x[b, 5]
        if th >= pitch_guard or th <= -pitch_guard:
            return b + 1  # 1-based index of offending sample
        cphi, sphi = np.cos(phi), np.sin(phi)
        cth, sth = np.cos(th), np.sin(th)
        cpsi, spsi = np.cos(psi), np.sin(psi)

        # Body-to-world rotation, ZYX intrinsic.
        r00 = cpsi * cth
        r01 = cpsi * sth * sphi - spsi * cphi
        r02 = cpsi * sth * cphi + spsi * sphi
        r10 = spsi * cth
        r11 = spsi * sth * sphi + cpsi * cphi
        r12 = spsi * sth * cphi - cpsi * sphi
        r20 = -sth
        r21 = cth * sphi
        r22 = cth * cphi

        vx, vy, vz = x[b, 10], x[b, 11], x[b, 12]
        wx, wy, wz = x[b, 13], x[b, 14], x[b, 15]
        d_t = x[b, 9]

        # Backwash magnitude from the body-x freestream at the prop.
        vp = vx if vx >= 0.0 else -vx
        dt_pos = d_t if d_t > 0.0 else 0.0
        arg = vp * vp + 2.0 * dt_pos / (rho_air * disk_area)
        if arg < 0.0:
            arg = 0.0
        bw = np.sqrt(arg) - vp

        fx = -mass * grav * r20 + thrust_col[0] * d_t
        fy = -mass * grav * r21 + thrust_col[1] * d_t
        fz = -mass * grav * r22 + thrust_col[2] * d_t
        mx = 0.0
        my = 0.0
        mz = 0.0

        for s in range(S):
            ai = act_idx[s]
            if ai >= 0:
                dly = sign[s] * x[b, 6 + ai]
                rate = sign[s] * u[b, ai]
            else:
                dly = 0.0
                rate = 0.0
            cd, sd = np.cos(dly), np.sin(dly)
            # Rs = orient[s] @ Rot_y(dly); columns of Rot_y: (cd,0,-sd),(0,1,0),(sd,0,cd)
            o = orient[s]
            s00 = o[0, 0] * cd - o[0, 2] * sd
            s10 = o[1, 0] * cd - o[1, 2] * sd
            s20 = o[2, 0] * cd - o[2, 2] * sd
            s01 = o[0, 1]
            s11 = o[1, 1]
            s21 = o[2, 1]
            s02 = o[0, 0] * sd + o[0, 2] * cd
            s12 = o[1, 0] * sd + o[1, 2] * cd
            s22 = o[2, 0] * sd + o[2, 2] * cd

            rhx, rhy, rhz = r_h[s, 0], r_h[s, 1], r_h[s, 2]
            hubx = vx + wy * rhz - wz * rhy + gamma[s] * bw
            huby = vy + wz * rhx - wx * rhz
            hubz = vz + wx * rhy - wy * rhx

            # Into the surface frame: v_s = Rs^T hub, w_in = Rs^T w.
            vsx = s00 * hubx + s10 * huby + s20 * hubz
            vsy = s01 * hubx + s11 * huby + s21 * hubz
            vsz = s02 * hubx + s12 * huby + s22 * hubz
            wix = s00 * wx + s10 * wy + s20 * wz
            wiy = s01 * wx + s11 * wy + s21 * wz + rate
            wiz = s02 * wx + s12 * wy + s22 * wz

            rsx, rsy, rsz = r_s[s, 0], r_s[s, 1], r_s[s, 2]
            vsx += wiy * rsz - wiz * rsy
            vsy += wiz * rsx - wix * rsz
            vsz += wix * rsy - wiy * rsx

            alpha = np.arctan2(vsz, vsx)
            speed2 = vsx * vsx + vsy * vsy + vsz * vsz
            fn = -rho_air * np.sin(alpha) * speed2 * area[s]

            fbx = fn * s02
            fby = fn * s12
            fbz = fn * s22
            levx = rhx + s00 * rsx + s01 * rsy + s02 * rsz
            levy = rhy + s10 * rsx + s11 * rsy + s12 * rsz
            levz = rhz + s20 * rsx + s21 * rsy + s22 * rsz
            fx += fbx
            fy += fby
            fz += fbz
            mx += levy * fbz - levz * fby
            my += levz * fbx - levx * fbz
            mz += levx * fby - levy * fbx

        fx += fext[b, 0]
        fy += fext[b, 1]
        fz += fext[b, 2]
        mx += mext[b, 0]
        my += mext[b, 1]
        mz += mext[b, 2]

        # r_dot = R v
        out[b, 0] = r00 * vx + r01 * vy + r02 * vz
        out[b, 1] = r10 * vx + r11 * vy + r12 * vz
        out[b, 2] = r20 * vx + r21 * vy + r22 * vz
        # theta_dot = T_inv w
        tth = sth / cth
        out[b, 3] = wx + sphi * tth * wy + cphi * tth * wz
        out[b, 4] = cphi * wy - sphi * wz
        out[b, 5] = (sphi / cth) * wy + (cphi / cth) * wz
        # delta_dot = u_cs, thrust first-order model
        out[b, 6] = u[b, 0]
        out[b, 7] = u[b, 1]
        out[b, 8] = u[b, 2]
        out[b, 9] = a_t * d_t + b_t * u[b, 3]
        # v_dot = f/m - w x v
        out[b, 10] = fx / mass - (wy * vz - wz * vy)
        out[b, 11] = fy / mass - (wz * vx - wx * vz)
        out[b, 12] = fz / mass - (wx * vy - wy * vx)
        # w_dot = J^-1 (m - w x (J w))
        jwx = inertia[0, 0] * wx + inertia[0, 1] * wy + inertia[0, 2] * wz
        jwy = inertia[1, 0] * wx + inertia[1, 1] * wy + inertia[1, 2] * wz
        jwz = inertia[2, 0] * wx + inertia[2, 1] * wy + inertia[2, 2] * wz
        tx = mx - (wy * jwz - wz * jwy)
        ty = my - (wz * jwx - wx * jwz)
        tz = mz - (wx * jwy - wy * jwx)
        out[b, 13] = inertia_inv[0, 0] * tx + inertia_inv[0, 1] * ty + inertia_inv[0, 2] * tz
        out[b, 14] = inertia_inv[1, 0] * tx + inertia_inv[1, 1] * ty + inertia_inv[1, 2] * tz
        out[b, 15] = inertia_inv[2, 0] * tx + inertia_inv[2, 1] * ty + inertia_inv[2, 2] * tz
    return 0
