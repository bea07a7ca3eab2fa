"""Compiled per-step world update.

All vehicles live in flat arrays indexed by slot. Each corridor is a single
lane laid out along one coordinate (entry at 0), and vehicles on it never
overtake, so each vehicle's leader is fixed at spawn.
"""

import math

import numpy as np
from numba import njit

# indices into the parameter vector
(P_DT, P_VMAX, P_VAVG, P_AMAX, P_DACC, P_WIDTH, P_G0, P_TAU, P_GAIN, P_MARGIN,
 P_DET, P_ADV, P_QINFO, P_HDIS, P_ADVM, P_QSPEED, P_QRANGE, P_LOOK,
 P_MASS, P_CDA, P_RHO, P_CRR, P_IDLE, P_GPJ, P_GRAV, P_SLOW, P_SHIGH, P_ADVMIN, P_ARRMIN) = range(29)
N_PARAMS = 29

TB_A, TB_B, TB_C, TB_D = 0, 1, 2, 3

# event kinds
EV_ACCESS, EV_ENTER, EV_EXIT, EV_DONE, EV_RED, EV_REAR, EV_BOX = range(7)

GREEN, YELLOW, RED = 0, 1, 2


@njit(cache=True)
def signal_state(plans, row, ph, t):
    cycle = plans[row, 0]
    u = (t - plans[row, 1] - plans[row, 2 + 3 * ph]) % cycle
    if u < plans[row, 3 + 3 * ph]:
        return GREEN
    if u < plans[row, 3 + 3 * ph] + plans[row, 4 + 3 * ph]:
        return YELLOW
    return RED


@njit(cache=True)
def green_window(plans, row, ph, t):
    """(start, end) of the green interval containing t, else the next one."""
    cycle = plans[row, 0]
    green = plans[row, 3 + 3 * ph]
    u = (t - plans[row, 1] - plans[row, 2 + 3 * ph]) % cycle
    base = t - u
    if u < green:
        return base, base + green
    return base + cycle, base + cycle + green


@njit(cache=True)
def safe_speed(gap, v_lead, b, tau):
    """Largest speed that still allows stopping behind a leader braking at b."""
    g = gap if gap > 0.0 else 0.0
    return -b * tau + math.sqrt(b * b * tau * tau + v_lead * v_lead + 2.0 * b * g)


@njit(cache=True)
def fuel_rate_scalar(v, a, P):
    force = P[P_MASS] * a + 0.5 * P[P_RHO] * P[P_CDA] * v * v + P[P_CRR] * P[P_MASS] * P[P_GRAV]
    power = force * v
    if power < 0.0:
        power = 0.0
    return P[P_IDLE] + P[P_GPJ] * power


@njit(cache=True)
def track_access(d, rem, v, P):
    """Command that reaches the access point ``d`` ahead in ``rem`` seconds.

    When the mean speed needed is at least the arrival floor the vehicle
    simply tracks it, which wastes the least kinetic energy. Otherwise it
    plans to cruise at a lower speed u and then accelerate at a_max so that
    it crosses the access point at v_avg (or the highest speed reachable
    from a standstill in d), instead of creeping up to it.
    """
    vmax = P[P_VMAX]
    amax = P[P_AMAX]
    if rem <= 1e-9:
        return amax
    target = d / rem
    va = P[P_VAVG]
    if target >= P[P_ARRMIN]:
        if target >= vmax:
            return amax
        return P[P_GAIN] * (target - v)
    if d < va * va / (2.0 * amax):
        va = math.sqrt(2.0 * amax * d)
    # cruise at u for rem - (va - u) / amax, then accelerate to va
    b = amax * rem - va
    disc = b * b - (va * va - 2.0 * amax * d)
    u = -b + math.sqrt(disc) if disc > 0.0 else -b
    if u < 0.0:
        u = 0.0
    if u > va:
        u = va
    if rem - (va - u) / amax <= P[P_DT]:
        return amax
    return P[P_GAIN] * (u - v)


@njit(cache=True)
def advisory_speed(d, t, plans, row, ph, q, P):
    """Highest speed up to v_avg that reaches the stop bar inside a green.

    Falls back to v_avg when that speed would be below the advisory floor;
    the vehicle then cruises and stops at the signal like in testbed A.
    """
    vavg = P[P_VAVG]
    t_free = d / vavg
    gs, ge = green_window(plans, row, ph, t)
    cycle = plans[row, 0]
    delay = q * P[P_HDIS]
    for _ in range(3):
        start = gs + delay + P[P_ADVM]
        arrive = t + t_free
        if arrive >= start and arrive <= ge - P[P_ADVM]:
            return vavg
        if arrive < start:
            if start - t <= 0.0:
                return vavg
            v_adv = d / (start - t)
            if v_adv < P[P_ADVMIN]:
                return vavg
            return v_adv
        gs += cycle
        ge += cycle
    return vavg


@njit(cache=True)
def step(t, idx, P, testbed, fixed_time,
         corr, pos, vel, acc, vlen, leg, leader, assigned, granted, latch,
         sstate, nstops, stime, fuel, sig_ctx,
         c_nlegs, c_bar, c_int, c_phase, c_len,
         plans, box_phase, box_count, lane_q, int_q,
         ev_veh, ev_kind, ev_leg, ev_time):
    """Advance every vehicle in ``idx`` by one step. Returns the number of events."""
    dt = P[P_DT]
    vmax = P[P_VMAX]
    vavg = P[P_VAVG]
    amax = P[P_AMAX]
    dacc = P[P_DACC]
    W = P[P_WIDTH]
    n = idx.shape[0]
    nev = 0

    # queues before the move
    lane_q[:, :] = 0
    int_q[:, :] = 0
    for k in range(n):
        i = idx[k]
        c = corr[i]
        lg = leg[i]
        if lg < c_nlegs[c]:
            d = c_bar[c, lg] - pos[i]
            if d >= 0.0 and d <= P[P_QRANGE] and vel[i] < P[P_QSPEED]:
                lane_q[c, lg] += 1
                int_q[c_int[c, lg], c_phase[c]] += 1

    # commands, computed from the state at t
    for k in range(n):
        i = idx[k]
        c = corr[i]
        lg = leg[i]
        v = vel[i]
        ph = c_phase[c]
        a_ctrl = P[P_GAIN] * (vavg - v)
        v_cap = vmax
        sig_ctx[i] = -1
        if lg < c_nlegs[c]:
            bar = c_bar[c, lg]
            row = c_int[c, lg]
            ap = bar - dacc
            d_stop = bar - pos[i]
            obstacle = False
            if testbed >= TB_C:
                if pos[i] >= ap:
                    # through the box: speed up to v_avg at a_max, never brake
                    a_ctrl = amax if v < vavg else 0.0
                elif not math.isnan(assigned[i]):
                    a_ctrl = track_access(ap - pos[i], assigned[i] - t, v, P)
            if fixed_time and d_stop > 0.0:
                rng = P[P_DET] if testbed == TB_A else P[P_ADV]
                if d_stop <= rng:
                    st = signal_state(plans, row, ph, t)
                    sig_ctx[i] = st
                    if testbed == TB_B:
                        # queued vehicles ahead of this one on the same approach
                        q = 0
                        if d_stop <= P[P_QINFO]:
                            j = leader[i]
                            while j >= 0 and leg[j] == lg:
                                dj = bar - pos[j]
                                if dj >= 0.0 and dj <= P[P_QRANGE] and vel[j] < P[P_QSPEED]:
                                    q += 1
                                j = leader[j]
                        if not (d_stop <= P[P_QRANGE] and v < P[P_QSPEED]):
                            adv = advisory_speed(d_stop, t, plans, row, ph, q, P)
                            a_ctrl = P[P_GAIN] * (adv - v)
                    # decide once per non-green interval: stop (2) or go (1)
                    if st == GREEN:
                        latch[i] = 0
                    else:
                        if latch[i] == 0:
                            can_stop = v * v / (2.0 * amax) + v * dt <= d_stop - P[P_MARGIN] + 1e-9
                            latch[i] = 2 if (st == RED or can_stop) else 1
                        if latch[i] == 2:
                            obstacle = True
            # box interlock: never enter while the other phase holds the box
            if d_stop > 0.0 and not granted[i] and not obstacle:
                d_req = v * v / (2.0 * amax) + v * (dt + P[P_LOOK]) + 5.0
                if d_stop <= d_req:
                    if box_phase[row] < 0 or box_phase[row] == ph:
                        granted[i] = True
                        box_phase[row] = ph
                        box_count[row] += 1
                    else:
                        obstacle = True
            if obstacle and granted[i] and d_stop > 0.0:
                # gave up the box before reaching it (e.g. stopping for a yellow)
                granted[i] = False
                box_count[row] -= 1
                if box_count[row] == 0:
                    box_phase[row] = -1
            if obstacle:
                vs = safe_speed(d_stop - P[P_MARGIN], 0.0, amax, dt)
                if vs < v_cap:
                    v_cap = vs
        ld = leader[i]
        if ld >= 0:
            gap = pos[ld] - vlen[ld] - pos[i] - P[P_G0]
            vs = safe_speed(gap, vel[ld], amax, P[P_TAU])
            if vs < v_cap:
                v_cap = vs
        a = a_ctrl
        if (v_cap - v) / dt < a:
            a = (v_cap - v) / dt
        if a > amax:
            a = amax
        if a < -amax:
            a = -amax
        if v + a * dt > vmax:
            a = (vmax - v) / dt
        if v + a * dt < 0.0:
            a = -v / dt
        acc[i] = a

        # per-sample accumulators (same definitions as the metrics module)
        if v < P[P_SLOW]:
            stime[i] += dt
        if sstate[i]:
            if v > P[P_SHIGH]:
                sstate[i] = False
        elif v < P[P_SLOW]:
            sstate[i] = True
            nstops[i] += 1
        fuel[i] += fuel_rate_scalar(v, a, P) * dt

    # integrate and detect crossings
    for k in range(n):
        i = idx[k]
        c = corr[i]
        x0 = pos[i]
        v0 = vel[i]
        a = acc[i]
        v1 = v0 + a * dt
        x1 = x0 + v0 * dt + 0.5 * a * dt * dt
        pos[i] = x1
        vel[i] = v1
        lg = leg[i]
        if lg < c_nlegs[c]:
            bar = c_bar[c, lg]
            row = c_int[c, lg]
            ap = bar - dacc
            if x0 < ap <= x1:
                ev_veh[nev] = i
                ev_kind[nev] = EV_ACCESS
                ev_leg[nev] = lg
                ev_time[nev] = t + dt * (ap - x0) / (x1 - x0)
                nev += 1
            if x0 < bar <= x1:
                te = t + dt * (bar - x0) / (x1 - x0)
                ev_veh[nev] = i
                ev_kind[nev] = EV_ENTER
                ev_leg[nev] = lg
                ev_time[nev] = te
                nev += 1
                if not granted[i]:
                    granted[i] = True
                    box_count[row] += 1
                    if box_phase[row] < 0:
                        box_phase[row] = c_phase[c]
                if fixed_time and signal_state(plans, row, c_phase[c], te) == RED:
                    ev_veh[nev] = i
                    ev_kind[nev] = EV_RED
                    ev_leg[nev] = lg
                    ev_time[nev] = te
                    nev += 1
            clear = bar + W + vlen[i]
            if x0 < clear <= x1:
                ev_veh[nev] = i
                ev_kind[nev] = EV_EXIT
                ev_leg[nev] = lg
                ev_time[nev] = t + dt * (clear - x0) / (x1 - x0)
                nev += 1
                box_count[row] -= 1
                if box_count[row] <= 0:
                    box_count[row] = 0
                    box_phase[row] = -1
                granted[i] = False
                latch[i] = 0
                leg[i] = lg + 1
        if x0 < c_len[c] <= x1:
            ev_veh[nev] = i
            ev_kind[nev] = EV_DONE
            ev_leg[nev] = leg[i]
            ev_time[nev] = t + dt * (c_len[c] - x0) / (x1 - x0)
            nev += 1

    # safety checks on the new state
    for k in range(n):
        i = idx[k]
        ld = leader[i]
        if ld >= 0:
            if pos[ld] - vlen[ld] - pos[i] <= 0.0:
                ev_veh[nev] = i
                ev_kind[nev] = EV_REAR
                ev_leg[nev] = ld
                ev_time[nev] = t + dt
                nev += 1
    occ = np.zeros((box_phase.shape[0], 2), dtype=np.int64)
    for k in range(n):
        i = idx[k]
        c = corr[i]
        lg = leg[i]
        if lg < c_nlegs[c] and pos[i] > c_bar[c, lg]:
            occ[c_int[c, lg], c_phase[c]] += 1
    for r in range(occ.shape[0]):
        if occ[r, 0] > 0 and occ[r, 1] > 0:
            ev_veh[nev] = r
            ev_kind[nev] = EV_BOX
            ev_leg[nev] = -1
            ev_time[nev] = t + dt
            nev += 1
    return nev
