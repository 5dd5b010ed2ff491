"""Fixed-step inner loop: combiner -> storage -> load -> differentiator.

Everything here works on flat float64/int64 arrays so the same source runs
under numba or as plain Python (see ``_jit``).  The engine calls
:func:`run_segment` for stretches of steps during which source and load
currents are constant; the kernel returns early on a comparator edge, an
undervoltage, or when an output buffer fills up.
"""
import math

import numpy as np

from ._jit import jit

# temporary-buffer phases
IDLE = 0
CHARGING = 1
WAITING = 2
DISCHARGING = 3

# combiner parameter slots
P_C, P_VL, P_VH, P_VOVER, P_ILIM, P_ETA, P_DT = range(7)
N_COMB_PARAMS = 7

# storage parameter slots
S_VMAX, S_VMIN = range(2)

# differentiator / comparator slots
M_VDIFF, M_VPREV, M_COMP, M_GAIN, M_ALPHA, M_VREF, M_HYST, M_RAIL = range(8)
N_LMM = 8

# energy ledger slots (J, except the curtailed-charge slot in C)
(L_SRC, L_REG_IN, L_REG_OUT, L_REG_LOSS, L_DISCARD, L_OVERFLOW, L_LOAD, L_LEAK,
 L_CURTAIL_Q, L_EQUALIZE, L_E0, L_MAX_RESID, L_DELIVERED) = range(13)
N_LEDGER = 13

# pulse record columns
PV_VSTART, PV_EIN, PV_EOUT, PV_ISRC = range(4)
N_PULSE_COLS = 4

# stop reasons
STOP_DONE = 0
STOP_EDGE = 1
STOP_UNDERVOLT = 2
STOP_NO_SUPPLY = 3
STOP_PULSE_FULL = 4
STOP_TS_FULL = 5


@jit
def charge_buffers(buf_v, buf_phase, buf_order, src_i, comb, ledger, step):
    """Integrate each source into whichever buffer of its pair is connected."""
    c = comb[P_C]
    dt = comb[P_DT]
    v_over = comb[P_VOVER]
    v_h = comb[P_VH]
    total = 0.0
    for s in range(src_i.shape[0]):
        cur = src_i[s]
        total += cur
        if cur <= 0.0:
            continue
        for j in range(2 * s, 2 * s + 2):
            ph = buf_phase[j]
            if ph != CHARGING and ph != WAITING:
                continue
            v = buf_v[j]
            vn = v + cur * dt / c
            if vn > v_over:
                # source sits at compliance; the excess charge is never delivered
                ledger[L_CURTAIL_Q] += (vn - max(v, v_over)) * c
                vn = max(v, v_over)
            ledger[L_SRC] += 0.5 * c * (vn * vn - v * v)
            buf_v[j] = vn
            if ph == CHARGING and vn >= v_h:
                buf_phase[j] = WAITING
                buf_order[j] = step
    return total


@jit
def deliver_to_storage(energy, cap_c, cap_v, comb_mask, stor, ledger):
    """Push regulator output onto the combiner-side node (parallel caps)."""
    c_tot = 0.0
    first = -1
    for i in range(cap_c.shape[0]):
        if comb_mask[i]:
            c_tot += cap_c[i]
            if first < 0:
                first = i
    if first < 0:
        ledger[L_DISCARD] += energy
        return
    v = cap_v[first]
    e_node = 0.5 * c_tot * v * v + energy
    vmax = stor[S_VMAX]
    e_max = 0.5 * c_tot * vmax * vmax
    if e_node > e_max:
        ledger[L_OVERFLOW] += e_node - e_max
        ledger[L_DELIVERED] += energy - (e_node - e_max)
        vn = vmax
    else:
        ledger[L_DELIVERED] += energy
        vn = math.sqrt(2.0 * e_node / c_tot)
    for i in range(cap_c.shape[0]):
        if comb_mask[i]:
            cap_v[i] = vn


@jit
def regulator_step(buf_v, buf_phase, buf_vstart, buf_ein, buf_eout, reg, comb, ledger,
                   cap_c, cap_v, comb_mask, stor):
    """Drain the buffer on the regulator at I_limit; return it if it hit V_L."""
    b = reg[0]
    if b < 0:
        return -1
    c = comb[P_C]
    v_l = comb[P_VL]
    v = buf_v[b]
    vn = v - comb[P_ILIM] * comb[P_DT] / c
    finished = False
    if vn <= v_l:
        vn = v_l
        finished = True
    e_in = 0.5 * c * (v * v - vn * vn)
    e_out = comb[P_ETA] * e_in
    buf_v[b] = vn
    buf_ein[b] += e_in
    buf_eout[b] += e_out
    ledger[L_REG_IN] += e_in
    ledger[L_REG_OUT] += e_out
    ledger[L_REG_LOSS] += e_in - e_out
    deliver_to_storage(e_out, cap_c, cap_v, comb_mask, stor, ledger)
    if finished:
        buf_phase[b] = IDLE
        reg[0] = -1
        return b
    return -1


@jit
def select_next(buf_v, buf_phase, buf_order, buf_vstart, buf_ein, buf_eout, reg):
    """Hand the free regulator to the buffer that filled first (FIFO)."""
    if reg[0] >= 0:
        return -1
    best = -1
    for j in range(buf_v.shape[0]):
        if buf_phase[j] == WAITING:
            if best < 0 or buf_order[j] < buf_order[best]:
                best = j
    if best < 0:
        return -1
    buf_phase[best] = DISCHARGING
    buf_vstart[best] = buf_v[best]
    buf_ein[best] = 0.0
    buf_eout[best] = 0.0
    reg[0] = best
    pair = best ^ 1
    if buf_phase[pair] == IDLE:
        buf_phase[pair] = CHARGING
    return best


@jit
def discharge_supply(load_i, dt, cap_c, cap_v, sup_mask, stor, ledger):
    """Draw the load from the supply-side parallel caps.

    Returns 0 normally, 1 on undervoltage, 2 if nothing is connected.
    """
    if load_i <= 0.0:
        return 0
    c_tot = 0.0
    first = -1
    for i in range(cap_c.shape[0]):
        if sup_mask[i]:
            c_tot += cap_c[i]
            if first < 0:
                first = i
    if first < 0:
        return 2
    v = cap_v[first]
    vn = v - load_i * dt / c_tot
    if vn < 0.0:
        vn = 0.0
    ledger[L_LOAD] += 0.5 * c_tot * (v * v - vn * vn)
    for i in range(cap_c.shape[0]):
        if sup_mask[i]:
            cap_v[i] = vn
    if vn < stor[S_VMIN]:
        return 1
    return 0


@jit
def _leak_group(dt, cap_c, cap_v, cap_leak, member, ledger):
    c_tot = 0.0
    i_tot = 0.0
    first = -1
    for i in range(cap_c.shape[0]):
        if member[i]:
            c_tot += cap_c[i]
            i_tot += cap_leak[i]
            if first < 0:
                first = i
    if first < 0 or i_tot <= 0.0:
        return
    v = cap_v[first]
    vn = v - i_tot * dt / c_tot
    if vn < 0.0:
        vn = 0.0
    ledger[L_LEAK] += 0.5 * c_tot * (v * v - vn * vn)
    for i in range(cap_c.shape[0]):
        if member[i]:
            cap_v[i] = vn


@jit
def apply_leakage(dt, cap_c, cap_v, cap_leak, comb_mask, sup_mask, ledger):
    """Self-discharge; capacitors sharing a node leak as one parallel bank."""
    n = cap_c.shape[0]
    any_leak = False
    for i in range(n):
        if cap_leak[i] > 0.0:
            any_leak = True
    if not any_leak:
        return
    member = np.zeros(n, np.int64)
    for i in range(n):
        member[i] = sup_mask[i]
    _leak_group(dt, cap_c, cap_v, cap_leak, member, ledger)
    for i in range(n):
        member[i] = 1 if comb_mask[i] and not sup_mask[i] else 0
    _leak_group(dt, cap_c, cap_v, cap_leak, member, ledger)
    for i in range(n):
        if not comb_mask[i] and not sup_mask[i] and cap_leak[i] > 0.0:
            for j in range(n):
                member[j] = 1 if j == i else 0
            _leak_group(dt, cap_c, cap_v, cap_leak, member, ledger)


@jit
def supply_voltage(cap_v, sup_mask):
    for i in range(cap_v.shape[0]):
        if sup_mask[i]:
            return cap_v[i]
    return 0.0


@jit
def lmm_update(lmm, v_supply, dt):
    """Differentiator with first-order settling, then the comparator.

    The ideal output is -gain times the rate of voltage *drop*, so a
    discharging capacitor yields a negative output.  Returns +1 on a rising
    interrupt edge, -1 on a falling one, 0 otherwise.
    """
    drop_rate = (lmm[M_VPREV] - v_supply) / dt
    target = -lmm[M_GAIN] * drop_rate
    v = lmm[M_VDIFF] + (target - lmm[M_VDIFF]) * lmm[M_ALPHA]
    rail = lmm[M_RAIL]
    if v > rail:
        v = rail
    elif v < -rail:
        v = -rail
    lmm[M_VDIFF] = v
    lmm[M_VPREV] = v_supply
    mag = abs(v)
    if lmm[M_COMP] == 0.0:
        if mag >= lmm[M_VREF]:
            lmm[M_COMP] = 1.0
            return 1
    elif mag < lmm[M_VREF] - lmm[M_HYST]:
        lmm[M_COMP] = 0.0
        return -1
    return 0


@jit
def stored_energy(buf_v, c_buf, cap_c, cap_v):
    e = 0.0
    for j in range(buf_v.shape[0]):
        e += 0.5 * c_buf * buf_v[j] * buf_v[j]
    for i in range(cap_c.shape[0]):
        e += 0.5 * cap_c[i] * cap_v[i] * cap_v[i]
    return e


@jit
def ledger_residual(ledger, e_now):
    expected = (ledger[L_E0] + ledger[L_SRC] - ledger[L_REG_LOSS] - ledger[L_DISCARD]
                - ledger[L_OVERFLOW] - ledger[L_LOAD] - ledger[L_LEAK] - ledger[L_EQUALIZE])
    scale = ledger[L_E0] + ledger[L_SRC]
    if scale <= 0.0:
        scale = 1.0
    return abs(e_now - expected) / scale


@jit
def run_segment(step0, n_steps, report_every, load_i, src_i,
                buf_v, buf_phase, buf_order, buf_vstart, buf_ein, buf_eout, reg, comb,
                cap_c, cap_v, cap_leak, comb_mask, sup_mask, stor,
                lmm, ledger,
                p_step, p_buf, p_vals,
                ts_step, ts_vals):
    """Advance up to ``n_steps`` steps starting at global step ``step0``.

    Returns ``(reason, steps_done, n_pulses, n_samples, edge, undervolt)``.
    Pulses and timeseries rows are written into the caller's buffers,
    stamped with the step index at the *end* of the producing step.
    """
    dt = comb[P_DT]
    n_caps = cap_c.shape[0]
    n_buf = buf_v.shape[0]
    n_pulses = 0
    n_ts = 0
    pulse_cap = p_step.shape[0]
    ts_cap = ts_step.shape[0]
    for k in range(n_steps):
        step = step0 + k
        if load_i > 0.0:
            has_supply = False
            for i in range(n_caps):
                if sup_mask[i]:
                    has_supply = True
            if not has_supply:
                return STOP_NO_SUPPLY, k, n_pulses, n_ts, 0, False

        i_src = charge_buffers(buf_v, buf_phase, buf_order, src_i, comb, ledger, step)
        done = regulator_step(buf_v, buf_phase, buf_vstart, buf_ein, buf_eout, reg, comb,
                              ledger, cap_c, cap_v, comb_mask, stor)
        if done >= 0:
            p_step[n_pulses] = step + 1
            p_buf[n_pulses] = done
            p_vals[n_pulses, PV_VSTART] = buf_vstart[done]
            p_vals[n_pulses, PV_EIN] = buf_ein[done]
            p_vals[n_pulses, PV_EOUT] = buf_eout[done]
            p_vals[n_pulses, PV_ISRC] = i_src
            n_pulses += 1
        select_next(buf_v, buf_phase, buf_order, buf_vstart, buf_ein, buf_eout, reg)

        status = discharge_supply(load_i, dt, cap_c, cap_v, sup_mask, stor, ledger)
        apply_leakage(dt, cap_c, cap_v, cap_leak, comb_mask, sup_mask, ledger)
        edge = lmm_update(lmm, supply_voltage(cap_v, sup_mask), dt)

        r = ledger_residual(ledger, stored_energy(buf_v, comb[P_C], cap_c, cap_v))
        if r > ledger[L_MAX_RESID]:
            ledger[L_MAX_RESID] = r

        if (step + 1) % report_every == 0:
            ts_step[n_ts] = step + 1
            for i in range(n_caps):
                ts_vals[n_ts, i] = cap_v[i]
            ts_vals[n_ts, n_caps] = lmm[M_VDIFF]
            ts_vals[n_ts, n_caps + 1] = lmm[M_COMP]
            ts_vals[n_ts, n_caps + 2] = load_i
            ts_vals[n_ts, n_caps + 3] = i_src
            for j in range(n_buf):
                ts_vals[n_ts, n_caps + 4 + j] = buf_v[j]
            n_ts += 1

        undervolt = status == 1
        if edge != 0 or undervolt:
            reason = STOP_EDGE if edge != 0 else STOP_UNDERVOLT
            return reason, k + 1, n_pulses, n_ts, edge, undervolt
        if n_pulses >= pulse_cap:
            return STOP_PULSE_FULL, k + 1, n_pulses, n_ts, 0, False
        if n_ts >= ts_cap:
            return STOP_TS_FULL, k + 1, n_pulses, n_ts, 0, False
    return STOP_DONE, n_steps, n_pulses, n_ts, 0, False


def alloc_outputs(n_buf, n_caps, pulse_cap=4096, ts_cap=4096):
    n_sig = n_caps + 4 + n_buf
    return (np.zeros(pulse_cap, np.int64), np.zeros(pulse_cap, np.int64),
            np.zeros((pulse_cap, N_PULSE_COLS)),
            np.zeros(ts_cap, np.int64), np.zeros((ts_cap, n_sig)))
