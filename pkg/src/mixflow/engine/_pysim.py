"""Pure-Python run loops — the fallback lane of the simulation core.

Each function here has a compiled twin in ``_cysim.pyx`` with the same
signature and, for the jump drivers, the same draw-for-draw consumption
of the underlying bit stream.  Tests assert bit-identical trajectories
across lanes; keep both sides in lockstep when changing anything.
"""

from __future__ import annotations

import math

import numpy as np

from ..distributions import (
    draw_beta_symmetric,
    draw_binomial,
    draw_bulk_jump,
    draw_exponential,
    draw_gamma,
    draw_input_jump,
    draw_poisson,
)
from ._model_arrays import (
    CK_HARM_EXIT,
    CK_HARM_HID,
    CK_HARM_IN_SMP,
    CK_HARM_IN_STD,
    CK_HARM_MOVE,
    CK_HARM_RES_H,
    CK_KMP_EDGE_C,
    CK_KMP_EDGE_D,
    CK_KMP_EDGE_H,
    CK_KMP_RES_H,
    CK_KMP_RES_P,
    CK_KMP_RES_PD,
    FAM_DH,
    FAM_IRW,
    FAM_SIP,
    SK_BIRTH,
    SK_DEATH,
    SK_MOVE,
)

NAME = "python"

STATUS_OK = 0
STATUS_RECORD_OVERFLOW = 1
STATUS_RATE_OVERFLOW = 2
STATUS_MAX_EVENTS = 3

_REFRESH_EVERY = 4096  # events between from-scratch total-rate rebuilds


def _apply_constant(gen, kind, a, b, par, state, two_s, eps):
    if kind == CK_KMP_EDGE_D:
        n = int(state[a] + state[b] + 0.5)
        if n > 0:
            bta = draw_beta_symmetric(gen, two_s)
            k = draw_binomial(gen, n, bta)
            state[a] = float(k)
            state[b] = float(n - k)
    elif kind == CK_KMP_EDGE_C:
        tot = state[a] + state[b]
        bta = draw_beta_symmetric(gen, two_s)
        xn = bta * tot
        state[a] = xn
        state[b] = tot - xn
    elif kind == CK_KMP_EDGE_H:
        bta = draw_beta_symmetric(gen, two_s)
        v = bta * state[a] + (1.0 - bta) * state[b]
        state[a] = v
        state[b] = v
    elif kind == CK_KMP_RES_P:
        y = draw_gamma(gen, two_s) * par if par > 0.0 else 0.0
        bta = draw_beta_symmetric(gen, two_s)
        state[a] = (state[a] + y) * bta
    elif kind == CK_KMP_RES_PD:
        if par > 0.0:
            lam = draw_gamma(gen, two_s) * par
            y = draw_poisson(gen, lam)
        else:
            y = 0
        n = int(state[a] + 0.5) + y
        if n > 0:
            bta = draw_beta_symmetric(gen, two_s)
            state[a] = float(draw_binomial(gen, n, bta))
    elif kind == CK_KMP_RES_H:
        bta = draw_beta_symmetric(gen, two_s)
        state[a] = (1.0 - bta) * state[a] + bta * par
    elif kind == CK_HARM_MOVE:
        u = draw_bulk_jump(gen, two_s, eps)
        delta = u * state[a]
        state[a] -= delta
        state[b] += delta
    elif kind == CK_HARM_HID:
        u = draw_bulk_jump(gen, two_s, eps)
        state[a] = (1.0 - u) * state[a] + u * state[b]
    elif kind == CK_HARM_EXIT:
        u = draw_bulk_jump(gen, two_s, eps)
        state[a] *= 1.0 - u
    elif kind == CK_HARM_IN_STD:
        u = draw_input_jump(gen, eps)
        state[a] += u * par
    elif kind == CK_HARM_IN_SMP:
        u = draw_bulk_jump(gen, two_s, eps)
        y = draw_gamma(gen, two_s) * par if par > 0.0 else 0.0
        state[a] += u * y
    else:  # CK_HARM_RES_H
        u = draw_bulk_jump(gen, two_s, eps)
        state[a] = (1.0 - u) * state[a] + u * par


def run_constant(bitgen, init, kinds, site_a, site_b, param, rates, two_s, eps,
                 t_end, grid, max_records, max_events):
    """Drive a constant-total-rate jump model to t_end.

    grid empty  -> record the initial state, every event, and the final
                   state (capacity max_records).
    grid given  -> record the state at each (sorted, <= t_end) grid time.

    Returns (times, states, terminal, n_events, status).
    """
    gen = np.random.Generator(bitgen)
    state = np.array(init, dtype=np.float64)
    n_sites = len(state)
    cum = np.cumsum(rates)
    total = float(cum[-1]) if len(cum) else 0.0
    n_grid = len(grid)
    events_mode = n_grid == 0
    if events_mode:
        times = np.empty(max_records)
        states = np.empty((max_records, n_sites))
        times[0] = 0.0
        states[0] = state
        row = 1
    else:
        times = np.asarray(grid, dtype=np.float64).copy()
        states = np.empty((n_grid, n_sites))
        row = 0

    t = 0.0
    gi = 0
    n_events = 0
    status = STATUS_OK
    while total > 0.0:
        t_next = t + draw_exponential(gen) / total
        if not events_mode:
            while gi < n_grid and grid[gi] < t_next:
                states[gi] = state
                gi += 1
        if t_next > t_end:
            break
        if n_events >= max_events:
            status = STATUS_MAX_EVENTS
            break
        t = t_next
        r = gen.random() * total
        ci = int(np.searchsorted(cum, r, side="right"))
        if ci >= len(cum):
            ci = len(cum) - 1
        _apply_constant(gen, kinds[ci], site_a[ci], site_b[ci], param[ci],
                        state, two_s, eps)
        n_events += 1
        if events_mode:
            if row >= max_records:
                status = STATUS_RECORD_OVERFLOW
                break
            times[row] = t
            states[row] = state
            row += 1

    if events_mode:
        if status == STATUS_OK and row < max_records and (row == 0 or times[row - 1] < t_end):
            times[row] = t_end
            states[row] = state
            row += 1
        return times[:row].copy(), states[:row].copy(), state, n_events, status
    while gi < n_grid:
        states[gi] = state
        gi += 1
    return times, states, state, n_events, status


def run_constant_many(bitgen, init, n_traj, kinds, site_a, site_b, param, rates,
                      two_s, eps, t_end, max_events):
    """n_traj independent runs to t_end off one stream; returns terminal states."""
    gen = np.random.Generator(bitgen)
    init = np.asarray(init, dtype=np.float64)
    out = np.empty((n_traj, len(init)))
    cum = np.cumsum(rates)
    total = float(cum[-1]) if len(cum) else 0.0
    n_events = 0
    status = STATUS_OK
    for k in range(n_traj):
        state = init.copy()
        t = 0.0
        while total > 0.0:
            t += draw_exponential(gen) / total
            if t > t_end:
                break
            if n_events >= max_events:
                status = STATUS_MAX_EVENTS
                break
            r = gen.random() * total
            ci = int(np.searchsorted(cum, r, side="right"))
            if ci >= len(cum):
                ci = len(cum) - 1
            _apply_constant(gen, kinds[ci], site_a[ci], site_b[ci], param[ci],
                            state, two_s, eps)
            n_events += 1
        if status != STATUS_OK:
            break
        out[k] = state
    return out, n_events, status


def _statedep_rate(fam, kind, a, b, coef, state, two_s, dh_tot):
    if kind == SK_MOVE:
        if fam == FAM_SIP:
            return coef * state[a] * (two_s + state[b])
        if fam == FAM_IRW:
            return coef * state[a]
        return coef * dh_tot[state[a]]
    if kind == SK_BIRTH:
        if fam == FAM_SIP:
            return coef * (two_s + state[a])
        return coef
    return coef * state[a]


def run_statedep(bitgen, init, family_code, kinds, site_a, site_b, coef,
                 inc_ptr, inc_idx, two_s, dh_cum, dh_tot, t_end, grid,
                 max_records, max_events, rate_cap):
    """Drive a state-dependent jump model (inclusion / walkers / discrete
    harmonic) with locally updated class rates.

    Same recording contract as :func:`run_constant`; counts are carried as
    int64 internally and recorded as float64.
    """
    gen = np.random.Generator(bitgen)
    state = np.asarray(init, dtype=np.int64).copy()
    n_sites = len(state)
    n_class = len(kinds)
    rates = np.empty(n_class)
    for ci in range(n_class):
        rates[ci] = _statedep_rate(family_code, kinds[ci], site_a[ci], site_b[ci],
                                   coef[ci], state, two_s, dh_tot)
    total = float(rates.sum())

    n_grid = len(grid)
    events_mode = n_grid == 0
    if events_mode:
        times = np.empty(max_records)
        states = np.empty((max_records, n_sites))
        times[0] = 0.0
        states[0] = state
        row = 1
    else:
        times = np.asarray(grid, dtype=np.float64).copy()
        states = np.empty((n_grid, n_sites))
        row = 0

    t = 0.0
    gi = 0
    n_events = 0
    status = STATUS_OK
    if total > rate_cap:
        status = STATUS_RATE_OVERFLOW
    while status == STATUS_OK and total > 1e-300:
        t_next = t + draw_exponential(gen) / total
        if not events_mode:
            while gi < n_grid and grid[gi] < t_next:
                states[gi] = state
                gi += 1
        if t_next > t_end:
            break
        if n_events >= max_events:
            status = STATUS_MAX_EVENTS
            break
        t = t_next
        r = gen.random() * total
        ci = n_class - 1
        acc = 0.0
        for i in range(n_class):
            acc += rates[i]
            if r < acc:
                ci = i
                break
        kind = kinds[ci]
        a = site_a[ci]
        b = site_b[ci]
        if kind == SK_MOVE:
            if family_code == FAM_DH:
                n = int(state[a])
                off = n * (n - 1) // 2
                r2 = gen.random() * dh_tot[n]
                k = n
                for i in range(n):
                    if r2 < dh_cum[off + i]:
                        k = i + 1
                        break
                state[a] -= k
                state[b] += k
            else:
                state[a] -= 1
                state[b] += 1
        elif kind == SK_BIRTH:
            state[a] += 1
        else:
            state[a] -= 1
        n_events += 1

        for site in (a, b) if b >= 0 else (a,):
            for p in range(inc_ptr[site], inc_ptr[site + 1]):
                cj = inc_idx[p]
                total -= rates[cj]
                rates[cj] = _statedep_rate(family_code, kinds[cj], site_a[cj],
                                           site_b[cj], coef[cj], state, two_s, dh_tot)
                total += rates[cj]
        if n_events % _REFRESH_EVERY == 0:
            total = float(rates.sum())
        if total > rate_cap:
            status = STATUS_RATE_OVERFLOW
            break

        if events_mode:
            if row >= max_records:
                status = STATUS_RECORD_OVERFLOW
                break
            times[row] = t
            states[row] = state
            row += 1

    if events_mode:
        if status == STATUS_OK and row < max_records and (row == 0 or times[row - 1] < t_end):
            times[row] = t_end
            states[row] = state
            row += 1
        return (times[:row].copy(), states[:row].copy(),
                state.astype(np.float64), n_events, status)
    while gi < n_grid:
        states[gi] = state
        gi += 1
    return times, states, state.astype(np.float64), n_events, status


# --- Euler-Maruyama for the energy-exchange diffusion -----------------------------
#
# The diffusion stepper is vectorised over replicas with numpy's own normal
# sampler, so unlike the jump drivers it is *not* draw-compatible with the
# compiled lane; cross-lane agreement is statistical only.

def _em_sweep(gen, z, edge_i, edge_j, edge_w, res_sites, res_c, res_alpha,
              res_gamma, two_s, dt):
    n_rep = z.shape[0]
    incr = np.zeros_like(z)
    for e in range(len(edge_w)):
        i = edge_i[e]
        j = edge_j[e]
        w = edge_w[e]
        diff = z[:, j] - z[:, i]
        drift = (two_s * w * dt) * diff
        noise = gen.standard_normal(n_rep) * np.sqrt((2.0 * w * dt) * z[:, i] * z[:, j])
        incr[:, i] += drift + noise
        incr[:, j] -= drift + noise
    for i in res_sites:
        zi = z[:, i]
        incr[:, i] += (res_c[i] * dt) * (two_s * res_alpha[i] - (res_gamma[i] - res_alpha[i]) * zi)
        if res_alpha[i] > 0.0:
            incr[:, i] += gen.standard_normal(n_rep) * np.sqrt(
                (2.0 * res_c[i] * res_alpha[i] * dt) * zi
            )
    z += incr
    neg = z < 0.0
    n_clamp = int(np.count_nonzero(neg))
    if n_clamp:
        z[neg] = 0.0
    return n_clamp


def bep_em_path(bitgen, init, edge_i, edge_j, edge_w, res_c, res_alpha, res_gamma,
                two_s, dt, n_steps, rec_every):
    """Single-path Euler-Maruyama; records every rec_every-th step.

    Returns (times, states, terminal, n_clamped, status).
    """
    gen = np.random.Generator(bitgen)
    z = np.array(init, dtype=np.float64).reshape(1, -1)
    res_sites = np.where(res_c > 0.0)[0]
    n_rec = n_steps // rec_every + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, z.shape[1]))
    times[0] = 0.0
    states[0] = z[0]
    row = 1
    clamps = 0
    for step in range(1, n_steps + 1):
        clamps += _em_sweep(gen, z, edge_i, edge_j, edge_w, res_sites, res_c,
                            res_alpha, res_gamma, two_s, dt)
        if step % rec_every == 0:
            times[row] = step * dt
            states[row] = z[0]
            row += 1
    return times[:row], states[:row], z[0].copy(), clamps, STATUS_OK


def bep_em_moments(bitgen, init_batch, edge_i, edge_j, edge_w, res_c, res_alpha,
                   res_gamma, two_s, dt, burn_steps, n_steps, thin):
    """Replica-batched Euler-Maruyama accumulating the first three moments.

    Returns (sums[3, V], n_samples, n_clamped, terminal_batch).
    """
    gen = np.random.Generator(bitgen)
    z = np.array(init_batch, dtype=np.float64)
    res_sites = np.where(res_c > 0.0)[0]
    sums = np.zeros((3, z.shape[1]))
    n_samples = 0
    clamps = 0
    for _ in range(burn_steps):
        clamps += _em_sweep(gen, z, edge_i, edge_j, edge_w, res_sites, res_c,
                            res_alpha, res_gamma, two_s, dt)
    for step in range(1, n_steps + 1):
        clamps += _em_sweep(gen, z, edge_i, edge_j, edge_w, res_sites, res_c,
                            res_alpha, res_gamma, two_s, dt)
        if step % thin == 0:
            sums[0] += z.sum(axis=0)
            sums[1] += (z * z).sum(axis=0)
            sums[2] += (z * z * z).sum(axis=0)
            n_samples += z.shape[0]
    return sums, n_samples, clamps, z
