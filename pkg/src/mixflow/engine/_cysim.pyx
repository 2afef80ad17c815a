# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled run loops — the fast lane of the simulation core.

Signature-for-signature twin of ``_pysim.py``.  The jump drivers consume
the PCG64 bit stream draw-for-draw like the pure lane (same sampler
algorithms on top of ``next_double``), so trajectories agree bit-for-bit
across lanes.  The diffusion stepper does not promise draw parity.
"""

import numpy as np

cimport numpy as cnp
from cpython.pycapsule cimport PyCapsule_GetPointer, PyCapsule_IsValid
from libc.math cimport exp, log, pow, sqrt
from numpy.random cimport bitgen_t

cnp.import_array()

NAME = "compiled"

STATUS_OK = 0
STATUS_RECORD_OVERFLOW = 1
STATUS_RATE_OVERFLOW = 2
STATUS_MAX_EVENTS = 3

cdef int _ST_OK = 0
cdef int _ST_RECORD_OVERFLOW = 1
cdef int _ST_RATE_OVERFLOW = 2
cdef int _ST_MAX_EVENTS = 3

cdef long _REFRESH_EVERY = 4096

# event-class codes; keep in sync with _model_arrays.py
cdef signed char CK_KMP_EDGE_D = 0
cdef signed char CK_KMP_EDGE_C = 1
cdef signed char CK_KMP_EDGE_H = 2
cdef signed char CK_KMP_RES_P = 3
cdef signed char CK_KMP_RES_PD = 4
cdef signed char CK_KMP_RES_H = 5
cdef signed char CK_HARM_MOVE = 6
cdef signed char CK_HARM_HID = 7
cdef signed char CK_HARM_EXIT = 8
cdef signed char CK_HARM_IN_STD = 9
cdef signed char CK_HARM_IN_SMP = 10
cdef signed char CK_HARM_RES_H = 11

cdef signed char SK_MOVE = 0
cdef signed char SK_BIRTH = 1
cdef signed char SK_DEATH = 2

cdef int FAM_SIP = 0
cdef int FAM_IRW = 1
cdef int FAM_DH = 2

cdef const char* _CAPSULE_NAME = "BitGenerator"


cdef bitgen_t* _bitgen_ptr(object bitgen) except NULL:
    capsule = bitgen.capsule
    if not PyCapsule_IsValid(capsule, _CAPSULE_NAME):
        raise ValueError("expected a numpy BitGenerator")
    return <bitgen_t*> PyCapsule_GetPointer(capsule, _CAPSULE_NAME)


# --- scalar samplers (mirrors of mixflow.distributions.draw_*) -----------------

cdef inline double _unif(bitgen_t *bg) noexcept nogil:
    return bg.next_double(bg.state)


cdef inline double _expo(bitgen_t *bg) noexcept nogil:
    return -log(1.0 - bg.next_double(bg.state))


cdef double _normal(bitgen_t *bg) noexcept nogil:
    cdef double x, y, s
    while True:
        x = 2.0 * bg.next_double(bg.state) - 1.0
        y = 2.0 * bg.next_double(bg.state) - 1.0
        s = x * x + y * y
        if 0.0 < s < 1.0:
            return x * sqrt(-2.0 * log(s) / s)


cdef double _gamma_core(bitgen_t *bg, double shape) noexcept nogil:
    cdef double d = shape - 1.0 / 3.0
    cdef double c = 1.0 / sqrt(9.0 * d)
    cdef double x, t, v, u, x2, logu
    while True:
        x = _normal(bg)
        t = 1.0 + c * x
        if t <= 0.0:
            continue
        v = t * t * t
        u = bg.next_double(bg.state)
        x2 = x * x
        if u < 1.0 - 0.0331 * x2 * x2:
            return d * v
        logu = log(u)  # u == 0 gives -inf, accepted below like the pure lane
        if logu < 0.5 * x2 + d * (1.0 - v + log(v)):
            return d * v


cdef inline double _gamma(bitgen_t *bg, double shape) noexcept nogil:
    cdef double g
    if shape < 1.0:
        g = _gamma_core(bg, shape + 1.0)
        return g * pow(bg.next_double(bg.state), 1.0 / shape)
    return _gamma_core(bg, shape)


cdef inline double _beta_sym(bitgen_t *bg, double two_s) noexcept nogil:
    cdef double g1 = _gamma(bg, two_s)
    cdef double g2 = _gamma(bg, two_s)
    return g1 / (g1 + g2)


cdef long _binomial(bitgen_t *bg, long n, double p) noexcept nogil:
    cdef double q, u, odds, pmf, cdf
    cdef long k = 0, count, i
    if n == 0 or p <= 0.0:
        return 0
    if p >= 1.0:
        return n
    q = pow(1.0 - p, <double> n)
    u = bg.next_double(bg.state)
    if q > 0.0:
        odds = p / (1.0 - p)
        pmf = q
        cdf = q
        while u > cdf and k < n:
            pmf *= (<double> (n - k)) / (<double> (k + 1)) * odds
            k += 1
            cdf += pmf
        return k
    count = 1 if u < p else 0
    for i in range(n - 1):
        if bg.next_double(bg.state) < p:
            count += 1
    return count


cdef long _poisson(bitgen_t *bg, double lam) noexcept nogil:
    cdef long k = 0
    cdef double acc
    if lam <= 0.0:
        return 0
    acc = _expo(bg)
    while acc <= lam:
        k += 1
        acc += _expo(bg)
    return k


cdef double _bulk_jump(bitgen_t *bg, double two_s, double epsilon) noexcept nogil:
    cdef double lo, c1, m1, m2, tot, w, u
    cdef bint left
    if two_s == 1.0:
        return pow(epsilon, bg.next_double(bg.state))
    left = epsilon < 0.5
    lo = 0.5 if left else epsilon
    if left:
        c1 = pow(1.0 - epsilon, two_s - 1.0) if two_s > 1.0 else pow(2.0, 1.0 - two_s)
        m1 = c1 * log(0.5 / epsilon)
    else:
        c1 = 0.0
        m1 = 0.0
    m2 = 2.0 * pow(1.0 - lo, two_s) / two_s
    tot = m1 + m2
    while True:
        w = bg.next_double(bg.state) * tot
        if w < m1:
            u = epsilon * exp(bg.next_double(bg.state) * log(0.5 / epsilon))
            if bg.next_double(bg.state) * c1 <= pow(1.0 - u, two_s - 1.0):
                return u
        else:
            u = 1.0 - (1.0 - lo) * pow(bg.next_double(bg.state), 1.0 / two_s)
            if bg.next_double(bg.state) * 2.0 * u <= 1.0:
                return u


cdef double _input_jump(bitgen_t *bg, double epsilon) noexcept nogil:
    cdef double m1, m2, tot, w, u
    if epsilon >= 1.0:
        while True:
            u = epsilon - log(1.0 - bg.next_double(bg.state))
            if bg.next_double(bg.state) * u <= epsilon:
                return u
    m1 = log(1.0 / epsilon)
    m2 = exp(-1.0)
    tot = m1 + m2
    while True:
        w = bg.next_double(bg.state) * tot
        if w < m1:
            u = pow(epsilon, bg.next_double(bg.state))
            if bg.next_double(bg.state) <= exp(-u):
                return u
        else:
            u = 1.0 - log(1.0 - bg.next_double(bg.state))
            if bg.next_double(bg.state) * u <= 1.0:
                return u


# --- constant-rate driver -------------------------------------------------------

cdef void _apply_constant(bitgen_t *bg, signed char kind, long a, long b,
                          double par, double[::1] state, double two_s,
                          double eps) noexcept nogil:
    cdef long n, k
    cdef double bta, tot, xn, v, y, u, delta, lam
    if kind == CK_KMP_EDGE_D:
        n = <long> (state[a] + state[b] + 0.5)
        if n > 0:
            bta = _beta_sym(bg, two_s)
            k = _binomial(bg, n, bta)
            state[a] = <double> k
            state[b] = <double> (n - k)
    elif kind == CK_KMP_EDGE_C:
        tot = state[a] + state[b]
        bta = _beta_sym(bg, two_s)
        xn = bta * tot
        state[a] = xn
        state[b] = tot - xn
    elif kind == CK_KMP_EDGE_H:
        bta = _beta_sym(bg, two_s)
        v = bta * state[a] + (1.0 - bta) * state[b]
        state[a] = v
        state[b] = v
    elif kind == CK_KMP_RES_P:
        y = _gamma(bg, two_s) * par if par > 0.0 else 0.0
        bta = _beta_sym(bg, two_s)
        state[a] = (state[a] + y) * bta
    elif kind == CK_KMP_RES_PD:
        if par > 0.0:
            lam = _gamma(bg, two_s) * par
            n = _poisson(bg, lam)
        else:
            n = 0
        n = (<long> (state[a] + 0.5)) + n
        if n > 0:
            bta = _beta_sym(bg, two_s)
            state[a] = <double> _binomial(bg, n, bta)
    elif kind == CK_KMP_RES_H:
        bta = _beta_sym(bg, two_s)
        state[a] = (1.0 - bta) * state[a] + bta * par
    elif kind == CK_HARM_MOVE:
        u = _bulk_jump(bg, two_s, eps)
        delta = u * state[a]
        state[a] -= delta
        state[b] += delta
    elif kind == CK_HARM_HID:
        u = _bulk_jump(bg, two_s, eps)
        state[a] = (1.0 - u) * state[a] + u * state[b]
    elif kind == CK_HARM_EXIT:
        u = _bulk_jump(bg, two_s, eps)
        state[a] *= 1.0 - u
    elif kind == CK_HARM_IN_STD:
        u = _input_jump(bg, eps)
        state[a] += u * par
    elif kind == CK_HARM_IN_SMP:
        u = _bulk_jump(bg, two_s, eps)
        y = _gamma(bg, two_s) * par if par > 0.0 else 0.0
        state[a] += u * y
    else:  # CK_HARM_RES_H
        u = _bulk_jump(bg, two_s, eps)
        state[a] = (1.0 - u) * state[a] + u * par


cdef inline long _bisect_right(double[::1] cum, double r, long n) noexcept nogil:
    cdef long lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if cum[mid] <= r:
            lo = mid + 1
        else:
            hi = mid
    if lo >= n:
        lo = n - 1
    return lo


def run_constant(object bitgen, object init, const signed char[::1] kinds,
                 const long[::1] site_a, const long[::1] site_b,
                 const double[::1] param, const double[::1] rates, double two_s,
                 double eps, double t_end, const double[::1] grid,
                 long max_records, long max_events):
    """See the pure-lane docstring; identical contract and stream use."""
    cdef bitgen_t *bg = _bitgen_ptr(bitgen)
    state_arr = np.array(init, dtype=np.float64)
    cdef double[::1] state = state_arr
    cdef long n_sites = state.shape[0]
    cdef long n_class = rates.shape[0]
    cum_arr = np.cumsum(np.asarray(rates))
    cdef double[::1] cum = cum_arr if n_class else np.zeros(0)
    cdef double total = cum[n_class - 1] if n_class else 0.0

    cdef long n_grid = grid.shape[0]
    cdef bint events_mode = n_grid == 0
    cdef long cap = max_records if events_mode else n_grid
    times_arr = np.empty(cap, dtype=np.float64)
    states_arr = np.empty((cap, n_sites), dtype=np.float64)
    cdef double[::1] times = times_arr
    cdef double[:, ::1] states = states_arr
    cdef long row = 0, gi = 0, n_events = 0, ci, v
    cdef int status = _ST_OK
    cdef double t = 0.0, t_next, r

    if events_mode:
        times[0] = 0.0
        for v in range(n_sites):
            states[0, v] = state[v]
        row = 1
    else:
        for gi in range(n_grid):
            times[gi] = grid[gi]
        gi = 0

    with nogil:
        while total > 0.0:
            t_next = t + _expo(bg) / total
            if not events_mode:
                while gi < n_grid and grid[gi] < t_next:
                    for v in range(n_sites):
                        states[gi, v] = state[v]
                    gi += 1
            if t_next > t_end:
                break
            if n_events >= max_events:
                status = _ST_MAX_EVENTS
                break
            t = t_next
            r = _unif(bg) * total
            ci = _bisect_right(cum, r, n_class)
            _apply_constant(bg, kinds[ci], site_a[ci], site_b[ci], param[ci],
                            state, two_s, eps)
            n_events += 1
            if events_mode:
                if row >= cap:
                    status = _ST_RECORD_OVERFLOW
                    break
                times[row] = t
                for v in range(n_sites):
                    states[row, v] = state[v]
                row += 1

    if events_mode:
        if status == _ST_OK and row < cap and (row == 0 or times[row - 1] < t_end):
            times[row] = t_end
            for v in range(n_sites):
                states[row, v] = state[v]
            row += 1
        return (times_arr[:row].copy(), states_arr[:row].copy(), state_arr,
                n_events, status)
    while gi < n_grid:
        for v in range(n_sites):
            states[gi, v] = state[v]
        gi += 1
    return times_arr, states_arr, state_arr, n_events, status


def run_constant_many(object bitgen, object init, long n_traj,
                      const signed char[::1] kinds, const long[::1] site_a,
                      const long[::1] site_b, const double[::1] param,
                      const double[::1] rates, double two_s,
                      double eps, double t_end, long max_events):
    cdef bitgen_t *bg = _bitgen_ptr(bitgen)
    init_arr = np.asarray(init, dtype=np.float64)
    cdef const double[::1] init_v = init_arr
    cdef long n_sites = init_v.shape[0]
    cdef long n_class = rates.shape[0]
    cum_arr = np.cumsum(np.asarray(rates))
    cdef double[::1] cum = cum_arr if n_class else np.zeros(0)
    cdef double total = cum[n_class - 1] if n_class else 0.0
    out_arr = np.empty((n_traj, n_sites), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    state_arr = np.empty(n_sites, dtype=np.float64)
    cdef double[::1] state = state_arr
    cdef long n_events = 0, k, v, ci
    cdef int status = _ST_OK
    cdef double t, r

    with nogil:
        for k in range(n_traj):
            for v in range(n_sites):
                state[v] = init_v[v]
            t = 0.0
            while total > 0.0:
                t += _expo(bg) / total
                if t > t_end:
                    break
                if n_events >= max_events:
                    status = _ST_MAX_EVENTS
                    break
                r = _unif(bg) * total
                ci = _bisect_right(cum, r, n_class)
                _apply_constant(bg, kinds[ci], site_a[ci], site_b[ci], param[ci],
                                state, two_s, eps)
                n_events += 1
            if status != _ST_OK:
                break
            for v in range(n_sites):
                out[k, v] = state[v]
    return out_arr, n_events, status


# --- state-dependent driver -------------------------------------------------------

cdef inline double _statedep_rate(int fam, signed char kind, long a, long b,
                                  double coef, long[::1] state, double two_s,
                                  const double[::1] dh_tot) noexcept nogil:
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


def run_statedep(object bitgen, object init, int family_code,
                 const signed char[::1] kinds, const long[::1] site_a,
                 const long[::1] site_b, const double[::1] coef,
                 const long[::1] inc_ptr, const long[::1] inc_idx,
                 double two_s, const double[::1] dh_cum, const double[::1] dh_tot,
                 double t_end, const double[::1] grid, long max_records,
                 long max_events, double rate_cap):
    """See the pure-lane docstring; identical contract and stream use."""
    cdef bitgen_t *bg = _bitgen_ptr(bitgen)
    state_arr = np.asarray(init, dtype=np.int64).copy()
    cdef long[::1] state = state_arr
    cdef long n_sites = state.shape[0]
    cdef long n_class = kinds.shape[0]
    rates_arr = np.empty(n_class, dtype=np.float64)
    cdef double[::1] rates = rates_arr
    cdef long ci
    for ci in range(n_class):
        rates[ci] = _statedep_rate(family_code, kinds[ci], site_a[ci], site_b[ci],
                                   coef[ci], state, two_s, dh_tot)
    cdef double total = float(np.asarray(rates_arr).sum())

    cdef long n_grid = grid.shape[0]
    cdef bint events_mode = n_grid == 0
    cdef long cap = max_records if events_mode else n_grid
    times_arr = np.empty(cap, dtype=np.float64)
    states_arr = np.empty((cap, n_sites), dtype=np.float64)
    cdef double[::1] times = times_arr
    cdef double[:, ::1] states = states_arr
    cdef long row = 0, gi = 0, n_events = 0, v, i, p, cj, a, b, n, k, off
    cdef int status = _ST_OK
    cdef signed char kind
    cdef double t = 0.0, t_next, r, acc, r2

    if events_mode:
        times[0] = 0.0
        for v in range(n_sites):
            states[0, v] = <double> state[v]
        row = 1
    else:
        for gi in range(n_grid):
            times[gi] = grid[gi]
        gi = 0

    if total > rate_cap:
        status = _ST_RATE_OVERFLOW

    with nogil:
        while status == _ST_OK and total > 1e-300:
            t_next = t + _expo(bg) / total
            if not events_mode:
                while gi < n_grid and grid[gi] < t_next:
                    for v in range(n_sites):
                        states[gi, v] = <double> state[v]
                    gi += 1
            if t_next > t_end:
                break
            if n_events >= max_events:
                status = _ST_MAX_EVENTS
                break
            t = t_next
            r = _unif(bg) * total
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
                    n = state[a]
                    off = n * (n - 1) // 2
                    r2 = _unif(bg) * dh_tot[n]
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

            for i in range(2):
                if i == 0:
                    v = a
                elif b >= 0:
                    v = b
                else:
                    break
                for p in range(inc_ptr[v], inc_ptr[v + 1]):
                    cj = inc_idx[p]
                    total -= rates[cj]
                    rates[cj] = _statedep_rate(family_code, kinds[cj], site_a[cj],
                                               site_b[cj], coef[cj], state,
                                               two_s, dh_tot)
                    total += rates[cj]
            if n_events % _REFRESH_EVERY == 0:
                total = 0.0
                for i in range(n_class):
                    total += rates[i]
            if total > rate_cap:
                status = _ST_RATE_OVERFLOW
                break

            if events_mode:
                if row >= cap:
                    status = _ST_RECORD_OVERFLOW
                    break
                times[row] = t
                for v in range(n_sites):
                    states[row, v] = <double> state[v]
                row += 1

    if events_mode:
        if status == _ST_OK and row < cap and (row == 0 or times[row - 1] < t_end):
            times[row] = t_end
            for v in range(n_sites):
                states[row, v] = <double> state[v]
            row += 1
        return (times_arr[:row].copy(), states_arr[:row].copy(),
                state_arr.astype(np.float64), n_events, status)
    while gi < n_grid:
        for v in range(n_sites):
            states[gi, v] = <double> state[v]
        gi += 1
    return times_arr, states_arr, state_arr.astype(np.float64), n_events, status


# --- Euler-Maruyama for the energy-exchange diffusion -------------------------------

cdef long _em_sweep(bitgen_t *bg, double[:, ::1] z, const long[::1] edge_i,
                    const long[::1] edge_j, const double[::1] edge_w,
                    const double[::1] res_c, const double[::1] res_alpha,
                    const double[::1] res_gamma, double two_s,
                    double dt, double[:, ::1] incr) noexcept nogil:
    cdef long n_rep = z.shape[0], n_sites = z.shape[1], n_edge = edge_w.shape[0]
    cdef long r, e, i, j
    cdef double diff, drift, noise, w, zi
    cdef long clamps = 0
    for r in range(n_rep):
        for i in range(n_sites):
            incr[r, i] = 0.0
    for r in range(n_rep):
        for e in range(n_edge):
            i = edge_i[e]
            j = edge_j[e]
            w = edge_w[e]
            diff = z[r, j] - z[r, i]
            drift = two_s * w * dt * diff
            noise = _normal(bg) * sqrt(2.0 * w * dt * z[r, i] * z[r, j])
            incr[r, i] += drift + noise
            incr[r, j] -= drift + noise
        for i in range(n_sites):
            if res_c[i] > 0.0:
                zi = z[r, i]
                incr[r, i] += res_c[i] * dt * (
                    two_s * res_alpha[i] - (res_gamma[i] - res_alpha[i]) * zi
                )
                if res_alpha[i] > 0.0:
                    incr[r, i] += _normal(bg) * sqrt(
                        2.0 * res_c[i] * res_alpha[i] * dt * zi
                    )
    for r in range(n_rep):
        for i in range(n_sites):
            z[r, i] += incr[r, i]
            if z[r, i] < 0.0:
                z[r, i] = 0.0
                clamps += 1
    return clamps


def bep_em_path(object bitgen, object init, const long[::1] edge_i,
                const long[::1] edge_j, const double[::1] edge_w,
                const double[::1] res_c, const double[::1] res_alpha,
                const double[::1] res_gamma, double two_s, double dt, long n_steps,
                long rec_every):
    cdef bitgen_t *bg = _bitgen_ptr(bitgen)
    z_arr = np.array(init, dtype=np.float64).reshape(1, -1)
    cdef double[:, ::1] z = z_arr
    cdef long n_sites = z.shape[1]
    incr_arr = np.zeros((1, n_sites))
    cdef double[:, ::1] incr = incr_arr
    cdef long n_rec = n_steps // rec_every + 1
    times_arr = np.empty(n_rec, dtype=np.float64)
    states_arr = np.empty((n_rec, n_sites), dtype=np.float64)
    cdef double[::1] times = times_arr
    cdef double[:, ::1] states = states_arr
    cdef long row = 1, step, v, clamps = 0
    times[0] = 0.0
    for v in range(n_sites):
        states[0, v] = z[0, v]
    with nogil:
        for step in range(1, n_steps + 1):
            clamps += _em_sweep(bg, z, edge_i, edge_j, edge_w, res_c, res_alpha,
                                res_gamma, two_s, dt, incr)
            if step % rec_every == 0:
                times[row] = step * dt
                for v in range(n_sites):
                    states[row, v] = z[0, v]
                row += 1
    return (times_arr[:row], states_arr[:row], np.asarray(z_arr[0]).copy(),
            clamps, STATUS_OK)


def bep_em_moments(object bitgen, object init_batch, const long[::1] edge_i,
                   const long[::1] edge_j, const double[::1] edge_w,
                   const double[::1] res_c, const double[::1] res_alpha,
                   const double[::1] res_gamma, double two_s,
                   double dt, long burn_steps, long n_steps, long thin):
    cdef bitgen_t *bg = _bitgen_ptr(bitgen)
    z_arr = np.array(init_batch, dtype=np.float64)
    cdef double[:, ::1] z = z_arr
    cdef long n_rep = z.shape[0], n_sites = z.shape[1]
    incr_arr = np.zeros((n_rep, n_sites))
    cdef double[:, ::1] incr = incr_arr
    sums_arr = np.zeros((3, n_sites))
    cdef double[:, ::1] sums = sums_arr
    cdef long n_samples = 0, clamps = 0, step, r, v
    cdef double zv
    with nogil:
        for step in range(burn_steps):
            clamps += _em_sweep(bg, z, edge_i, edge_j, edge_w, res_c, res_alpha,
                                res_gamma, two_s, dt, incr)
        for step in range(1, n_steps + 1):
            clamps += _em_sweep(bg, z, edge_i, edge_j, edge_w, res_c, res_alpha,
                                res_gamma, two_s, dt, incr)
            if step % thin == 0:
                for r in range(n_rep):
                    for v in range(n_sites):
                        zv = z[r, v]
                        sums[0, v] += zv
                        sums[1, v] += zv * zv
                        sums[2, v] += zv * zv * zv
                n_samples += n_rep
    return sums_arr, n_samples, clamps, z_arr
