"""Hot numeric kernels with numba-accelerated and pure-numpy implementations.

The numba path is the default. Set the environment variable ``VASTVOL_NUMBA=0``
(or call :func:`set_backend`) to force the pure-numpy fallbacks, e.g. on
platforms where numba is unavailable. Both paths implement the same
arithmetic; results agree to floating-point round-off, and each path is
individually deterministic.
"""

from __future__ import annotations

import os

import numpy as np

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    HAVE_NUMBA = False

_env = os.environ.get("VASTVOL_NUMBA", "1").strip().lower()
NUMBA_ENABLED = HAVE_NUMBA and _env not in ("0", "false", "off")


def set_backend(use_numba: bool) -> None:
    """Switch between the numba and pure-numpy kernel paths at runtime."""
    global NUMBA_ENABLED
    if use_numba and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable in this environment")
    NUMBA_ENABLED = bool(use_numba)


def backend() -> str:
    """Name of the active kernel path: 'numba' or 'numpy'."""
    return "numba" if NUMBA_ENABLED else "numpy"


# ---------------------------------------------------------------------------
# Refresh-time construction
# ---------------------------------------------------------------------------

def _pairwise_refresh_np(ta: np.ndarray, tb: np.ndarray):
    na, nb = len(ta), len(tb)
    i = int(np.searchsorted(ta, 0.0, side="right"))
    j = int(np.searchsorted(tb, 0.0, side="right"))
    v_out, ia_out, ib_out = [], [], []
    while i < na and j < nb:
        v = ta[i] if ta[i] >= tb[j] else tb[j]
        i2 = int(np.searchsorted(ta, v, side="right")) - 1
        j2 = int(np.searchsorted(tb, v, side="right")) - 1
        v_out.append(v)
        ia_out.append(i2)
        ib_out.append(j2)
        i, j = i2 + 1, j2 + 1
    return (
        np.asarray(v_out, dtype=np.float64),
        np.asarray(ia_out, dtype=np.int64),
        np.asarray(ib_out, dtype=np.int64),
    )


def _pairwise_refresh_impl(ta, tb):
    na = ta.shape[0]
    nb = tb.shape[0]
    cap = na if na < nb else nb
    v_out = np.empty(cap, dtype=np.float64)
    ia_out = np.empty(cap, dtype=np.int64)
    ib_out = np.empty(cap, dtype=np.int64)
    i = 0
    j = 0
    while i < na and ta[i] <= 0.0:
        i += 1
    while j < nb and tb[j] <= 0.0:
        j += 1
    count = 0
    while i < na and j < nb:
        v = ta[i] if ta[i] >= tb[j] else tb[j]
        while i + 1 < na and ta[i + 1] <= v:
            i += 1
        while j + 1 < nb and tb[j + 1] <= v:
            j += 1
        v_out[count] = v
        ia_out[count] = i
        ib_out[count] = j
        count += 1
        i += 1
        j += 1
    return v_out[:count], ia_out[:count], ib_out[:count]


def _all_refresh_np(times: np.ndarray, lengths: np.ndarray):
    p = times.shape[0]
    idx = np.array(
        [int(np.searchsorted(times[k, : lengths[k]], 0.0, side="right")) for k in range(p)],
        dtype=np.int64,
    )
    v_out = []
    samples = []
    while np.all(idx < lengths):
        v = max(times[k, idx[k]] for k in range(p))
        cur = np.empty(p, dtype=np.int64)
        for k in range(p):
            cur[k] = int(np.searchsorted(times[k, : lengths[k]], v, side="right")) - 1
        v_out.append(v)
        samples.append(cur)
        idx = cur + 1
    if not v_out:
        return np.empty(0, dtype=np.float64), np.empty((p, 0), dtype=np.int64)
    return np.asarray(v_out, dtype=np.float64), np.stack(samples, axis=1)


def _all_refresh_impl(times, lengths):
    p = times.shape[0]
    cap = lengths.min()
    v_out = np.empty(cap, dtype=np.float64)
    s_out = np.empty((p, cap), dtype=np.int64)
    idx = np.zeros(p, dtype=np.int64)
    for k in range(p):
        while idx[k] < lengths[k] and times[k, idx[k]] <= 0.0:
            idx[k] += 1
    count = 0
    while True:
        v = -1.0
        for k in range(p):
            if idx[k] >= lengths[k]:
                return v_out[:count], s_out[:, :count]
            if times[k, idx[k]] > v:
                v = times[k, idx[k]]
        for k in range(p):
            while idx[k] + 1 < lengths[k] and times[k, idx[k] + 1] <= v:
                idx[k] += 1
            s_out[k, count] = idx[k]
            idx[k] += 1
        v_out[count] = v
        count += 1


# ---------------------------------------------------------------------------
# Realized-measure sums
# ---------------------------------------------------------------------------

def _two_scale_sum_np(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    dx = x[lag:] - x[:-lag]
    dy = y[lag:] - y[:-lag]
    return float(np.dot(dx, dy))


def _two_scale_sum_impl(x, y, lag):
    total = 0.0
    for i in range(lag, x.shape[0]):
        total += (x[i] - x[i - lag]) * (y[i] - y[i - lag])
    return total


def _autocov_sum_np(r: np.ndarray, s: np.ndarray, h: int) -> float:
    if h == 0:
        return float(np.dot(r, s))
    return float(np.dot(r[h:], s[:-h]))


def _autocov_sum_impl(r, s, h):
    total = 0.0
    for i in range(h, r.shape[0]):
        total += r[i] * s[i - h]
    return total


# ---------------------------------------------------------------------------
# Euler path simulation (one trading day, all assets)
# ---------------------------------------------------------------------------

def _euler_day_np(x0, r0, mu_dt, alpha_dt, beta0, bvol_sqdt, rho, lam_sqdt, dw, db, du, dz):
    p, n = db.shape
    x_out = np.empty((p, n))
    r_out = np.empty((p, n))
    x = x0.copy()
    r = r0.copy()
    rho_c = np.sqrt(1.0 - rho * rho)
    for k in range(n):
        sig = np.exp(r)
        x = x + mu_dt + rho * sig * db[:, k] + rho_c * sig * dw[k] + lam_sqdt * dz[:, k]
        r = r + alpha_dt * (beta0 - r) + bvol_sqdt * du[:, k]
        x_out[:, k] = x
        r_out[:, k] = r
    return x_out, r_out


def _euler_day_impl(x0, r0, mu_dt, alpha_dt, beta0, bvol_sqdt, rho, lam_sqdt, dw, db, du, dz):
    p, n = db.shape
    x_out = np.empty((p, n))
    r_out = np.empty((p, n))
    for a in range(p):
        x = x0[a]
        r = r0[a]
        rho_c = np.sqrt(1.0 - rho[a] * rho[a])
        for k in range(n):
            sig = np.exp(r)
            x = x + mu_dt[a] + rho[a] * sig * db[a, k] + rho_c * sig * dw[k] + lam_sqdt[a] * dz[a, k]
            r = r + alpha_dt[a] * (beta0[a] - r) + bvol_sqdt[a] * du[a, k]
            x_out[a, k] = x
            r_out[a, k] = r
    return x_out, r_out


if HAVE_NUMBA:
    _pairwise_refresh_nb = numba.njit(cache=True, nogil=True)(_pairwise_refresh_impl)
    _all_refresh_nb = numba.njit(cache=True, nogil=True)(_all_refresh_impl)
    _two_scale_sum_nb = numba.njit(cache=True, nogil=True)(_two_scale_sum_impl)
    _autocov_sum_nb = numba.njit(cache=True, nogil=True)(_autocov_sum_impl)
    _euler_day_nb = numba.njit(cache=True, nogil=True)(_euler_day_impl)


def pairwise_refresh_times(ta: np.ndarray, tb: np.ndarray):
    """Refresh times of two tick-time arrays plus previous-tick indices.

    Returns ``(v, ia, ib)`` where ``v`` holds the strictly increasing refresh
    times in ``(0, T]`` and ``ia``/``ib`` the index of the last tick of each
    series at or before each refresh time.
    """
    ta = np.ascontiguousarray(ta, dtype=np.float64)
    tb = np.ascontiguousarray(tb, dtype=np.float64)
    if NUMBA_ENABLED:
        return _pairwise_refresh_nb(ta, tb)
    return _pairwise_refresh_np(ta, tb)


def all_refresh_times(times: np.ndarray, lengths: np.ndarray):
    """All-refresh times over ``p`` padded tick-time rows.

    ``times`` is ``(p, n_max)`` with row ``k`` valid up to ``lengths[k]``.
    Returns ``(v, samples)`` with ``samples[k, i]`` the previous-tick index of
    asset ``k`` at refresh time ``v[i]``.
    """
    times = np.ascontiguousarray(times, dtype=np.float64)
    lengths = np.ascontiguousarray(lengths, dtype=np.int64)
    if NUMBA_ENABLED:
        return _all_refresh_nb(times, lengths)
    return _all_refresh_np(times, lengths)


def two_scale_sum(x: np.ndarray, y: np.ndarray, lag: int) -> float:
    """Sum of lag-``lag`` increment cross-products, not yet divided by ``lag``."""
    x = np.ascontiguousarray(x, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if NUMBA_ENABLED:
        return _two_scale_sum_nb(x, y, lag)
    return _two_scale_sum_np(x, y, lag)


def autocov_sum(r: np.ndarray, s: np.ndarray, h: int) -> float:
    """Realized autocovariance sum of two return arrays at lag ``h >= 0``."""
    r = np.ascontiguousarray(r, dtype=np.float64)
    s = np.ascontiguousarray(s, dtype=np.float64)
    if NUMBA_ENABLED:
        return _autocov_sum_nb(r, s, h)
    return _autocov_sum_np(r, s, h)


def euler_day(x0, r0, mu_dt, alpha_dt, beta0, bvol_sqdt, rho, lam_sqdt, dw, db, du, dz):
    """One trading day of Euler steps for all assets.

    State per asset: log-price ``x`` and log-volatility ``r``. Scalar
    coefficient arrays are premultiplied by ``dt`` or ``sqrt(dt)`` by the
    caller. ``dw`` is the shared-factor draw (length n); ``db``, ``du``,
    ``dz`` are per-asset draws of shape ``(p, n)``. Returns the day's
    ``(x, r)`` paths of shape ``(p, n)``, excluding the initial state.
    """
    args = (x0, r0, mu_dt, alpha_dt, beta0, bvol_sqdt, rho, lam_sqdt, dw, db, du, dz)
    args = tuple(np.ascontiguousarray(a, dtype=np.float64) for a in args)
    if NUMBA_ENABLED:
        return _euler_day_nb(*args)
    return _euler_day_np(*args)
