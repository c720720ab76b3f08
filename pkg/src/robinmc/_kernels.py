"""Compiled path loops.

Everything here works on the flat encodings produced by ``Domain.encode``,
``CoefficientField.encode`` and ``ScalarFunction.encode``.  One numpy
Generator per path is passed in; each step draws exactly d standard normals
(plus d per retry), in the same order for the reflected and the killed walk,
so a killed path is the prefix of the reflected path with the same stream.

The free step (no boundary contact) is written out inline in the two path
loops.  Calls into jitted helpers that take arrays pay reference-count
traffic per argument, which costs several times the arithmetic of a step, so
helpers are used only on the rare contact and exit steps.
"""

import numba as nb
import numpy as np

BALL = 0
BOX = 1
CONSTANT = 0
DIAG_POLY = 1
T_CONST = 0
T_COORD = 1
T_SINPROD = 2
T_NORMAL = 3

REFLECT_OBLIQUE = 0
REFLECT_NORMAL = 1

MAX_RETRIES = 100
MAX_CORRECTIONS = 8

# per-path output columns; per-penalty (f-part, boundary part) pairs follow
# the d point coordinates, see ``part_column``
C_LOCAL = 0
C_TIME = 1
C_STEPS = 2
C_FLAGS = 3
C_RETRIES = 4
C_DEGEN = 5
C_WEIGHT = 6  # final weight of the smallest penalty
C_FIRST = 7  # index of the first contact step, -1 if none
C_BEFORE = 8  # local time accrued before the first contact step
C_STRAY = 9  # steps without contact but with dA != 0
C_OUTSIDE = 10  # positions outside the closed domain
C_NEGATIVE = 11  # steps with dA < 0
C_EARLY = 12  # 1 if A > 0 after at most `window` steps
C_POINT = 13  # exit point, or the point where f or g returned NaN

F_MAXSTEPS = 1
F_ABORTED = 2
F_EXITED = 4
F_NAN = 8
F_INTERIOR_G = 16
F_FLOOR = 32
F_NO_TABLE = 64
F_REC_FULL = 128


def width(d, parts=1):
    return C_POINT + d + 2 * parts


def part_column(d, j):
    """Column of the f-part for penalty j; the boundary part is the next one."""
    return C_POINT + d + 2 * j


jit = nb.njit(cache=True, nogil=True)


# ----------------------------------------------------------------- geometry

helper = nb.njit(cache=True, nogil=True, inline="always")


# ----------------------------------------------------------------- geometry


@jit
def signed_distance(gk, lo, hi, r, x):
    d = x.shape[0]
    if gk == BALL:
        s = 0.0
        for i in range(d):
            s += (x[i] - lo[i]) ** 2
        return np.sqrt(s) - r
    out2 = 0.0
    emax = -np.inf
    for i in range(d):
        e = max(lo[i] - x[i], x[i] - hi[i])
        if e > 0.0:
            out2 += e * e
        if e > emax:
            emax = e
    if out2 > 0.0:
        return np.sqrt(out2)
    return emax


@jit
def project(gk, lo, hi, r, y, p):
    """Nearest boundary point of a non-interior ``y`` into ``p``; returns the distance."""
    d = y.shape[0]
    if gk == BALL:
        s = 0.0
        for i in range(d):
            s += (y[i] - lo[i]) ** 2
        s = np.sqrt(s)
        for i in range(d):
            p[i] = lo[i] + r * (y[i] - lo[i]) / s
    else:
        outside = False
        emax = -np.inf
        imax = 0
        for i in range(d):
            e = max(lo[i] - y[i], y[i] - hi[i])
            if e > 0.0:
                outside = True
            if e > emax:
                emax = e
                imax = i
        for i in range(d):
            p[i] = min(max(y[i], lo[i]), hi[i])
        if not outside:
            if y[imax] - lo[imax] <= hi[imax] - y[imax]:
                p[imax] = lo[imax]
            else:
                p[imax] = hi[imax]
    s = 0.0
    for i in range(d):
        s += (y[i] - p[i]) ** 2
    return np.sqrt(s)


@jit
def inward_normal(gk, lo, hi, r, tol, p, n):
    """Fill ``n``; returns 0 on success, 1 if undefined (edge, corner, off-boundary)."""
    d = p.shape[0]
    if gk == BALL:
        s = 0.0
        for i in range(d):
            s += (p[i] - lo[i]) ** 2
        s = np.sqrt(s)
        for i in range(d):
            n[i] = (lo[i] - p[i]) / s
        return 0
    count = 0
    for i in range(d):
        n[i] = 0.0
    for i in range(d):
        if abs(p[i] - lo[i]) <= tol:
            n[i] = 1.0
            count += 1
        if abs(p[i] - hi[i]) <= tol:
            n[i] = -1.0
            count += 1
    return 0 if count == 1 else 1


@jit
def normal_component(gk, lo, hi, r, tol, x, axis):
    d = x.shape[0]
    if gk == BALL:
        s = 0.0
        for i in range(d):
            s += (x[i] - lo[i]) ** 2
        return (lo[axis] - x[axis]) / np.sqrt(s)
    for i in range(d):
        if abs(x[i] - lo[i]) <= tol:
            return 1.0 if i == axis else 0.0
        if abs(x[i] - hi[i]) <= tol:
            return -1.0 if i == axis else 0.0
    emax = -np.inf
    imax = 0
    for i in range(d):
        e = max(lo[i] - x[i], x[i] - hi[i])
        if e > emax:
            emax = e
            imax = i
    if imax != axis:
        return 0.0
    return 1.0 if x[imax] - lo[imax] <= hi[imax] - x[imax] else -1.0


# ------------------------------------------------------------- coefficients


@jit
def poly(c, i, s):
    v = 0.0
    for k in range(c.shape[1] - 1, -1, -1):
        v = v * s + c[i, k]
    return v


@jit
def dpoly(c, i, s):
    v = 0.0
    for k in range(c.shape[1] - 1, 0, -1):
        v = v * s + k * c[i, k]
    return v


@jit
def drift_sigma(ck, mats, cpoly, x, b, sig):
    d = x.shape[0]
    if ck == CONSTANT:
        for i in range(d):
            b[i] = 0.0
            for j in range(d):
                sig[i, j] = mats[1, i, j]
    else:
        for i in range(d):
            b[i] = dpoly(cpoly, i, x[i])
            for j in range(d):
                sig[i, j] = 0.0
            sig[i, i] = np.sqrt(2.0 * poly(cpoly, i, x[i]))


@jit
def conormal(ck, mats, cpoly, p, n, out):
    d = p.shape[0]
    if ck == CONSTANT:
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += mats[0, i, j] * n[j]
            out[i] = acc
    else:
        for i in range(d):
            out[i] = poly(cpoly, i, p[i]) * n[i]
    s = 0.0
    for i in range(d):
        s += out[i] * out[i]
    return np.sqrt(s)


# ---------------------------------------------------------------- functions


@jit
def feval(T, gk, lo, hi, r, tol, x):
    d = x.shape[0]
    s = 0.0
    for k in range(T.shape[0]):
        code = int(T[k, 0])
        c = T[k, 1]
        if code == T_CONST:
            s += c
        elif code == T_COORD:
            s += c * x[int(T[k, 2])]
        elif code == T_SINPROD:
            v = c
            for i in range(d):
                v *= np.sin(T[k, 3 + i] * x[i] + T[k, 3 + d + i])
            s += v
        elif code == T_NORMAL:
            v = c * normal_component(gk, lo, hi, r, tol, x, int(T[k, 2]))
            for i in range(d):
                v *= np.sin(T[k, 3 + i] * x[i] + T[k, 3 + d + i])
            s += v
    return s


@jit
def table_eval(tab_pts, tab_vals, x):
    """Nearest-neighbour lookup; returns (value, distance)."""
    best = np.inf
    val = 0.0
    d = x.shape[0]
    for k in range(tab_pts.shape[0]):
        s = 0.0
        for i in range(d):
            s += (tab_pts[k, i] - x[i]) ** 2
        if s < best:
            best = s
            val = tab_vals[k]
    return val, np.sqrt(best)


# --------------------------------------------------------------------- steps


@jit
def push_back(y, gk, lo, hi, r, tol, ck, mats, cpoly, mode, p, nrm, cn, out):
    """Reflect an exterior ``y`` along the unit conormal at its projection.

    Returns (status, oblique overshoot, |a n|).  ``p`` receives the boundary
    contact point, ``out`` the reflected point.
    """
    d = y.shape[0]
    ov = project(gk, lo, hi, r, y, p)
    if inward_normal(gk, lo, hi, r, tol, p, nrm) != 0:
        return 1, 0.0, 1.0
    m = conormal(ck, mats, cpoly, p, nrm, cn)
    for i in range(d):
        cn[i] /= m
    s = ov
    if mode == REFLECT_OBLIQUE:
        cos = 0.0
        for i in range(d):
            cos += cn[i] * nrm[i]
        if gk == BALL:
            beta = 0.0
            gam = 0.0
            for i in range(d):
                beta += cn[i] * (y[i] - lo[i])
                gam += (y[i] - lo[i]) ** 2
            gam -= r * r
            disc = beta * beta - gam
            if disc >= 0.0 and beta < 0.0:
                s = -beta - np.sqrt(disc)
            else:
                s = ov / cos
        else:
            s = ov / cos
        for i in range(d):
            p[i] = y[i] + s * cn[i]
        if gk == BALL:
            # remove rounding drift off the sphere
            q = 0.0
            for i in range(d):
                q += (p[i] - lo[i]) ** 2
            q = np.sqrt(q)
            for i in range(d):
                p[i] = lo[i] + r * (p[i] - lo[i]) / q
        elif signed_distance(gk, lo, hi, r, p) > tol:
            # oblique line leaves through a neighbouring face: use the normal projection
            s = project(gk, lo, hi, r, y, p)
    for i in range(d):
        out[i] = p[i] + s * cn[i]
    return 0, s, m


@jit
def resolve_contact(y, gk, lo, hi, r, tol, ck, mats, cpoly, mode, kappa, S, xnext):
    """Push an exterior proposal back into the closed domain.

    Returns (status, dA, degenerate); status 1 means the normal at the
    projection is undefined and the step must be redrawn.  The contact point
    is left in ``S[0]``.
    """
    d = y.shape[0]
    p = S[0]
    z = S[3]
    z2 = S[7]
    st, s, m = push_back(y, gk, lo, hi, r, tol, ck, mats, cpoly, mode, p, S[1], S[2], z)
    if st != 0:
        return 1, 0.0, 0
    dA = kappa * s / m
    degenerate = 0
    k = 0
    while signed_distance(gk, lo, hi, r, z) > tol:
        if k == MAX_CORRECTIONS:
            degenerate = 1
            break
        st2, s2, m2 = push_back(z, gk, lo, hi, r, tol, ck, mats, cpoly, mode, S[4], S[5], S[6], z2)
        if st2 != 0:
            degenerate = 1
            break
        dA += kappa * s2 / m2
        for i in range(d):
            z[i] = z2[i]
        k += 1
    src = p if degenerate else z
    for i in range(d):
        xnext[i] = src[i]
    return 0, dA, degenerate


@jit
def _term_codes(T):
    n = T.shape[0]
    code = np.empty(n, np.int64)
    axis = np.empty(n, np.int64)
    for q in range(n):
        code[q] = int(T[q, 0])
        axis[q] = int(T[q, 2])
    return code, axis


@jit
def _affine_coefs(T, d):
    """(True, c0, c) when T is a sum of constant and coordinate terms, so that
    the function is c0 + c . x; loops then skip the per-term dispatch."""
    c = np.zeros(d)
    c0 = 0.0
    for q in range(T.shape[0]):
        code = int(T[q, 0])
        if code == T_CONST:
            c0 += T[q, 1]
        elif code == T_COORD:
            c[int(T[q, 2])] += T[q, 1]
        else:
            return False, 0.0, c
    return True, c0, c


@jit
def _is_lower_diagonal(sig):
    for i in range(sig.shape[0]):
        for j in range(i):
            if sig[i, j] != 0.0:
                return False
    return True


# --------------------------------------------------------------- path loops


@jit
def reflected_paths(
    rngs, x0, gk, lo, hi, r, tol, ck, mats, cpoly, lam, ns, fT, g_coefs, gT, tab_coefs, tab_pts, tab_vals,
    tab_maxdist, dt, eps, max_steps, kappa, mode, window, out, rec_pos, rec_loc, rec_dA, rec_cp,
):
    """Discounted functionals of reflected walks for several penalties at once.

    For penalty j the weight is w = exp(-lam t - ns[j] A).  Per step the
    f-part adds f(X_k) dt (w_k - w_{k+1}) / dS and the boundary part adds
    h_j(p) dA (w_k - w_{k+1}) / dS with h_j = g_coefs[j] g - tab_coefs[j] table,
    p the contact point.  Walks stop once the weight of the smallest penalty
    drops below ``eps``.  If ``rec_pos`` has more than one row the first path
    is recorded (positions, local time, dA, contact points).
    """
    d = x0.shape[0]
    nn = ns.shape[0]
    S = np.zeros((8, d))
    x = np.empty(d)
    y = np.empty(d)
    xn = np.empty(d)
    xi = np.empty(d)
    b = np.zeros(d)
    sig = np.zeros((d, d))
    w = np.empty(nn)
    fs = np.empty(nn)
    fc = np.empty(nn)
    bs = np.empty(nn)
    bc = np.empty(nn)
    sqdt = np.sqrt(dt)
    lamdt = lam * dt
    cfree = np.exp(-lamdt)
    varying = ck != CONSTANT
    if not varying:
        drift_sigma(ck, mats, cpoly, x0, b, sig)
    ncoef = cpoly.shape[1]
    fcode, faxis = _term_codes(fT)
    nf = fT.shape[0]
    f_affine, f_c0, f_c = _affine_coefs(fT, d)
    # varying fields are diagonal, so only a constant full matrix takes the general step
    diag = varying or _is_lower_diagonal(sig)
    rtol2 = (r + tol) ** 2
    lead = 0
    use_g = False
    use_tab = False
    for j in range(nn):
        if ns[j] < ns[lead]:
            lead = j
        if g_coefs[j] != 0.0:
            use_g = True
        if tab_coefs[j] != 0.0:
            use_tab = True
    record = rec_pos.shape[0] > 1
    cap = rec_dA.shape[0]
    for ip in range(len(rngs)):
        rng = rngs[ip]
        for i in range(d):
            x[i] = x0[i]
        for j in range(nn):
            w[j] = 1.0
            fs[j] = 0.0
            fc[j] = 0.0
            bs[j] = 0.0
            bc[j] = 0.0
        t = 0.0
        A = 0.0
        k = 0
        flags = 0
        retries = 0
        degen = 0
        first = -1
        before = 0.0
        stray = 0
        outside = 0
        negative = 0
        early = 0
        rec = record and ip == 0
        if rec:
            for i in range(d):
                rec_pos[0, i] = x0[i]
            rec_loc[0] = 0.0
        while True:
            if k >= max_steps:
                flags |= F_MAXSTEPS
                break
            if rec and k >= cap:
                flags |= F_REC_FULL
                break
            fx = 0.0
            if f_affine:
                fx = f_c0
                for i in range(d):
                    fx += f_c[i] * x[i]
            for q in range(0 if f_affine else nf):
                code = fcode[q]
                if code == T_CONST:
                    fx += fT[q, 1]
                elif code == T_COORD:
                    fx += fT[q, 1] * x[faxis[q]]
                elif code == T_SINPROD:
                    v = fT[q, 1]
                    for i in range(d):
                        v *= np.sin(fT[q, 3 + i] * x[i] + fT[q, 3 + d + i])
                    fx += v
                else:
                    fx += fT[q, 1] * normal_component(gk, lo, hi, r, tol, x, faxis[q])
            if np.isnan(fx):
                flags |= F_NAN
                for i in range(d):
                    out[ip, C_POINT + i] = x[i]
                break
            if varying:
                for i in range(d):
                    av = 0.0
                    for m in range(ncoef - 1, -1, -1):
                        av = av * x[i] + cpoly[i, m]
                    dv = 0.0
                    for m in range(ncoef - 1, 0, -1):
                        dv = dv * x[i] + m * cpoly[i, m]
                    b[i] = dv
                    sig[i, i] = np.sqrt(2.0 * av)
            contact = False
            ok = False
            dA = 0.0
            dg = 0
            for attempt in range(MAX_RETRIES + 1):
                if diag:
                    # same rounding as the general step: the zero off-diagonal terms add exactly nothing
                    for i in range(d):
                        y[i] = x[i] + b[i] * dt + (sig[i, i] * rng.standard_normal()) * sqdt
                else:
                    for i in range(d):
                        xi[i] = rng.standard_normal()
                    for i in range(d):
                        acc = 0.0
                        for j in range(i + 1):
                            acc += sig[i, j] * xi[j]
                        y[i] = x[i] + b[i] * dt + acc * sqdt
                if gk == BALL:
                    s2 = 0.0
                    for i in range(d):
                        e = y[i] - lo[i]
                        s2 += e * e
                    # |y - c| - r > tol, tested without the square root
                    sd = tol + 1.0 if s2 > rtol2 else 0.0
                else:
                    out2 = 0.0
                    emax = -np.inf
                    for i in range(d):
                        e = lo[i] - y[i]
                        e2 = y[i] - hi[i]
                        if e2 > e:
                            e = e2
                        if e > 0.0:
                            out2 += e * e
                        if e > emax:
                            emax = e
                    sd = np.sqrt(out2) if out2 > 0.0 else emax
                if sd <= tol:
                    ok = True
                    break
                st, dA, dg = resolve_contact(y, gk, lo, hi, r, tol, ck, mats, cpoly, mode, kappa, S, xn)
                if st == 0:
                    ok = True
                    contact = True
                    break
                retries += 1
            if not ok:
                flags |= F_ABORTED
                break
            if contact:
                p = S[0]
                degen += dg
                if dA < 0.0:
                    negative += 1
                if first < 0:
                    first = k
                    before = A
                if signed_distance(gk, lo, hi, r, p) < -tol:
                    flags |= F_INTERIOR_G
                gv = 0.0
                if use_g:
                    gv = feval(gT, gk, lo, hi, r, tol, p)
                tv = 0.0
                if use_tab:
                    tv, dist = table_eval(tab_pts, tab_vals, p)
                    if dist > tab_maxdist:
                        flags |= F_NO_TABLE
                if np.isnan(gv) or np.isnan(tv):
                    flags |= F_NAN
                    for i in range(d):
                        out[ip, C_POINT + i] = p[i]
                    break
                for j in range(nn):
                    dS = lamdt + ns[j] * dA
                    wn = w[j] * np.exp(-dS)
                    qw = (w[j] - wn) / dS
                    # Neumaier-compensated sums
                    term = fx * dt * qw
                    tt = fs[j] + term
                    if abs(fs[j]) >= abs(term):
                        fc[j] += (fs[j] - tt) + term
                    else:
                        fc[j] += (term - tt) + fs[j]
                    fs[j] = tt
                    term = (g_coefs[j] * gv - tab_coefs[j] * tv) * dA * qw
                    tt = bs[j] + term
                    if abs(bs[j]) >= abs(term):
                        bc[j] += (bs[j] - tt) + term
                    else:
                        bc[j] += (term - tt) + bs[j]
                    bs[j] = tt
                    w[j] = wn
                for i in range(d):
                    x[i] = xn[i]
                if signed_distance(gk, lo, hi, r, x) > tol:
                    outside += 1
            else:
                if dA != 0.0:
                    stray += 1
                for j in range(nn):
                    wn = w[j] * cfree
                    term = fx * dt * ((w[j] - wn) / lamdt)
                    tt = fs[j] + term
                    if abs(fs[j]) >= abs(term):
                        fc[j] += (fs[j] - tt) + term
                    else:
                        fc[j] += (term - tt) + fs[j]
                    fs[j] = tt
                    w[j] = wn
                for i in range(d):
                    x[i] = y[i]
            t += dt
            A += dA
            k += 1
            if rec:
                for i in range(d):
                    rec_pos[k, i] = x[i]
                    rec_cp[k - 1, i] = S[0, i] if contact else np.nan
                rec_loc[k] = A
                rec_dA[k - 1] = dA
            if k <= window and A > 0.0:
                early = 1
            if w[lead] < eps:
                flags |= F_FLOOR
                break
        if first < 0:
            before = A
        out[ip, C_LOCAL] = A
        out[ip, C_TIME] = t
        out[ip, C_STEPS] = k
        out[ip, C_FLAGS] = flags
        out[ip, C_RETRIES] = retries
        out[ip, C_DEGEN] = degen
        out[ip, C_WEIGHT] = w[lead]
        out[ip, C_FIRST] = first
        out[ip, C_BEFORE] = before
        out[ip, C_STRAY] = stray
        out[ip, C_OUTSIDE] = outside
        out[ip, C_NEGATIVE] = negative
        out[ip, C_EARLY] = early
        for j in range(nn):
            out[ip, C_POINT + d + 2 * j] = fs[j] + fc[j]
            out[ip, C_POINT + d + 2 * j + 1] = bs[j] + bc[j]


@jit
def killed_paths(rngs, x0, gk, lo, hi, r, tol, ck, mats, cpoly, lam, fT, gT, dt, eps, max_steps, out, rec_pos):
    """exp(-lam tau) g(X_tau) + sum f(X_k) (w_k - w_{k+1}) / lam over killed walks.

    The walk stops at the first proposal outside the closed domain (exit at
    the projection of the proposal) or when exp(-lam t) < eps.  Boundary
    starts exit at once.  If ``rec_pos`` has more than one row the positions
    of the first path are recorded.
    """
    d = x0.shape[0]
    x = np.empty(d)
    y = np.empty(d)
    p = np.empty(d)
    xi = np.empty(d)
    b = np.zeros(d)
    sig = np.zeros((d, d))
    sqdt = np.sqrt(dt)
    lamdt = lam * dt
    cfree = np.exp(-lamdt)
    varying = ck != CONSTANT
    if not varying:
        drift_sigma(ck, mats, cpoly, x0, b, sig)
    ncoef = cpoly.shape[1]
    fcode, faxis = _term_codes(fT)
    nf = fT.shape[0]
    f_affine, f_c0, f_c = _affine_coefs(fT, d)
    # varying fields are diagonal, so only a constant full matrix takes the general step
    diag = varying or _is_lower_diagonal(sig)
    rtol2 = (r + tol) ** 2
    on_boundary = abs(signed_distance(gk, lo, hi, r, x0)) <= tol
    record = rec_pos.shape[0] > 1
    cap = rec_pos.shape[0] - 1
    pc = C_POINT + d
    for ip in range(len(rngs)):
        rng = rngs[ip]
        for i in range(d):
            x[i] = x0[i]
        w = 1.0
        t = 0.0
        fs = 0.0
        fcomp = 0.0
        gpart = 0.0
        flags = 0
        k = 0
        rec = record and ip == 0
        if rec:
            for i in range(d):
                rec_pos[0, i] = x0[i]
        if on_boundary:
            gpart = feval(gT, gk, lo, hi, r, tol, x)
            flags |= F_EXITED
            if np.isnan(gpart):
                flags |= F_NAN
            for i in range(d):
                out[ip, C_POINT + i] = x[i]
        else:
            while True:
                if k >= max_steps:
                    flags |= F_MAXSTEPS
                    break
                if rec and k >= cap:
                    flags |= F_REC_FULL
                    break
                fx = 0.0
                if f_affine:
                    fx = f_c0
                    for i in range(d):
                        fx += f_c[i] * x[i]
                for q in range(0 if f_affine else nf):
                    code = fcode[q]
                    if code == T_CONST:
                        fx += fT[q, 1]
                    elif code == T_COORD:
                        fx += fT[q, 1] * x[faxis[q]]
                    elif code == T_SINPROD:
                        v = fT[q, 1]
                        for i in range(d):
                            v *= np.sin(fT[q, 3 + i] * x[i] + fT[q, 3 + d + i])
                        fx += v
                    else:
                        fx += fT[q, 1] * normal_component(gk, lo, hi, r, tol, x, faxis[q])
                if np.isnan(fx):
                    flags |= F_NAN
                    for i in range(d):
                        out[ip, C_POINT + i] = x[i]
                    break
                if varying:
                    for i in range(d):
                        av = 0.0
                        for m in range(ncoef - 1, -1, -1):
                            av = av * x[i] + cpoly[i, m]
                        dv = 0.0
                        for m in range(ncoef - 1, 0, -1):
                            dv = dv * x[i] + m * cpoly[i, m]
                        b[i] = dv
                        sig[i, i] = np.sqrt(2.0 * av)
                if diag:
                    # same rounding as the general step: the zero off-diagonal terms add exactly nothing
                    for i in range(d):
                        y[i] = x[i] + b[i] * dt + (sig[i, i] * rng.standard_normal()) * sqdt
                else:
                    for i in range(d):
                        xi[i] = rng.standard_normal()
                    for i in range(d):
                        acc = 0.0
                        for j in range(i + 1):
                            acc += sig[i, j] * xi[j]
                        y[i] = x[i] + b[i] * dt + acc * sqdt
                wn = w * cfree
                term = fx * ((w - wn) / lam)
                tt = fs + term
                if abs(fs) >= abs(term):
                    fcomp += (fs - tt) + term
                else:
                    fcomp += (term - tt) + fs
                fs = tt
                w = wn
                k += 1
                t += dt
                if gk == BALL:
                    s2 = 0.0
                    for i in range(d):
                        e = y[i] - lo[i]
                        s2 += e * e
                    # |y - c| - r > tol, tested without the square root
                    sd = tol + 1.0 if s2 > rtol2 else 0.0
                else:
                    out2 = 0.0
                    emax = -np.inf
                    for i in range(d):
                        e = lo[i] - y[i]
                        e2 = y[i] - hi[i]
                        if e2 > e:
                            e = e2
                        if e > 0.0:
                            out2 += e * e
                        if e > emax:
                            emax = e
                    sd = np.sqrt(out2) if out2 > 0.0 else emax
                if sd > tol:
                    project(gk, lo, hi, r, y, p)
                    gv = feval(gT, gk, lo, hi, r, tol, p)
                    if np.isnan(gv):
                        flags |= F_NAN
                    gpart = w * gv
                    flags |= F_EXITED
                    for i in range(d):
                        out[ip, C_POINT + i] = p[i]
                    break
                for i in range(d):
                    x[i] = y[i]
                if rec:
                    for i in range(d):
                        rec_pos[k, i] = x[i]
                if w < eps:
                    flags |= F_FLOOR
                    break
        out[ip, C_LOCAL] = 0.0
        out[ip, C_TIME] = t
        out[ip, C_STEPS] = k
        out[ip, C_FLAGS] = flags
        out[ip, C_WEIGHT] = w
        out[ip, C_FIRST] = -1
        out[ip, pc] = fs + fcomp
        out[ip, pc + 1] = gpart
