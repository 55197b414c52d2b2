"""Independent oracles used across the test suite.

Everything here is recomputed directly from the 8-cell joint distribution
pr(D=d, X=i, E=j) with plain loops, or by finite differences of exact
expectations at high precision (mpmath).  Nothing imports the package's
formula implementations, so agreement is evidence rather than tautology.
"""

import math

import mpmath


def _sigmoid(eta):
    if eta >= 0:
        return 1.0 / (1.0 + math.exp(-eta))
    e = math.exp(eta)
    return e / (1.0 + e)


def joint_cells(alpha, beta, gamma, theta, pi):
    """pr(D=d, X=i, E=j) for all 8 cells, keyed (d, i, j)."""
    cells = {}
    for i in (0, 1):
        for j in (0, 1):
            w = (theta if i else 1.0 - theta) * (pi if j else 1.0 - pi)
            p = _sigmoid(alpha + beta * i + gamma * j)
            cells[(1, i, j)] = p * w
            cells[(0, i, j)] = (1.0 - p) * w
    return cells


def enum_prevalence(alpha, beta, gamma, theta, pi):
    cells = joint_cells(alpha, beta, gamma, theta, pi)
    return sum(v for (d, _, _), v in cells.items() if d == 1)


def enum_retro_probs(alpha, beta, gamma, theta, pi):
    """(p_case, p_ctrl) dicts keyed (i, j): pr(X=i, E=j | D=d)."""
    cells = joint_cells(alpha, beta, gamma, theta, pi)
    f = enum_prevalence(alpha, beta, gamma, theta, pi)
    p_case = {(i, j): cells[(1, i, j)] / f for i in (0, 1) for j in (0, 1)}
    p_ctrl = {(i, j): cells[(0, i, j)] / (1.0 - f) for i in (0, 1) for j in (0, 1)}
    return p_case, p_ctrl


def enum_marginal_logor(alpha, beta, gamma, theta, pi):
    """Population log odds ratio of the collapsed (D, E) margin."""
    p_case, p_ctrl = enum_retro_probs(alpha, beta, gamma, theta, pi)
    p1 = p_case[(0, 1)] + p_case[(1, 1)]
    p0 = p_ctrl[(0, 1)] + p_ctrl[(1, 1)]
    return math.log(p1 / (1.0 - p1)) - math.log(p0 / (1.0 - p0))


def case_control_masses(alpha, beta, gamma, theta, pi, nu):
    """Expected per-unit cell masses under the case-control design.

    Cases carry total mass nu/(1+nu), controls 1/(1+nu); keyed (d, i, j).
    """
    p_case, p_ctrl = enum_retro_probs(alpha, beta, gamma, theta, pi)
    m = {}
    for i in (0, 1):
        for j in (0, 1):
            m[(1, i, j)] = nu / (1.0 + nu) * p_case[(i, j)]
            m[(0, i, j)] = 1.0 / (1.0 + nu) * p_ctrl[(i, j)]
    return m


def enum_sigma_M(alpha, beta, gamma, theta, pi, nu):
    """Woolf variance of the collapsed log odds ratio, per unit n."""
    p_case, p_ctrl = enum_retro_probs(alpha, beta, gamma, theta, pi)
    p1 = p_case[(0, 1)] + p_case[(1, 1)]
    p0 = p_ctrl[(0, 1)] + p_ctrl[(1, 1)]
    return (1.0 + nu) / nu / (p1 * (1.0 - p1)) + (1.0 + nu) / (p0 * (1.0 - p0))


def enum_sigma_A(alpha, beta, gamma, theta, pi, nu):
    """Gart's stratified variance: harmonic sum over covariate strata."""
    m = case_control_masses(alpha, beta, gamma, theta, pi, nu)
    total = 0.0
    for i in (0, 1):
        inv = sum(1.0 / m[(d, i, j)] for d in (0, 1) for j in (0, 1))
        total += 1.0 / inv
    return 1.0 / total


def enum_sigma_AC(alpha, beta, gamma, theta, pi, nu, dps=30):
    """Constrained-MLE variance of the exposure coefficient, per unit n.

    Fisher information as an mpmath finite-difference Hessian of the
    expected retrospective log-likelihood in (beta, gamma, theta, pi),
    with the intercept profiled out of the prevalence constraint by
    root-finding at every evaluation.  Slow but formula-free.
    """
    with mpmath.workdps(dps):
        al0 = mpmath.mpf(repr(alpha))
        s0 = [mpmath.mpf(repr(v)) for v in (beta, gamma, theta, pi)]
        nu_mp = mpmath.mpf(repr(nu))

        def expit(x):
            return 1 / (1 + mpmath.exp(-x))

        def prev(al, be, ga, th, p):
            tot = mpmath.mpf(0)
            for i in (0, 1):
                for j in (0, 1):
                    w = (th if i else 1 - th) * (p if j else 1 - p)
                    tot += expit(al + be * i + ga * j) * w
            return tot

        f_sup = prev(al0, *s0)
        masses = {}
        for i in (0, 1):
            for j in (0, 1):
                w = (s0[2] if i else 1 - s0[2]) * (s0[3] if j else 1 - s0[3])
                p = expit(al0 + s0[0] * i + s0[1] * j)
                masses[(1, i, j)] = nu_mp / (1 + nu_mp) * p * w / f_sup
                masses[(0, i, j)] = 1 / (1 + nu_mp) * (1 - p) * w / (1 - f_sup)

        def loglik(be, ga, th, p):
            al = mpmath.findroot(lambda a: prev(a, be, ga, th, p) - f_sup, al0)
            tot = mpmath.mpf(0)
            for (d, i, j), mass in masses.items():
                w = (th if i else 1 - th) * (p if j else 1 - p)
                pd = expit(al + be * i + ga * j)
                if d == 1:
                    q = nu_mp / (1 + nu_mp) * pd * w / f_sup
                else:
                    q = 1 / (1 + nu_mp) * (1 - pd) * w / (1 - f_sup)
                tot += mass * mpmath.log(q)
            return tot

        info = mpmath.matrix(4, 4)
        for k in range(4):
            for l in range(k, 4):
                orders = [0, 0, 0, 0]
                orders[k] += 1
                orders[l] += 1
                val = -mpmath.diff(loglik, tuple(s0), tuple(orders))
                info[k, l] = info[l, k] = val
        rhs = mpmath.matrix([0, 1, 0, 0])
        sol = mpmath.lu_solve(info, rhs)
        return float(sol[1])


def fd_derivative(fn, x, h=1e-6):
    return (fn(x + h) - fn(x - h)) / (2.0 * h)
