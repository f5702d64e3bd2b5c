"""Log-gamma and regularized incomplete gamma functions.

Scalar implementations used by the scaled chi-square model. The incomplete
gamma follows the usual series / continued-fraction split at ``x = a + 1``.
"""

import math

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10000

# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def ln_gamma(x):
    """Natural log of the gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0.0 or math.isinf(x):
        raise ValueError(f"ln_gamma requires a finite positive argument, got {x!r}")
    if x < 0.5:
        # reflection keeps the series in its accurate range
        return math.log(math.pi / math.sin(math.pi * x)) - ln_gamma(1.0 - x)
    z = x - 1.0
    acc = _LANCZOS_COEF[0]
    for i, c in enumerate(_LANCZOS_COEF[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(acc)


def _check_args(a, x):
    a = float(a)
    x = float(x)
    if not a > 0.0 or math.isinf(a):
        raise ValueError(f"shape parameter must be finite and positive, got {a!r}")
    if not x >= 0.0:
        raise ValueError(f"argument must be nonnegative, got {x!r}")
    return a, x


def _series(a, x):
    # P(a, x) by the power series; converges quickly for x < a + 1
    ap = a
    term = 1.0 / a
    total = term
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma series did not converge (a={a}, x={x})")
    return total * math.exp(-x + a * math.log(x) - ln_gamma(a))


def _continued_fraction(a, x):
    # Q(a, x) by modified Lentz evaluation
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    else:
        raise ArithmeticError(f"incomplete gamma fraction did not converge (a={a}, x={x})")
    return math.exp(-x + a * math.log(x) - ln_gamma(a)) * h


def regularized_lower_incomplete_gamma(a, x):
    """P(a, x) = gamma(a, x) / Gamma(a)."""
    a, x = _check_args(a, x)
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < a + 1.0:
        return _series(a, x)
    return 1.0 - _continued_fraction(a, x)


def regularized_upper_incomplete_gamma(a, x):
    """Q(a, x) = 1 - P(a, x), computed without cancellation in the upper tail."""
    a, x = _check_args(a, x)
    if x == 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < a + 1.0:
        return 1.0 - _series(a, x)
    return _continued_fraction(a, x)
