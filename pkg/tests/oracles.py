"""Independent reference computations used by the tests."""
from decimal import Decimal, localcontext

import numpy as np

EULER_50 = Decimal("0.57721566490153286060651209008240243104215933593992")


def e1_series(x: float, digits: int = 50) -> float:
    """E1 from its convergent power series in high-precision decimal arithmetic."""
    with localcontext() as ctx:
        ctx.prec = digits + 40  # cancellation for large x eats leading digits
        xd = Decimal(x)
        total, term, k = Decimal(0), Decimal(1), 1
        while True:
            term *= -xd / k
            add = term / k
            total += add
            if k > 10 and abs(add) < Decimal(10) ** (-(digits + 20)):
                break
            k += 1
        return float(-EULER_50 - xd.ln() - total)


def grid_decay_fit(a, p, rounds: int = 12, width: int = 41):
    """Minimise the L1 log misfit of ``c exp(-s p)`` by successively refined grids."""
    y = np.log(np.asarray(a, dtype=float))
    p = np.asarray(p, dtype=float)
    lc, s = 0.0, 0.0
    span_c, span_s = 50.0, 20.0
    for _ in range(rounds):
        gc = lc + np.linspace(-span_c, span_c, width)
        gs = s + np.linspace(-span_s, span_s, width)
        mis = np.abs(y[None, None, :] - gc[:, None, None] + gs[None, :, None] * p[None, None, :]).sum(-1)
        i, j = np.unravel_index(np.argmin(mis), mis.shape)
        lc, s = gc[i], gs[j]
        span_c *= 4 / width
        span_s *= 4 / width
    return float(np.exp(lc)), float(s)
