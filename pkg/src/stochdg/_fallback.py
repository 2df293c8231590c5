"""Pure-numpy batched path engine.

Runs any scheme on any :class:`~stochdg.problems.ProblemSpec` whose callables
broadcast over a leading batch axis.  Failed paths (solver non-convergence,
singular skew matrices, leaving the admissible domain) are frozen and flagged
instead of aborting the batch.
"""

from __future__ import annotations

import numpy as np

from .errors import NonConvergenceError, SingularFormError
from .integrators import make_stepper

OK, NONCONVERGED, DOMAIN = 0, 1, 2


def _step_rows(stepper, x, h, dw, status, rows):
    """Step ``x[rows]``; rows that fail get a status code and are left untouched."""
    todo = rows
    while todo.size:
        try:
            x[todo] = stepper(x[todo], h, dw[todo])
            return
        except (NonConvergenceError, SingularFormError) as exc:
            if exc.rows is None:
                break
            code = NONCONVERGED if isinstance(exc, NonConvergenceError) else DOMAIN
            status[todo[exc.rows]] = code
            keep = np.ones(todo.size, dtype=bool)
            keep[exc.rows] = False
            todo = todo[keep]
    # an error without row information: isolate rows one at a time
    for i in todo:
        try:
            x[i] = stepper(x[i], h, dw[i])
        except NonConvergenceError:
            status[i] = NONCONVERGED
        except SingularFormError:
            status[i] = DOMAIN


def run_paths(spec, scheme, h, x0, increments):
    """Integrate ``P`` paths; ``increments`` has shape ``(P, m, n_steps)``.

    Returns ``(final, max_drift, step_sq, status)`` where ``max_drift`` is
    ``max_n |I(X_n) - I(X_0)|`` and ``step_sq`` the sum of squared per-step
    invariant increments, both per path.
    """
    increments = np.asarray(increments, dtype=float)
    n_paths, _, n_steps = increments.shape
    stepper = make_stepper(scheme, spec.problem, spec.form)
    inv = spec.problem.invariant
    x = np.tile(np.asarray(x0, dtype=float), (n_paths, 1))
    status = np.zeros(n_paths, dtype=np.int8)
    i0 = inv.value(x)
    prev = i0.copy()
    max_drift = np.zeros(n_paths)
    step_sq = np.zeros(n_paths)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j in range(n_steps):
            rows = np.flatnonzero(status == OK)
            if rows.size == 0:
                break
            start_rows, before = rows, x[rows].copy()
            _step_rows(stepper, x, h, increments[:, :, j], status, rows)
            rows = rows[status[rows] == OK]
            bad = ~spec.valid(x[rows])
            if np.any(bad):
                # a path that left the domain keeps its last admissible state
                x[rows[bad]] = before[np.searchsorted(start_rows, rows[bad])]
            status[rows[bad]] = DOMAIN
            rows = rows[~bad]
            cur = inv.value(x[rows])
            max_drift[rows] = np.maximum(max_drift[rows], np.abs(cur - i0[rows]))
            step_sq[rows] += (cur - prev[rows]) ** 2
            prev[rows] = cur
    return x, max_drift, step_sq, status
