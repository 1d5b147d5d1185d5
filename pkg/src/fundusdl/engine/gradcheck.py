"""Finite-difference gradient checking.

Test-only harness: analytic gradients from a backward pass are compared
against central differences (f(x+eps) - f(x-eps)) / (2 eps) at randomly
sampled coordinates. Run it on float64 copies of a network; float32 rounding
swamps the comparison otherwise.

The loss callable must be deterministic: stochastic layers (dropout) have to
re-derive their masks from a fixed seed on every call, or run in inference
mode.
"""

from dataclasses import dataclass, field

import numpy as np

__all__ = ["GradCheckReport", "check_gradients"]


@dataclass
class GradCheckReport:
    max_rel_error: float
    checked: int
    worst: tuple = ()
    failures: list = field(default_factory=list)

    def __str__(self):
        return (f"gradcheck: {self.checked} coords, "
                f"max rel err {self.max_rel_error:.3e}")


def _rel_error(analytic, numeric, atol):
    scale = max(abs(analytic), abs(numeric))
    if scale <= atol:
        return 0.0
    return abs(analytic - numeric) / scale


def check_gradients(loss_fn, pairs, eps=1e-3, n_samples=120, rng=None,
                    atol=1e-10, tol=None):
    """Compare analytic gradients against central differences.

    Args:
        loss_fn: zero-arg callable returning the scalar loss, recomputed from
            the live array values (the arrays in ``pairs`` are perturbed in
            place around each call).
        pairs: iterable of (name, array, analytic_grad) triples.
        eps: perturbation step.
        n_samples: total coordinates to sample across all arrays.
        atol: both gradients at or below this magnitude count as matching.
        tol: if given, coordinates with relative error above it are recorded
            in ``failures``.

    Returns a GradCheckReport.
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    pairs = [(name, a, g) for name, a, g in pairs]
    for name, a, g in pairs:
        if a.shape != g.shape:
            raise ValueError(f"{name}: grad shape {g.shape} != array {a.shape}")
        if a.dtype != np.float64:
            raise ValueError(f"{name}: gradient checks need float64 arrays")

    sizes = np.array([a.size for _, a, _ in pairs])
    total = int(sizes.sum())
    n = min(n_samples, total)
    flat_choice = rng.choice(total, size=n, replace=False)
    bounds = np.cumsum(sizes)

    max_err = 0.0
    worst = ()
    failures = []
    for flat in sorted(flat_choice):
        k = int(np.searchsorted(bounds, flat, side="right"))
        idx = int(flat - (bounds[k - 1] if k else 0))
        name, a, g = pairs[k]
        orig = a.flat[idx]
        a.flat[idx] = orig + eps
        f_plus = loss_fn()
        a.flat[idx] = orig - eps
        f_minus = loss_fn()
        a.flat[idx] = orig
        numeric = (f_plus - f_minus) / (2.0 * eps)
        analytic = float(g.flat[idx])
        err = _rel_error(analytic, numeric, atol)
        if err > max_err:
            max_err = err
            worst = (name, idx, analytic, numeric)
        if tol is not None and err > tol:
            failures.append((name, idx, analytic, numeric, err))
    return GradCheckReport(max_rel_error=max_err, checked=n, worst=worst,
                           failures=failures)
