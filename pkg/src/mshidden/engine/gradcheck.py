"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from .tensor import DTYPE, Tape, Tensor, reference_precision


def finite_diff_check(op: Callable[..., Tensor], inputs: Sequence[np.ndarray], h: float = 1e-3,
                      seed: int = 0, indices: Optional[Sequence[int]] = None) -> float:
    """Max relative error between tape gradients and central differences.

    The op output is reduced to a scalar with a fixed random projection so
    every output element contributes. ``indices`` restricts which inputs are
    checked (all by default). Error per coordinate is
    ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.

    The analytic gradient comes from an f32 pass. The central differences are
    taken in f64: f32 forward rounding divided by ``2h`` is ~1e-3 at h=1e-3,
    which would swamp the comparison.
    """
    base = [np.array(x, dtype=DTYPE) for x in inputs]
    check = list(range(len(base)) if indices is None else indices)
    tensors = [Tensor(a) for a in base]

    with Tape() as tape:
        tape.watch(*tensors)
        out = op(*tensors)
    proj = np.random.default_rng(seed).standard_normal(out.shape)
    analytic = tape.gradient(out, [tensors[i] for i in check], seed=proj.astype(DTYPE))

    wide = [a.astype(np.float64) for a in base]

    def objective() -> float:
        with reference_precision():
            y = op(*[Tensor(a) for a in wide]).data
        return float(np.sum(y * proj))

    worst = 0.0
    for grad, i in zip(analytic, check):
        flat = wide[i].reshape(-1)
        gflat = grad.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            up = objective()
            flat[j] = orig - h
            down = objective()
            flat[j] = orig
            numeric = (up - down) / (2 * h)
            a = float(gflat[j])
            worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    return worst


def param_grad_check(loss: Callable[[], Tensor], params: Sequence[Tensor], h: float = 1e-6,
                     samples: Optional[int] = None, seed: int = 0) -> float:
    """Max relative error of d(loss)/d(params) against central differences.

    ``loss`` is re-evaluated with each parameter coordinate nudged in place.
    Everything runs in f64 for the duration of the check; the parameters'
    original arrays are restored afterwards. ``samples`` limits the check to
    that many random coordinates per parameter (all when ``None``).

    The small default step is safe in f64 and rarely straddles a ReLU kink;
    at 1e-4 a deep network trips over one every few thousand coordinates.
    """
    saved = [p.data for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    try:
        with reference_precision():
            for p in params:
                p.data = p.data.astype(np.float64)
            with Tape() as tape:
                out = loss()
            grads = tape.gradient(out, list(params))
            for p, g in zip(params, grads):
                flat = p.data.reshape(-1)
                coords = np.arange(flat.size)
                if samples is not None and samples < flat.size:
                    coords = rng.choice(flat.size, size=samples, replace=False)
                gflat = g.reshape(-1)
                for j in coords:
                    orig = flat[j]
                    flat[j] = orig + h
                    up = loss().item()
                    flat[j] = orig - h
                    down = loss().item()
                    flat[j] = orig
                    numeric = (up - down) / (2 * h)
                    a = float(gflat[j])
                    worst = max(worst, abs(a - numeric) / max(1.0, abs(a), abs(numeric)))
    finally:
        for p, data in zip(params, saved):
            p.data = data
    return worst
