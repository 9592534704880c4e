"""Finite-difference audit of every analytic gradient the front-end relies on."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from . import tensor as T
from .frontend import (FAMILIES, DownsampleSpec, WindowSpec, frontend_forward,
                       spectrum_mask_grad_s, spectrum_mask_values, window_grad_m, window_values)
from .model import build_backbone
from .tensor import Tensor

__all__ = ["CheckResult", "run_checks", "MASK_TOL", "LOSS_TOL", "OP_TOL"]

MASK_TOL = 1e-4
LOSS_TOL = 1e-3
OP_TOL = 1e-4
CASES = 20
H = 1e-5
N = 256
NB = N // 2 + 1


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel: float
    tol: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.max_rel < self.tol


def _rel(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / scale)


def _central(f: Callable[[float], np.ndarray], v: float) -> np.ndarray:
    return (np.asarray(f(v + H)) - np.asarray(f(v - H))) / (2 * H)


class _Kink(Exception):
    """A ReLU switched inside the difference stencil; the case is redrawn."""


def _smooth_central(f: Callable[[float], float], v: float) -> float:
    hi, mid, lo = f(v + H), f(v), f(v - H)
    if abs(hi - 2 * mid + lo) > 1e-2 * max(abs(hi - lo), 1e-12):
        raise _Kink
    return (hi - lo) / (2 * H)


def _retry(case: Callable[[], float], cases: int) -> float:
    worst, done, tries = 0.0, 0, 0
    while done < cases:
        tries += 1
        if tries > 10 * cases:
            raise RuntimeError("gradcheck: too many non-smooth cases")
        try:
            worst = max(worst, case())
        except _Kink:
            continue
        done += 1
    return worst


def _off_grid(rng, lo, hi) -> float:
    # half-integers are where the discrete support (or a ramp end) jumps
    return float(rng.integers(lo, hi)) + rng.uniform(-0.4, 0.4)


def _window_length(family, rng, lo, hi) -> float:
    if family == "gaussian":
        # its support |n - c| <= m/2 changes at even m
        return 2.0 * rng.integers(lo // 2, hi // 2) + 1.0 + rng.uniform(-0.8, 0.8)
    return _off_grid(rng, lo, hi)


def _window_check(family, rng, corrupt):
    worst = 0.0
    for _ in range(CASES):
        spec = WindowSpec(family, _window_length(family, rng, 20, N - 5), N)
        analytic = window_grad_m(spec) * corrupt
        fd = _central(lambda m: window_values(replace(spec, m=m)), spec.m)
        worst = max(worst, _rel(analytic, fd))
    return worst


def _spectral_check(rng, corrupt):
    worst = 0.0
    for _ in range(CASES):
        r = float(rng.integers(1, 16))
        spec = DownsampleSpec(_off_grid(rng, int(r) + 2, NB - int(r) - 2) + 0.5, r, NB, 16000.0)
        analytic = spectrum_mask_grad_s(spec) * corrupt
        fd = _central(lambda s: spectrum_mask_values(replace(spec, s=s)), spec.s)
        worst = max(worst, _rel(analytic, fd))
    return worst


def _end_to_end_check(family, rng, corrupt):
    net = build_backbone(3, seed=int(rng.integers(2**31)))

    def case():
        x = rng.standard_normal((2, N))
        labels = rng.integers(0, 3, 2)
        ws = WindowSpec(family, _window_length(family, rng, 180, N - 5), N)
        ds = DownsampleSpec(_off_grid(rng, 20, NB - 10) + 0.5, 8.0, NB, 16000.0)

        def loss(m, s):
            with T.no_grad():
                y, valid = frontend_forward(Tensor(x), replace(ws, m=m), replace(ds, s=s), mask="soft")
                return T.nll_loss(net(y, valid), labels).item()

        mt = Tensor(ws.m, requires_grad=True)
        st = Tensor(ds.s, requires_grad=True)
        with T.Tape():
            y, valid = frontend_forward(Tensor(x), ws, ds, mask="soft", m=mt, s=st)
            T.backward(T.nll_loss(net(y, valid), labels))
        for p in net.params:
            p.tensor.grad = None
        analytic = np.array([mt.grad, st.grad], dtype=float) * corrupt
        fd = np.array([_smooth_central(lambda m: loss(m, ds.s), ws.m),
                       _smooth_central(lambda s: loss(ws.m, s), ds.s)])
        return _rel(analytic, fd)

    return _retry(case, CASES)


def _backbone_ops_check(rng, corrupt):
    """Weight and input gradients of the classifier on random entries."""

    def case():
        worst = 0.0
        net = build_backbone(4, seed=int(rng.integers(2**31)))
        x = rng.standard_normal((2, 300))
        valid = np.zeros(300, bool)
        lo = int(rng.integers(0, 100))
        valid[lo : lo + int(rng.integers(60, 200))] = True
        labels = rng.integers(0, 4, 2)
        xt = Tensor(x, requires_grad=True)
        with T.Tape():
            T.backward(T.nll_loss(net(xt, valid), labels))
        targets = [(p.tensor, p.tensor.grad) for p in net.params] + [(xt, xt.grad)]
        for t, grad in targets:
            flat = t.data.reshape(-1)
            picks = rng.choice(flat.size, 4, replace=False)
            analytic, fd = grad.reshape(-1)[picks] * corrupt, np.zeros(4)
            for j, i in enumerate(picks):
                orig = flat[i]

                def at(v):
                    flat[i] = v
                    with T.no_grad():
                        out = T.nll_loss(net(Tensor(x) if t is not xt else Tensor(xt.data), valid), labels).item()
                    flat[i] = orig
                    return out

                fd[j] = _smooth_central(at, orig)
            worst = max(worst, _rel(analytic, fd))
        return worst

    return _retry(case, 5)


def run_checks(seed: int = 0, corrupt: Optional[str] = None,
               report: Optional[Callable[[CheckResult], None]] = None) -> list:
    """Run every check; ``corrupt`` names one whose analytic gradient is scaled by 1.05.

    The corruption exists only so the suite can prove it detects a bad gradient.
    """
    rng = np.random.default_rng(seed)
    plan = [(f"window_{f}", MASK_TOL, CASES, lambda c, f=f: _window_check(f, rng, c)) for f in FAMILIES]
    plan.append(("spectral_mask", MASK_TOL, CASES, lambda c: _spectral_check(rng, c)))
    plan += [(f"end_to_end_{f}", LOSS_TOL, CASES, lambda c, f=f: _end_to_end_check(f, rng, c))
             for f in FAMILIES]
    plan.append(("backbone_ops", OP_TOL, 5, lambda c: _backbone_ops_check(rng, c)))
    names = [p[0] for p in plan]
    if corrupt is not None and corrupt not in names:
        raise ValueError(f"unknown check {corrupt!r}; choose from {names}")
    results = []
    for name, tol, cases, fn in plan:
        res = CheckResult(name, fn(1.05 if name == corrupt else 1.0), tol, cases)
        results.append(res)
        if report:
            report(res)
    return results
