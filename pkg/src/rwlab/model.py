"""Transition kernels for a walk in a dynamical i.i.d. environment.

A kernel is a free-walk law ``p0`` on a finite displacement support plus an
environment perturbation ``c[u, s]``. At a site whose environment shows state
``s`` the walker jumps by ``u`` with probability ``p0[u] + c[u, s]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

PASS_TOL = 1e-10

CONDITIONS = (
    "p0-normalized",
    "prob-bounds",
    "c-zero-sum",
    "pi-mean-zero",
    "constant-drift",
)


class ModelError(ValueError):
    """Structurally malformed model (shapes, labels, dimensions)."""


class InvalidModelError(ValueError):
    """A well-formed model that fails one of the kernel conditions."""


@dataclass(frozen=True)
class EnvAlphabet:
    states: tuple[str, ...]

    def __post_init__(self):
        states = tuple(str(s) for s in self.states)
        if not states:
            raise ModelError("alphabet must contain at least one state")
        if len(set(states)) != len(states):
            raise ModelError(f"duplicate state labels in {list(states)}")
        object.__setattr__(self, "states", states)

    def __len__(self):
        return len(self.states)

    def index(self, s: str) -> int:
        try:
            return self.states.index(s)
        except ValueError:
            raise ModelError(f"unknown state label {s!r}") from None


@dataclass(frozen=True)
class EnvLaw:
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ModelError("environment law must be a nonempty vector")
        if np.any(p < 0) or np.any(p > 1):
            raise ModelError("environment probabilities must lie in [0, 1]")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ModelError(f"environment probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True)
class Kernel:
    """Free law ``p0`` and perturbation ``c`` over a lexicographic support.

    ``support`` has shape (K, n); ``p0`` shape (K,); ``c`` shape (K, S).
    Rows are reordered into lexicographic order on construction.
    """

    support: np.ndarray
    p0: np.ndarray
    c: np.ndarray

    def __post_init__(self):
        sup = np.array(self.support, dtype=np.int64)
        if sup.ndim == 1:
            sup = sup[:, None]
        if sup.ndim != 2 or sup.shape[0] == 0 or sup.shape[1] == 0:
            raise ModelError("support must be a nonempty list of integer vectors")
        p0 = np.array(self.p0, dtype=float)
        c = np.array(self.c, dtype=float)
        if c.ndim == 1:
            c = c[:, None]
        k = sup.shape[0]
        if p0.shape != (k,):
            raise ModelError(f"p0 has {p0.size} entries, support has {k}")
        if c.ndim != 2 or c.shape[0] != k:
            raise ModelError(f"c has shape {c.shape}, expected ({k}, |S|)")
        order = np.lexsort(sup.T[::-1])
        sup, p0, c = sup[order], p0[order], c[order]
        if np.any(np.all(sup[1:] == sup[:-1], axis=1)):
            raise ModelError("support displacements must be distinct")
        for a in (sup, p0, c):
            a.setflags(write=False)
        object.__setattr__(self, "support", sup)
        object.__setattr__(self, "p0", p0)
        object.__setattr__(self, "c", c)

    @property
    def dim(self) -> int:
        return self.support.shape[1]

    @property
    def n_states(self) -> int:
        return self.c.shape[1]

    def rows(self) -> np.ndarray:
        """All per-state kernels, shape (S, K)."""
        return (self.p0[:, None] + self.c).T


@dataclass(frozen=True)
class Model:
    """Everything needed to define the walk: alphabet, law and kernel."""

    alphabet: EnvAlphabet
    law: EnvLaw
    kernel: Kernel
    name: str = ""

    def __post_init__(self):
        if len(self.alphabet) != len(self.law):
            raise ModelError(
                f"alphabet has {len(self.alphabet)} states, law has {len(self.law)}"
            )
        if self.kernel.n_states != len(self.alphabet):
            raise ModelError(
                f"c has {self.kernel.n_states} columns, alphabet has "
                f"{len(self.alphabet)} states"
            )

    @property
    def dim(self) -> int:
        return self.kernel.dim

    @cached_property
    def validation(self) -> ValidationReport:
        return validate_kernel(self.kernel, self.law, self.alphabet)

    @cached_property
    def derived(self) -> DerivedModel:
        return derive_model(self.kernel, self.law)

    def row(self, s) -> np.ndarray:
        return row_kernel(self.kernel, s, self.alphabet)


@dataclass(frozen=True)
class Check:
    condition: str
    passed: bool
    max_violation: float
    offender: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "max_violation", float(self.max_violation))

    def as_dict(self):
        return {
            "condition": self.condition,
            "pass": self.passed,
            "max_violation": self.max_violation,
            "offender": None if self.offender is None else list(self.offender),
        }


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[Check, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return all(ch.passed for ch in self.checks)

    def failed(self) -> list[str]:
        return [ch.condition for ch in self.checks if not ch.passed]

    def __getitem__(self, condition: str) -> Check:
        for ch in self.checks:
            if ch.condition == condition:
                return ch
        raise KeyError(condition)

    def as_dict(self):
        return {"ok": self.ok, "checks": [ch.as_dict() for ch in self.checks]}


@dataclass(frozen=True)
class DerivedModel:
    b0: np.ndarray
    bc: np.ndarray
    b: np.ndarray
    pbar: np.ndarray
    eta2: np.ndarray

    def as_dict(self):
        return {k: getattr(self, k).tolist() for k in ("b0", "bc", "b", "pbar", "eta2")}


def _disp(u) -> tuple[int, ...]:
    return tuple(int(v) for v in u)


def validate_kernel(kernel: Kernel, law: EnvLaw, alphabet: EnvAlphabet | None = None):
    """Evaluate the five kernel conditions.

    Raises ModelError when the shapes are inconsistent; a condition that does
    not hold is reported as a failed check, not raised.
    """
    if kernel.n_states != len(law):
        raise ModelError(
            f"c has {kernel.n_states} columns but the law has {len(law)} states"
        )
    labels = alphabet.states if alphabet is not None else tuple(range(len(law)))
    sup, p0, c, pi = kernel.support, kernel.p0, kernel.c, law.probs
    checks = []

    neg = np.maximum(-p0, 0.0)
    norm_err = abs(p0.sum() - 1.0)
    viol = max(norm_err, neg.max())
    offender = (_disp(sup[int(np.argmax(neg))]),) if neg.max() > 0 else None
    checks.append(Check("p0-normalized", viol <= PASS_TOL, float(viol), offender))

    rows = p0[:, None] + c
    excess = np.maximum(np.maximum(-rows, rows - 1.0), 0.0)
    k, s = np.unravel_index(int(np.argmax(excess)), excess.shape)
    viol = float(excess[k, s])
    offender = (_disp(sup[k]), labels[s]) if viol > 0 else None
    checks.append(Check("prob-bounds", viol <= PASS_TOL, viol, offender))

    colsum = np.abs(c.sum(axis=0))
    s = int(np.argmax(colsum))
    viol = float(colsum[s])
    checks.append(
        Check("c-zero-sum", viol <= PASS_TOL, viol, (labels[s],) if viol > PASS_TOL else None)
    )

    avg = np.abs(c @ pi)
    k = int(np.argmax(avg))
    viol = float(avg[k])
    checks.append(
        Check("pi-mean-zero", viol <= PASS_TOL, viol, (_disp(sup[k]),) if viol > PASS_TOL else None)
    )

    drifts = c.T @ sup  # (S, n): sum_u u c(u, s)
    spread = np.abs(drifts - drifts[0]).max(axis=1)
    s = int(np.argmax(spread))
    viol = float(spread[s])
    checks.append(
        Check("constant-drift", viol <= PASS_TOL, viol, (labels[s],) if viol > PASS_TOL else None)
    )
    return ValidationReport(tuple(checks))


def derive_model(kernel: Kernel, law: EnvLaw) -> DerivedModel:
    report = validate_kernel(kernel, law)
    if not report.ok:
        raise InvalidModelError(
            "kernel fails condition(s): " + ", ".join(report.failed())
        )
    sup = kernel.support.astype(float)
    b0 = sup.T @ kernel.p0
    bc = sup.T @ kernel.c[:, 0]
    b = b0 + bc
    pbar = kernel.p0 + kernel.c @ law.probs
    centered = sup - b
    m = (centered * pbar[:, None]).T @ centered
    eta2 = 0.5 * (m + m.T)
    # pi-mean-zero forces these; a failure here means the checks above are wrong
    assert np.all(np.abs(bc) <= PASS_TOL), bc
    assert np.all(np.abs(pbar - kernel.p0) <= PASS_TOL)
    for a in (b0, bc, b, pbar, eta2):
        a.setflags(write=False)
    return DerivedModel(b0=b0, bc=bc, b=b, pbar=pbar, eta2=eta2)


def row_kernel(kernel: Kernel, s, alphabet: EnvAlphabet | None = None) -> np.ndarray:
    """Jump law at a site in state ``s`` (a label if ``alphabet`` given, else an index)."""
    if alphabet is not None:
        i = alphabet.index(s)
    else:
        i = int(s)
        if not 0 <= i < kernel.n_states:
            raise ModelError(f"unknown state index {s!r}")
    return kernel.p0 + kernel.c[:, i]


def step_covariances(kernel: Kernel, b) -> np.ndarray:
    """Per-state second moments of ``u - b``, shape (S, n, n)."""
    centered = kernel.support.astype(float) - np.asarray(b, dtype=float)
    rows = kernel.rows()
    return np.einsum("sk,ki,kj->sij", rows, centered, centered)
