"""The measured system: discrete levels of H0, sublevel energies of H1, and V."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Mapping

import numpy as np

from .errors import ParameterError

State = tuple  # (level index n, sublevel label alpha)


@dataclass(frozen=True)
class MeasuredSystemSpec:
    """Levels ``n -> omega_n``, sublevels ``n -> {alpha: E1(n, alpha)}``, couplings.

    ``v_elements`` maps ``((n, alpha), (m, beta))`` to ``<n alpha|V|m beta>``;
    the conjugate element is implied. ``lam`` is the detector coupling in
    ``H_I = lam * q * H0``. Energies are angular frequencies.
    """

    levels: Mapping[int, float]
    v_elements: Mapping[tuple, complex] = field(default_factory=dict)
    lam: float = 0.0
    sublevels: Mapping[int, Mapping[Hashable, float]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.levels:
            raise ParameterError("at least one level is required")
        if not (self.lam >= 0 and np.isfinite(self.lam)):
            raise ParameterError(f"lambda must be finite and nonnegative, got {self.lam!r}")
        for n in self.sublevels:
            if n not in self.levels:
                raise ParameterError(f"sublevels given for unknown level {n!r}")
        known = set(self.states())
        for (a, b), v in self.v_elements.items():
            if a not in known or b not in known:
                raise ParameterError(f"V element {(a, b)!r} refers to an unknown state")
            if a == b and v != 0:
                raise ParameterError(f"diagonal V element {(a, b)!r} must be zero")
            if (b, a) in self.v_elements and abs(self.v_elements[(b, a)] - np.conj(v)) > 1e-12 * max(1.0, abs(v)):
                raise ParameterError(f"V elements {(a, b)!r} and {(b, a)!r} are not Hermitian conjugates")

    @classmethod
    def two_level(cls, omega_i, omega_f, v, lam, e1_i=0.0, e1_f=0.0):
        """Levels 0 (initial) and 1 (final), one sublevel each, labelled 0."""
        return cls(
            levels={0: omega_i, 1: omega_f},
            v_elements={((0, 0), (1, 0)): complex(v)} if v != 0 else {},
            lam=lam,
            sublevels={0: {0: e1_i}, 1: {0: e1_f}},
        )

    def states(self):
        out = []
        for n in self.levels:
            subs = self.sublevels.get(n, {0: 0.0})
            out.extend((n, alpha) for alpha in subs)
        return out

    def index(self, state) -> int:
        try:
            return self.states().index(tuple(state))
        except ValueError:
            raise ParameterError(f"unknown state {state!r}") from None

    def omega(self, state) -> float:
        return float(self.levels[state[0]])

    def sublevel_energy(self, state) -> float:
        n, alpha = state
        return float(self.sublevels.get(n, {0: 0.0})[alpha])

    def v(self, a, b) -> complex:
        a, b = tuple(a), tuple(b)
        if (a, b) in self.v_elements:
            return complex(self.v_elements[(a, b)])
        if (b, a) in self.v_elements:
            return complex(np.conj(self.v_elements[(b, a)]))
        return 0j

    def transition_frequency(self, i, f) -> float:
        """``omega_{i alpha, f alpha1} = omega_if + E1(i, alpha) - E1(f, alpha1)``."""
        return self.omega(i) - self.omega(f) + self.sublevel_energy(i) - self.sublevel_energy(f)

    def h0_diagonal(self) -> np.ndarray:
        return np.array([self.omega(s) for s in self.states()])

    def v_matrix(self) -> np.ndarray:
        st = self.states()
        out = np.zeros((len(st), len(st)), dtype=complex)
        for x, a in enumerate(st):
            for y, b in enumerate(st):
                out[x, y] = self.v(a, b)
        return out

    def hamiltonian(self, include_v=True) -> np.ndarray:
        """``H0 + H1 (+ V)`` in the product basis of ``states()``."""
        st = self.states()
        h = np.diag([self.omega(s) + self.sublevel_energy(s) for s in st]).astype(complex)
        if include_v:
            h = h + self.v_matrix()
        return h
