"""Hamiltonians on the truncated basis, exact and interaction-picture
evolution, truncated Dyson series, and S-matrix extraction.

All matrices here are dense; the basis is the registry's enumerated
truncated basis (capped at ``dim_cap``).
"""
from __future__ import annotations

from dataclasses import dataclass, field
import math
import re
from typing import Sequence

import numpy as np
from scipy import sparse

from .errors import AccuracyError, ConvergenceError, ModelError, RegistryError
from .fock import DEFAULT_DIM_CAP, BasisState, Mode, Registry, StateVector

HERMITIAN_TOL = 1e-12
DEFAULT_EPSILON = 0.05


@dataclass(frozen=True)
class Term:
    """``coupling * a^{(†)}(m_1) ... a^{(†)}(m_k)``; ``ops`` lists
    ``(mode, dagger)`` left to right as written."""

    coupling: complex
    ops: tuple

    def __post_init__(self):
        object.__setattr__(self, "coupling", complex(self.coupling))
        object.__setattr__(self, "ops", tuple((m, bool(d)) for m, d in self.ops))

    def adjoint(self) -> "Term":
        return Term(self.coupling.conjugate(), tuple((m, not d) for m, d in reversed(self.ops)))

    def __str__(self):
        ops = " ".join(f"{m}{'^' if d else ''}" for m, d in self.ops)
        return f"({self.coupling:g}) {ops}"


def parse_ops(text: str, registry: Registry) -> tuple:
    """Parse ``"Ps^ Q^ Pu"``-style operator strings.

    Each factor is ``species[p1,p2,...]@spin`` with optional momentum and
    spin parts and a trailing ``^`` for a creation operator. Species ids
    may contain ``^`` (``mu^c``); only a final ``^`` marks creation.
    """
    pat = re.compile(r"^(?P<sp>[^\[\]@\s]+?)(?:\[(?P<mom>[-\d,\s]*)\])?(?:@(?P<spin>-?\d+))?(?P<dag>\^)?$")
    ops = []
    for tok in text.split():
        m = pat.match(tok)
        if not m:
            raise ModelError(f"cannot parse operator factor {tok!r}")
        mom = (0,)
        if m.group("mom"):
            mom = tuple(int(p) for p in m.group("mom").split(",") if p.strip())
        mode = Mode(m.group("sp"), mom, int(m.group("spin") or 0))
        registry.check_mode(mode)
        ops.append((mode, bool(m.group("dag"))))
    if not ops:
        raise ModelError("empty operator string")
    return tuple(ops)


class InteractionModel:
    """``H = H0 + H1`` on a registry's truncated basis.

    ``H0 = sum_m omega_m n_m`` from ``free_terms``; ``H1`` is the sum of
    ``interaction_terms``. Missing Hermitian-conjugate terms are added
    (``hermitize=True``); a term list that still fails to give a Hermitian
    ``H1`` raises ``ModelError`` when the Hamiltonians are built.
    """

    def __init__(self, registry: Registry, free_terms: Sequence = (), interaction_terms: Sequence = (),
                 switching_epsilon: float = DEFAULT_EPSILON, dim_cap: int = DEFAULT_DIM_CAP,
                 t_schedule: Sequence[float] | None = None, hermitize: bool = True, name: str = ""):
        self.registry = registry
        self.name = name
        self.free_terms = tuple((m, float(w)) for m, w in free_terms)
        for m, _ in self.free_terms:
            registry.check_mode(m)
        terms = [t if isinstance(t, Term) else Term(*t) for t in interaction_terms]
        for t in terms:
            for m, _ in t.ops:
                registry.check_mode(m)
        if hermitize:
            present = {t.ops for t in terms}
            extra = []
            for t in terms:
                adj = t.adjoint()
                if adj.ops not in present:
                    extra.append(adj)
                    present.add(adj.ops)
            terms += extra
        self.interaction_terms = tuple(terms)
        if switching_epsilon < 0:
            raise ModelError("switching_epsilon must be nonnegative")
        self.switching_epsilon = float(switching_epsilon)
        self.dim_cap = int(dim_cap)
        self.t_schedule = tuple(float(t) for t in t_schedule) if t_schedule else None
        self._cache: dict = {}

    def __repr__(self):
        return (f"InteractionModel({self.name or 'unnamed'}, dim={self.registry.dimension()}, "
                f"terms={len(self.interaction_terms)}, eps={self.switching_epsilon})")

    @property
    def basis(self) -> tuple:
        return self.registry.basis(self.dim_cap)

    def with_coupling_scale(self, factor: float) -> "InteractionModel":
        """Copy with every coupling multiplied by ``factor``."""
        terms = [Term(t.coupling * factor, t.ops) for t in self.interaction_terms]
        return InteractionModel(self.registry, self.free_terms, terms, self.switching_epsilon,
                                self.dim_cap, self.t_schedule, hermitize=False, name=self.name)

    def hamiltonians(self):
        if "H" not in self._cache:
            self._cache["H"] = _build(self)
        return self._cache["H"]

    def eig(self):
        """Cached eigendecomposition of the full ``H``."""
        if "eig" not in self._cache:
            H0, H1 = self.hamiltonians()
            self._cache["eig"] = np.linalg.eigh(H0 + H1)
        return self._cache["eig"]

    def charge_conserving(self) -> bool:
        reg = self.registry
        for t in self.interaction_terms:
            q = sum((1 if d else -1) * reg.species[m.species].charge for m, d in t.ops)
            if q != 0:
                return False
        return True


def _build(model: InteractionModel):
    reg = model.registry
    basis = reg.basis(model.dim_cap)
    dim = len(basis)
    occ = reg.occupation_table(model.dim_cap)
    diag = np.zeros(dim)
    for m, w in model.free_terms:
        diag += w * occ[:, reg.check_mode(m)]
    H0 = np.diag(diag).astype(complex)
    H1s = sparse.csr_matrix((dim, dim), dtype=complex)
    for t in model.interaction_terms:
        op = sparse.identity(dim, dtype=complex, format="csr")
        for m, d in t.ops:
            op = op @ reg.ladder_matrix(m, d, model.dim_cap)[0]
        H1s = H1s + t.coupling * op
    H1 = H1s.toarray()
    scale = max(1.0, float(np.abs(H1).max(initial=0.0)))
    if np.abs(H1 - H1.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ModelError("interaction terms do not assemble to a Hermitian H1 "
                         "(conjugate term present with mismatched coupling, or a "
                         "self-adjoint operator string with a non-real coupling)")
    H1 = 0.5 * (H1 + H1.conj().T)
    return H0, H1


def build_hamiltonians(model: InteractionModel):
    """Return ``(H0, H1)`` as dense matrices on ``model.basis``."""
    H0, H1 = model.hamiltonians()
    return H0.copy(), H1.copy()


def _check_hermitian(H):
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ModelError("Hamiltonian must be a square matrix")
    scale = max(1.0, float(np.abs(H).max(initial=0.0)))
    if np.abs(H - H.conj().T).max(initial=0.0) > HERMITIAN_TOL * scale:
        raise ModelError("Hamiltonian is not Hermitian")
    return H


def propagator(H, t: float, eig=None) -> np.ndarray:
    """``exp(-i H t)`` by Hermitian eigendecomposition."""
    if eig is None:
        H = _check_hermitian(H)
        eig = np.linalg.eigh(H)
    w, V = eig
    return (V * np.exp(-1j * w * t)) @ V.conj().T


def evolve_exact(H, t: float, s, basis=None):
    """Apply ``exp(-i H t)`` to a state.

    ``s`` may be a dense vector or a ``StateVector``; for the latter the
    result is again a ``StateVector`` (``basis`` defaults to the state's
    registry basis).
    """
    U = propagator(H, t)
    if isinstance(s, StateVector):
        reg = s.registry
        basis = reg.basis(max(DEFAULT_DIM_CAP, U.shape[0])) if basis is None else basis
        index = {b: i for i, b in enumerate(basis)}
        vec = s.to_dense(index)
        return StateVector.from_dense(U @ vec, reg, basis)
    return U @ np.asarray(s)


def interaction_picture_U(model: InteractionModel, tau0: float, tau: float) -> np.ndarray:
    """``exp(i H0 tau) exp(-i H (tau - tau0)) exp(-i H0 tau0)``."""
    H0, _ = model.hamiltonians()
    e0 = np.real(np.diag(H0))
    full = propagator(None, tau - tau0, eig=model.eig())
    return (np.exp(1j * e0 * tau)[:, None] * full) * np.exp(-1j * e0 * tau0)[None, :]


def unitarity_defect(U) -> float:
    U = np.asarray(U)
    return float(np.linalg.norm(U.conj().T @ U - np.eye(U.shape[0]), 2))


# -- Dyson series -------------------------------------------------------------

def _dyson_terms(H1, e0, order, tau0, tau, n_steps):
    """Ordered-simplex integrals ``D_n(tau)``, ``n = 0..order``, by iterated
    midpoint quadrature with ``n_steps`` intervals."""
    dim = H1.shape[0]
    h = (tau - tau0) / n_steps
    omega = e0[:, None] - e0[None, :]
    eye = np.eye(dim, dtype=complex)
    D = [eye.copy()] + [np.zeros((dim, dim), dtype=complex) for _ in range(order)]
    chunk = max(1, min(n_steps, (1 << 21) // max(1, dim * dim)))
    for start in range(0, n_steps, chunk):
        stop = min(start + chunk, n_steps)
        mids = tau0 + (np.arange(start, stop) + 0.5) * h
        Hm = H1[None, :, :] * np.exp(1j * omega[None, :, :] * mids[:, None, None])
        # D_{n-1} at the left grid point of each interval, and its midpoint estimate
        left_prev = np.broadcast_to(eye, Hm.shape)
        mid_prev = left_prev
        for n in range(1, order + 1):
            incr = h * (Hm @ mid_prev)
            left_n = D[n][None] + np.concatenate(
                [np.zeros((1, dim, dim), dtype=complex), np.cumsum(incr[:-1], axis=0)])
            mid_n = left_n + 0.5 * h * (Hm @ mid_prev)
            D[n] = D[n] + incr.sum(axis=0)
            mid_prev = mid_n
    return D


def dyson_truncated(model: InteractionModel, order: int, tau0: float, tau: float,
                    step: float | None = None, tol: float = 1e-8, check: bool = True) -> np.ndarray:
    """Order-``order`` Dyson approximant of ``interaction_picture_U``.

    ``I + sum_{n<=order} (-i)^n * int_{tau0 < t_n < ... < t_1 < tau}
    H1(t_1) ... H1(t_n)`` with ``H1(t) = exp(i H0 t) H1 exp(-i H0 t)``.

    The step defaults to one that bounds the first-order midpoint error by
    ``tol``. With ``check`` the result is compared against a run at twice
    the step; if the Richardson estimate of the quadrature error exceeds
    ``tol`` an ``AccuracyError`` is raised.
    """
    if not 0 <= order <= 4:
        raise ValueError("order must be between 0 and 4")
    H0, H1 = model.hamiltonians()
    dim = H0.shape[0]
    if order == 0 or tau == tau0:
        return np.eye(dim, dtype=complex)
    e0 = np.real(np.diag(H0))
    length = abs(tau - tau0)
    connected = np.abs(H1) > 0
    spread = float(np.abs(e0[:, None] - e0[None, :])[connected].max(initial=0.0))
    h1norm = float(np.linalg.norm(H1, 2))
    if step is None:
        if spread == 0.0 or h1norm == 0.0:
            n_steps = 2
        else:
            step = math.sqrt(24.0 * tol / (spread ** 2 * length * h1norm))
            n_steps = max(2, math.ceil(length / step))
    else:
        n_steps = max(2, math.ceil(length / step))
    n_steps += n_steps % 2
    if n_steps > 4_000_000:
        raise AccuracyError(f"Dyson quadrature needs {n_steps} steps for tol={tol}")
    D = _dyson_terms(H1, e0, order, tau0, tau, n_steps)
    out = sum(((-1j) ** n) * D[n] for n in range(order + 1))
    if check:
        D2 = _dyson_terms(H1, e0, order, tau0, tau, n_steps // 2)
        coarse = sum(((-1j) ** n) * D2[n] for n in range(order + 1))
        err = float(np.abs(out - coarse).max()) / 3.0
        if err > tol:
            raise AccuracyError(f"estimated Dyson quadrature error {err:.3g} exceeds tol={tol:.3g}; "
                                f"use a smaller step (current {length / n_steps:.3g})")
    return out


# -- S-matrix -----------------------------------------------------------------

@dataclass(frozen=True)
class SMatrix:
    entries: np.ndarray
    basis_index: tuple
    unitarity_defect: float
    registry: Registry | None = None
    T: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if len(self.basis_index) != self.entries.shape[0] or self.entries.shape[0] != self.entries.shape[1]:
            raise ValueError("S-matrix shape does not match its basis index")
        object.__setattr__(self, "_index", {b: i for i, b in enumerate(self.basis_index)})

    def index(self, b: BasisState) -> int:
        try:
            return self._index[b]
        except KeyError:
            raise RegistryError(f"{b} is not in the S-matrix basis") from None

    def recompute_defect(self) -> float:
        return unitarity_defect(self.entries)

    def component(self, b: BasisState, tol: float = 1e-12) -> tuple:
        """Basis states linked to ``b`` through nonzero entries, in basis order."""
        A = np.abs(self.entries) > tol
        A = A | A.T
        seen = {self.index(b)}
        frontier = list(seen)
        while frontier:
            nxt = set(np.flatnonzero(A[frontier].any(axis=0)).tolist()) - seen
            seen |= nxt
            frontier = sorted(nxt)
        return tuple(self.basis_index[i] for i in sorted(seen))

    def block(self, states) -> "SMatrix":
        """Restriction to ``states``; unitary when they form a component."""
        idx = np.array([self.index(b) for b in states])
        sub = self.entries[np.ix_(idx, idx)]
        return SMatrix(sub, tuple(states), unitarity_defect(sub), self.registry, self.T,
                       dict(self.diagnostics, restricted=True))

    def out_state(self, in_state) -> StateVector:
        """``S |in>`` for a basis state or ``StateVector``."""
        if isinstance(in_state, BasisState):
            col = self.entries[:, self.index(in_state)]
        else:
            vec = np.zeros(len(self.basis_index), dtype=complex)
            for b, a in in_state.items():
                vec[self.index(b)] = a
            col = self.entries @ vec
        return StateVector.from_dense(col, self.registry, self.basis_index)


def transition_probability(S: SMatrix, alpha: BasisState, beta: BasisState) -> float:
    return float(abs(S.entries[S.index(beta), S.index(alpha)]) ** 2)


def _expm_stack(Hs, h):
    """``exp(-i h H_k)`` for a stack of Hermitian matrices."""
    w, V = np.linalg.eigh(Hs)
    return (V * np.exp(-1j * h * w)[:, None, :]) @ np.conj(np.swapaxes(V, -1, -2))


def _ordered_product(Us):
    """``Us[-1] @ ... @ Us[0]`` by pairwise reduction."""
    while Us.shape[0] > 1:
        if Us.shape[0] % 2:
            tail = Us[-1:]
            Us = Us[:-1]
        else:
            tail = None
        Us = Us[1::2] @ Us[0::2]
        if tail is not None:
            Us = np.concatenate([Us, tail])
    return Us[0]


_G = math.sqrt(3.0) / 6.0


def _switched_propagator(H0, H1, C, eps, t_start, n_steps, dt):
    """Full-picture propagator over ``[t_start, t_start + n_steps*dt]`` for
    ``H(t) = H0 + exp(-eps|t|) H1``, fourth-order Magnus steps."""
    dim = H0.shape[0]
    result = np.eye(dim, dtype=complex)
    chunk = max(1, min(n_steps, (1 << 21) // max(1, dim * dim)))
    for start in range(0, n_steps, chunk):
        stop = min(start + chunk, n_steps)
        left = t_start + np.arange(start, stop) * dt
        f1 = np.exp(-eps * np.abs(left + (0.5 - _G) * dt))
        f2 = np.exp(-eps * np.abs(left + (0.5 + _G) * dt))
        # i*Omega/dt, Hermitian
        Heff = (H0[None] + (0.5 * (f1 + f2))[:, None, None] * H1[None]
                - 1j * (math.sqrt(3.0) / 12.0) * dt * (f1 - f2)[:, None, None] * C[None])
        Us = _expm_stack(Heff, dt)
        result = _ordered_product(Us) @ result
    return result


def extract_s_matrix(model: InteractionModel, T: float, schedule: Sequence[float] | None = None,
                     dt: float = 0.1, tol: float = 1e-9) -> SMatrix:
    """Approximate ``U(+inf, -inf)`` by ``U(T, -T)`` with the coupling
    switched as ``exp(-eps|t|)``.

    The evolution is repeated over an increasing schedule of half-widths
    (default ``T, 1.5T, 2T``, or the model's ``t_schedule``) on a shared
    time grid. The first half-width whose extension changes no entry by
    more than ``tol`` is accepted; otherwise ``ConvergenceError`` carries
    the per-step changes.
    """
    eps = model.switching_epsilon
    H0, H1 = model.hamiltonians()
    dim = H0.shape[0]
    key = ("S", float(T), tuple(schedule) if schedule else None, dt, tol)
    if key in model._cache:
        return model._cache[key]
    if not np.any(H1):
        S = SMatrix(np.eye(dim, dtype=complex), model.basis, 0.0, model.registry, float(T),
                    {"schedule": [float(T)], "changes": []})
        model._cache[key] = S
        return S
    if eps <= 0:
        raise ConvergenceError("adiabatic switching needs switching_epsilon > 0")
    if schedule is None:
        schedule = model.t_schedule or (T, 1.5 * T, 2.0 * T)
    steps = sorted({max(1, round(float(t) / dt)) for t in schedule if t >= T} | {max(1, round(T / dt))})
    C = H0 @ H1 - H1 @ H0
    e0 = np.real(np.diag(H0))

    def to_interaction(U, half):
        phase = np.exp(1j * e0 * half)
        return phase[:, None] * U * phase[None, :]

    U = _switched_propagator(H0, H1, C, eps, -steps[0] * dt, 2 * steps[0], dt)
    prev = to_interaction(U, steps[0] * dt)
    changes = []
    for k in range(1, len(steps)):
        extra = steps[k] - steps[k - 1]
        right = _switched_propagator(H0, H1, C, eps, steps[k - 1] * dt, extra, dt)
        left = _switched_propagator(H0, H1, C, eps, -steps[k] * dt, extra, dt)
        U = right @ U @ left
        cur = to_interaction(U, steps[k] * dt)
        change = float(np.abs(cur - prev).max())
        changes.append(change)
        if change < tol:
            S = SMatrix(cur, model.basis, unitarity_defect(cur), model.registry, steps[k] * dt,
                        {"schedule": [s * dt for s in steps[:k + 1]], "changes": changes})
            model._cache[key] = S
            return S
        prev = cur
    raise ConvergenceError(
        f"S-matrix did not stabilise to {tol:g} over T schedule {[s * dt for s in steps]}",
        {"schedule": [s * dt for s in steps], "changes": changes, "epsilon": eps})
