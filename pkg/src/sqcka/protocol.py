"""One-round state machine and session runner for the GHZ reflection protocol.

One fully quantum sender (Alice) shares a GHZ-type state with n receivers
who either reflect their qubit (CTRL rounds, used for eavesdropping tests)
or measure-and-resend in the computational basis (SIFT rounds, producing
raw-key bits).  The per-round basis choice Theta is modeled as a classical
bit shared by all parties through the pre-agreed schedule; every branch the
statistics depend on has it measured, so the simulated distributions are
unchanged.

Rounds can be evaluated three ways, all agreeing to 1e-10:

* exact statevector simulation of a dilated attack (environment unitaries),
* exact statevector simulation from an analytic attack via a minimal
  purifying environment built from the Eve Gram,
* closed-form statistics straight from the attack tables.

Register order in exact simulation: A (sender qubit), T (transferring
qubits), B (receivers' memory, SIFT only), then forward and backward
environment registers.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from . import qmath
from .attacks import CollectiveAttack
from .estimation import TallyCounts
from .qmath import (
    CapacityError,
    DIM_CAP,
    DomainError,
    RegisterLayout,
    StateVector,
    ValidationError,
    apply_on_subsystems,
    basis_state,
    bits_to_index,
    complement_index,
    subsystem_probabilities,
    tensor_all,
)

SQRT_HALF = 1.0 / math.sqrt(2.0)


@dataclass(frozen=True)
class ProtocolParams:
    """Session-level parameters; transmission is fixed at 1 (no qubit loss)."""

    n: int
    exact_sim_enabled: bool = True
    transmission: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"need at least one receiver, got n={self.n}")
        if self.transmission != 1.0:
            raise DomainError("lossy transmission is not modeled; transmission must be 1")


@dataclass(frozen=True)
class ThetaSchedule:
    """Which rounds are CTRL (reflection) rounds, as 1-based indices."""

    num_rounds: int
    ctrl_indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(j) for j in self.ctrl_indices)
        if list(idx) != sorted(set(idx)):
            raise ValidationError("ctrl_indices must be strictly increasing")
        if idx and not (1 <= idx[0] and idx[-1] <= self.num_rounds):
            raise ValidationError("ctrl_indices outside 1..num_rounds")
        object.__setattr__(self, "ctrl_indices", idx)

    @property
    def num_ctrl(self) -> int:
        return len(self.ctrl_indices)

    def theta(self, j: int) -> int:
        """Round basis bit: 0 = CTRL (reflect), 1 = SIFT (measure-resend)."""
        return 0 if j in set(self.ctrl_indices) else 1


@dataclass(frozen=True, slots=True)
class RoundOutcome:
    """Recorded results of one round; only fields for the round type are set.

    Bit strings are stored as big-endian integer indices.
    """

    theta: int
    ghz_pass: int | None = None
    alice_bit: int | None = None
    alice_t: int | None = None
    bob_bits: int | None = None


@dataclass(frozen=True)
class SessionRecord:
    """Everything a finished session produced."""

    params: ProtocolParams
    outcomes: tuple[RoundOutcome, ...]
    tallies: TallyCounts
    raw_key_alice: np.ndarray
    raw_key_bobs: np.ndarray


@dataclass(frozen=True)
class ObservedStatistics:
    """Exact per-round observables for one Theta branch.

    CTRL rounds fill ``p_ghz``, ``ctrl_az`` (joint sender-bit/returned-string
    distribution), the per-branch ``branch_norms`` (= 2 * ctrl_az) and the
    per-branch ``re_overlap``.  SIFT rounds fill ``abc_joint`` (sender bit,
    receivers' string, returned string), its marginals and the
    global-convention ``cross_overlap`` of the two all-equal Eve branches.
    """

    theta: int
    n: int
    pa: np.ndarray
    p_ghz: float | None = None
    ctrl_az: np.ndarray | None = None
    branch_norms: np.ndarray | None = None
    re_overlap: float | None = None
    abc_joint: np.ndarray | None = None
    az_joint: np.ndarray | None = None
    pb: np.ndarray | None = None
    cross_overlap: float | None = None


# ---------------------------------------------------------------------------
# state preparation and local operations
# ---------------------------------------------------------------------------


def prepare_ghz(num_qubits: int, x: int, y) -> StateVector:
    """GHZ-type state (|0,y> + (-1)^x |1,~y>)/sqrt(2) on num_qubits qubits."""
    if num_qubits < 2:
        raise DomainError(f"GHZ-type states need >= 2 qubits, got {num_qubits}")
    n = num_qubits - 1
    if len(y) != n:
        raise DomainError(f"y has length {len(y)}, expected {n}")
    y_idx = bits_to_index(y)
    amps = np.zeros(1 << num_qubits, dtype=np.complex128)
    amps[y_idx] = SQRT_HALF
    amps[(1 << n) + complement_index(y_idx, n)] = SQRT_HALF * (-1.0 if x else 1.0)
    return StateVector(amps)


def bob_operation(theta_bit: int, n: int) -> np.ndarray:
    """Receivers' joint action on T x B as a unitary matrix.

    Theta = 0: identity (reflection).  Theta = 1: for every string b, copy
    |b>_T into the memory register by the involution |0...0>_B <-> |b>_B,
    which extends the measure-and-resend copy to a full unitary.
    """
    d = 1 << n
    if theta_bit == 0:
        return np.eye(d * d, dtype=np.complex128)
    u = np.zeros((d * d, d * d), dtype=np.complex128)
    for t in range(d):
        for bb in range(d):
            if bb == 0:
                src = t
            elif bb == t:
                src = 0
            else:
                src = bb
            u[t * d + src, t * d + bb] = 1.0
    return u


def _sender_slices(state: StateVector, layout: RegisterLayout) -> np.ndarray:
    """Amplitudes reshaped with (A, T) moved to the front axes."""
    psi = state.amps.reshape(layout.dims)
    return np.moveaxis(psi, (layout.axis("A"), layout.axis("T")), (0, 1))


def alice_ghz_projection(state: StateVector, layout: RegisterLayout
                         ) -> tuple[float, StateVector | None]:
    """Project (A, T) onto the all-zero GHZ-type state; CTRL-round test.

    Returns the pass probability and the renormalized post-state (None when
    the branch weight is numerically zero).
    """
    d = layout.dims[layout.axis("T")]
    psi = _sender_slices(state, layout)
    branch = (psi[0, 0] + psi[1, d - 1]) * SQRT_HALF
    p = float(np.vdot(branch, branch).real)
    p = min(max(p, 0.0), 1.0)
    if p <= qmath.NULL_PROB:
        return p, None
    post = np.zeros_like(psi)
    post[0, 0] = branch * (SQRT_HALF / math.sqrt(p))
    post[1, d - 1] = branch * (SQRT_HALF / math.sqrt(p))
    post = np.moveaxis(post, (0, 1), (layout.axis("A"), layout.axis("T")))
    return p, StateVector(post.reshape(-1))


def alice_z_measurement(state: StateVector, layout: RegisterLayout) -> np.ndarray:
    """Joint Z-basis distribution p(a, c) over the sender qubit and T."""
    return subsystem_probabilities(state, layout, ("A", "T"))


# ---------------------------------------------------------------------------
# exact round evolution
# ---------------------------------------------------------------------------


def _env_labels(prefix: str, dims: tuple[int, ...]) -> tuple[str, ...]:
    return tuple(f"{prefix}{i + 1}" for i in range(len(dims)))


def _dilated_round_state(attack: CollectiveAttack, theta: int
                         ) -> tuple[StateVector, RegisterLayout]:
    n, d = attack.n, attack.d
    fwd, bwd = attack.forward_dilation, attack.backward_dilation
    fwd_labels = _env_labels("E", fwd.env_dims)
    bwd_labels = _env_labels("Et", bwd.env_dims)
    pairs = [("A", 2), ("T", d)]
    if theta == 1:
        pairs.append(("B", d))
    pairs += list(zip(fwd_labels, fwd.env_dims)) + list(zip(bwd_labels, bwd.env_dims))
    layout = RegisterLayout(pairs)
    if layout.total_dim > DIM_CAP:
        raise CapacityError(f"round state dim {layout.total_dim} exceeds cap {DIM_CAP}")

    parts = [prepare_ghz(n + 1, 0, "0" * n)]
    if theta == 1:
        parts.append(basis_state(d, 0))
    parts.append(StateVector(fwd.env_state))
    parts.append(StateVector(bwd.env_state))
    psi = tensor_all(parts)

    fwd_targets = ("T",) + tuple(fwd_labels[i] for i in fwd.env_targets)
    psi = apply_on_subsystems(fwd.unitary, psi, layout, fwd_targets)
    if theta == 1:
        psi = apply_on_subsystems(bob_operation(1, n), psi, layout, ("T", "B"))
    bwd_targets = ("T",) + tuple(bwd_labels[i] for i in bwd.env_targets)
    psi = apply_on_subsystems(bwd.unitary, psi, layout, bwd_targets)
    return psi, layout


def _gram_vectors(gram: np.ndarray, d: int) -> np.ndarray:
    """Embed unit Eve vectors consistent with the Gram; shape (2, d, d, K)."""
    flat = gram.reshape(2 * d * d, 2 * d * d)
    w, u = np.linalg.eigh(flat)
    if w.min() < -1e-9:
        raise ValidationError(f"gram is not PSD (min eig {w.min():.3e})")
    keep = w > 1e-12
    m = (np.sqrt(w[keep])[:, None] * u[:, keep].conj().T)  # (K, 2 d^2)
    return np.ascontiguousarray(m.T).reshape(2, d, d, m.shape[0])


#: Tolerance on the reflected-branch norm when checking that tables + gram
#: describe a channel a unitary dilation can realize.
CTRL_CONSISTENCY_ATOL = 1e-9


def _embedded_round_state(attack: CollectiveAttack, theta: int
                          ) -> tuple[StateVector, RegisterLayout]:
    n, d = attack.n, attack.d
    vecs = _gram_vectors(attack.gram, d)
    k = vecs.shape[-1]
    coef = np.sqrt(np.einsum("ab,abc->abc", attack.tables.forward,
                             attack.tables.backward)) * SQRT_HALF
    if theta == 1:
        amps = np.einsum("abc,abck->acbk", coef, vecs)
        layout = RegisterLayout([("A", 2), ("T", d), ("B", d), ("EV", k)])
    else:
        amps = np.einsum("abc,abck->ack", coef, vecs)
        layout = RegisterLayout([("A", 2), ("T", d), ("EV", k)])
    if layout.total_dim > DIM_CAP:
        raise CapacityError(f"round state dim {layout.total_dim} exceeds cap {DIM_CAP}")
    flat = amps.reshape(-1)
    nrm2 = float(np.vdot(flat, flat).real)
    if abs(nrm2 - 1.0) > CTRL_CONSISTENCY_ATOL:
        raise ValidationError(
            f"tables and gram admit no unitary round: branch mass {nrm2!r} != 1 "
            "(cross-branch overlaps must vanish under the return-string sum)")
    return StateVector(flat / math.sqrt(nrm2)), layout


def statistics_from_state(state: StateVector, layout: RegisterLayout,
                          theta: int) -> ObservedStatistics:
    """All round observables, read off an exact final state."""
    d = layout.dims[layout.axis("T")]
    n = d.bit_length() - 1
    if theta == 1:
        joint = subsystem_probabilities(state, layout, ("A", "B", "T"))
        az = joint.sum(axis=1)
        psi = state.amps.reshape(layout.dims)
        psi = np.moveaxis(psi, (layout.axis("A"), layout.axis("B"), layout.axis("T")),
                          (0, 1, 2))
        cross = complex(np.vdot(psi[0, 0, 0].ravel(), psi[1, d - 1, d - 1].ravel()))
        return ObservedStatistics(theta=1, n=n, pa=az.sum(axis=1),
                                  abc_joint=joint, az_joint=az,
                                  pb=joint.sum(axis=(0, 2)),
                                  cross_overlap=float(cross.real))
    ctrl_az = subsystem_probabilities(state, layout, ("A", "T"))
    psi = _sender_slices(state, layout)
    branch = (psi[0, 0] + psi[1, d - 1]) * SQRT_HALF
    p_ghz = float(np.vdot(branch, branch).real)
    re_tilde = 2.0 * float(np.vdot(psi[0, 0], psi[1, d - 1]).real)
    return ObservedStatistics(theta=0, n=n, pa=ctrl_az.sum(axis=1),
                              p_ghz=p_ghz, ctrl_az=ctrl_az,
                              branch_norms=2.0 * ctrl_az, re_overlap=re_tilde)


def run_round_exact(params: ProtocolParams, attack: CollectiveAttack, theta: int
                    ) -> tuple[StateVector, RegisterLayout, ObservedStatistics]:
    """Exact quantum evolution of one round: prepare, forward noise,
    receivers' action, backward noise; statistics of the final measurement.

    Prefers the dilated form of the attack; otherwise synthesizes a minimal
    purifying environment from the Eve Gram.  Raises
    :class:`~sqcka.qmath.CapacityError` when the state would exceed the cap,
    at which point callers fall back to the analytic tables.
    """
    if params.n != attack.n:
        raise ValidationError(f"params n={params.n} != attack n={attack.n}")
    if not params.exact_sim_enabled:
        raise ValidationError("exact simulation disabled in params")
    if theta not in (0, 1):
        raise DomainError(f"theta must be 0 or 1, got {theta}")
    if attack.has_dilation:
        state, layout = _dilated_round_state(attack, theta)
    elif attack.has_analytic:
        state, layout = _embedded_round_state(attack, theta)
    else:
        raise ValidationError("attack has neither dilated nor analytic form")
    return state, layout, statistics_from_state(state, layout, theta)


def forward_conditionals_exact(attack: CollectiveAttack) -> np.ndarray:
    """p(b|a) read off the dilated forward leg alone (before any return)."""
    fwd = attack.forward_dilation
    if fwd is None:
        raise ValidationError("attack has no forward dilation")
    n, d = attack.n, attack.d
    labels = _env_labels("E", fwd.env_dims)
    layout = RegisterLayout([("A", 2), ("T", d)] + list(zip(labels, fwd.env_dims)))
    psi = tensor_all([prepare_ghz(n + 1, 0, "0" * n), StateVector(fwd.env_state)])
    psi = apply_on_subsystems(fwd.unitary, psi, layout,
                              ("T",) + tuple(labels[i] for i in fwd.env_targets))
    return 2.0 * subsystem_probabilities(psi, layout, ("A", "T"))


def backward_conditionals_exact(attack: CollectiveAttack) -> np.ndarray:
    """p'(b'|b) of the dilated return leg, per input string b.

    The return environment is fresh, so the dilated form cannot depend on
    the sender bit; the result is a (d, d) stochastic matrix.
    """
    bwd = attack.backward_dilation
    if bwd is None:
        raise ValidationError("attack has no backward dilation")
    d = attack.d
    labels = _env_labels("Et", bwd.env_dims)
    layout = RegisterLayout([("T", d)] + list(zip(labels, bwd.env_dims)))
    targets = ("T",) + tuple(labels[i] for i in bwd.env_targets)
    out = np.zeros((d, d))
    for b in range(d):
        psi = tensor_all([basis_state(d, b), StateVector(bwd.env_state)])
        psi = apply_on_subsystems(bwd.unitary, psi, layout, targets)
        out[b] = subsystem_probabilities(psi, layout, ("T",))
    return out


def eve_branch_gram_exact(state: StateVector, layout: RegisterLayout) -> np.ndarray:
    """Unnormalized overlaps of Eve's branch vectors, from a SIFT-round state.

    Rows/columns follow the flat (a, b, b') index; the diagonal carries the
    global-convention squared norms.
    """
    for lab in ("A", "B", "T"):
        layout.axis(lab)
    d = layout.dims[layout.axis("T")]
    psi = state.amps.reshape(layout.dims)
    psi = np.moveaxis(psi, (layout.axis("A"), layout.axis("B"), layout.axis("T")),
                      (0, 1, 2))
    vecs = psi.reshape(2 * d * d, -1)
    return vecs @ vecs.conj().T


# ---------------------------------------------------------------------------
# analytic round statistics
# ---------------------------------------------------------------------------


def round_statistics(attack: CollectiveAttack, theta: int) -> ObservedStatistics:
    """Round observables straight from the attack tables and Eve Gram."""
    if not attack.has_analytic:
        raise ValidationError("analytic statistics need tables and gram")
    if theta not in (0, 1):
        raise DomainError(f"theta must be 0 or 1, got {theta}")
    n, d = attack.n, attack.d
    fwd = attack.tables.forward
    bwd = attack.tables.backward
    gram = attack.gram
    if theta == 1:
        joint = np.einsum("ab,abc->abc", fwd, bwd) / 2.0
        az = joint.sum(axis=1)
        w000 = joint[0, 0, 0]
        w111 = joint[1, d - 1, d - 1]
        cross = math.sqrt(w000 * w111) * gram[0, 0, 0, 1, d - 1, d - 1]
        return ObservedStatistics(theta=1, n=n, pa=az.sum(axis=1),
                                  abc_joint=joint, az_joint=az,
                                  pb=joint.sum(axis=(0, 2)),
                                  cross_overlap=float(cross))
    # reflection branch: coherent over b inside Eve's register
    amp = np.sqrt(np.einsum("ab,abc->abc", fwd, bwd))  # (2, d, d) over (a, b, c)
    q_ac = np.zeros((2, d))
    for a in range(2):
        g4 = gram[a, :, :, a, :, :]  # (b, c, b', c')
        g_diag = np.diagonal(g4, axis1=1, axis2=3)  # (b, b', c)
        q_ac[a] = np.einsum("bc,pc,bpc->c", amp[a], amp[a], g_diag)
    mass_dev = float(np.max(np.abs(q_ac.sum(axis=1) - 1.0)))
    if mass_dev > CTRL_CONSISTENCY_ATOL:
        raise ValidationError(
            f"tables and gram admit no unitary round: reflected branch mass "
            f"deviates from 1 by {mass_dev:.3e}")
    s0 = amp[0, :, 0]
    s1 = amp[1, :, d - 1]
    re_tilde = float(s0 @ gram[0, :, 0, 1, :, d - 1] @ s1)
    p_ghz = (q_ac[0, 0] + q_ac[1, d - 1] + 2.0 * re_tilde) / 4.0
    ctrl_az = q_ac / 2.0
    return ObservedStatistics(theta=0, n=n, pa=ctrl_az.sum(axis=1),
                              p_ghz=float(p_ghz), ctrl_az=ctrl_az,
                              branch_norms=q_ac, re_overlap=re_tilde)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


class RoundSampler:
    """Draws round outcomes from the exact per-round distributions.

    Prefers analytic statistics; falls back to one exact simulation per
    Theta branch for dilated-only attacks.
    """

    def __init__(self, attack: CollectiveAttack,
                 params: ProtocolParams | None = None):
        params = params or ProtocolParams(n=attack.n)
        if attack.has_analytic:
            sift = round_statistics(attack, 1)
            ctrl = round_statistics(attack, 0)
        else:
            _, _, sift = run_round_exact(params, attack, 1)
            _, _, ctrl = run_round_exact(params, attack, 0)
        self.n = attack.n
        self.d = attack.d
        self.p_ghz = float(ctrl.p_ghz)
        self.sift_stats = sift
        self.ctrl_stats = ctrl
        self._sift_cum = self._cumulative(sift.abc_joint)
        self._ctrl_cum = self._cumulative(ctrl.ctrl_az)

    @staticmethod
    def _cumulative(table: np.ndarray) -> np.ndarray:
        cum = np.cumsum(np.asarray(table, dtype=np.float64).ravel())
        return cum / cum[-1]

    def sample_sift(self, rng: np.random.Generator) -> tuple[int, int, int]:
        """One (sender bit, receivers' string, returned string) draw."""
        idx = int(np.searchsorted(self._sift_cum, rng.random(), side="right"))
        a, rest = divmod(idx, self.d * self.d)
        b, c = divmod(rest, self.d)
        return a, b, c

    def sample_ctrl_ghz(self, rng: np.random.Generator) -> int:
        return int(rng.random() < self.p_ghz)

    def sample_ctrl_ztest(self, rng: np.random.Generator) -> tuple[int, int]:
        idx = int(np.searchsorted(self._ctrl_cum, rng.random(), side="right"))
        return divmod(idx, self.d)


def sample_round(params: ProtocolParams, attack: CollectiveAttack, theta: int,
                 rng: np.random.Generator, ctrl_kind: str = "ghz") -> RoundOutcome:
    """Draw one round outcome from the exact distribution.

    CTRL rounds are GHZ tests by default; pass ``ctrl_kind="ztest"`` for the
    cut-and-choose Z measurement.  Sessions share one
    :class:`RoundSampler`; this convenience front-end builds a fresh one.
    """
    sampler = RoundSampler(attack, params)
    return _sample_with(sampler, theta, rng, ctrl_kind)


def _sample_with(sampler: RoundSampler, theta: int, rng: np.random.Generator,
                 ctrl_kind: str = "ghz") -> RoundOutcome:
    if theta == 1:
        a, b, c = sampler.sample_sift(rng)
        return RoundOutcome(theta=1, alice_bit=a, alice_t=c, bob_bits=b)
    if ctrl_kind == "ghz":
        return RoundOutcome(theta=0, ghz_pass=sampler.sample_ctrl_ghz(rng))
    if ctrl_kind == "ztest":
        a, c = sampler.sample_ctrl_ztest(rng)
        return RoundOutcome(theta=0, alice_bit=a, alice_t=c)
    raise DomainError(f"unknown ctrl_kind {ctrl_kind!r}")


# ---------------------------------------------------------------------------
# schedule expansion
# ---------------------------------------------------------------------------


def default_ctrl_count(num_rounds: int) -> int:
    """Default CTRL budget: ceil(sqrt(N)) rounds."""
    return math.isqrt(max(num_rounds, 0) - 1) + 1 if num_rounds > 0 else 0


class _XofStream:
    """Deterministic 64-bit stream from SHAKE-256 over a seed."""

    def __init__(self, seed: bytes):
        self._xof = hashlib.shake_256(seed)
        self._buf = b""
        self._len = 0
        self._pos = 0

    def next_u64(self) -> int:
        if self._pos + 8 > self._len:
            self._len = max(1024, self._len * 2)
            self._buf = self._xof.digest(self._len)
        out = int.from_bytes(self._buf[self._pos:self._pos + 8], "big")
        self._pos += 8
        return out

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection sampling."""
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % bound


def _seed_bytes(seed) -> bytes:
    if isinstance(seed, bytes):
        return seed
    if isinstance(seed, str):
        return seed.encode("utf-8")
    if isinstance(seed, (int, np.integer)):
        v = int(seed)
        width = max(1, (v.bit_length() + 8) // 8)
        return v.to_bytes(width, "big", signed=True)
    raise DomainError(f"cannot derive schedule seed from {type(seed).__name__}")


def expand_theta_schedule(seed, num_rounds: int, num_ctrl: int | None = None
                          ) -> ThetaSchedule:
    """Deterministically choose the CTRL round indices from a shared seed.

    All parties expand the same seed to the same schedule.  ``num_ctrl``
    defaults to ceil(sqrt(N)).  Selection is a partial Fisher-Yates shuffle
    driven by a SHAKE-256 stream, so any seed-holding party reproduces it.
    """
    if num_rounds < 0:
        raise DomainError(f"negative round count {num_rounds}")
    if num_ctrl is None:
        num_ctrl = default_ctrl_count(num_rounds)
    if num_ctrl > num_rounds:
        raise DomainError(f"num_ctrl {num_ctrl} exceeds num_rounds {num_rounds}")
    stream = _XofStream(_seed_bytes(seed))
    pool = np.arange(1, num_rounds + 1, dtype=np.int64)
    for i in range(num_ctrl):
        j = i + stream.below(num_rounds - i)
        pool[i], pool[j] = pool[j], pool[i]
    return ThetaSchedule(num_rounds=num_rounds,
                         ctrl_indices=tuple(sorted(int(x) for x in pool[:num_ctrl])))


# ---------------------------------------------------------------------------
# session runner
# ---------------------------------------------------------------------------


def run_session(params: ProtocolParams, attack: CollectiveAttack,
                schedule: ThetaSchedule, rng,
                cut_and_choose_fraction: float = 0.1) -> SessionRecord:
    """Run a full session: sampled rounds, tallies, raw keys.

    CTRL rounds alternate GHZ test / Z cut-and-choose test by their position
    in the schedule (even positions test GHZ).  The given fraction of SIFT
    rounds is publicly disclosed for parameter estimation and excluded from
    the raw keys.  Each round consumes its own seeded stream derived from
    the session seed and the round index, so results do not depend on
    evaluation order.
    """
    if not 0.0 <= cut_and_choose_fraction < 1.0:
        raise DomainError(f"cut-and-choose fraction {cut_and_choose_fraction} "
                          "outside [0, 1)")
    if isinstance(rng, np.random.Generator):
        base = int(rng.integers(0, 1 << 62))
    else:
        base = int(rng)
    sampler = RoundSampler(attack, params)
    n = attack.n
    ctrl_rank = {j: pos for pos, j in enumerate(schedule.ctrl_indices)}
    tallies = TallyCounts(n=n)
    outcomes: list[RoundOutcome] = []
    key_a: list[int] = []
    key_b: list[int] = []
    for j in range(1, schedule.num_rounds + 1):
        g = np.random.default_rng([base, j])
        pos = ctrl_rank.get(j)
        if pos is not None:
            kind = "ghz" if pos % 2 == 0 else "ztest"
            out = _sample_with(sampler, 0, g, kind)
            if kind == "ghz":
                tallies.ghz_total += 1
                tallies.ghz_pass += out.ghz_pass
            else:
                tallies.z_ctrl_counts[out.alice_bit, out.alice_t] += 1
        else:
            out = _sample_with(sampler, 1, g)
            if g.random() < cut_and_choose_fraction:
                tallies.sift_joint_counts[out.alice_bit, out.bob_bits] += 1
                tallies.sift_total += 1
            else:
                key_a.append(out.alice_bit)
                key_b.append(out.bob_bits)
        outcomes.append(out)
    raw_a = np.array(key_a, dtype=np.uint8)
    if key_b:
        b_idx = np.array(key_b, dtype=np.int64)
        shifts = np.arange(n - 1, -1, -1)
        raw_b = ((b_idx[None, :] >> shifts[:, None]) & 1).astype(np.uint8)
    else:
        raw_b = np.zeros((n, 0), dtype=np.uint8)
    return SessionRecord(params=params, outcomes=tuple(outcomes), tallies=tallies,
                         raw_key_alice=raw_a, raw_key_bobs=raw_b)
