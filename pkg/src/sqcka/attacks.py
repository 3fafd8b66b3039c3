"""Collective-attack models: channel tables, Eve-overlap data, dilations.

A one-round collective attack touches the transferring qubits twice (on the
way out and on the way back) and is described either

* analytically, by conditional-probability tables plus the Gram matrix of
  real overlaps among Eve's normalized post-interaction vectors, or
* exactly, by dilated unitaries acting on the transferring register and an
  explicit environment.

The depolarizing channel is fully built in, in both forms.  Overlap data
use the *global* normalization convention throughout this module: squared
norms are branch weights of the unnormalized post-round state and sum to 1
over all branches.  The per-branch convention used by the estimators is
exactly twice these values; conversion happens at module boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .qmath import CapacityError, DIM_CAP, DomainError, ValidationError

TABLE_ATOL = 1e-12
GRAM_PSD_ATOL = 1e-9


@dataclass(frozen=True)
class DepolarizingParams:
    """Forward/backward depolarizing strengths for n transferring qubits."""

    q: float
    qtilde: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise DomainError(f"need at least one receiving party, got n={self.n}")
        for name, v in (("q", self.q), ("qtilde", self.qtilde)):
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name}={v} outside [0, 1]")

    @property
    def d(self) -> int:
        return 1 << self.n

    @property
    def q_ghz(self) -> float:
        """Effective round-trip depolarization: Q + Q~ - Q*Q~."""
        return self.q + self.qtilde - self.q * self.qtilde


@dataclass(frozen=True)
class ConditionalChannelTable:
    """Forward p(b|a) and backward p'(b'|a,b) conditional distributions.

    ``forward`` has shape (2, d); ``backward`` has shape (2, d, d) indexed
    [a, b, b'], each row a distribution over the last axis.
    """

    forward: np.ndarray
    backward: np.ndarray

    def __post_init__(self):
        fwd = np.asarray(self.forward, dtype=np.float64)
        bwd = np.asarray(self.backward, dtype=np.float64)
        if fwd.ndim != 2 or fwd.shape[0] != 2:
            raise ValidationError(f"forward table must be (2, d), got {fwd.shape}")
        d = fwd.shape[1]
        if d < 2 or d & (d - 1):
            raise ValidationError(f"channel dimension {d} is not a power of two")
        if bwd.shape != (2, d, d):
            raise ValidationError(f"backward table must be (2, {d}, {d}), got {bwd.shape}")
        for name, tab in (("forward", fwd), ("backward", bwd)):
            if tab.min() < -TABLE_ATOL:
                raise ValidationError(f"{name} table has negative entries")
            sums = tab.sum(axis=-1)
            if np.max(np.abs(sums - 1.0)) > 1e-12 * d:
                raise ValidationError(f"{name} rows do not sum to 1 (max dev "
                                      f"{np.max(np.abs(sums - 1.0)):.3e})")
        fwd = np.clip(fwd, 0.0, None)
        bwd = np.clip(bwd, 0.0, None)
        fwd.setflags(write=False)
        bwd.setflags(write=False)
        object.__setattr__(self, "forward", fwd)
        object.__setattr__(self, "backward", bwd)

    @property
    def d(self) -> int:
        return self.forward.shape[1]

    @property
    def n(self) -> int:
        return self.d.bit_length() - 1


def validate_gram(gram: np.ndarray, d: int) -> np.ndarray:
    """Check an Eve-overlap table: symmetric, unit diagonal, PSD."""
    g = np.asarray(gram, dtype=np.float64)
    if g.shape != (2, d, d, 2, d, d):
        raise ValidationError(f"gram must have shape (2,{d},{d})^2, got {g.shape}")
    flat = g.reshape(2 * d * d, 2 * d * d)
    if np.max(np.abs(flat - flat.T)) > 1e-12:
        raise ValidationError("gram is not symmetric")
    if np.max(np.abs(np.diag(flat) - 1.0)) > 1e-12:
        raise ValidationError("gram diagonal is not all ones")
    lo = float(np.linalg.eigvalsh(flat).min())
    if lo < -GRAM_PSD_ATOL:
        raise ValidationError(f"gram is not PSD within {GRAM_PSD_ATOL} (min eig {lo:.3e})")
    g = g.copy()
    g.setflags(write=False)
    return g


def identity_gram(d: int) -> np.ndarray:
    """Orthonormal Eve vectors: identity Gram over the (a, b, b') index set."""
    k = 2 * d * d
    return np.eye(k).reshape(2, d, d, 2, d, d)


@dataclass(frozen=True)
class DilatedChannel:
    """One dilated channel leg: environment registers plus a joint unitary.

    ``unitary`` acts on the transferring register tensored with the
    environment slots listed in ``env_targets`` (big-endian, T first).
    Slots not listed are spectators entangled only through ``env_state``.
    """

    env_dims: tuple[int, ...]
    env_state: np.ndarray
    unitary: np.ndarray
    env_targets: tuple[int, ...]

    def __post_init__(self):
        st = np.asarray(self.env_state, dtype=np.complex128).reshape(-1)
        if st.size != math.prod(self.env_dims):
            raise ValidationError("environment state size does not match env_dims")
        st = st.copy()
        st.setflags(write=False)
        u = np.asarray(self.unitary, dtype=np.complex128).copy()
        u.setflags(write=False)
        object.__setattr__(self, "env_state", st)
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "env_dims", tuple(int(x) for x in self.env_dims))
        object.__setattr__(self, "env_targets", tuple(int(x) for x in self.env_targets))


@dataclass(frozen=True)
class CollectiveAttack:
    """A one-round attack, in analytic (tables + gram) and/or dilated form.

    When both forms are present they describe the same channel; the test
    suite checks every shared statistic to 1e-10.
    """

    n: int
    tables: ConditionalChannelTable | None = None
    gram: np.ndarray | None = None
    forward_dilation: DilatedChannel | None = None
    backward_dilation: DilatedChannel | None = None
    label: str = "custom"

    def __post_init__(self):
        if self.tables is None and self.forward_dilation is None:
            raise ValidationError("attack needs an analytic or a dilated form")
        if self.tables is not None and self.tables.n != self.n:
            raise ValidationError(f"tables are for n={self.tables.n}, attack says n={self.n}")
        if self.gram is not None:
            object.__setattr__(self, "gram", validate_gram(self.gram, 1 << self.n))

    @property
    def d(self) -> int:
        return 1 << self.n

    @property
    def has_analytic(self) -> bool:
        return self.tables is not None and self.gram is not None

    @property
    def has_dilation(self) -> bool:
        return self.forward_dilation is not None and self.backward_dilation is not None


# ---------------------------------------------------------------------------
# built-in attacks
# ---------------------------------------------------------------------------


def identity_attack(n: int) -> CollectiveAttack:
    """The noiseless baseline: channel acts as identity, Eve learns nothing.

    All Eve vectors coincide, so the Gram is the all-ones block.
    """
    d = 1 << n
    fwd = np.zeros((2, d))
    fwd[0, 0] = 1.0
    fwd[1, d - 1] = 1.0
    bwd = np.zeros((2, d, d))
    bwd[:, np.arange(d), np.arange(d)] = 1.0
    gram = np.ones((2, d, d, 2, d, d))
    return CollectiveAttack(n=n, tables=ConditionalChannelTable(fwd, bwd),
                            gram=gram, label="identity")


def attack_from_tables(tables: ConditionalChannelTable,
                       gram: np.ndarray | None = None,
                       label: str = "custom") -> CollectiveAttack:
    """Assemble an analytic attack; omitted gram means orthonormal Eve vectors."""
    if gram is None:
        gram = identity_gram(tables.d)
    return CollectiveAttack(n=tables.n, tables=tables, gram=gram, label=label)


def depolarizing_forward_prob(b: int, a: int, params: DepolarizingParams) -> float:
    """p(b | a): channel leaves |a...a> intact except for uniform leakage."""
    d = params.d
    if b == (0 if a == 0 else d - 1):
        return 1.0 - params.q * (d - 1) / d
    return params.q / d


def depolarizing_backward_prob(bprime: int, b: int, params: DepolarizingParams) -> float:
    """p'(b' | b): same form as forward with the return-leg strength."""
    d = params.d
    if bprime == b:
        return 1.0 - params.qtilde * (d - 1) / d
    return params.qtilde / d


def depolarizing_tables(params: DepolarizingParams) -> ConditionalChannelTable:
    d = params.d
    fwd = np.full((2, d), params.q / d)
    fwd[0, 0] = 1.0 - params.q * (d - 1) / d
    fwd[1, d - 1] = 1.0 - params.q * (d - 1) / d
    bwd = np.full((2, d, d), params.qtilde / d)
    bwd[:, np.arange(d), np.arange(d)] = 1.0 - params.qtilde * (d - 1) / d
    return ConditionalChannelTable(fwd, bwd)


@dataclass(frozen=True)
class EveVectorCatalogue:
    """Squared norms (global convention) and multiplicities of Eve's branches.

    Branches are indexed by (a, b, c) with b the string recorded by the
    receiving parties and c the string returning to the sender; they fall
    into four families by the pattern of coincidences among (vec a, b, c).
    Only the two all-equal branches overlap; the rest are orthogonal.
    """

    n: int
    norm_aaa: float
    norm_aac: float
    norm_abb: float
    norm_abc: float
    cross_overlap: float

    @property
    def d(self) -> int:
        return 1 << self.n

    @property
    def multiplicities(self) -> dict[str, int]:
        d = self.d
        return {
            "aaa": 2,
            "aac": 2 * (d - 1),
            "abb": 2 * (d - 1),
            "abc": 2 * (d - 1) ** 2,
        }

    @property
    def norms(self) -> dict[str, float]:
        return {"aaa": self.norm_aaa, "aac": self.norm_aac,
                "abb": self.norm_abb, "abc": self.norm_abc}

    def total_mass(self) -> float:
        mult = self.multiplicities
        return sum(mult[f] * norm for f, norm in self.norms.items())

    def family_of(self, a: int, b: int, c: int) -> str:
        va = 0 if a == 0 else self.d - 1
        if b == va:
            return "aaa" if c == b else "aac"
        return "abb" if c == b else "abc"

    def norm_for(self, a: int, b: int, c: int) -> float:
        return self.norms[self.family_of(a, b, c)]


def eve_catalogue(params: DepolarizingParams) -> EveVectorCatalogue:
    """Branch norms of the depolarizing round, global convention."""
    q, qt, n = params.q, params.qtilde, params.n
    half_d = 2.0 ** (n + 1)
    half_d2 = 2.0 ** (2 * n + 1)
    mixed = (q * (1 - qt) + (1 - q) * qt) / half_d
    tail = q * qt / half_d2
    return EveVectorCatalogue(
        n=n,
        norm_aaa=(1 - q) * (1 - qt) / 2.0 + mixed + tail,
        norm_aac=(1 - q) * qt / half_d + tail,
        norm_abb=q * (1 - qt) / half_d + tail,
        norm_abc=tail,
        cross_overlap=(1 - q) * (1 - qt) / 2.0,
    )


def depolarizing_gram(params: DepolarizingParams) -> np.ndarray:
    """Unit-vector Gram of the depolarizing attack over (a, b, b') indices.

    Identity except for the two all-equal branches, whose normalized
    overlap is the catalogue cross overlap divided by the branch norm.
    """
    d = params.d
    cat = eve_catalogue(params)
    g = identity_gram(d)
    g = np.array(g)
    val = cat.cross_overlap / cat.norm_aaa
    g[0, 0, 0, 1, d - 1, d - 1] = val
    g[1, d - 1, d - 1, 0, 0, 0] = val
    g.setflags(write=False)
    return g


def _depolarizing_dilation(strength: float, n: int) -> DilatedChannel:
    """Controlled-swap dilation: T swaps with a maximally mixed env register.

    Environment = (mirror of T, its purifier, a control qubit); the control
    carries sqrt(1-Q)|0> + sqrt(Q)|1> and triggers the swap.
    """
    d = 1 << n
    if 2 * d * d > DIM_CAP:
        raise CapacityError(f"dilation for n={n} exceeds the exact-simulation cap")
    pair = np.zeros(d * d, dtype=np.complex128)
    pair[np.arange(d) * d + np.arange(d)] = 1.0 / math.sqrt(d)
    ctrl = np.array([math.sqrt(1.0 - strength), math.sqrt(strength)], dtype=np.complex128)
    env_state = np.kron(pair, ctrl)

    # unitary on T x E1 x E3, big-endian (T, E1, E3)
    m = d * d * 2
    u = np.zeros((m, m), dtype=np.complex128)
    for t in range(d):
        for e1 in range(d):
            u[(t * d + e1) * 2 + 0, (t * d + e1) * 2 + 0] = 1.0
            u[(e1 * d + t) * 2 + 1, (t * d + e1) * 2 + 1] = 1.0
    return DilatedChannel(env_dims=(d, d, 2), env_state=env_state,
                          unitary=u, env_targets=(0, 2))


def depolarizing_attack(params: DepolarizingParams) -> CollectiveAttack:
    """Depolarizing collective attack with both dilated and analytic forms."""
    return CollectiveAttack(
        n=params.n,
        tables=depolarizing_tables(params),
        gram=depolarizing_gram(params),
        forward_dilation=_depolarizing_dilation(params.q, params.n),
        backward_dilation=_depolarizing_dilation(params.qtilde, params.n),
        label=f"depolarizing(q={params.q:g}, qtilde={params.qtilde:g})",
    )


def p_ghz_analytic(params: DepolarizingParams) -> float:
    """Probability that a reflected round still projects onto the GHZ state."""
    return 1.0 - params.q_ghz * (1.0 - 1.0 / 2.0 ** (params.n + 1))


def joint_az_analytic(a: int, c: int, params: DepolarizingParams,
                      mode: str = "corrected") -> float:
    """Joint p(a, c) of the sender's bit and returned-string measurement.

    ``corrected`` uses the round-trip strength Q_GHZ (consistent with the
    branch catalogue and the dilation); ``paper_literal`` uses the printed
    backward-only form, which matches only at Q = 0.  Both are exposed so
    the discrepancy stays visible.
    """
    d = params.d
    va = 0 if a == 0 else d - 1
    if mode == "corrected":
        strength = params.q_ghz
    elif mode == "paper_literal":
        strength = params.qtilde
    else:
        raise DomainError(f"unknown mode {mode!r}")
    p = strength / (2.0 * d)
    if c == va:
        p += (1.0 - strength) / 2.0
    return p


# ---------------------------------------------------------------------------
# plain-text attack files
# ---------------------------------------------------------------------------

_SECTIONS = ("FORWARD", "BACKWARD", "GRAM")


def load_attack_file(path) -> CollectiveAttack:
    """Parse a plain-text attack definition.

    Sections ``FORWARD`` (rows ``a b prob``), ``BACKWARD`` (rows
    ``a b bprime prob``) and optional ``GRAM`` (rows
    ``a b bprime a2 c cprime re_value``); ``#`` starts a comment.  The
    channel dimension is inferred from the FORWARD section, which must be
    complete.  Omitted GRAM entries default to orthonormal Eve vectors
    (identity Gram); the diagonal may be omitted.
    """
    fwd_rows: list[tuple[int, int, float]] = []
    bwd_rows: list[tuple[int, int, int, float]] = []
    gram_rows: list[tuple[int, int, int, int, int, int, float]] = []
    section = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            upper = line.upper()
            if upper in _SECTIONS:
                section = upper
                continue
            parts = line.split()
            try:
                if section == "FORWARD" and len(parts) == 3:
                    fwd_rows.append((int(parts[0]), int(parts[1]), float(parts[2])))
                elif section == "BACKWARD" and len(parts) == 4:
                    bwd_rows.append((int(parts[0]), int(parts[1]), int(parts[2]),
                                     float(parts[3])))
                elif section == "GRAM" and len(parts) == 7:
                    gram_rows.append(tuple(int(x) for x in parts[:6]) + (float(parts[6]),))
                else:
                    raise ValueError("wrong field count for section")
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: cannot parse {line!r} ({exc})")
    if not fwd_rows:
        raise ValidationError(f"{path}: missing FORWARD section")
    d = max(b for _, b, _ in fwd_rows) + 1
    d = max(d, 2)
    if len(fwd_rows) != 2 * d:
        raise ValidationError(f"{path}: FORWARD must list all 2*{d} entries, "
                              f"got {len(fwd_rows)}")
    fwd = np.zeros((2, d))
    for a, b, p in fwd_rows:
        fwd[a, b] = p
    bwd = np.zeros((2, d, d))
    for a, b, bp, p in bwd_rows:
        bwd[a, b, bp] = p
    tables = ConditionalChannelTable(fwd, bwd)
    gram = np.array(identity_gram(d))
    for a, b, bp, a2, c, cp, val in gram_rows:
        gram[a, b, bp, a2, c, cp] = val
        gram[a2, c, cp, a, b, bp] = val
    return attack_from_tables(tables, gram, label="file")


def dump_attack_file(attack: CollectiveAttack, path) -> None:
    """Write the analytic form of an attack in the plain-text format."""
    if not attack.has_analytic:
        raise ValidationError("attack has no analytic form to dump")
    d = attack.d
    fwd = attack.tables.forward
    bwd = attack.tables.backward
    gram = attack.gram
    eye = identity_gram(d)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# collective attack, n={attack.n}\n")
        fh.write("FORWARD\n")
        for a in range(2):
            for b in range(d):
                fh.write(f"{a} {b} {float(fwd[a, b])!r}\n")
        fh.write("BACKWARD\n")
        for a in range(2):
            for b in range(d):
                for bp in range(d):
                    fh.write(f"{a} {b} {bp} {float(bwd[a, b, bp])!r}\n")
        fh.write("GRAM\n")
        diff = np.argwhere(np.abs(gram - eye) > 0)
        seen = set()
        for idx in diff:
            a, b, bp, a2, c, cp = (int(x) for x in idx)
            key = ((a, b, bp), (a2, c, cp))
            if (key[1], key[0]) in seen:
                continue
            seen.add(key)
            fh.write(f"{a} {b} {bp} {a2} {c} {cp} "
                     f"{float(gram[a, b, bp, a2, c, cp])!r}\n")
