"""Batch front-end: verification suite, sweeps, figure data, simulation.

Commands::

    sqcka verify   [--attack-file F]
    sqcka sweep    --n 3,5 --q 0:0.5 --qtilde 0.2 --q-step 0.05 [--out F]
    sqcka figures  [--out DIR]
    sqcka simulate --n 2 --q 0.1 --qtilde 0.2 --rounds 100000 --seed 7 ...

Outputs are deterministic: identical arguments and seed give byte-identical
CSV files and reports.  Numbers are printed with 9 significant digits.

Custom attacks are plain-text files with ``#`` comments and three sections::

    FORWARD             # rows: a b prob        (p(b|a), all 2d entries)
    BACKWARD            # rows: a b bprime prob (p'(b'|a,b))
    GRAM                # rows: a b bprime a2 c cprime re_value (optional)

Strings are integer indices (big-endian bits).  Omitted GRAM entries
default to orthonormal eavesdropper vectors.
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import estimation, keyrate, protocol, qmath
from .attacks import (
    CollectiveAttack,
    DepolarizingParams,
    depolarizing_attack,
    eve_catalogue,
    identity_attack,
    load_attack_file,
    p_ghz_analytic,
)
from .keyrate import MODES

FIGURE_NS = (3, 5, 7)
FIGURE_STEP = 0.005
BISECT_TOL = 1e-4


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


# ---------------------------------------------------------------------------
# run configuration
# ---------------------------------------------------------------------------


@dataclass
class RunConfig:
    """Simulation settings; config-file keys mirror the field names."""

    n: int = 2
    q: float = 0.0
    qtilde: float = 0.0
    rounds: int = 1000
    seed: int = 1
    ctrl_count: int | None = None
    cc_fraction: float = 0.1
    attack_file: str | None = None
    out: str | None = None


_CONFIG_CASTS = {
    "n": int, "q": float, "qtilde": float, "rounds": int, "seed": int,
    "ctrl_count": int, "cc_fraction": float, "attack_file": str, "out": str,
}


def load_run_config(path) -> RunConfig:
    """Parse a flat key=value config file."""
    cfg = RunConfig()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise qmath.ValidationError(f"{path}:{lineno}: expected key=value")
            key, val = (s.strip() for s in line.split("=", 1))
            if key not in _CONFIG_CASTS:
                raise qmath.ValidationError(f"{path}:{lineno}: unknown key {key!r}")
            setattr(cfg, key, _CONFIG_CASTS[key](val))
    return cfg


def _attack_from_config(cfg: RunConfig) -> CollectiveAttack:
    if cfg.attack_file:
        atk = load_attack_file(cfg.attack_file)
        if atk.n != cfg.n:
            raise qmath.ValidationError(
                f"attack file is for n={atk.n}, config says n={cfg.n}")
        return atk
    if cfg.q == 0.0 and cfg.qtilde == 0.0:
        return identity_attack(cfg.n)
    return depolarizing_attack(DepolarizingParams(cfg.q, cfg.qtilde, cfg.n))


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def _random_table_attack(rng: np.random.Generator, n: int) -> CollectiveAttack:
    from .attacks import ConditionalChannelTable, attack_from_tables

    d = 1 << n
    fwd = rng.dirichlet(np.ones(d), size=2)
    bwd = rng.dirichlet(np.ones(d), size=(2, d))
    dim = 2 * d * d
    vecs = rng.normal(size=(dim, max(2, dim // 2)))
    vecs /= np.linalg.norm(vecs, axis=1)[:, None]
    gram = (vecs @ vecs.T).reshape(2, d, d, 2, d, d)
    return attack_from_tables(ConditionalChannelTable(fwd, bwd), gram, label="random")


def _verify_checks(attack_file: str | None):
    """Yield (name, passed, detail) for every invariant check."""
    rng = np.random.default_rng(20240901)

    # --- linear-algebra layer ---------------------------------------------
    dev = 0.0
    for _ in range(5):
        dim = int(rng.integers(2, 9))
        mat = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        u, _ = np.linalg.qr(mat)
        amp = rng.normal(size=dim) + 1j * rng.normal(size=dim)
        amp /= np.linalg.norm(amp)
        state = qmath.StateVector(amp)
        layout = qmath.RegisterLayout([("X", dim)])
        out = qmath.apply_on_subsystems(u, state, layout, ("X",))
        dev = max(dev, abs(out.norm() - 1.0))
    yield "unitary-norm-preservation", dev <= 1e-12, f"max |norm-1| {dev:.2e}"

    layout = qmath.RegisterLayout([("A", 2), ("B", 2), ("C", 3)])
    amp = rng.normal(size=12) + 1j * rng.normal(size=12)
    amp /= np.linalg.norm(amp)
    rho = qmath.density_from_state(qmath.StateVector(amp))
    one = qmath.partial_trace(qmath.partial_trace(rho, layout, ("A", "B")),
                              layout.restrict(("A", "B")), ("A",))
    two = qmath.partial_trace(rho, layout, ("A",))
    dev = float(np.max(np.abs(one.entries - two.entries)))
    yield "partial-trace-composition", dev <= 1e-12, f"max entry dev {dev:.2e}"

    probs = rng.dirichlet(np.ones(6))
    rho = qmath.DensityOperator(np.diag(probs.astype(complex)))
    s_direct = -(probs * np.log2(probs)).sum()
    dev = abs(qmath.von_neumann_entropy(rho) - s_direct)
    yield "entropy-spectrum-agreement", dev <= 1e-10, f"dev {dev:.2e}"

    joint = rng.dirichlet(np.ones(12)).reshape(3, 4)
    rho = qmath.DensityOperator(np.diag(joint.ravel().astype(complex)))
    lay = qmath.RegisterLayout([("A", 3), ("E", 4)])
    pe = joint.sum(axis=0)
    shannon = -(joint[joint > 0] * np.log2(joint[joint > 0])).sum() \
        + (pe[pe > 0] * np.log2(pe[pe > 0])).sum()
    dev = abs(qmath.conditional_entropy(rho, lay, ("A",), ("E",)) - shannon)
    yield "classical-conditional-entropy", dev <= 1e-9, f"dev {dev:.2e}"

    # --- attack layer -------------------------------------------------------
    dev = 0.0
    for (q, qt, n) in ((0.1, 0.2, 1), (0.3, 0.7, 2)):
        params = DepolarizingParams(q, qt, n)
        atk = depolarizing_attack(params)
        pp = protocol.ProtocolParams(n=n)
        for theta in (0, 1):
            _, _, sim = protocol.run_round_exact(pp, atk, theta)
            ana = protocol.round_statistics(atk, theta)
            if theta == 0:
                dev = max(dev, abs(sim.p_ghz - ana.p_ghz),
                          float(np.max(np.abs(sim.ctrl_az - ana.ctrl_az))))
            else:
                dev = max(dev, float(np.max(np.abs(sim.abc_joint - ana.abc_joint))))
    yield "dilation-analytic-agreement", dev <= 1e-10, f"max dev {dev:.2e}"

    dev = 0.0
    for n in range(1, 7):
        for q in np.linspace(0.0, 1.0, 20):
            for qt in np.linspace(0.0, 1.0, 20):
                cat = eve_catalogue(DepolarizingParams(q, qt, n))
                dev = max(dev, abs(cat.total_mass() - 1.0))
    yield "catalogue-normalization", dev <= 1e-12, f"max |mass-1| {dev:.2e}"

    # --- entropy bound layer -------------------------------------------------
    worst = -math.inf
    for (q, qt, n) in ((0.0, 0.0, 1), (0.1, 0.2, 2), (0.3, 0.1, 2), (0.2, 0.2, 3)):
        params = DepolarizingParams(q, qt, n)
        atk = depolarizing_attack(params)
        oracle = keyrate.exact_entropy_oracle(atk)
        bound = keyrate.depolarizing_entropy_lower(params, "theorem_exact")
        worst = max(worst, bound - oracle)
    for _ in range(20):
        atk = _random_table_attack(rng, int(rng.integers(1, 3)))
        oracle = keyrate.exact_entropy_oracle(atk)
        w = np.einsum("ab,abc->abc", atk.tables.forward, atk.tables.backward)
        _, bound = keyrate.pairing_maximize(w, atk.gram)
        worst = max(worst, bound - oracle)
    yield "bound-below-oracle", worst <= 1e-9, f"max (bound - oracle) {worst:.2e}"

    sat = keyrate.exact_entropy_oracle(identity_attack(2))
    dev = abs(sat - 1.0)
    yield "noiseless-saturation", dev <= 1e-10, f"|oracle-1| {dev:.2e}"

    dev = 0.0
    for n in (2, 5, 10):
        for q in np.linspace(0.0, 1.0, 9):
            for qt in np.linspace(0.0, 1.0, 9):
                params = DepolarizingParams(q, qt, n)
                lit = keyrate.depolarizing_entropy_lower(params, "paper_literal")
                thm = keyrate.depolarizing_entropy_lower(params, "theorem_exact")
                dev = max(dev, abs(thm - 2.0 * lit))
    yield "mode-factor-two", dev == 0.0, f"max |thm - 2*lit| {dev:.2e}"

    params = DepolarizingParams(0.15, 0.1, 2)
    atk = depolarizing_attack(params)
    w = np.einsum("ab,abc->abc", atk.tables.forward, atk.tables.backward)
    _, best = keyrate.pairing_maximize(w, atk.gram)
    ident = keyrate.theorem1_entropy_bound(
        keyrate.terms_from_plan(w, atk.gram, keyrate.identity_plan(4)))
    yield "pairing-dominance", best >= ident - 1e-12, \
        f"best {best:.6f} vs identity {ident:.6f}"

    dev = 0.0
    for atk in (identity_attack(2), depolarizing_attack(DepolarizingParams(0.3, 0.4, 2))):
        for theta in (0, 1):
            stats = protocol.round_statistics(atk, theta)
            dev = max(dev, float(np.max(np.abs(stats.pa - 0.5))))
    yield "sender-marginal-half", dev <= 1e-12, f"max |p_A - 1/2| {dev:.2e}"

    s1 = protocol.expand_theta_schedule(b"shared-key", 512, 40)
    s2 = protocol.expand_theta_schedule(b"shared-key", 512, 40)
    ok = s1 == s2 and len(set(s1.ctrl_indices)) == 40
    yield "schedule-determinism", ok, f"{s1.num_ctrl} CTRL indices"

    if attack_file:
        try:
            atk = load_attack_file(attack_file)
            oracle = keyrate.exact_entropy_oracle(atk)
            w = np.einsum("ab,abc->abc", atk.tables.forward, atk.tables.backward)
            _, bound = keyrate.pairing_maximize(w, atk.gram)
            ok = bound <= oracle + 1e-9
            yield "attack-file-bound", ok, f"bound {bound:.6f} oracle {oracle:.6f}"
        except (qmath.ValidationError, qmath.DomainError) as exc:
            yield "attack-file-validation", False, str(exc)


def cmd_verify(args) -> int:
    failures = 0
    for name, ok, detail in _verify_checks(args.attack_file):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    print(f"{'OK' if failures == 0 else 'FAILED'} "
          f"({failures} failing check{'s' if failures != 1 else ''})")
    return 0 if failures == 0 else 1


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def _parse_range(text: str, step: float) -> list[float]:
    if ":" in text:
        lo, hi = (float(s) for s in text.split(":", 1))
    else:
        lo = hi = float(text)
    if step <= 0:
        raise qmath.DomainError(f"step {step} must be positive")
    out = []
    k = 0
    while True:
        v = lo + k * step
        if v > hi + 1e-12:
            break
        out.append(round(v, 12))
        k += 1
    return out


SWEEP_HEADER = "n,q,qtilde,mode,p_ghz,q_bob,s_lower,leakage,r_min"


@dataclass(frozen=True)
class SweepSpec:
    """A resolved sweep grid: receiver counts, strength grids, modes."""

    ns: tuple[int, ...]
    qs: tuple[float, ...]
    qtildes: tuple[float, ...]
    modes: tuple[str, ...]
    out: str | None = None

    def __post_init__(self):
        if any(n < 1 for n in self.ns):
            raise qmath.DomainError("receiver counts must be >= 1")
        for grid in (self.qs, self.qtildes):
            if any(not 0.0 <= v <= 1.0 for v in grid):
                raise qmath.DomainError("strength grids must lie in [0, 1]")
        for mode in self.modes:
            if mode not in MODES:
                raise qmath.DomainError(f"unknown mode {mode!r}")


def _sweep_rows(spec: SweepSpec):
    for n in spec.ns:
        for q in spec.qs:
            for qt in spec.qtildes:
                params = DepolarizingParams(q, qt, n)
                pg = p_ghz_analytic(params)
                for mode in spec.modes:
                    rep = keyrate.depolarizing_keyrate(params, mode)
                    yield (str(n), _fmt(q), _fmt(qt), mode, _fmt(pg),
                           _fmt(keyrate.qbob(q)), _fmt(rep.s_lower),
                           _fmt(rep.leakage), _fmt(rep.r_min))


def _write_csv(path, header: str, rows) -> None:
    lines = [header]
    lines += [",".join(r) for r in rows]
    text = "\n".join(lines) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_sweep(args) -> int:
    spec = SweepSpec(
        ns=tuple(int(s) for s in args.n.split(",")),
        qs=tuple(_parse_range(args.q, args.q_step)),
        qtildes=tuple(_parse_range(args.qtilde, args.q_step)),
        modes=MODES if args.mode == "both" else (args.mode,),
        out=args.out,
    )
    _write_csv(spec.out, SWEEP_HEADER, _sweep_rows(spec))
    return 0


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _rate(n: int, q: float, qt: float, mode: str) -> float:
    return keyrate.depolarizing_keyrate(DepolarizingParams(q, qt, n), mode).r_min


def find_rate_crossing(fn, lo: float = 0.0, hi: float = 1.0,
                       step: float = FIGURE_STEP,
                       tol: float = BISECT_TOL) -> float | None:
    """First positive-to-strictly-negative crossing of fn, by bisection.

    Touching zero at the range boundary does not count as a crossing.
    """
    xs = _parse_range(f"{lo}:{hi}", step)
    fs = [fn(x) for x in xs]
    neg = next((i for i, f in enumerate(fs) if f < 0.0), None)
    if neg is None:
        return None
    pos = max((i for i in range(neg) if fs[i] > 0.0), default=None)
    if pos is None:
        return None
    a, b = xs[pos], xs[neg]
    while b - a > tol:
        mid = 0.5 * (a + b)
        if fn(mid) > 0.0:
            a = mid
        else:
            b = mid
    return 0.5 * (a + b)


def cmd_figures(args) -> int:
    outdir = Path(args.out or "figures")
    outdir.mkdir(parents=True, exist_ok=True)
    grid01 = _parse_range("0:1", FIGURE_STEP)
    grid_half = _parse_range("0:0.5", FIGURE_STEP)

    rows = []
    for q in grid_half:
        for qt in grid_half:
            for mode in MODES:
                rep = keyrate.depolarizing_keyrate(DepolarizingParams(q, qt, 10), mode)
                rows.append(("10", _fmt(q), _fmt(qt), mode, _fmt(rep.r_min)))
    _write_csv(outdir / "fig2.csv", "n,q,qtilde,mode,r_min", rows)

    rows = []
    for n in FIGURE_NS:
        for q in grid_half:
            for mode in MODES:
                rows.append((str(n), _fmt(q), _fmt(q), mode,
                             _fmt(_rate(n, q, q, mode))))
    _write_csv(outdir / "fig3.csv", "n,q,qtilde,mode,r_min", rows)

    rows = []
    for n in FIGURE_NS:
        for qt in grid01:
            for mode in MODES:
                rows.append((str(n), "0", _fmt(qt), mode,
                             _fmt(_rate(n, 0.0, qt, mode))))
    _write_csv(outdir / "fig4a.csv", "n,q,qtilde,mode,r_min", rows)

    rows = []
    for n in FIGURE_NS:
        for q in grid_half:
            for mode in MODES:
                rows.append((str(n), _fmt(q), "0", mode,
                             _fmt(_rate(n, q, 0.0, mode))))
    _write_csv(outdir / "fig4b.csv", "n,q,qtilde,mode,r_min", rows)

    sweeps = {
        "fig3": lambda n, mode: (lambda x: _rate(n, x, x, mode)),
        "fig4a": lambda n, mode: (lambda x: _rate(n, 0.0, x, mode)),
        "fig4b": lambda n, mode: (lambda x: _rate(n, x, 0.0, mode)),
    }
    rows = []
    for fig, make in sweeps.items():
        for n in FIGURE_NS:
            for mode in MODES:
                crossing = find_rate_crossing(make(n, mode))
                rows.append((fig, str(n), mode,
                             "" if crossing is None else _fmt(crossing)))
    _write_csv(outdir / "thresholds.csv", "figure,n,mode,crossing", rows)
    print(f"wrote fig2/fig3/fig4a/fig4b/thresholds CSV files to {outdir}")
    return 0


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------


def _depolarizing_fit(n: int, p_ghz: float, disagreement: float
                      ) -> tuple[float, float]:
    """Fit (Q, Q~) assuming depolarizing noise, from observable estimates."""
    q_hat = min(max(2.0 * disagreement, 0.0), 1.0)
    q_ghz = (1.0 - p_ghz) / (1.0 - 0.5 ** (n + 1))
    q_ghz = min(max(q_ghz, 0.0), 1.0)
    if q_hat >= 1.0:
        return 1.0, 0.0
    qt_hat = (q_ghz - q_hat) / (1.0 - q_hat)
    return q_hat, min(max(qt_hat, 0.0), 1.0)


def cmd_simulate(args) -> int:
    cfg = load_run_config(args.config) if args.config else RunConfig()
    overrides = {k: getattr(args, k) for k in _CONFIG_CASTS
                 if getattr(args, k, None) is not None}
    cfg = replace(cfg, **overrides)

    attack = _attack_from_config(cfg)
    params = protocol.ProtocolParams(n=cfg.n)
    ctrl = cfg.ctrl_count if cfg.ctrl_count is not None \
        else protocol.default_ctrl_count(cfg.rounds)
    schedule = protocol.expand_theta_schedule(cfg.seed, cfg.rounds, ctrl)
    record = protocol.run_session(params, attack, schedule, cfg.seed,
                                  cfg.cc_fraction)
    t = record.tallies

    print(f"session: n={cfg.n} rounds={cfg.rounds} ctrl={ctrl} seed={cfg.seed} "
          f"attack={attack.label}")
    print(f"raw key length: {record.raw_key_alice.size}")

    pg = rates = None
    try:
        pg = estimation.estimate_p_ghz(t, confidence=0.99)
        print(f"p_ghz estimate: {_fmt(pg.value)} +/- {_fmt(pg.radius)} @99% "
              f"({t.ghz_pass}/{t.ghz_total})")
        norms = estimation.estimate_branch_norms(t)
        for a in range(2):
            print(f"branch norms q[{a},c]: "
                  + " ".join(_fmt(v) for v in norms[a]))
        d = attack.d
        r_z = estimation.hoeffding_radius(int(t.z_ctrl_counts.sum()), 0.99)
        re_radius = 2.0 * pg.radius + 2.0 * r_z
        re = estimation.estimate_re_overlap(pg.value, norms[0, 0],
                                            norms[1, d - 1], slack=re_radius)
        print(f"re-overlap estimate: {_fmt(re)} +/- {_fmt(re_radius)} @99%")
    except estimation.NoDataError as exc:
        print(f"reflection-round estimates unavailable: {exc}")
    try:
        cond = estimation.estimate_channel_conditionals(t)
        for a in range(2):
            print(f"p(b|{a}) estimates: " + " ".join(_fmt(v) for v in cond[a]))
        rates = estimation.bob_disagreement_rates(t)
        print("per-receiver disagreement: " + " ".join(_fmt(v) for v in rates))
    except estimation.NoDataError as exc:
        print(f"disclosed-round estimates unavailable: {exc}")

    if pg is not None and rates is not None:
        q_hat, qt_hat = _depolarizing_fit(cfg.n, pg.value, float(rates.mean()))
        print(f"depolarizing fit: q={_fmt(q_hat)} qtilde={_fmt(qt_hat)}")
        for mode in MODES:
            rep = keyrate.depolarizing_keyrate(
                DepolarizingParams(q_hat, qt_hat, cfg.n), mode)
            print(f"key rate ({mode}): s_lower={_fmt(rep.s_lower)} "
                  f"leakage={_fmt(rep.leakage)} r_min={_fmt(rep.r_min)}")

    out = cfg.out or "tallies.txt"
    Path(out).write_text(estimation.tally_to_text(t), encoding="utf-8")
    print(f"tallies written to {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sqcka",
        description="GHZ-based semi-quantum conference key agreement toolbox")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify", help="run the invariant verification suite")
    p.add_argument("--attack-file", default=None,
                   help="also validate and check a custom attack table file")
    p.set_defaults(fn=cmd_verify)

    p = sub.add_parser("sweep", help="key-rate sweep over (n, Q, Q~) as CSV")
    p.add_argument("--n", default="3", help="comma-separated receiver counts")
    p.add_argument("--q", default="0:0.5", help="forward strength (value or lo:hi)")
    p.add_argument("--qtilde", default="0:0.5",
                   help="backward strength (value or lo:hi)")
    p.add_argument("--q-step", type=float, default=0.05, dest="q_step",
                   help="grid step for both ranges")
    p.add_argument("--mode", default="both", choices=("both",) + MODES)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("figures", help="emit figure-data CSV files")
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(fn=cmd_figures)

    p = sub.add_parser("simulate", help="run a sampled session and estimate")
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--q", type=float, default=None)
    p.add_argument("--qtilde", type=float, default=None)
    p.add_argument("--rounds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--ctrl-count", type=int, default=None, dest="ctrl_count")
    p.add_argument("--cc-fraction", type=float, default=None, dest="cc_fraction")
    p.add_argument("--attack-file", default=None, dest="attack_file")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
