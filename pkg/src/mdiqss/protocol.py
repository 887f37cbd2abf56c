"""n-party MDI-QSS round engine, sifting, security check and key extraction.

Photon layout: Alice prepares the pair and encodes on photon 1, which travels
A -> Bob -> David. Photon 2 travels A -> Charlie -> Daniel -> ... -> David,
visiting every further party in order. Encoders on photon 1 advance the Bell
phase index by j(a, b) = a + 2b, encoders on photon 2 move it back by j, so a
kept round (XOR of all a = 0) lands on psi+/psi- with

    s = b_1 ^ ... ^ b_n ^ offset(a),
    offset(a) = ((sum of a on photon 1 - sum of a on photon 2) mod 4) / 2.

For three parties offset(a) = a_A & a_B.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import _backend
from . import _pykernels as _k
from .bsa import (
    IDEAL_DETECTORS,
    BsaOutcome,
    ClickPattern,
    DetectorParams,
    click_bsa,
    bsa_probabilities,
    ideal_bsa,
)
from .channel import AdversaryModel, LinkParams, Topology, eve_intercept, transmit
from .qstate import (
    ALL_KEYS,
    BellLabel,
    EncodingKeys,
    apply_local,
    ancilla_projections,
    bell_vector,
    classify,
    ghz3_plus,
    ghz_plus,
    local_op,
    transition,
    transition_table,
)

__all__ = [
    "PARTY_NAMES",
    "UNBIASED",
    "RoundRecord",
    "RoundBatch",
    "SecurityReport",
    "SharedKey",
    "NoSiftedRoundsError",
    "party_photon",
    "party_name",
    "segment_names",
    "build_links",
    "parity_offset",
    "expected_outcome",
    "run_round",
    "simulate",
    "sift_and_check",
    "reconstruct_secret",
    "mutual_information",
    "matrix_state",
    "REFERENCE_TABLES",
    "verify_tables",
    "virtual_ghz_equivalence",
]

PARTY_NAMES = ("Alice", "Bob", "Charlie", "Daniel")


class _Unbiased(enum.Enum):
    UNBIASED = "unbiased"

    def __repr__(self):
        return "UNBIASED"


UNBIASED = _Unbiased.UNBIASED


class NoSiftedRoundsError(ValueError):
    """Raised when no round survives sifting."""


def party_name(i: int) -> str:
    return PARTY_NAMES[i] if i < len(PARTY_NAMES) else f"P{i + 1}"


def party_photon(i: int) -> int:
    """Photon (1 or 2) that party ``i`` encodes on; Alice is party 0."""
    return 1 if i < 2 else 2


def _check_parties(n_parties: int) -> None:
    if n_parties < 3:
        raise ValueError(f"the protocol needs at least 3 parties, got {n_parties}")


def segment_names(n_parties: int) -> list[str]:
    """Canonical segment order: photon 1 path, then photon 2 path."""
    _check_parties(n_parties)
    names = ["Alice->Bob", "Bob->David"]
    hops = ["Alice"] + [party_name(i) for i in range(2, n_parties)] + ["David"]
    names += [f"{src}->{dst}" for src, dst in zip(hops, hops[1:])]
    return names


def build_links(n_parties: int = 3, alpha: float = 0.19, length_km: float = 0.0,
                e_x: float = 0.0, e_y: float = 0.0,
                topology: Topology | str = Topology.SYMMETRIC) -> list[LinkParams]:
    """Default segment list in :func:`segment_names` order.

    Channel noise sits on the photon-2 (Charlie side) segments, so for three
    parties the pair sees exactly two noisy stages. In the proximal layout
    the segments entering David have zero length.
    """
    names = segment_names(n_parties)
    topology = Topology(topology)
    links = []
    for name in names:
        into_david = name.endswith("->David")
        length = 0.0 if (topology is Topology.PROXIMAL and into_david) else length_km
        noisy = not name.startswith(("Alice->Bob", "Bob->"))
        links.append(LinkParams(alpha, length, e_x if noisy else 0.0, e_y if noisy else 0.0))
    return links


def parity_offset(a_bits: Sequence[int] | np.ndarray) -> np.ndarray | int:
    """offset(a) for key bits ``a_bits[..., party]`` (only meaningful when XOR = 0)."""
    a = np.asarray(a_bits, dtype=np.int64)
    signs = np.array([1 if party_photon(i) == 1 else -1 for i in range(a.shape[-1])])
    total = np.mod(a @ signs, 4)
    out = (total // 2) & 1
    return int(out) if out.ndim == 0 else out


def _as_keys(keys: Iterable) -> list[EncodingKeys]:
    return [EncodingKeys(*k) for k in keys]


def expected_outcome(keys: Sequence[EncodingKeys | tuple[int, int]]):
    """Ideal analyzer result for a list of party keys (index 0 = Alice).

    Returns UNBIASED when the XOR of the public keys is 1, else psi+ for
    s = 0 and psi- for s = 1.
    """
    keys = _as_keys(keys)
    if len(keys) < 3:
        raise ValueError(f"need keys for at least 3 parties, got {len(keys)}")
    a = [k.a for k in keys]
    if sum(a) % 2:
        return UNBIASED
    s = (sum(k.b for k in keys) + parity_offset(a)) % 2
    return BsaOutcome.PSI_MINUS if s else BsaOutcome.PSI_PLUS


# --- transcripts ---------------------------------------------------------------

@dataclass
class RoundRecord:
    party_keys: tuple[EncodingKeys, ...]
    outcome: BsaOutcome
    sifted: bool
    sample: bool = False
    pattern: ClickPattern = ClickPattern()


@dataclass
class RoundBatch:
    """Columnar transcript of many rounds.

    ``keys[r, i]`` holds the key index 2a + b of party ``i`` in round ``r``;
    ``outcome`` uses :class:`BsaOutcome` codes.
    """

    keys: np.ndarray
    outcome: np.ndarray
    pattern: np.ndarray
    nsig: np.ndarray
    sample: np.ndarray = None
    start: int = 0

    def __post_init__(self):
        if self.sample is None:
            self.sample = np.zeros(len(self.outcome), dtype=bool)

    def __len__(self) -> int:
        return len(self.outcome)

    @property
    def n_parties(self) -> int:
        return self.keys.shape[1]

    @property
    def a(self) -> np.ndarray:
        return (self.keys >> 1) & 1

    @property
    def b(self) -> np.ndarray:
        return self.keys & 1

    @property
    def conclusive(self) -> np.ndarray:
        return self.outcome != BsaOutcome.INCONCLUSIVE

    @property
    def public_parity(self) -> np.ndarray:
        return np.bitwise_xor.reduce(self.a, axis=1)

    @property
    def sifted(self) -> np.ndarray:
        return self.conclusive & (self.public_parity == 0)

    @property
    def parity_target(self) -> np.ndarray:
        """s ^ offset(a): what the XOR of all private keys should equal."""
        return (self.outcome.astype(np.int64) & 1) ^ parity_offset(self.a)

    @property
    def violations(self) -> np.ndarray:
        """Rounds whose private keys disagree with the announced outcome."""
        return (np.bitwise_xor.reduce(self.b, axis=1) != self.parity_target)

    def records(self) -> Iterator[RoundRecord]:
        sifted = self.sifted
        for r in range(len(self)):
            yield RoundRecord(
                party_keys=tuple(EncodingKeys.from_index(int(k)) for k in self.keys[r]),
                outcome=BsaOutcome(int(self.outcome[r])),
                sifted=bool(sifted[r]),
                sample=bool(self.sample[r]),
                pattern=ClickPattern.from_mask(int(self.pattern[r])),
            )

    @classmethod
    def from_records(cls, records: Sequence[RoundRecord]) -> "RoundBatch":
        keys = np.array([[k.index for k in _as_keys(rec.party_keys)] for rec in records], dtype=np.uint8)
        outcome = np.array([int(rec.outcome) for rec in records], dtype=np.int8)
        pattern = np.array([rec.pattern.mask for rec in records], dtype=np.uint8)
        return cls(keys, outcome, pattern, np.zeros(len(records), dtype=np.uint8),
                   np.array([rec.sample for rec in records], dtype=bool))

    @classmethod
    def concat(cls, parts: Sequence["RoundBatch"]) -> "RoundBatch":
        return cls(
            np.concatenate([p.keys for p in parts]),
            np.concatenate([p.outcome for p in parts]),
            np.concatenate([p.pattern for p in parts]),
            np.concatenate([p.nsig for p in parts]),
            np.concatenate([p.sample for p in parts]),
            parts[0].start if parts else 0,
        )


# --- event plan shared by run_round and the batch kernels ------------------------

@dataclass(frozen=True)
class _Plan:
    n_parties: int
    events: tuple  # (kind, a, b, slot, link-or-None)
    forced: tuple[int, ...]
    nslots: int
    bsa_slot: int

    def arrays(self):
        kind = np.array([e[0] for e in self.events], dtype=np.int32)
        ea = np.array([e[1] for e in self.events], dtype=np.int32)
        eb = np.array([e[2] for e in self.events], dtype=np.int32)
        slot = np.array([e[3] for e in self.events], dtype=np.int32)
        eta = np.array([e[4].transmittance if e[4] else 1.0 for e in self.events])
        ex = np.array([e[4].e_x if e[4] else 0.0 for e in self.events])
        ey = np.array([e[4].e_y if e[4] else 0.0 for e in self.events])
        return kind, ea, eb, slot, eta, ex, ey


def _make_plan(n_parties: int, links: Sequence[LinkParams], adversary: AdversaryModel) -> _Plan:
    _check_parties(n_parties)
    links = list(links)
    if len(links) != n_parties + 1:
        raise ValueError(f"{n_parties} parties need {n_parties + 1} segments "
                         f"({', '.join(segment_names(n_parties))}), got {len(links)}")
    adversary = AdversaryModel(adversary)
    slot = n_parties
    events = []

    def seg(photon, link):
        nonlocal slot
        events.append((_k.EV_SEGMENT, photon, 0, slot, link))
        slot += 2

    events.append((_k.EV_ENCODE, 0, 0, 0, None))
    seg(0, links[0])
    seg(1, links[2])
    if adversary.intercept_basis is not None:
        events.append((_k.EV_INTERCEPT, adversary.intercept_basis, 0, slot, None))
        slot += 1
    events.append((_k.EV_ENCODE, 1, 0, 1, None))
    events.append((_k.EV_ENCODE, 2, 1, 2, None))
    seg(0, links[1])
    for i in range(3, n_parties):
        seg(1, links[i])
        events.append((_k.EV_ENCODE, i, 1, i, None))
    seg(1, links[n_parties])
    forced = tuple(int(adversary is AdversaryModel.DISHONEST_BOB and i == 1) for i in range(n_parties))
    return _Plan(n_parties, tuple(events), forced, slot + _k.BSA_SLOTS, slot)


def run_round(n_parties: int, links: Sequence[LinkParams], det: DetectorParams,
              adversary: AdversaryModel | str, rng: np.random.Generator) -> RoundRecord:
    """One protocol round built from the per-photon primitives.

    This is the readable reference path; :func:`simulate` runs the same event
    plan through the vectorized kernels.
    """
    plan = _make_plan(n_parties, links, AdversaryModel(adversary))
    keys = [EncodingKeys(0, 0) if plan.forced[i] else EncodingKeys.from_index(int(rng.integers(4)))
            for i in range(n_parties)]
    label = BellLabel.PSI_PLUS
    alive = [True, True]
    for kind, a, b, _slot, link in plan.events:
        if kind == _k.EV_ENCODE:
            label = transition(label, keys[a], photon=b + 1)
        elif kind == _k.EV_SEGMENT:
            if alive[a]:
                alive[a], label = transmit(label, link, rng)
        else:
            label = eve_intercept(label, a, rng)
    projected = ideal_bsa(bell_vector(label), rng) if all(alive) else None
    outcome, pattern = click_bsa(tuple(alive), projected, det, rng)
    sifted = outcome is not BsaOutcome.INCONCLUSIVE and sum(k.a for k in keys) % 2 == 0
    return RoundRecord(tuple(keys), outcome, sifted, False, pattern)


def _run_chunk(kernels, key, start, stop, plan, arrays, trans, det):
    keys, outcome, pattern, nsig = kernels.simulate_rounds(
        key, start, stop, plan.n_parties, plan.nslots, 0, *arrays,
        trans, np.array(plan.forced, dtype=np.uint8), det.eta_d, det.eta_D, det.p_d, plan.bsa_slot)
    return RoundBatch(keys, outcome, pattern, nsig, start=start)


def simulate(n_rounds: int, n_parties: int = 3, links: Sequence[LinkParams] | None = None,
             det: DetectorParams = IDEAL_DETECTORS, adversary: AdversaryModel | str = AdversaryModel.NONE,
             seed: int = 0, workers: int = 1, backend: str | None = None,
             chunk_size: int = 1 << 18, start: int = 0) -> RoundBatch:
    """Simulate ``n_rounds`` rounds with counter-based randomness.

    Every draw depends only on (seed, round index, slot), so the result is
    identical for any ``workers``/``chunk_size`` and either kernel backend.
    """
    if n_rounds < 1:
        raise ValueError("n_rounds must be >= 1")
    if links is None:
        links = build_links(n_parties)
    plan = _make_plan(n_parties, links, AdversaryModel(adversary))
    arrays = plan.arrays()
    trans = np.ascontiguousarray(transition_table())
    kernels = _backend.get(backend)
    key = _k.seed_key(int(seed))
    bounds = list(range(start, start + n_rounds, chunk_size)) + [start + n_rounds]
    spans = list(zip(bounds, bounds[1:]))

    def job(span):
        return _run_chunk(kernels, key, span[0], span[1], plan, arrays, trans, det)

    if workers > 1 and len(spans) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, spans))
    else:
        parts = [job(s) for s in spans]
    return RoundBatch.concat(parts)


# --- sifting, security check, key ---------------------------------------------

@dataclass
class SecurityReport:
    sample_size: int
    estimated_error: float
    threshold: float
    abort: bool
    n_rounds: int = 0
    n_conclusive: int = 0
    n_sifted: int = 0
    sample_rounds: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64), repr=False)

    @property
    def sifted_fraction(self) -> float:
        """Sifted rounds among conclusive ones (about 1/2)."""
        return self.n_sifted / self.n_conclusive if self.n_conclusive else 0.0


@dataclass
class SharedKey:
    """Private key bits of every party on the kept rounds.

    For each kept round ``bits[r].XOR() == parity_target[r]`` when no error
    occurred.
    """

    bits: np.ndarray  # (n_kept, n_parties) uint8
    parity_target: np.ndarray  # (n_kept,) uint8
    rounds: np.ndarray  # (n_kept,) round indices

    def __len__(self) -> int:
        return len(self.parity_target)

    @property
    def n_parties(self) -> int:
        return self.bits.shape[1]


def sift_and_check(records: RoundBatch | Sequence[RoundRecord], sample_fraction: float = 0.1,
                   threshold: float = 0.11, rng: np.random.Generator | None = None
                   ) -> tuple[SecurityReport, SharedKey]:
    """Sift, sample, estimate the error rate and extract the shared key.

    Samples are drawn from the sifted rounds (conclusive and XOR of public keys
    equal to 0) and marked in ``records`` in place. An aborted run returns an
    empty key.
    """
    if not 0.0 < sample_fraction < 1.0:
        raise ValueError(f"sample_fraction must lie in (0, 1), got {sample_fraction}")
    if rng is None:
        rng = np.random.default_rng()
    as_list = not isinstance(records, RoundBatch)
    batch = RoundBatch.from_records(records) if as_list else records
    if len(batch) == 0:
        raise ValueError("no rounds to sift")
    sifted_idx = np.flatnonzero(batch.sifted)
    if sifted_idx.size == 0:
        raise NoSiftedRoundsError(f"none of {len(batch)} rounds survived sifting")
    n_sample = min(sifted_idx.size, max(1, int(round(sample_fraction * sifted_idx.size))))
    sample_idx = np.sort(rng.choice(sifted_idx, size=n_sample, replace=False))
    batch.sample[:] = False
    batch.sample[sample_idx] = True
    if as_list:
        for i, rec in enumerate(records):
            rec.sample = bool(batch.sample[i])

    violations = batch.violations
    estimated = float(np.mean(violations[sample_idx]))
    report = SecurityReport(
        sample_size=int(n_sample),
        estimated_error=estimated,
        threshold=float(threshold),
        abort=estimated > threshold,
        n_rounds=len(batch),
        n_conclusive=int(np.count_nonzero(batch.conclusive)),
        n_sifted=int(sifted_idx.size),
        sample_rounds=sample_idx,
    )
    if report.abort:
        kept = np.zeros(0, dtype=np.int64)
    else:
        kept = sifted_idx[~batch.sample[sifted_idx]]
    key = SharedKey(
        bits=batch.b[kept].astype(np.uint8),
        parity_target=batch.parity_target[kept].astype(np.uint8),
        rounds=kept + batch.start,
    )
    return report, key


def reconstruct_secret(key: SharedKey, collaborators: Sequence[int]) -> np.ndarray:
    """Private bit string of the one party not among ``collaborators``."""
    n = key.n_parties
    members = sorted(set(int(c) for c in collaborators))
    if len(members) != len(list(collaborators)) or len(members) != n - 1:
        raise ValueError(f"need {n - 1} distinct collaborators out of {n} parties, got {list(collaborators)}")
    if members[0] < 0 or members[-1] >= n:
        raise ValueError(f"collaborator index out of range 0..{n - 1}")
    acc = key.parity_target.copy()
    for c in members:
        acc ^= key.bits[:, c]
    return acc


def mutual_information(x: np.ndarray, y: np.ndarray) -> float:
    """Plug-in mutual information (bits) of two binary sequences."""
    x = np.asarray(x, dtype=np.int64)
    y = np.asarray(y, dtype=np.int64)
    joint = np.bincount(2 * x + y, minlength=4).reshape(2, 2) / x.size
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(joint > 0, joint * np.log2(joint / (px * py)), 0.0)
    return float(terms.sum())


# --- table reproduction ---------------------------------------------------------

def matrix_state(keys: Sequence[EncodingKeys | tuple[int, int]]) -> np.ndarray:
    """Pair state after every party's encoder, by explicit matrix products."""
    state = bell_vector(BellLabel.PSI_PLUS)
    for i, k in enumerate(_as_keys(keys)):
        state = apply_local(state, local_op(k), party_photon(i))
    return state


def key_combinations(n_parties: int) -> Iterator[tuple[EncodingKeys, ...]]:
    for idx in np.ndindex(*(4,) * n_parties):
        yield tuple(ALL_KEYS[i] for i in idx)


# Reference tables: rows are Charlie's keys, columns Bob's keys (index 2a + b).
# "+-" means psi+ for Alice's upper operation and psi- for the lower one.
REFERENCE_TABLES = {
    1: (("+-", "-+", "--", "--"),
        ("-+", "+-", "--", "--"),
        ("--", "--", "+-", "-+"),
        ("--", "--", "-+", "+-")),
    2: (("--", "--", "-+", "+-"),
        ("--", "--", "+-", "-+"),
        ("+-", "-+", "--", "--"),
        ("-+", "+-", "--", "--")),
}
_UNBIASED_CELL = "--"


def _op_name(k: EncodingKeys) -> str:
    return f"U{k.a}{k.b}"


@dataclass
class CellCheck:
    table: int
    alice: EncodingKeys
    bob: EncodingKeys
    charlie: EncodingKeys
    reference: object  # BsaOutcome or UNBIASED
    p_plus: float
    frequency: float | None
    ok: bool

    @property
    def name(self) -> str:
        return (f"table{self.table}:A={_op_name(self.alice)},B={_op_name(self.bob)},"
                f"C={_op_name(self.charlie)}")


@dataclass
class TableReport:
    cells: list[CellCheck]
    formula_agreement: int
    literal_mismatches: int
    trials: int
    tolerance: float

    @property
    def n_deterministic(self) -> int:
        return sum(c.reference is not UNBIASED for c in self.cells)

    @property
    def failures(self) -> list[CellCheck]:
        return [c for c in self.cells if not c.ok]

    @property
    def passed(self) -> bool:
        return not self.failures and self.formula_agreement == len(self.cells)


def _reference_outcome(table: int, alice_b: int, bob: EncodingKeys, charlie: EncodingKeys):
    sym = REFERENCE_TABLES[table][charlie.index][bob.index]
    if sym == _UNBIASED_CELL:
        return UNBIASED
    return BsaOutcome.PSI_PLUS if sym[alice_b] == "+" else BsaOutcome.PSI_MINUS


def _flip(expected):
    if expected is UNBIASED:
        return BsaOutcome.PSI_PLUS
    return BsaOutcome.PSI_MINUS if expected is BsaOutcome.PSI_PLUS else BsaOutcome.PSI_PLUS


def literal_parity(keys: Sequence[EncodingKeys | tuple[int, int]]) -> int:
    """s as written in the naive key relation: a_A ^ b_A ^ b_B ^ ... ."""
    keys = _as_keys(keys)
    return (keys[0].a + sum(k.b for k in keys)) % 2


def verify_tables(trials: int = 100_000, rng: np.random.Generator | None = None,
                  tolerance: float = 0.01, inject: str | None = None) -> TableReport:
    """Check all 64 three-party key combinations against the reference tables.

    Each cell's analyzer statistics come from explicit matrix products. A
    deterministic cell passes when the reference outcome has probability 1; a
    "-" cell passes when psi+ has probability 1/2 and its sampled frequency
    over ``trials`` ideal analyzer runs lies within ``tolerance`` of 0.5.
    ``inject`` names a cell whose reference entry is flipped (negative control).
    """
    if rng is None:
        rng = np.random.default_rng(0)
    cells = []
    formula_ok = 0
    literal_bad = 0
    for table in (1, 2):
        for alice_b in (0, 1):
            alice = EncodingKeys(table - 1, alice_b)
            for charlie in ALL_KEYS:
                for bob in ALL_KEYS:
                    keys = (alice, bob, charlie)
                    p_plus, p_minus = bsa_probabilities(matrix_state(keys))
                    reference = _reference_outcome(table, alice_b, bob, charlie)
                    cell = CellCheck(table, alice, bob, charlie, reference, p_plus, None, False)
                    if inject is not None and cell.name == inject:
                        reference = cell.reference = _flip(reference)
                    if reference is UNBIASED:
                        freq = float(np.mean(rng.random(trials) < p_plus))
                        cell.frequency = freq
                        cell.ok = abs(p_plus - 0.5) < 1e-12 and abs(freq - 0.5) <= tolerance
                        matrix = UNBIASED if abs(p_plus - 0.5) < 1e-12 else None
                    else:
                        target = p_plus if reference is BsaOutcome.PSI_PLUS else p_minus
                        cell.ok = abs(target - 1.0) < 1e-12
                        matrix = (BsaOutcome.PSI_PLUS if p_plus > 1 - 1e-12 else
                                  BsaOutcome.PSI_MINUS if p_minus > 1 - 1e-12 else None)
                    formula_ok += expected_outcome(keys) is matrix
                    if matrix is not UNBIASED and matrix is not None:
                        literal_bad += literal_parity(keys) != int(matrix)
                    cells.append(cell)
    if inject is not None and not any(c.name == inject for c in cells):
        raise ValueError(f"unknown table cell {inject!r}")
    return TableReport(cells, formula_ok, literal_bad, trials, tolerance)


# --- virtual GHZ equivalence ---------------------------------------------------------

@dataclass
class EquivalenceReport:
    """Histograms over cells (a_A, b_A, sifted, outcome), index 8a + 4b + 2 sifted + s."""

    n_parties: int
    trials: int
    tv_distance: float
    direct: np.ndarray
    ghz: np.ndarray
    minus_pairs_with_psi_minus: bool
    ghz_parity_violations: int


_BASES = ("X", "Y")


def _cell_index(a_all: np.ndarray, b_alice: np.ndarray, outcome: np.ndarray) -> np.ndarray:
    sifted = (a_all.sum(axis=1) % 2 == 0).astype(np.int64)
    return 8 * a_all[:, 0] + 4 * b_alice + 2 * sifted + outcome


def _photon2_bit(label: BellLabel, a: int) -> int:
    """Private bit b with U_{a b} on photon 2 turning psi+ into ``label``."""
    for b in (0, 1):
        if transition(BellLabel.PSI_PLUS, EncodingKeys(a, b), photon=2) == label:
            return b
    raise AssertionError(f"no photon-2 operation reaches {label!r} in family {a}")


def _ghz_branches(n: int) -> list[tuple[tuple[int, ...], tuple[int, ...], float, np.ndarray]]:
    """(virtual bases, equivalent private bits, probability, residual pair) per branch.

    The first virtual photon belongs to Alice (photon-1 side), the second, for
    four parties, to Daniel (photon-2 side).
    """
    branches = []
    for aa in (0, 1):
        probs, resid = ancilla_projections(ghz3_plus() if n == 3 else ghz_plus(4), _BASES[aa])
        for m in (0, 1):
            if n == 3:
                branches.append(((aa,), (m,), probs[m], resid[m]))
                continue
            for ad in (0, 1):
                d_probs, d_resid = ancilla_projections(resid[m], _BASES[ad])
                # Daniel's outcome acts like his encoding read off the three-photon case
                ref = ancilla_projections(ghz3_plus(), _BASES[ad])[1]
                for md in (0, 1):
                    label = classify(ref[md])
                    branches.append(((aa, ad), (m, _photon2_bit(label, ad)), probs[m] * d_probs[md], d_resid[md]))
    return branches


def virtual_ghz_equivalence(n_parties: int = 3, trials: int = 100_000,
                            rng: np.random.Generator | None = None) -> EquivalenceReport:
    """Compare direct protocol statistics with the virtual-GHZ purification.

    Direct runs: every party draws keys and encodes on the prepared pair.
    GHZ runs: Alice (and for four parties, Daniel) replace their encoding by
    an X/Y measurement of a virtual GHZ photon whose outcome is their private
    bit; Bob and Charlie encode on the remaining pair.
    """
    if n_parties not in (3, 4):
        raise ValueError(f"virtual GHZ check supports 3 or 4 parties, got {n_parties}")
    if rng is None:
        rng = np.random.default_rng(0)
    n = n_parties

    p_direct = np.array([bsa_probabilities(matrix_state(ks))[0] for ks in key_combinations(n)])
    keys = rng.integers(0, 4, size=(trials, n))
    combo = keys @ (4 ** np.arange(n - 1, -1, -1))
    out = (rng.random(trials) >= p_direct[combo]).astype(np.int64)
    direct = np.bincount(_cell_index(keys >> 1, keys[:, 0] & 1, out), minlength=16)

    branches = _ghz_branches(n)
    minus_ok = classify(ancilla_projections(ghz3_plus(), "X")[1][1]) is BellLabel.PSI_MINUS
    minus_ok &= all(classify(pair) is BellLabel.PSI_MINUS
                    for bases, bits, prob, pair in branches
                    if prob > 0 and all(x == 0 for x in bases) and sum(bits) == 1 and bits[0] == 1)

    # the virtual parties' bases pick a branch family; their outcomes are drawn by Born weights
    a_all = rng.integers(0, 2, size=(trials, n))
    virtual = [0] if n == 3 else [0, 3]
    family = a_all[:, virtual] @ (2 ** np.arange(len(virtual) - 1, -1, -1))
    fam_of = np.array([np.dot(b[0], 2 ** np.arange(len(virtual) - 1, -1, -1)) for b in branches])
    branch = np.zeros(trials, dtype=np.int64)
    u = rng.random(trials)
    for f in np.unique(fam_of):
        idx = np.flatnonzero(fam_of == f)
        cdf = np.cumsum([branches[i][2] for i in idx])
        pick = np.minimum(np.searchsorted(cdf, u, side="right"), idx.size - 1)
        sel = family == f
        branch[sel] = idx[pick[sel]]
    bits = np.array([b[1] for b in branches])[branch]
    bc = rng.integers(0, 2, size=(trials, 2))
    kb = 2 * a_all[:, 1] + bc[:, 0]
    kc = 2 * a_all[:, 2] + bc[:, 1]
    p_table = np.array([[[bsa_probabilities(apply_local(apply_local(b[3], local_op(ALL_KEYS[i]), 1),
                                                        local_op(ALL_KEYS[j]), 2))[0]
                          for j in range(4)] for i in range(4)] for b in branches])
    out = (rng.random(trials) >= p_table[branch, kb, kc]).astype(np.int64)
    ghz = np.bincount(_cell_index(a_all, bits[:, 0], out), minlength=16)

    # sifted GHZ rounds must obey the same parity as direct ones
    all_b = np.zeros((trials, n), dtype=np.int64)
    all_b[:, virtual] = bits
    all_b[:, 1] = bc[:, 0]
    all_b[:, 2] = bc[:, 1]
    sifted = a_all.sum(axis=1) % 2 == 0
    predicted = (all_b.sum(axis=1) + parity_offset(a_all)) % 2
    violations = int(np.count_nonzero(sifted & (predicted != out)))

    tv = 0.5 * float(np.abs(direct - ghz).sum()) / trials
    return EquivalenceReport(n, trials, tv, direct, ghz, bool(minus_ok), violations)
