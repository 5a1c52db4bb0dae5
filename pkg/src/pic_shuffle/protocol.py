"""One PIC round: users, shuffler and server run in-process.

Values that cross a role boundary (envelopes, bulletin entries, direct
messages) travel as bytes through the wire codecs in :mod:`envelope`, so no
role reads another role's memory.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import envelope as env
from .envelope import DecryptionError, Entropy, Envelope, KeyPair
from .geometry import DomainSpec
from .randomizers import MECHANISMS, Randomizer, make_randomizer
from .tasks import (
    TASKS,
    BipartiteInstance,
    gradient_aggregate,
    max_matching_within_radius,
    min_weight_full_matching,
    radius_nn,
    shapley_exact,
    shapley_monte_carlo,
)

EXACT_SHAPLEY_MAX = 12
Entry = tuple[bytes, np.ndarray]


class ConfigurationError(ValueError):
    """Invalid published parameters."""


class RoundAborted(RuntimeError):
    """An envelope failed to decrypt or decode; the round produced no output."""

    def __init__(self, failures: int, group: int):
        super().__init__(f"round aborted: {failures} envelope(s) in group {group} failed to open")
        self.failures = failures
        self.group = group


class MixedDimensionError(ValueError):
    """A group's reports do not share the declared dimension."""


class DeliveryError(LookupError):
    """No bulletin entry carries the user's one-time public key."""


class IntegrityError(RuntimeError):
    """The user's bulletin entry did not decrypt or decode."""


# ---------------------------------------------------------------- parameters


@dataclass(frozen=True)
class RandomizerSpec:
    mechanism: str
    epsilon: float
    domain: DomainSpec
    options: tuple[tuple[str, object], ...] = ()

    @classmethod
    def create(cls, mechanism: str, epsilon: float, domain: DomainSpec, **options) -> "RandomizerSpec":
        return cls(mechanism, float(epsilon), domain, tuple(sorted(options.items())))

    def build(self) -> Randomizer:
        return make_randomizer(self.mechanism, self.epsilon, self.domain, **dict(self.options))


@dataclass(frozen=True)
class GroupSpec:
    name: str
    randomizer: RandomizerSpec

    @property
    def dim(self) -> int:
        return self.randomizer.domain.dim


@dataclass(frozen=True)
class TaskSpec:
    """Server function ``f`` and its public parameters.

    Attributes:
        task_id: One of :data:`pic_shuffle.tasks.TASKS`.
        tau: Serving or search radius for ``max_matching`` and ``radius_nn``.
        grad_val: Validation gradient for ``shapley_incentive``.
        samples: Monte Carlo orderings when a Shapley group exceeds
            ``EXACT_SHAPLEY_MAX`` players.
        clip: Project debiased location estimates back into the domain.
    """

    task_id: str
    tau: float | None = None
    grad_val: tuple[float, ...] | None = None
    samples: int = 2000
    clip: bool = True


@dataclass(frozen=True)
class ServerParams:
    server_public_key: bytes
    groups: tuple[GroupSpec, ...]
    task: TaskSpec

    @property
    def task_id(self) -> str:
        return self.task.task_id


def _validate_task(task: TaskSpec, groups: tuple[GroupSpec, ...]) -> None:
    if task.task_id not in TASKS:
        raise ConfigurationError(f"unknown task {task.task_id!r}; expected one of {TASKS}")
    if task.task_id in ("min_weight_matching", "max_matching") and len(groups) != 2:
        raise ConfigurationError(f"{task.task_id} needs exactly 2 groups, got {len(groups)}")
    if task.task_id in ("max_matching", "radius_nn") and not (task.tau is not None and task.tau > 0):
        raise ConfigurationError(f"{task.task_id} needs a positive tau")
    if task.task_id == "shapley_incentive":
        if len(groups) != 1:
            raise ConfigurationError("shapley_incentive runs over a single group")
        if task.grad_val is None or len(task.grad_val) != groups[0].dim:
            raise ConfigurationError("shapley_incentive needs grad_val matching the group dimension")
        if not any(v != 0 for v in task.grad_val):
            raise ConfigurationError("grad_val must be non-zero")
        if task.samples < 1:
            raise ConfigurationError("samples must be >= 1")
    if task.task_id in ("min_weight_matching", "max_matching") and groups[0].dim != groups[1].dim:
        raise ConfigurationError("matched groups must share a dimension")


def server_setup(
    groups: Sequence[str],
    specs: Mapping[str, RandomizerSpec],
    task: TaskSpec | str,
    entropy: Entropy,
) -> tuple[ServerParams, KeyPair]:
    """Publish the round parameters and generate the server key pair.

    Raises:
        ConfigurationError: No groups, a group without a spec, an invalid spec,
            or a task that does not fit the groups.
    """
    if isinstance(task, str):
        task = TaskSpec(task)
    if not groups:
        raise ConfigurationError("at least one group is required")
    if len(set(groups)) != len(groups):
        raise ConfigurationError("group names must be unique")
    built = []
    for name in groups:
        if name not in specs:
            raise ConfigurationError(f"group {name!r} has no randomizer spec")
        spec = specs[name]
        if spec.mechanism not in MECHANISMS:
            raise ConfigurationError(f"group {name!r}: unknown mechanism {spec.mechanism!r}")
        if not spec.epsilon > 0:
            raise ConfigurationError(f"group {name!r}: epsilon must be positive")
        try:
            spec.build()
        except ValueError as exc:
            raise ConfigurationError(f"group {name!r}: {exc}") from exc
        built.append(GroupSpec(name, spec))
    group_specs = tuple(built)
    _validate_task(task, group_specs)
    keys = env.keygen(entropy)
    return ServerParams(keys.public_key, group_specs, task), keys


# ---------------------------------------------------------------- users


@dataclass
class UserState:
    group_index: int
    data: np.ndarray
    one_time_keys: KeyPair | None = None
    report: np.ndarray | None = field(default=None, repr=False)
    received_output: list[Entry] | None = None


def make_users(groups_data: Sequence) -> list[list[UserState]]:
    return [[UserState(g, np.asarray(x, dtype=float)) for x in np.atleast_2d(data)] for g, data in enumerate(groups_data)]


def user_prepare(state: UserState, params: ServerParams, rng: np.random.Generator, entropy: Entropy) -> Envelope:
    """Randomize, key and seal one user's report.

    A fresh one-time key pair is generated on every call and stored in
    ``state``; keys are never reused across rounds.
    """
    if not 0 <= state.group_index < len(params.groups):
        raise ValueError(f"group index {state.group_index} out of range")
    spec = params.groups[state.group_index].randomizer
    x = np.asarray(state.data, dtype=float)
    if x.shape != (spec.domain.dim,) or not spec.domain.contains(x):
        raise ValueError("user data must be a vector inside the group's domain")
    report = np.asarray(spec.build().sample(x, rng), dtype=float)
    keys = env.keygen(entropy)
    state.one_time_keys = keys
    state.report = report
    state.received_output = None
    return env.seal_report(params.server_public_key, keys.public_key, report, entropy)


# ---------------------------------------------------------------- server


@dataclass(frozen=True)
class BulletinEntry:
    public_key: bytes
    encrypted_output: bytes

    def to_bytes(self) -> bytes:
        return env.frame(self.public_key) + env.frame(self.encrypted_output)


def export_bulletin(entries: Sequence[BulletinEntry]) -> bytes:
    return b"".join(e.to_bytes() for e in entries)


def import_bulletin(buf: bytes) -> list[BulletinEntry]:
    out, pos = [], 0
    while pos < len(buf):
        pk, pos = env.unframe(buf, pos)
        ct, pos = env.unframe(buf, pos)
        out.append(BulletinEntry(pk, ct))
    return out


@dataclass(frozen=True)
class TranscriptEvent:
    event: str
    group: int
    count: int

    def to_text(self) -> str:
        return f"event={self.event} group={self.group} count={self.count}"


@dataclass(frozen=True)
class ServerView:
    """What the server may learn: ``L``, ``f(L)`` and leakage for corrupted senders.

    ``reports[g][k]`` and ``outputs[g][k]`` refer to shuffled position ``k``.
    """

    reports: tuple[tuple[Entry, ...], ...]
    outputs: tuple[tuple[tuple[Entry, ...], ...], ...]
    leakage: tuple[frozenset, ...]


@dataclass
class Transcript:
    events: list[TranscriptEvent] = field(default_factory=list)
    view: ServerView | None = None

    def record(self, event: str, group: int, count: int) -> None:
        self.events.append(TranscriptEvent(event, group, int(count)))

    def export_text(self) -> str:
        return "".join(e.to_text() + "\n" for e in self.events)


@dataclass(frozen=True)
class RoundResult:
    bulletin: tuple[tuple[BulletinEntry, ...], ...]
    transcript: Transcript


def _estimates(reports: Sequence[Entry], spec: RandomizerSpec, clip: bool) -> np.ndarray:
    raw = np.array([vec for _, vec in reports], dtype=float).reshape(len(reports), spec.domain.dim)
    est = np.asarray(spec.build().debias(raw), dtype=float)
    return spec.domain.project(est) if clip else est


def _matched_outputs(L, params: ServerParams, matching) -> list[list[list[Entry]]]:
    a, b = L
    out_a: list[list[Entry]] = [[] for _ in a]
    out_b: list[list[Entry]] = [[] for _ in b]
    for i, j in matching.pairs:
        out_a[i] = [b[j]]
        out_b[j] = [a[i]]
    return [out_a, out_b]


def compute_outputs(L: Sequence[Sequence[Entry]], params: ServerParams, rng: np.random.Generator) -> list[list[list[Entry]]]:
    """Evaluate ``f`` on the shuffled lists; one entry list per anonymous position.

    Matching tasks hand each matched user the partner's ``(public key, raw
    report)`` and unmatched users an empty list. ``radius_nn`` hands each user
    all neighbors' pairs. ``shapley_incentive`` returns the user's Shapley
    value and the aggregate gradient.
    """
    task = params.task
    tid = task.task_id
    if tid == "identity":
        return [[[entry] for entry in group] for group in L]
    if tid in ("min_weight_matching", "max_matching"):
        est = [_estimates(L[g], params.groups[g].randomizer, task.clip) for g in range(2)]
        inst = BipartiteInstance(est[0], est[1], task.tau)
        m = min_weight_full_matching(inst) if tid == "min_weight_matching" else max_matching_within_radius(inst)
        return _matched_outputs(L, params, m)
    if tid == "radius_nn":
        outs = []
        for g, group in enumerate(L):
            est = _estimates(group, params.groups[g].randomizer, task.clip)
            nbrs = radius_nn(est, task.tau)
            outs.append([[group[j] for j in nbrs[i]] for i in range(len(group))])
        return outs
    if tid == "shapley_incentive":
        group = L[0]
        grads = _estimates(group, params.groups[0].randomizer, clip=False)
        gv = np.asarray(task.grad_val, dtype=float)
        if len(group) <= EXACT_SHAPLEY_MAX:
            sv = shapley_exact(grads, gv)
        else:
            sv = shapley_monte_carlo(grads, gv, task.samples, rng)
        agg = gradient_aggregate(grads)
        return [[[(b"", np.array([v])), (b"", agg)] for v in sv.values]]
    raise ConfigurationError(f"unknown task {tid!r}")


def _normalize_corrupted(corrupted, n_groups: int) -> list[set[int]]:
    if corrupted is None:
        return [set() for _ in range(n_groups)]
    sets = [set(int(i) for i in c) for c in corrupted]
    if len(sets) != n_groups:
        raise ValueError("need one corrupted-index set per group")
    return sets


def run_round(
    envelopes: Sequence[Sequence[Envelope]],
    params: ServerParams,
    server_keys: KeyPair,
    rng: np.random.Generator,
    entropy: Entropy,
    corrupted: Sequence[Iterable[int]] | None = None,
    keep_transcript: bool = False,
) -> RoundResult:
    """Shuffle, decrypt, compute ``f`` and publish the bulletin.

    Args:
        envelopes: Submitted envelopes per group, in submission order.
        corrupted: Per group, submission indices whose senders collude with
            the server; their shuffle positions leak.
        keep_transcript: Retain ``L``, ``f(L)`` and the leakage. Otherwise
            only per-event counts are kept.

    Raises:
        RoundAborted: Any envelope fails to decrypt or decode.
        MixedDimensionError: A group mixes envelope sizes or report dimensions.
    """
    if len(envelopes) != len(params.groups):
        raise ValueError(f"expected {len(params.groups)} groups of envelopes, got {len(envelopes)}")
    corrupt = _normalize_corrupted(corrupted, len(envelopes))
    transcript = Transcript()
    L: list[list[Entry]] = []
    leakage = []
    for g, batch in enumerate(envelopes):
        transcript.record("receive", g, len(batch))
        if len(batch) == 0:
            raise ValueError(f"group {g} submitted no envelopes")
        if len({len(e.ciphertext) for e in batch}) != 1:
            raise MixedDimensionError(f"group {g} mixes envelope sizes")
        shuffled = env.shuffle(list(batch), corrupt[g], rng)
        transcript.record("shuffle", g, len(shuffled.permuted))
        transcript.record("leak", g, len(shuffled.leakage))
        leakage.append(shuffled.leakage)
        opened, failures = [], 0
        for e in shuffled.permuted:
            try:
                opened.append(env.open_report(server_keys.secret_key, e))
            except (DecryptionError, env.CodecError):
                failures += 1
        if failures:
            transcript.record("abort", g, failures)
            raise RoundAborted(failures, g)
        dim = params.groups[g].dim
        if any(len(vec) != dim for _, vec in opened):
            raise MixedDimensionError(f"group {g} has reports not of dimension {dim}")
        transcript.record("decrypt", g, len(opened))
        L.append(opened)
    outputs = compute_outputs(L, params, rng)
    bulletin = []
    for g, (group, outs) in enumerate(zip(L, outputs)):
        entries = tuple(
            BulletinEntry(pk, env.encrypt(pk, env.encode_payload(y), entropy)) for (pk, _), y in zip(group, outs)
        )
        transcript.record("publish", g, len(entries))
        bulletin.append(entries)
    if keep_transcript:
        transcript.view = ServerView(
            tuple(tuple(group) for group in L),
            tuple(tuple(tuple(y) for y in outs) for outs in outputs),
            tuple(leakage),
        )
    return RoundResult(tuple(bulletin), transcript)


# ---------------------------------------------------------------- retrieval


def user_retrieve(bulletin: Sequence[Sequence[BulletinEntry]] | Sequence[BulletinEntry], state: UserState) -> list[Entry]:
    """Find the entry under the user's one-time key and decrypt it.

    Accepts either the per-group bulletin or one flat list of entries.
    """
    if state.one_time_keys is None:
        raise DeliveryError("user has not submitted in this round")
    pk = state.one_time_keys.public_key
    flat = []
    for item in bulletin:
        if isinstance(item, BulletinEntry):
            flat.append(item)
        else:
            flat.extend(item)
    matches = [e for e in flat if e.public_key == pk]
    if not matches:
        raise DeliveryError("no bulletin entry for this public key")
    if len(matches) > 1:
        raise IntegrityError("more than one bulletin entry for this public key")
    try:
        payload = env.decode_payload(env.decrypt(state.one_time_keys.secret_key, matches[0].encrypted_output))
    except (DecryptionError, env.CodecError) as exc:
        raise IntegrityError("bulletin entry failed to open") from exc
    state.received_output = payload
    return payload


# ---------------------------------------------------------------- messaging


@dataclass(frozen=True)
class DirectMessage:
    recipient_public_key: bytes
    ciphertext: bytes
    signature: bytes
    sender_public_key: bytes

    def to_bytes(self) -> bytes:
        return b"".join(
            env.frame(f) for f in (self.recipient_public_key, self.ciphertext, self.signature, self.sender_public_key)
        )

    @classmethod
    def from_bytes(cls, buf: bytes) -> "DirectMessage":
        fields, pos = [], 0
        for _ in range(4):
            f, pos = env.unframe(buf, pos)
            fields.append(f)
        if pos != len(buf):
            raise env.CodecError("trailing bytes after message", pos)
        return cls(*fields)


@dataclass
class Board:
    """Append-only public board of serialized direct messages."""

    posts: list[bytes] = field(default_factory=list)

    def post(self, message: DirectMessage) -> None:
        self.posts.append(message.to_bytes())

    def __len__(self) -> int:
        return len(self.posts)


@dataclass(frozen=True)
class Inbox:
    messages: list[tuple[bytes, bytes]]
    dropped: int


def post_message_send(
    sender: UserState, recipient_pk: bytes, plaintext: bytes, board: Board, entropy: Entropy
) -> DirectMessage:
    """Encrypt to ``recipient_pk``, sign the ciphertext and post it."""
    if sender.one_time_keys is None:
        raise ValueError("sender has no one-time keys")
    ct = env.encrypt(recipient_pk, plaintext, entropy)
    msg = DirectMessage(recipient_pk, ct, env.sign(sender.one_time_keys.secret_key, ct), sender.one_time_keys.public_key)
    board.post(msg)
    return msg


def post_message_receive(board: Board, recipient: UserState) -> Inbox:
    """Verified messages addressed to the recipient; failures are dropped and counted."""
    if recipient.one_time_keys is None:
        raise ValueError("recipient has no one-time keys")
    keys = recipient.one_time_keys
    got, dropped = [], 0
    for raw in board.posts:
        msg = DirectMessage.from_bytes(raw)
        if msg.recipient_public_key != keys.public_key:
            continue
        if not env.verify(msg.sender_public_key, msg.ciphertext, msg.signature):
            dropped += 1
            continue
        try:
            got.append((msg.sender_public_key, env.decrypt(keys.secret_key, msg.ciphertext)))
        except DecryptionError:
            dropped += 1
    return Inbox(got, dropped)


# ---------------------------------------------------------------- driver


@dataclass(frozen=True)
class SimulationResult:
    users: list[list[UserState]]
    round: RoundResult
    delivered: int
    failed: int

    @property
    def delivery_rate(self) -> float:
        total = self.delivered + self.failed
        return self.delivered / total if total else math.nan


def simulate_round(
    users: Sequence[Sequence[UserState]],
    params: ServerParams,
    server_keys: KeyPair,
    rng: np.random.Generator,
    entropy: Entropy,
    corrupted: Sequence[Iterable[int]] | None = None,
    keep_transcript: bool = False,
) -> SimulationResult:
    """Prepare, submit, run and retrieve for every user, crossing roles as bytes."""
    wire = [[user_prepare(u, params, rng, entropy).to_bytes() for u in group] for group in users]
    received = [[Envelope.from_bytes(b) for b in group] for group in wire]
    result = run_round(received, params, server_keys, rng, entropy, corrupted, keep_transcript)
    published = [import_bulletin(export_bulletin(group)) for group in result.bulletin]
    delivered = failed = 0
    for g, group in enumerate(users):
        for u in group:
            try:
                user_retrieve(published[g], u)
                delivered += 1
            except (DeliveryError, IntegrityError):
                failed += 1
    return SimulationResult([list(g) for g in users], result, delivered, failed)
