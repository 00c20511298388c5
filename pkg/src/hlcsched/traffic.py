"""Bursty traffic and hard-deadline FCFS queues.

Each user has an individual FCFS queue.  At most one packet arrives per user
per slot (probability ``arrival_prob``), its size drawn Poisson in Kbit and
stored in integer bits so that bit conservation over a run is exact.  A packet
that is not fully delivered within its user's deadline (in slots) is dropped
at the start of the slot where its age reaches the deadline.

Per-slot event order: expire -> arrive -> serve -> reward.
"""

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

BITS_PER_KBIT = 1000


@dataclass
class Packet:
    arrival_slot: int
    original_bits: int
    remaining_bits: int

    def __post_init__(self):
        if self.original_bits <= 0:
            raise ValueError("packet original size must be positive")
        if not 0 <= self.remaining_bits <= self.original_bits:
            raise ValueError("remaining bits outside [0, original]")


class UserQueue:
    """FCFS queue of one user, with hard deadline ``deadline`` slots."""

    def __init__(self, user: int, deadline: int):
        if deadline < 1:
            raise ValueError("deadline must be >= 1 slot")
        self.user = user
        self.deadline = int(deadline)
        self.packets: deque[Packet] = deque()

    def __len__(self) -> int:
        return len(self.packets)

    def backlog_bits(self) -> int:
        return sum(p.remaining_bits for p in self.packets)

    def arrive(self, slot: int, rng: np.random.Generator, arrival_prob: float,
               mean_kbit: float) -> "Packet | None":
        """One Bernoulli(arrival_prob) arrival of Poisson(mean_kbit) Kbit.

        Zero-length Poisson draws are resampled (a zero-length packet is
        meaningless).  Must be called exactly once per slot, before service.
        """
        if self.packets and self.packets[-1].arrival_slot >= slot:
            raise ValueError("arrive() called twice for the same slot")
        if rng.random() >= arrival_prob:
            return None
        size_kbit = int(rng.poisson(mean_kbit))
        while size_kbit == 0:
            size_kbit = int(rng.poisson(mean_kbit))
        bits = size_kbit * BITS_PER_KBIT
        packet = Packet(arrival_slot=slot, original_bits=bits, remaining_bits=bits)
        self.packets.append(packet)
        if len(self.packets) > self.deadline:
            raise AssertionError("queue exceeded deadline-many packets")
        return packet

    def serve(self, bits_budget: float) -> "list[Packet]":
        """Consume head-first; return delivered packets.

        A packet is delivered iff the backlog ahead of it plus its remaining
        bits fits in the budget.  The first unsatisfied packet absorbs the
        leftover budget.  The budget is floored to an integer bit count, which
        leaves the delivery condition unchanged for integer-sized packets and
        keeps all queue state integral.
        """
        if bits_budget < 0:
            raise ValueError("bits budget must be >= 0")
        budget = int(math.floor(bits_budget))
        delivered = []
        while self.packets and self.packets[0].remaining_bits <= budget:
            packet = self.packets.popleft()
            budget -= packet.remaining_bits
            delivered.append(packet)
        if self.packets and budget > 0:
            self.packets[0].remaining_bits -= budget
        return delivered

    def expire(self, slot: int) -> "list[Packet]":
        """Drop packets whose age reached the deadline at the start of ``slot``."""
        dropped = []
        cutoff = slot - self.deadline
        while self.packets and self.packets[0].arrival_slot <= cutoff:
            dropped.append(self.packets.popleft())
        return dropped


@dataclass
class SlotOutcome:
    """Service bookkeeping of one slot."""

    delivered: "list[tuple[int, Packet]]" = field(default_factory=list)
    dropped: "list[tuple[int, Packet]]" = field(default_factory=list)
    bits_served: np.ndarray = None  # actually transmitted bits per user
    budget_bits: np.ndarray = None  # floor(R_i * tau) per user


def hlc_et_reward(outcome: SlotOutcome, tau: float = 1.0) -> float:
    """Effective throughput of the slot: (1/tau) * sum of delivered original sizes.

    Only packets delivered before their deadline contribute, and they
    contribute their full original length.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return sum(p.original_bits for _, p in outcome.delivered) / tau


def queue_state_vectors(queues: "list[UserQueue]", slot: int):
    """Fixed-layout (remaining, original) bit vectors of all queues.

    Layout is user-major, age-major with the oldest position first: user i
    occupies a block of length deadline_i whose position j holds the packet
    that arrived at slot - deadline_i + 1 + j (zero if absent).
    """
    total = sum(q.deadline for q in queues)
    remaining = np.zeros(total, dtype=np.int64)
    original = np.zeros(total, dtype=np.int64)
    offset = 0
    for q in queues:
        base = slot - q.deadline + 1
        for packet in q.packets:
            j = packet.arrival_slot - base
            if not 0 <= j < q.deadline:
                raise ValueError("packet outside the representable age window")
            remaining[offset + j] = packet.remaining_bits
            original[offset + j] = packet.original_bits
        offset += q.deadline
    return remaining, original
