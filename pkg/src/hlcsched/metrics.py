"""Per-iteration metrics rows and their CSV serialization.

The CSV is the only metrics interface: header row, comma separators, '.'
decimal point, one newline-terminated line per row.  Floats are written with
repr() (shortest round-trip form) so identical runs produce byte-identical
files; wall-clock time is therefore kept in memory only and never written.
"""

from collections import deque
from dataclasses import dataclass

MOVING_AVERAGE_WINDOW = 500  # slots


@dataclass
class MetricsRow:
    iteration: int
    slot: int
    reward: float  # instantaneous effective throughput, bits/slot
    ma_reward: float  # moving average over MOVING_AVERAGE_WINDOW slots
    drop_prob: float  # cumulative dropped / arrived packets
    p: "tuple[float, ...]"  # reuse probabilities at this iteration
    j_tilde: float  # smoothed cost estimate (nan outside training)
    wall_clock_ms: float = 0.0  # in-memory only; excluded from the CSV


class RewardWindow:
    """Sliding mean of per-slot rewards."""

    def __init__(self, window: int = MOVING_AVERAGE_WINDOW):
        self._buf: deque = deque(maxlen=window)
        self._total = 0.0

    def push(self, value: float):
        if len(self._buf) == self._buf.maxlen:
            self._total -= self._buf[0]
        self._buf.append(value)
        self._total += value

    def mean(self) -> float:
        if not self._buf:
            return 0.0
        return self._total / len(self._buf)


def _fmt(value: float) -> str:
    return repr(float(value))


def csv_header(n_components: int) -> str:
    p_cols = ",".join(f"p_{i}" for i in range(n_components))
    return f"iteration,slot,reward,ma_reward,drop_prob,{p_cols},j_tilde"


def csv_line(row: MetricsRow) -> str:
    p_cols = ",".join(_fmt(v) for v in row.p)
    return (f"{row.iteration},{row.slot},{_fmt(row.reward)},{_fmt(row.ma_reward)},"
            f"{_fmt(row.drop_prob)},{p_cols},{_fmt(row.j_tilde)}")


def write_metrics_csv(path, rows: "list[MetricsRow]"):
    if not rows:
        raise ValueError("no metrics rows to write")
    n_components = len(rows[0].p)
    with open(path, "w", newline="") as fh:
        fh.write(csv_header(n_components) + "\n")
        for row in rows:
            if len(row.p) != n_components:
                raise ValueError("inconsistent reuse-probability dimension")
            fh.write(csv_line(row) + "\n")
