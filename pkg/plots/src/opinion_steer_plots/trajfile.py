"""Reader for the trajectory CSVs written by the opinion-steer CLI.

Deliberately independent of the simulation package: figures are built from
the files alone, so the (small) amount of parsing lives here instead of
being imported. The format is one header line

    step,agent_id,opinion,active,control,actuation_prob

followed by one row per (step, agent) pair. Rows at the final step carry
only the opinion; active/control/actuation_prob are empty there, and
actuation_prob is empty everywhere for runs with a fixed active set. A
`<base>_summary.json` next to `<base>_traj.csv` supplies the policy label
and the target value when present.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

HEADER = ("step", "agent_id", "opinion", "active", "control", "actuation_prob")

# policy names the simulator can emit, matched as _-delimited tokens when a
# label has to be recovered from the filename alone
KNOWN_POLICIES = ("uncontrolled", "open_loop", "feedback", "adaptive", "baseline")


class TrajectoryFormatError(ValueError):
    """A trajectory file does not match the expected schema."""


@dataclass(frozen=True)
class Trajectory:
    """One parsed run.

    states is (steps+1, agents); indicators and actuation_probs cover the
    steps actually taken, so they have one row less.
    """

    path: Path
    label: str
    target: float | None
    states: np.ndarray
    indicators: np.ndarray
    actuation_probs: np.ndarray | None

    @property
    def n_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_agents(self) -> int:
        return self.states.shape[1]

    def actuated_fraction(self) -> np.ndarray:
        """Per agent, the fraction of steps it was actuated."""
        if self.n_steps == 0:
            return np.zeros(self.n_agents)
        return self.indicators.mean(axis=0)


def _fail(path: Path, msg: str) -> None:
    raise TrajectoryFormatError(f"{path.name}: {msg}")


def _float_cell(path: Path, line: int, column: str, cell: str) -> float:
    try:
        return float(cell)
    except ValueError:
        _fail(path, f"line {line}: column '{column}' is not a number: {cell!r}")
    raise AssertionError  # unreachable


def read_trajectory(path: str | Path) -> Trajectory:
    """Parse one trajectory CSV; raises TrajectoryFormatError with the
    offending line and column named."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            _fail(path, "empty file, no header row")
        if tuple(header) != HEADER:
            _fail(
                path,
                f"bad header: expected {','.join(HEADER)}, found {','.join(header)}",
            )
        rows = [(line, row) for line, row in enumerate(reader, start=2)]

    if not rows:
        _fail(path, "no agent rows")

    for line, row in rows:
        if len(row) != len(HEADER):
            _fail(path, f"line {line}: expected {len(HEADER)} fields, found {len(row)}")

    parsed = []
    for line, row in rows:
        try:
            t = int(row[0])
        except ValueError:
            _fail(path, f"line {line}: column 'step' is not an integer: {row[0]!r}")
        try:
            i = int(row[1])
        except ValueError:
            _fail(path, f"line {line}: column 'agent_id' is not an integer: {row[1]!r}")
        if t < 0 or i < 0:
            _fail(path, f"line {line}: negative step or agent_id")
        parsed.append((line, t, i, row))

    n_steps = max(t for _, t, _, _ in parsed)
    n_agents = max(i for _, _, i, _ in parsed) + 1
    if len(parsed) != (n_steps + 1) * n_agents:
        _fail(
            path,
            f"expected {(n_steps + 1) * n_agents} rows for {n_agents} agents "
            f"over {n_steps} steps, found {len(parsed)}",
        )

    states = np.zeros((n_steps + 1, n_agents))
    indicators = np.zeros((n_steps, n_agents), dtype=bool)
    probs = np.zeros((n_steps, n_agents))
    seen = np.zeros((n_steps + 1, n_agents), dtype=bool)
    prob_cells = 0
    first_empty_prob: int | None = None

    for line, t, i, row in parsed:
        if seen[t, i]:
            _fail(path, f"line {line}: duplicate row for step {t}, agent {i}")
        seen[t, i] = True
        states[t, i] = _float_cell(path, line, "opinion", row[2])
        if t == n_steps:
            continue  # final step rows carry no control columns
        if row[3] not in ("0", "1"):
            _fail(path, f"line {line}: column 'active' must be 0 or 1, found {row[3]!r}")
        indicators[t, i] = row[3] == "1"
        _float_cell(path, line, "control", row[4])
        if row[5] == "":
            if first_empty_prob is None:
                first_empty_prob = line
        else:
            probs[t, i] = _float_cell(path, line, "actuation_prob", row[5])
            prob_cells += 1

    if not seen.all():
        t, i = map(int, np.argwhere(~seen)[0])
        _fail(path, f"missing row for step {t}, agent {i}")
    if prob_cells and first_empty_prob is not None:
        _fail(
            path,
            f"line {first_empty_prob}: column 'actuation_prob' is empty here "
            "but set on other rows",
        )

    label, target = _sidecar_info(path)
    return Trajectory(
        path=path,
        label=label,
        target=target,
        states=states,
        indicators=indicators,
        actuation_probs=probs if prob_cells else None,
    )


def _sidecar_info(path: Path) -> tuple[str, float | None]:
    """Label and target from `<base>_summary.json`, else from the filename."""
    stem = path.stem.removesuffix("_traj")
    sidecar = path.with_name(f"{stem}_summary.json")
    if sidecar.is_file():
        try:
            summary = json.loads(sidecar.read_text())
            label = str(summary["policy"])
            target = summary["config"]["scenario"]["cost"]["target"]
            return label, float(target)
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            pass  # unreadable sidecar: fall through to the filename
    token_view = f"_{stem}_"
    for name in KNOWN_POLICIES:
        if f"_{name}_" in token_view:
            return name, None
    return stem, None
