"""Universal resource pools: slotted 2-D capacity grids (time x frequency and
time x compute) that sensing, communication, and computing draw on without
distinction. Allocation is claim-based and conservation-checked."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

# Absolute slack for floating-point capacity comparisons.
EPS = 1e-9


class Process(Enum):
    SENS = "sens"
    COMM_DL = "comm_dl"
    COMM_UL = "comm_ul"
    COMP = "comp"


class GridKind(Enum):
    TIME_FREQ = "time_freq"
    TIME_COMP = "time_comp"
    NONE = "none"  # time-only claim, touches no cells (camera sensing)


class PoolError(Exception):
    pass


class ConfigurationError(PoolError):
    pass


class CapacityExceeded(PoolError):
    pass


class OutOfHorizon(PoolError):
    pass


class MalformedClaim(PoolError):
    pass


# Which grid(s) each process is allowed to claim. Sensing may be wireless
# (spectrum cells) or camera-based (no cells, time window only).
_GRIDS_FOR_PROCESS = {
    Process.COMM_DL: (GridKind.TIME_FREQ,),
    Process.COMM_UL: (GridKind.TIME_FREQ,),
    Process.COMP: (GridKind.TIME_COMP,),
    Process.SENS: (GridKind.TIME_FREQ, GridKind.NONE),
}


@dataclass(frozen=True)
class Claim:
    """A uniform-amount rectangle of cells: slot_range x lanes on one grid.

    ``amount_per_cell`` is in the grid's cell unit (Hz*s for frequency
    lanes, cycles for compute lanes). A ``GridKind.NONE`` claim records a
    time window only and must carry no lanes.
    """

    client_id: int
    round_index: int
    process: Process
    grid: GridKind
    slot_range: tuple[int, int]  # [start, end)
    lanes: tuple[int, ...]
    amount_per_cell: float

    def check(self) -> None:
        s0, s1 = self.slot_range
        if s0 < 0 or s1 <= s0:
            raise MalformedClaim(f"empty or negative slot range {self.slot_range}")
        if self.grid not in _GRIDS_FOR_PROCESS[self.process]:
            raise MalformedClaim(
                f"process {self.process.value} may not claim grid {self.grid.value}"
            )
        if self.grid is GridKind.NONE:
            if self.lanes or self.amount_per_cell != 0.0:
                raise MalformedClaim("time-only claim must carry no lanes and zero amount")
        else:
            if not self.lanes:
                raise MalformedClaim("grid claim must name at least one lane")
            if len(set(self.lanes)) != len(self.lanes):
                raise MalformedClaim("duplicate lanes in claim")
            if self.amount_per_cell < 0:
                raise MalformedClaim("negative amount")

    def num_slots(self) -> int:
        return self.slot_range[1] - self.slot_range[0]


@dataclass
class ResourceGrid:
    """One slotted capacity plane with per-cell usage bookkeeping."""

    num_slots: int
    num_lanes: int
    cell_capacity: float
    used: np.ndarray  # (num_slots, num_lanes)

    @classmethod
    def empty(cls, num_slots: int, num_lanes: int, cell_capacity: float) -> "ResourceGrid":
        if num_slots < 1 or num_lanes < 1:
            raise ConfigurationError("grid dimensions must be >= 1")
        if cell_capacity <= 0:
            raise ConfigurationError("cell capacity must be > 0")
        return cls(num_slots, num_lanes, cell_capacity, np.zeros((num_slots, num_lanes)))

    def check_range(self, slot_range: tuple[int, int]) -> None:
        s0, s1 = slot_range
        if s0 < 0 or s1 > self.num_slots:
            raise OutOfHorizon(f"slot range {slot_range} outside horizon {self.num_slots}")

    def residual(self, slot_range: tuple[int, int] | None = None) -> np.ndarray:
        if slot_range is None:
            slot_range = (0, self.num_slots)
        self.check_range(slot_range)
        s0, s1 = slot_range
        return np.maximum(self.cell_capacity - self.used[s0:s1], 0.0)

    def fits(self, claim: Claim) -> bool:
        s0, s1 = claim.slot_range
        lanes = list(claim.lanes)
        cells = self.used[s0:s1][:, lanes]
        return bool(np.all(cells + claim.amount_per_cell <= self.cell_capacity + EPS))

    def apply(self, claim: Claim, sign: float) -> None:
        s0, s1 = claim.slot_range
        for lane in claim.lanes:
            self.used[s0:s1, lane] += sign * claim.amount_per_cell
        if sign < 0:
            np.clip(self.used, 0.0, None, out=self.used)


@dataclass
class UniversalResourcePool:
    """Per-client pool holding both capacity grids plus the claim ledger."""

    time_freq: ResourceGrid
    time_comp: ResourceGrid
    slot_duration: float
    claims: list[Claim] = field(default_factory=list)

    # -- spec'd operations -------------------------------------------------

    def try_allocate(self, claim: Claim) -> "UniversalResourcePool":
        """Record a claim, incrementing every touched cell.

        Raises CapacityExceeded or OutOfHorizon without mutating the pool.
        """
        claim.check()
        if claim.grid is GridKind.NONE:
            if claim.slot_range[1] > self.num_slots:
                raise OutOfHorizon(f"slot range {claim.slot_range} outside horizon")
            self.claims.append(claim)
            return self
        grid = self._grid(claim.grid)
        grid.check_range(claim.slot_range)
        if max(claim.lanes) >= grid.num_lanes:
            raise MalformedClaim(f"lane {max(claim.lanes)} outside grid of {grid.num_lanes}")
        if not grid.fits(claim):
            raise CapacityExceeded(
                f"claim {claim.process.value} r{claim.round_index} over capacity"
            )
        grid.apply(claim, +1.0)
        self.claims.append(claim)
        return self

    def residual(self, slot_range: tuple[int, int] | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Per-cell residual capacity (freq grid, comp grid) over a slot range."""
        return self.time_freq.residual(slot_range), self.time_comp.residual(slot_range)

    def release_round(self, round_index: int) -> "UniversalResourcePool":
        """Remove every claim of one round, restoring the touched cells."""
        keep: list[Claim] = []
        for claim in self.claims:
            if claim.round_index == round_index:
                if claim.grid is not GridKind.NONE:
                    self._grid(claim.grid).apply(claim, -1.0)
            else:
                keep.append(claim)
        self.claims = keep
        return self

    # -- derived quantities ------------------------------------------------

    @property
    def num_slots(self) -> int:
        return self.time_freq.num_slots

    @property
    def bandwidth_hz(self) -> float:
        """Total frequency capacity of the pool, as a bandwidth."""
        g = self.time_freq
        return g.num_lanes * g.cell_capacity / self.slot_duration

    @property
    def compute_cps(self) -> float:
        """Total compute capacity of the pool, as a rate in cycles/s."""
        g = self.time_comp
        return g.num_lanes * g.cell_capacity / self.slot_duration

    def rect_bandwidth_hz(self, slot_range: tuple[int, int]) -> float:
        """Bandwidth claimable as lane rectangles over the whole slot range.

        Per lane the binding slot is the one with least residual, so this is
        sum over lanes of the per-lane minimum. It never exceeds (and may be
        less than) the per-slot residual sum.
        """
        resid = self.time_freq.residual(slot_range)
        return float(resid.min(axis=0).sum()) / self.slot_duration

    def rect_compute_cps(self, slot_range: tuple[int, int]) -> float:
        resid = self.time_comp.residual(slot_range)
        return float(resid.min(axis=0).sum()) / self.slot_duration

    def residual_fraction(self) -> tuple[float, float]:
        """(freq, comp) residual capacity as a fraction of total capacity."""
        f = self.time_freq
        c = self.time_comp
        f_frac = float(f.residual().sum() / (f.num_slots * f.num_lanes * f.cell_capacity))
        c_frac = float(c.residual().sum() / (c.num_slots * c.num_lanes * c.cell_capacity))
        return f_frac, c_frac

    # -- lane packing ------------------------------------------------------

    def pour_bandwidth(
        self, slot_range: tuple[int, int], hz: float
    ) -> list[tuple[tuple[int, ...], float]] | None:
        """Pack a bandwidth demand onto frequency lanes over a slot range.

        Returns (lanes, amount_per_cell) groups, lowest-index lanes first,
        or None when the demand does not fit as rectangles.
        """
        return self._pour(self.time_freq, slot_range, hz * self.slot_duration)

    def pour_compute(
        self, slot_range: tuple[int, int], cps: float
    ) -> list[tuple[tuple[int, ...], float]] | None:
        return self._pour(self.time_comp, slot_range, cps * self.slot_duration)

    def _pour(
        self, grid: ResourceGrid, slot_range: tuple[int, int], per_slot_demand: float
    ) -> list[tuple[tuple[int, ...], float]] | None:
        if per_slot_demand <= EPS:
            return []
        lane_avail = grid.residual(slot_range).min(axis=0)
        takes = np.zeros(grid.num_lanes)
        remaining = per_slot_demand
        for lane in range(grid.num_lanes):
            if remaining <= EPS:
                break
            take = min(remaining, float(lane_avail[lane]))
            if take > EPS:
                takes[lane] = take
                remaining -= take
        if remaining > EPS:
            return None
        # Group consecutive lanes with equal take into one rectangle.
        groups: list[tuple[tuple[int, ...], float]] = []
        run: list[int] = []
        run_amount = 0.0
        for lane in range(grid.num_lanes):
            amt = float(takes[lane])
            if amt <= EPS:
                continue
            if run and abs(amt - run_amount) <= EPS and lane == run[-1] + 1:
                run.append(lane)
            else:
                if run:
                    groups.append((tuple(run), run_amount))
                run = [lane]
                run_amount = amt
        if run:
            groups.append((tuple(run), run_amount))
        return groups

    def _grid(self, kind: GridKind) -> ResourceGrid:
        return self.time_freq if kind is GridKind.TIME_FREQ else self.time_comp

    def clone(self) -> "UniversalResourcePool":
        return UniversalResourcePool(
            time_freq=ResourceGrid(
                self.time_freq.num_slots,
                self.time_freq.num_lanes,
                self.time_freq.cell_capacity,
                self.time_freq.used.copy(),
            ),
            time_comp=ResourceGrid(
                self.time_comp.num_slots,
                self.time_comp.num_lanes,
                self.time_comp.cell_capacity,
                self.time_comp.used.copy(),
            ),
            slot_duration=self.slot_duration,
            claims=list(self.claims),
        )

    def to_dict(self) -> dict:
        return {
            "slot_duration_s": self.slot_duration,
            "time_freq": {
                "num_slots": self.time_freq.num_slots,
                "num_lanes": self.time_freq.num_lanes,
                "cell_capacity": self.time_freq.cell_capacity,
                "used": self.time_freq.used.tolist(),
            },
            "time_comp": {
                "num_slots": self.time_comp.num_slots,
                "num_lanes": self.time_comp.num_lanes,
                "cell_capacity": self.time_comp.cell_capacity,
                "used": self.time_comp.used.tolist(),
            },
        }


@dataclass(frozen=True)
class PoolConfig:
    """Shape of every client's per-frame resource pool."""

    num_slots: int = 9
    freq_lanes: int = 4
    comp_lanes: int = 2
    slot_duration: float = 0.1
    hz_per_lane: float = 1e6
    cycles_per_lane_slot: float = 5e7

    def build(self) -> "UniversalResourcePool":
        return new_pool(
            self.num_slots,
            self.freq_lanes,
            self.comp_lanes,
            self.slot_duration,
            self.hz_per_lane,
            self.cycles_per_lane_slot,
        )


def new_pool(
    num_slots: int,
    freq_lanes: int,
    comp_lanes: int,
    slot_duration: float,
    hz_per_lane: float,
    cycles_per_lane_slot: float,
) -> UniversalResourcePool:
    """Build an empty pool.

    Frequency cells hold hz_per_lane * slot_duration Hz*s; compute cells hold
    cycles_per_lane_slot cycles.
    """
    if num_slots < 1 or freq_lanes < 1 or comp_lanes < 1:
        raise ConfigurationError("pool dimensions must be >= 1")
    if slot_duration <= 0 or hz_per_lane <= 0 or cycles_per_lane_slot <= 0:
        raise ConfigurationError("pool unit scalars must be > 0")
    return UniversalResourcePool(
        time_freq=ResourceGrid.empty(num_slots, freq_lanes, hz_per_lane * slot_duration),
        time_comp=ResourceGrid.empty(num_slots, comp_lanes, cycles_per_lane_slot),
        slot_duration=slot_duration,
    )
