"""Subnetwork scenario: mobile clients, edge servers, sensing targets.

Positions live in a square area. Channel quality follows a distance power
law; sensing coverage is a closed disc around the client.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class SensingMode(Enum):
    VS = "vs"  # camera sensing, no spectrum use
    WS = "ws"  # wireless sensing, draws on the shared spectrum


@dataclass(frozen=True)
class ChannelParams:
    tx_power_w: float = 0.5
    path_loss_exp: float = 2.8
    noise_power_w: float = 6e-13
    reference_gain: float = 1e-4  # channel gain at 1 m
    min_distance_m: float = 1.0


@dataclass(frozen=True)
class Client:
    client_id: int
    position: tuple[float, float]
    velocity: tuple[float, float]
    sensing_mode: SensingMode
    sensing_radius_m: float
    # Per-model task sizes for one learning round.
    dl_bits: tuple[float, ...]
    ul_bits: tuple[float, ...]
    cycles_per_sample: tuple[float, ...]


@dataclass(frozen=True)
class EdgeServer:
    edge_id: int
    position: tuple[float, float]
    # Class mixture of the model each edge hosts, one row per model variant.
    model_mixtures: tuple[tuple[float, ...], ...]


@dataclass(frozen=True)
class Target:
    target_id: int
    position: tuple[float, float]
    class_id: int


@dataclass
class Scenario:
    area_m: float
    clients: list[Client]
    edges: list[EdgeServer]
    targets: list[Target]
    num_classes: int
    channel: ChannelParams
    time_s: float = 0.0


@dataclass(frozen=True)
class ScenarioConfig:
    area_m: float = 500.0
    num_clients: int = 50
    num_targets: int = 100
    num_edges: int = 4
    num_classes: int = 4
    num_models: int = 1
    v_max_mps: float = 15.0
    vs_radius_m: float = 60.0
    ws_radius_m: float = 100.0
    # Class skew: each target class is drawn with one class given this weight
    # and the rest sharing the remainder, per edge model mixture.
    dominant_share: float = 0.7
    dl_bits_base: float = 2e6
    ul_bits_base: float = 1e6
    cycles_base: float = 1e7
    channel: ChannelParams = field(default_factory=ChannelParams)


def generate_scenario(config: ScenarioConfig, seed: int) -> Scenario:
    """Sample a scenario. Identical (config, seed) gives identical output."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xA51C]))
    area = config.area_m

    clients = []
    for i in range(config.num_clients):
        pos = tuple(rng.uniform(0.0, area, size=2))
        speed = rng.uniform(0.0, config.v_max_mps)
        heading = rng.uniform(0.0, 2.0 * math.pi)
        vel = (speed * math.cos(heading), speed * math.sin(heading))
        mode = SensingMode.VS if i % 2 == 0 else SensingMode.WS
        radius = config.vs_radius_m if mode is SensingMode.VS else config.ws_radius_m
        # Model variants get progressively heavier: index m scales the base.
        dl = tuple(config.dl_bits_base * (1.0 + 0.2 * m) for m in range(config.num_models))
        ul = tuple(config.ul_bits_base * (1.0 + 0.2 * m) for m in range(config.num_models))
        cyc = tuple(config.cycles_base * (1.0 + 0.5 * m) for m in range(config.num_models))
        clients.append(Client(i, pos, vel, mode, radius, dl, ul, cyc))

    edges = []
    grid = math.ceil(math.sqrt(config.num_edges))
    for j in range(config.num_edges):
        gx, gy = j % grid, j // grid
        pos = (area * (gx + 0.5) / grid, area * (gy + 0.5) / grid)
        mixtures = []
        for m in range(config.num_models):
            dom = (j + m) % config.num_classes
            rest = (1.0 - config.dominant_share) / (config.num_classes - 1)
            mix = tuple(
                config.dominant_share if k == dom else rest
                for k in range(config.num_classes)
            )
            mixtures.append(mix)
        edges.append(EdgeServer(j, pos, tuple(mixtures)))

    targets = [
        Target(
            t,
            tuple(rng.uniform(0.0, area, size=2)),
            int(rng.integers(0, config.num_classes)),
        )
        for t in range(config.num_targets)
    ]

    return Scenario(area, clients, edges, targets, config.num_classes, config.channel)


def clone_scenario(scenario: Scenario) -> Scenario:
    """Independent copy; client records are immutable so sharing is safe."""
    return Scenario(
        area_m=scenario.area_m,
        clients=list(scenario.clients),
        edges=scenario.edges,
        targets=scenario.targets,
        num_classes=scenario.num_classes,
        channel=scenario.channel,
        time_s=scenario.time_s,
    )


def step_mobility(scenario: Scenario, dt: float) -> Scenario:
    """Advance client positions by dt seconds, reflecting at the boundary."""
    area = scenario.area_m
    moved = []
    for c in scenario.clients:
        x = c.position[0] + c.velocity[0] * dt
        y = c.position[1] + c.velocity[1] * dt
        vx, vy = c.velocity
        x, vx = _reflect(x, vx, area)
        y, vy = _reflect(y, vy, area)
        moved.append(replace(c, position=(x, y), velocity=(vx, vy)))
    scenario.clients = moved
    scenario.time_s += dt
    return scenario


def _reflect(coord: float, vel: float, area: float) -> tuple[float, float]:
    # Fold the coordinate into [0, 2*area) and mirror the upper half.
    coord = coord % (2.0 * area)
    if coord > area:
        return 2.0 * area - coord, -vel
    return coord, vel


def distance_m(a: tuple[float, float], b: tuple[float, float]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


def spectral_efficiency(client: Client, edge: EdgeServer, channel: ChannelParams) -> float:
    """Link rate per Hz between a client and an edge, bits/s/Hz."""
    d = max(distance_m(client.position, edge.position), channel.min_distance_m)
    snr = (
        channel.tx_power_w
        * channel.reference_gain
        * d ** (-channel.path_loss_exp)
        / channel.noise_power_w
    )
    return math.log2(1.0 + snr)


def sense_targets(client: Client, targets: list[Target]) -> list[Target]:
    """Targets within the client's sensing disc (boundary inclusive)."""
    return [
        t
        for t in targets
        if distance_m(client.position, t.position) <= client.sensing_radius_m
    ]


def class_counts(sensed: list[Target], num_classes: int) -> np.ndarray:
    counts = np.zeros(num_classes)
    for t in sensed:
        counts[t.class_id] += 1.0
    return counts


def local_distribution(counts: np.ndarray, epsilon: float = 1e-3) -> np.ndarray:
    """Smoothed empirical class distribution: (n_k + eps) / (N + K*eps).

    Defined for all-zero counts (gives uniform); always strictly positive
    and sums to one.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise ValueError("negative class count")
    k = counts.size
    return (counts + epsilon) / (counts.sum() + k * epsilon)
