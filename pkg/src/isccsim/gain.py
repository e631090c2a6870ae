"""Learning performance gain and the client-model bipartite gain graph.

Gain for a (client, model) pair multiplies how well the client's sensed
class mix matches the model's training mix (relative-entropy similarity)
by a concave function of how many samples the client can actually push
through a round (the achievable workload).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import Scenario, SensingMode, class_counts, local_distribution, sense_targets, spectral_efficiency
from .workload import WorkloadProblem, WorkloadSolution, solve_workload


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class SensingParams:
    """Sensing-process constants shared by every client of a mode."""

    tau_s: float = 0.03           # camera seconds per sample
    sigma: float = 5e4            # wireless sensing bits per sample
    rho: float = 2.0              # wireless sensing spectral efficiency
    samples_per_target: int = 4   # per-round sample yield per covered target
    epsilon: float = 1e-3         # distribution smoothing


def similarity(p: np.ndarray, q: np.ndarray) -> float:
    """s = exp(-KL(p||q)) in (0, 1]; 1 iff the distributions coincide.

    Direction: p is the client's data, q the model's domain, so mass the
    model has never seen is what gets penalized.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DimensionMismatch(f"{p.shape} vs {q.shape}")
    if np.any(p <= 0.0) or np.any(q <= 0.0):
        raise ValueError("distributions must be smoothed strictly positive")
    kl = float(np.sum(p * np.log(p / q)))
    return math.exp(-kl)


def gain(s: float, w: float) -> float:
    """Learning performance gain g = s * ln(1 + W)."""
    if not 0.0 < s <= 1.0 + 1e-12:
        raise ValueError(f"similarity {s} outside (0, 1]")
    if w < 0:
        raise ValueError("workload must be >= 0")
    return s * math.log1p(w)


@dataclass(frozen=True)
class GainEdge:
    client_id: int
    model_id: int
    weight: float
    workload: int
    similarity: float
    problem: WorkloadProblem
    solution: WorkloadSolution


@dataclass
class GainGraph:
    client_ids: list[int]
    model_ids: list[int]
    vertex_features: dict[int, np.ndarray]  # client_id -> features
    edges: list[GainEdge]
    _index: dict[tuple[int, int], GainEdge] = field(default_factory=dict)

    def __post_init__(self):
        if not self._index:
            self._index = {(e.client_id, e.model_id): e for e in self.edges}

    def edge(self, client_id: int, model_id: int) -> GainEdge:
        return self._index[(client_id, model_id)]

    def weight_matrix(self) -> np.ndarray:
        w = np.zeros((len(self.client_ids), len(self.model_ids)))
        for i, n in enumerate(self.client_ids):
            for j, m in enumerate(self.model_ids):
                w[i, j] = self._index[(n, m)].weight
        return w

    def to_dict(self) -> dict:
        return {
            "clients": [
                {"client_id": n, "features": self.vertex_features[n].tolist()}
                for n in self.client_ids
            ],
            "models": list(self.model_ids),
            "edges": [
                {
                    "client_id": e.client_id,
                    "model_id": e.model_id,
                    "weight": e.weight,
                    "workload": e.workload,
                    "similarity": e.similarity,
                }
                for e in self.edges
            ],
        }


def num_models(scenario: Scenario) -> int:
    return len(scenario.edges) * len(scenario.edges[0].model_mixtures)


def model_edge_variant(scenario: Scenario, model_id: int) -> tuple[int, int]:
    """Map a flat model index to (edge index, variant index)."""
    variants = len(scenario.edges[0].model_mixtures)
    return model_id // variants, model_id % variants


def build_gain_graph(
    scenario: Scenario,
    t_gen: float,
    t_cons: float,
    residuals: list[tuple[float, float]],
    sensing: SensingParams,
    coupled: bool,
) -> GainGraph:
    """Weight every (client, model) pair with its achievable gain.

    residuals[i] is client i's (bandwidth Hz, compute cycles/s) budget for
    the round. A pure function: identical inputs give identical graphs.
    """
    m_count = num_models(scenario)
    model_ids = list(range(m_count))
    client_ids = [c.client_id for c in scenario.clients]
    if len(residuals) != len(scenario.clients):
        raise DimensionMismatch("one residual pair per client required")

    features: dict[int, np.ndarray] = {}
    edges: list[GainEdge] = []
    for i, client in enumerate(scenario.clients):
        b_hz, f_cps = residuals[i]
        sensed = sense_targets(client, scenario.targets)
        counts = class_counts(sensed, scenario.num_classes)
        p_local = local_distribution(counts, sensing.epsilon)
        w_cap = float(len(sensed) * sensing.samples_per_target)

        etas = []
        for m in model_ids:
            e_idx, variant = model_edge_variant(scenario, m)
            edge_srv = scenario.edges[e_idx]
            eta = spectral_efficiency(client, edge_srv, scenario.channel)
            etas.append(eta)
            problem = WorkloadProblem(
                t_gen=t_gen,
                t_cons=t_cons,
                bandwidth_hz=b_hz,
                compute_cps=f_cps,
                eta=eta,
                s_dl=client.dl_bits[variant],
                s_ul=client.ul_bits[variant],
                kappa=client.cycles_per_sample[variant],
                w_cap=w_cap,
                mode=client.sensing_mode,
                tau_s=sensing.tau_s,
                sigma=sensing.sigma,
                rho=sensing.rho,
                coupled=coupled,
            )
            sol = solve_workload(problem)
            s = similarity(p_local, np.array(edge_srv.model_mixtures[variant]))
            edges.append(
                GainEdge(
                    client_id=client.client_id,
                    model_id=m,
                    weight=gain(s, sol.w_star),
                    workload=sol.w_star,
                    similarity=s,
                    problem=problem,
                    solution=sol,
                )
            )
        features[client.client_id] = np.concatenate(
            [
                [b_hz, f_cps],
                np.array(client.position) / scenario.area_m,
                etas,
            ]
        )
    return GainGraph(client_ids, model_ids, features, edges)
