"""Replay a three-hour ramp through HPA, the forecasting baseline and AAPA.

AAPA uses the weak-label rules as its classifier here, so no trained model is
needed. Run: python demos/compare_one_scenario.py
"""

from archscale.archetypes import Archetype
from archscale.autoscaler import (AapaStrategy, HpaStrategy, PredictiveStrategy,
                                  weak_label_classifier)
from archscale.metrics import compute_metrics, compute_rei
from archscale.simulator import SimConfig, run_simulation
from archscale.trace import SyntheticSpec, generate_synthetic

PREFIX = 60


def main():
    spec = SyntheticSpec(Archetype.RAMP, PREFIX + 180, base_rate=600, slope=4, noise_std=30,
                         rng_seed=11)
    counts = generate_synthetic(spec).counts
    history, replay = counts[:PREFIX], counts[PREFIX:]
    sim = SimConfig()
    strategies = {
        "hpa": HpaStrategy(),
        "predictive": PredictiveStrategy(sim.capacity_rps_per_pod),
        "aapa": AapaStrategy(weak_label_classifier()),
    }
    print(f"ramp {replay[0]} -> {replay[-1]} req/min over {len(replay)} minutes")
    print(f"{'strategy':<11}{'viol':>8}{'p95 ms':>9}{'pod-min':>9}{'starts':>8}{'events':>8}"
          f"{'REI':>7}")
    for name, strategy in strategies.items():
        log = run_simulation(replay, strategy, sim, history_prefix=history)
        rep = compute_metrics(log)
        rei = compute_rei(rep).rei
        print(f"{name:<11}{rep.slo_violation_rate:>8.4f}{rep.p95_ms:>9.1f}"
              f"{rep.replica_minutes:>9.1f}{rep.cold_starts:>8d}{rep.scaling_events:>8d}"
              f"{rei:>7.3f}")


if __name__ == "__main__":
    main()
