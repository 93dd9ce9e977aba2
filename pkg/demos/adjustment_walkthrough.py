"""Print the per-archetype base parameters and how they widen as confidence drops.

Run: python demos/adjustment_walkthrough.py
"""

from archscale.autoscaler import ARCHETYPE_PARAMS, adjust_for_uncertainty

REP_BASE = 4


def main():
    print(f"rep_base = {REP_BASE}")
    print(f"{'archetype':<11}{'c':>5}{'margin':>8}{'cpu':>8}{'cool(s)':>9}{'reps':>6}")
    for arch, base in ARCHETYPE_PARAMS.items():
        for c in (1.0, 0.8, 0.5, 0.0):
            adj = adjust_for_uncertainty(base, REP_BASE, c)
            print(f"{arch.value:<11}{c:>5.1f}{adj.margin:>8.2f}{adj.cpu_adj:>8.3f}"
                  f"{adj.cool_adj:>9.0f}{adj.rep_adj:>6d}")


if __name__ == "__main__":
    main()
