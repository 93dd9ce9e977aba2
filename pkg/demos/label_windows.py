"""Generate one short trace per archetype and show how a window gets its weak label.

Run: python demos/label_windows.py
"""

from archscale.archetypes import Archetype
from archscale.features import compute_features
from archscale.trace import SyntheticSpec, generate_synthetic
from archscale.weaklabel import weak_label

SPECS = [
    SyntheticSpec(Archetype.SPIKE, 240, base_rate=20, amplitude=30, noise_std=4, rng_seed=1),
    SyntheticSpec(Archetype.PERIODIC, 240, base_rate=300, amplitude=150, period_minutes=60,
                  noise_std=15, rng_seed=2),
    SyntheticSpec(Archetype.RAMP, 240, base_rate=200, slope=2, noise_std=8, rng_seed=3),
    SyntheticSpec(Archetype.STATIONARY, 240, base_rate=300, noise_std=45, rng_seed=4),
]


def main():
    for spec in SPECS:
        counts = generate_synthetic(spec).counts
        window = counts[120:180]
        fv = compute_features(window)
        label = weak_label(fv)
        votes = " ".join(f"LF{v.lf_id}={v.vote.value[:4] if v.vote else '-'}"
                         for v in label.votes)
        print(f"{spec.archetype.value:<10} mean={fv['mean']:8.1f} cv={fv['coeff_variation']:5.2f} slope={fv['ols_slope']:6.2f} "
              f"-> {label.archetype.value:<10} conf={label.confidence:.2f}")
        print(f"           {votes}")


if __name__ == "__main__":
    main()
