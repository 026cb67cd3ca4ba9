"""Mean position-attack error under bounded Laplace noise, per epsilon.

    python scripts/defense_sweep.py --n 5 --seeds 20
    python scripts/defense_sweep.py --eps 0.5 1 2 5 10 100 1000 --tier PrivilegedII

Error is the relative error of the height, wingspan and room-area attacks,
each capped (a failed attack counts as the cap), averaged over users and
noise seeds.
"""

import argparse
import time

from vrleak.defense import DEFAULT_BOUNDS, epsilon_sweep
from vrleak.simulate import NoiseModel, sample_population, simulate_session
from vrleak.telemetry import Tier


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=5)
    ap.add_argument("--seed", type=int, default=21, help="population seed")
    ap.add_argument("--seeds", type=int, default=20, help="noise seeds per user")
    ap.add_argument("--eps", type=float, nargs="+", default=[0.5, 1, 2, 5, 10])
    ap.add_argument("--tier", default=Tier.PRIVILEGED_III.value, choices=[t.value for t in Tier],
                    help="trace rate the defense sees; remote tiers get the 30 Hz rebroadcast")
    ap.add_argument("--cap", type=float, default=10.0)
    args = ap.parse_args()

    start = time.perf_counter()
    sessions = [
        (simulate_session(p, noise=NoiseModel(), seed=2, tier=args.tier),
         {"height": p.height_m, "wingspan": p.wingspan_m, "room_area": p.room_area_m2})
        for p in sample_population(args.n, seed=args.seed)
    ]
    sweep = epsilon_sweep(sessions, args.eps, range(args.seeds), DEFAULT_BOUNDS, cap=args.cap)
    errs = list(sweep.values())
    print(f"{'epsilon':>9}  mean error")
    for eps, err in sweep.items():
        print(f"{eps:>9g}  {err:.4f}")
    monotone = all(a >= b for a, b in zip(errs, errs[1:]))
    print(f"non-increasing in epsilon: {monotone}  ({time.perf_counter() - start:.1f} s)")


if __name__ == "__main__":
    main()
