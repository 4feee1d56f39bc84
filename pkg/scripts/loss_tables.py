"""Print minimax Huber thresholds and asymptotic relative efficiencies."""
import argparse

from robust_cate.losses import huber_are, minimax_delta


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--eps", type=float, nargs="+", default=[0.01, 0.05, 0.10, 0.20, 0.40])
    p.add_argument("--delta", type=float, nargs="+", default=[0.5, 1.0, 1.345, 2.0])
    args = p.parse_args()
    print("eps,minimax_delta,are_at_minimax")
    for e in args.eps:
        d = minimax_delta(e)
        print(f"{e},{d:.4f},{huber_are(d):.4f}")
    print("\ndelta,are")
    for d in args.delta:
        print(f"{d},{huber_are(d):.4f}")


if __name__ == "__main__":
    main()
