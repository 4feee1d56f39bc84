"""Learning-rate selectors (sandwich trace, loss-likelihood bootstrap, interval score) across densities."""
import argparse

from robust_cate.basis import parse_basis
from robust_cate.calibration import calibrate_eta, calibrate_eta_llb, rbci_omega
from robust_cate.dgp import DgpSpec, generate
from robust_cate.stages import FitConfig, derive_seed


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--densities", type=float, nargs="+", default=[0.0, 0.05, 0.2])
    p.add_argument("--seeds", type=int, default=3)
    p.add_argument("--basis", default="1")
    p.add_argument("--severity", default="severe")
    p.add_argument("--skip-slow", action="store_true", help="only the sandwich trace selector")
    args = p.parse_args()
    print("density,seed,eta_trace,min_eig_raw,eta_llb,rbci_omega,rbci_lo,rbci_hi")
    for dens in args.densities:
        for s in range(args.seeds):
            data = generate(DgpSpec("whale", 1000, 5, dens, {}, derive_seed(12, "eta", dens, s)))
            cfg = FitConfig(severity=args.severity, basis=parse_basis(args.basis), master_seed=s)
            rep = calibrate_eta(data.dataset, cfg)
            llb = rb = None
            if not args.skip_slow:
                llb = calibrate_eta_llb(data.dataset, cfg, 50, (0.5, 1.0, 2.0))
                rb = rbci_omega(data.dataset, cfg)
            cols = [f"{rep.eta:.4f}", f"{rep.min_eig_raw:.4f}",
                    f"{llb.eta}" if llb else "", f"{rb.omega}" if rb else "",
                    f"{rb.interval[0]:.4f}" if rb else "", f"{rb.interval[1]:.4f}" if rb else ""]
            print(f"{dens},{s}," + ",".join(cols))


if __name__ == "__main__":
    main()
