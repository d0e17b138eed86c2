"""Find the short Henon-Heiles orbit at H = 1/7 from a near-sharp certificate.

Builds the d_w=3 identity at a fixed C (default 431.2, just above the
smallest value that validates), validates it, minimizes the certificate's
left-hand side over the section x4 = 0 on the energy surface and refines the
best seeds by shooting. Prints each orbit with its period against the bound.

    python3 scripts/hunt_orbit.py
    python3 scripts/hunt_orbit.py --C 432 --n-starts 100 --save hh3.cert
"""
import argparse
from fractions import Fraction

from minperiod.certify import attempt_certificate, finalize, write_certificate
from minperiod.orbitlab import NoConvergence, prime_period, refine_orbit, residual_scan, same_orbit
from minperiod.sosbuilder import DegreeConfig, assemble_identity, build_library
from minperiod.systems import henon_heiles, henon_heiles_hamiltonian


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--C", default="431.2")
    ap.add_argument("--dw", type=int, default=3)
    ap.add_argument("--n-starts", type=int, default=40)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--save", help="write the certificate here")
    args = ap.parse_args(argv)

    system = henon_heiles()
    cfg = DegreeConfig.lie_span_preset(args.dw)
    identity = assemble_identity(system, build_library(system, cfg), cfg, Fraction(args.C))
    status, cert = attempt_certificate(identity, prune_rounds=5)
    if cert is None:
        raise SystemExit(f"C={args.C} did not validate (solver: {status})")
    bound = finalize(cert)
    print(f"validated C={args.C} with {cfg.label()}: T >= {bound.render()}")
    if args.save:
        write_certificate(cert, args.save)

    seeds = residual_scan(cert, system, section=(3, 0.0), n_starts=args.n_starts, seed=args.seed)
    H = henon_heiles_hamiltonian()
    orbits = []
    for s in seeds:
        print(f"seed residual={s.residual:.3e} period guess={s.T:.4f} x0={s.x0.round(4).tolist()}")
        if s.T != s.T:
            continue
        try:
            orb = prime_period(system, refine_orbit(system, s.x0, s.T, section=(3, 0.0)), section=(3, 0.0))
        except NoConvergence:
            continue
        orb.residual = s.residual
        if not any(same_orbit(orb, o, system) for o in orbits):
            orbits.append(orb)
    print()
    for orb in sorted(orbits, key=lambda o: o.T):
        print(orb.report(system.names, bound.approx), f"H={H.evaluate_float(orb.x0):.8f}")


if __name__ == "__main__":
    main()
