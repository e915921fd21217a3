"""Solve the loop-closure unknowns from the partial reference config and compare to the table."""
import argparse

from _common import solved, write

TABLE = {"T1": 0.01784, "T3": 0.00415, "eta_n4": 992199.56, "eta_l5": 2414.07, "T5": 0.01853}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dynamics", choices=["exact", "analytic"], default="exact")
    ap.add_argument("--out", default="results")
    args = ap.parse_args()

    cfg, report = solved(args.dynamics)
    got = {"T1": cfg.stage(1).duration, "T3": cfg.stage(3).duration, "eta_n4": cfg.stage(4).eta_nonlinear,
           "eta_l5": cfg.stage(5).eta_linear, "T5": cfg.stage(5).duration}
    rows = []
    print(f"{'quantity':>8} {'solved':>16} {'table':>12} {'rel diff':>10}")
    for k, ref in TABLE.items():
        rel = (got[k] - ref) / ref
        rows.append([k, got[k], ref, rel])
        print(f"{k:>8} {got[k]:16.9g} {ref:12.7g} {rel:10.2e}")
    print(f"closed: {report.closed}; final |x| {max(map(abs, report.final_x)):.2e} m, "
          f"|v| {max(map(abs, report.final_v)):.2e} m/s")
    write(args.out, f"table2_{args.dynamics}.csv", ["quantity", "solved", "table", "rel_diff"], rows)


if __name__ == "__main__":
    main()
