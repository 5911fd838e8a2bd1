"""Hybrid position/force control against pure force control at a fixed 20 N."""
from dataclasses import replace

from _common import fmt, parser, save
from tmscoil import experiments as ex
from tmscoil.configs import load_config


def main():
    args = parser(__doc__).parse_args()
    doc = load_config("fig11")
    print(f"{'variant':<14} {'e':>6} {'|e_n|':>6} {'|e_p|':>6}  (final 5 s means, mm)")
    for variant in doc.compare_variants:
        sc = replace(doc.scenario, name=f"fig11_{variant}", variant=variant)
        log = ex.run_scenario(sc)
        m = ex.summarize(log)
        print(f"{variant:<14} {fmt(m.e_converged):>6} {fmt(m.abs_e_n_converged):>6} {fmt(m.abs_e_p_converged):>6}")
        save(args.out, sc.name, log, args.plots)


if __name__ == "__main__":
    main()
