"""Scheduled force on a fixed head: convergence of e and time spent above 20 N."""
from _common import fmt, parser, save
from tmscoil import experiments as ex
from tmscoil.configs import load_config


def main():
    p = parser(__doc__)
    p.add_argument("--config", default="fig14", help="bundled config name (fig14 has k_p = 0, scheduled has 4)")
    args = p.parse_args()
    sc = load_config(args.config).scenario
    log = ex.run_scenario(sc)
    m = ex.summarize(log)
    print(f"e_o={fmt(m.e_o)} mm  e(final 5 s)={fmt(m.e_converged)} mm  "
          f"t_below_5mm={fmt(m.t_below_5mm)} s  t_above_20N={fmt(m.t_above_20N)} s")
    save(args.out, sc.name, log, args.plots)


if __name__ == "__main__":
    main()
