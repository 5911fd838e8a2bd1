"""Head moved 7 mm along x then y at 1 mm/s; the target is swapped when the motion ends."""
import numpy as np

from _common import fmt, parser, save
from tmscoil import experiments as ex
from tmscoil.configs import load_config


def main():
    args = parser(__doc__).parse_args()
    sc = load_config("fig17").scenario
    log = ex.run_scenario(sc)
    m = ex.summarize(log)
    t_ret = log.meta["retarget_time"]
    after = (log["phase"] == ex.CONTROL_PHASE) & (log["t"] >= t_ret)
    print(f"min F_c during motion={fmt(m.min_Fc_during_motion)} N  retarget at t={t_ret:.2f} s  "
          f"e_o after retarget={fmt(m.e_o)} mm")
    t, e, F = log["t"][after] - t_ret, log["e"][after], log["F"][after]
    for mark in (0.0, 1.0, 5.0, 10.0, 20.0, 30.0):
        i = min(int(np.searchsorted(t, mark)), len(t) - 1)
        print(f"  t_ret+{mark:>4.0f} s: e={e[i]:.2f} mm  F={F[i]:.1f} N")
    save(args.out, sc.name, log, args.plots)


if __name__ == "__main__":
    main()
