"""Torque gain sweep: steady tau_c/F_c for k_p in {0, 1, 2, 4, 4.5}."""
from _common import parser, save
from tmscoil import experiments as ex
from tmscoil.configs import load_config


def main():
    args = parser(__doc__).parse_args()
    doc = load_config("fig16")
    values = doc.sweep["values"]
    summaries, logs = ex.run_sweep(doc.scenario, "kp", values, workers=args.workers, keep_logs=True)
    print(ex.comparison_table("kp", values, summaries), end="")
    for sc, log in zip(ex.sweep_scenarios(doc.scenario, "kp", values), logs):
        save(args.out, sc.name, log, args.plots)


if __name__ == "__main__":
    main()
