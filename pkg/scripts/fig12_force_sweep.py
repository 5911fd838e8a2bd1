"""Fixed-force sweep (5 to 40 N, no torque control): time to reach e < 5 mm."""
from _common import parser, save
from tmscoil import experiments as ex
from tmscoil.configs import load_config


def main():
    args = parser(__doc__).parse_args()
    doc = load_config("fig12")
    values = doc.sweep["values"]
    summaries, logs = ex.run_sweep(doc.scenario, "force", values, workers=args.workers, keep_logs=True)
    print(ex.comparison_table("force", values, summaries), end="")
    for sc, log in zip(ex.sweep_scenarios(doc.scenario, "force", values), logs):
        save(args.out, sc.name, log, args.plots)


if __name__ == "__main__":
    main()
