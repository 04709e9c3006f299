import argparse

from powerlaw_dynamics import cli


def run(kind: str, params: dict, description: str):
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--out", default=f"results/{kind}", help="output directory")
    parser.add_argument("--seed", type=int, default=0, help="master seed")
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()
    config = {"schema_version": 1, "kind": kind, "master_seed": args.seed, "params": params}
    result = cli.run_experiment(config, args.out, threads=args.threads)
    print(f"wrote {args.out}")
    return result
