#!/usr/bin/env python3
"""
steamgp: sparse GP trajectory estimation tools behind one command.

    steamgp.py simulate --config world.json --out data/
    steamgp.py solve --prior ntv --dataset data/ --out traj.csv
    steamgp.py train --prior lti --truth data/truth.csv --out qc.json
    steamgp.py query --report traj_report --times 1.5,2.25
    steamgp.py bench --n 500,1000,2000 --out bench.csv
    steamgp.py sweep --config configs/sweep_world.json --out errors.csv

Each subcommand takes the same flags as its steamgp_<name>.py script.
"""

import importlib
import sys
from pathlib import Path

_project_root = Path(__file__).resolve().parent
if str(_project_root) not in sys.path:
    sys.path.insert(0, str(_project_root))

from lib.commands import EXIT_FAILURE, EXIT_OK, write_error  # noqa: E402
from lib.errors import ConfigError  # noqa: E402

COMMANDS = {
    "simulate": "steamgp_simulate",
    "solve": "steamgp_solve",
    "train": "steamgp_train",
    "query": "steamgp_query",
    "bench": "steamgp_bench",
    "sweep": "steamgp_sweep",
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    if argv and argv[0] in ("-h", "--help"):
        print(__doc__.strip())
        print("\ncommands: " + ", ".join(COMMANDS))
        return EXIT_OK
    if not argv:
        write_error(ConfigError(f"no command given (expected one of {', '.join(COMMANDS)})"))
        return EXIT_FAILURE
    name, rest = argv[0], argv[1:]
    if name not in COMMANDS:
        write_error(ConfigError(f"unknown command '{name}' (expected one of {', '.join(COMMANDS)})"))
        return EXIT_FAILURE
    module = importlib.import_module(COMMANDS[name])
    return module.main(rest)


if __name__ == "__main__":
    sys.exit(main())
