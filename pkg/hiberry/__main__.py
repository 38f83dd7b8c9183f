import argparse
import asyncio
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

from dijay import Container

from .config import INVARIANTS, RuntimeConfig, load_config
from .errors import HiberryError
from .module import HiberryModule
from .results import RunResult, compare
from .usecases import (
    ComputeData,
    ComputeInvariantUsecase,
    SelftestData,
    SelftestUsecase,
    VerifyFluxUsecase,
)

logger = logging.getLogger("hiberry")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hiberry",
        description="Higher Berry invariants of gapped lattice families.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    compute = sub.add_parser("compute", help="compute one invariant")
    compute.add_argument("--config", type=Path, required=True)
    compute.add_argument("--invariant", choices=INVARIANTS)
    compute.add_argument("--out", type=Path)

    flux = sub.add_parser("verify-flux", help="check flux insertion on a 2d family")
    flux.add_argument("--config", type=Path, required=True)
    flux.add_argument("--out", type=Path)

    selftest = sub.add_parser("selftest", help="run the built-in property checks")
    selftest.add_argument("--level", choices=("quick", "full"), default="quick")
    selftest.add_argument("--seed", type=int, default=0)

    cmp = sub.add_parser("compare", help="compare two result files")
    cmp.add_argument("first", type=Path)
    cmp.add_argument("second", type=Path)
    return parser


def _configure_logging(verbose: int, runtime: RuntimeConfig) -> None:
    if verbose >= 2:
        level = logging.DEBUG
    elif verbose == 1:
        level = logging.INFO
    else:
        level = logging.getLevelNamesMapping().get(runtime.log_level.upper(), logging.WARNING)
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


async def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    async with Container.from_module(HiberryModule) as container:
        runtime = await container.resolve(RuntimeConfig)
        _configure_logging(args.verbose, runtime)

        match args.command:
            case "compute":
                config = load_config(args.config, invariant=args.invariant)
                usecase = await container.resolve(ComputeInvariantUsecase)
                result = await usecase.execute(data=ComputeData(config=config, out=args.out))
                print(result.to_json())
            case "verify-flux":
                config = load_config(args.config)
                flux = await container.resolve(VerifyFluxUsecase)
                result = await flux.execute(data=ComputeData(config=config, out=args.out))
                print(result.to_json())
            case "selftest":
                selftest = await container.resolve(SelftestUsecase)
                outcomes = await selftest.execute(data=SelftestData(level=args.level, seed=args.seed))
                for o in outcomes:
                    status = "ok" if o.passed else "FAIL"
                    print(f"{status:4} {o.name}: {o.residual:.3g} (tol {o.tolerance:.0e})")
                if not all(o.passed for o in outcomes):
                    return 1
            case "compare":
                report = compare(RunResult.read(args.first), RunResult.read(args.second))
                print(report.model_dump_json(indent=2))
    return 0


def run() -> None:
    try:
        code = asyncio.run(main())
    except HiberryError as exc:
        print(f"{exc.name}: {exc.message}", file=sys.stderr)
        code = exc.exit_code
    sys.exit(code)


if __name__ == "__main__":
    run()
