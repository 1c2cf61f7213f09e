from configparser import ConfigParser
from io import StringIO
import sys
import pkg_resources

import attrition.constants as ac
from attrition.errors import InputError, NumericalError
from attrition.parser import get_arg_parser
from attrition.runner import Runner
from attrition.utils.logger import configure_logger
from attrition.dispatcher import dispatch


try:
    __version__ = pkg_resources.get_distribution("dcs-" + __name__).version
except Exception:
    __version__ = "unknown"


def run() -> None:
    """ Main method """
    logger = configure_logger()
    parser = get_arg_parser()

    cli_args = parser.parse_args()
    log_level = ac.LOG_LEVELS[min(cli_args.verbosity, len(ac.LOG_LEVELS) - 1)]
    logger.setLevel(log_level)

    logger.debug(f"Parsed CLI arguments: {cli_args}")
    logger.debug(f"Path to config files: {ac.CONFIG_FILES}")

    if cli_args.subcmd is None:
        parser.print_help()
        return

    cfg = ConfigParser(interpolation=None)
    cfg.read(ac.CONFIG_FILES)

    with StringIO() as ss:
        cfg.write(ss)
        ss.seek(0)
        logger.debug(f"Config content:\n{ss.read()}\nEOF")

    try:
        runner = Runner.from_config(cfg, cli_args, logger)
        code = dispatch(runner, parser, cli_args, cfg)
    except InputError as err:
        print(f"error: {err}", file=sys.stderr)
        code = ac.EXIT_INPUT_ERROR
    except NumericalError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        code = ac.EXIT_NUMERICAL_FAILURE
    sys.exit(code)


if __name__ == "__main__":
    run()
