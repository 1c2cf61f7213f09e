from configparser import ConfigParser
from argparse import ArgumentParser, Namespace

import attrition.constants as ac
from attrition.runner import Runner


def dispatch(
    runner: Runner, parser: ArgumentParser, cli_args: Namespace, cfg: ConfigParser
) -> int:
    """
    Dispatch request to Runner instance based on CLI arguments and
    configuration values. Returns the exit code of the command.
    """
    if cli_args.subcmd == ac.SUBCMD_SIMULATE:
        return runner.cmd_simulate(runner.load_scenario(cli_args.scenario))
    elif cli_args.subcmd == ac.SUBCMD_PAYOFF:
        return runner.cmd_payoff(runner.load_scenario(cli_args.scenario))
    elif cli_args.subcmd == ac.SUBCMD_BEST_REPLY:
        return runner.cmd_best_reply(runner.load_scenario(cli_args.scenario))
    elif cli_args.subcmd == ac.SUBCMD_VERIFY:
        return runner.cmd_verify(runner.load_scenario(cli_args.scenario))
    elif cli_args.subcmd == ac.SUBCMD_EXAMPLE:
        return runner.cmd_example(nash=cli_args.nash)
    elif cli_args.subcmd == ac.SUBCMD_MOLLIFY:
        scenario = None
        if cli_args.scenario is not None:
            scenario = runner.load_scenario(cli_args.scenario)
        return runner.cmd_mollify(scenario, cli_args.eps, cli_args.atom, cli_args.samples)
    parser.print_help()
    return ac.EXIT_INPUT_ERROR
