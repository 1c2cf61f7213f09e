from typing import List
import logging
import os

LOG_FORMAT: str = logging.BASIC_FORMAT
LOG_LEVELS: List[int] = [logging.ERROR, logging.WARN, logging.INFO, logging.DEBUG]

CONFIG_FILES: List[str] = [
    os.path.join(os.path.abspath(os.path.dirname(__file__)), "config.cfg"),
    os.path.expanduser("~/.config/attrition/config"),
]

DEFAULT_LOGGER_NAME = "attrition"

SUBCMD_SIMULATE = "simulate"
SUBCMD_PAYOFF = "payoff"
SUBCMD_BEST_REPLY = "best-reply"
SUBCMD_VERIFY = "verify"
SUBCMD_EXAMPLE = "example"
SUBCMD_MOLLIFY = "mollify"

EXIT_OK = 0
EXIT_VERIFICATION_FAILED = 1
EXIT_INPUT_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3

VERDICT_PASS = "pass"
VERDICT_FAIL = "fail"
VERDICT_INCONCLUSIVE = "inconclusive"

SCHEME_EULER_MARUYAMA = "euler-maruyama"
PRESET_LOGISTIC_MARTINGALE = "logistic-martingale"
PRESET_BROWNIAN = "brownian"
PRESET_EXAMPLE_PAYOFFS = "example"

CLOSURE_OBSTACLE = "obstacle"
CLOSURE_ZERO = "zero"

# Distance kept from the endpoints of I when a step overshoots.
BOUNDARY_CLAMP = 1e-12

# Measure values above every finite mass.
INFINITE_MASS = float("inf")
NEVER = float("inf")

COL_SCENARIO = "scenario"
COL_PATH = "path"
COL_TIME = "t"
COL_STATE = "x"
COL_X0 = "x0"
COL_PLAYER = "player"
COL_ESTIMATOR = "estimator"
COL_MEAN = "mean"
COL_SE = "se"
COL_N = "n"
COL_SURVIVAL = "survival"
COL_TAIL = "tail"
COL_TAIL_OK = "tail_ok"
COL_VALUE = "v"
COL_R = "R"
COL_G = "G"
COL_RESIDUAL = "residual"
COL_IN_S_BAR = "in_S_bar"
COL_DENSITY = "density"

ESTIMATOR_STIELTJES = "stieltjes"
ESTIMATOR_SAMPLED = "sampled"
