"""Monte Carlo coverage study with a logistic (observational) propensity.

Same options as ``mc_randomized.py``; only the propensity default differs.
"""

import logging

from mc_randomized import main, parse_args

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    main(parse_args(propensity_mode="logistic", default_reps=300))
