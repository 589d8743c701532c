"""bochner-calc: multidimensional Bochner-Phillips functional calculus"""

import logging
from typing import Optional

from bpcalc.utils import Settings, load_settings, setup_logging

__version__ = '0.1.0'


def create_runner(settings: Optional[Settings] = None, verbose: bool = False):
    """
    Factory for a configured campaign runner.

    Reads settings from the environment when none are given and installs the
    package log handlers.
    """
    settings = settings or load_settings()
    if verbose and logging.getLevelName(settings.log_level) > logging.INFO:
        settings.log_level = 'INFO'
    setup_logging(settings.log_level, settings.log_dir)

    from bpcalc.campaign import CampaignRunner
    return CampaignRunner(settings)
