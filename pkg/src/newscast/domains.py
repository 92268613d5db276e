"""Per-domain defaults: window sizes, granularity, regions, and prompt phrasing.

All values are config defaults and can be overridden; nothing here is
hardcoded into the operations themselves.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import timedelta

from .series import FormatPolicy


@dataclass(frozen=True)
class DomainProfile:
    """Text and sizing defaults for one forecasting domain."""

    name: str
    input_len: int
    horizon: int
    granularity: timedelta
    regions: tuple[str, ...]
    decimals: int
    # phrase slots used by the prompt builders
    series_noun: str            # "The historical {series_noun} data is: "
    target_noun: str            # "please predict the {target_noun} in the next day"
    category_noun: str          # JSON keys: "Long-Term Effect on Future {category_noun}"
    eval_subject: str           # "I have predicted {eval_subject} in the next day."
    eval_extra: str             # optional extra sentence after the eval intro
    influence_phrase: str       # "...news selection logic that affects {influence_phrase}"
    update_subject: str         # "...conclude several new prediction logic of {update_subject}"

    @property
    def policy(self) -> FormatPolicy:
        return FormatPolicy(decimals=self.decimals)


PROFILES: dict[str, DomainProfile] = {
    "electricity": DomainProfile(
        name="electricity",
        input_len=48,
        horizon=48,
        granularity=timedelta(minutes=30),
        regions=("NSW", "VIC", "QLD", "SA", "WA", "TAS"),
        decimals=1,
        series_noun="load",
        target_noun="load consumption",
        category_noun="Electricity Demand",
        eval_subject="the future electricity demand of Australia",
        eval_extra="",
        influence_phrase="Australia's region-level electricity demand",
        update_subject="the half-hourly electricity demand",
    ),
    "exchange": DomainProfile(
        name="exchange",
        input_len=7,
        horizon=7,
        granularity=timedelta(days=1),
        regions=("AU",),
        decimals=4,
        series_noun="exchange rate",
        target_noun="exchange rate",
        category_noun="Exchange Rate",
        eval_subject="the future exchange rate of Australia",
        eval_extra="The base is USD.",
        influence_phrase="the Australian dollar exchange rate",
        update_subject="the daily AUD exchange rate",
    ),
    "traffic": DomainProfile(
        name="traffic",
        input_len=24,
        horizon=24,
        granularity=timedelta(hours=1),
        regions=("California, USA",),
        decimals=0,
        series_noun="traffic volume",
        target_noun="traffic volume",
        category_noun="Traffic Volume",
        eval_subject="the future traffic volume of California",
        eval_extra="",
        influence_phrase="the California traffic volume",
        update_subject="the hourly traffic volume",
    ),
    "bitcoin": DomainProfile(
        name="bitcoin",
        input_len=7,
        horizon=7,
        granularity=timedelta(days=1),
        regions=("International",),
        decimals=1,
        series_noun="price",
        target_noun="price",
        category_noun="Bitcoin Price",
        eval_subject="the future Bitcoin price",
        eval_extra="",
        influence_phrase="the Bitcoin price",
        update_subject="the daily Bitcoin price",
    ),
    "custom": DomainProfile(
        name="custom",
        input_len=48,
        horizon=48,
        granularity=timedelta(minutes=30),
        regions=("R1",),
        decimals=1,
        series_noun="load",
        target_noun="load consumption",
        category_noun="Electricity Demand",
        eval_subject="the future series value",
        eval_extra="",
        influence_phrase="the target series",
        update_subject="the target series",
    ),
}


def profile_for(domain: str) -> DomainProfile:
    try:
        return PROFILES[domain]
    except KeyError:
        raise KeyError(f"unknown domain {domain!r}; known: {sorted(PROFILES)}")


def default_lookback(profile: DomainProfile) -> timedelta:
    """7 days for daily tasks, 2 days for sub-daily ones."""
    if profile.granularity >= timedelta(days=1):
        return timedelta(days=7)
    return timedelta(days=2)
