#!/usr/bin/env python3
# SPDX-License-Identifier: Apache-2.0
"""Writes the bundled AU/IR fixture in the WHO daily-report CSV layout.

The counts are synthetic: smooth multi-wave epidemic curves with a fixed
deterministic wobble, scaled to the published end-of-range totals. Only the
date ranges and column layout follow the real feed.

usage: make_fixture.py [output.csv]
"""

import datetime as dt
import math
import sys


def logistic(t, mid, rate):
    return 1.0 / (1.0 + math.exp(-(t - mid) / rate))


def wobble(t, phase):
    # Weekly reporting rhythm plus a slower drift, bounded to +-25%.
    return 1.0 + 0.15 * math.sin(2 * math.pi * t / 7 + phase) + 0.10 * math.sin(t / 11.3 + 2 * phase)


def country(code, name, region, start, end, onset, waves, case_total, death_total, lag, phase):
    days = (end - start).days + 1
    # Flat before onset so the first reported day is small.
    shape = [sum(w * logistic(max(t, onset - 1), m, r) for w, m, r in waves) for t in range(days)]
    # Daily increments from the smooth cumulative shape, wobbled, rescaled.
    inc = [0.0] + [max(0.0, shape[t] - shape[t - 1]) for t in range(1, days)]
    inc = [v * wobble(t, phase) for t, v in enumerate(inc)]
    total = sum(inc)
    rows = []
    cases = deaths = 0
    case_acc = death_acc = 0.0
    for t in range(days):
        case_acc += inc[t] / total * case_total
        new_cases = int(round(case_acc)) - cases
        src = t - lag
        if src >= 0:
            death_acc += inc[src] / total * death_total * wobble(t, phase + 1.0)
        new_deaths = max(0, int(round(min(death_acc, death_total))) - deaths)
        cases += new_cases
        deaths += new_deaths
        date = start + dt.timedelta(days=t)
        rows.append((date.isoformat(), code, name, region, new_cases, cases, new_deaths, deaths))
    return rows


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "who_au_ir.csv"
    rows = []
    rows += country("AU", "Australia", "WPRO", dt.date(2020, 1, 25), dt.date(2020, 8, 19),
                    onset=0, waves=[(6800, 62, 5.0), (17000, 185, 9.0)],
                    case_total=24236, death_total=450, lag=10, phase=0.3)
    rows += country("IR", "Iran (Islamic Republic of)", "EMRO", dt.date(2020, 1, 3),
                    dt.date(2020, 10, 6), onset=47,
                    waves=[(90000, 80, 9.0), (150000, 170, 14.0), (260000, 262, 13.0)],
                    case_total=483844, death_total=27658, lag=8, phase=1.1)
    with open(out, "w", newline="") as f:
        f.write("Date_reported,Country_code,Country,WHO_region,New_cases,Cumulative_cases,"
                "New_deaths,Cumulative_deaths\n")
        for r in rows:
            f.write("%s,%s,%s,%s,%d,%d,%d,%d\n" % r)


if __name__ == "__main__":
    main()
