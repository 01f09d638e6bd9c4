"""Cost of kernel distribution against resizing the query, n = 1..5 scales.

Run: python demos/strategy_costs.py  (takes a few seconds)
"""
from locprior.perf import compare_strategies, default_fixture, report_csv

pairs = compare_strategies(fixture=default_fixture(2), repeats=3, warmup=1)
print(report_csv(pairs))
