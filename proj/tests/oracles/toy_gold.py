"""Recomputes every toy gold answer from staff.csv with pandas and checks gold.jsonl."""
import json
import math
import sys
from pathlib import Path

import pandas as pd

root = Path(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[2] / "data" / "toy")
d = pd.read_csv(root / "staff.csv", parse_dates=["hire_date"])
counts = d.groupby("department").size()
finance_remote = d[(d.department == "Finance") & d.remote]

expected = {
    "q01": bool((d.age > 60).any()),
    "q02": int((d.department == "Engineering").sum()),
    "q03": d.loc[d.salary.idxmax(), "city"],
    "q04": list(d.sort_values("performance_rating", ascending=False, kind="stable").full_name.head(3)),
    "q05": [int(a) for a in d.age.sort_values(kind="stable").head(5)],
    "q06": float(d[d.is_manager].salary.mean()),
    "q07": d[d.full_name == "Maya Patel"].department.iloc[0],
    "q08": int((d.hire_date < "2015-01-01").sum()),
    "q09": sorted(counts[counts > 5].index),
    "q10": bool((finance_remote.salary > 90000).any()),
}

gold = {}
for line in (root / "gold.jsonl").read_text().splitlines():
    if line.strip():
        rec = json.loads(line)
        gold[rec["id"]] = rec["answer"]


def same(a, b):
    if isinstance(a, float) or isinstance(b, float):
        return math.isclose(a, b, rel_tol=1e-9)
    return a == b


bad = [k for k in expected if k not in gold or not same(expected[k], gold[k])]
for k in bad:
    print(f"{k}: gold {gold.get(k)!r} != oracle {expected[k]!r}")
if set(gold) != set(expected):
    bad.append("ids")
    print("gold ids differ from oracle ids")
print(f"{len(expected) - len(bad)}/{len(expected)} gold answers match the oracle")
sys.exit(1 if bad else 0)
