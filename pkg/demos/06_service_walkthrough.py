"""
Driving the digitization HTTP service
=====================================

The same calibrate-trace-adjudicate-export loop the browser UI runs,
exercised here against an in-process test client. Start a real server
with: uvicorn kmlead.service:app
"""

import tempfile

import numpy as np
from fastapi.testclient import TestClient

from kmlead.service import create_app

app = create_app(tempfile.mkdtemp(prefix="kmlead-demo-"))
client = TestClient(app)

r = client.post("/studies", json={"name": "DEMO-2", "qualifier": "Fig 1A"})
sid = r.json()["study_id"]
print("created study:", sid, "->", r.status_code)

# Exporting before doing any work is a state-order violation
r = client.post(f"/studies/{sid}/export")
print("premature export:", r.status_code, "-", r.json()["detail"])

client.post(f"/studies/{sid}/figures", content=b"png-bytes-here")
anchors = {"origin": [80, 430], "xmax": [620, 430], "ytop": [80, 40],
           "max_months": 48}
r = client.put(f"/studies/{sid}/arms/mono/anchors", json=anchors)
print("calibrated:", r.status_code, "stage =", r.json()["stage"])

# Trace the curve in pixel coordinates
t = np.linspace(0, 48, 25)
s = 100 * np.exp(-0.05 * t)
points = [[80 + tt / 48 * 540, 430 - ss / 100 * 390] for tt, ss in zip(t, s)]
r = client.put(f"/studies/{sid}/arms/mono/trace", json={"points": points})
print("traced:", r.status_code, "stage =", r.json()["stage"])

# Two extraction candidates with one minor disagreement
grid = [0, 12, 24, 36, 48]
cand_a = {"source_tag": "primary_extractor", "time_grid": grid,
          "arms": {"mono": [120, 66, 36, 20, 11]}}
cand_b = {"source_tag": "fallback_extractor", "time_grid": grid,
          "arms": {"mono": [120, 65, 36, 20, 11]}}
r = client.put(f"/studies/{sid}/risk_table",
               json={"candidates": [cand_a, cand_b]})
print("adjudicated:", r.status_code, "diffs =", r.json()["diffs"])

r = client.get(f"/studies/{sid}/validation")
print("validation:", r.json()["validation"]["ok"], r.json()["stages"])

r = client.post(f"/studies/{sid}/export")
print("export:", r.status_code, r.json()["files"])

xy = client.get(f"/studies/{sid}/export/xy.csv")
print("exported xy.csv starts with:")
print("\n".join(xy.text.splitlines()[:4]))
