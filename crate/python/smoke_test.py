#!/usr/bin/env python3
"""Smoke test for the soh_py extension module.

Builds are not triggered here; compile the module first:

    cargo build -p soh-python --release

then run:

    python3 python/smoke_test.py
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_soh_py():
    """Copy the built cdylib next to a temp dir as soh_py.so and import it."""
    candidates = [
        REPO / "target" / "release" / "libsoh_py.so",
        REPO / "target" / "debug" / "libsoh_py.so",
    ]
    built = next((p for p in candidates if p.exists()), None)
    if built is None:
        sys.exit("libsoh_py.so not found; run `cargo build -p soh-python --release` first")
    stage = Path(tempfile.mkdtemp(prefix="soh_py_"))
    shutil.copy2(built, stage / "soh_py.so")
    sys.path.insert(0, str(stage))
    import soh_py

    return soh_py


def main():
    soh = import_soh_py()

    # Distance and correlation primitives.
    assert soh.znorm_distance([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) < 1e-9
    d = soh.znorm_distance([0.0, 1.0, 0.0, 1.0], [1.0, 0.0, 1.0, 0.0])
    assert abs(d - 4.0) < 1e-9, d
    r = soh.pearson([1.0, 2.0, 3.0, 4.0], [1.0, 3.0, 2.0, 4.0])
    assert abs(r - 0.8) < 1e-12, r

    # Matrix profile on a tiled series: every window repeats, so the
    # profile is near zero everywhere.
    block = [3.0 + 0.01 * ((7 * i) % 13) for i in range(16)]
    series = block * 20
    distances, indices = soh.matrix_profile(series, 16)
    assert max(distances) < 1e-9, max(distances)
    assert all(abs(q - j) >= 8 for q, j in enumerate(indices))

    # Small synthetic battery end to end.
    battery = soh.synth(seed=7, total_cycles=260, base_duration=240.0, knee_cycle=150)
    assert battery.cycle_count() == 260
    assert battery.soh(1) > battery.soh(260)
    eol = battery.eol_cycle()
    assert eol is not None and 150 < eol <= 260, eol

    v_ref, lam, peak = soh.discover_segment(battery, m=32, k=12)
    assert 2.0 < v_ref < 3.3, v_ref
    assert peak > 0.0

    model = soh.train(battery, m=32, k=40, n=5, d=8, epochs=300, hidden=16, readout=12, seed=3)
    report = soh.estimate(model, battery)
    assert report["evaluated"] > 0
    assert math.isfinite(report["rmse"])
    assert report["rmse"] < 0.05, report["rmse"]

    # Persistence round trip.
    with tempfile.TemporaryDirectory() as tmp:
        model_path = Path(tmp) / "model.json"
        model.save(model_path)
        reloaded = soh.load_model(model_path)
        again = soh.estimate(reloaded, battery)
        assert again["rows"] == report["rows"], "round-trip changed predictions"

        cycles_csv = Path(tmp) / "cycles.csv"
        labels_csv = Path(tmp) / "labels.csv"
        battery.save_csv(cycles_csv, labels_csv)
        loaded = soh.load_battery(cycles_csv, labels_csv)
        assert loaded.cycle_count() == battery.cycle_count()

    print("smoke test passed:", model.reference(), f"rmse={report['rmse']:.5f}")


if __name__ == "__main__":
    main()
