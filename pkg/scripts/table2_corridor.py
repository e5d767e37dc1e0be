"""FIFO, exact and distributed strategies on the two-intersection corridor at 1200-3600 veh/h."""

from _common import main

if __name__ == "__main__":
    rows = main("table2.yaml", __doc__)
    by = {(r["value"], r["strategy"]): r["total_delay_mean"] for r in rows}
    for rate in sorted({r["value"] for r in rows}):
        print(f"{rate:g} veh/h: FIFO/DS = {by[(rate, 'fifo')] / by[(rate, 'ds')]:.2f}")
