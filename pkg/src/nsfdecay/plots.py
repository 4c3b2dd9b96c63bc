"""Static SVG log-log plots of norm series with theory slopes (needs matplotlib)."""

import os

import numpy as np


def write_decay_plots(out_dir, times, series, fits):
    import matplotlib

    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "nsfdecay"
    import matplotlib.pyplot as plt

    os.makedirs(out_dir, exist_ok=True)
    written = []
    t = np.asarray(times, dtype=float)
    keep = t > 0
    for fit in fits:
        nid = fit["norm_id"]
        if nid not in series:
            continue
        v = np.asarray(series[nid])[keep]
        tt = t[keep]
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(tt, v, "o-", ms=3, label=nid)
        ta = fit["window"][0]
        i0 = int(np.argmin(np.abs(tt - ta)))
        ref = v[i0] * (np.sqrt(1 + tt ** 2) / np.sqrt(1 + tt[i0] ** 2)) ** fit["theory_exponent"]
        ax.loglog(tt, ref, "--", label=f"slope {fit['theory_exponent']:.3g}")
        ax.axvspan(*fit["window"], alpha=0.1)
        ax.set_xlabel("t")
        ax.set_ylabel("norm")
        ax.legend()
        path = os.path.join(out_dir, f"{nid}.svg")
        # fixed metadata keeps the SVG byte-identical across runs
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        written.append(path)
    return written
