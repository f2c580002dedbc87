# %% [markdown]
# # Accuracy against intersection angle
#
# Repeat the simulated pass many times at each intersection angle and
# tabulate median and RMS errors. The full command-line equivalent is
#
#     python -m ridgeloc simulate --seed 42 --out results.csv --plot median.svg

# %%
import time
from pathlib import Path

from ridgeloc import NoiseSpec, ScenarioSpec, aggregate_stats, io, run_monte_carlo

TRIALS = 300
GAMMAS = (10.0, 20.0, 30.0, 50.0, 80.0)
ALGOS = ("vision", "range", "fused", "fused_ridge")

t0 = time.perf_counter()
records = []
for g in GAMMAS:
    records += run_monte_carlo(ScenarioSpec(gamma=g), NoiseSpec(), ALGOS, TRIALS, seed=42)
stats = aggregate_stats(records)
print(f"{len(records)} solves in {time.perf_counter() - t0:.1f} s")

# %%
cell = {(s.gamma, s.algorithm): s for s in stats}
print("gamma " + "".join(f"{a:>14s}" for a in ALGOS))
for g in GAMMAS:
    print(f"{g:5.0f} " + "".join(f"{cell[(g, a)].median_error:14.2f}" for a in ALGOS))

# %% [markdown]
# Vision and range errors blow up as the arc narrows. The fused estimate
# stays within a few meters at every angle. The ridge column tracks the
# fused one to within millimeters; see the third demo for why.

# %%
out = Path(__file__).with_name("out")
out.mkdir(exist_ok=True)
io.write_results(stats, out / "sweep.csv")
io.emit_plot(stats, out / "sweep_median.svg", "median_vs_gamma")
io.emit_plot(stats, out / "sweep_rms.svg", "rms_vs_gamma")
print("wrote", sorted(p.name for p in out.iterdir()))
