"""
Shapes of the positional windows
================================

The window bank covers relative document position [0, 1] with J overlapping
bell-shaped densities. This script prints where each window concentrates its
mass and saves a plot of the bank.
"""
import numpy as np

from docpool import build_window_bank, window_weights

bank = build_window_bank(parts=16, gamma=20.0, resolution=1024)

print(f"bank: {bank.parts} windows, gamma={bank.gamma}, {bank.resolution} cached samples")
print(f"window peaks at {np.round(bank.modes, 4)}")

# Where does each window put its weight for a 40-sentence document?
weights = window_weights(bank, 40)
for j in (0, 7, 15):
    top = np.argsort(weights[j])[::-1][:3]
    print(f"window {j:2d}: heaviest sentences {sorted(top.tolist())} "
          f"(row sum = {weights[j].sum():.3f})")

# Overlap: adjacent windows share support, which smooths the transition
# between document regions.
shared = [(int((weights[j] > 0).sum()), int(((weights[j] > 0) & (weights[j + 1] > 0)).sum()))
          for j in range(15)]
print(f"\nsentences per window / shared with next: {shared[:5]} ...")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(9, 3.5))
    for j in range(bank.parts):
        ax.plot(bank.grid, bank.cache[j], lw=1)
    ax.set_xlabel("relative position in document")
    ax.set_ylabel("window density")
    ax.set_title(f"{bank.parts} overlapping windows, gamma={bank.gamma:g}")
    fig.tight_layout()
    fig.savefig("positional_windows.png", dpi=120)
    print("\nsaved plot -> positional_windows.png")
except ImportError:
    print("\nmatplotlib not installed; skipping the plot")
