"""Regenerate src/casimir_afm/data/gold_im_eps.txt.

Im[eps] of gold from the Lorentz-Drude parameter set of Rakic et al.,
Appl. Opt. 37, 5271 (1998), sampled log-uniformly from 0.125 eV to 200 eV.
Stands in for tabulated reflectance-derived data; drop in a measured table
with the same two-column layout to replace it.
"""

from pathlib import Path

import numpy as np

WP = 9.03  # eV
F0, G0 = 0.760, 0.053
OSC = [  # f, Gamma (eV), omega (eV)
    (0.024, 0.241, 0.415),
    (0.010, 0.345, 0.830),
    (0.071, 0.870, 2.969),
    (0.601, 2.494, 4.304),
    (4.384, 2.214, 13.32),
]


def lorentz_drude(w):
    eps = 1 - F0 * WP**2 / (w * (w + 1j * G0))
    for f, g, w0 in OSC:
        eps = eps + f * WP**2 / ((w0**2 - w**2) - 1j * w * g)
    return eps


def main():
    energy = np.geomspace(0.125, 200.0, 700)
    im_eps = lorentz_drude(energy).imag
    out = Path(__file__).resolve().parents[1] / "src/casimir_afm/data/gold_im_eps.txt"
    header = (
        "Im[eps] of gold vs photon energy\n"
        "Lorentz-Drude model, Rakic et al., Appl. Opt. 37, 5271 (1998)\n"
        "columns: energy_eV  im_eps"
    )
    np.savetxt(out, np.column_stack([energy, im_eps]), fmt="%.8e", header=header)


if __name__ == "__main__":
    main()
