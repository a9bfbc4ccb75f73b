"""Generates data/absorption_model.json, the shipped methane cross-section table.

The table is a smooth synthetic stand-in: a sum of Lorentzian lines on a weak
continuum, scaled so that a 5000 ppb*m enhancement at AMF 2.16 attenuates the
SWIR2 band by ~15% and SWIR1 by ~1.5%. Re-run only to regenerate the data file.
"""
import json
import math
import sys

import numpy as np

K = 4.462e-8  # mol/m^2 per ppb*m


def planck(wl_nm, t=5778.0):
    lam = wl_nm * 1e-9
    return 1.0 / (lam**5 * (np.exp(1.438777e-2 / (lam * t)) - 1.0))


def srf(wl, center, fwhm):
    x = (wl - center) / (fwhm / 2)
    return np.exp(-math.log(2.0) * (x * x) ** 4)


def band_tau(wl, sigma, center, fwhm, dch4, amf):
    n = len(wl)
    g = np.zeros(n)
    for i in range(n):
        left = wl[i] - wl[i - 1] if i > 0 else 0.0
        right = wl[i + 1] - wl[i] if i + 1 < n else 0.0
        g[i] = 0.5 * (left + right) * planck(wl[i]) * 0.9 * srf(wl[i], center, fwhm)
    return float(np.sum(g * np.exp(-sigma * amf * dch4 * K)) / np.sum(g))


def lines(wl, centers, widths, strengths, continuum):
    s = np.full_like(wl, continuum)
    for c, w, a in zip(centers, widths, strengths):
        s += a * (w * w) / ((wl - c) ** 2 + w * w)
    return s


def calibrate(wl, shape, center, fwhm, target):
    lo, hi = 1e-3, 1e6
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        t = band_tau(wl, shape * mid, center, fwhm, 5000.0, 2.158)
        if t > target:
            lo = mid
        else:
            hi = mid
    return shape * math.sqrt(lo * hi)


def main(out):
    rng = np.random.default_rng(20240101)
    bands = {}
    spec = {
        "SWIR1": dict(lo=1520.0, hi=1700.0, center=1610.0, fwhm=94.0, line_lo=1600.0, line_hi=1700.0, n_lines=24, target=0.985),
        "SWIR2": dict(lo=2040.0, hi=2340.0, center=2190.0, fwhm=185.0, line_lo=2100.0, line_hi=2340.0, n_lines=40, target=0.85),
    }
    for name, p in spec.items():
        wl = np.linspace(p["lo"], p["hi"], 200)
        centers = np.sort(rng.uniform(p["line_lo"], p["line_hi"], p["n_lines"]))
        widths = rng.uniform(2.0, 6.0, p["n_lines"])
        ramp = (centers - p["line_lo"]) / (p["line_hi"] - p["line_lo"])
        strengths = rng.uniform(0.3, 1.0, p["n_lines"]) * (0.4 + ramp)
        shape = lines(wl, centers, widths, strengths, 0.02)
        sigma = calibrate(wl, shape, p["center"], p["fwhm"], p["target"])
        bands[name] = {
            "wavelength_nm": [round(float(x), 6) for x in wl],
            "sigma_m2_per_mol": [float("%.8g" % x) for x in sigma],
            "center_nm": p["center"],
            "fwhm_nm": p["fwhm"],
        }
    doc = {
        "description": "Synthetic CH4 absorption cross-sections for the two SWIR bands (Beer-Lambert stand-in). "
        "Irradiance defaults to a 5778 K Planck curve, t_atm to 0.9, srf to a flat-top of the given center/FWHM.",
        "sigma_unit": "m^2/mol",
        "bands": bands,
    }
    with open(out, "w") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "data/absorption_model.json")
