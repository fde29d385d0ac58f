"""Holonomy of the Levi-Civita connection around latitude circles of the unit sphere.

Transports a frame around each latitude and compares the rotation angle with
the enclosed solid angle 2 pi (1 - cos phi0).
"""
import numpy as np

from holab import holonomy_element, load_scenario
from holab.liealg import rotation_angle_2d


def main():
    sc = load_scenario("sphere-lc")
    print(f"{'phi0':>8} {'angle':>12} {'solid angle':>12} {'error':>9}")
    # the chart ends at tan(phi0/2) = 3
    for phi0 in np.linspace(0.2, 2.4, 8):
        h = holonomy_element(sc.conn, sc.loop("latitude", phi0=phi0)).element
        want = 2 * np.pi * (1 - np.cos(phi0))
        # the rotation angle is only defined mod 2 pi; unwrap onto the solid angle
        got = want + (rotation_angle_2d(h) - want + np.pi) % (2 * np.pi) - np.pi
        err = abs(got - want)
        print(f"{phi0:8.3f} {got:12.8f} {want:12.8f} {err:9.1e}")


if __name__ == "__main__":
    main()
