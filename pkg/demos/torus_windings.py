"""A flat connection on a punctured 4-d chart standing in for the torus.

Holonomy is constant along deformations of a loop and depends only on the
winding numbers: rot(-2 pi (alpha n1 + beta n2)).
"""
import numpy as np

from holab import flatness_check, load_scenario
from holab.liealg import rotation_angle_2d


def main():
    sc = load_scenario("flat-torus")
    a, b = sc.params["alpha"], sc.params["beta"]
    classes = sc.expected["winding_classes"]
    fams = [sc.homotopy("deform", samples=6, n1=n1, n2=n2) for n1, n2 in classes]
    rep = flatness_check(sc.conn, fams)
    print(f"verdict: {rep.verdict}, variation along deformations {rep.max_variation:.1e}")
    for (n1, n2), hols in zip(classes, rep.holonomies):
        want = (-2 * np.pi * (a * n1 + b * n2) + np.pi) % (2 * np.pi) - np.pi
        print(f"  winding ({n1:+d}, {n2:+d}): angle {rotation_angle_2d(hols[0]):+.10f}, "
              f"predicted {want:+.10f}")


if __name__ == "__main__":
    main()
