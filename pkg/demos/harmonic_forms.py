"""Dimensions of discrete harmonic forms on a few surfaces.

They equal the Betti numbers: a torus has two independent harmonic
1-forms, an annulus one and a disk none.
"""
from hpfeec.meshes import annulus, disk, torus
from hpfeec.solvers import harmonic_forms

MESHES = {"torus": lambda: torus(3), "annulus": lambda: annulus(8), "disk": lambda: disk(8)}


def main():
    for name, make in MESHES.items():
        hc = make()
        dims = [harmonic_forms(k, hc).dim for k in range(3)]
        print(f"{name:8s} harmonic k-forms for k = 0, 1, 2: {dims}")


if __name__ == "__main__":
    main()
