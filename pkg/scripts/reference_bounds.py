"""Recompute every reference bound from its ingredients and print the table."""
import math

from sdecert.estimators import certified_bound, rough_bound

# name, E, eps (1 / total trajectory time), kind, alpha or gamma, T, reference value
ROWS = [
    ("ring", 0.00141635, 1e-7, "certified", 0.3972, 10, 0.002350),
    ("ring", 0.00141635, 1e-7, "rough", 0.1378, 10, 0.00189377),
    ("double well", 0.167345, 1 / 4e7, "certified", 0.2019, 50, 0.2097),
    ("double well", 0.167345, 1 / 4e7, "rough", -math.log(0.1068) / 50, 50, 0.187354),
    ("langevin", 0.0111313, 1 / 3.2e7, "certified", 0.3727, 40, 0.017745),
    ("langevin", 0.0111313, 1 / 3.2e7, "rough", 0.07067, 40, 0.011832),
    ("lorenz96 D=4", 0.144864, 1 / 2.4e6, "certified", 0.7081, 3, 0.4963),
    ("fhn N=2", 0.0105652, 1 / 2.4e6, "certified", 0.5197, 3, 0.0220),
    ("fhn N=2", 0.0105652, 1 / 2.4e6, "rough", 0.50741, 3, 0.01351),
    ("fhn N=40", 0.0443737, 1 / 2.4e6, "rough", 0.31612, 3, 0.07243),
]


def main():
    print(f"{'example':<14}{'mode':<11}{'E':>11}{'rate':>10}{'bound':>12}{'reference':>12}{'rel.err':>10}")
    for name, E, eps, kind, rate, T, pub in ROWS:
        b = (certified_bound(E, eps, rate) if kind == "certified" else rough_bound(E, eps, rate, T)).bound
        print(f"{name:<14}{kind:<11}{E:>11.6g}{rate:>10.5g}{b:>12.6g}{pub:>12.6g}{b / pub - 1:>10.1e}")
    # the double-well rough row uses the reported factor 0.1068; gamma = 0.09078 with T = 50 gives:
    print("double well rough from gamma=0.09078, T=50:", rough_bound(0.167345, 1 / 4e7, 0.09078, 50).bound)


if __name__ == "__main__":
    main()
