"""Regenerates the CSV fixtures used by cli_test."""
import numpy as np


def write(path, header, rows, fmt="%.10g"):
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt=fmt)


def main():
    rng = np.random.default_rng(20240611)

    a = np.arange(1.0, 7.0)
    write("pair.csv", ["a", "b"], np.column_stack([a, a + 1.0]))

    write("constant.csv", ["u", "v", "w"], np.column_stack([a, [3.0] * 6, a ** 2]))

    n, p = 400, 10
    x = rng.standard_normal((n, p))
    y = x[:, 0] * x[:, 1] + 0.1 * rng.standard_normal(n)
    write("planted.csv", [f"x{k + 1}" for k in range(p)] + ["y"], np.column_stack([x, y]))

    # Two blocks of three, within-block correlation 0.9.
    n = 300
    f = rng.standard_normal((n, 2))
    blocks = np.empty((n, 6))
    for k in range(6):
        blocks[:, k] = np.sqrt(0.9) * f[:, k // 3] + np.sqrt(0.1) * rng.standard_normal(n)
    y = blocks[:, :3].sum(axis=1) + 0.1 * rng.standard_normal(n)
    write("blocks.csv", [f"x{k + 1}" for k in range(6)] + ["y"], np.column_stack([blocks, y]))


if __name__ == "__main__":
    main()
