#!/usr/bin/env python3
"""Regenerates the bundled benchmark CSVs from scikit-learn's built-in copies
of the UCI datasets. Run from the data/ directory; see FETCH.md for the
datasets that are not bundled."""
import numpy as np
from sklearn import datasets


def write_csv(path, rows):
    with open(path, "w") as f:
        for row in rows:
            f.write(",".join(row) + "\n")


def fmt(v):
    return np.format_float_positional(v, trim="0")


def main():
    iris = datasets.load_iris()
    write_csv("iris.csv", ([fmt(v) for v in x] + [iris.target_names[y]]
                           for x, y in zip(iris.data, iris.target)))

    wine = datasets.load_wine()  # UCI layout puts the class first
    write_csv("wine.csv", ([wine.target_names[y]] + [fmt(v) for v in x]
                           for x, y in zip(wine.data, wine.target)))

    bc = datasets.load_breast_cancer()
    write_csv("breast_cancer.csv", ([bc.target_names[y]] + [fmt(v) for v in x]
                                    for x, y in zip(bc.data, bc.target)))

    dia = datasets.load_diabetes(scaled=False)
    write_csv("diabetes.csv", ([fmt(v) for v in x] + [fmt(y)]
                               for x, y in zip(dia.data, dia.target)))

    lin = datasets.load_linnerud()
    write_csv("linnerud.csv", ([fmt(v) for v in x] + [fmt(v) for v in y]
                               for x, y in zip(lin.data, lin.target)))


if __name__ == "__main__":
    main()
