#!/usr/bin/env python3
"""Writes the reference files for the 1-element and 8-element meshes.

Kept separate from the C++ exporters on purpose: the layouts here follow the
VTK legacy, MFEM v1.0 and LS-DYNA keyword formats directly, so the byte
comparisons in the tests are against an independent rendering.
"""

import pathlib

HERE = pathlib.Path(__file__).resolve().parent

# Outward-oriented local faces of a hexahedron.
FACES = [(0, 3, 2, 1), (4, 5, 6, 7), (0, 1, 5, 4), (1, 2, 6, 5), (2, 3, 7, 6), (3, 0, 4, 7)]


def num(v):
    """Shortest form with 17 significant digits, as printf %.17g."""
    return "%.17g" % v


def one_element():
    nodes = [(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0), (0, 0, 1), (1, 0, 1), (1, 1, 1), (0, 1, 1)]
    return nodes, [list(range(8))], [4]


def eight_element():
    nodes = [(i, j, k) for k in range(3) for j in range(3) for i in range(3)]

    def nid(i, j, k):
        return i + 3 * j + 9 * k

    elems, mats = [], []
    for k in range(2):
        for j in range(2):
            for i in range(2):
                elems.append([nid(i, j, k), nid(i + 1, j, k), nid(i + 1, j + 1, k), nid(i, j + 1, k),
                              nid(i, j, k + 1), nid(i + 1, j, k + 1), nid(i + 1, j + 1, k + 1), nid(i, j + 1, k + 1)])
                mats.append(len(mats) + 1)
    return nodes, elems, mats


def vtk(nodes, elems, mats):
    out = ["# vtk DataFile Version 3.0", "atlasmesh hexahedral mesh", "ASCII", "DATASET UNSTRUCTURED_GRID",
           "POINTS %d double" % len(nodes)]
    out += [" ".join(num(c) for c in p) for p in nodes]
    out.append("CELLS %d %d" % (len(elems), 9 * len(elems)))
    out += ["8 " + " ".join(str(n) for n in e) for e in elems]
    out.append("CELL_TYPES %d" % len(elems))
    out += ["12"] * len(elems)
    out.append("CELL_DATA %d" % len(elems))
    out += ["SCALARS MaterialLabel int 1", "LOOKUP_TABLE default"] + [str(m) for m in mats]
    out += ["SCALARS AnatomicalLabel int 1", "LOOKUP_TABLE default"] + ["0"] * len(elems)
    return "\n".join(out) + "\n"


def mfem(nodes, elems, mats):
    faces = {}
    for e, conn in enumerate(elems):
        for f, local in enumerate(FACES):
            faces.setdefault(frozenset(conn[i] for i in local), []).append((e, f))
    boundary = sorted(refs[0] for refs in faces.values() if len(refs) == 1)
    out = ["MFEM mesh v1.0", "", "dimension", "3", "", "elements", str(len(elems))]
    out += ["%d 5 %s" % (m, " ".join(str(n) for n in e)) for m, e in zip(mats, elems)]
    out += ["", "boundary", str(len(boundary))]
    out += ["1 3 " + " ".join(str(elems[e][i]) for i in FACES[f]) for e, f in boundary]
    out += ["", "vertices", str(len(nodes)), "3"]
    out += [" ".join(num(c) for c in p) for p in nodes]
    return "\n".join(out) + "\n"


def lsdyna(nodes, elems, mats):
    out = ["*KEYWORD", "*TITLE", "atlasmesh hexahedral mesh", "*NODE", "$#   nid               x               y               z"]
    out += ["%8d%16.9e%16.9e%16.9e" % (i + 1, *p) for i, p in enumerate(nodes)]
    out += ["*ELEMENT_SOLID", "$#   eid     pid      n1      n2      n3      n4      n5      n6      n7      n8"]
    out += ["%8d%8d" % (e + 1, m) + "".join("%8d" % (n + 1) for n in conn) for e, (m, conn) in enumerate(zip(mats, elems))]
    out += ["*SECTION_SOLID", "$#   secid    elform", "%10d%10d" % (1, 1)]
    for m in sorted(set(mats)):
        out += ["*PART", "material_%d" % m, "$#     pid     secid       mid", "%10d%10d%10d" % (m, 1, m)]
    out.append("*END")
    return "\n".join(out) + "\n"


def main():
    for name, mesh in (("one_element", one_element()), ("eight_element", eight_element())):
        (HERE / (name + ".vtk")).write_text(vtk(*mesh))
        (HERE / (name + ".mesh")).write_text(mfem(*mesh))
        (HERE / (name + ".k")).write_text(lsdyna(*mesh))


if __name__ == "__main__":
    main()
