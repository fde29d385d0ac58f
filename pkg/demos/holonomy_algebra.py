"""Compare the holonomy algebra with the bracket closure of curvature samples.

For a generic so(3) connection the curvature values generate all of so(3);
for a connection with values in one block they generate a single direction,
and every holonomy lies in the embedded SO(2).
"""
from holab import ambrose_singer_verify, load_scenario
from holab.curvature import BlockEmbedding, coordinate_field, sample_curvature_along_horizontal


def report(name):
    sc = load_scenario(name)
    loops = sc.random_loops(20, 0)
    samples = sample_curvature_along_horizontal(
        sc.conn, lambda t: loops[int(t)].path, coordinate_field(2, 0), coordinate_field(2, 1),
        [0.0, 0.25, 0.5, 0.75, 1.0], range(5))
    rep = ambrose_singer_verify(sc.conn, loops, samples)
    worst = max(r for r in rep.loop_residuals if r == r)
    print(f"{name}: rank {rep.span.rank}, worst holonomy-log distance to span {worst:.1e}, "
          f"verdict {rep.verdict}")
    emb = sc.embedding()
    if emb is not None:
        from holab import holonomy_element

        d = max(emb.group_distance(holonomy_element(sc.conn, lp).element) for lp in loops)
        print(f"  distance of holonomies to the embedded SO(2): {d:.1e}")


if __name__ == "__main__":
    for name in ("so3-generic", "so3-reducible", "flat-plane"):
        report(name)
