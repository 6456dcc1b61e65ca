import hypothesis.strategies as st

from sidalign.core import CodebookSpec, SemanticId, SidAssignment


@st.composite
def codebook_specs(draw, max_positions=4, max_size=32):
    sizes = draw(
        st.lists(
            st.integers(min_value=1, max_value=max_size),
            min_size=1,
            max_size=max_positions,
        )
    )
    return CodebookSpec(sizes=tuple(sizes))


@st.composite
def assignments(draw, spec=None, min_items=1, max_items=50):
    if spec is None:
        spec = draw(codebook_specs())
    n = draw(st.integers(min_value=min_items, max_value=max_items))
    entries = {}
    for i in range(n):
        tokens = tuple(
            draw(st.integers(min_value=0, max_value=v - 1)) for v in spec.sizes
        )
        entries[f"item{i}"] = SemanticId(tokens=tokens)
    return SidAssignment(spec=spec, entries=entries)


@st.composite
def assignment_pairs(draw, max_positions=4, max_size=16, max_items=50):
    """Two assignments over the same spec and item universe (for alignment)."""
    spec = draw(codebook_specs(max_positions=max_positions, max_size=max_size))
    old = draw(assignments(spec=spec, min_items=1, max_items=max_items))
    new = draw(assignments(spec=spec, min_items=1, max_items=max_items))
    return old, new
