from fractions import Fraction

from hypothesis import strategies as st

from lattice_blowup import make_field


@st.composite
def sparse_fields(draw, d=None, exact=False, max_entries=100, span=5):
    d = draw(st.integers(1, 3)) if d is None else d
    pts = draw(st.lists(st.tuples(*[st.integers(-span, span)] * d), max_size=max_entries, unique=True))
    if exact:
        vals = st.fractions(min_value=-10, max_value=10, max_denominator=50)
    else:
        vals = st.floats(-10, 10, allow_nan=False, allow_subnormal=False)
    entries = [(n, draw(vals)) for n in pts]
    return make_field(d, entries, exact=exact)


def frac_field(d, entries):
    return make_field(d, [(n, Fraction(v)) for n, v in entries], exact=True)
