"""Exact-arithmetic scalar for streaming tests with exponential activations."""

from fractions import Fraction

from ncstream.normalizers import NormalizerSpec


class ExpSum:
    """Exact element of the ring Z[e, 1/e] with Fraction coefficients.

    Represents sum_i c_i * e^(n_i) for integer n_i.  Addition and scaling
    by rationals are exact and order-independent, so two accumulator states
    built from the same multiset of terms compare equal with ==; this is
    the exact-arithmetic stand-in for exponential activations.
    """

    def __init__(self, terms):
        self.terms = {e: Fraction(c) for e, c in terms.items() if c != 0}

    def __add__(self, other):
        if isinstance(other, int) and other == 0:
            return self
        merged = dict(self.terms)
        for e, c in other.terms.items():
            merged[e] = merged.get(e, Fraction(0)) + c
        return ExpSum(merged)

    __radd__ = __add__

    def __mul__(self, c):
        return ExpSum({e: coeff * c for e, coeff in self.terms.items()})

    def __neg__(self):
        return ExpSum({e: -c for e, c in self.terms.items()})

    def __eq__(self, other):
        return isinstance(other, ExpSum) and self.terms == other.terms

    def __hash__(self):
        return hash(frozenset(self.terms.items()))


SYMBOLIC_EXP = NormalizerSpec(
    "symbolic_exp",
    a1=lambda u: ExpSum({int(u): 1}),
    a2=lambda u: ExpSum({int(u): 1}),
    b=lambda z: z,
)
