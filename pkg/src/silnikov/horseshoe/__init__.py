"""Slabs, Conley-Moser certificates and symbolic dynamics of the return map."""
from .chart import SlabChart, slab_chart
from .conley_moser import ConleyMoserReport, verify_conley_moser
from .frame import BasisFrame, build_basis_frame
from .shadow import (
    CantorPointCertificate,
    ConjugacyReport,
    EmptyIntersection,
    check_conjugacy,
    check_conjugacy_batch,
    itinerary_of,
    sensitivity,
    shadow_orbit,
    shadow_words,
)
from .slab import ResidencyCount, Slab, SlabUnavailable, build_slab
from .symbolic import DepartedSlab, SymbolWord, agrees_on, all_words, shift_chi

__all__ = [
    "BasisFrame", "CantorPointCertificate", "ConjugacyReport", "ConleyMoserReport", "DepartedSlab",
    "EmptyIntersection", "ResidencyCount", "Slab", "SlabChart", "SlabUnavailable", "SymbolWord",
    "agrees_on", "all_words", "build_basis_frame", "build_slab", "check_conjugacy",
    "check_conjugacy_batch", "itinerary_of", "sensitivity", "shadow_orbit", "shadow_words",
    "shift_chi", "slab_chart", "verify_conley_moser",
]
