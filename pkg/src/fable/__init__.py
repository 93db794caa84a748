"""fable: facet-conditioned triplet synthesis and faceted QBE evaluation."""

__version__ = "0.1.0"
