"""Anelastic limit of stratified compressible flow: solvers and verification harness."""
