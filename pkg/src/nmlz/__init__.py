"""Non-Hermitian multistate Landau-Zener toolkit for molecular BEC dissociation."""
