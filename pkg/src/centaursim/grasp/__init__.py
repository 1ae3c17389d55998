"""Category-level grasp transfer: deformation learning, registration, warping."""
