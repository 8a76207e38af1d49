"""Numerical laboratory for the isotropic Eshelby inclusion problem in 3D.

Modules
-------
materials   Lame constants, eigenstress classification, material constants.
geometry    Inclusion shapes, voxel grids, contact of a scaled ellipsoid.
potentials  Newtonian and biharmonic volume potentials, quadratic fits.
fields      Interior displacement gradient by a spectral and a real-space path.
lab         Shape-condition checks built on the potentials and fields.
cli         Config-driven batch runner (``eshelby-lab``).
"""

__version__ = "0.1.0"

from .errors import Rejection
from .materials import (
    Eigenstress,
    LameMaterial,
    MaterialConstants,
    SpectralClass,
    acoustic_inverse,
    classify_eigenstress,
    make_isotropic_stiffness,
    material_constants,
    special_material_eta2,
    special_material_gamma0,
    special_material_joint,
)
from .geometry import (
    Box,
    Difference,
    Ellipsoid,
    GridSpec,
    Superellipsoid,
    VoxelMask,
    ball,
    contact_scale,
    scale_about_origin,
    voxelize,
)
from .potentials import (
    PotentialKind,
    QuadraticForm,
    QuadSpec,
    biharmonic_H,
    d2H_axis,
    ferrers_coefficients,
    n_tilde,
    newtonian,
    newtonian_ellipsoid,
    potential_gradient,
    quadratic_fit,
)
from .fields import FieldSample, UniformityReport, solve_potential, solve_spectral, uniformity
from .lab import (
    appendix_checks,
    check_theorem1,
    check_theorem2,
    ellipsoid_from_hessian,
    find_potential_minimum,
    flux_test,
)
