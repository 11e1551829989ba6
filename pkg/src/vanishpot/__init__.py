"""Local algebras of isolated singularities, vanishing-cycle domains and their Newton potentials."""

__version__ = "0.1.0"

from .algebra import (
    Deformation,
    LocalAlgebra,
    SingularityGerm,
    VersalDeformation,
    embed_singularity,
    local_algebra,
    milnor_number,
    truncate_jet,
    versal_deformation,
)
from .distinguish import (
    InjectivityCertificate,
    JacobianMatrix,
    RecoveryResult,
    injectivity_certificate,
    moment_jacobian,
    potential_jacobian,
    recover_parameters,
    separation_experiment,
)
from .forms import (
    CohomologyClass,
    RelationGenerator,
    VolumeFormGerm,
    multiply_by_deformation_power,
    reduce_to_basis,
    relation_polynomial,
    relation_span,
    surjectivity_certificate,
)
from .geometry import (
    GridSpec,
    LevelSetMesh,
    RegularityReport,
    check_regularity,
    compute_nesting,
    domain_indicator,
    extract_level_set,
    orient_arnold,
    prepare_mesh,
)
from .polynomial import Polynomial, parse_polynomial
from .potential import (
    Density,
    MomentVector,
    PotentialSamples,
    moments,
    multipole_eval,
    newton_kernel,
    potential_lambda_derivative,
    surface_charge_potential,
    volume_potential,
)
