"""EIT toolkit: FEM forward solver, Calderon-style linearized reconstruction,
randomized phantom families and a paired training-data pipeline."""

from calderon_eit.fem import (
    ConductivityField,
    CurrentPatternSet,
    ElectrodeLayout,
    MeasurementFrame,
    MeshError,
    SolverError,
    TriMesh,
    add_noise,
    assemble_and_solve,
    build_disk_mesh,
    gap_boundary_flux,
    read_frame,
    simulate_measurements,
    trig_current_patterns,
    uniform_field,
    write_frame,
)

__version__ = "0.1.0"
