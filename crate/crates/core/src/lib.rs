//! Design and simulation toolkit for fiber Fabry-Pérot cavities fed through
//! SM → GRIN → MM mode-matching fiber assemblies.

pub mod abcd;
pub mod assembly;
pub mod beam;
pub mod cavity;
pub mod coupling;
pub mod error;
pub mod field;
pub mod io;
pub mod knife_edge;
pub mod numerics;
pub mod spectrum;
pub mod sweep;
pub mod units;

pub use abcd::RayTransferElement;
pub use assembly::{
    calibrate_grin, design_assembly, output_mode, AssemblyDesign, AssemblySpec, DesignConstraints,
    FiberSegmentSpec, GrinCalibration, GrinProfile,
};
pub use beam::{BeamState, ComplexBeamParameter};
pub use error::{DesignResidual, Error, Result};
pub use cavity::{
    finesse, fsr, resonance_offsets, solve_mode, CavityGeometry, CavityMode, FinesseReport, Mirror, ModeOrder,
};
pub use coupling::{
    beta, beta_from_transmissions, decompose, eta00, infer_eta_at_length, transmissions, CouplingSet,
    TransmissionModel,
};
pub use knife_edge::{fit_beam, simulate_knife_edge, BeamFit, KnifeEdgeDataset, KnifeEdgeSample};
pub use spectrum::{analyze, synthesize, FittedPeak, ScanConfig, SpectrumAnalysis, TransmissionSpectrum};
pub use sweep::{clipped_model, length_grid, sweep_length, RowStatus, SweepOptions, SweepRow};
