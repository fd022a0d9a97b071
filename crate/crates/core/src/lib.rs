//! Collective decay of qubit chains coupled to a one-dimensional waveguide.

pub mod analysis;
pub mod darkstates;
pub mod dynamics;
pub mod error;
pub mod hamiltonian;
pub mod hilbert;
pub mod protocols;
mod sparse;
pub mod util;

pub use error::{Error, Result};
pub use hamiltonian::{ChainGeometry, DriveKind, DrivePulse, Envelope};
pub use hilbert::{BasisRef, OperatorMatrix, SectorBasis, StateVector};
pub use darkstates::{Partition, Signs};
pub use dynamics::{DensityState, EvolutionSchedule, EvolveOptions, Observable, TimeSeries, Tolerances};
pub use analysis::{CorrelationMap, DecaySpectrum, TransmissionCurve};
pub use protocols::{DisorderConfig, EnsembleResult, ProtocolConfig, ProtocolRun};
