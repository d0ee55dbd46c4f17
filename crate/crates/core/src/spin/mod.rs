//! Spin operator algebra, interaction tensors and the coupled Hamiltonian.

pub mod hamiltonian;
pub mod operators;
pub mod tensor;

pub use hamiltonian::{
    bilinear, build_hamiltonian, point_dipole_coupling, total_spin_blocks,
    validate_strong_exchange, ExchangeRegime, LabOrientation, RegimeReport, SpinHamiltonian,
    SpinSystemSpec, TotalSpinBlocks,
};
pub use operators::{
    commutator, eigh, hermiticity_defect, max_abs, spin_operators, CMat, CVec, EigenSystem,
    HermitianOperator, SpinCenter, SpinOperators, SpinQuantum,
};
pub use tensor::{rotate_tensor, AlphaSign, EulerAngles, FrameGeometry, InteractionTensor};
