//! Exact chain-level calculator for involutive complexes over F2[U].
//!
//! The library computes with finitely generated free graded chain complexes
//! over F2[U] carrying homotopy involutions: local equivalence and the
//! induced partial order, connected homology, involutive correction terms,
//! and surgery models for thin knots. Everything is exact arithmetic over F2;
//! the solver core reduces every existence question to an affine linear
//! system over F2.
//!
//! Modules:
//! * [`coeff`] — complexes, maps, homology decomposition over F2[U];
//! * [`icx`] — involutive complexes, the group operations (tensor, dual,
//!   shift), standard families, graded roots;
//! * [`localeq`] — the local-map solver, order comparison, connected
//!   complexes/homology, correction terms, homology-level enumeration;
//! * [`cfk`] — thin-knot models and the mapping-cone surgery pipeline;
//! * [`corpus`] — bundled named examples with machine-replayable claims;
//! * [`doc`] — JSON serialization; [`render`] — text reports.

pub mod cfk;
pub mod coeff;
pub mod corpus;
pub mod doc;
pub mod f2;
pub mod icx;
pub mod localeq;
pub mod render;

pub use coeff::{
    homology, homology_basis, FreeComplex, GradedMap, Grading, HomologyBasis,
    HomologyDecomposition,
};
pub use icx::{dual, make_trivial, make_x, shift, tensor, GradedRoot, IotaComplex};
