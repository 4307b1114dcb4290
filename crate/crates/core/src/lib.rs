//! Mixed finite element domain decomposition for quasi-static Biot
//! poroelasticity on the unit square.
//!
//! The discretization is the five-field weakly symmetric mixed method
//! (BDM1 stress rows, piecewise constant displacement and rotation, BDM1
//! Darcy velocity, piecewise constant pressure) on logically structured
//! quadrilateral grids. Three non-overlapping domain decomposition schemes
//! are provided: a monolithic interface GMRES method for the coupled system
//! and the drained split and fixed stress splittings with separate CG
//! interface solves for mechanics and flow.

pub mod app;
pub mod assembly;
pub mod config;
pub mod error;
pub mod global;
pub mod ingest;
pub mod interface;
pub mod krylov;
pub mod mesh;
pub mod output;
pub mod quadrature;
pub mod schemes;
pub mod spaces;
pub mod sparse;
pub mod subdomain;
pub mod verify;

pub use error::{Error, Result};
