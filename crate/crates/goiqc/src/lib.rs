//! Compile a linear quantum lambda-calculus to quantum circuits with
//! Geometry-of-Interaction token machines.

pub mod circuit;
pub mod colorgraph;
pub mod corpus;
pub mod cpm;
pub mod extcircuit;
pub mod ite_elim;
pub mod pipeline;
pub mod refeval;
pub mod syntax;
pub mod tokenmachine;
pub mod typing;
