//! Numerical laboratory for definite triples of 2-forms and definite
//! SO(3)-connections over 4-manifolds: energy functionals and their gradient
//! flows on structured grids, the pointwise linear analysis (symbols,
//! ellipticity, parabolicity) behind them, index and character arithmetic,
//! and the sphere-bundle moment-map diagnostics.

pub mod exterior4;
pub mod flow;
pub mod lattice;
pub mod symbols;
pub mod topology;
pub mod triple_lab;

pub use exterior4::{
    Definiteness, ExteriorError, Form1, Form2, Form3, Form4, Frame3, Metric4, Orientation, Vec4,
};
pub use lattice::{FormField, Grid, MetricField, Scheme, Topology};
pub use topology::TopoData;
