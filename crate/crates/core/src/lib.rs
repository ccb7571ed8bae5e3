pub mod assignment;
pub mod attribution;
pub mod estimators;
pub mod gibbs;
pub mod identity;
pub mod model;
pub mod simulator;
