pub mod algebra;
pub mod builtins;
pub mod composite;
pub mod cone;
mod dd;
pub mod extras;
pub mod faithful;
pub mod linalg;
pub mod lp;
pub mod report;
pub mod theory;
