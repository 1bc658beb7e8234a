pub mod abstraction;
pub mod builtins;
pub mod composition;
pub mod dissipativity;
pub mod error;
pub mod linalg;
pub mod relations;
pub mod systems;
pub mod transition;
