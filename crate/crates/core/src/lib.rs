pub mod assistant;
pub mod clock;
pub mod fixtures;
pub mod gateway;
pub mod prompt;
pub mod scene;
pub mod speech;
pub mod validate;
