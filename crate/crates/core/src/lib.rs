pub mod attribution;
pub mod cloud;
pub mod corpus;
pub mod encoder;
pub mod engine;
pub mod projector;
pub mod pipeline;
