//! Embedding-based tracking control and observer design for systems evolving
//! on a submanifold of Euclidean space, with the rigid body on SO(3) as the
//! worked case.

pub mod embedding;
pub mod linalg;
pub mod ltv;
pub mod ode;
pub mod rigidbody;
