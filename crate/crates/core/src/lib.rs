pub mod cones;
pub mod lab;
pub mod convex2d;
pub mod measures;
pub mod regularity;
pub mod sdot;
