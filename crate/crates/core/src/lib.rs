//! Sensor placement for disinfection by-product monitoring in water
//! distribution networks.
//!
//! The pipeline reads an EPANET network, solves steady flows, propagates
//! chlorine from the injection points, fills environmental data, evaluates
//! DBP formation models, scores nodes by threshold exceedances and picks
//! sensor locations per objective.
//!
//! ```
//! use dbp_core::network::parse_inp;
//! use dbp_core::hydraulics::solve_flows;
//!
//! let net = parse_inp("[JUNCTIONS]\nJ1 0 1\n[RESERVOIRS]\nR 50\n[PIPES]\nP1 R J1 100 150 120\n").unwrap();
//! let flows = solve_flows(&net, 1e-9).unwrap();
//! assert!((flows.flow(&net, "P1").unwrap() - 1.0).abs() < 1e-9);
//! ```

pub mod dbp;
pub mod envdata;
pub mod formula;
pub mod hydraulics;
pub mod kriging;
pub mod linalg;
pub mod network;
pub mod transport;
pub mod pipeline;
pub mod placement;
pub mod scoring;
pub mod synth;
