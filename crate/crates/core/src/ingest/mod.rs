//! Real-network inputs: road graphs and stations, trip-based transition
//! models, synthetic trajectories and GPS trace replay.
//!
//! Distances are meters (haversine on a sphere of radius 6 371 km); times
//! are seconds.

pub mod geo;
pub mod graph;
pub mod trace;
pub mod transition;

pub use geo::{haversine, LatLon};
pub use graph::{load_stations, RoadGraph, Route, Station};
pub use trace::{
    filter_by_contact_degree, load_traces, replay_flood, trace_flood_time, Sample, SynthParams,
    SynthPolicy, Synthesizer, Trace, TraceLoad,
};
pub use transition::{
    build_transition_model, load_trips, uniform_model, TransitionModel, Trip, TripLoad,
};
