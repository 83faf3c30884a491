//! Citation verification engine.
//!
//! The pipeline parses documents into citation edges, routes each cited
//! source by accessibility, verifies accessible sources against retrieved
//! full text and inaccessible ones against an evidence committee of
//! downstream citers, and labels confirmed miscitations with a fixed error
//! taxonomy.

pub mod acsv;
pub mod assets;
pub mod csac;
pub mod dpcm;
pub mod eval;
pub mod gateway;
pub mod icsv;
pub mod model;
pub mod pipeline;
pub mod taxonomy;
