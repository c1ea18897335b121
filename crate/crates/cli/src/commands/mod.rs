pub mod analyze;
pub mod bounds;
pub mod fit_alpha;
pub mod kstar;
pub mod run;
pub mod simulate;
