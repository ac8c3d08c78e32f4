pub mod baseline;
pub mod calibrate;
pub mod evaluate;
pub mod report;
pub mod simulate;
