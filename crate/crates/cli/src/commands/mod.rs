pub mod analyze;
pub mod game;
pub mod simulate;
pub mod verify;
