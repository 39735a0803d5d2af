pub mod audio_io;
pub mod dsp;
pub mod shortterm;
pub mod prosody;
pub mod features;
pub mod models;
pub mod eval;
pub mod table;
pub mod synth;
