pub mod augment;
pub mod harness;
pub mod mqaformer;
pub mod numcore;
pub mod scoregen;
pub mod seeding;
pub mod skeldata;
pub mod synth;
